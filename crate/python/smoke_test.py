"""Smoke test for the phenocurve_py extension module.

Build and install first, for example:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/phenocurve_py-*.whl
"""

import json
import math
import random
import sys

import phenocurve_py as pc

L, SEASONS = 23, 24


def season(phase_deg, c0=0.0, c1=1.0):
    phi = math.radians(phase_deg)
    return [c0 + c1 * math.cos(2 * math.pi * t / L - phi) for t in range(1, L + 1)]


def main():
    # analytic dates of the textbook cosine
    truth = pc.closed_form_phenodates(1.0, L, 210.0)
    pos = truth.positions()
    assert abs(pos["GU"] - 1.916667) < 1e-5, pos
    assert pos["Dor"] is None

    # full pipeline on the noiseless replicated signal
    values = season(210.0) * SEASONS
    fit = pc.Pipeline(num_freq=1).fit_pixel(values)
    got = fit.dates.positions()
    for key in ("GU", "SoS", "Mat", "EoS"):
        assert abs(got[key] - pos[key]) < 0.0063, (key, got[key], pos[key])
    assert len(fit.trend) == 365
    json.loads(fit.dates.to_json())

    # missing values are accepted as None or NaN
    rng = random.Random(1)
    noisy = [v + rng.gauss(0, 0.05) for v in season(230.0, 0.4, 0.3) * 6]
    noisy[5] = None
    noisy[40] = float("nan")
    print("noisy pixel:", pc.Pipeline(seasons=6).fit_pixel(noisy).dates)

    assert pc.dtw_distance([0.0, 1.0, 2.0], [0.0, 2.0]) == 1.0
    c0, s, c = pc.fit_harmonic(season(100.0), 1)
    assert abs(math.hypot(s[0], c[0]) - 1.0) < 1e-9

    ok, flags = pc.check_ordering([109, 157, 31, 196, 63, 329])
    assert not ok and "OrderingViolated" in flags, flags

    svg = pc.spiral_svg([[40, 110, 190, 230, 300, 350]])
    assert svg.startswith("<svg") and svg.count("<title>") == 6

    try:
        pc.Pipeline(seasons=6).fit_pixel([0.3] * (6 * L))
    except ArithmeticError as e:
        print("flat pixel rejected:", e)
    else:
        raise AssertionError("flat pixel should fail")

    try:
        pc.Pipeline(distance="euclid")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown distance should fail")

    study = {"reps": 2, "rows": [{"noise": {"kind": "none"}, "num_freq": 1}]}
    print(pc.simulate(json.dumps(study)).strip())
    print("smoke test passed, version", pc.__version__)
    return 0


if __name__ == "__main__":
    sys.exit(main())
