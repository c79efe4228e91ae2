#![allow(dead_code)]

use phenocurve::harmonic::HarmonicModel;
use phenocurve::series::{ObservationGrid, PixelSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const L: usize = 23;

/// One season of `c0 + c1 cos(2πt/L − φ)` at `t = 1..L`.
pub fn season(c0: f64, c1: f64, phase: f64) -> Vec<f64> {
    let m = HarmonicModel::single(c0, c1, L as f64, phase);
    (1..=L).map(|t| m.eval(t as f64)).collect()
}

/// A multi-year series whose seasons follow `phases`, with iid noise.
pub fn cube(phases: &[f64], amplitude: f64, sigma: f64, seed: u64) -> PixelSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    for &p in phases {
        for v in season(0.45, amplitude, p) {
            values.push(v + sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    PixelSeries::from_values(ObservationGrid::new(L, phases.len()).unwrap(), values).unwrap()
}

pub fn as_csv_row(series: &PixelSeries) -> String {
    series
        .values()
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(",")
}
