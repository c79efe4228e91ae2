use nalgebra::{DMatrix, DVector};
use phenocurve::error::Error;
use phenocurve::fpca::{
    build_dr_basis, fit_trend_only, fit_trend_with_lambda, fpca_fit, init_pc, predict_trend, BasisSet,
};
use phenocurve::series::{grid_point, CurveMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const N: usize = 365;

fn basis() -> BasisSet {
    build_dr_basis(N, 50).unwrap()
}

fn tau_star(x: f64) -> f64 {
    0.3 + 0.25 * (2.0 * std::f64::consts::PI * (x - 0.55)).cos()
}

fn psi_star(x: f64) -> f64 {
    // unit norm under the grid inner product, approximately
    2f64.sqrt() * (2.0 * std::f64::consts::PI * x).sin()
}

fn psi2_star(x: f64) -> f64 {
    2f64.sqrt() * (4.0 * std::f64::consts::PI * x).cos()
}

fn centred(mut v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

fn synthetic(m: usize, sigma: f64, seed: u64, rank: usize) -> (CurveMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v1 = centred((0..m).map(|_| 0.08 * rng.sample::<f64, _>(StandardNormal)).collect());
    let v2 = centred((0..m).map(|_| 0.03 * rng.sample::<f64, _>(StandardNormal)).collect());
    let y = DMatrix::from_fn(N, m, |i, j| {
        let x = grid_point(i, N);
        let mut val = tau_star(x) + v1[j] * psi_star(x);
        if rank > 1 {
            val += v2[j] * psi2_star(x);
        }
        val + sigma * rng.sample::<f64, _>(StandardNormal)
    });
    (CurveMatrix::from_matrix(y).unwrap(), v1)
}

fn identical(m: usize) -> (CurveMatrix, Vec<f64>) {
    let col: Vec<f64> = (0..N).map(|i| tau_star(grid_point(i, N))).collect();
    (CurveMatrix::from_columns(&vec![col.clone(); m]).unwrap(), col)
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn trend_in_null_space_is_not_shrunk() {
    let b = basis();
    let c = DVector::from_fn(50, |i, _| match i {
        0 => 0.7,
        1 => -0.2,
        _ => 0.0,
    });
    let col = b.curve(&c).as_slice().to_vec();
    let y = CurveMatrix::from_columns(&vec![col; 6]).unwrap();
    let (theta, _, _) = fit_trend_only(&y, &b).unwrap();
    for i in 0..50 {
        assert!((theta[i] - c[i]).abs() < 1e-8, "{i}: {}", theta[i]);
    }
}

#[test]
fn zero_data_gives_zero_trend() {
    let b = basis();
    let y = CurveMatrix::from_columns(&vec![vec![0.0; N]; 4]).unwrap();
    let (theta, _, _) = fit_trend_only(&y, &b).unwrap();
    assert!(theta.iter().all(|t| *t == 0.0));
}

#[test]
fn smoothed_trend_beats_raw_mean() {
    let b = basis();
    let truth: Vec<f64> = (0..N).map(|i| tau_star(grid_point(i, N))).collect();
    let mut wins = 0;
    for rep in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
        let y = DMatrix::from_fn(N, 24, |i, _| truth[i] + 0.2 * rng.sample::<f64, _>(StandardNormal));
        let raw: Vec<f64> = y.row_iter().map(|r| r.mean()).collect();
        let y = CurveMatrix::from_matrix(y).unwrap();
        let (theta, _, _) = fit_trend_only(&y, &b).unwrap();
        let fit = b.curve(&DVector::from_vec(theta));
        let mse = |v: &[f64]| v.iter().zip(&truth).map(|(a, t)| (a - t).powi(2)).sum::<f64>();
        if mse(fit.as_slice()) < mse(&raw) {
            wins += 1;
        }
    }
    assert!(wins >= 90, "{wins}");
}

#[test]
fn init_pc_zero_residuals() {
    let b = basis();
    let (y, _) = identical(5);
    let (theta, _, _) = fit_trend_only(&y, &b).unwrap();
    // residuals against the raw mean coefficients are exactly zero
    let mean = fit_trend_with_lambda(&y, &b, 0.0).unwrap();
    let pc = init_pc(&y, &b, &mean, 1).unwrap();
    assert!(pc.iter().all(|v| *v == 0.0));
    assert_eq!(theta.len(), 50);
}

#[test]
fn init_pc_recovers_rank_one_direction() {
    let b = basis();
    let dir = DVector::from_fn(50, |i, _| ((i as f64) * 0.37).cos() / (1.0 + i as f64));
    let scores = [1.0, -0.5, 2.0, 0.3, -1.7, 0.9];
    let theta_tau = vec![0.0; 50];
    let cols: Vec<Vec<f64>> = scores
        .iter()
        .map(|s| b.curve(&(&dir * *s)).as_slice().to_vec())
        .collect();
    let y = CurveMatrix::from_columns(&cols).unwrap();
    let pc = init_pc(&y, &b, &theta_tau, 1).unwrap();
    let cos = pc.column(0).dot(&dir).abs() / dir.norm();
    assert!(cos >= 0.999, "{cos}");
    assert!((pc.column(0).norm() - 1.0).abs() < 1e-8);
}

#[test]
fn init_pc_is_orthonormal() {
    let b = basis();
    let (y, _) = synthetic(24, 0.05, 4, 2);
    let (theta, _, _) = fit_trend_only(&y, &b).unwrap();
    let pc = init_pc(&y, &b, &theta, 3).unwrap();
    let g = pc.transpose() * &pc;
    assert!((g - DMatrix::identity(3, 3)).amax() < 1e-8);
    assert!(matches!(init_pc(&y, &b, &theta, 25), Err(Error::Contract(_))));
}

#[test]
fn rank_one_recovery() {
    let b = basis();
    let (y, _) = synthetic(24, 1e-4, 7, 1);
    let fit = fpca_fit(&y, &b, 1, 200, 1e-6).unwrap();
    let trend = predict_trend(&fit, &b, 23.0).unwrap();
    let truth: Vec<f64> = (0..N).map(|i| tau_star(grid_point(i, N))).collect();
    assert!(sup(&trend.values, &truth) < 0.01, "{}", sup(&trend.values, &truth));
    let psi = &fit.pc_functions(&b)[0];
    let psi_true: Vec<f64> = (0..N).map(|i| psi_star(grid_point(i, N))).collect();
    let r = corr(psi, &psi_true).abs();
    assert!(r >= 0.99, "{r}");
}

#[test]
fn identical_columns_have_no_scores() {
    let b = basis();
    let (y, col) = identical(8);
    let fit = fpca_fit(&y, &b, 1, 200, 1e-6).unwrap();
    let worst = fit.scores.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst < 1e-6, "{worst}");
    let trend = predict_trend(&fit, &b, 23.0).unwrap();
    assert!(sup(&trend.values, &col) < 1e-4, "{}", sup(&trend.values, &col));
}

#[test]
fn converges_on_application_scale() {
    let b = basis();
    for seed in 0..5 {
        let (y, _) = synthetic(24, 0.02, 100 + seed, 1);
        let fit = fpca_fit(&y, &b, 1, 200, 1e-6).unwrap();
        assert!(fit.converged, "seed {seed}: {} iterations", fit.iterations);
    }
}

#[test]
fn orthonormal_and_monotone_every_iteration() {
    let b = basis();
    for (seed, h) in [(11, 1), (12, 2), (13, 3)] {
        let (y, _) = synthetic(24, 0.05, seed, 2);
        let fit = fpca_fit(&y, &b, h, 200, 1e-9).unwrap();
        assert!(fit.orthonormality_error.iter().all(|e| *e < 1e-8), "{:?}", fit.orthonormality_error);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
        let t = fit.theta_psi_matrix();
        assert!((t.transpose() * &t - DMatrix::identity(h, h)).amax() < 1e-8);
    }
}

#[test]
fn heavy_smoothing_gives_linear_trend() {
    let b = basis();
    let (y, _) = synthetic(10, 0.05, 21, 1);
    let theta = fit_trend_with_lambda(&y, &b, 1e8).unwrap();
    let fit = b.curve(&DVector::from_vec(theta));
    // direct least squares of the mean curve on the constant and linear functions
    let mean: Vec<f64> = y.samples().row_iter().map(|r| r.mean()).collect();
    let x = DMatrix::from_fn(N, 2, |i, c| if c == 0 { 1.0 } else { grid_point(i, N) });
    let coef = (x.transpose() * &x)
        .try_inverse()
        .unwrap()
        * x.transpose()
        * DVector::from_vec(mean);
    let direct = &x * coef;
    assert!(sup(fit.as_slice(), direct.as_slice()) < 1e-4);
}

#[test]
fn more_components_reconstruct_better() {
    let b = basis();
    let (y, _) = synthetic(24, 0.01, 31, 2);
    let err = |h| {
        let fit = fpca_fit(&y, &b, h, 200, 1e-7).unwrap();
        (fit.fitted(&b) - y.samples()).norm_squared()
    };
    let (e1, e2) = (err(1), err(2));
    assert!(e2 <= e1, "{e2} > {e1}");
}

#[test]
fn column_permutation_equivariance() {
    let b = basis();
    let (y, _) = synthetic(12, 0.03, 41, 1);
    let perm: Vec<usize> = vec![5, 2, 11, 0, 7, 3, 9, 1, 10, 4, 8, 6];
    let yp = y.select(&perm).unwrap();
    let f = fpca_fit(&y, &b, 1, 200, 1e-7).unwrap();
    let fp = fpca_fit(&yp, &b, 1, 200, 1e-7).unwrap();
    assert!(sup(&f.theta_tau, &fp.theta_tau) < 1e-8);
    for (r, &j) in perm.iter().enumerate() {
        assert!((fp.scores[r][0] - f.scores[j][0]).abs() < 1e-8);
    }
}

#[test]
fn single_curve_is_rejected() {
    let b = basis();
    let (y, _) = identical(1);
    assert!(matches!(fpca_fit(&y, &b, 1, 10, 1e-6), Err(Error::Contract(_))));
}

#[test]
fn predict_trend_basics() {
    let b = basis();
    let (y, _) = identical(3);
    let mut fit = fpca_fit(&y, &b, 1, 5, 1e-6).unwrap();
    fit.theta_tau = vec![0.0; 50];
    assert!(predict_trend(&fit, &b, 23.0).unwrap().values.iter().all(|v| *v == 0.0));
    fit.theta_tau[0] = 2.0;
    let t = predict_trend(&fit, &b, 23.0).unwrap();
    let (lo, hi) = t.values.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!(hi - lo < 1e-10);
    assert_eq!(t.grid_n(), N);
}

#[test]
fn fit_serialises_to_json() {
    let b = basis();
    let (y, _) = synthetic(6, 0.05, 5, 1);
    let fit = fpca_fit(&y, &b, 1, 50, 1e-6).unwrap();
    let v: serde_json::Value = serde_json::from_str(&fit.to_json().unwrap()).unwrap();
    assert_eq!(v["theta_tau"].as_array().unwrap().len(), 50);
    assert!(v["lambda_method"].is_string());
}
