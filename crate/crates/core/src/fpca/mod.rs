//! Penalised-spline functional principal components.
//!
//! Every curve `y_j` on the common grid is modelled as
//! `τ + Σ_k v_jk ψ_k + ε_j`, with `τ = B θ_τ` and `ψ_k = B θ_k`. Because the
//! basis `B` is orthonormal under the grid inner product and diagonalises
//! the roughness penalty, all updates reduce to per-coefficient shrinkage of
//! the projected coefficients `c_j = Bᵀ y_j / n`.
//!
//! The criterion minimised is
//!
//! ```text
//! J = 1/(n m) Σ_j ( ‖y_j − τ − Ψ v_j‖² + Σ_k γ_k v_jk² )
//!     + λ_τ θ_τᵀ D θ_τ + λ_ψ Σ_k θ_kᵀ D θ_k
//! ```
//!
//! where `γ_k = σ² / σ²_vk` is the score ridge implied by treating the
//! scores as Gaussian random effects. Scores are centred across curves so
//! that the trend is the smoothed mean curve.

mod basis;
mod reml;

pub use basis::{build_dr_basis, BasisSet, DEFAULT_SAMPLES};
pub use reml::LambdaMethod;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::CurveMatrix;
use reml::{Block, ShrinkageProblem};

/// Default convergence tolerance on the sup-norm change of fitted curves.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default cap on alternating iterations.
pub const DEFAULT_MAX_ITER: usize = 200;
/// Default number of principal components.
pub const DEFAULT_H: usize = 1;

const BACKTRACK_STEPS: usize = 20;

/// The trend `τ` evaluated on the common grid of `[0, 1]`, with the season
/// length it should be mapped to when dates are read off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCurve {
    pub values: Vec<f64>,
    pub period: f64,
}

impl TrendCurve {
    pub fn grid_n(&self) -> usize {
        self.values.len()
    }
}

/// Result of [`fpca_fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpcaFit {
    pub theta_tau: Vec<f64>,
    /// `h` columns of length `K`.
    pub theta_psi: Vec<Vec<f64>>,
    /// `m` rows of length `h`.
    pub scores: Vec<Vec<f64>>,
    pub lambda_tau: f64,
    pub lambda_psi: f64,
    pub lambda_method: LambdaMethod,
    /// Ridge `γ_k` applied to the scores of each component.
    pub score_ridge: Vec<f64>,
    pub h: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    /// `max |ΘᵀΘ − I|` after every iteration.
    pub orthonormality_error: Vec<f64>,
}

impl FpcaFit {
    pub fn theta_psi_matrix(&self) -> DMatrix<f64> {
        let k = self.theta_tau.len();
        DMatrix::from_fn(k, self.h, |i, c| self.theta_psi[c][i])
    }

    pub fn scores_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.scores.len(), self.h, |j, c| self.scores[j][c])
    }

    /// Principal component functions on the grid, one vector per component.
    pub fn pc_functions(&self, basis: &BasisSet) -> Vec<Vec<f64>> {
        self.theta_psi
            .iter()
            .map(|t| basis.curve(&DVector::from_column_slice(t)).as_slice().to_vec())
            .collect()
    }

    /// Fitted curves `τ + Ψ v_j` on the grid, one column per curve.
    pub fn fitted(&self, basis: &BasisSet) -> DMatrix<f64> {
        let coef = self.theta_psi_matrix() * self.scores_matrix().transpose();
        let mut coef = coef;
        let tau = DVector::from_column_slice(&self.theta_tau);
        for mut c in coef.column_iter_mut() {
            c += &tau;
        }
        basis.values() * coef
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Projected data shared by all stages of the fit.
struct Projection {
    /// `K x m` basis coefficients of the curves.
    coefs: DMatrix<f64>,
    mean: DVector<f64>,
    /// Columns `c_j − c̄`.
    centred: DMatrix<f64>,
    /// Residual sum of squares orthogonal to the basis.
    s_perp: f64,
    n: f64,
    m: f64,
}

impl Projection {
    fn new(y: &CurveMatrix, basis: &BasisSet) -> Result<Self> {
        if y.grid_n() != basis.grid_n() {
            return Err(Error::Contract(format!(
                "curves have {} grid points but the basis has {}",
                y.grid_n(),
                basis.grid_n()
            )));
        }
        let n = y.grid_n() as f64;
        let b = basis.values();
        let coefs = b.transpose() * y.samples() / n;
        let s_perp = (y.samples() - b * &coefs).norm_squared();
        let mean = coefs.column_mean();
        let mut centred = coefs.clone();
        for mut c in centred.column_iter_mut() {
            c -= &mean;
        }
        Ok(Self {
            coefs,
            mean,
            centred,
            s_perp,
            n,
            m: y.num_curves() as f64,
        })
    }

    fn k(&self) -> usize {
        self.coefs.nrows()
    }

    /// Per-observation noise variance from the out-of-span residuals.
    fn noise_variance(&self) -> Option<f64> {
        let dof = (self.n - self.k() as f64) * self.m;
        (dof > 0.0).then(|| self.s_perp / dof)
    }
}

fn shrink(z: &DVector<f64>, eigs: &DVector<f64>, lambda: f64) -> DVector<f64> {
    z.zip_map(eigs, |z, d| z / (1.0 + lambda * d))
}

/// Trend coefficients for a fixed smoothing parameter: the mean curve's
/// basis coefficients shrunk by `1 / (1 + λ d_k)`.
pub fn fit_trend_with_lambda(y: &CurveMatrix, basis: &BasisSet, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::Contract(format!("smoothing parameter must be non-negative, got {lambda}")));
    }
    let p = Projection::new(y, basis)?;
    Ok(shrink(&p.mean, basis.penalty_eigs(), lambda).as_slice().to_vec())
}

/// Trend-only fit with λ_τ chosen by REML. Returns `(θ_τ, λ_τ, method)`.
pub fn fit_trend_only(y: &CurveMatrix, basis: &BasisSet) -> Result<(Vec<f64>, f64, LambdaMethod)> {
    let p = Projection::new(y, basis)?;
    let (theta, lambda, method) = trend_step(&p, basis, p.n * p.centred.norm_squared(), 0.0);
    Ok((theta.as_slice().to_vec(), lambda, method))
}

fn trend_step(
    p: &Projection,
    basis: &BasisSet,
    between_rss: f64,
    extra_params: f64,
) -> (DVector<f64>, f64, LambdaMethod) {
    let eigs = basis.penalty_eigs();
    let problem = ShrinkageProblem {
        blocks: vec![Block {
            z: p.mean.as_slice().to_vec(),
            weight: p.n * p.m,
            scale: 1.0,
        }],
        eigs: eigs.as_slice(),
        rss_outside: p.s_perp + between_rss,
        dof_outside: (p.n * p.m - p.k() as f64 - extra_params).max(1.0),
    };
    let (lambda, method) = problem.select();
    (shrink(&p.mean, eigs, lambda), lambda, method)
}

/// Column-orthonormalises `a` by QR with a positive diagonal of `R`.
/// Columns that are numerically dependent on earlier ones come back as zero.
fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, h) = a.shape();
    let mut q = DMatrix::zeros(k, h);
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return q;
    }
    // modified Gram–Schmidt, twice, which is as stable as Householder here
    for c in 0..h {
        let mut v = a.column(c).into_owned();
        for _ in 0..2 {
            for prev in 0..c {
                let qp = q.column(prev);
                let proj = qp.dot(&v);
                v -= qp * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * scale {
            q.set_column(c, &(v / norm));
        }
    }
    q
}

fn orthonormality_error(theta: &DMatrix<f64>) -> f64 {
    let h = theta.ncols();
    let g = theta.transpose() * theta;
    let mut worst: f64 = 0.0;
    for i in 0..h {
        for j in 0..h {
            let nonzero = theta.column(i).norm() > 0.0;
            let target = if i == j && nonzero { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Initial principal component coefficients from the SVD of the per-curve
/// residual coefficients `Γ = (C − θ_τ 1ᵀ)ᵀ`.
pub fn init_pc(y: &CurveMatrix, basis: &BasisSet, theta_tau: &[f64], h: usize) -> Result<DMatrix<f64>> {
    let p = Projection::new(y, basis)?;
    init_pc_from(&p, &DVector::from_column_slice(theta_tau), h)
}

fn init_pc_from(p: &Projection, theta_tau: &DVector<f64>, h: usize) -> Result<DMatrix<f64>> {
    let k = p.k();
    let m = p.coefs.ncols();
    if h == 0 || h > m.min(k) {
        return Err(Error::Contract(format!(
            "number of components {h} must lie in 1..={}",
            m.min(k)
        )));
    }
    if theta_tau.len() != k {
        return Err(Error::Contract("trend coefficients do not match the basis".into()));
    }
    let mut resid = p.coefs.clone();
    for mut c in resid.column_iter_mut() {
        c -= theta_tau;
    }
    let gamma = resid.transpose();
    let svd = gamma.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::NumericalFailure {
        iteration: 0,
        message: "singular value decomposition did not converge".into(),
    })?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    // singular values at rounding level relative to the data carry no direction
    let floor = 1e-10 * p.coefs.norm();
    let mut scaled = DMatrix::zeros(k, h);
    for (c, &idx) in order.iter().take(h).enumerate() {
        let s = sv[idx];
        if s <= floor || !s.is_finite() {
            continue;
        }
        let mut col = v_t.row(idx).transpose() * s;
        // fix the SVD sign so that the largest entry is positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        scaled.set_column(c, &col);
    }
    Ok(orthonormalize(&scaled))
}

/// Hyper-parameters estimated once and held fixed during the iterations.
#[derive(Debug, Clone)]
struct Hyper {
    lambda_tau: f64,
    lambda_psi: f64,
    gamma: Vec<f64>,
}

impl Hyper {
    fn score_shrink(&self, n: f64) -> DVector<f64> {
        DVector::from_iterator(self.gamma.len(), self.gamma.iter().map(|g| n / (n + g)))
    }
}

fn scores(p: &Projection, theta: &DMatrix<f64>, shrink: &DVector<f64>) -> DMatrix<f64> {
    // m x h
    let mut v = p.centred.transpose() * theta;
    for (c, s) in shrink.iter().enumerate() {
        v.column_mut(c).scale_mut(*s);
    }
    v
}

/// Profiled criterion: scores at their optimum for the given `Θ`.
fn objective(p: &Projection, basis: &BasisSet, hyper: &Hyper, theta_tau: &DVector<f64>, theta: &DMatrix<f64>) -> f64 {
    let d = basis.penalty_eigs();
    let s = hyper.score_shrink(p.n);
    let trend_fit = (&p.mean - theta_tau).norm_squared();
    let trend_pen = hyper.lambda_tau * theta_tau.component_mul(theta_tau).dot(d);
    let proj = theta.transpose() * &p.centred; // h x m
    let mut explained = 0.0;
    for (c, sk) in s.iter().enumerate() {
        explained += sk * proj.row(c).norm_squared();
    }
    let between = (p.centred.norm_squared() - explained) / p.m;
    let pc_pen: f64 = theta
        .column_iter()
        .map(|t| t.component_mul(&t).dot(d))
        .sum::<f64>()
        * hyper.lambda_psi;
    p.s_perp / (p.n * p.m) + trend_fit + trend_pen + between + pc_pen
}

/// Gauss–Seidel sweep of the penalised normal equations for each component.
fn update_components(p: &Projection, basis: &BasisSet, theta: &DMatrix<f64>, v: &DMatrix<f64>, lambda_psi: f64) -> DMatrix<f64> {
    let d = basis.penalty_eigs();
    let mut out = theta.clone();
    let h = theta.ncols();
    for k in 0..h {
        let vk = v.column(k);
        let ss = vk.norm_squared();
        if ss <= 1e-300 {
            continue;
        }
        // Σ_j v_jk q_jk with q_jk = c_j − c̄ − Σ_{l≠k} θ_l v_jl
        let mut rhs = &p.centred * vk;
        for l in 0..h {
            if l != k {
                let cross = v.column(l).dot(&vk);
                rhs -= out.column(l) * cross;
            }
        }
        let col = DVector::from_fn(rhs.len(), |i, _| rhs[i] / (ss + p.m * lambda_psi * d[i]));
        out.set_column(k, &col);
    }
    out
}

/// Estimates λ_τ, λ_ψ and the score ridges from the current iterate.
fn estimate_hyper(
    p: &Projection,
    basis: &BasisSet,
    theta: &DMatrix<f64>,
    fallback: &Hyper,
) -> (Hyper, LambdaMethod) {
    let eigs = basis.penalty_eigs();
    let h = theta.ncols();
    let k = p.k() as f64;
    let raw = p.centred.transpose() * theta; // unshrunk scores u_jk
    let explained = theta * raw.transpose(); // K x m
    let between = p.n * (&p.centred - &explained).norm_squared();

    let (_, lambda_tau, trend_method) = trend_step(p, basis, between, k * h as f64);

    let mut blocks = Vec::new();
    let mut unpen = DMatrix::zeros(p.k(), h);
    for c in 0..h {
        let vk = raw.column(c);
        let ss = vk.norm_squared();
        if ss <= 1e-300 {
            continue;
        }
        let mut rhs = &p.centred * vk;
        for l in 0..h {
            if l != c {
                rhs -= theta.column(l) * raw.column(l).dot(&vk);
            }
        }
        let z = rhs / ss;
        unpen.set_column(c, &z);
        blocks.push(Block {
            z: z.as_slice().to_vec(),
            weight: p.n * ss,
            scale: p.m / ss,
        });
    }
    let (lambda_psi, psi_method) = if blocks.is_empty() {
        (fallback.lambda_psi, LambdaMethod::Fixed)
    } else {
        let resid = &p.centred - &unpen * raw.transpose();
        ShrinkageProblem {
            blocks,
            eigs: eigs.as_slice(),
            rss_outside: p.s_perp + p.n * resid.norm_squared(),
            dof_outside: (p.n * p.m - k * (1.0 + h as f64)).max(1.0),
        }
        .select()
    };

    let sigma2 = p.noise_variance().unwrap_or(0.0);
    let gamma = (0..h)
        .map(|c| {
            if sigma2 <= 0.0 {
                return 0.0;
            }
            let ms = raw.column(c).norm_squared() / p.m;
            let var = (ms - sigma2 / p.n).max(1e-8 * ms).max(f64::MIN_POSITIVE);
            sigma2 / var
        })
        .collect();

    let method = match (trend_method, psi_method) {
        (LambdaMethod::GcvFallback, _) | (_, LambdaMethod::GcvFallback) => LambdaMethod::GcvFallback,
        _ => LambdaMethod::Reml,
    };
    (
        Hyper {
            lambda_tau,
            lambda_psi,
            gamma,
        },
        method,
    )
}

fn check_finite(iteration: usize, what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure {
            iteration,
            message: format!("non-finite {what}"),
        })
    }
}

/// Full penalised FPCA fit with `h` components.
///
/// Smoothing parameters and score ridges are estimated once from the
/// initialisation at the first iteration and then held fixed, so the
/// criterion is non-increasing from that iteration on. A component update
/// that would raise the criterion after re-orthonormalisation is damped by
/// halving the step towards the previous iterate.
pub fn fpca_fit(y: &CurveMatrix, basis: &BasisSet, h: usize, max_iter: usize, tol: f64) -> Result<FpcaFit> {
    if y.num_curves() < 2 {
        return Err(Error::Contract("at least two curves are needed".into()));
    }
    if max_iter == 0 {
        return Err(Error::Contract("max_iter must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Contract(format!("tol must be positive, got {tol}")));
    }
    let p = Projection::new(y, basis)?;
    let k = p.k();

    // trend-only fit and SVD initialisation
    let (mut theta_tau, lambda0, method0) = trend_step(&p, basis, p.n * p.centred.norm_squared(), 0.0);
    check_finite(0, "trend coefficients", theta_tau.as_slice())?;
    let mut theta = init_pc_from(&p, &theta_tau, h)?;
    if theta.column_iter().all(|c| c.norm() == 0.0) {
        // no between-curve variation: fall back to rough basis directions
        for c in 0..h {
            theta[((2 + c) % k, c)] = 1.0;
        }
        theta = orthonormalize(&theta);
    }

    let mut hyper = Hyper {
        lambda_tau: lambda0,
        lambda_psi: lambda0,
        gamma: vec![0.0; h],
    };
    let mut method = method0;
    let mut trace = Vec::new();
    let mut ortho = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let b = basis.values();

    for it in 1..=max_iter {
        iterations = it;
        if it == 1 {
            let (est, m) = estimate_hyper(&p, basis, &theta, &hyper);
            hyper = est;
            method = m;
        }
        let shrink_v = hyper.score_shrink(p.n);
        let v = scores(&p, &theta, &shrink_v);
        let new_tau = shrink(&p.mean, basis.penalty_eigs(), hyper.lambda_tau);
        check_finite(it, "trend coefficients", new_tau.as_slice())?;

        let candidate = orthonormalize(&update_components(&p, basis, &theta, &v, hyper.lambda_psi));
        check_finite(it, "component coefficients", candidate.as_slice())?;

        let mut new_theta = candidate.clone();
        if let Some(&prev_obj) = trace.last() {
            let mut obj = objective(&p, basis, &hyper, &new_tau, &new_theta);
            let mut step = 1.0;
            let mut tries = 0;
            while obj > prev_obj && tries < BACKTRACK_STEPS {
                step *= 0.5;
                tries += 1;
                new_theta = orthonormalize(&(&theta + (&candidate - &theta) * step));
                obj = objective(&p, basis, &hyper, &new_tau, &new_theta);
            }
            if obj > prev_obj {
                new_theta = theta.clone();
            }
        }
        let obj = objective(&p, basis, &hyper, &new_tau, &new_theta);
        if !obj.is_finite() {
            return Err(Error::NumericalFailure {
                iteration: it,
                message: "non-finite objective".into(),
            });
        }
        trace.push(obj);
        ortho.push(orthonormality_error(&new_theta));

        let trend_change = (b * (&new_tau - &theta_tau)).amax();
        let pc_change = (b * (&new_theta - &theta)).amax();
        theta_tau = new_tau;
        theta = new_theta;
        if trend_change.max(pc_change) < tol {
            converged = true;
            break;
        }
    }

    let v = scores(&p, &theta, &hyper.score_shrink(p.n));
    check_finite(iterations, "scores", v.as_slice())?;
    Ok(FpcaFit {
        theta_tau: theta_tau.as_slice().to_vec(),
        theta_psi: theta.column_iter().map(|c| c.as_slice().to_vec()).collect(),
        scores: v.row_iter().map(|r| r.iter().copied().collect()).collect(),
        lambda_tau: hyper.lambda_tau,
        lambda_psi: hyper.lambda_psi,
        lambda_method: method,
        score_ridge: hyper.gamma,
        h,
        iterations,
        converged,
        objective_trace: trace,
        orthonormality_error: ortho,
    })
}

/// Trend values `B θ_τ` on the grid, tagged with the season length.
pub fn predict_trend(fit: &FpcaFit, basis: &BasisSet, period: f64) -> Result<TrendCurve> {
    if fit.theta_tau.len() != basis.samples() {
        return Err(Error::Contract(format!(
            "fit has {} coefficients but the basis has {}",
            fit.theta_tau.len(),
            basis.samples()
        )));
    }
    let values = basis.curve(&DVector::from_column_slice(&fit.theta_tau));
    Ok(TrendCurve {
        values: values.as_slice().to_vec(),
        period,
    })
}
