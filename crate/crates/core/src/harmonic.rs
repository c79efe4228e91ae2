//! Harmonic regression of a single season and analytic derivatives of the
//! fitted curves.
//!
//! A model of period `L` with `p` frequencies is
//!
//! ```text
//! g(t) = θ0 + Σ_j α_j sin(2πjt/L) + β_j cos(2πjt/L),  j = 1..p
//! ```
//!
//! Derivatives of such a model are again harmonic models (with zero
//! intercept), which keeps every derivative evaluation exact.

use std::f64::consts::PI;
use std::ops::Add;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phenodates::{DateFlag, Phase, PhenoDates};

/// Default number of frequencies for smoothing observed seasons.
pub const DEFAULT_NUM_FREQ: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicModel {
    intercept: f64,
    sin_coefs: Vec<f64>,
    cos_coefs: Vec<f64>,
    period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub residual_sd: f64,
    pub rss: f64,
    pub dof: i64,
}

impl HarmonicModel {
    pub fn new(intercept: f64, sin_coefs: Vec<f64>, cos_coefs: Vec<f64>, period: f64) -> Result<Self> {
        if sin_coefs.len() != cos_coefs.len() {
            return Err(Error::Contract(format!(
                "sin/cos coefficient counts differ ({} vs {})",
                sin_coefs.len(),
                cos_coefs.len()
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Contract(format!("period must be positive, got {period}")));
        }
        let finite = intercept.is_finite()
            && sin_coefs.iter().chain(&cos_coefs).all(|c| c.is_finite());
        if !finite {
            return Err(Error::Contract("harmonic coefficients must be finite".into()));
        }
        Ok(Self {
            intercept,
            sin_coefs,
            cos_coefs,
            period,
        })
    }

    /// Constant curve; `num_freq` is zero.
    pub fn constant(value: f64, period: f64) -> Self {
        Self {
            intercept: value,
            sin_coefs: Vec::new(),
            cos_coefs: Vec::new(),
            period,
        }
    }

    /// `c0 + c1 cos(2πt/L - φ)` with the phase `φ` in degrees.
    pub fn single(c0: f64, c1: f64, period: f64, phase_deg: f64) -> Self {
        let phi = phase_deg.to_radians();
        Self {
            intercept: c0,
            sin_coefs: vec![c1 * phi.sin()],
            cos_coefs: vec![c1 * phi.cos()],
            period,
        }
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn sin_coefs(&self) -> &[f64] {
        &self.sin_coefs
    }

    pub fn cos_coefs(&self) -> &[f64] {
        &self.cos_coefs
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn num_freq(&self) -> usize {
        self.sin_coefs.len()
    }

    /// Amplitude of frequency `j` (1-based).
    pub fn amplitude(&self, j: usize) -> f64 {
        self.sin_coefs[j - 1].hypot(self.cos_coefs[j - 1])
    }

    /// Phase of frequency `j` (1-based) in degrees, in `[0, 360)`, such that
    /// the term reads `A cos(2πjt/L - φ)`.
    pub fn phase_deg(&self, j: usize) -> f64 {
        self.sin_coefs[j - 1]
            .atan2(self.cos_coefs[j - 1])
            .to_degrees()
            .rem_euclid(360.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let w = 2.0 * PI * t / self.period;
        self.sin_coefs
            .iter()
            .zip(&self.cos_coefs)
            .enumerate()
            .fold(self.intercept, |acc, (j, (a, b))| {
                let arg = (j + 1) as f64 * w;
                acc + a * arg.sin() + b * arg.cos()
            })
    }

    /// The `order`-th derivative as a harmonic model. Orders 1 through 4.
    pub fn derivative(&self, order: usize) -> Result<Self> {
        if !(1..=4).contains(&order) {
            return Err(Error::Contract(format!(
                "derivative order must be in 1..=4, got {order}"
            )));
        }
        let mut sin = self.sin_coefs.clone();
        let mut cos = self.cos_coefs.clone();
        for _ in 0..order {
            for j in 0..sin.len() {
                let w = 2.0 * PI * (j + 1) as f64 / self.period;
                let (a, b) = (sin[j], cos[j]);
                sin[j] = -b * w;
                cos[j] = a * w;
            }
        }
        Ok(Self {
            intercept: 0.0,
            sin_coefs: sin,
            cos_coefs: cos,
            period: self.period,
        })
    }

    /// Multiplies every coefficient by `s`.
    pub fn scale(&self, s: f64) -> Self {
        Self {
            intercept: self.intercept * s,
            sin_coefs: self.sin_coefs.iter().map(|c| c * s).collect(),
            cos_coefs: self.cos_coefs.iter().map(|c| c * s).collect(),
            period: self.period,
        }
    }

    /// True when every sine/cosine coefficient is negligible.
    pub fn is_flat(&self) -> bool {
        let scale = self.intercept.abs().max(1.0);
        self.sin_coefs
            .iter()
            .chain(&self.cos_coefs)
            .all(|c| c.abs() <= 1e-12 * scale)
    }
}

impl Add for &HarmonicModel {
    type Output = HarmonicModel;

    /// Coefficient-wise sum; the shorter model is padded with zeros.
    /// Periods are assumed equal (the left operand's period is kept).
    fn add(self, rhs: &HarmonicModel) -> HarmonicModel {
        let p = self.num_freq().max(rhs.num_freq());
        let get = |v: &[f64], j: usize| v.get(j).copied().unwrap_or(0.0);
        HarmonicModel {
            intercept: self.intercept + rhs.intercept,
            sin_coefs: (0..p).map(|j| get(&self.sin_coefs, j) + get(&rhs.sin_coefs, j)).collect(),
            cos_coefs: (0..p).map(|j| get(&self.cos_coefs, j) + get(&rhs.cos_coefs, j)).collect(),
            period: self.period,
        }
    }
}

/// Design matrix for `t = 1..L`: row `t` is
/// `[1, sin(2πt/L), cos(2πt/L), ..., sin(2pπt/L), cos(2pπt/L)]`.
pub fn design_matrix(per_season_len: usize, num_freq: usize) -> Result<DMatrix<f64>> {
    if 2 * num_freq + 1 > per_season_len {
        return Err(Error::Identifiability(format!(
            "{} coefficients cannot be estimated from {per_season_len} observations",
            2 * num_freq + 1
        )));
    }
    let times: Vec<f64> = (1..=per_season_len).map(|t| t as f64).collect();
    Ok(design_matrix_at(&times, per_season_len as f64, num_freq))
}

/// Design matrix at arbitrary times for a given period.
pub fn design_matrix_at(times: &[f64], period: f64, num_freq: usize) -> DMatrix<f64> {
    let cols = 2 * num_freq + 1;
    DMatrix::from_fn(times.len(), cols, |i, c| {
        if c == 0 {
            return 1.0;
        }
        let j = c.div_ceil(2) as f64;
        let arg = 2.0 * PI * j * times[i] / period;
        if c % 2 == 1 {
            arg.sin()
        } else {
            arg.cos()
        }
    })
}

/// Ordinary least squares fit at `t = 1..L` where `L = y.len()`.
pub fn fit_harmonic(y: &[f64], num_freq: usize) -> Result<(HarmonicModel, FitDiagnostics)> {
    let times: Vec<f64> = (1..=y.len()).map(|t| t as f64).collect();
    fit_harmonic_at(&times, y, y.len() as f64, num_freq)
}

/// Ordinary least squares fit at arbitrary sample times, solved through a
/// Householder QR factorisation of the design matrix.
pub fn fit_harmonic_at(
    times: &[f64],
    y: &[f64],
    period: f64,
    num_freq: usize,
) -> Result<(HarmonicModel, FitDiagnostics)> {
    if times.len() != y.len() {
        return Err(Error::Contract("times and values differ in length".into()));
    }
    if num_freq == 0 {
        return Err(Error::Contract("num_freq must be at least 1".into()));
    }
    let cols = 2 * num_freq + 1;
    if cols > y.len() {
        return Err(Error::Identifiability(format!(
            "{cols} coefficients cannot be estimated from {} observations",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("observations must be finite".into()));
    }
    let x = design_matrix_at(times, period, num_freq);
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..cols).any(|i| r[(i, i)].abs() <= 1e-10 * rmax.max(f64::MIN_POSITIVE)) {
        return Err(Error::Identifiability("rank-deficient harmonic design".into()));
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Identifiability("singular triangular factor".into()))?;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let dof = y.len() as i64 - cols as i64;
    let residual_sd = if dof > 0 { (rss / dof as f64).sqrt() } else { 0.0 };
    let sin = (0..num_freq).map(|j| beta[2 * j + 1]).collect();
    let cos = (0..num_freq).map(|j| beta[2 * j + 2]).collect();
    let model = HarmonicModel::new(beta[0], sin, cos, period)?;
    Ok((
        model,
        FitDiagnostics {
            residual_sd,
            rss,
            dof,
        },
    ))
}

/// Phenological dates of `c0 + c1 cos(2πt/L - φ)` in closed form.
///
/// Indicator boundaries follow the half-open intervals exactly: green-up needs
/// `φ >= 180`, start of season `φ >= 90`, end of season `φ < 270` and dormancy
/// `φ < 180`. Dormancy carries the factor `L` like the other dates.
pub fn closed_form_phenodates(_c0: f64, c1: f64, period: f64, phase_deg: f64) -> Result<PhenoDates> {
    if !(c1 > 0.0) {
        return Err(Error::Contract(format!("amplitude must be positive, got {c1}")));
    }
    if !(phase_deg > 0.0 && phase_deg < 360.0) {
        return Err(Error::Contract(format!(
            "phase must lie in (0, 360) degrees, got {phase_deg}"
        )));
    }
    if !(period > 0.0) {
        return Err(Error::Contract(format!("period must be positive, got {period}")));
    }
    let at = |deg: f64| deg * period / 360.0;
    let mut dates = PhenoDates::empty(period);
    if phase_deg >= 180.0 {
        dates.set(Phase::GreenUp, at(phase_deg - 180.0));
    } else {
        dates.flags.insert(DateFlag::MissingGu);
    }
    if phase_deg >= 90.0 {
        dates.set(Phase::StartOfSeason, at(phase_deg - 90.0));
    }
    dates.set(Phase::Maturity, at(phase_deg));
    dates.set(Phase::Senescence, at(phase_deg));
    dates.flags.insert(DateFlag::SenEqualsMat);
    if phase_deg < 270.0 {
        dates.set(Phase::EndOfSeason, at(phase_deg + 90.0));
    }
    if phase_deg < 180.0 {
        dates.set(Phase::Dormancy, at(phase_deg + 180.0));
    } else {
        dates.flags.insert(DateFlag::MissingDor);
    }
    Ok(dates)
}
