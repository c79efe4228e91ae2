//! Smoothing-parameter selection for coordinate-wise shrinkage problems.
//!
//! In the Demmler–Reinsch basis every penalised fit reduces to observed
//! coefficients `z_k` shrunk by `1 / (1 + ρ d_k)`. Each block `b` of
//! coefficients has its own precision weight `w_b` (noise variance
//! `σ² / w_b`) and maps the shared smoothing parameter `λ` to
//! `ρ_b = λ s_b`. Coefficients with `d_k = 0` are unpenalised fixed effects
//! and drop out of the restricted likelihood.

use serde::{Deserialize, Serialize};

/// How a smoothing parameter was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMethod {
    Reml,
    GcvFallback,
    Fixed,
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub z: Vec<f64>,
    pub weight: f64,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ShrinkageProblem<'a> {
    pub blocks: Vec<Block>,
    pub eigs: &'a [f64],
    /// Residual sum of squares outside the coefficient space.
    pub rss_outside: f64,
    /// Degrees of freedom of `rss_outside`.
    pub dof_outside: f64,
}

impl ShrinkageProblem<'_> {
    /// Negative restricted log-likelihood with σ² profiled out.
    fn neg_reml(&self, lambda: f64) -> f64 {
        let mut quad = 0.0;
        let mut logdet = 0.0;
        let mut npen = 0.0;
        for b in &self.blocks {
            let rho = lambda * b.scale;
            for (z, &d) in b.z.iter().zip(self.eigs) {
                if d <= 0.0 {
                    continue;
                }
                let rd = rho * d;
                // marginal variance factor 1 + 1/(ρ d)
                logdet += (1.0 + 1.0 / rd).ln();
                quad += b.weight * z * z * rd / (1.0 + rd);
                npen += 1.0;
            }
        }
        let dof = self.dof_outside + npen;
        let sigma2 = (self.rss_outside + quad) / dof;
        dof * sigma2.ln() + logdet
    }

    fn gcv(&self, lambda: f64) -> f64 {
        let mut rss = self.rss_outside;
        let mut edf = 0.0;
        let mut nobs = self.dof_outside;
        for b in &self.blocks {
            let rho = lambda * b.scale;
            for (z, &d) in b.z.iter().zip(self.eigs) {
                let shrink = 1.0 / (1.0 + rho * d);
                let r = z * (1.0 - shrink);
                rss += b.weight * r * r;
                edf += shrink;
                nobs += 1.0;
            }
        }
        let denom = (nobs - edf).max(1e-12);
        nobs * rss / (denom * denom)
    }

    fn log_range(&self) -> (f64, f64) {
        let pos: Vec<f64> = self.eigs.iter().copied().filter(|d| *d > 0.0).collect();
        let dmin = pos.iter().copied().fold(f64::INFINITY, f64::min);
        let dmax = pos.iter().copied().fold(0.0, f64::max);
        let smin = self.blocks.iter().map(|b| b.scale).fold(f64::INFINITY, f64::min);
        let smax = self.blocks.iter().map(|b| b.scale).fold(0.0, f64::max);
        let lo = (1e-8 / (dmax * smax)).ln();
        let hi = (1e8 / (dmin * smin)).ln();
        (lo, hi)
    }

    /// REML estimate of λ; falls back to a 17-point GCV grid over
    /// `10^-8 .. 10^4` when the likelihood is not finite.
    pub fn select(&self) -> (f64, LambdaMethod) {
        match self.reml() {
            Some(l) => (l, LambdaMethod::Reml),
            None => (self.gcv_grid(), LambdaMethod::GcvFallback),
        }
    }

    pub fn reml(&self) -> Option<f64> {
        if self.eigs.iter().all(|d| *d <= 0.0) || self.blocks.is_empty() {
            return None;
        }
        let (lo, hi) = self.log_range();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return None;
        }
        let f = |ll: f64| self.neg_reml(ll.exp());
        let n = 121;
        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&g| f(g)).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut best = 0;
        for i in 1..n {
            if vals[i] < vals[best] {
                best = i;
            }
        }
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(n - 1)];
        let ll = golden_section(f, a, b, 1e-10);
        let out = ll.exp();
        out.is_finite().then_some(out)
    }

    pub fn gcv_grid(&self) -> f64 {
        let mut best = (f64::INFINITY, 1e-8);
        for e in -8..=8 {
            // 17 points, log-spaced over 1e-8 .. 1e4
            let lambda = 10f64.powf(-8.0 + 0.75 * (e + 8) as f64);
            let g = self.gcv(lambda);
            if g < best.0 {
                best = (g, lambda);
            }
        }
        best.1
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
