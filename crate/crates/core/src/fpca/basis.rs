//! Cubic B-splines on `[0, 1]` and their Demmler–Reinsch reparametrisation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::series::grid_point;

const DEGREE: usize = 3;

/// Default number of basis functions.
pub const DEFAULT_SAMPLES: usize = 50;

/// Clamped knot vector with equally spaced interior knots.
fn clamped_knots(num_basis: usize) -> Vec<f64> {
    let interior = num_basis - DEGREE - 1;
    let mut k = vec![0.0; DEGREE + 1];
    k.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
    k.extend(std::iter::repeat_n(1.0, DEGREE + 1));
    k
}

/// Values of all B-splines of `degree` on `knots` at `x` (Cox–de Boor).
fn bspline_values(knots: &[f64], degree: usize, x: f64) -> Vec<f64> {
    let nk = knots.len();
    let last = knots[nk - 1];
    // degree 0; the final non-empty span is closed on the right
    let last_span = (0..nk - 1).rev().find(|&i| knots[i] < knots[i + 1]).unwrap_or(0);
    let mut vals: Vec<f64> = (0..nk - 1)
        .map(|i| {
            let inside = knots[i] <= x && x < knots[i + 1];
            let at_end = x == last && i == last_span;
            if inside || at_end {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for d in 1..=degree {
        let next: Vec<f64> = (0..nk - 1 - d)
            .map(|i| {
                let mut v = 0.0;
                let den1 = knots[i + d] - knots[i];
                if den1 > 0.0 {
                    v += (x - knots[i]) / den1 * vals[i];
                }
                let den2 = knots[i + d + 1] - knots[i + 1];
                if den2 > 0.0 {
                    v += (knots[i + d + 1] - x) / den2 * vals[i + 1];
                }
                v
            })
            .collect();
        vals = next;
    }
    vals
}

/// Derivative of order `ord` of all degree-`degree` B-splines at `x`.
fn bspline_derivs(knots: &[f64], degree: usize, ord: usize, x: f64) -> Vec<f64> {
    let mut vals = bspline_values(knots, degree - ord, x);
    for d in degree - ord + 1..=degree {
        let n = knots.len() - d - 1;
        vals = (0..n)
            .map(|i| {
                let mut v = 0.0;
                let den1 = knots[i + d] - knots[i];
                if den1 > 0.0 {
                    v += vals[i] / den1;
                }
                let den2 = knots[i + d + 1] - knots[i + 1];
                if den2 > 0.0 {
                    v -= vals[i + 1] / den2;
                }
                d as f64 * v
            })
            .collect();
    }
    vals
}

/// Greville abscissae: `Σ ξ_i B_i(x) = x`.
fn greville(knots: &[f64], num_basis: usize) -> Vec<f64> {
    (0..num_basis)
        .map(|i| knots[i + 1..=i + DEGREE].iter().sum::<f64>() / DEGREE as f64)
        .collect()
}

/// `∫ B_i''(x) B_j''(x) dx` over `[0, 1]`; the integrand is piecewise
/// quadratic so two-point Gauss–Legendre per knot span is exact.
fn second_derivative_penalty(knots: &[f64], num_basis: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(num_basis, num_basis);
    let g = 0.5 / 3f64.sqrt();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let h = b - a;
        for node in [0.5 - g, 0.5 + g] {
            let x = a + node * h;
            let d2 = bspline_derivs(knots, DEGREE, 2, x);
            for i in 0..num_basis {
                if d2[i] == 0.0 {
                    continue;
                }
                for j in 0..num_basis {
                    p[(i, j)] += 0.5 * h * d2[i] * d2[j];
                }
            }
        }
    }
    p
}

/// Basis functions evaluated on the common grid, orthonormal under the grid
/// inner product `<f, g> = Σ f(x_i) g(x_i) / n`, with a diagonal roughness
/// penalty.
#[derive(Debug, Clone)]
pub struct BasisSet {
    values: DMatrix<f64>,
    penalty_eigs: DVector<f64>,
    /// Maps Demmler–Reinsch coefficients to B-spline coefficients.
    to_bspline: DMatrix<f64>,
    knots: Vec<f64>,
}

impl BasisSet {
    /// `grid_n x K` matrix of basis values.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Eigenvalues of the second-derivative penalty, non-decreasing; the first
    /// two are exactly zero.
    pub fn penalty_eigs(&self) -> &DVector<f64> {
        &self.penalty_eigs
    }

    pub fn samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn grid_n(&self) -> usize {
        self.values.nrows()
    }

    /// Smoothness order of the penalty.
    pub fn smoothness(&self) -> usize {
        2
    }

    /// Evaluates `Σ_k coef_k φ_k(x)` at an arbitrary `x` in `[0, 1]`.
    pub fn eval(&self, coefs: &DVector<f64>, x: f64) -> f64 {
        let b = DVector::from_vec(bspline_values(&self.knots, DEGREE, x.clamp(0.0, 1.0)));
        b.dot(&(&self.to_bspline * coefs))
    }

    /// Grid values of `Σ_k coef_k φ_k`.
    pub fn curve(&self, coefs: &DVector<f64>) -> DVector<f64> {
        &self.values * coefs
    }
}

/// Builds the Demmler–Reinsch basis of `samples` cubic B-splines on a grid of
/// `grid_n` points.
pub fn build_dr_basis(grid_n: usize, samples: usize) -> Result<BasisSet> {
    if samples < 4 {
        return Err(Error::Contract(format!("need at least 4 basis functions, got {samples}")));
    }
    if samples > grid_n {
        return Err(Error::Rank(format!(
            "{samples} basis functions exceed {grid_n} grid points"
        )));
    }
    let k = samples;
    let knots = clamped_knots(k);
    let bs = DMatrix::from_fn(grid_n, k, |_, _| 0.0);
    let mut bs = bs;
    for i in 0..grid_n {
        let v = bspline_values(&knots, DEGREE, grid_point(i, grid_n));
        for j in 0..k {
            bs[(i, j)] = v[j];
        }
    }
    let gram = bs.transpose() * &bs / grid_n as f64;
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Rank("B-spline Gram matrix is singular on this grid".into()))?;
    let l = chol.l();
    let lt = l.transpose();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Rank("Cholesky factor not invertible".into()))?;
    // basis B = Bs L^{-T}; penalty in those coordinates is L^{-1} P L^{-T}
    let pen = second_derivative_penalty(&knots, k);
    let m = &l_inv * pen * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;

    // null space of the penalty: constants and linear functions, fixed explicitly
    let ones = DVector::from_element(k, 1.0);
    let xi = DVector::from_vec(greville(&knots, k));
    let mut u1 = &lt * ones;
    u1 /= u1.norm();
    let mut u2 = &lt * xi;
    u2 -= &u1 * u1.dot(&u2);
    u2 /= u2.norm();
    let proj = DMatrix::identity(k, k) - &u1 * u1.transpose() - &u2 * u2.transpose();
    let pe = SymmetricEigen::new(proj);
    let comp_cols: Vec<DVector<f64>> = (0..k)
        .filter(|&i| pe.eigenvalues[i] > 0.5)
        .map(|i| pe.eigenvectors.column(i).into_owned())
        .collect();
    if comp_cols.len() != k - 2 {
        return Err(Error::Rank("could not separate the penalty null space".into()));
    }
    let w = DMatrix::from_columns(&comp_cols);
    let reduced = w.transpose() * &m * &w;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..k - 2).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut u = DMatrix::zeros(k, k);
    u.set_column(0, &u1);
    u.set_column(1, &u2);
    let mut eigs = DVector::zeros(k);
    for (c, &idx) in order.iter().enumerate() {
        u.set_column(c + 2, &(&w * eig.eigenvectors.column(idx)));
        eigs[c + 2] = eig.eigenvalues[idx].max(0.0);
    }
    let to_bspline = l_inv.transpose() * u;
    let mut values = &bs * &to_bspline;
    let mut to_bspline = to_bspline;
    // sign convention: first clearly non-zero grid value is positive
    for c in 0..k {
        let col = values.column(c);
        let scale = col.amax();
        let first = col.iter().copied().find(|v| v.abs() > 1e-6 * scale).unwrap_or(1.0);
        if first < 0.0 {
            values.column_mut(c).neg_mut();
            to_bspline.column_mut(c).neg_mut();
        }
    }
    Ok(BasisSet {
        values,
        penalty_eigs: eigs,
        to_bspline,
        knots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let knots = clamped_knots(10);
        for &x in &[0.0, 0.13, 0.5, 0.999, 1.0] {
            let s: f64 = bspline_values(&knots, DEGREE, x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn greville_reproduces_identity() {
        let knots = clamped_knots(12);
        let xi = greville(&knots, 12);
        for &x in &[0.0, 0.21, 0.77, 1.0] {
            let v: f64 = bspline_values(&knots, DEGREE, x).iter().zip(&xi).map(|(b, g)| b * g).sum();
            assert!((v - x).abs() < 1e-12);
        }
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        let knots = clamped_knots(9);
        let x = 0.37;
        let h = 1e-4;
        let f = |x| bspline_values(&knots, DEGREE, x);
        let d2 = bspline_derivs(&knots, DEGREE, 2, x);
        let (a, b, c) = (f(x - h), f(x), f(x + h));
        for i in 0..9 {
            let fd = (a[i] - 2.0 * b[i] + c[i]) / (h * h);
            assert!((fd - d2[i]).abs() < 1e-3 * (1.0 + d2[i].abs()), "{i}: {fd} vs {}", d2[i]);
        }
    }

    #[test]
    fn orthonormal_on_grid() {
        let b = build_dr_basis(365, 50).unwrap();
        let g = b.values().transpose() * b.values() / 365.0;
        let dev = (g - DMatrix::identity(50, 50)).amax();
        assert!(dev < 1e-8, "{dev}");
    }

    #[test]
    fn null_space_eigs_are_zero() {
        let b = build_dr_basis(365, 50).unwrap();
        let e = b.penalty_eigs();
        assert!(e[0].abs() < 1e-10 && e[1].abs() < 1e-10);
        assert!(e[2] > 1.0);
        assert!(e.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn first_function_is_constant() {
        let b = build_dr_basis(365, 20).unwrap();
        let c = b.values().column(0);
        assert!((c.max() - c.min()).abs() < 1e-10);
        assert!(c[0] > 0.0);
    }

    #[test]
    fn misspecified_study_size() {
        let b = build_dr_basis(365, 75).unwrap();
        assert_eq!(b.samples(), 75);
        let g = b.values().transpose() * b.values() / 365.0;
        assert!((g - DMatrix::identity(75, 75)).amax() < 1e-8);
    }

    #[test]
    fn too_many_functions() {
        assert!(matches!(build_dr_basis(30, 31), Err(Error::Rank(_))));
        assert!(build_dr_basis(30, 3).is_err());
    }

    #[test]
    fn off_grid_eval_matches_grid() {
        let b = build_dr_basis(101, 12).unwrap();
        let coefs = DVector::from_fn(12, |i, _| (i as f64 * 0.7).sin());
        let grid = b.curve(&coefs);
        for i in [0usize, 17, 50, 100] {
            assert!((b.eval(&coefs, grid_point(i, 101)) - grid[i]).abs() < 1e-10);
        }
    }
}
