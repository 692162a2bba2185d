//! Centered cubic B-spline bases for the parameter functions of the spline-GEV
//! model.
//!
//! A basis of dimension `d` is built from the `d + 1` clamped cubic B-splines
//! on equally spaced knots. Those `d + 1` functions sum to one, so together
//! with a separate intercept only `d` of them are identifiable: the first `d`
//! are kept and each is shifted to have zero mean over the centering grid.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 3;
pub const MAX_DIM: usize = 10;
const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    domain: (f64, f64),
    dim: usize,
    knots: Vec<f64>,
    centering_grid: Vec<f64>,
    centering_offsets: Vec<f64>,
}

impl SplineBasis {
    /// Build a `d`-dimensional basis on `domain`, centered over `grid`.
    pub fn new(domain: (f64, f64), d: usize, grid: &[f64]) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&d) {
            return Err(Error::arg(format!(
                "spline dimension must lie in [{MIN_DIM}, {MAX_DIM}], got {d}"
            )));
        }
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::arg(format!("empty spline domain [{a}, {b}]")));
        }
        if grid.is_empty() {
            return Err(Error::arg("empty centering grid"));
        }
        let pieces = d - 2;
        let mut knots = vec![a; DEGREE + 1];
        for k in 1..pieces {
            knots.push(a + (b - a) * k as f64 / pieces as f64);
        }
        knots.extend(std::iter::repeat_n(b, DEGREE + 1));

        let mut basis = Self {
            domain,
            dim: d,
            knots,
            centering_grid: grid.to_vec(),
            centering_offsets: vec![0.0; d],
        };
        let raw = basis.uncentered_matrix(grid)?;
        let n = grid.len() as f64;
        basis.centering_offsets = (0..d).map(|i| raw.column(i).sum() / n).collect();
        Ok(basis)
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn centering_grid(&self) -> &[f64] {
        &self.centering_grid
    }

    pub fn centering_offsets(&self) -> &[f64] {
        &self.centering_offsets
    }

    /// Number of B-splines in the underlying (uncentered) family.
    pub fn family_size(&self) -> usize {
        self.dim + 1
    }

    fn contains(&self, x: f64) -> bool {
        let (a, b) = self.domain;
        let slack = 1e-12 * (b - a);
        x >= a - slack && x <= b + slack
    }

    fn span(&self, x: f64) -> usize {
        let m = self.family_size();
        if x >= self.domain.1 {
            return m - 1;
        }
        // last k in [DEGREE, m-1] with knots[k] <= x
        let mut k = DEGREE;
        while k + 1 < m && self.knots[k + 1] <= x {
            k += 1;
        }
        k
    }

    /// Nonzero B-splines of degree `p` at `x` within span `k`:
    /// values of `N_{k-p..=k, p}`.
    fn nonzero(&self, k: usize, x: f64, p: usize) -> Vec<f64> {
        let t = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[k + 1 - j];
            right[j] = t[k + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Values of all `d + 1` B-splines at `x` (clamped into the domain).
    fn family_values(&self, x: f64) -> Vec<f64> {
        let x = x.clamp(self.domain.0, self.domain.1);
        let k = self.span(x);
        let local = self.nonzero(k, x, DEGREE);
        let mut out = vec![0.0; self.family_size()];
        for (r, v) in local.into_iter().enumerate() {
            out[k - DEGREE + r] = v;
        }
        out
    }

    /// First derivatives of all `d + 1` B-splines at `x` (one-sided at the
    /// domain ends).
    fn family_derivatives(&self, x: f64) -> Vec<f64> {
        let x = x.clamp(self.domain.0, self.domain.1);
        let k = self.span(x);
        let t = &self.knots;
        let low = self.nonzero(k, x, DEGREE - 1); // N_{k-2..=k, 2}
        let quad = |i: usize| -> f64 {
            if i + 2 >= k && i <= k {
                low[i + 2 - k]
            } else {
                0.0
            }
        };
        let mut out = vec![0.0; self.family_size()];
        for i in (k - DEGREE)..=k {
            let mut v = 0.0;
            let d1 = t[i + 3] - t[i];
            if d1 > 0.0 {
                v += quad(i) / d1;
            }
            let d2 = t[i + 4] - t[i + 1];
            if d2 > 0.0 {
                v -= quad(i + 1) / d2;
            }
            out[i] = DEGREE as f64 * v;
        }
        out
    }

    /// The full `d + 1` column B-spline matrix before centering and column
    /// removal. Rows sum to one.
    pub fn uncentered_matrix(&self, tau: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(tau)?;
        let m = self.family_size();
        let mut out = DMatrix::zeros(tau.len(), m);
        for (j, &x) in tau.iter().enumerate() {
            for (i, v) in self.family_values(x).into_iter().enumerate() {
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    fn check_domain(&self, tau: &[f64]) -> Result<()> {
        if let Some((j, x)) = tau.iter().enumerate().find(|(_, &x)| !self.contains(x)) {
            return Err(Error::domain(format!(
                "tau[{j}] = {x} lies outside the spline domain [{}, {}]",
                self.domain.0, self.domain.1
            )));
        }
        Ok(())
    }

    /// Centered basis matrix, entry `(j, i) = b_i(tau_j)`.
    pub fn eval(&self, tau: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(tau)?;
        Ok(self.eval_with(tau, |x| self.family_values(x)))
    }

    /// Like [`eval`](Self::eval) but continues each basis function linearly
    /// beyond the domain using its value and slope at the nearest end.
    pub fn eval_extrapolated(&self, tau: &[f64]) -> DMatrix<f64> {
        let (a, b) = self.domain;
        self.eval_with(tau, |x| {
            let edge = if x > b {
                b
            } else if x < a {
                a
            } else {
                return self.family_values(x);
            };
            let v = self.family_values(edge);
            let dv = self.family_derivatives(edge);
            v.iter().zip(&dv).map(|(v, dv)| v + dv * (x - edge)).collect()
        })
    }

    fn eval_with(&self, tau: &[f64], family: impl Fn(f64) -> Vec<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(tau.len(), self.dim);
        for (j, &x) in tau.iter().enumerate() {
            let v = family(x);
            for i in 0..self.dim {
                out[(j, i)] = v[i] - self.centering_offsets[i];
            }
        }
        out
    }
}

/// Evaluate the centered basis; alias of [`SplineBasis::eval`].
pub fn eval_basis(basis: &SplineBasis, tau: &[f64]) -> Result<DMatrix<f64>> {
    basis.eval(tau)
}

/// A parameter function `intercept + sum_i coeffs[i] b_i(tau)`; without a
/// basis it is the constant `intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCurve {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
    pub basis: Option<SplineBasis>,
}

impl ParamCurve {
    pub fn constant(intercept: f64) -> Self {
        Self {
            intercept,
            coeffs: Vec::new(),
            basis: None,
        }
    }

    pub fn new(intercept: f64, coeffs: Vec<f64>, basis: SplineBasis) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::arg(format!(
                "curve has {} coefficients for a basis of dimension {}",
                coeffs.len(),
                basis.dim()
            )));
        }
        Ok(Self {
            intercept,
            coeffs,
            basis: Some(basis),
        })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn combine(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let c = DVector::from_column_slice(&self.coeffs);
        (m * c).iter().map(|v| v + self.intercept).collect()
    }

    pub fn eval(&self, tau: &[f64]) -> Result<Vec<f64>> {
        match &self.basis {
            None => Ok(vec![self.intercept; tau.len()]),
            Some(b) => Ok(self.combine(&b.eval(tau)?)),
        }
    }

    /// Evaluation with linear continuation outside the basis domain.
    pub fn eval_extrapolated(&self, tau: &[f64]) -> Vec<f64> {
        match &self.basis {
            None => vec![self.intercept; tau.len()],
            Some(b) => self.combine(&b.eval_extrapolated(tau)),
        }
    }

    /// Least-squares fit of `y` on the intercept plus basis columns.
    pub fn fit_least_squares(basis: &SplineBasis, tau: &[f64], y: &[f64]) -> Result<Self> {
        if tau.len() != y.len() {
            return Err(Error::arg("tau and y lengths differ"));
        }
        let b = basis.eval(tau)?;
        let mut x = DMatrix::from_element(tau.len(), basis.dim() + 1, 1.0);
        x.view_mut((0, 1), (tau.len(), basis.dim())).copy_from(&b);
        let beta = x
            .svd(true, true)
            .solve(&DVector::from_column_slice(y), 1e-12)
            .map_err(|e| Error::Fit(e.to_string()))?;
        ParamCurve::new(beta[0], beta.iter().skip(1).copied().collect(), basis.clone())
    }
}

/// Evaluate a parameter curve; alias of [`ParamCurve::eval`].
pub fn eval_curve(curve: &ParamCurve, tau: &[f64]) -> Result<Vec<f64>> {
    curve.eval(tau)
}

/// `n` equally spaced points covering `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|j| a + (b - a) * j as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_basis(d: usize) -> SplineBasis {
        SplineBasis::new((0.0, 1.0), d, &uniform_grid(0.0, 1.0, 30)).unwrap()
    }

    #[test]
    fn columns_are_centered_on_the_grid() {
        let grid = uniform_grid(0.0, 1.0, 30);
        let b = unit_basis(5);
        let m = b.eval(&grid).unwrap();
        assert_eq!(m.ncols(), 5);
        for i in 0..5 {
            assert!(m.column(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_bounds() {
        let g = uniform_grid(0.0, 1.0, 10);
        assert!(SplineBasis::new((0.0, 1.0), 2, &g).is_err());
        assert!(SplineBasis::new((0.0, 1.0), 11, &g).is_err());
        assert!(SplineBasis::new((1.0, 1.0), 5, &g).is_err());
        assert!(SplineBasis::new((0.0, 1.0), 3, &g).is_ok());
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let b = unit_basis(5);
        assert!(matches!(b.eval(&[0.5, 1.2]), Err(Error::Domain(_))));
        assert!(b.eval(&[-1e-3]).is_err());
    }

    #[test]
    fn knots_and_repeats_evaluate() {
        let b = unit_basis(7);
        let knots = b.knots().to_vec();
        let m = b.eval(&knots).unwrap();
        assert!(m.iter().all(|v| v.is_finite()));
        let m = b.eval(&[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(m.row(0), m.row(1));
        assert_eq!(m.row(1), m.row(2));
    }

    #[test]
    fn partition_of_unity_before_centering() {
        for d in MIN_DIM..=MAX_DIM {
            let b = unit_basis(d);
            let tau = uniform_grid(0.0, 1.0, 257);
            let m = b.uncentered_matrix(&tau).unwrap();
            for j in 0..tau.len() {
                assert!((m.row(j).sum() - 1.0).abs() <= 1e-12, "d={d} j={j}");
            }
        }
    }

    #[test]
    fn second_derivative_continuous_at_knots() {
        // d = 10 on [1, 366]: seven interior knots
        let grid: Vec<f64> = (1..=366).map(|v| v as f64).collect();
        let b = SplineBasis::new((1.0, 366.0), 10, &grid).unwrap();
        let interior: Vec<f64> = b.knots()[4..b.knots().len() - 4].to_vec();
        assert_eq!(interior.len(), 7);
        let h = 0.05;
        for &k in &interior {
            // one-sided second differences on either side of the knot
            let left = b.uncentered_matrix(&[k - 2.0 * h, k - h, k]).unwrap();
            let right = b.uncentered_matrix(&[k, k + h, k + 2.0 * h]).unwrap();
            let mid = b.uncentered_matrix(&[k - h, k, k + h]).unwrap();
            for i in 0..b.family_size() {
                let dl = (left[(0, i)] - 2.0 * left[(1, i)] + left[(2, i)]) / (h * h);
                let dr = (right[(0, i)] - 2.0 * right[(1, i)] + right[(2, i)]) / (h * h);
                let dm = (mid[(0, i)] - 2.0 * mid[(1, i)] + mid[(2, i)]) / (h * h);
                // third derivative jumps at most O(1/spacing^3); the one-sided
                // second differences agree to O(h * jump)
                let scale = 1.0 / (45.5f64).powi(2);
                assert!((dl - dm).abs() < 0.05 * scale, "knot {k} fn {i}");
                assert!((dr - dm).abs() < 0.05 * scale, "knot {k} fn {i}");
                // value and slope continuity
                let v = b.uncentered_matrix(&[k - 1e-9, k + 1e-9]).unwrap();
                assert!((v[(0, i)] - v[(1, i)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = unit_basis(6);
        for &x in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            let d = b.family_derivatives(x);
            let h = 1e-6;
            let lo = (x - h).max(0.0);
            let hi = (x + h).min(1.0);
            let vl = b.family_values(lo);
            let vh = b.family_values(hi);
            for i in 0..b.family_size() {
                let fd = (vh[i] - vl[i]) / (hi - lo);
                assert!((d[i] - fd).abs() < 1e-4, "x={x} i={i}: {} vs {fd}", d[i]);
            }
        }
    }

    #[test]
    fn extrapolation_is_linear_beyond_the_end() {
        let b = unit_basis(5);
        let tau: Vec<f64> = (0..50).map(|k| 1.0 + 0.02 * (k + 1) as f64).collect();
        let m = b.eval_extrapolated(&tau);
        for i in 0..5 {
            for j in 1..tau.len() - 1 {
                let second = m[(j - 1, i)] - 2.0 * m[(j, i)] + m[(j + 1, i)];
                assert!(second.abs() < 1e-12);
            }
        }
        // continuous with the in-domain evaluation
        let inside = b.eval(&[1.0]).unwrap();
        let edge = b.eval_extrapolated(&[1.0 + 1e-10]);
        for i in 0..5 {
            assert!((inside[(0, i)] - edge[(0, i)]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_coefficients_give_the_intercept() {
        let b = unit_basis(4);
        let c = ParamCurve::new(2.5, vec![0.0; 4], b).unwrap();
        assert!(c.eval(&[0.0, 0.4, 1.0]).unwrap().iter().all(|&v| v == 2.5));
        assert!(ParamCurve::new(0.0, vec![1.0; 3], unit_basis(4)).is_err());
    }

    #[test]
    fn fits_a_sine_wave() {
        let tau = uniform_grid(0.0, 1.0, 200);
        let y: Vec<f64> = tau
            .iter()
            .map(|t| (2.0 * std::f64::consts::PI * t).sin())
            .collect();
        let b = SplineBasis::new((0.0, 1.0), 7, &tau).unwrap();
        let c = ParamCurve::fit_least_squares(&b, &tau, &y).unwrap();
        let fitted = c.eval(&tau).unwrap();
        let max_err = fitted
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.05, "max error {max_err}");
    }

    #[test]
    fn nested_knots_never_increase_residual() {
        let tau = uniform_grid(0.0, 1.0, 120);
        let y: Vec<f64> = tau
            .iter()
            .map(|t| (7.0 * t).sin() * (-t).exp() + (t * 13.0).cos() * 0.3)
            .collect();
        let rss = |d: usize| {
            let b = SplineBasis::new((0.0, 1.0), d, &tau).unwrap();
            let c = ParamCurve::fit_least_squares(&b, &tau, &y).unwrap();
            let f = c.eval(&tau).unwrap();
            f.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        // 1, 2, 4 and 8 polynomial pieces share knots
        let seq: Vec<f64> = [3, 4, 6, 10].iter().map(|&d| rss(d)).collect();
        for w in seq.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{seq:?}");
        }
    }

    #[test]
    fn evaluation_is_reproducible() {
        let b = unit_basis(8);
        let tau = uniform_grid(0.0, 1.0, 31);
        assert_eq!(b.eval(&tau).unwrap(), b.eval(&tau).unwrap());
    }

    proptest! {
        #[test]
        fn curve_evaluation_is_linear(
            c1 in proptest::collection::vec(-3.0f64..3.0, 5),
            c2 in proptest::collection::vec(-3.0f64..3.0, 5),
            i1 in -2.0f64..2.0,
            i2 in -2.0f64..2.0,
        ) {
            let b = unit_basis(5);
            let tau = uniform_grid(0.0, 1.0, 17);
            let a = ParamCurve::new(i1, c1.clone(), b.clone()).unwrap().eval(&tau).unwrap();
            let bb = ParamCurve::new(i2, c2.clone(), b.clone()).unwrap().eval(&tau).unwrap();
            let sum: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| x + y).collect();
            let s = ParamCurve::new(i1 + i2, sum, b).unwrap().eval(&tau).unwrap();
            for j in 0..tau.len() {
                prop_assert!((s[j] - (a[j] + bb[j])).abs() < 1e-10);
            }
        }
    }
}
