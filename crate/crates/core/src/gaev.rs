//! GEV with spline parameter functions of the within-year position, fitted by
//! maximum likelihood over the basis coefficients, plus cross-validated choice
//! of the basis dimensions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::GaevPanel;
use crate::gev::{self, GevParams, XI_BOUNDS, XI_REGULAR_MIN};
use crate::ingest::FunctionalSeries;
use crate::metrics::curve_jsd;
use crate::optim::{self, BfgsOptions, BARRIER};
use crate::par;
use crate::splines::{ParamCurve, SplineBasis, MAX_DIM, MIN_DIM};

/// Quadratic penalty weight on the non-intercept coefficients. Location
/// coefficients are measured in units of the pooled scale.
pub const SHRINKAGE: f64 = 3.0;

/// Basis dimensions of the location, log-scale and shape functions. Zero
/// means intercept only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GaevDims {
    pub d_mu: usize,
    pub d_sigma: usize,
    pub d_xi: usize,
}

impl GaevDims {
    pub fn new(d_mu: usize, d_sigma: usize, d_xi: usize) -> Result<Self> {
        let dims = Self {
            d_mu,
            d_sigma,
            d_xi,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("d_mu", self.d_mu), ("d_sigma", self.d_sigma), ("d_xi", self.d_xi)] {
            if d != 0 && !(MIN_DIM..=MAX_DIM).contains(&d) {
                return Err(Error::arg(format!(
                    "{name} must be 0 or lie in [{MIN_DIM}, {MAX_DIM}], got {d}"
                )));
            }
        }
        Ok(())
    }

    /// Length of the stacked coefficient vector, intercepts included.
    pub fn n_coeffs(&self) -> usize {
        self.d_mu + self.d_sigma + self.d_xi + 3
    }
}

impl fmt::Display for GaevDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.d_mu, self.d_sigma, self.d_xi)
    }
}

/// The three bases shared by every fit on a given grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaevBases {
    pub dims: GaevDims,
    pub mu: Option<SplineBasis>,
    pub sigma: Option<SplineBasis>,
    pub xi: Option<SplineBasis>,
}

impl GaevBases {
    /// Bases on `[grid[0], grid[J-1]]`, centered over `grid`.
    pub fn new(grid: &[f64], dims: GaevDims) -> Result<Self> {
        dims.validate()?;
        if grid.len() < 2 {
            return Err(Error::arg("a GAEV grid needs at least two points"));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::arg("GAEV grid must be strictly increasing"));
        }
        let domain = (grid[0], grid[grid.len() - 1]);
        let make = |d: usize| -> Result<Option<SplineBasis>> {
            if d == 0 {
                Ok(None)
            } else {
                SplineBasis::new(domain, d, grid).map(Some)
            }
        };
        Ok(Self {
            dims,
            mu: make(dims.d_mu)?,
            sigma: make(dims.d_sigma)?,
            xi: make(dims.d_xi)?,
        })
    }

    /// Parameter curves from a stacked coefficient vector.
    pub fn curves(&self, coeffs: &[f64]) -> Result<[ParamCurve; 3]> {
        if coeffs.len() != self.dims.n_coeffs() {
            return Err(Error::arg(format!(
                "expected {} stacked coefficients, got {}",
                self.dims.n_coeffs(),
                coeffs.len()
            )));
        }
        let mut rest = coeffs;
        let mut take = |basis: &Option<SplineBasis>| -> Result<ParamCurve> {
            let d = basis.as_ref().map_or(0, SplineBasis::dim);
            let (head, tail) = rest.split_at(d + 1);
            rest = tail;
            match basis {
                None => Ok(ParamCurve::constant(head[0])),
                Some(b) => ParamCurve::new(head[0], head[1..].to_vec(), b.clone()),
            }
        };
        Ok([take(&self.mu)?, take(&self.sigma)?, take(&self.xi)?])
    }

    /// Coefficient labels in stacking order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dims.n_coeffs());
        for (name, d) in [
            ("mu", self.dims.d_mu),
            ("log_sigma", self.dims.d_sigma),
            ("xi", self.dims.d_xi),
        ] {
            for i in 0..=d {
                out.push(format!("{name}_{i}"));
            }
        }
        out
    }

    /// Design rows `[1, b_1(tau_j), .., b_d(tau_j)]` per parameter.
    fn designs(&self, grid: &[f64]) -> Result<[Vec<Vec<f64>>; 3]> {
        let one = |basis: &Option<SplineBasis>| -> Result<Vec<Vec<f64>>> {
            match basis {
                None => Ok(vec![vec![1.0]; grid.len()]),
                Some(b) => {
                    let m = b.eval(grid)?;
                    Ok((0..grid.len())
                        .map(|j| {
                            std::iter::once(1.0)
                                .chain(m.row(j).iter().copied())
                                .collect()
                        })
                        .collect())
                }
            }
        };
        Ok([one(&self.mu)?, one(&self.sigma)?, one(&self.xi)?])
    }
}

/// GEV parameters at each `tau` from location, log-scale and shape curves.
pub fn params_from_curves(
    mu: &[f64],
    log_sigma: &[f64],
    xi: &[f64],
) -> Result<Vec<GevParams>> {
    mu.iter()
        .zip(log_sigma)
        .zip(xi)
        .enumerate()
        .map(|(j, ((m, s), x))| {
            GevParams::new(*m, s.exp(), *x).map_err(|e| match e {
                Error::Argument(msg) => Error::Domain(format!("grid point {j}: {msg}")),
                other => other,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaevFit {
    pub mu_curve: ParamCurve,
    pub log_sigma_curve: ParamCurve,
    pub xi_curve: ParamCurve,
    pub log_likelihood: f64,
    pub converged: bool,
}

impl GaevFit {
    /// Stacked `[mu_0.., log_sigma_0.., xi_0..]` coefficient vector.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in [&self.mu_curve, &self.log_sigma_curve, &self.xi_curve] {
            out.push(c.intercept);
            out.extend_from_slice(&c.coeffs);
        }
        out
    }

    pub fn params_at(&self, tau: &[f64]) -> Result<Vec<GevParams>> {
        params_from_curves(
            &self.mu_curve.eval(tau)?,
            &self.log_sigma_curve.eval(tau)?,
            &self.xi_curve.eval(tau)?,
        )
    }

    /// Parameters with the curves continued linearly beyond their domain.
    pub fn params_extrapolated(&self, tau: &[f64]) -> Result<Vec<GevParams>> {
        params_from_curves(
            &self.mu_curve.eval_extrapolated(tau),
            &self.log_sigma_curve.eval_extrapolated(tau),
            &self.xi_curve.eval_extrapolated(tau),
        )
    }
}

struct Objective<'a> {
    y: &'a [f64],
    design: [Vec<Vec<f64>>; 3],
    /// Offsets of the three blocks in the stacked vector.
    offsets: [usize; 3],
    /// Quadratic penalty weight per stacked coefficient.
    weights: Vec<f64>,
}

impl Objective<'_> {
    fn eval_params(&self, theta: &[f64], j: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.design[k][j];
            let block = &theta[self.offsets[k]..self.offsets[k] + row.len()];
            *o = row.iter().zip(block).map(|(a, b)| a * b).sum();
        }
        out
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for (j, &x) in self.y.iter().enumerate() {
            let [mu, eta, xi] = self.eval_params(theta, j);
            total += match GevParams::new(mu, eta.exp(), xi) {
                Ok(p) => p.log_pdf(x),
                Err(_) => f64::NEG_INFINITY,
            };
        }
        total
    }

    /// Penalized negative log-likelihood and its gradient.
    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for (j, &x) in self.y.iter().enumerate() {
            let [mu, eta, xi] = self.eval_params(theta, j);
            if !(XI_BOUNDS.0..=XI_BOUNDS.1).contains(&xi) || !(eta.abs() < 700.0) {
                return BARRIER;
            }
            let Some((l, d)) = gev::log_pdf_grad(x, mu, eta, xi) else {
                return BARRIER;
            };
            total += l;
            for (k, dk) in d.iter().enumerate() {
                let o = self.offsets[k];
                for (i, b) in self.design[k][j].iter().enumerate() {
                    grad[o + i] -= dk * b;
                }
            }
        }
        if !total.is_finite() {
            return BARRIER;
        }
        let mut penalty = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            penalty += w * theta[i] * theta[i];
            grad[i] += 2.0 * w * theta[i];
        }
        -total + penalty
    }
}

/// Fit one curve observed at `grid`. Without `init`, starts from the pooled
/// scalar GEV fit with all spline coefficients at zero.
pub fn fit_gaev(
    curve: &[f64],
    grid: &[f64],
    dims: GaevDims,
    init: Option<&[f64]>,
) -> Result<GaevFit> {
    let bases = GaevBases::new(grid, dims)?;
    fit_gaev_with(curve, grid, &bases, init)
}

/// [`fit_gaev`] with prebuilt bases.
pub fn fit_gaev_with(
    curve: &[f64],
    grid: &[f64],
    bases: &GaevBases,
    init: Option<&[f64]>,
) -> Result<GaevFit> {
    let dims = bases.dims;
    let n = dims.n_coeffs();
    if curve.len() != grid.len() {
        return Err(Error::arg(format!(
            "curve has {} values for a grid of {} points",
            curve.len(),
            grid.len()
        )));
    }
    if curve.len() < n + 5 {
        return Err(Error::arg(format!(
            "GAEV with dims {dims} has {n} coefficients and needs at least {} points, got {}",
            n + 5,
            curve.len()
        )));
    }
    let mut obj = Objective {
        y: curve,
        design: bases.designs(grid)?,
        offsets: [0, dims.d_mu + 1, dims.d_mu + dims.d_sigma + 2],
        weights: vec![0.0; n],
    };

    if let Some(x) = init {
        if x.len() != n {
            return Err(Error::arg(format!(
                "initial coefficient vector has length {}, expected {n}",
                x.len()
            )));
        }
    }
    // an infeasible starting vector falls back to the pooled start
    let mut scratch = vec![0.0; n];
    let supplied = init
        .filter(|x| obj.value_grad(x, &mut scratch) < BARRIER)
        .map(<[f64]>::to_vec);
    let pooled = gev::fit_penalized(curve, None, gev::XI_PENALTY)?;
    let scale = pooled.params.sigma();
    let theta0 = supplied.unwrap_or_else(|| {
        let mut x = vec![0.0; n];
        x[obj.offsets[0]] = pooled.params.mu();
        x[obj.offsets[1]] = scale.ln();
        x[obj.offsets[2]] = pooled.params.xi().max(XI_BOUNDS.0 + 0.05);
        x
    });

    for k in 0..3 {
        let end = if k == 2 { n } else { obj.offsets[k + 1] };
        let w = if k == 0 {
            SHRINKAGE / (scale * scale)
        } else {
            SHRINKAGE
        };
        obj.weights[obj.offsets[k] + 1..end].fill(w);
    }
    obj.weights[obj.offsets[2]] = gev::XI_PENALTY;
    let opts = BfgsOptions {
        max_iter: 2000,
        step_tol: 1e-9,
        grad_tol: 1e-9,
        max_step: scale.max(0.1),
    };
    let m = optim::bfgs(|x, g| obj.value_grad(x, g), &theta0, &opts);
    let ll = obj.log_likelihood(&m.x);
    let [mu_curve, log_sigma_curve, xi_curve] = bases.curves(&m.x)?;
    let xi_min = (0..curve.len())
        .map(|j| obj.eval_params(&m.x, j)[2])
        .fold(f64::INFINITY, f64::min);
    Ok(GaevFit {
        mu_curve,
        log_sigma_curve,
        xi_curve,
        log_likelihood: ll,
        converged: m.converged && ll.is_finite() && xi_min >= XI_REGULAR_MIN,
    })
}

/// The coarse candidate lattice `{3,5,7,9}^2 x {d_xi}`.
pub fn coarse_lattice(d_xi: usize) -> Vec<GaevDims> {
    let levels = [3, 5, 7, 9];
    let mut out = Vec::new();
    for &a in &levels {
        for &b in &levels {
            out.push(GaevDims {
                d_mu: a,
                d_sigma: b,
                d_xi,
            });
        }
    }
    out
}

/// Every combination of dimensions in `[3, 10]`; with `free_xi` the shape
/// dimension varies too (512 candidates), otherwise it is fixed at 0.
pub fn full_grid(free_xi: bool) -> Vec<GaevDims> {
    let xi_levels: Vec<usize> = if free_xi {
        (MIN_DIM..=MAX_DIM).collect()
    } else {
        vec![0]
    };
    let mut out = Vec::new();
    for a in MIN_DIM..=MAX_DIM {
        for b in MIN_DIM..=MAX_DIM {
            for &c in &xi_levels {
                out.push(GaevDims {
                    d_mu: a,
                    d_sigma: b,
                    d_xi: c,
                });
            }
        }
    }
    out
}

/// Argmin of a materialized score table. Ties go to the smallest coefficient
/// count, then to the lexicographically smallest dims. Failed or non-finite
/// scores are skipped.
pub fn select_from_scores(scores: &[(GaevDims, Result<f64>)]) -> Result<GaevDims> {
    if scores.is_empty() {
        return Err(Error::arg("empty candidate grid"));
    }
    let best = scores
        .iter()
        .filter_map(|(d, s)| match s {
            Ok(v) if v.is_finite() => Some((*d, *v)),
            _ => None,
        })
        .min_by(|(da, a), (db, b)| {
            a.total_cmp(b)
                .then(da.n_coeffs().cmp(&db.n_coeffs()))
                .then(da.cmp(db))
        });
    match best {
        Some((d, _)) => Ok(d),
        None => {
            let failures: Vec<String> = scores
                .iter()
                .map(|(d, s)| match s {
                    Ok(v) => format!("{d}: score {v}"),
                    Err(e) => format!("{d}: {e}"),
                })
                .collect();
            Err(Error::Fit(format!(
                "every candidate failed: {}",
                failures.join("; ")
            )))
        }
    }
}

/// Hold-out score of one candidate: forecast curve `n_train` from the first
/// `n_train` curves and compare its median with the observed curve.
pub(crate) fn holdout_score(panel: &GaevPanel, series: &FunctionalSeries, n_train: usize) -> Result<f64> {
    let fd = panel.forecast(n_train, 1)?;
    let median = fd.quantile_curve(0.5)?;
    curve_jsd(series.curve(n_train), &median)
}

/// Pick basis dimensions by holding out the last curve: every candidate is
/// fitted to curves `1..T-1`, forecast one step, and its median curve scored
/// against curve `T` with the curve JSD.
pub fn select_dims(series: &FunctionalSeries, candidates: &[GaevDims]) -> Result<GaevDims> {
    if candidates.is_empty() {
        return Err(Error::arg("empty candidate grid"));
    }
    if series.len() < 5 {
        return Err(Error::arg(format!(
            "dimension selection needs at least 5 curves, got {}",
            series.len()
        )));
    }
    for d in candidates {
        d.validate()?;
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let train = series.head(series.len() - 1);
    let scores = score_candidates(&train, series, candidates);
    select_from_scores(&scores)
}

/// Score every candidate in parallel.
pub fn score_candidates(
    train: &FunctionalSeries,
    full: &FunctionalSeries,
    candidates: &[GaevDims],
) -> Vec<(GaevDims, Result<f64>)> {
    let n_train = train.len();
    par::map_slice(candidates, |&d| {
        let score = GaevPanel::fit(train, d).and_then(|p| holdout_score(&p, full, n_train));
        (d, score)
    })
}
