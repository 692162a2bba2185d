//! Divergences between discretized densities and the averaging used to score
//! forecast curves.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gev::GevParams;

/// Default number of support points for discretized GEV densities.
pub const DEFAULT_K: usize = 512;
pub const MIN_K: usize = 64;

/// Mass added to every grid point when discretizing a GEV density before
/// renormalizing. Keeps the symmetric KL divergence finite when one density
/// underflows or leaves its support inside the shared range.
pub const MASS_FLOOR: f64 = 1e-12;

/// Probability masses on a strictly increasing point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    points: Vec<f64>,
    masses: Vec<f64>,
}

impl DensityGrid {
    pub fn new(points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() || points.is_empty() {
            return Err(Error::arg(format!(
                "density grid needs matching nonempty points/masses ({} vs {})",
                points.len(),
                masses.len()
            )));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::arg("density grid points must be strictly increasing"));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::arg("density grid masses must be finite and nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("density grid masses sum to {total}, not 1")));
        }
        Ok(Self { points, masses })
    }

    /// Normalize nonnegative weights into masses.
    pub fn from_weights(points: Vec<f64>, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::arg("density weights must have a positive finite sum"));
        }
        Self::new(points, weights.iter().map(|w| w / total).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn discretize(p: &GevParams, points: &[f64], spacing: f64) -> Result<DensityGrid> {
    let mut weights: Vec<f64> = points.iter().map(|&v| p.pdf(v) * spacing).collect();
    let mut total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        // a density much narrower than the spacing can fall between points;
        // bin probabilities still see its mass
        let half = 0.5 * spacing;
        weights = points.iter().map(|&v| p.cdf(v + half) - p.cdf(v - half)).collect();
        total = weights.iter().sum();
    }
    if !(total > 0.0) {
        return Err(Error::domain(format!(
            "GEV {p:?} has no mass on the shared grid"
        )));
    }
    let k = points.len() as f64;
    let masses = weights
        .iter()
        .map(|w| (w / total + MASS_FLOOR) / (1.0 + k * MASS_FLOOR))
        .collect();
    DensityGrid::new(points.to_vec(), masses)
}

/// Discretize two GEV densities on `k` shared uniform points spanning the
/// union of their `[0.001, 0.999]` quantile ranges.
pub fn make_density_grid(
    p: &GevParams,
    q: &GevParams,
    k: usize,
) -> Result<(DensityGrid, DensityGrid)> {
    if k < MIN_K {
        return Err(Error::arg(format!("density grid needs K >= {MIN_K}, got {k}")));
    }
    let lo = p.quantile(0.001)?.min(q.quantile(0.001)?);
    let hi = p.quantile(0.999)?.max(q.quantile(0.999)?);
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("degenerate density range [{lo}, {hi}]")));
    }
    let spacing = (hi - lo) / (k - 1) as f64;
    let points: Vec<f64> = (0..k).map(|i| lo + spacing * i as f64).collect();
    Ok((discretize(p, &points, spacing)?, discretize(q, &points, spacing)?))
}

fn same_support(f: &DensityGrid, g: &DensityGrid) -> Result<()> {
    if f.points != g.points {
        return Err(Error::arg("divergence between densities on different point sets"));
    }
    Ok(())
}

/// `a ln(a / b)` with `0 ln 0 = 0`.
fn xlogy(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (a / b).ln()
    }
}

/// Jensen-Shannon divergence with mixture `(f + g) / 2`; lies in `[0, ln 2]`.
pub fn jsd(f: &DensityGrid, g: &DensityGrid) -> Result<f64> {
    same_support(f, g)?;
    let total: f64 = f
        .masses
        .iter()
        .zip(&g.masses)
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            0.5 * xlogy(a, m) + 0.5 * xlogy(b, m)
        })
        .sum();
    Ok(total.clamp(0.0, LN_2))
}

/// Symmetrized Kullback-Leibler divergence `KL(f||g) + KL(g||f)`; `+inf` when
/// one density has mass where the other has none.
pub fn kld(f: &DensityGrid, g: &DensityGrid) -> Result<f64> {
    same_support(f, g)?;
    let mut total = 0.0;
    for (&a, &b) in f.masses.iter().zip(&g.masses) {
        if a == b {
            continue;
        }
        if a == 0.0 || b == 0.0 {
            return Ok(f64::INFINITY);
        }
        // ordered so that kld(f, g) and kld(g, f) agree bit for bit
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        total += (hi - lo) * (hi / lo).ln();
    }
    Ok(total.max(0.0))
}

/// Divergences of one forecast curve against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDivergence {
    pub jsd: f64,
    pub kld: f64,
    pub per_point_jsd: Vec<f64>,
    pub per_point_kld: Vec<f64>,
}

/// Per-grid-point JSD and KLD between two parameter curves, averaged over
/// the grid.
pub fn curve_divergence(truth: &[GevParams], forecast: &[GevParams]) -> Result<CurveDivergence> {
    curve_divergence_with(truth, forecast, DEFAULT_K)
}

pub fn curve_divergence_with(
    truth: &[GevParams],
    forecast: &[GevParams],
    k: usize,
) -> Result<CurveDivergence> {
    if truth.len() != forecast.len() || truth.is_empty() {
        return Err(Error::arg(format!(
            "curve divergence needs equal nonempty grids ({} vs {})",
            truth.len(),
            forecast.len()
        )));
    }
    let mut per_point_jsd = Vec::with_capacity(truth.len());
    let mut per_point_kld = Vec::with_capacity(truth.len());
    for (j, (p, q)) in truth.iter().zip(forecast).enumerate() {
        let wrap = |e: Error| match e {
            Error::Domain(m) => Error::Domain(format!("grid point {j}: {m}")),
            Error::Argument(m) => Error::Argument(format!("grid point {j}: {m}")),
            other => other,
        };
        let (f, g) = make_density_grid(p, q, k).map_err(wrap)?;
        per_point_jsd.push(jsd(&f, &g).map_err(wrap)?);
        per_point_kld.push(kld(&f, &g).map_err(wrap)?);
    }
    let n = truth.len() as f64;
    Ok(CurveDivergence {
        jsd: per_point_jsd.iter().sum::<f64>() / n,
        kld: per_point_kld.iter().sum::<f64>() / n,
        per_point_jsd,
        per_point_kld,
    })
}

/// JSD between two curves treated as unnormalized densities on their index
/// grid. Both curves are shifted by their joint minimum minus a small margin
/// and scaled to unit sum. Used as the cross-validation score.
pub fn curve_jsd(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() || observed.len() < 3 {
        return Err(Error::arg(format!(
            "curve JSD needs equal lengths >= 3 ({} vs {})",
            observed.len(),
            predicted.len()
        )));
    }
    let all = observed.iter().chain(predicted);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::arg("curve JSD inputs must be finite"));
    }
    let range = hi - lo;
    if range == 0.0 {
        return Ok(0.0);
    }
    let base = lo - 1e-6 * range;
    let points: Vec<f64> = (0..observed.len()).map(|i| i as f64).collect();
    let shift = |c: &[f64]| c.iter().map(|v| v - base).collect::<Vec<_>>();
    let f = DensityGrid::from_weights(points.clone(), &shift(observed))?;
    let g = DensityGrid::from_weights(points, &shift(predicted))?;
    jsd(&f, &g)
}

/// Divergences of a sequence of forecast curves and their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub per_point_jsd: Vec<Vec<f64>>,
    pub per_point_kld: Vec<Vec<f64>>,
    pub per_sample_jsd: Vec<f64>,
    pub per_sample_kld: Vec<f64>,
    pub mean_jsd: f64,
    pub mean_kld: f64,
}

impl DivergenceReport {
    pub fn from_samples(samples: Vec<CurveDivergence>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::arg("divergence report needs at least one sample"));
        }
        let n = samples.len() as f64;
        let per_sample_jsd: Vec<f64> = samples.iter().map(|s| s.jsd).collect();
        let per_sample_kld: Vec<f64> = samples.iter().map(|s| s.kld).collect();
        Ok(Self {
            mean_jsd: per_sample_jsd.iter().sum::<f64>() / n,
            mean_kld: per_sample_kld.iter().sum::<f64>() / n,
            per_sample_jsd,
            per_sample_kld,
            per_point_jsd: samples.iter().map(|s| s.per_point_jsd.clone()).collect(),
            per_point_kld: samples.into_iter().map(|s| s.per_point_kld).collect(),
        })
    }
}
