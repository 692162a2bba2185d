//! Sieve-bootstrap prediction intervals for the one-step quantile curve.
//!
//! The VAR fitted to the yearly spline coefficients is the sieve: centered
//! residuals are resampled to regenerate coefficient paths, the VAR is refitted
//! on each path, and each refit produces one bootstrap forecast.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::var::{model_space, refit_like};
use crate::forecast::{GaevPanel, VarModel};
use crate::gaev::GaevDims;
use crate::ingest::FunctionalSeries;
use crate::par;

pub const MIN_REPLICATES: usize = 50;
pub const BURN_IN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Pointwise,
    Simultaneous,
}

impl BandKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BandKind::Pointwise => "pointwise",
            BandKind::Simultaneous => "simultaneous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBand {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub kind: BandKind,
    pub replicates: usize,
}

impl IntervalBand {
    pub fn contains(&self, curve: &[f64]) -> bool {
        curve.len() == self.lower.len()
            && curve
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(c, (l, u))| l <= c && c <= u)
    }

    /// Fraction of grid points where `curve` lies inside the band.
    pub fn pointwise_coverage(&self, curve: &[f64]) -> f64 {
        let inside = curve
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(c, (l, u))| l <= c && c <= u)
            .count();
        inside as f64 / self.lower.len().max(1) as f64
    }
}

fn check_ensemble(curves: &[Vec<f64>], level: f64) -> Result<usize> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::arg(format!("level must lie in (0, 1), got {level}")));
    }
    if curves.len() < MIN_REPLICATES {
        return Err(Error::arg(format!(
            "at least {MIN_REPLICATES} bootstrap curves are required, got {}",
            curves.len()
        )));
    }
    let j = curves[0].len();
    if curves.iter().any(|c| c.len() != j) {
        return Err(Error::arg("bootstrap curves have different lengths"));
    }
    Ok(j)
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and nonempty.
pub fn type7_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn column(curves: &[Vec<f64>], j: usize) -> Vec<f64> {
    curves.iter().map(|c| c[j]).collect()
}

/// Per-point `(1 - level) / 2` and `(1 + level) / 2` empirical quantiles.
pub fn pointwise_interval(curves: &[Vec<f64>], grid: &[f64], level: f64) -> Result<IntervalBand> {
    let j = check_ensemble(curves, level)?;
    if grid.len() != j {
        return Err(Error::arg("grid length differs from curve length"));
    }
    let alpha = (1.0 - level) / 2.0;
    let (mut lower, mut upper) = (Vec::with_capacity(j), Vec::with_capacity(j));
    for k in 0..j {
        let mut col = column(curves, k);
        col.sort_by(f64::total_cmp);
        lower.push(type7_quantile(&col, alpha));
        upper.push(type7_quantile(&col, 1.0 - alpha));
    }
    Ok(IntervalBand {
        grid: grid.to_vec(),
        lower,
        upper,
        level,
        kind: BandKind::Pointwise,
        replicates: curves.len(),
    })
}

/// Band `m +- c s` around the pointwise mean `m` and standard deviation `s`,
/// with `c` the smallest multiplier that contains `ceil(level B)` curves.
/// Where a skewed ensemble puts a pointwise quantile outside `m +- c s`, the
/// band is widened to the pointwise interval at the same level.
pub fn simultaneous_band(curves: &[Vec<f64>], grid: &[f64], level: f64) -> Result<IntervalBand> {
    let j = check_ensemble(curves, level)?;
    if grid.len() != j {
        return Err(Error::arg("grid length differs from curve length"));
    }
    let pointwise = pointwise_interval(curves, grid, level)?;
    let b = curves.len();
    let mut mean = vec![0.0; j];
    let mut sd = vec![0.0; j];
    let mut min = vec![f64::INFINITY; j];
    let mut max = vec![f64::NEG_INFINITY; j];
    for k in 0..j {
        let col = column(curves, k);
        let m = col.iter().sum::<f64>() / b as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1) as f64;
        mean[k] = m;
        sd[k] = var.sqrt();
        min[k] = col.iter().copied().fold(f64::INFINITY, f64::min);
        max[k] = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    // points where every curve agrees carry no spread
    let flat: Vec<bool> = (0..j)
        .map(|k| max[k] - min[k] <= 1e-12 * (1.0 + mean[k].abs()))
        .collect();
    let mut sup: Vec<f64> = curves
        .iter()
        .map(|c| {
            (0..j)
                .filter(|&k| !flat[k])
                .map(|k| (c[k] - mean[k]).abs() / sd[k])
                .fold(0.0, f64::max)
        })
        .collect();
    sup.sort_by(f64::total_cmp);
    let need = (level * b as f64).ceil() as usize;
    // a relative nudge keeps the boundary curve inside after rounding
    let c = sup[need.clamp(1, b) - 1] * (1.0 + 1e-12);
    let (mut lower, mut upper) = (Vec::with_capacity(j), Vec::with_capacity(j));
    for k in 0..j {
        if flat[k] {
            lower.push(min[k]);
            upper.push(max[k]);
        } else {
            lower.push((mean[k] - c * sd[k]).min(pointwise.lower[k]));
            upper.push((mean[k] + c * sd[k]).max(pointwise.upper[k]));
        }
    }
    Ok(IntervalBand {
        grid: grid.to_vec(),
        lower,
        upper,
        level,
        kind: BandKind::Simultaneous,
        replicates: b,
    })
}

fn check_prob(prob: f64) -> Result<()> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::domain(format!(
            "quantile probability must lie in (0, 1), got {prob}"
        )));
    }
    Ok(())
}

/// Fit the fGAEVM panel to `series` and bootstrap `b` one-step quantile
/// curves at `prob`.
pub fn sieve_bootstrap_forecasts(
    series: &FunctionalSeries,
    dims: GaevDims,
    prob: f64,
    b: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_prob(prob)?;
    if b < MIN_REPLICATES {
        return Err(Error::arg(format!(
            "at least {MIN_REPLICATES} bootstrap replicates are required, got {b}"
        )));
    }
    let panel = GaevPanel::fit(series, dims)?;
    sieve_bootstrap_panel(&panel, series.len(), prob, b, seed)
}

/// Bootstrap from an already fitted panel using its first `n_years` years.
pub fn sieve_bootstrap_panel(
    panel: &GaevPanel,
    n_years: usize,
    prob: f64,
    b: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_prob(prob)?;
    if b < MIN_REPLICATES {
        return Err(Error::arg(format!(
            "at least {MIN_REPLICATES} bootstrap replicates are required, got {b}"
        )));
    }
    let model = panel.fit_var(n_years)?;
    let series = panel.coeffs.head(n_years);
    let data = model_space(&model, &series);
    let resid = centered_residuals(&model);
    let last_level = series.rows().last().cloned().unwrap_or_default();

    let results = par::map_range(b, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(par::derive_seed(seed, r as u64));
        let coeffs = replicate(&model, &data, &resid, &last_level, &mut rng)?;
        panel.density_from_coeffs(&coeffs, 1)?.quantile_curve(prob)
    });
    results.into_iter().collect()
}

fn centered_residuals(model: &VarModel) -> Vec<Vec<f64>> {
    let k = model.dim();
    let n = model.residuals.len().max(1) as f64;
    let mut mean = vec![0.0; k];
    for r in &model.residuals {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
    }
    model
        .residuals
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect()
}

fn draw<'a, R: Rng>(resid: &'a [Vec<f64>], rng: &mut R) -> &'a [f64] {
    &resid[rng.random_range(0..resid.len())]
}

/// One bootstrap coefficient vector in level space.
fn replicate<R: Rng>(
    model: &VarModel,
    data: &[Vec<f64>],
    resid: &[Vec<f64>],
    last_level: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = model.order;
    let t = data.len();
    let mut path: Vec<Vec<f64>> = data[..p].to_vec();
    while path.len() < t + BURN_IN {
        let mut next = model.predict_next(&path);
        next.iter_mut().zip(draw(resid, rng)).for_each(|(x, e)| *x += e);
        path.push(next);
    }
    let path = path.split_off(path.len() - t);
    let refit = refit_like(model, &path)?;
    let mut next = refit.predict_next(data);
    next.iter_mut().zip(draw(resid, rng)).for_each(|(x, e)| *x += e);
    if model.differenced {
        next.iter_mut().zip(last_level).for_each(|(x, l)| *x += l);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn normal_ensemble(b: usize, j: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        (0..b)
            .map(|_| (0..j).map(|k| k as f64 + (1.0 + k as f64 * 0.1) * n.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn type7_matches_hand_values() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(type7_quantile(&s, 0.0), 1.0);
        assert_eq!(type7_quantile(&s, 1.0), 4.0);
        assert!((type7_quantile(&s, 0.5) - 2.5).abs() < 1e-15);
        assert!((type7_quantile(&s, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn identical_curves_give_zero_width_bands() {
        let c = vec![vec![1.0, 2.5, -3.0]; 60];
        let g = [0.0, 1.0, 2.0];
        for band in [
            pointwise_interval(&c, &g, 0.95).unwrap(),
            simultaneous_band(&c, &g, 0.95).unwrap(),
        ] {
            assert_eq!(band.lower, c[0]);
            assert_eq!(band.upper, c[0]);
        }
    }

    #[test]
    fn argument_checks() {
        let c = normal_ensemble(60, 3, 1);
        let g = [0.0, 1.0, 2.0];
        assert!(pointwise_interval(&c, &g, 0.0).is_err());
        assert!(pointwise_interval(&c, &g, 1.0).is_err());
        assert!(simultaneous_band(&c[..10], &g, 0.95).is_err());
    }

    #[test]
    fn pointwise_matches_normal_quantiles() {
        let c = normal_ensemble(4000, 5, 2);
        let g: Vec<f64> = (0..5).map(f64::from).collect();
        let band = pointwise_interval(&c, &g, 0.9).unwrap();
        let z = 1.644_853_626_951_472_2;
        for k in 0..5 {
            let sd = 1.0 + k as f64 * 0.1;
            assert!((band.lower[k] - (k as f64 - z * sd)).abs() < 0.12);
            assert!((band.upper[k] - (k as f64 + z * sd)).abs() < 0.12);
        }
    }

    #[test]
    fn simultaneous_contains_required_count_and_pointwise() {
        for seed in 0..20 {
            let c = normal_ensemble(200, 30, seed);
            let g: Vec<f64> = (0..30).map(f64::from).collect();
            let sim = simultaneous_band(&c, &g, 0.95).unwrap();
            let pw = pointwise_interval(&c, &g, 0.95).unwrap();
            let inside = c.iter().filter(|x| sim.contains(x)).count();
            assert!(inside >= 190, "{inside}");
            for k in 0..30 {
                assert!(sim.lower[k] <= pw.lower[k] && pw.upper[k] <= sim.upper[k]);
            }
        }
    }
}
