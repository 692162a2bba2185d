//! Synthetic functional GEV series and the expanding-window forecast
//! comparison run on them.

use std::f64::consts::PI;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{forecast_tsgaevm, FgevPanel, ForecastDensity, GaevPanel, VarOptions};
use crate::gaev::{coarse_lattice, holdout_score, select_from_scores, GaevDims};
use crate::gev::GevParams;
use crate::ingest::{FunctionalSeries, Observation};
use crate::metrics::{curve_divergence, CurveDivergence, DivergenceReport};
use crate::par;
use crate::splines::{uniform_grid, SplineBasis, MAX_DIM, MIN_DIM};

/// Largest share of failed windows before a method's evaluation errors.
pub const MAX_FAILED_WINDOWS: f64 = 0.3;

/// Data-generating process of one simulated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    /// 1: scalar parameters; 2: functional location and scale; 3: all
    /// three functional.
    pub setting: u8,
    pub t: usize,
    pub j: usize,
    /// Basis dimension of the functional parameters.
    pub d: usize,
    pub ar_bounds: (f64, f64),
    pub innovation_sd: f64,
    pub xi_clamp: (f64, f64),
    /// Means of the non-intercept spline coefficients are drawn once per
    /// series from `U(-r, r)`, giving each series a persistent shape.
    pub coef_mean_range: f64,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            setting: 1,
            t: 50,
            j: 30,
            d: 5,
            ar_bounds: (-0.8, 0.8),
            innovation_sd: 0.3,
            xi_clamp: (-0.4, 0.4),
            coef_mean_range: 2.0,
            seed: 0,
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.setting) {
            return Err(Error::arg(format!("setting must be 1, 2 or 3, got {}", self.setting)));
        }
        if self.t < 2 || self.j < 2 {
            return Err(Error::arg("need at least two years and two grid points"));
        }
        if !(MIN_DIM..=MAX_DIM).contains(&self.d) {
            return Err(Error::arg(format!(
                "true dimension must lie in [{MIN_DIM}, {MAX_DIM}], got {}",
                self.d
            )));
        }
        let (a, b) = self.ar_bounds;
        if !(a.abs() < 1.0 && b.abs() < 1.0 && a <= b) {
            return Err(Error::arg(format!("AR bounds ({a}, {b}) must lie inside (-1, 1)")));
        }
        let (lo, hi) = self.xi_clamp;
        if !(lo > -0.5 && hi < 0.5 && lo < hi) {
            return Err(Error::arg(format!(
                "shape clamp ({lo}, {hi}) must lie inside (-0.5, 0.5)"
            )));
        }
        if !(self.innovation_sd >= 0.0 && self.innovation_sd.is_finite()) {
            return Err(Error::arg("innovation sd must be finite and non-negative"));
        }
        if !(self.coef_mean_range >= 0.0 && self.coef_mean_range.is_finite()) {
            return Err(Error::arg("coefficient mean range must be finite and non-negative"));
        }
        Ok(())
    }

    /// Grid `tau_j = (j - 1) / (J - 1)`.
    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(0.0, 1.0, self.j)
    }
}

/// A generated series with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub spec: DgpSpec,
    pub series: FunctionalSeries,
    /// `params[t][j]`: GEV parameters of year `t` at grid point `j`.
    pub params: Vec<Vec<GevParams>>,
    /// AR coefficient of every latent process, in the order location,
    /// log-scale, shape (intercept first within each block).
    pub ar_coeffs: Vec<f64>,
    /// Stationary mean of every latent process, same order.
    pub latent_means: Vec<f64>,
    /// `latent[t]`: value of every latent process in year `t`, same order.
    pub latent: Vec<Vec<f64>>,
}

impl SimTruth {
    /// Parameters implied by a vector of latent values (before clamping
    /// the shape), as used to draw each year.
    pub fn params_from_latent(&self, latent: &[f64]) -> Result<Vec<GevParams>> {
        let spec = &self.spec;
        let grid = spec.grid();
        let basis = SplineBasis::new((0.0, 1.0), spec.d, &grid)?;
        let m = basis.eval(&grid)?;
        let sizes = block_sizes(spec);
        if latent.len() != sizes.iter().sum::<usize>() {
            return Err(Error::arg("latent vector has the wrong length"));
        }
        let mut curves = Vec::new();
        let mut offset = 0;
        for size in sizes {
            let block = &latent[offset..offset + size];
            offset += size;
            curves.push(
                (0..spec.j)
                    .map(|j| {
                        block[0]
                            + (1..size).map(|i| block[i] * m[(j, i - 1)]).sum::<f64>()
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        let (lo, hi) = spec.xi_clamp;
        (0..spec.j)
            .map(|j| GevParams::new(curves[0][j], curves[1][j].exp(), curves[2][j].clamp(lo, hi)))
            .collect()
    }
}

/// Latent processes per parameter block.
fn block_sizes(spec: &DgpSpec) -> [usize; 3] {
    let f = spec.d + 1;
    match spec.setting {
        1 => [1, 1, 1],
        2 => [f, f, 1],
        _ => [f, f, f],
    }
}

/// Stationary AR(1) path around `mean`.
fn ar1_path<R: Rng>(rng: &mut R, t: usize, phi: f64, mean: f64, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = mean + sd / (1.0 - phi * phi).sqrt() * normal.sample(rng);
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        out.push(x);
        x = mean + phi * (x - mean) + sd * normal.sample(rng);
    }
    out
}

struct Latent {
    /// `paths[i][t]`
    paths: Vec<Vec<f64>>,
    phis: Vec<f64>,
    means: Vec<f64>,
}

fn latent_block<R: Rng>(rng: &mut R, spec: &DgpSpec, means: &[f64]) -> Latent {
    let ar = Uniform::new_inclusive(spec.ar_bounds.0, spec.ar_bounds.1).expect("ordered bounds");
    let mut paths = Vec::new();
    let mut phis = Vec::new();
    for &m in means {
        let phi = ar.sample(rng);
        paths.push(ar1_path(rng, spec.t, phi, m, spec.innovation_sd));
        phis.push(phi);
    }
    Latent {
        paths,
        phis,
        means: means.to_vec(),
    }
}

fn coef_means<R: Rng>(rng: &mut R, spec: &DgpSpec, intercept: f64) -> Vec<f64> {
    let mut out = vec![intercept];
    for _ in 0..spec.d {
        out.push(if spec.coef_mean_range > 0.0 {
            rng.random_range(-spec.coef_mean_range..=spec.coef_mean_range)
        } else {
            0.0
        });
    }
    out
}

/// Values of `intercept + sum_i beta_i b_i(tau)` per year.
fn functional(latent: &Latent, basis_rows: &[Vec<f64>], t: usize) -> Vec<f64> {
    basis_rows
        .iter()
        .map(|row| {
            latent.paths[0][t]
                + row
                    .iter()
                    .enumerate()
                    .map(|(i, b)| b * latent.paths[i + 1][t])
                    .sum::<f64>()
        })
        .collect()
}

/// Generate a series under `spec`; identical specs give identical output.
pub fn generate(spec: &DgpSpec) -> Result<SimTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let grid = spec.grid();
    let basis = SplineBasis::new((0.0, 1.0), spec.d, &grid)?;
    let m = basis.eval(&grid)?;
    let rows: Vec<Vec<f64>> = (0..spec.j).map(|j| m.row(j).iter().copied().collect()).collect();
    let (xlo, xhi) = spec.xi_clamp;

    let (mu, ls, xi) = match spec.setting {
        1 => (
            latent_block(&mut rng, spec, &[0.0]),
            latent_block(&mut rng, spec, &[0.0]),
            latent_block(&mut rng, spec, &[0.1]),
        ),
        2 => {
            let mm = coef_means(&mut rng, spec, 0.0);
            let sm = coef_means(&mut rng, spec, 0.0);
            (
                latent_block(&mut rng, spec, &mm),
                latent_block(&mut rng, spec, &sm),
                latent_block(&mut rng, spec, &[0.1]),
            )
        }
        _ => {
            let mm = coef_means(&mut rng, spec, 0.0);
            let sm = coef_means(&mut rng, spec, 0.0);
            let xm = coef_means(&mut rng, spec, 0.1);
            (
                latent_block(&mut rng, spec, &mm),
                latent_block(&mut rng, spec, &sm),
                latent_block(&mut rng, spec, &xm),
            )
        }
    };

    let curve_of = |l: &Latent, t: usize| -> Vec<f64> {
        if l.paths.len() == 1 {
            vec![l.paths[0][t]; spec.j]
        } else {
            functional(l, &rows, t)
        }
    };

    let mut params = Vec::with_capacity(spec.t);
    let mut values = Vec::with_capacity(spec.t);
    for t in 0..spec.t {
        let mus = curve_of(&mu, t);
        let lss = curve_of(&ls, t);
        let xis = curve_of(&xi, t);
        let year: Vec<GevParams> = (0..spec.j)
            .map(|j| GevParams::new(mus[j], lss[j].exp(), xis[j].clamp(xlo, xhi)))
            .collect::<Result<_>>()?;
        values.push(year.iter().map(|p| p.sample(&mut rng)).collect());
        params.push(year);
    }
    let latent = (0..spec.t)
        .map(|t| {
            [&mu, &ls, &xi]
                .iter()
                .flat_map(|l| l.paths.iter().map(move |p| p[t]))
                .collect()
        })
        .collect();
    let latent_means = [mu.means, ls.means, xi.means].concat();
    let ar_coeffs = [mu.phis, ls.phis, xi.phis].concat();
    let series = FunctionalSeries::new((1..=spec.t as i32).collect(), grid, values)?;
    Ok(SimTruth {
        spec: *spec,
        series,
        params,
        ar_coeffs,
        latent_means,
        latent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Forecaster {
    Fgev,
    Tsgaevm,
    Fgaevm,
    /// Returns the true parameters; a zero-divergence reference.
    Oracle,
}

impl Forecaster {
    pub const COMPETITORS: [Forecaster; 3] = [Forecaster::Fgev, Forecaster::Tsgaevm, Forecaster::Fgaevm];

    pub fn name(&self) -> &'static str {
        match self {
            Forecaster::Fgev => "fgev",
            Forecaster::Tsgaevm => "tsgaevm",
            Forecaster::Fgaevm => "fgaevm",
            Forecaster::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Forecaster {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fgev" => Ok(Forecaster::Fgev),
            "tsgaevm" => Ok(Forecaster::Tsgaevm),
            "fgaevm" => Ok(Forecaster::Fgaevm),
            "oracle" => Ok(Forecaster::Oracle),
            other => Err(Error::arg(format!("unknown method `{other}`"))),
        }
    }
}

/// Options of the expanding-window comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub test_fraction: f64,
    /// Candidates for the per-window cross-validation of the spline methods.
    pub candidates: Vec<GaevDims>,
    /// Skip cross-validation and use these dimensions.
    pub fixed_dims: Option<GaevDims>,
    pub var_options: VarOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            candidates: coarse_lattice(0),
            fixed_dims: None,
            var_options: VarOptions::default(),
        }
    }
}

/// One forecaster's scores over the test windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEval {
    pub method: Forecaster,
    pub report: DivergenceReport,
    /// Test-window indices whose forecast failed, with the reason.
    pub failures: Vec<(usize, String)>,
    /// Dimensions used in each window (spline methods only).
    pub dims: Vec<Option<GaevDims>>,
}

/// Index of the first test curve for `n` curves.
pub fn first_test_index(t: usize, test_fraction: f64) -> Result<usize> {
    if !(test_fraction > 0.0 && test_fraction < 0.5) {
        return Err(Error::arg(format!(
            "test fraction must lie in (0, 0.5), got {test_fraction}"
        )));
    }
    let n = (test_fraction * t as f64).ceil() as usize;
    if n == 0 || n >= t {
        return Err(Error::arg("test fraction leaves no training or test curves"));
    }
    Ok(t - n)
}

/// Expanding-window one-step forecasts of the last `ceil(test_fraction T)`
/// curves, scored against the true parameters.
pub fn expanding_window_eval(
    truth: &SimTruth,
    forecasters: &[Forecaster],
    cfg: &EvalConfig,
) -> Result<Vec<MethodEval>> {
    evaluate_methods(truth, forecasters, cfg)?.into_iter().collect()
}

/// Like [`expanding_window_eval`] but keeps per-method failures separate.
fn evaluate_methods(
    truth: &SimTruth,
    forecasters: &[Forecaster],
    cfg: &EvalConfig,
) -> Result<Vec<Result<MethodEval>>> {
    let t = truth.series.len();
    let start = first_test_index(t, cfg.test_fraction)?;
    let needs_gaev = forecasters
        .iter()
        .any(|f| matches!(f, Forecaster::Fgaevm | Forecaster::Tsgaevm));
    let needs_fgev = forecasters.contains(&Forecaster::Fgev);

    // yearly fits do not depend on the window, so fit once on all training years
    let train = truth.series.head(t - 1);
    let fgev = if needs_fgev {
        Some(FgevPanel::fit_with(&train, cfg.var_options))
    } else {
        None
    };
    let candidates: Vec<GaevDims> = match cfg.fixed_dims {
        Some(d) => vec![d],
        None => cfg.candidates.clone(),
    };
    if needs_gaev && candidates.is_empty() {
        return Err(Error::arg("empty candidate grid"));
    }
    let panels: Vec<(GaevDims, Result<GaevPanel>)> = if needs_gaev {
        par::map_slice(&candidates, |&d| (d, GaevPanel::fit_with(&train, d, cfg.var_options)))
    } else {
        Vec::new()
    };

    let windows: Vec<usize> = (start..t).collect();
    let dims_per_window: Vec<Result<GaevDims>> = windows
        .iter()
        .map(|&n| {
            if !needs_gaev {
                return Err(Error::arg("unused"));
            }
            if panels.len() == 1 {
                return panels[0].1.as_ref().map(|_| panels[0].0).map_err(Error::duplicate);
            }
            let scores: Vec<(GaevDims, Result<f64>)> = par::map_slice(&panels, |(d, p)| {
                let s = match p {
                    Ok(p) => holdout_score(p, &truth.series, n - 1),
                    Err(e) => Err(e.duplicate()),
                };
                (*d, s)
            });
            select_from_scores(&scores)
        })
        .collect();

    let mut out = Vec::new();
    for &method in forecasters {
        let per_window = par::map_slice(&windows, |&n| -> (Result<CurveDivergence>, Option<GaevDims>) {
            let w = n - start;
            let dims = dims_per_window[w].as_ref().ok().copied();
            let fd: Result<ForecastDensity> = match method {
                Forecaster::Oracle => {
                    ForecastDensity::new(1, truth.series.grid.clone(), truth.params[n].clone())
                }
                Forecaster::Fgev => match &fgev {
                    Some(Ok(p)) => p.forecast(n, 1),
                    Some(Err(e)) => Err(e.duplicate()),
                    None => unreachable!(),
                },
                Forecaster::Fgaevm => match &dims_per_window[w] {
                    Ok(d) => {
                        let (_, panel) = panels.iter().find(|(pd, _)| pd == d).expect("selected panel");
                        panel.as_ref().map_err(Error::duplicate).and_then(|p| p.forecast(n, 1))
                    }
                    Err(e) => Err(e.duplicate()),
                },
                Forecaster::Tsgaevm => match &dims_per_window[w] {
                    Ok(d) => forecast_tsgaevm(
                        truth.series.curve(n - 1),
                        &truth.series.grid,
                        *d,
                        truth.series.grid_len(),
                    ),
                    Err(e) => Err(e.duplicate()),
                },
            };
            let score = fd.and_then(|fd| curve_divergence(&truth.params[n], &fd.params));
            let dims = match method {
                Forecaster::Fgaevm | Forecaster::Tsgaevm => dims,
                _ => None,
            };
            (score, dims)
        });

        let mut samples = Vec::new();
        let mut failures = Vec::new();
        let mut dims = Vec::new();
        for (w, (score, d)) in per_window.into_iter().enumerate() {
            dims.push(d);
            match score {
                Ok(s) if s.jsd.is_finite() && s.kld.is_finite() => samples.push(s),
                Ok(_) => failures.push((w, "non-finite divergence".to_string())),
                Err(e) => failures.push((w, e.to_string())),
            }
        }
        if failures.len() as f64 > MAX_FAILED_WINDOWS * windows.len() as f64 || samples.is_empty() {
            out.push(Err(Error::Fit(format!(
                "{} failed on {} of {} windows; first: {}",
                method.name(),
                failures.len(),
                windows.len(),
                failures.first().map(|f| f.1.as_str()).unwrap_or("")
            ))));
            continue;
        }
        out.push(DivergenceReport::from_samples(samples).map(|report| MethodEval {
            method,
            report,
            failures,
            dims,
        }));
    }
    Ok(out)
}

/// One line of the Monte-Carlo summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: u8,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub reps: usize,
}

/// Scores of one replicate and method, or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepDetail {
    pub rep: usize,
    pub seed: u64,
    pub method: String,
    pub jsd: Option<f64>,
    pub kld: Option<f64>,
    pub failed_windows: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub summary: Vec<SummaryRow>,
    pub details: Vec<RepDetail>,
}

impl MonteCarloResult {
    pub fn row(&self, method: Forecaster, metric: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method.name() && r.metric == metric)
    }
}

/// `reps` replicates with seeds derived from `spec.seed`.
pub fn monte_carlo(
    spec: &DgpSpec,
    reps: usize,
    forecasters: &[Forecaster],
    cfg: &EvalConfig,
) -> Result<MonteCarloResult> {
    if reps < 2 {
        return Err(Error::arg(format!("Monte Carlo needs at least 2 replicates, got {reps}")));
    }
    let seeds: Vec<u64> = (0..reps as u64).map(|r| par::derive_seed(spec.seed, r)).collect();
    monte_carlo_with_seeds(spec, &seeds, forecasters, cfg)
}

/// Replicates with explicit per-replicate seeds.
pub fn monte_carlo_with_seeds(
    spec: &DgpSpec,
    seeds: &[u64],
    forecasters: &[Forecaster],
    cfg: &EvalConfig,
) -> Result<MonteCarloResult> {
    spec.validate()?;
    if seeds.len() < 2 {
        return Err(Error::arg("Monte Carlo needs at least 2 replicates"));
    }
    let runs = par::map_range(seeds.len(), |r| {
        let s = DgpSpec {
            seed: seeds[r],
            ..*spec
        };
        evaluate_methods(&generate(&s)?, forecasters, cfg)
    });

    let mut details = Vec::new();
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Err(e) => {
                for f in forecasters {
                    details.push(RepDetail {
                        rep: r,
                        seed: seeds[r],
                        method: f.name().into(),
                        jsd: None,
                        kld: None,
                        failed_windows: 0,
                        error: Some(e.to_string()),
                    });
                }
            }
            Ok(evals) => {
                for (f, ev) in forecasters.iter().zip(evals) {
                    details.push(match ev {
                        Ok(ev) => RepDetail {
                            rep: r,
                            seed: seeds[r],
                            method: f.name().into(),
                            jsd: Some(ev.report.mean_jsd),
                            kld: Some(ev.report.mean_kld),
                            failed_windows: ev.failures.len(),
                            error: None,
                        },
                        Err(e) => RepDetail {
                            rep: r,
                            seed: seeds[r],
                            method: f.name().into(),
                            jsd: None,
                            kld: None,
                            failed_windows: 0,
                            error: Some(e.to_string()),
                        },
                    });
                }
            }
        }
    }

    let mut summary = Vec::new();
    for f in forecasters {
        for metric in ["jsd", "kld"] {
            let vals: Vec<f64> = details
                .iter()
                .filter(|d| d.method == f.name())
                .filter_map(|d| if metric == "jsd" { d.jsd } else { d.kld })
                .collect();
            let (mean, sd) = mean_sd(&vals);
            summary.push(SummaryRow {
                setting: spec.setting,
                method: f.name().into(),
                metric: metric.into(),
                mean,
                sd,
                reps: vals.len(),
            });
        }
    }
    Ok(MonteCarloResult { summary, details })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Layout of the synthetic daily-maximum temperature record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            first_year: 1900,
            last_year: 2019,
            seed: 66062,
        }
    }
}

/// Year whose record loses ten consecutive days in winter.
pub const FIXTURE_LONG_GAP_YEAR: i32 = 1957;

/// Daily maxima with a seasonal GEV (warmest in mid-January), a persistent
/// annual anomaly, values rounded to 0.1 degree, a handful of short gaps, and
/// one ten-day gap in [`FIXTURE_LONG_GAP_YEAR`].
pub fn temperature_fixture(spec: &FixtureSpec) -> Result<Vec<Observation>> {
    if spec.first_year > spec.last_year {
        return Err(Error::arg("fixture year range is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut anomaly = 0.0;
    let mut out = Vec::new();
    for year in spec.first_year..=spec.last_year {
        anomaly = 0.6 * anomaly + 0.3 * normal.sample(&mut rng);
        let start = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
        let days = if start.leap_year() { 366 } else { 365 };
        // short gaps in a few years, kept clear of late February
        let short_gap = if rng.random_bool(0.06) {
            let len = rng.random_range(1..=3);
            let first = rng.random_range(70..(330 - len));
            Some((first, first + len))
        } else {
            None
        };
        let long_gap = (year == FIXTURE_LONG_GAP_YEAR).then_some((180, 190));
        for doy in 0..days {
            let u: f64 = rng.random();
            let in_gap = [short_gap, long_gap]
                .iter()
                .flatten()
                .any(|&(a, b)| (a..b).contains(&doy));
            if in_gap {
                continue;
            }
            let phase = 2.0 * PI * (doy as f64 + 1.0 - 15.0) / 365.25;
            let mu = 21.5 + 4.5 * phase.cos() + anomaly;
            let sigma = 2.2 + 0.6 * phase.cos();
            let p = GevParams::new(mu, sigma, -0.05)?;
            let x = p.quantile(u.clamp(1e-12, 1.0 - 1e-12))?;
            out.push(Observation {
                date: start + Duration::days(doy as i64),
                tmax: (x * 10.0).round() / 10.0,
            });
        }
    }
    Ok(out)
}
