//! Forecasting the latent GEV parameters of the next curve.
//!
//! * fGEV: a scalar GEV per year, VAR on `(mu, ln sigma, xi)`.
//! * fGAEVM: a spline-GEV per year, VAR on the stacked basis coefficients.
//! * tsGAEVM: a spline-GEV on the last curve only, extrapolated forward.

pub mod transform;
pub mod var;

use serde::{Deserialize, Serialize};

pub use transform::{boxcox, inv_boxcox, Transform};
pub use var::{fit_var, fit_var_with, forecast_var, CoeffSeries, VarModel, VarOptions};

use crate::error::{Error, Result};
use crate::gaev::{fit_gaev_with, GaevBases, GaevDims, GaevFit};
use crate::gev::{fit_penalized, XI_PENALTY, GevFitResult, GevParams, XI_REGULAR_MIN};
use crate::ingest::FunctionalSeries;
use crate::par;

/// Largest share of unusable yearly fits tolerated before giving up.
pub const MAX_DEGENERATE_SHARE: f64 = 0.2;

/// Predicted GEV parameters at each grid point of a future curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDensity {
    pub horizon: usize,
    pub grid: Vec<f64>,
    pub params: Vec<GevParams>,
}

impl ForecastDensity {
    pub fn new(horizon: usize, grid: Vec<f64>, params: Vec<GevParams>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::arg("forecast horizon must be at least 1"));
        }
        if grid.len() != params.len() {
            return Err(Error::arg(format!(
                "{} grid points for {} parameter sets",
                grid.len(),
                params.len()
            )));
        }
        Ok(Self {
            horizon,
            grid,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn quantile_curve(&self, prob: f64) -> Result<Vec<f64>> {
        quantile_curve(self, prob)
    }
}

/// Pointwise quantile of a forecast density.
pub fn quantile_curve(fd: &ForecastDensity, prob: f64) -> Result<Vec<f64>> {
    fd.params
        .iter()
        .enumerate()
        .map(|(j, p)| {
            p.quantile(prob).map_err(|e| match e {
                Error::Domain(msg) => Error::Domain(format!("tau index {j}: {msg}")),
                other => other,
            })
        })
        .collect()
}

/// Replace unusable fits by the previous usable one (the first usable one for
/// a leading run). Errors when more than [`MAX_DEGENERATE_SHARE`] failed.
fn carry_forward<T: Clone>(fits: Vec<Option<T>>, what: &str) -> Result<(Vec<T>, Vec<usize>)> {
    let failed: Vec<usize> = (0..fits.len()).filter(|&t| fits[t].is_none()).collect();
    if failed.len() as f64 > MAX_DEGENERATE_SHARE * fits.len() as f64 {
        return Err(Error::Degenerate(format!(
            "{} of {} yearly {what} fits are degenerate",
            failed.len(),
            fits.len()
        )));
    }
    let first = fits
        .iter()
        .flatten()
        .next()
        .cloned()
        .ok_or_else(|| Error::Degenerate(format!("no usable yearly {what} fit")))?;
    let mut last = first;
    let out = fits
        .into_iter()
        .map(|f| {
            if let Some(f) = f {
                last = f;
            }
            last.clone()
        })
        .collect();
    Ok((out, failed))
}

/// Yearly scalar GEV fits and their transformed parameter series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgevPanel {
    pub grid: Vec<f64>,
    pub fits: Vec<GevFitResult>,
    /// Years whose fit was replaced by the previous year's.
    pub degenerate: Vec<usize>,
    pub theta: CoeffSeries,
    pub var_options: VarOptions,
}

impl FgevPanel {
    pub fn fit(series: &FunctionalSeries) -> Result<Self> {
        Self::fit_with(series, VarOptions::default())
    }

    pub fn fit_with(series: &FunctionalSeries, var_options: VarOptions) -> Result<Self> {
        if series.len() < 4 {
            return Err(Error::arg(format!(
                "fGEV needs at least 4 curves, got {}",
                series.len()
            )));
        }
        let raw = par::map_range(series.len(), |t| {
            fit_penalized(series.curve(t), None, XI_PENALTY)
                .ok()
                .filter(|f| f.log_likelihood.is_finite() && f.params.xi() >= XI_REGULAR_MIN)
        });
        let (fits, degenerate) = carry_forward(raw, "GEV")?;
        let transforms = vec![Transform::Identity, Transform::Log, Transform::Identity];
        let rows = fits
            .iter()
            .map(|f| {
                let p = f.params;
                Ok(vec![
                    transforms[0].forward(p.mu())?,
                    transforms[1].forward(p.sigma())?,
                    transforms[2].forward(p.xi())?,
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        let theta = CoeffSeries::new(
            rows,
            vec!["mu".into(), "log_sigma".into(), "xi".into()],
            transforms,
        )?;
        Ok(Self {
            grid: series.grid.clone(),
            fits,
            degenerate,
            theta,
            var_options,
        })
    }

    pub fn fit_var(&self, n_years: usize) -> Result<VarModel> {
        check_years(n_years, self.theta.len())?;
        fit_var_with(&self.theta.head(n_years), &self.var_options)
    }

    /// `h`-step forecast from the first `n_years` fits.
    pub fn forecast(&self, n_years: usize, h: usize) -> Result<ForecastDensity> {
        let model = self.fit_var(n_years)?;
        let head = self.theta.head(n_years);
        let path = forecast_var(&model, &head, h)?;
        let back = head.back_transform(&path[h - 1])?;
        let p = GevParams::new(back[0], back[1], back[2])?;
        ForecastDensity::new(h, self.grid.clone(), vec![p; self.grid.len()])
    }
}

fn check_years(n_years: usize, available: usize) -> Result<()> {
    if n_years > available {
        return Err(Error::arg(format!(
            "asked for {n_years} years but only {available} are fitted"
        )));
    }
    Ok(())
}

/// fGEV forecast `h` years past the end of `series`.
pub fn forecast_fgev(series: &FunctionalSeries, h: usize) -> Result<ForecastDensity> {
    if series.len() < 10 {
        return Err(Error::arg(format!(
            "fGEV needs at least 10 curves, got {}",
            series.len()
        )));
    }
    FgevPanel::fit(series)?.forecast(series.len(), h)
}

/// Yearly spline-GEV fits on shared bases and their coefficient series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaevPanel {
    pub dims: GaevDims,
    pub grid: Vec<f64>,
    pub bases: GaevBases,
    pub fits: Vec<GaevFit>,
    pub degenerate: Vec<usize>,
    pub coeffs: CoeffSeries,
    pub var_options: VarOptions,
}

impl GaevPanel {
    pub fn fit(series: &FunctionalSeries, dims: GaevDims) -> Result<Self> {
        Self::fit_with(series, dims, VarOptions::default())
    }

    pub fn fit_with(series: &FunctionalSeries, dims: GaevDims, var_options: VarOptions) -> Result<Self> {
        if series.len() < 4 {
            return Err(Error::arg(format!(
                "fGAEVM needs at least 4 curves, got {}",
                series.len()
            )));
        }
        let bases = GaevBases::new(&series.grid, dims)?;
        // probe shape errors once rather than per year
        if series.grid_len() < dims.n_coeffs() + 5 {
            return Err(Error::arg(format!(
                "GAEV with dims {dims} needs at least {} grid points, got {}",
                dims.n_coeffs() + 5,
                series.grid_len()
            )));
        }
        let raw = par::map_range(series.len(), |t| {
            fit_gaev_with(series.curve(t), &series.grid, &bases, None)
                .ok()
                .filter(|f| f.log_likelihood.is_finite())
        });
        let (fits, degenerate) = carry_forward(raw, "GAEV")?;
        let rows = fits.iter().map(GaevFit::coefficients).collect();
        let coeffs = CoeffSeries::new(
            rows,
            bases.labels(),
            vec![Transform::Identity; dims.n_coeffs()],
        )?;
        Ok(Self {
            dims,
            grid: series.grid.clone(),
            bases,
            fits,
            degenerate,
            coeffs,
            var_options,
        })
    }

    /// Forecast density implied by one stacked coefficient vector.
    pub fn density_from_coeffs(&self, coeffs: &[f64], horizon: usize) -> Result<ForecastDensity> {
        let [mu, sigma, xi] = self.bases.curves(coeffs)?;
        let fit = GaevFit {
            mu_curve: mu,
            log_sigma_curve: sigma,
            xi_curve: xi,
            log_likelihood: f64::NAN,
            converged: true,
        };
        ForecastDensity::new(horizon, self.grid.clone(), fit.params_at(&self.grid)?)
    }

    pub fn fit_var(&self, n_years: usize) -> Result<VarModel> {
        check_years(n_years, self.coeffs.len())?;
        fit_var_with(&self.coeffs.head(n_years), &self.var_options)
    }

    /// `h`-step forecast from the first `n_years` fits.
    pub fn forecast(&self, n_years: usize, h: usize) -> Result<ForecastDensity> {
        let model = self.fit_var(n_years)?;
        let path = forecast_var(&model, &self.coeffs.head(n_years), h)?;
        self.density_from_coeffs(&path[h - 1], h)
    }
}

/// fGAEVM forecast `h` years past the end of `series`.
pub fn forecast_fgaevm(series: &FunctionalSeries, dims: GaevDims, h: usize) -> Result<ForecastDensity> {
    if series.len() < 10 {
        return Err(Error::arg(format!(
            "fGAEVM needs at least 10 curves, got {}",
            series.len()
        )));
    }
    GaevPanel::fit(series, dims)?.forecast(series.len(), h)
}

/// Within-curve positions `j / J`, `j = 1..J`.
pub fn position_grid(j: usize) -> Vec<f64> {
    (1..=j).map(|i| i as f64 / j as f64).collect()
}

/// tsGAEVM: fit the last curve against its position `s = j / J` and forecast
/// the next `steps` days at `s = 1 + k / J` by continuing each parameter
/// function linearly past `s = 1`.
pub fn forecast_tsgaevm(
    last_curve: &[f64],
    grid: &[f64],
    dims: GaevDims,
    steps: usize,
) -> Result<ForecastDensity> {
    let j = last_curve.len();
    if grid.len() != j {
        return Err(Error::arg(format!(
            "curve has {j} values for a grid of {} points",
            grid.len()
        )));
    }
    if steps == 0 || steps > j {
        return Err(Error::arg(format!(
            "tsGAEVM steps must lie in [1, {j}], got {steps}"
        )));
    }
    let s = position_grid(j);
    let bases = GaevBases::new(&s, dims)?;
    let fit = fit_gaev_with(last_curve, &s, &bases, None)?;
    let ahead: Vec<f64> = (1..=steps).map(|k| 1.0 + k as f64 / j as f64).collect();
    ForecastDensity::new(steps, grid[..steps].to_vec(), fit.params_extrapolated(&ahead)?)
}
