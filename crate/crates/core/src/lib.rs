//! Forecasting functional time series of extremes.
//!
//! Annual curves of block maxima are modelled as GEV distributions whose
//! parameters are either scalars per year or spline functions of the
//! within-year position. The yearly parameters (or spline coefficients) are
//! forecast with a vector autoregression, giving a forecast GEV density at
//! every point of the next curve. Sieve-bootstrap bands, density divergences
//! and a simulation harness complete the toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod error;
pub mod forecast;
pub mod gaev;
pub mod gev;
pub mod ingest;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod persist;
pub mod simulate;
pub mod splines;

pub use bootstrap::{BandKind, IntervalBand};
pub use error::{Error, Result};
pub use forecast::{CoeffSeries, ForecastDensity, VarModel};
pub use gaev::{GaevDims, GaevFit};
pub use gev::{GevFitResult, GevParams};
pub use ingest::FunctionalSeries;
pub use metrics::{DensityGrid, DivergenceReport};
pub use splines::{ParamCurve, SplineBasis};
