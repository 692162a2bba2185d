//! Least-squares vector autoregression with AICC order selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::transform::Transform;
use crate::error::{Error, Result};

/// Multivariate series of latent parameters or basis coefficients, one row
/// per year, already mapped onto the real line by `transforms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffSeries {
    values: Vec<Vec<f64>>,
    labels: Vec<String>,
    transforms: Vec<Transform>,
}

impl CoeffSeries {
    pub fn new(values: Vec<Vec<f64>>, labels: Vec<String>, transforms: Vec<Transform>) -> Result<Self> {
        let k = labels.len();
        if transforms.len() != k {
            return Err(Error::arg("one transform per column is required"));
        }
        for (t, row) in values.iter().enumerate() {
            if row.len() != k {
                return Err(Error::arg(format!(
                    "row {t} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::arg(format!(
                    "non-finite value in row {t}, column `{}`",
                    labels[i]
                )));
            }
        }
        Ok(Self {
            values,
            labels,
            transforms,
        })
    }

    /// Untransformed columns with generated labels.
    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self> {
        let k = values.first().map_or(0, Vec::len);
        let labels = (0..k).map(|i| format!("c{i}")).collect();
        Self::new(values, labels, vec![Transform::Identity; k])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn head(&self, n: usize) -> CoeffSeries {
        CoeffSeries {
            values: self.values[..n.min(self.len())].to_vec(),
            labels: self.labels.clone(),
            transforms: self.transforms.clone(),
        }
    }

    /// Map a row from transformed space back to parameter space.
    pub fn back_transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        row.iter()
            .zip(&self.transforms)
            .map(|(v, t)| t.inverse(*v))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarOptions {
    pub max_order: usize,
    /// Fit on first differences and integrate the forecasts back.
    pub difference: bool,
}

impl Default for VarOptions {
    fn default() -> Self {
        Self {
            max_order: 5,
            difference: false,
        }
    }
}

/// Fitted VAR(p): `y_t = intercept + sum_l A_l y_{t-l} + e_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub order: usize,
    pub intercept: Vec<f64>,
    /// `coeff_mats[l][i][j]`: effect of lag `l + 1` of series `j` on series `i`.
    pub coeff_mats: Vec<Vec<Vec<f64>>>,
    pub residuals: Vec<Vec<f64>>,
    pub resid_cov: Vec<Vec<f64>>,
    /// Independent AR(1) per column because no VAR order was estimable.
    pub fallback: bool,
    pub differenced: bool,
    /// `(order, AICC)` for every feasible candidate order.
    pub aicc: Vec<(usize, f64)>,
}

impl VarModel {
    pub fn dim(&self) -> usize {
        self.intercept.len()
    }

    /// Conditional mean of the next row given `history` (oldest first) in the
    /// space the model was fitted in.
    pub fn predict_next(&self, history: &[Vec<f64>]) -> Vec<f64> {
        let k = self.dim();
        let mut out = self.intercept.clone();
        let n = history.len();
        for (l, a) in self.coeff_mats.iter().enumerate() {
            let past = &history[n - 1 - l];
            for i in 0..k {
                out[i] += a[i].iter().zip(past).map(|(c, v)| c * v).sum::<f64>();
            }
        }
        out
    }
}

/// Number of regression parameters of a VAR(p) in `k` series.
fn n_params(k: usize, p: usize) -> usize {
    k * (k * p + 1)
}

fn working_data(series: &CoeffSeries, difference: bool) -> Vec<Vec<f64>> {
    if difference {
        series
            .rows()
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
            .collect()
    } else {
        series.rows().to_vec()
    }
}

fn lstsq(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = smax * 1e-10 * (x.nrows().max(x.ncols()) as f64);
    svd.solve(y, eps.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Fit(format!("least squares failed: {e}")))
}

struct OrderFit {
    intercept: Vec<f64>,
    coeff_mats: Vec<Vec<Vec<f64>>>,
    residuals: Vec<Vec<f64>>,
}

fn fit_order(data: &[Vec<f64>], p: usize) -> Result<OrderFit> {
    let t = data.len();
    let k = data[0].len();
    let n = t - p;
    let cols = 1 + k * p;
    let mut x = DMatrix::zeros(n, cols);
    let mut y = DMatrix::zeros(n, k);
    for r in 0..n {
        let row = r + p;
        x[(r, 0)] = 1.0;
        for l in 0..p {
            for j in 0..k {
                x[(r, 1 + l * k + j)] = data[row - 1 - l][j];
            }
        }
        for i in 0..k {
            y[(r, i)] = data[row][i];
        }
    }
    let b = lstsq(&x, &y)?;
    let resid = &y - &x * &b;
    let intercept = (0..k).map(|i| b[(0, i)]).collect();
    let coeff_mats = (0..p)
        .map(|l| {
            (0..k)
                .map(|i| (0..k).map(|j| b[(1 + l * k + j, i)]).collect())
                .collect()
        })
        .collect();
    let residuals = (0..n).map(|r| resid.row(r).iter().copied().collect()).collect();
    Ok(OrderFit {
        intercept,
        coeff_mats,
        residuals,
    })
}

fn fit_independent_ar1(data: &[Vec<f64>]) -> Result<OrderFit> {
    let t = data.len();
    let k = data[0].len();
    let n = t - 1;
    let mut intercept = vec![0.0; k];
    let mut diag = vec![vec![0.0; k]; k];
    let mut residuals = vec![vec![0.0; k]; n];
    for i in 0..k {
        let x = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { data[r][i] });
        let y = DMatrix::from_fn(n, 1, |r, _| data[r + 1][i]);
        let b = lstsq(&x, &y)?;
        intercept[i] = b[(0, 0)];
        diag[i][i] = b[(1, 0)];
        for r in 0..n {
            residuals[r][i] = y[(r, 0)] - b[(0, 0)] - b[(1, 0)] * data[r][i];
        }
    }
    Ok(OrderFit {
        intercept,
        coeff_mats: vec![diag],
        residuals,
    })
}

fn covariance(residuals: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = residuals.len().max(1) as f64;
    let mut cov = vec![vec![0.0; k]; k];
    for r in residuals {
        for i in 0..k {
            for j in 0..k {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    cov.iter_mut()
        .for_each(|row| row.iter_mut().for_each(|v| *v /= n));
    cov
}

/// `n ln det(Sigma) + 2 P n / (n - P - 1)`. A ridge of `1e-12` times the
/// average data variance keeps the determinant positive for exact fits.
fn aicc(cov: &[Vec<f64>], n: usize, p_total: usize, ridge: f64) -> f64 {
    let k = cov.len();
    let m = DMatrix::from_fn(k, k, |i, j| cov[i][j] + if i == j { ridge } else { 0.0 });
    let det = m.determinant().max(f64::MIN_POSITIVE);
    let n_f = n as f64;
    let p_f = p_total as f64;
    n_f * det.ln() + 2.0 * p_f * n_f / (n_f - p_f - 1.0)
}

fn data_ridge(data: &[Vec<f64>]) -> f64 {
    let k = data[0].len();
    let n = data.len() as f64;
    let mut total = 0.0;
    for i in 0..k {
        let mean = data.iter().map(|r| r[i]).sum::<f64>() / n;
        total += data.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / n;
    }
    (1e-12 * total / k as f64).max(1e-300)
}

/// Fit with the default options and the given maximum order.
pub fn fit_var(series: &CoeffSeries, max_order: usize) -> Result<VarModel> {
    fit_var_with(
        series,
        &VarOptions {
            max_order,
            ..VarOptions::default()
        },
    )
}

/// Fit VAR(p) for each estimable `p <= max_order` and keep the AICC minimizer
/// (smaller order on ties). Falls back to independent AR(1) fits when not even
/// VAR(1) is estimable.
pub fn fit_var_with(series: &CoeffSeries, opts: &VarOptions) -> Result<VarModel> {
    if series.len() < 4 {
        return Err(Error::arg(format!(
            "VAR fitting needs at least 4 observations, got {}",
            series.len()
        )));
    }
    if series.dim() == 0 {
        return Err(Error::arg("VAR fitting needs at least one series"));
    }
    if opts.max_order == 0 {
        return Err(Error::arg("VAR max_order must be at least 1"));
    }
    let data = working_data(series, opts.difference);
    let k = series.dim();
    let t = data.len();
    let ridge = data_ridge(&data);

    let mut best: Option<(usize, f64, OrderFit)> = None;
    let mut table = Vec::new();
    for p in 1..=opts.max_order {
        if p >= t {
            break;
        }
        let n = t - p;
        let p_total = n_params(k, p);
        if n <= p_total + 1 {
            continue;
        }
        let fit = fit_order(&data, p)?;
        let score = aicc(&covariance(&fit.residuals, k), n, p_total, ridge);
        table.push((p, score));
        if best.as_ref().is_none_or(|(_, s, _)| score < *s) {
            best = Some((p, score, fit));
        }
    }

    let (order, fit, fallback) = match best {
        Some((p, _, fit)) => (p, fit, false),
        None => {
            if t < 3 {
                return Err(Error::arg(
                    "too few observations for an AR(1) fit after differencing",
                ));
            }
            (1, fit_independent_ar1(&data)?, true)
        }
    };
    Ok(VarModel {
        order,
        resid_cov: covariance(&fit.residuals, k),
        intercept: fit.intercept,
        coeff_mats: fit.coeff_mats,
        residuals: fit.residuals,
        fallback,
        differenced: opts.difference,
        aicc: table,
    })
}

/// Refit a model of the same order and kind on new data (used by the sieve
/// bootstrap). `data` is in the model's working space.
pub(crate) fn refit_like(model: &VarModel, data: &[Vec<f64>]) -> Result<VarModel> {
    let k = model.dim();
    let fit = if model.fallback {
        fit_independent_ar1(data)?
    } else {
        fit_order(data, model.order)?
    };
    Ok(VarModel {
        order: model.order,
        resid_cov: covariance(&fit.residuals, k),
        intercept: fit.intercept,
        coeff_mats: fit.coeff_mats,
        residuals: fit.residuals,
        fallback: model.fallback,
        differenced: model.differenced,
        aicc: Vec::new(),
    })
}

/// Rows of `series` in the space the model works in (differenced or not).
pub(crate) fn model_space(model: &VarModel, series: &CoeffSeries) -> Vec<Vec<f64>> {
    working_data(series, model.differenced)
}

/// Iterated `h`-step conditional-mean forecasts, in the series' (transformed)
/// level space.
pub fn forecast_var(model: &VarModel, series: &CoeffSeries, h: usize) -> Result<Vec<Vec<f64>>> {
    if h == 0 {
        return Err(Error::arg("forecast horizon must be at least 1"));
    }
    if series.dim() != model.dim() {
        return Err(Error::arg(format!(
            "model has {} series, data has {}",
            model.dim(),
            series.dim()
        )));
    }
    let mut history = model_space(model, series);
    if history.len() < model.order {
        return Err(Error::arg("series shorter than the VAR order"));
    }
    let mut level = series.rows().last().cloned().unwrap_or_default();
    let mut out = Vec::with_capacity(h);
    for _ in 0..h {
        let next = model.predict_next(&history);
        if model.differenced {
            level.iter_mut().zip(&next).for_each(|(l, d)| *l += d);
            out.push(level.clone());
        } else {
            out.push(next.clone());
        }
        history.push(next);
    }
    Ok(out)
}

/// Fitted intercept and coefficient matrices as a column-stacked design,
/// mainly for diagnostics.
pub fn coefficient_matrix(model: &VarModel) -> DMatrix<f64> {
    let k = model.dim();
    let p = model.order;
    let mut b = DMatrix::zeros(1 + k * p, k);
    for i in 0..k {
        b[(0, i)] = model.intercept[i];
        for l in 0..p {
            for j in 0..k {
                b[(1 + l * k + j, i)] = model.coeff_mats[l][i][j];
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn noiseless_ar1_is_recovered_exactly() {
        let mut x = 4.0;
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let r = vec![x];
                x *= 0.5;
                r
            })
            .collect();
        let s = CoeffSeries::from_rows(rows).unwrap();
        let m = fit_var(&s, 3).unwrap();
        assert_eq!(m.order, 1);
        assert!(!m.fallback);
        assert!((m.coeff_mats[0][0][0] - 0.5).abs() < 1e-8);
        assert!(m.intercept[0].abs() < 1e-8);
    }

    #[test]
    fn noiseless_var1_recovers_coefficients() {
        let a = [[0.5, 0.2], [-0.3, 0.4]];
        let c = [1.0, -0.5];
        let mut y = [3.0, -2.0];
        let mut rows = Vec::new();
        for _ in 0..40 {
            rows.push(y.to_vec());
            y = [
                c[0] + a[0][0] * y[0] + a[0][1] * y[1],
                c[1] + a[1][0] * y[0] + a[1][1] * y[1],
            ];
        }
        // stop before the path collapses onto its fixed point
        let s = CoeffSeries::from_rows(rows[..12].to_vec()).unwrap();
        let m = fit_var(&s, 1).unwrap();
        for i in 0..2 {
            assert!((m.intercept[i] - c[i]).abs() < 1e-6);
            for (est, want) in m.coeff_mats[0][i].iter().zip(&a[i]) {
                assert!((est - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_series_forecasts_the_constant() {
        let s = CoeffSeries::from_rows(vec![vec![2.5, -1.0]; 20]).unwrap();
        let m = fit_var(&s, 3).unwrap();
        let f = forecast_var(&m, &s, 4).unwrap();
        for row in f {
            assert!((row[0] - 2.5).abs() < 1e-9);
            assert!((row[1] + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn residuals_have_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..3).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let m = fit_var(&CoeffSeries::from_rows(rows).unwrap(), 4).unwrap();
        for i in 0..3 {
            let mean: f64 = m.residuals.iter().map(|r| r[i]).sum::<f64>() / m.residuals.len() as f64;
            assert!(mean.abs() < 1e-8);
        }
    }

    #[test]
    fn forecast_examples() {
        // zero coefficients: the intercept repeats
        let m = VarModel {
            order: 1,
            intercept: vec![1.5, -2.0],
            coeff_mats: vec![vec![vec![0.0; 2]; 2]],
            residuals: vec![],
            resid_cov: vec![vec![0.0; 2]; 2],
            fallback: false,
            differenced: false,
            aicc: vec![],
        };
        let s = CoeffSeries::from_rows(vec![vec![9.0, 9.0]; 5]).unwrap();
        for row in forecast_var(&m, &s, 3).unwrap() {
            assert_eq!(row, vec![1.5, -2.0]);
        }
        // AR(1) with phi = 0.5 and last value 4
        let ar = VarModel {
            order: 1,
            intercept: vec![0.0],
            coeff_mats: vec![vec![vec![0.5]]],
            residuals: vec![],
            resid_cov: vec![vec![0.0]],
            fallback: false,
            differenced: false,
            aicc: vec![],
        };
        let s = CoeffSeries::from_rows(vec![vec![1.0], vec![4.0]]).unwrap();
        assert_eq!(forecast_var(&ar, &s, 1).unwrap(), vec![vec![2.0]]);
        assert!(forecast_var(&ar, &s, 0).is_err());
    }

    #[test]
    fn three_step_forecast_matches_hand_recursion() {
        let m = VarModel {
            order: 2,
            intercept: vec![0.1, -0.2],
            coeff_mats: vec![
                vec![vec![0.5, 0.1], vec![0.0, 0.3]],
                vec![vec![-0.2, 0.0], vec![0.1, 0.1]],
            ],
            residuals: vec![],
            resid_cov: vec![vec![0.0; 2]; 2],
            fallback: false,
            differenced: false,
            aicc: vec![],
        };
        let s = CoeffSeries::from_rows(vec![vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let f = forecast_var(&m, &s, 3).unwrap();
        // y3 = c + A1 y2 + A2 y1, worked by hand
        let y1 = [1.0, 2.0];
        let y2 = [3.0, -1.0];
        let step = |a: [f64; 2], b: [f64; 2]| {
            [
                0.1 + 0.5 * a[0] + 0.1 * a[1] - 0.2 * b[0],
                -0.2 + 0.3 * a[1] + 0.1 * b[0] + 0.1 * b[1],
            ]
        };
        let y3 = step(y2, y1);
        let y4 = step(y3, y2);
        let y5 = step(y4, y3);
        for (got, want) in f.iter().zip([y3, y4, y5]) {
            assert!((got[0] - want[0]).abs() < 1e-14);
            assert!((got[1] - want[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn forecast_is_linear_in_last_observation() {
        // intercept-free model: forecasts superpose
        let m = VarModel {
            order: 1,
            intercept: vec![0.0, 0.0],
            coeff_mats: vec![vec![vec![0.4, 0.2], vec![-0.1, 0.7]]],
            residuals: vec![],
            resid_cov: vec![vec![0.0; 2]; 2],
            fallback: false,
            differenced: false,
            aicc: vec![],
        };
        let f = |x: [f64; 2]| {
            let s = CoeffSeries::from_rows(vec![x.to_vec()]).unwrap();
            forecast_var(&m, &s, 2).unwrap()
        };
        let a = f([1.0, 2.0]);
        let b = f([-3.0, 0.5]);
        let ab = f([-2.0, 2.5]);
        for h in 0..2 {
            for i in 0..2 {
                assert!((ab[h][i] - a[h][i] - b[h][i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn aicc_prefers_true_order_for_var2_data() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let a1 = [[0.5, 0.1, 0.0], [0.0, 0.4, 0.1], [0.1, 0.0, 0.3]];
        let a2 = [[-0.5, 0.0, 0.0], [0.0, -0.45, 0.0], [0.0, 0.0, -0.5]];
        let mut hits = 0;
        for rep in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
            let mut rows = vec![vec![0.0; 3], vec![0.0; 3]];
            for t in 2..150 {
                let mut y = vec![0.0; 3];
                for i in 0..3 {
                    y[i] = normal.sample(&mut rng);
                    for j in 0..3 {
                        y[i] += a1[i][j] * rows[t - 1][j] + a2[i][j] * rows[t - 2][j];
                    }
                }
                rows.push(y);
            }
            let s = CoeffSeries::from_rows(rows[100..].to_vec()).unwrap();
            if fit_var(&s, 4).unwrap().order == 2 {
                hits += 1;
            }
        }
        assert!(hits > 50, "selected p=2 in {hits} of 100 replicates");
    }

    #[test]
    fn falls_back_to_independent_ar1_when_short() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..6).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let m = fit_var(&CoeffSeries::from_rows(rows.clone()).unwrap(), 5).unwrap();
        assert!(m.fallback);
        assert_eq!(m.order, 1);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert_eq!(m.coeff_mats[0][i][j], 0.0);
                }
            }
        }
        assert!(fit_var(&CoeffSeries::from_rows(rows[..3].to_vec()).unwrap(), 1).is_err());
    }

    #[test]
    fn differenced_fit_integrates_back() {
        // a linear trend differences to a constant
        let rows: Vec<Vec<f64>> = (0..20).map(|t| vec![2.0 + 0.5 * t as f64]).collect();
        let s = CoeffSeries::from_rows(rows).unwrap();
        let m = fit_var_with(
            &s,
            &VarOptions {
                max_order: 2,
                difference: true,
            },
        )
        .unwrap();
        let f = forecast_var(&m, &s, 2).unwrap();
        assert!((f[0][0] - 12.0).abs() < 1e-9);
        assert!((f[1][0] - 12.5).abs() < 1e-9);
    }
}
