//! Generalized extreme value distribution and its maximum-likelihood fit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{self, BfgsOptions, BARRIER};

/// Shapes with `|xi|` below this use the Gumbel formulas.
pub const GUMBEL_THRESHOLD: f64 = 1e-8;

/// Search box for the shape parameter during MLE.
pub const XI_BOUNDS: (f64, f64) = (-0.9, 5.0);

/// Below this shape the MLE is irregular; fits landing here are flagged.
pub const XI_REGULAR_MIN: f64 = -0.5;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Location `mu`, scale `sigma > 0` and shape `xi` of a GEV distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct GevParams {
    mu: f64,
    sigma: f64,
    xi: f64,
}

#[derive(Deserialize)]
struct RawParams {
    mu: f64,
    sigma: f64,
    xi: f64,
}

impl TryFrom<RawParams> for GevParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        GevParams::new(r.mu, r.sigma, r.xi)
    }
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(mu.is_finite() && xi.is_finite()) {
            return Err(Error::arg(format!(
                "GEV location and shape must be finite (mu={mu}, xi={xi})"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::arg(format!("GEV scale must be positive, got {sigma}")));
        }
        Ok(Self { mu, sigma, xi })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    fn is_gumbel(&self) -> bool {
        self.xi.abs() < GUMBEL_THRESHOLD
    }

    /// `true` iff `x` lies in the support, i.e. `1 + xi (x - mu) / sigma > 0`.
    pub fn in_support(&self, x: f64) -> bool {
        self.is_gumbel() || 1.0 + self.xi * (x - self.mu) / self.sigma > 0.0
    }

    /// Finite lower endpoint of the support (only when `xi > 0`).
    pub fn lower_endpoint(&self) -> Option<f64> {
        (!self.is_gumbel() && self.xi > 0.0).then(|| self.mu - self.sigma / self.xi)
    }

    /// Finite upper endpoint of the support (only when `xi < 0`).
    pub fn upper_endpoint(&self) -> Option<f64> {
        (!self.is_gumbel() && self.xi < 0.0).then(|| self.mu - self.sigma / self.xi)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        log_pdf(x, self.mu, self.sigma, self.xi)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        pdf(self, x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        cdf(self, x)
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        quantile(self, prob)
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                // u in (0, 1) is inside every branch's domain
                return quantile_unchecked(self.mu, self.sigma, self.xi, u);
            }
        }
    }
}

fn log_pdf(x: f64, mu: f64, sigma: f64, xi: f64) -> f64 {
    let z = (x - mu) / sigma;
    if xi.abs() < GUMBEL_THRESHOLD {
        return -sigma.ln() - z - (-z).exp();
    }
    let u = xi * z;
    if !(u > -1.0) {
        return f64::NEG_INFINITY;
    }
    // ln t with t = 1 + xi z
    let log_t = u.ln_1p();
    -sigma.ln() - (1.0 + 1.0 / xi) * log_t - (-log_t / xi).exp()
}

/// Density; zero off the support.
pub fn pdf(p: &GevParams, x: f64) -> f64 {
    log_pdf(x, p.mu, p.sigma, p.xi).exp()
}

pub fn cdf(p: &GevParams, x: f64) -> f64 {
    let z = (x - p.mu) / p.sigma;
    if p.is_gumbel() {
        return (-(-z).exp()).exp();
    }
    let u = p.xi * z;
    if !(u > -1.0) {
        return if p.xi > 0.0 { 0.0 } else { 1.0 };
    }
    (-(-u.ln_1p() / p.xi).exp()).exp()
}

fn quantile_unchecked(mu: f64, sigma: f64, xi: f64, prob: f64) -> f64 {
    // -ln p, accurate for p close to 1
    let neg_log_p = if prob > 0.5 {
        -(prob - 1.0).ln_1p()
    } else {
        -prob.ln()
    };
    if xi.abs() < GUMBEL_THRESHOLD {
        mu - sigma * neg_log_p.ln()
    } else if neg_log_p == 0.0 || neg_log_p.is_infinite() {
        // endpoints: (-ln p)^(-xi) is 0 here for the admissible branch
        mu - sigma / xi
    } else {
        mu + sigma * (-xi * neg_log_p.ln()).exp_m1() / xi
    }
}

/// Quantile function. Admissible probabilities depend on the shape branch:
/// `[0, 1)` for `xi > 0`, `(0, 1]` for `xi < 0` and `(0, 1)` for `xi = 0`.
pub fn quantile(p: &GevParams, prob: f64) -> Result<f64> {
    let ok = if p.is_gumbel() {
        prob > 0.0 && prob < 1.0
    } else if p.xi > 0.0 {
        (0.0..1.0).contains(&prob)
    } else {
        prob > 0.0 && prob <= 1.0
    };
    if !ok {
        let branch = if p.is_gumbel() {
            "xi = 0 requires prob in (0, 1)"
        } else if p.xi > 0.0 {
            "xi > 0 requires prob in [0, 1)"
        } else {
            "xi < 0 requires prob in (0, 1]"
        };
        return Err(Error::domain(format!(
            "quantile probability {prob} out of range: {branch}"
        )));
    }
    Ok(quantile_unchecked(p.mu, p.sigma, p.xi, prob))
}

/// GEV log-likelihood of an i.i.d. sample; `-inf` when any observation falls
/// outside the support.
pub fn log_likelihood(p: &GevParams, data: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::arg("log-likelihood of an empty sample"));
    }
    let mut total = 0.0;
    for &x in data {
        let l = p.log_pdf(x);
        if l == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += l;
    }
    Ok(total)
}

/// `((ln(1+u)/u) - 1/(1+u)) / u`, stable near `u = 0`.
fn shape_kernel(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        // sum_k (-1)^k (k+1)/(k+2) u^k
        let mut acc = 0.0;
        let mut pow = 1.0;
        for k in 0..7 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (k as f64 + 1.0) / (k as f64 + 2.0) * pow;
            pow *= u;
        }
        acc
    } else {
        (u.ln_1p() / u - 1.0 / (1.0 + u)) / u
    }
}

/// Log-density and its gradient with respect to `(mu, ln sigma, xi)`.
/// Returns `None` off the support.
pub(crate) fn log_pdf_grad(x: f64, mu: f64, log_sigma: f64, xi: f64) -> Option<(f64, [f64; 3])> {
    let sigma = log_sigma.exp();
    let z = (x - mu) / sigma;
    let u = xi * z;
    if xi.abs() < GUMBEL_THRESHOLD {
        let e = (-z).exp();
        let l = -log_sigma - z - e;
        let d_mu = (1.0 - e) / sigma;
        let d_eta = -1.0 + z * (1.0 - e);
        let d_xi = 0.5 * z * z * (1.0 - e) - z;
        return Some((l, [d_mu, d_eta, d_xi]));
    }
    if !(u > -1.0) {
        return None;
    }
    let t = 1.0 + u;
    let log_t = u.ln_1p();
    let w = (-log_t / xi).exp(); // t^(-1/xi)
    let l = -log_sigma - (1.0 + 1.0 / xi) * log_t - w;
    let a = (1.0 + xi - w) / t;
    let d_mu = a / sigma;
    let d_eta = -1.0 + z * a;
    let d = z * z * shape_kernel(u);
    let d_xi = d * (1.0 - w) - z / t;
    Some((l, [d_mu, d_eta, d_xi]))
}

/// Result of [`fit_mle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevFitResult {
    pub params: GevParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub n_obs: usize,
}

fn mean_sd(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Gumbel moment starting point `sigma0 = sqrt(6) sd / pi`,
/// `mu0 = mean - gamma sigma0`, `xi0 = 0.1`.
pub fn moment_initializer(data: &[f64]) -> Result<GevParams> {
    if data.is_empty() {
        return Err(Error::arg("moment initializer of an empty sample"));
    }
    let (mean, sd) = mean_sd(data);
    if !(sd > 0.0) {
        return Err(Error::Degenerate(
            "all observations are identical".to_string(),
        ));
    }
    let sigma = 6f64.sqrt() * sd / std::f64::consts::PI;
    GevParams::new(mean - EULER_GAMMA * sigma, sigma, 0.1)
}

/// Negative log-likelihood and gradient over `(mu, ln sigma, xi)`, with the
/// barrier replacing infeasible points.
fn neg_ll_grad(theta: &[f64], data: &[f64], grad: &mut [f64]) -> f64 {
    let (mu, eta, xi) = (theta[0], theta[1], theta[2]);
    if !(XI_BOUNDS.0..=XI_BOUNDS.1).contains(&xi) || !eta.is_finite() || eta.abs() > 700.0 {
        return BARRIER;
    }
    let mut total = 0.0;
    let mut g = [0.0; 3];
    for &x in data {
        match log_pdf_grad(x, mu, eta, xi) {
            Some((l, d)) => {
                total += l;
                g[0] += d[0];
                g[1] += d[1];
                g[2] += d[2];
            }
            None => return BARRIER,
        }
    }
    if !total.is_finite() {
        return BARRIER;
    }
    for k in 0..3 {
        grad[k] = -g[k];
    }
    -total
}

/// Weight `w` of the penalty `w xi^2` on the shape in the yearly fits of the
/// forecasting panels. Keeps 30-point fits away from the shape bounds.
pub const XI_PENALTY: f64 = 1.0;

/// Maximum-likelihood GEV fit, searching over `(mu, ln sigma, xi)`.
pub fn fit_mle(data: &[f64], init: Option<GevParams>) -> Result<GevFitResult> {
    fit_penalized(data, init, 0.0)
}

/// Fit maximizing `loglik - xi_weight xi^2`. The reported log-likelihood
/// excludes the penalty.
pub fn fit_penalized(data: &[f64], init: Option<GevParams>, xi_weight: f64) -> Result<GevFitResult> {
    if !(xi_weight >= 0.0 && xi_weight.is_finite()) {
        return Err(Error::arg(format!("shape penalty must be finite and nonnegative, got {xi_weight}")));
    }
    if data.len() < 10 {
        return Err(Error::arg(format!(
            "GEV MLE needs at least 10 observations, got {}",
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg("GEV MLE data contains non-finite values"));
    }
    let first = data[0];
    if data.iter().all(|&x| x == first) {
        return Err(Error::Degenerate(
            "all observations are identical".to_string(),
        ));
    }

    let mut start = match init {
        Some(p) => p,
        None => moment_initializer(data)?,
    };
    if log_likelihood(&start, data)? == f64::NEG_INFINITY {
        // the Gumbel member has unbounded support
        start = GevParams::new(start.mu, start.sigma, 0.0)?;
    }
    let theta0 = [start.mu, start.sigma.ln(), start.xi];
    let scale = start.sigma;
    let opts = BfgsOptions {
        max_iter: 500,
        step_tol: 1e-8,
        grad_tol: 1e-10,
        max_step: scale.max(0.1),
    };
    let m = optim::bfgs(
        |th, g| {
            let v = neg_ll_grad(th, data, g);
            if v >= BARRIER {
                return v;
            }
            g[2] += 2.0 * xi_weight * th[2];
            v + xi_weight * th[2] * th[2]
        },
        &theta0,
        &opts,
    );
    let params = GevParams::new(m.x[0], m.x[1].exp(), m.x[2])?;
    let ll = log_likelihood(&params, data)?;
    Ok(GevFitResult {
        params,
        log_likelihood: ll,
        converged: m.converged && ll.is_finite() && params.xi >= XI_REGULAR_MIN,
        n_obs: data.len(),
    })
}
