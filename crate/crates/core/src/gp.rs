//! Gaussian-process regression with a parametric trend, a generalized
//! exponential correlation, and a nugget.
//!
//! The observation covariance is `σ²_tot C` with
//! `C = (1 − τ) R + τ diag(v)`, where `R_ij = exp(−Σ_d θ_d |h_d|^{p_d})` on
//! inputs scaled to `[0, 1]`, `τ` is the nugget fraction and `v` the noise
//! shape implied by the prior weights (`v_i ∝ 1/w_i`, mean one). For fixed
//! correlation parameters the trend coefficients and `σ²_tot` are profiled
//! out by generalized least squares, and the remaining parameters maximize
//! the concentrated likelihood from several starting points.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{derive_seed, sample_lhs, Dataset, Design, InputDistribution};
use crate::error::{Error, Result};
use crate::linalg::{backward_solve_transpose, cholesky_rowmajor, forward_solve, inverse_from_lower_inverse, lower_inverse};
use crate::optim::{minimize_box, BfgsSettings, Objective};
use crate::terms::{model_matrix, TermSpec};
use crate::MeanPredictor;

const LOG_THETA_BOUNDS: (f64, f64) = (-6.907_755_278_982_137, 9.210_340_371_976_184); // ln 1e-3, ln 1e4
const START_LOG_THETA: (f64, f64) = (-2.302_585_092_994_046, 4.605_170_185_988_092); // ln 0.1, ln 100
const RHO_BOUNDS: (f64, f64) = (-4.0, 8.0);
const KAPPA_BOUNDS: (f64, f64) = (-20.0, 6.0);
const START_POWER: f64 = 1.9;
const START_NUGGET_FRACTION: f64 = 0.1;
const JITTERS: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpOptions {
    /// Estimate the exponents `p_d ∈ (0, 2)`; otherwise use `fixed_power`.
    pub estimate_power: bool,
    pub fixed_power: f64,
    /// Estimate a nugget; otherwise the model interpolates.
    pub nugget: bool,
    pub n_starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self { estimate_power: true, fixed_power: 2.0, nugget: true, n_starts: 10, seed: 0x5eed_6a55, max_iter: 100 }
    }
}

/// Scale on which the process models the response.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseScale {
    #[default]
    Identity,
    /// Fitted to `ln y`; predictions are `calibration · exp(·)`, with the
    /// calibration matching the mean of `y` on the learning sample.
    Log { calibration: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpModel {
    pub column_names: Vec<String>,
    pub trend_terms: Vec<TermSpec>,
    pub trend_beta: DVector<f64>,
    /// Correlation parameters in unit-scaled input coordinates.
    pub theta: Vec<f64>,
    pub power: Vec<f64>,
    /// Process variance.
    pub sigma2: f64,
    /// Nugget variance at unit noise shape.
    pub nugget2: f64,
    pub learning: Dataset,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    pub noise_shape: Vec<f64>,
    pub jitter: f64,
    /// Concentrated negative log-likelihood at the optimum (up to a constant).
    pub neg_log_likelihood: f64,
    pub starts_succeeded: usize,
    pub warnings: Vec<String>,
    #[serde(default)]
    pub response_scale: ResponseScale,
    #[serde(skip)]
    cache: OnceLock<Factor>,
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Vec<f64>,
    /// C⁻¹ (y − Fβ)
    alpha: DVector<f64>,
    /// L⁻¹ F
    f_tilde: DMatrix<f64>,
    /// (F̃ᵀF̃)⁻¹
    ftf_inv: DMatrix<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unit-scaled inputs, row-major.
fn standardize(points: &DMatrix<f64>, shift: &[f64], scale: &[f64]) -> Vec<f64> {
    let (n, p) = points.shape();
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        for d in 0..p {
            out[i * p + d] = (points[(i, d)] - shift[d]) / scale[d];
        }
    }
    out
}

#[inline]
fn correlation(a: &[f64], b: &[f64], theta: &[f64], power: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..a.len() {
        let h = (a[d] - b[d]).abs();
        if h > 0.0 {
            s += theta[d] * if power[d] == 2.0 { h * h } else { h.powf(power[d]) };
        }
    }
    (-s).exp()
}

/// Concentrated likelihood over (log θ, logit(p/2), logit τ).
struct Likelihood<'a> {
    n: usize,
    p: usize,
    /// ln |h_d| for each lower-triangle pair (i > j), per dimension; −∞ at h = 0.
    log_h: Vec<Vec<f64>>,
    y: &'a DVector<f64>,
    f: &'a DMatrix<f64>,
    shape: &'a [f64],
    options: GpOptions,
    sigma_floor: f64,
}

struct Evaluation {
    value: f64,
    jitter: f64,
    chol: Vec<f64>,
    beta: DVector<f64>,
    sigma2_total: f64,
    alpha: DVector<f64>,
    f_tilde: DMatrix<f64>,
    ftf_inv: DMatrix<f64>,
}

struct Hyper {
    theta: Vec<f64>,
    power: Vec<f64>,
    tau: f64,
}

#[inline]
fn pair_index(i: usize, j: usize) -> usize {
    i * (i - 1) / 2 + j
}

impl Likelihood<'_> {
    fn unpack(&self, x: &[f64]) -> Hyper {
        let p = self.p;
        let theta: Vec<f64> = x[..p].iter().map(|v| v.exp()).collect();
        let mut at = p;
        let power = if self.options.estimate_power {
            at += p;
            x[p..2 * p].iter().map(|&r| 2.0 * sigmoid(r)).collect()
        } else {
            vec![self.options.fixed_power; p]
        };
        let tau = if self.options.nugget { sigmoid(x[at]) } else { 0.0 };
        Hyper { theta, power, tau }
    }

    fn dim(&self) -> usize {
        self.p * if self.options.estimate_power { 2 } else { 1 } + usize::from(self.options.nugget)
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![LOG_THETA_BOUNDS.0; self.p];
        let mut hi = vec![LOG_THETA_BOUNDS.1; self.p];
        if self.options.estimate_power {
            lo.extend(std::iter::repeat_n(RHO_BOUNDS.0, self.p));
            hi.extend(std::iter::repeat_n(RHO_BOUNDS.1, self.p));
        }
        if self.options.nugget {
            lo.push(KAPPA_BOUNDS.0);
            hi.push(KAPPA_BOUNDS.1);
        }
        (lo, hi)
    }

    /// Scaled terms t_d = θ_d |h_d|^{p_d} per pair and dimension.
    fn pair_terms(&self, h: &Hyper) -> Vec<Vec<f64>> {
        (0..self.p)
            .map(|d| {
                let (th, pw) = (h.theta[d], h.power[d]);
                self.log_h[d]
                    .iter()
                    .map(|&lh| if lh == f64::NEG_INFINITY { 0.0 } else { th * (pw * lh).exp() })
                    .collect()
            })
            .collect()
    }

    fn covariance(&self, h: &Hyper, terms: &[Vec<f64>]) -> Vec<f64> {
        let n = self.n;
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let k = pair_index(i, j);
                let s: f64 = terms.iter().map(|t| t[k]).sum();
                c[i * n + j] = (1.0 - h.tau) * (-s).exp();
            }
            c[i * n + i] = (1.0 - h.tau) + h.tau * self.shape[i];
        }
        c
    }

    fn evaluate(&self, h: &Hyper, terms: &[Vec<f64>]) -> Option<(Evaluation, Vec<f64>)> {
        let n = self.n;
        let cov = self.covariance(h, terms);
        let mut chol = cov.clone();
        let mut jitter_used = None;
        for &jit in &JITTERS {
            if jit > 0.0 {
                chol.copy_from_slice(&cov);
                for i in 0..n {
                    chol[i * n + i] += jit;
                }
            }
            if cholesky_rowmajor(&mut chol, n) {
                jitter_used = Some(jit);
                break;
            }
        }
        let jitter = jitter_used?;
        let q = self.f.ncols();
        let mut f_tilde = self.f.clone();
        for c in 0..q {
            let mut col: Vec<f64> = f_tilde.column(c).iter().copied().collect();
            forward_solve(&chol, n, &mut col);
            f_tilde.set_column(c, &DVector::from_vec(col));
        }
        let mut y_tilde: Vec<f64> = self.y.iter().copied().collect();
        forward_solve(&chol, n, &mut y_tilde);
        let y_tilde = DVector::from_vec(y_tilde);
        let ftf = f_tilde.transpose() * &f_tilde;
        let ftf_inv = ftf.clone().cholesky()?.inverse();
        let beta = &ftf_inv * (f_tilde.transpose() * &y_tilde);
        let r_tilde = &y_tilde - &f_tilde * &beta;
        let sigma2 = r_tilde.norm_squared() / n as f64;
        let log_det_half: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
        let value = 0.5 * n as f64 * sigma2.max(self.sigma_floor).ln() + log_det_half;
        if !value.is_finite() {
            return None;
        }
        let mut alpha: Vec<f64> = r_tilde.iter().copied().collect();
        backward_solve_transpose(&chol, n, &mut alpha);
        Some((
            Evaluation {
                value,
                jitter,
                chol,
                beta,
                sigma2_total: sigma2,
                alpha: DVector::from_vec(alpha),
                f_tilde,
                ftf_inv,
            },
            cov,
        ))
    }

    fn gradient(&self, x: &[f64], h: &Hyper, terms: &[Vec<f64>], ev: &Evaluation, cov: &[f64]) -> Vec<f64> {
        let n = self.n;
        let p = self.p;
        let cinv = inverse_from_lower_inverse(&lower_inverse(&ev.chol, n), n);
        let a = &ev.alpha;
        let floored = ev.sigma2_total <= self.sigma_floor;
        let inv_s = if floored { 0.0 } else { 1.0 / ev.sigma2_total };
        let mut g = vec![0.0; x.len()];
        let kappa_at = p * if self.options.estimate_power { 2 } else { 1 };
        let dtau = h.tau * (1.0 - h.tau);
        let dpow: Vec<f64> = h.power.iter().map(|&pw| pw * (1.0 - 0.5 * pw)).collect();
        for i in 0..n {
            for j in 0..i {
                let k = pair_index(i, j);
                let w = cinv[i * n + j] - a[i] * a[j] * inv_s;
                let cij = cov[i * n + j];
                for d in 0..p {
                    let t = terms[d][k];
                    if t > 0.0 {
                        g[d] -= w * cij * t;
                        if self.options.estimate_power {
                            g[p + d] -= w * cij * t * self.log_h[d][k] * dpow[d];
                        }
                    }
                }
                if self.options.nugget && h.tau < 1.0 {
                    g[kappa_at] -= w * cij / (1.0 - h.tau) * dtau;
                }
            }
            if self.options.nugget {
                let w = cinv[i * n + i] - a[i] * a[i] * inv_s;
                g[kappa_at] += 0.5 * w * (self.shape[i] - 1.0) * dtau;
            }
        }
        g
    }
}

impl Objective for Likelihood<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let h = self.unpack(x);
        let terms = self.pair_terms(&h);
        self.evaluate(&h, &terms).map_or(f64::NAN, |(e, _)| e.value)
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let h = self.unpack(x);
        let terms = self.pair_terms(&h);
        match self.evaluate(&h, &terms) {
            Some((ev, cov)) => {
                let g = self.gradient(x, &h, &terms, &ev, &cov);
                (ev.value, g)
            }
            None => (f64::NAN, vec![f64::NAN; x.len()]),
        }
    }
}

fn noise_shape(weights: &DVector<f64>) -> Vec<f64> {
    let inv: Vec<f64> = weights.iter().map(|w| 1.0 / w).collect();
    let m = inv.iter().sum::<f64>() / inv.len() as f64;
    inv.iter().map(|v| v / m).collect()
}

fn scaling(points: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let p = points.ncols();
    let mut shift = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    for d in 0..p {
        let col = points.column(d);
        let (lo, hi) = (col.min(), col.max());
        shift.push(lo);
        scale.push(if hi > lo { hi - lo } else { 1.0 });
    }
    (shift, scale)
}

fn pair_logs(z: &[f64], n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|d| {
            let mut v = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in 0..i {
                    let h = (z[i * p + d] - z[j * p + d]).abs();
                    v.push(if h > 0.0 { h.ln() } else { f64::NEG_INFINITY });
                }
            }
            v
        })
        .collect()
}

fn has_duplicate_rows(z: &[f64], n: usize, p: usize) -> bool {
    let mut rows: Vec<&[f64]> = (0..n).map(|i| &z[i * p..(i + 1) * p]).collect();
    rows.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    rows.windows(2).any(|w| w[0] == w[1])
}

/// Fits trend coefficients and covariance parameters by maximum likelihood.
pub fn fit_gp(data: &Dataset, trend: &[TermSpec], options: &GpOptions) -> Result<GpModel> {
    let n = data.n();
    let p = data.design.ncols();
    if p == 0 {
        return Err(Error::Dimension("GP needs at least one input column".into()));
    }
    if options.n_starts == 0 {
        return Err(Error::Config("GP needs at least one optimizer start".into()));
    }
    if options.fixed_power <= 0.0 || options.fixed_power > 2.0 {
        return Err(Error::Config("GP exponent must lie in (0, 2]".into()));
    }
    let f = model_matrix(trend, &data.design)?;
    if n <= f.ncols() + 1 {
        return Err(Error::SingularFit(format!("{n} observations for {} trend terms", f.ncols())));
    }
    let mut warnings = Vec::new();
    if n < 10 * p {
        warnings.push(format!("{n} observations for {p} inputs is below the recommended 10 per input"));
    }
    let (shift, scale) = scaling(&data.design.points);
    let z = standardize(&data.design.points, &shift, &scale);
    if !options.nugget && has_duplicate_rows(&z, n, p) {
        return Err(Error::Conditioning("duplicate input rows need a nugget".into()));
    }
    let shape = noise_shape(&data.prior_weights);
    let var_y = {
        let m = data.response.mean();
        data.response.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64
    };
    let lik = Likelihood {
        n,
        p,
        log_h: pair_logs(&z, n, p),
        y: &data.response,
        f: &f,
        shape: &shape,
        options: *options,
        sigma_floor: 1e-14 * var_y.max(f64::MIN_POSITIVE),
    };
    let (lo, hi) = lik.bounds();
    let unit = vec![InputDistribution::uniform(START_LOG_THETA.0, START_LOG_THETA.1)?; p];
    let starts = sample_lhs(&unit, options.n_starts, derive_seed(options.seed, 0x6770))?;
    let settings = BfgsSettings { max_iter: options.max_iter, gtol: 1e-5, ftol: 1e-9 };
    let results: Vec<Option<Vec<f64>>> = (0..options.n_starts)
        .into_par_iter()
        .map(|s| {
            let mut x0: Vec<f64> = starts.points.row(s).iter().copied().collect();
            if options.estimate_power {
                x0.extend(std::iter::repeat_n(logit(START_POWER / 2.0), p));
            }
            if options.nugget {
                x0.push(logit(START_NUGGET_FRACTION));
            }
            minimize_box(&lik, &x0, &lo, &hi, settings).map(|m| {
                let mut v = m.x;
                v.push(m.value);
                v
            })
        })
        .collect();
    let mut best: Option<Vec<f64>> = None;
    let mut succeeded = 0;
    for r in results.into_iter().flatten() {
        let val = *r.last().expect("value appended");
        if !val.is_finite() {
            continue;
        }
        succeeded += 1;
        if best.as_ref().is_none_or(|b| val < *b.last().expect("value appended")) {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| Error::Numerical("every GP optimizer start failed".into()))?;
    let x = &best[..lik.dim()];
    let h = lik.unpack(x);
    let terms = lik.pair_terms(&h);
    let (ev, _) = lik
        .evaluate(&h, &terms)
        .ok_or_else(|| Error::Conditioning("covariance not positive definite at the optimum".into()))?;
    let s2 = ev.sigma2_total;
    let model = GpModel {
        column_names: data.design.column_names.clone(),
        trend_terms: trend.to_vec(),
        trend_beta: ev.beta.clone(),
        theta: h.theta,
        power: h.power,
        sigma2: s2 * (1.0 - h.tau),
        nugget2: s2 * h.tau,
        learning: data.clone(),
        shift,
        scale,
        noise_shape: shape,
        jitter: ev.jitter,
        neg_log_likelihood: ev.value,
        starts_succeeded: succeeded,
        warnings,
        response_scale: ResponseScale::Identity,
        cache: OnceLock::new(),
    };
    let _ = model.cache.set(Factor { chol: ev.chol, alpha: ev.alpha, f_tilde: ev.f_tilde, ftf_inv: ev.ftf_inv });
    Ok(model)
}

/// Fits the process to `ln y` for a positive response such as a dispersion.
pub fn fit_gp_log(data: &Dataset, trend: &[TermSpec], options: &GpOptions) -> Result<GpModel> {
    if data.response.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Config("a log-scale GP needs a positive response".into()));
    }
    let logged = data.with_response(data.response.map(f64::ln))?;
    let mut model = fit_gp(&logged, trend, options)?;
    let back = model.predict_latent(&data.design)?.map(f64::exp);
    let calibration = data.response.mean() / back.mean();
    if !(calibration.is_finite() && calibration > 0.0) {
        return Err(Error::Numerical("log-scale GP calibration is not finite".into()));
    }
    model.response_scale = ResponseScale::Log { calibration };
    Ok(model)
}

impl GpModel {
    /// Model with given covariance parameters; the trend is fitted by GLS.
    pub fn from_hyperparameters(
        data: &Dataset,
        trend: &[TermSpec],
        theta: &[f64],
        power: &[f64],
        sigma2: f64,
        nugget2: f64,
    ) -> Result<Self> {
        let p = data.design.ncols();
        if theta.len() != p || power.len() != p {
            return Err(Error::Dimension("one θ and one exponent per input are required".into()));
        }
        if !(sigma2 >= 0.0 && nugget2 >= 0.0 && sigma2 + nugget2 > 0.0) {
            return Err(Error::Config("variances must be non-negative and not both zero".into()));
        }
        let (shift, scale) = scaling(&data.design.points);
        let mut model = GpModel {
            column_names: data.design.column_names.clone(),
            trend_terms: trend.to_vec(),
            trend_beta: DVector::zeros(0),
            theta: theta.to_vec(),
            power: power.to_vec(),
            sigma2,
            nugget2,
            learning: data.clone(),
            shift,
            scale,
            noise_shape: noise_shape(&data.prior_weights),
            jitter: 0.0,
            neg_log_likelihood: f64::NAN,
            starts_succeeded: 0,
            warnings: Vec::new(),
            response_scale: ResponseScale::Identity,
            cache: OnceLock::new(),
        };
        let (factor, beta, jitter) = model.factorize()?;
        model.trend_beta = beta;
        model.jitter = jitter;
        let _ = model.cache.set(factor);
        Ok(model)
    }

    /// Nugget fraction τ = nugget² / (σ² + nugget²).
    pub fn nugget_fraction(&self) -> f64 {
        self.nugget2 / (self.sigma2 + self.nugget2)
    }

    /// Nugget variance relative to the empirical variance of the learning
    /// responses, i.e. the share of output variance left as white noise.
    pub fn nugget_share_of_output_variance(&self) -> f64 {
        let y = &self.learning.response;
        let n = y.len() as f64;
        let m = y.mean();
        let var = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        self.nugget2 / var
    }

    fn total_variance(&self) -> f64 {
        self.sigma2 + self.nugget2
    }

    fn learning_scaled(&self) -> Vec<f64> {
        standardize(&self.learning.design.points, &self.shift, &self.scale)
    }

    fn factorize(&self) -> Result<(Factor, DVector<f64>, f64)> {
        let n = self.learning.n();
        let p = self.theta.len();
        let tau = self.nugget_fraction();
        let z = self.learning_scaled();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                cov[i * n + j] = (1.0 - tau) * correlation(&z[i * p..(i + 1) * p], &z[j * p..(j + 1) * p], &self.theta, &self.power);
            }
            cov[i * n + i] = (1.0 - tau) + tau * self.noise_shape[i];
        }
        let start = JITTERS.iter().position(|&j| j >= self.jitter).unwrap_or(0);
        let mut chol = cov.clone();
        let mut used = None;
        for &jit in &JITTERS[start..] {
            chol.copy_from_slice(&cov);
            for i in 0..n {
                chol[i * n + i] += jit;
            }
            if cholesky_rowmajor(&mut chol, n) {
                used = Some(jit);
                break;
            }
        }
        let jitter = used.ok_or_else(|| {
            Error::Conditioning("covariance not positive definite after the largest jitter".into())
        })?;
        let f = model_matrix(&self.trend_terms, &self.learning.design)?;
        let mut f_tilde = f.clone();
        for c in 0..f.ncols() {
            let mut col: Vec<f64> = f.column(c).iter().copied().collect();
            forward_solve(&chol, n, &mut col);
            f_tilde.set_column(c, &DVector::from_vec(col));
        }
        let mut y_tilde: Vec<f64> = self.learning.response.iter().copied().collect();
        forward_solve(&chol, n, &mut y_tilde);
        let y_tilde = DVector::from_vec(y_tilde);
        let ftf_inv = (f_tilde.transpose() * &f_tilde)
            .cholesky()
            .ok_or_else(|| Error::SingularFit("trend matrix is rank deficient".into()))?
            .inverse();
        let beta = &ftf_inv * (f_tilde.transpose() * &y_tilde);
        let mut alpha: Vec<f64> = (&y_tilde - &f_tilde * &beta).iter().copied().collect();
        backward_solve_transpose(&chol, n, &mut alpha);
        Ok((Factor { chol, alpha: DVector::from_vec(alpha), f_tilde, ftf_inv }, beta, jitter))
    }

    fn factor(&self) -> Result<&Factor> {
        if let Some(f) = self.cache.get() {
            return Ok(f);
        }
        let (factor, _, _) = self.factorize()?;
        Ok(self.cache.get_or_init(|| factor))
    }

    fn inputs(&self, x: &Design) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let names: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        let sel = x.select(&names)?;
        let f = model_matrix(&self.trend_terms, x)?;
        Ok((standardize(&sel.points, &self.shift, &self.scale), f))
    }

    fn cross(&self, point: &[f64], learning: &[f64]) -> Vec<f64> {
        let p = point.len();
        learning
            .chunks_exact(p)
            .map(|row| correlation(point, row, &self.theta, &self.power))
            .collect()
    }

    /// Best linear unbiased predictor of the underlying smooth process,
    /// mapped back to the response scale.
    pub fn predict_mean(&self, x: &Design) -> Result<DVector<f64>> {
        let latent = self.predict_latent(x)?;
        Ok(match self.response_scale {
            ResponseScale::Identity => latent,
            ResponseScale::Log { calibration } => latent.map(|v| calibration * v.exp()),
        })
    }

    /// Predictor on the fitted scale (`ln y` for a log-scale model).
    pub fn predict_latent(&self, x: &Design) -> Result<DVector<f64>> {
        let factor = self.factor()?;
        let (z, f) = self.inputs(x)?;
        let zl = self.learning_scaled();
        let p = self.theta.len();
        let w = 1.0 - self.nugget_fraction();
        let trend = &f * &self.trend_beta;
        let alpha = factor.alpha.as_slice();
        let out: Vec<f64> = z
            .par_chunks(p.max(1))
            .enumerate()
            .map(|(i, pt)| {
                let r = self.cross(pt, &zl);
                trend[i] + w * crate::linalg::dot(&r, alpha)
            })
            .collect();
        Ok(DVector::from_vec(out))
    }

    /// Mean squared error of prediction for a new observation (nugget
    /// included, at unit noise shape), on the fitted scale.
    pub fn predict_variance(&self, x: &Design) -> Result<DVector<f64>> {
        let factor = self.factor()?;
        let (z, f) = self.inputs(x)?;
        let zl = self.learning_scaled();
        let n = self.learning.n();
        let p = self.theta.len();
        let tau = self.nugget_fraction();
        let s = self.total_variance();
        let out: Vec<f64> = z
            .par_chunks(p.max(1))
            .enumerate()
            .map(|(i, pt)| {
                let mut r = self.cross(pt, &zl);
                forward_solve(&factor.chol, n, &mut r);
                let rcr = (1.0 - tau) * (1.0 - tau) * crate::linalg::dot(&r, &r);
                let rv = DVector::from_vec(r);
                let u = f.row(i).transpose() - (1.0 - tau) * factor.f_tilde.transpose() * rv;
                let trend_term = u.dot(&(&factor.ftf_inv * &u));
                (s * (1.0 - rcr + trend_term)).max(0.0)
            })
            .collect();
        Ok(DVector::from_vec(out))
    }

    /// Leave-one-out residuals `α_i / (C⁻¹)_ii` at fixed covariance parameters.
    pub fn loo_residuals(&self) -> Result<DVector<f64>> {
        let factor = self.factor()?;
        let n = self.learning.n();
        let m = lower_inverse(&factor.chol, n);
        let mut diag = vec![0.0; n];
        for k in 0..n {
            for a in 0..=k {
                diag[a] += m[k * n + a] * m[k * n + a];
            }
        }
        Ok(DVector::from_fn(n, |i, _| factor.alpha[i] / diag[i]))
    }

    /// `k(x, x')` including the nugget on the diagonal.
    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        let za: Vec<f64> = a.iter().enumerate().map(|(d, v)| (v - self.shift[d]) / self.scale[d]).collect();
        let zb: Vec<f64> = b.iter().enumerate().map(|(d, v)| (v - self.shift[d]) / self.scale[d]).collect();
        let c = self.sigma2 * correlation(&za, &zb, &self.theta, &self.power);
        if a == b {
            c + self.nugget2
        } else {
            c
        }
    }

    /// Predictions at the learning rows.
    pub fn fitted(&self) -> Result<DVector<f64>> {
        self.predict_mean(&self.learning.design)
    }
}

pub fn predict_gp_mean(model: &GpModel, x: &Design) -> Result<DVector<f64>> {
    model.predict_mean(x)
}

pub fn predict_gp_var(model: &GpModel, x: &Design) -> Result<DVector<f64>> {
    model.predict_variance(x)
}

impl MeanPredictor for GpModel {
    fn predict_mean(&self, x: &Design) -> Result<DVector<f64>> {
        GpModel::predict_mean(self, x)
    }
}
