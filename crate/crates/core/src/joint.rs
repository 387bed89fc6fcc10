//! Joint mean/dispersion models fitted by alternating reweighting.
//!
//! Each outer iteration fits the mean submodel with prior weights
//! `w_i / φ̂_i`, turns its residuals into a dispersion statistic `d_i`,
//! fits the dispersion submodel to `d_i`, and updates `φ̂_i` from its
//! predictions at the learning points.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::{write_atomic, Dataset, Design};
use crate::error::{Error, Result};
use crate::family::{Family, Link};
use crate::gam::{fit_gam, predict_gam, GamFit, GamSpec};
use crate::glm::{fit_glm, predict_glm, GlmFit};
use crate::gp::{fit_gp, fit_gp_log, GpModel, GpOptions};
use crate::terms::TermSpec;
use crate::MeanPredictor;

pub const MODEL_FORMAT_HEADER: &str = "jointsa-model 1";
const DISPERSION_FLOOR: f64 = 1e-10;
const STATISTIC_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Glm,
    Gam,
    Gp,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Glm => "glm",
            Engine::Gam => "gam",
            Engine::Gp => "gp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum SubmodelSpec {
    Glm { terms: Vec<TermSpec>, family: Family },
    Gam { spec: GamSpec },
    Gp { trend: Vec<TermSpec>, options: GpOptions },
}

impl SubmodelSpec {
    pub fn engine(&self) -> Engine {
        match self {
            SubmodelSpec::Glm { .. } => Engine::Glm,
            SubmodelSpec::Gam { .. } => Engine::Gam,
            SubmodelSpec::Gp { .. } => Engine::Gp,
        }
    }

    fn family(&self) -> Option<Family> {
        match self {
            SubmodelSpec::Glm { family, .. } => Some(*family),
            SubmodelSpec::Gam { spec } => Some(spec.family),
            SubmodelSpec::Gp { .. } => None,
        }
    }
}

/// How the dispersion statistic is computed from the mean fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    #[default]
    InSample,
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub mean: SubmodelSpec,
    pub dispersion: SubmodelSpec,
    pub max_outer_iter: usize,
    pub outer_tol: f64,
    #[serde(default)]
    pub residuals: ResidualKind,
}

impl JointSpec {
    pub fn new(mean: SubmodelSpec, dispersion: SubmodelSpec) -> Result<Self> {
        let spec = Self { mean, dispersion, max_outer_iter: 10, outer_tol: 1e-6, residuals: ResidualKind::InSample };
        spec.validate()?;
        Ok(spec)
    }

    /// Joint GLM: dispersion terms use the gamma-type log-link family.
    pub fn glm(mean_terms: Vec<TermSpec>, mean_family: Family, disp_terms: Vec<TermSpec>) -> Result<Self> {
        Self::new(
            SubmodelSpec::Glm { terms: mean_terms, family: mean_family },
            SubmodelSpec::Glm { terms: disp_terms, family: Family::gamma_log() },
        )
    }

    pub fn gam(mean: GamSpec, disp_parametric: Vec<TermSpec>, disp_smooths: Vec<crate::gam::SmoothSpec>) -> Result<Self> {
        let disp = GamSpec::new(disp_parametric, disp_smooths, Family::gamma_log())?;
        Self::new(SubmodelSpec::Gam { spec: mean }, SubmodelSpec::Gam { spec: disp })
    }

    /// Joint Gp: the dispersion process is fitted to `ln d` with a Gaussian
    /// kernel (exponent fixed at 2) and mapped back with a log link.
    pub fn gp(mean_trend: Vec<TermSpec>, disp_trend: Vec<TermSpec>, options: GpOptions) -> Result<Self> {
        let disp_options = GpOptions { estimate_power: false, fixed_power: 2.0, ..options };
        Self::new(
            SubmodelSpec::Gp { trend: mean_trend, options },
            SubmodelSpec::Gp { trend: disp_trend, options: disp_options },
        )
    }

    pub fn engine(&self) -> Engine {
        self.mean.engine()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.engine() != self.dispersion.engine() {
            return Err(Error::Config("mean and dispersion submodels must use the same engine".into()));
        }
        if let Some(f) = self.dispersion.family() {
            if f.link != Link::Log {
                return Err(Error::Config("the dispersion submodel needs a log link".into()));
            }
        }
        if self.max_outer_iter == 0 {
            return Err(Error::Config("max_outer_iter must be at least 1".into()));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::Config("outer_tol must be positive".into()));
        }
        if let SubmodelSpec::Gam { spec } = &self.mean {
            spec.validate()?;
        }
        if let SubmodelSpec::Gam { spec } = &self.dispersion {
            spec.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum FittedModel {
    Glm(GlmFit),
    Gam(GamFit),
    Gp(GpModel),
}

impl FittedModel {
    pub fn predict(&self, x: &Design) -> Result<DVector<f64>> {
        match self {
            FittedModel::Glm(m) => predict_glm(m, x),
            FittedModel::Gam(m) => predict_gam(m, x),
            FittedModel::Gp(m) => m.predict_mean(x),
        }
    }

    fn fitted(&self, data: &Dataset) -> Result<DVector<f64>> {
        match self {
            FittedModel::Glm(m) => Ok(m.fitted_mu.clone()),
            FittedModel::Gam(m) => Ok(m.fitted_mu.clone()),
            FittedModel::Gp(m) => m.predict_mean(&data.design),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            FittedModel::Glm(m) => m.family,
            FittedModel::Gam(m) => m.spec.family,
            FittedModel::Gp(_) => Family::gaussian(),
        }
    }

    /// Explained deviance for GLM/GAM submodels.
    pub fn explained_deviance(&self) -> Option<f64> {
        match self {
            FittedModel::Glm(m) => Some(m.explained_deviance()),
            FittedModel::Gam(m) => Some(m.explained_deviance()),
            FittedModel::Gp(_) => None,
        }
    }

    /// Input columns the submodel reads, in first-use order.
    pub fn input_columns(&self) -> Vec<String> {
        let names: Vec<String> = match self {
            FittedModel::Glm(g) => g.terms.iter().filter_map(|t| t.column().map(str::to_string)).collect(),
            FittedModel::Gam(g) => g
                .spec
                .parametric
                .iter()
                .filter_map(|t| t.column().map(str::to_string))
                .chain(g.spec.smooths.iter().flat_map(|s| s.columns.clone()))
                .collect(),
            FittedModel::Gp(g) => g.column_names.clone(),
        };
        let mut out: Vec<String> = Vec::new();
        for c in names {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    /// True when the model formula has no term joining two inputs.
    pub fn is_additive(&self) -> bool {
        match self {
            FittedModel::Glm(_) => true,
            FittedModel::Gam(g) => g.spec.smooths.iter().all(|s| s.columns.len() < 2),
            FittedModel::Gp(g) => g.column_names.len() < 2,
        }
    }

    pub fn engine(&self) -> Engine {
        match self {
            FittedModel::Glm(_) => Engine::Glm,
            FittedModel::Gam(_) => Engine::Gam,
            FittedModel::Gp(_) => Engine::Gp,
        }
    }
}

impl MeanPredictor for FittedModel {
    fn predict_mean(&self, x: &Design) -> Result<DVector<f64>> {
        self.predict(x)
    }
}

fn fit_submodel(data: &Dataset, spec: &SubmodelSpec) -> Result<FittedModel> {
    Ok(match spec {
        SubmodelSpec::Glm { terms, family } => FittedModel::Glm(fit_glm(data, terms, *family)?),
        SubmodelSpec::Gam { spec } => FittedModel::Gam(fit_gam(data, spec)?),
        SubmodelSpec::Gp { trend, options } => FittedModel::Gp(fit_gp(data, trend, options)?),
    })
}

fn fit_dispersion_submodel(data: &Dataset, spec: &SubmodelSpec) -> Result<FittedModel> {
    match spec {
        SubmodelSpec::Gp { trend, options } => Ok(FittedModel::Gp(fit_gp_log(data, trend, options)?)),
        other => fit_submodel(data, other),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    pub iteration: usize,
    /// Σ d_i of the mean fit at this iteration.
    pub mean_deviance: f64,
    /// Extended quasi-likelihood of (d, φ̂) after the dispersion update.
    pub eql: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointModel {
    pub spec: JointSpec,
    pub mean_model: FittedModel,
    pub disp_model: FittedModel,
    pub outer_iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub trace: Vec<OuterIteration>,
    /// Dispersion statistic d_i the returned dispersion submodel was fitted to.
    pub dispersion_statistic: DVector<f64>,
    /// Iteration (1-based) whose submodels are returned.
    pub selected_iteration: usize,
}

fn dispersion_statistic(
    data: &Dataset,
    mean: &FittedModel,
    mu: &DVector<f64>,
    kind: ResidualKind,
) -> Result<DVector<f64>> {
    let n = data.n();
    let family = mean.family();
    let raw = DVector::from_fn(n, |i, _| {
        let dev = family.variance.unit_deviance(data.response[i], mu[i]);
        data.prior_weights[i] * dev
    });
    let d = match (kind, mean) {
        (ResidualKind::InSample, _) => raw,
        (ResidualKind::LeaveOneOut, FittedModel::Glm(m)) => inflate(&raw, &m.leverages),
        (ResidualKind::LeaveOneOut, FittedModel::Gam(m)) => inflate(&raw, &m.leverages),
        (ResidualKind::LeaveOneOut, FittedModel::Gp(m)) => {
            let e = m.loo_residuals()?;
            DVector::from_fn(n, |i, _| data.prior_weights[i] * e[i] * e[i])
        }
    };
    let mean_d = d.mean();
    if !mean_d.is_finite() {
        return Err(Error::Numerical("non-finite dispersion statistic".into()));
    }
    let floor = STATISTIC_FLOOR * mean_d.max(f64::MIN_POSITIVE);
    Ok(d.map(|v| v.max(floor)))
}

fn inflate(d: &DVector<f64>, leverages: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(d.len(), |i, _| {
        let h = leverages.get(i).copied().unwrap_or(0.0).min(1.0 - 1e-8);
        d[i] / ((1.0 - h) * (1.0 - h))
    })
}

fn eql(data: &Dataset, family: Family, d: &DVector<f64>, phi: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    -0.5 * (0..d.len())
        .map(|i| {
            let v = family.variance.variance(data.response[i]);
            let v = if v > 0.0 && v.is_finite() { v } else { family.variance.variance(mu[i]) };
            d[i] / phi[i] + (two_pi * phi[i] * v).ln()
        })
        .sum::<f64>()
}

fn floored_dispersion(pred: DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
    let floor = DISPERSION_FLOOR * d.mean();
    pred.map(|v| if v.is_finite() { v.max(floor) } else { floor })
}

pub fn fit_joint(data: &Dataset, spec: &JointSpec) -> Result<JointModel> {
    fit_joint_impl(data, spec, None)
}

/// As [`fit_joint`], with the first mean fit supplied. The first mean fit
/// uses unit dispersion weights, so a simple model fitted to `data` with the
/// same mean specification can be reused here.
pub fn fit_joint_from_mean(data: &Dataset, spec: &JointSpec, first_mean: FittedModel) -> Result<JointModel> {
    if first_mean.engine() != spec.engine() {
        return Err(Error::Config("the supplied mean model uses a different engine".into()));
    }
    fit_joint_impl(data, spec, Some(first_mean))
}

fn fit_joint_impl(data: &Dataset, spec: &JointSpec, mut first_mean: Option<FittedModel>) -> Result<JointModel> {
    spec.validate()?;
    let n = data.n();
    let mut phi = DVector::from_element(n, 1.0);
    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, FittedModel, FittedModel, DVector<f64>)> = None;
    let mut last: Option<(usize, FittedModel, FittedModel, DVector<f64>)> = None;
    let mut prev_dev: Option<f64> = None;
    let mut stop_reason = StopReason::MaxIterations;

    for it in 1..=spec.max_outer_iter {
        let weights = data.prior_weights.component_div(&phi);
        let weighted = data.reweighted(weights)?;
        let mean = match first_mean.take() {
            Some(m) => m,
            None => fit_submodel(&weighted, &spec.mean)?,
        };
        let mu = mean.fitted(&weighted)?;
        let d = dispersion_statistic(data, &mean, &mu, spec.residuals)?;
        let disp_data = data.with_response(d.clone())?;
        let disp = fit_dispersion_submodel(&disp_data, &spec.dispersion)?;
        phi = floored_dispersion(disp.fitted(&disp_data)?, &d);

        let mean_dev = d.sum();
        let q = eql(data, mean.family(), &d, &phi, &mu);
        if !mean_dev.is_finite() {
            return Err(Error::Divergence(format!("non-finite mean deviance at outer iteration {it}")));
        }
        trace.push(OuterIteration { iteration: it, mean_deviance: mean_dev, eql: q });
        if best.as_ref().is_none_or(|b| q > b.0) {
            best = Some((q, it, mean.clone(), disp.clone(), d.clone()));
        }
        let done = prev_dev.is_some_and(|p: f64| (mean_dev - p).abs() <= spec.outer_tol * p.abs());
        prev_dev = Some(mean_dev);
        last = Some((it, mean, disp, d));
        if done {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let converged = stop_reason == StopReason::Tolerance;
    let (selected, mean_model, disp_model, stat) = if converged || spec.max_outer_iter == 1 {
        last.expect("at least one outer iteration")
    } else {
        let (_, it, m, dm, d) = best.expect("at least one outer iteration");
        (it, m, dm, d)
    };
    Ok(JointModel {
        spec: spec.clone(),
        mean_model,
        disp_model,
        outer_iterations: trace.len(),
        converged,
        stop_reason,
        trace,
        dispersion_statistic: stat,
        selected_iteration: selected,
    })
}

impl JointModel {
    pub fn predict_mean(&self, x: &Design) -> Result<DVector<f64>> {
        self.mean_model.predict(x)
    }

    /// Dispersion predictions, clamped at zero.
    pub fn predict_dispersion(&self, x: &Design) -> Result<DVector<f64>> {
        Ok(self.disp_model.predict(x)?.map(|v| v.max(0.0)))
    }

    pub fn engine(&self) -> Engine {
        self.spec.engine()
    }

    /// Serialized model with the format header line.
    pub fn to_model_string(&self) -> Result<String> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::ModelFile(format!("cannot serialize model: {e}")))?;
        Ok(format!("{MODEL_FORMAT_HEADER}\n{body}\n"))
    }

    pub fn from_model_string(text: &str) -> Result<Self> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        if header.trim_end() != MODEL_FORMAT_HEADER {
            return Err(Error::ModelFile(format!(
                "unsupported model header `{}` (expected `{MODEL_FORMAT_HEADER}`)",
                header.trim_end()
            )));
        }
        serde_json::from_str(body).map_err(|e| Error::ModelFile(format!("malformed model body: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_model_string()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_model_string(&text)
    }

    /// Input columns the submodels read.
    pub fn input_columns(&self) -> Vec<String> {
        let mut cols = self.mean_model.input_columns();
        for c in self.disp_model.input_columns() {
            if !cols.contains(&c) {
                cols.push(c);
            }
        }
        cols
    }
}

impl MeanPredictor for JointModel {
    fn predict_mean(&self, x: &Design) -> Result<DVector<f64>> {
        JointModel::predict_mean(self, x)
    }
}

/// Predictivity coefficient `1 − Σ(y − ŷ)² / Σ(y − ȳ)²` on a test sample.
pub fn q2(model: &dyn MeanPredictor, test: &Dataset) -> Result<f64> {
    if test.n() == 0 {
        return Err(Error::Config("empty test sample".into()));
    }
    let pred = model.predict_mean(&test.design)?;
    q2_from_predictions(&test.response, &pred)
}

pub fn q2_from_predictions(y: &DVector<f64>, pred: &DVector<f64>) -> Result<f64> {
    if y.len() != pred.len() {
        return Err(Error::Dimension("prediction count differs from test size".into()));
    }
    let m = y.mean();
    let tss: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if !(tss > 0.0) {
        return Err(Error::Numerical("test responses have zero variance".into()));
    }
    let rss: f64 = y.iter().zip(pred.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - rss / tss)
}

/// Fraction of observations inside the Gaussian α-interval
/// `Ŷ_m ± z_{(1+α)/2} √Ŷ_d`, for each α.
pub fn coverage_curve(jm: &JointModel, data: &Dataset, alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mean = jm.predict_mean(&data.design)?;
    let disp = jm.predict_dispersion(&data.design)?;
    coverage_from_predictions(&data.response, &mean, &disp, alphas)
}

pub fn coverage_from_predictions(
    y: &DVector<f64>,
    mean: &DVector<f64>,
    disp: &DVector<f64>,
    alphas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let n = y.len() as f64;
    alphas
        .iter()
        .map(|&a| {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("coverage level {a} outside (0, 1)")));
            }
            let z = normal.inverse_cdf(0.5 * (1.0 + a));
            let inside = (0..y.len()).filter(|&i| (y[i] - mean[i]).abs() <= z * disp[i].sqrt()).count();
            Ok((a, inside as f64 / n))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{sample_monte_carlo, seeded_rng, InputDistribution};
    use crate::gam::SmoothSpec;
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, Normal as NormalDist};

    fn hetero(n: usize, seed: u64, sd: impl Fn(f64) -> f64) -> Dataset {
        let mut design = sample_monte_carlo(&[InputDistribution::uniform(0.0, 1.0).unwrap()], n, seed).unwrap();
        design.column_names = vec!["x".into()];
        let mut rng = seeded_rng(seed + 1);
        let z = NormalDist::new(0.0, 1.0).unwrap();
        let y = DVector::from_fn(n, |i, _| {
            let x = design.points[(i, 0)];
            1.0 + 2.0 * x + sd(x) * z.sample(&mut rng)
        });
        Dataset::new(design, y).unwrap()
    }

    fn lin() -> Vec<TermSpec> {
        vec![TermSpec::Intercept, TermSpec::linear("x")]
    }

    #[test]
    fn homoscedastic_degeneracy() {
        let data = hetero(300, 1, |_| 0.5);
        let spec = JointSpec::glm(lin(), Family::gaussian(), vec![TermSpec::Intercept]).unwrap();
        let jm = fit_joint(&data, &spec).unwrap();
        let simple = fit_glm(&data, &lin(), Family::gaussian()).unwrap();
        let FittedModel::Glm(m) = &jm.mean_model else { panic!() };
        assert!((&m.beta - &simple.beta).amax() < 1e-6);
        assert!(jm.converged);
        let FittedModel::Glm(dm) = &jm.disp_model else { panic!() };
        assert!((dm.beta[0].exp() - 0.25).abs() < 0.05, "{}", dm.beta[0].exp());
        assert!(jm.trace.iter().all(|t| t.mean_deviance.is_finite() && t.eql.is_finite()));
    }

    #[test]
    fn heteroscedastic_weights_and_positivity() {
        let data = hetero(500, 2, |x| 0.1 + x);
        let spec = JointSpec::glm(lin(), Family::gaussian(), lin()).unwrap();
        let jm = fit_joint(&data, &spec).unwrap();
        let grid = Design::new(DMatrix::from_column_slice(5, 1, &[-1.0, 0.0, 0.5, 1.0, 3.0]), vec!["x".into()]).unwrap();
        let d = jm.predict_dispersion(&grid).unwrap();
        assert!(d.iter().all(|&v| v >= 0.0));
        assert!(d[3] > 5.0 * d[1]);
        assert!(jm.outer_iterations <= 10);
    }

    #[test]
    fn q2_trivial_cases() {
        let y = DVector::from_row_slice(&[1.0, 2.0, 4.0, 3.0]);
        assert_eq!(q2_from_predictions(&y, &y).unwrap(), 1.0);
        let c = DVector::from_element(4, y.mean());
        assert!(q2_from_predictions(&y, &c).unwrap().abs() < 1e-15);
        assert!(q2_from_predictions(&DVector::from_element(3, 2.0), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn coverage_with_true_model() {
        let n = 4000;
        let data = hetero(n, 3, |x| 0.2 + x);
        let mean = DVector::from_fn(n, |i, _| 1.0 + 2.0 * data.design.points[(i, 0)]);
        let disp = DVector::from_fn(n, |i, _| (0.2 + data.design.points[(i, 0)]).powi(2));
        let alphas = [0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.999];
        for (a, delta) in coverage_from_predictions(&data.response, &mean, &disp, &alphas).unwrap() {
            let se = (a * (1.0 - a) / n as f64).sqrt();
            assert!((delta - a).abs() <= 3.0 * se + 1e-12, "{a}: {delta}");
        }
        let zero = DVector::zeros(n);
        let c = coverage_from_predictions(&data.response, &mean, &zero, &[0.5]).unwrap();
        assert_eq!(c[0].1, 0.0);
    }

    #[test]
    fn gam_engine_and_model_file_roundtrip() {
        let data = hetero(300, 4, |x| 0.2 + x * x);
        let mean = GamSpec::new(vec![TermSpec::Intercept], vec![SmoothSpec::univariate("x")], Family::gaussian()).unwrap();
        let spec = JointSpec::gam(mean, vec![TermSpec::Intercept], vec![SmoothSpec::univariate("x").with_k(6)]).unwrap();
        let jm = fit_joint(&data, &spec).unwrap();
        let text = jm.to_model_string().unwrap();
        assert!(text.starts_with("jointsa-model 1\n"));
        let back = JointModel::from_model_string(&text).unwrap();
        assert_eq!(back.to_model_string().unwrap(), text);
        let x = data.design.rows(0..10);
        assert_eq!(jm.predict_dispersion(&x).unwrap(), back.predict_dispersion(&x).unwrap());
        assert!(JointModel::from_model_string("jointsa-model 9\n{}").is_err());
        assert_eq!(jm.input_columns(), vec!["x".to_string()]);
    }

    #[test]
    fn gp_engine_single_pass() {
        let data = hetero(80, 5, |x| 0.05 + 0.5 * x);
        let opts = GpOptions { n_starts: 2, ..GpOptions::default() };
        let mut spec = JointSpec::gp(lin(), vec![TermSpec::Intercept], opts).unwrap();
        spec.max_outer_iter = 1;
        let jm = fit_joint(&data, &spec).unwrap();
        assert_eq!(jm.outer_iterations, 1);
        assert!(!jm.converged);
        let d = jm.predict_dispersion(&data.design).unwrap();
        assert!(d.iter().all(|&v| v >= 0.0));
        spec.residuals = ResidualKind::LeaveOneOut;
        let loo = fit_joint(&data, &spec).unwrap();
        assert!(loo.dispersion_statistic.sum() >= jm.dispersion_statistic.sum());
    }

    #[test]
    fn spec_validation() {
        let bad = JointSpec::new(
            SubmodelSpec::Glm { terms: lin(), family: Family::gaussian() },
            SubmodelSpec::Glm { terms: lin(), family: Family::gaussian() },
        );
        assert!(bad.is_err());
        let mixed = JointSpec::new(
            SubmodelSpec::Glm { terms: lin(), family: Family::gaussian() },
            SubmodelSpec::Gp { trend: vec![], options: GpOptions::default() },
        );
        assert!(mixed.is_err());
    }
}
