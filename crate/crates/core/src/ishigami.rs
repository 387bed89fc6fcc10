//! The Ishigami function as a stochastic simulator: `X3` is drawn but never
//! shown to a metamodel, so the code output given `(X1, X2)` is random.
//!
//! Closed forms, for `X_i ~ U[-π, π]`:
//!
//! ```text
//! Y   = sin X1 + a sin² X2 + b X3⁴ sin X1
//! Y_m = (1 + bπ⁴/5) sin X1 + a sin² X2
//! Y_d = b² π⁸ (1/9 − 1/25) sin² X1
//! ```

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::design::{derive_seed, sample_monte_carlo, seeded_rng, Dataset, Design, InputDistribution};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::gam::{fit_gam, GamFit, GamSpec, SmoothSpec};
use crate::glm::{compare_nested, fit_glm, GlmFit};
use crate::gp::{fit_gp, GpModel, GpOptions};
use crate::joint::{fit_joint, fit_joint_from_mean, q2, q2_from_predictions, FittedModel, JointModel, JointSpec};
use crate::report::Report;
use crate::sobol::{
    analyse_joint, replicate_indices, total_index_controllable_from_q2, IndexLabel, JointAnalysis, Method, SaProblem,
    SobolEstimate, TotalVarianceMode,
};
use crate::terms::TermSpec;

/// Ishigami constants `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IshigamiOracle {
    a: f64,
    b: f64,
}

impl Default for IshigamiOracle {
    fn default() -> Self {
        Self { a: 7.0, b: 0.1 }
    }
}

impl IshigamiOracle {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn eval(&self, x1: f64, x2: f64, x3: f64) -> f64 {
        x1.sin() + self.a * x2.sin().powi(2) + self.b * x3.powi(4) * x1.sin()
    }

    pub fn mean(&self, x1: f64, x2: f64) -> f64 {
        (1.0 + self.b * PI.powi(4) / 5.0) * x1.sin() + self.a * x2.sin().powi(2)
    }

    pub fn dispersion(&self, x1: f64) -> f64 {
        self.b * self.b * PI.powi(8) * (1.0 / 9.0 - 1.0 / 25.0) * x1.sin().powi(2)
    }

    /// `(V1, V2, E[Y_d])`; the total variance is their sum.
    pub fn variance_components(&self) -> (f64, f64, f64) {
        let v1 = (1.0 + self.b * PI.powi(4) / 5.0).powi(2) / 2.0;
        let v2 = self.a * self.a / 8.0;
        let e_yd = self.b * self.b * PI.powi(8) * (1.0 / 9.0 - 1.0 / 25.0) / 2.0;
        (v1, v2, e_yd)
    }

    pub fn total_variance(&self) -> f64 {
        let (v1, v2, v13) = self.variance_components();
        v1 + v2 + v13
    }

    /// All Sobol indices of `(X1, X2, X3)`.
    pub fn indices(&self) -> Vec<SobolEstimate> {
        let (v1, v2, v13) = self.variance_components();
        let v = v1 + v2 + v13;
        [
            ("S1", v1 / v),
            ("S2", v2 / v),
            ("ST3", v13 / v),
            ("S12", 0.0),
            ("S13", v13 / v),
            ("S23", 0.0),
            ("S123", 0.0),
            ("ST1", (v1 + v13) / v),
            ("ST2", v2 / v),
            ("S3", 0.0),
        ]
        .into_iter()
        .map(|(l, x)| SobolEstimate::point(l, x, Method::Exact))
        .collect()
    }
}

pub fn ishigami(x1: f64, x2: f64, x3: f64) -> f64 {
    IshigamiOracle::default().eval(x1, x2, x3)
}

pub fn exact_mean(x1: f64, x2: f64) -> f64 {
    IshigamiOracle::default().mean(x1, x2)
}

pub fn exact_dispersion(x1: f64) -> f64 {
    IshigamiOracle::default().dispersion(x1)
}

pub fn exact_indices() -> Vec<SobolEstimate> {
    IshigamiOracle::default().indices()
}

/// `U[-π, π]` for each of `X1`, `X2`.
pub fn controllable_distributions() -> Vec<InputDistribution> {
    vec![InputDistribution::uniform(-PI, PI).expect("valid bounds"); 2]
}

pub fn controllable_names() -> Vec<String> {
    vec!["x1".into(), "x2".into()]
}

/// A simulated sample. `x3` is kept for checks only.
#[derive(Debug, Clone)]
pub struct IshigamiSample {
    pub data: Dataset,
    pub x3: DVector<f64>,
}

pub fn simulate(n: usize, seed: u64) -> Result<IshigamiSample> {
    let dists = vec![InputDistribution::uniform(-PI, PI)?; 3];
    let full = sample_monte_carlo(&dists, n, seed)?;
    let f = IshigamiOracle::default();
    let y = DVector::from_fn(n, |i, _| f.eval(full.points[(i, 0)], full.points[(i, 1)], full.points[(i, 2)]));
    let x3 = full.points.column(2).into_owned();
    let mut design = Design::new(full.points.columns(0, 2).into_owned(), controllable_names())?;
    design.seed = seed;
    Ok(IshigamiSample { data: Dataset::new(design, y)?, x3 })
}

fn map_rows(x: &Design, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<DVector<f64>> {
    let c1 = x.column_index("x1")?;
    let c2 = x.column_index("x2").ok();
    Ok(DVector::from_fn(x.nrows(), |i, _| {
        let row = [x.points[(i, c1)], c2.map_or(0.0, |c| x.points[(i, c)])];
        f(&row)
    }))
}

/// The exact joint model as an index-estimation problem.
pub fn exact_problem() -> Result<SaProblem<'static>> {
    let f = IshigamiOracle::default();
    Ok(SaProblem::new(
        move |x: &Design| map_rows(x, |r| f.mean(r[0], r[1])),
        controllable_distributions(),
        controllable_names(),
    )?
    .with_dispersion(move |x: &Design| map_rows(x, |r| f.dispersion(r[0]))))
}

/// Term sets for the six metamodels.
pub mod formulas {
    use super::*;

    /// `1 + x1 + x2² + x1³ + x2⁴`.
    pub fn glm_mean() -> Vec<TermSpec> {
        vec![
            TermSpec::Intercept,
            TermSpec::linear("x1"),
            TermSpec::power("x2", 2),
            TermSpec::power("x1", 3),
            TermSpec::power("x2", 4),
        ]
    }

    pub fn glm_dispersion() -> Vec<TermSpec> {
        vec![TermSpec::Intercept]
    }

    /// Candidate regressors for the dispersion deviance test.
    pub fn glm_dispersion_candidates() -> Vec<TermSpec> {
        vec![TermSpec::Intercept, TermSpec::linear("x1"), TermSpec::linear("x2")]
    }

    /// `1 + x1 + s(x1) + s(x2)`.
    pub fn gam_mean() -> GamSpec {
        GamSpec::new(
            vec![TermSpec::Intercept, TermSpec::linear("x1")],
            vec![SmoothSpec::univariate("x1"), SmoothSpec::univariate("x2")],
            Family::gaussian(),
        )
        .expect("valid GAM formula")
    }

    /// `log(Y_d) = 1 + s(x1)`.
    pub fn gam_dispersion() -> (Vec<TermSpec>, Vec<SmoothSpec>) {
        (vec![TermSpec::Intercept], vec![SmoothSpec::univariate("x1")])
    }

    pub fn gp_mean_trend() -> Vec<TermSpec> {
        vec![TermSpec::Intercept, TermSpec::linear("x1"), TermSpec::linear("x2")]
    }

    pub fn gp_dispersion_trend() -> Vec<TermSpec> {
        vec![TermSpec::Intercept]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub n_learning: usize,
    pub n_test: usize,
    /// Rows per pick-freeze sample.
    pub n_sobol: usize,
    pub replicates: usize,
    pub gp: GpOptions,
    /// Outer iterations for the joint Gp; each one is two Gp fits.
    pub joint_gp_outer_iter: usize,
    /// `S_Yd(X_i)` above this marks `X_i` as acting on the dispersion.
    pub dispersion_threshold: f64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            n_learning: 1000,
            n_test: 10_000,
            n_sobol: 10_000,
            replicates: 100,
            gp: GpOptions::default(),
            joint_gp_outer_iter: 1,
            dispersion_threshold: 0.05,
        }
    }
}

/// Learning and test samples with lazily fitted metamodels, shared by the
/// table recipes.
pub struct IshigamiBench {
    pub seed: u64,
    pub settings: BenchSettings,
    pub learning: IshigamiSample,
    pub test: IshigamiSample,
    simple_glm: OnceLock<Result<GlmFit>>,
    joint_glm: OnceLock<Result<JointModel>>,
    simple_gam: OnceLock<Result<GamFit>>,
    joint_gam: OnceLock<Result<JointModel>>,
    simple_gp: OnceLock<Result<GpModel>>,
    joint_gp: OnceLock<Result<JointModel>>,
}

fn cached<T>(cell: &OnceLock<Result<T>>, f: impl FnOnce() -> Result<T>) -> Result<&T> {
    cell.get_or_init(f).as_ref().map_err(Clone::clone)
}

fn ishigami_label(l: &str) -> String {
    match l {
        "ST_eps" => "ST3".into(),
        "S1_eps" => "S13".into(),
        "S2_eps" => "S23".into(),
        "S12_eps" => "S123".into(),
        "S_eps" => "S3".into(),
        other => other.into(),
    }
}

fn relabel(mut e: SobolEstimate) -> SobolEstimate {
    e.label = ishigami_label(&e.label);
    e
}

impl IshigamiBench {
    pub fn new(seed: u64, settings: BenchSettings) -> Result<Self> {
        if settings.n_learning < 10 || settings.n_test < 10 {
            return Err(Error::Config("learning and test samples need at least 10 rows".into()));
        }
        Ok(Self {
            seed,
            settings,
            learning: simulate(settings.n_learning, derive_seed(seed, 10))?,
            test: simulate(settings.n_test, derive_seed(seed, 11))?,
            simple_glm: OnceLock::new(),
            joint_glm: OnceLock::new(),
            simple_gam: OnceLock::new(),
            joint_gam: OnceLock::new(),
            simple_gp: OnceLock::new(),
            joint_gp: OnceLock::new(),
        })
    }

    pub fn simple_glm(&self) -> Result<&GlmFit> {
        cached(&self.simple_glm, || fit_glm(&self.learning.data, &formulas::glm_mean(), Family::gaussian()))
    }

    pub fn joint_glm(&self) -> Result<&JointModel> {
        cached(&self.joint_glm, || {
            let spec = JointSpec::glm(formulas::glm_mean(), Family::gaussian(), formulas::glm_dispersion())?;
            fit_joint_from_mean(&self.learning.data, &spec, FittedModel::Glm(self.simple_glm()?.clone()))
        })
    }

    pub fn simple_gam(&self) -> Result<&GamFit> {
        cached(&self.simple_gam, || fit_gam(&self.learning.data, &formulas::gam_mean()))
    }

    pub fn joint_gam(&self) -> Result<&JointModel> {
        cached(&self.joint_gam, || {
            let (p, s) = formulas::gam_dispersion();
            let spec = JointSpec::gam(formulas::gam_mean(), p, s)?;
            fit_joint_from_mean(&self.learning.data, &spec, FittedModel::Gam(self.simple_gam()?.clone()))
        })
    }

    pub fn simple_gp(&self) -> Result<&GpModel> {
        cached(&self.simple_gp, || fit_gp(&self.learning.data, &formulas::gp_mean_trend(), &self.settings.gp))
    }

    pub fn joint_gp(&self) -> Result<&JointModel> {
        cached(&self.joint_gp, || {
            let mut spec = JointSpec::gp(formulas::gp_mean_trend(), formulas::gp_dispersion_trend(), self.settings.gp)?;
            spec.max_outer_iter = self.settings.joint_gp_outer_iter;
            fit_joint_from_mean(&self.learning.data, &spec, FittedModel::Gp(self.simple_gp()?.clone()))
        })
    }

    fn sobol_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, 100 + stream)
    }
}

fn fit_rows(report: &mut Report, model: &str, mean: &FittedModel, test: &Dataset) -> Result<f64> {
    let q = q2(mean, test)?;
    if let Some(d) = mean.explained_deviance() {
        report.push_value("table1", model, "D_expl", d);
    }
    report.push_value("table1", model, "Q2", q);
    Ok(q)
}

fn formula_of(model: &FittedModel, lhs: &str) -> Option<String> {
    match model {
        FittedModel::Glm(g) => Some(g.formula(lhs)),
        FittedModel::Gam(g) => Some(g.formula(lhs)),
        FittedModel::Gp(_) => None,
    }
}

/// Fit quality of the six metamodels, the joint GLM dispersion deviance
/// test and the Gp variance parameters.
pub fn table1(bench: &IshigamiBench) -> Result<Report> {
    let mut r = Report::new("Ishigami metamodel fits", bench.seed);
    let test = &bench.test.data;

    let sglm = FittedModel::Glm(bench.simple_glm()?.clone());
    fit_rows(&mut r, "simple_glm", &sglm, test)?;
    r.push_text("table1", "simple_glm", "formula", formula_of(&sglm, "Y").unwrap_or_default());

    let jglm = bench.joint_glm()?;
    fit_rows(&mut r, "joint_glm", &jglm.mean_model, test)?;
    r.push_text("table1", "joint_glm", "formula", formula_of(&jglm.mean_model, "Y_m").unwrap_or_default());
    r.push_text("table1", "joint_glm", "formula_disp", formula_of(&jglm.disp_model, "log(Y_d)").unwrap_or_default());
    if let FittedModel::Glm(g) = &jglm.disp_model {
        r.push_value("table1", "joint_glm", "disp_intercept", g.beta[0]);
    }
    let disp_data = bench.learning.data.with_response(jglm.dispersion_statistic.clone())?;
    let reduced = fit_glm(&disp_data, &formulas::glm_dispersion(), Family::gamma_log())?;
    let full = fit_glm(&disp_data, &formulas::glm_dispersion_candidates(), Family::gamma_log())?;
    let test_result = compare_nested(&reduced, &full)?;
    r.push_value("table1", "joint_glm", "disp_test_p_value", test_result.p_value);

    let sgam = FittedModel::Gam(bench.simple_gam()?.clone());
    fit_rows(&mut r, "simple_gam", &sgam, test)?;
    r.push_text("table1", "simple_gam", "formula", formula_of(&sgam, "Y").unwrap_or_default());

    let jgam = bench.joint_gam()?;
    fit_rows(&mut r, "joint_gam", &jgam.mean_model, test)?;
    r.push_text("table1", "joint_gam", "formula", formula_of(&jgam.mean_model, "Y_m").unwrap_or_default());
    r.push_text("table1", "joint_gam", "formula_disp", formula_of(&jgam.disp_model, "log(Y_d)").unwrap_or_default());
    r.push_value("table1", "joint_gam", "outer_iterations", jgam.outer_iterations as f64);

    let sgp = bench.simple_gp()?;
    fit_rows(&mut r, "simple_gp", &FittedModel::Gp(sgp.clone()), test)?;
    for (i, t) in sgp.theta.iter().enumerate() {
        r.push_value("table1", "simple_gp", &format!("theta{}", i + 1), *t);
    }
    for (i, p) in sgp.power.iter().enumerate() {
        r.push_value("table1", "simple_gp", &format!("power{}", i + 1), *p);
    }
    r.push_value("table1", "simple_gp", "sigma2", sgp.sigma2);
    r.push_value("table1", "simple_gp", "nugget2", sgp.nugget2);
    r.push_value("table1", "simple_gp", "nugget_fraction", sgp.nugget_fraction());
    r.push_value("table1", "simple_gp", "nugget_share", sgp.nugget_share_of_output_variance());

    let jgp = bench.joint_gp()?;
    fit_rows(&mut r, "joint_gp", &jgp.mean_model, test)?;
    r.notes.push(format!(
        "learning n = {}, test n = {}; X3 withheld from all fits",
        bench.learning.data.n(),
        test.n()
    ));
    Ok(r)
}

fn exact_rows(r: &mut Report, table: &str, labels: &[&str]) {
    for e in exact_indices() {
        if labels.contains(&e.label.as_str()) {
            r.push_estimate(table, "exact", &e);
        }
    }
}

/// Monte Carlo and deduced indices of one joint model.
fn joint_indices(bench: &IshigamiBench, jm: &JointModel, stream: u64) -> Result<Vec<SobolEstimate>> {
    let s = &bench.settings;
    let settings = JointAnalysis {
        labels: vec![
            IndexLabel::First(0),
            IndexLabel::First(1),
            IndexLabel::TotalUncontrollable,
            IndexLabel::Second(0, 1),
        ],
        n: s.n_sobol,
        replicates: s.replicates,
        seed: bench.sobol_seed(stream),
        dispersion_threshold: s.dispersion_threshold,
    };
    Ok(analyse_joint(jm, controllable_distributions(), controllable_names(), &settings)?
        .into_iter()
        .map(relabel)
        .collect())
}

/// Sobol indices from the joint models, with exact values.
pub fn table2(bench: &IshigamiBench) -> Result<Report> {
    let mut r = Report::new("Ishigami Sobol indices from joint models", bench.seed);
    exact_rows(&mut r, "table2", &["S1", "S2", "ST3", "S12", "S13", "S23", "S123", "ST1", "ST2", "S3"]);
    for (k, (name, jm)) in [
        ("joint_glm", bench.joint_glm()?),
        ("joint_gam", bench.joint_gam()?),
        ("joint_gp", bench.joint_gp()?),
    ]
    .into_iter()
    .enumerate()
    {
        for e in joint_indices(bench, jm, k as u64)? {
            r.push_estimate("table2", name, &e);
        }
    }
    r.notes.push(format!(
        "{} replicates of N = {} per index; sd is the sample standard deviation across replicates",
        bench.settings.replicates, bench.settings.n_sobol
    ));
    Ok(r)
}

/// Indices from the simple GAM and simple Gp: first-order by Monte Carlo
/// over the data variance, `ST3 = 1 − Q2`.
pub fn table3(bench: &IshigamiBench) -> Result<Report> {
    let mut r = Report::new("Ishigami Sobol indices from simple metamodels", bench.seed);
    exact_rows(&mut r, "table3", &["S1", "S2", "ST3", "S12"]);
    let y = &bench.learning.data.response;
    let var_y = y.variance() * y.len() as f64 / (y.len() as f64 - 1.0);
    let s = &bench.settings;
    let gam = FittedModel::Gam(bench.simple_gam()?.clone());
    let gp = FittedModel::Gp(bench.simple_gp()?.clone());
    for (k, (name, model)) in [("simple_gam", &gam), ("simple_gp", &gp)].into_iter().enumerate() {
        let pb = SaProblem::from_predictor(model, controllable_distributions(), controllable_names())?
            .with_total_variance(TotalVarianceMode::Data(var_y));
        let mut labels = vec![IndexLabel::First(0), IndexLabel::First(1)];
        if !model.is_additive() {
            labels.push(IndexLabel::Second(0, 1));
        }
        for e in replicate_indices(&pb, &labels, s.n_sobol, s.replicates, bench.sobol_seed(5 + k as u64))? {
            r.push_estimate("table3", name, &e);
        }
        let q = q2(model, &bench.test.data)?;
        r.push_estimate("table3", name, &relabel(total_index_controllable_from_q2(q)));
        if model.is_additive() {
            r.push_estimate("table3", name, &SobolEstimate::point("S12", 0.0, Method::Eq));
        }
    }
    if let FittedModel::Gp(g) = &gp {
        r.push_value("table3", "simple_gp", "nugget_share", g.nugget_share_of_output_variance());
    }
    Ok(r)
}

pub fn run_table1(seed: u64) -> Result<Report> {
    table1(&IshigamiBench::new(seed, BenchSettings::default())?)
}

pub fn run_table2(seed: u64) -> Result<Report> {
    table2(&IshigamiBench::new(seed, BenchSettings::default())?)
}

pub fn run_table3(seed: u64) -> Result<Report> {
    table3(&IshigamiBench::new(seed, BenchSettings::default())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSettings {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub n_test: usize,
    /// Points over which `Y_d` and `Y_m` are averaged for `ST3`.
    pub n_integration: usize,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self { n_grid: (30..=200).step_by(5).collect(), replicates: 100, n_test: 1000, n_integration: 1_000_000 }
    }
}

/// Per-n summary of the convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCell {
    pub n: usize,
    pub q2: Vec<f64>,
    pub st3: Vec<f64>,
    pub failures: usize,
}

fn band(v: &[f64]) -> (f64, f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mut d = Data::new(v.to_vec());
    (mean, d.quantile(0.05), d.quantile(0.95))
}

impl ConvergenceCell {
    pub fn q2_band(&self) -> (f64, f64, f64) {
        band(&self.q2)
    }

    pub fn st3_band(&self) -> (f64, f64, f64) {
        band(&self.st3)
    }
}

/// `E[Y_d] / (Var[Y_m] + E[Y_d])` over a fixed integration sample.
fn st3_by_averaging(jm: &JointModel, points: &Design) -> Result<f64> {
    const CHUNK: usize = 50_000;
    let n = points.nrows();
    let (mut sm, mut smm, mut sd) = (0.0, 0.0, 0.0);
    let mut start = 0;
    while start < n {
        let part = points.rows(start..(start + CHUNK).min(n));
        let m = jm.predict_mean(&part)?;
        let d = jm.predict_dispersion(&part)?;
        sm += m.sum();
        smm += m.dot(&m);
        sd += d.sum();
        start += CHUNK;
    }
    let nf = n as f64;
    let var_m = (smm - sm * sm / nf) / (nf - 1.0);
    let e_d = sd / nf;
    Ok(e_d / (var_m + e_d))
}

/// Joint GAM fits over a grid of learning sizes: `Q2` on a test sample and
/// `ST3` by averaging the dispersion component.
pub fn convergence_study(settings: &ConvergenceSettings, seed: u64) -> Result<Vec<ConvergenceCell>> {
    if settings.replicates == 0 || settings.n_grid.is_empty() {
        return Err(Error::Config("the convergence study needs sizes and replicates".into()));
    }
    let integ = sample_monte_carlo(&controllable_distributions(), settings.n_integration, derive_seed(seed, 1))?;
    let integ = Design::new(integ.points, controllable_names())?;
    let test = simulate(settings.n_test, derive_seed(seed, 2))?;
    let (p, s) = formulas::gam_dispersion();
    let spec = JointSpec::gam(formulas::gam_mean(), p, s)?;

    let tasks: Vec<(usize, usize)> = settings
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(a, _)| (0..settings.replicates).map(move |r| (a, r)))
        .collect();
    let results: Vec<Option<(f64, f64)>> = tasks
        .par_iter()
        .map(|&(a, r)| {
            let n = settings.n_grid[a];
            let sample = simulate(n, derive_seed(seed, 1_000_000 + (n as u64) * 10_000 + r as u64)).ok()?;
            let jm = fit_joint(&sample.data, &spec).ok()?;
            let pred = jm.predict_mean(&test.data.design).ok()?;
            let q = q2_from_predictions(&test.data.response, &pred).ok()?;
            let st = st3_by_averaging(&jm, &integ).ok()?;
            (q.is_finite() && st.is_finite()).then_some((q, st))
        })
        .collect();

    let mut cells: Vec<ConvergenceCell> = settings
        .n_grid
        .iter()
        .map(|&n| ConvergenceCell { n, q2: Vec::new(), st3: Vec::new(), failures: 0 })
        .collect();
    for (&(a, _), res) in tasks.iter().zip(results) {
        match res {
            Some((q, st)) => {
                cells[a].q2.push(q);
                cells[a].st3.push(st);
            }
            None => cells[a].failures += 1,
        }
    }
    Ok(cells)
}

pub fn convergence_report(cells: &[ConvergenceCell], seed: u64) -> Report {
    let mut r = Report::new("Joint GAM convergence over the learning size", seed);
    for c in cells {
        let (qm, q05, q95) = c.q2_band();
        let (sm, s05, s95) = c.st3_band();
        for (name, v) in [
            ("Q2_mean", qm),
            ("Q2_q05", q05),
            ("Q2_q95", q95),
            ("ST3_mean", sm),
            ("ST3_q05", s05),
            ("ST3_q95", s95),
            ("failures", c.failures as f64),
        ] {
            r.push_study_value("figure4", "joint_gam", name, c.n, v);
        }
    }
    r
}

/// Exact and fitted mean and dispersion components along `x1` (at
/// `x2 = 0`) and along `x2` (at `x1 = π/2`), for plotting.
pub fn component_curves(bench: &IshigamiBench, points: usize, models: &[&str]) -> Result<Report> {
    let mut r = Report::new("Ishigami mean and dispersion components", bench.seed);
    let grid: Vec<f64> = (0..points).map(|i| -PI + 2.0 * PI * i as f64 / (points - 1).max(1) as f64).collect();
    let along = |axis: usize| -> Result<Design> {
        let pts = DMatrix::from_fn(points, 2, |i, j| match (axis, j) {
            (a, b) if a == b => grid[i],
            (_, 0) => PI / 2.0,
            _ => 0.0,
        });
        Design::new(pts, controllable_names())
    };
    let f = IshigamiOracle::default();
    for axis in 0..2 {
        let x = along(axis)?;
        let tag = format!("x{}", axis + 1);
        for i in 0..points {
            let (a, b) = (x.points[(i, 0)], x.points[(i, 1)]);
            r.push_study_value("figure3", "exact", &format!("mean_{tag}"), i, f.mean(a, b));
            r.push_study_value("figure3", "exact", &format!("disp_{tag}"), i, f.dispersion(a));
        }
        for &name in models {
            let jm = match name {
                "joint_glm" => bench.joint_glm()?,
                "joint_gam" => bench.joint_gam()?,
                "joint_gp" => bench.joint_gp()?,
                other => return Err(Error::Config(format!("unknown model `{other}`"))),
            };
            let m = jm.predict_mean(&x)?;
            let d = jm.predict_dispersion(&x)?;
            for i in 0..points {
                r.push_study_value("figure3", name, &format!("mean_{tag}"), i, m[i]);
                r.push_study_value("figure3", name, &format!("disp_{tag}"), i, d[i]);
            }
        }
    }
    r.notes.push("n is the grid index; grid spans [-pi, pi]; x2 = 0 along x1, x1 = pi/2 along x2".into());
    Ok(r)
}

/// Brute-force Monte Carlo check of the exact variance decomposition:
/// returns `(S1, S2, ST3)` estimates and their standard errors, from
/// `n_outer × n_inner` simulator runs per index.
pub fn brute_force_indices(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    // Var(Y) and E[Var(Y | X1, X2)] by direct simulation; V_i by the
    // pick-freeze identity on the simulator itself, with X3 redrawn.
    let f = IshigamiOracle::default();
    let mut rng = seeded_rng(seed);
    let mut draw = || rng.random_range(-PI..PI);
    let (mut sy, mut syy) = (0.0, 0.0);
    let mut p1 = Vec::with_capacity(n);
    let mut p2 = Vec::with_capacity(n);
    let mut p3 = Vec::with_capacity(n);
    for _ in 0..n {
        let (a1, a2, a3) = (draw(), draw(), draw());
        let (b1, b2, b3) = (draw(), draw(), draw());
        let ya = f.eval(a1, a2, a3);
        let yb = f.eval(b1, b2, b3);
        sy += ya + yb;
        syy += ya * ya + yb * yb;
        // share X1 only, X2 only, (X1, X2) with a fresh X3
        p1.push(ya * f.eval(a1, b2, b3));
        p2.push(ya * f.eval(b1, a2, b3));
        let yc = f.eval(a1, a2, b3);
        p3.push(0.5 * (ya - yc) * (ya - yc));
    }
    let m = sy / (2 * n) as f64;
    let var = syy / (2 * n) as f64 - m * m;
    let stats = |v: &[f64], centre: f64| {
        let k = v.len() as f64;
        let mean = v.iter().sum::<f64>() / k - centre;
        let s2 = v.iter().map(|x| (x - centre - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (mean, (s2 / k).sqrt())
    };
    let (v1, e1) = stats(&p1, m * m);
    let (v2, e2) = stats(&p2, m * m);
    let (v3, e3) = stats(&p3, 0.0);
    (vec![v1 / var, v2 / var, v3 / var], vec![e1 / var, e2 / var, e3 / var])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sobol::{dispersion_sensitivity, first_order_index, second_order_index, total_index_uncontrollable};

    #[test]
    fn pointwise_values() {
        assert_eq!(ishigami(0.0, 0.0, 0.0), 0.0);
        assert!((ishigami(PI / 2.0, 0.0, 0.0) - 1.0).abs() < 1e-15);
        let direct = 1.0 + 7.0 + 0.1 * PI.powi(4);
        assert!((ishigami(PI / 2.0, PI / 2.0, PI) - direct).abs() < 1e-12);
        assert!((direct - 17.7409).abs() < 1e-4);
        assert_eq!(exact_mean(0.0, 0.0), 0.0);
        assert!((exact_dispersion(PI / 2.0) - 6.7474).abs() < 1e-4);
    }

    #[test]
    fn exact_indices_table() {
        let e = exact_indices();
        let get = |l: &str| e.iter().find(|x| x.label == l).unwrap().value;
        assert_eq!(format!("{:.3}", get("S1")), "0.314");
        assert_eq!(format!("{:.3}", get("S2")), "0.442");
        assert_eq!(format!("{:.3}", get("ST3")), "0.244");
        assert!((get("S1") + get("S2") + get("ST3") - 1.0).abs() < 1e-12);
        assert!((IshigamiOracle::default().total_variance() - 13.845).abs() < 1e-3);
        assert!(e.iter().all(|x| x.method == Method::Exact && x.sd.is_none()));
    }

    #[test]
    fn dispersion_symmetry() {
        for i in 0..50 {
            let x = -PI + i as f64 * 0.13;
            assert!((exact_dispersion(x) - exact_dispersion(PI - x)).abs() < 1e-12);
            assert!((exact_dispersion(x) - exact_dispersion(-x)).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_moments_by_simulation() {
        let mut rng = seeded_rng(3);
        let n = 200_000;
        for &(x1, x2) in &[(0.3, -1.2), (2.0, 0.5), (-1.0, 3.0)] {
            let ys: Vec<f64> = (0..n).map(|_| ishigami(x1, x2, rng.random_range(-PI..PI))).collect();
            let m = ys.iter().sum::<f64>() / n as f64;
            let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se_m = (v / n as f64).sqrt();
            assert!((m - exact_mean(x1, x2)).abs() < 4.0 * se_m + 1e-12);
            let se_v = exact_dispersion(x1) * (2.0 / n as f64).sqrt() * 2.0;
            assert!((v - exact_dispersion(x1)).abs() < 4.0 * se_v + 1e-12);
        }
    }

    #[test]
    fn brute_force_matches_closed_form() {
        let (s, se) = brute_force_indices(400_000, 5);
        let e = exact_indices();
        for (k, l) in ["S1", "S2", "ST3"].iter().enumerate() {
            let exact = e.iter().find(|x| x.label == *l).unwrap().value;
            assert!((s[k] - exact).abs() < 4.0 * se[k], "{l}: {} vs {exact} (se {})", s[k], se[k]);
        }
    }

    #[test]
    fn exact_problem_indices() {
        let pb = exact_problem().unwrap();
        let s1 = first_order_index(&pb, 0, 10_000, 1).unwrap().value;
        let s2 = first_order_index(&pb, 1, 10_000, 2).unwrap().value;
        let s12 = second_order_index(&pb, 0, 1, 10_000, 3).unwrap().value;
        let st = total_index_uncontrollable(&pb, 10_000, 4).unwrap().value;
        assert!((s1 - 0.314).abs() < 0.03, "{s1}");
        assert!((s2 - 0.442).abs() < 0.03, "{s2}");
        assert!(s12.abs() < 0.03, "{s12}");
        assert!((st - 0.244).abs() < 0.02, "{st}");
        let d1 = dispersion_sensitivity(&pb, 0, 10_000, 5).unwrap().value;
        let d2 = dispersion_sensitivity(&pb, 1, 10_000, 6).unwrap().value;
        assert!(d1 > 0.95 && d2.abs() < 0.05, "{d1} {d2}");
    }

    #[test]
    fn simulation_hides_x3() {
        let s = simulate(50, 9).unwrap();
        assert_eq!(s.data.design.column_names, vec!["x1", "x2"]);
        assert_eq!(s.x3.len(), 50);
        let f = IshigamiOracle::default();
        for i in 0..50 {
            let (a, b) = (s.data.design.points[(i, 0)], s.data.design.points[(i, 1)]);
            assert!((s.data.response[i] - f.eval(a, b, s.x3[i])).abs() < 1e-12);
        }
        let again = simulate(50, 9).unwrap();
        assert_eq!(again.data.response, s.data.response);
    }

    #[test]
    fn small_convergence_study() {
        let settings = ConvergenceSettings { n_grid: vec![60, 120], replicates: 3, n_test: 300, n_integration: 20_000 };
        let cells = convergence_study(&settings, 4).unwrap();
        assert_eq!(cells.len(), 2);
        for c in &cells {
            assert_eq!(c.q2.len() + c.failures, 3);
        }
        let r = convergence_report(&cells, 4);
        assert_eq!(r.rows.len(), 14);
    }

    #[test]
    fn label_mapping() {
        assert_eq!(ishigami_label("ST_eps"), "ST3");
        assert_eq!(ishigami_label("S1_eps"), "S13");
        assert_eq!(ishigami_label("S12_eps"), "S123");
        assert_eq!(ishigami_label("S1"), "S1");
    }
}
