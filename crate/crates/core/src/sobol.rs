//! Variance-based sensitivity indices by pick-freeze Monte Carlo.
//!
//! For two independent samples `A` and `B` of the controllable inputs and a
//! set of columns `u`, `B_A^u` takes the columns `u` from `A` and the rest
//! from `B`. Then `Cov(f(A), f(B_A^u)) = Var[E(f | X_u)]`. Products are
//! taken after centering on the pooled mean of `f(A)` and `f(B)`.
//!
//! For a stochastic model with mean component `Y_m` and dispersion
//! component `Y_d`, `Var(Y) = Var[Y_m] + E[Y_d]`, the first-order indices
//! of the controllable inputs are those of `Y_m` divided by `Var(Y)`, and
//! the total index of the uncontrollable part is `E[Y_d] / Var(Y)`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{derive_seed, sample_monte_carlo, Design, InputDistribution};
use crate::error::{Error, Result};
use crate::joint::{Engine, JointModel};
use crate::MeanPredictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MC")]
    MC,
    #[serde(rename = "Eq")]
    Eq,
    #[serde(rename = "Q2")]
    Q2,
    #[serde(rename = "S_Yd")]
    SYd,
    #[serde(rename = "Exact")]
    Exact,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::MC => "MC",
            Method::Eq => "Eq",
            Method::Q2 => "Q2",
            Method::SYd => "S_Yd",
            Method::Exact => "Exact",
        })
    }
}

/// Interval for an index that is known only up to bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_open: bool,
    pub upper_open: bool,
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Bounds {
    pub fn render(&self) -> String {
        format!(
            "{}{:.3}, {:.3}{}",
            if self.lower_open { "]" } else { "[" },
            self.lower,
            self.upper,
            if self.upper_open { "[" } else { "]" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolEstimate {
    pub label: String,
    /// Point estimate; for bounded rows, the upper bound.
    pub value: f64,
    pub sd: Option<f64>,
    pub method: Method,
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

impl SobolEstimate {
    pub fn point(label: impl Into<String>, value: f64, method: Method) -> Self {
        Self { label: label.into(), value, sd: None, method, replicates: 1, bounds: None }
    }

    pub fn bounded(label: impl Into<String>, bounds: Bounds, method: Method) -> Self {
        Self { label: label.into(), value: bounds.upper, sd: None, method, replicates: 1, bounds: Some(bounds) }
    }

    /// Value as printed in a table: the number, or the interval.
    pub fn display_value(&self) -> String {
        match &self.bounds {
            Some(b) => b.render(),
            None => format!("{:.3}", self.value),
        }
    }
}

/// Which index to estimate. Inputs are 0-based here and 1-based in labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IndexLabel {
    First(usize),
    Second(usize, usize),
    TotalUncontrollable,
    DispersionFirst(usize),
}

impl IndexLabel {
    /// Label with compact pair names (`S12`), as used for up to 9 inputs.
    pub fn label(&self) -> String {
        self.label_for(0)
    }

    /// Label for a problem with `p` inputs; pairs are written `S1_2` when
    /// `p > 9` so that `parse(label_for(p), p)` round-trips.
    pub fn label_for(&self, p: usize) -> String {
        match *self {
            IndexLabel::First(i) => format!("S{}", i + 1),
            IndexLabel::Second(i, j) if p > 9 || j >= 9 => format!("S{}_{}", i + 1, j + 1),
            IndexLabel::Second(i, j) => format!("S{}{}", i + 1, j + 1),
            IndexLabel::TotalUncontrollable => "ST_eps".into(),
            IndexLabel::DispersionFirst(i) => format!("S_Yd(X{})", i + 1),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            IndexLabel::DispersionFirst(_) => Method::SYd,
            _ => Method::MC,
        }
    }

    /// Parses `S1`, `S12`, `S1_2` (for inputs above 9), `ST_eps`, `S_Yd(X1)`.
    pub fn parse(s: &str, p: usize) -> Result<Self> {
        let bad = || Error::Config(format!("unknown index label `{s}`"));
        let index = |t: &str| -> Result<usize> {
            let i: usize = t.parse().map_err(|_| bad())?;
            if i == 0 || i > p {
                return Err(Error::Config(format!("index label `{s}` refers to input {i} of {p}")));
            }
            Ok(i - 1)
        };
        if s == "ST_eps" {
            return Ok(IndexLabel::TotalUncontrollable);
        }
        if let Some(rest) = s.strip_prefix("S_Yd(X").and_then(|r| r.strip_suffix(')')) {
            return Ok(IndexLabel::DispersionFirst(index(rest)?));
        }
        let rest = s.strip_prefix('S').ok_or_else(bad)?;
        if let Some((a, b)) = rest.split_once('_') {
            let (i, j) = (index(a)?, index(b)?);
            return if i < j { Ok(IndexLabel::Second(i, j)) } else { Err(bad()) };
        }
        if rest.len() == 2 && p <= 9 {
            let (i, j) = (index(&rest[..1])?, index(&rest[1..])?);
            return if i < j { Ok(IndexLabel::Second(i, j)) } else { Err(bad()) };
        }
        Ok(IndexLabel::First(index(rest)?))
    }
}

type Evaluator<'a> = Box<dyn Fn(&Design) -> Result<DVector<f64>> + Send + Sync + 'a>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TotalVarianceMode {
    /// `Var_X[Y_m] + E_X[Y_d]` from the same Monte Carlo sample.
    Reconstructed,
    /// A supplied empirical variance of the output.
    Data(f64),
}

/// Functions and input distributions for sensitivity analysis.
pub struct SaProblem<'a> {
    mean_fn: Evaluator<'a>,
    disp_fn: Option<Evaluator<'a>>,
    pub dists: Vec<InputDistribution>,
    pub column_names: Vec<String>,
    pub total_variance_mode: TotalVarianceMode,
}

impl<'a> SaProblem<'a> {
    pub fn new(
        mean_fn: impl Fn(&Design) -> Result<DVector<f64>> + Send + Sync + 'a,
        dists: Vec<InputDistribution>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::Config("at least one input distribution is required".into()));
        }
        if dists.len() != column_names.len() {
            return Err(Error::Dimension(format!(
                "{} distributions for {} inputs",
                dists.len(),
                column_names.len()
            )));
        }
        for d in &dists {
            d.validate()?;
        }
        Ok(Self {
            mean_fn: Box::new(mean_fn),
            disp_fn: None,
            dists,
            column_names,
            total_variance_mode: TotalVarianceMode::Reconstructed,
        })
    }

    pub fn with_dispersion(mut self, disp_fn: impl Fn(&Design) -> Result<DVector<f64>> + Send + Sync + 'a) -> Self {
        self.disp_fn = Some(Box::new(disp_fn));
        self
    }

    pub fn with_total_variance(mut self, mode: TotalVarianceMode) -> Self {
        self.total_variance_mode = mode;
        self
    }

    /// Mean function only.
    pub fn from_predictor(
        model: &'a (dyn MeanPredictor + Sync),
        dists: Vec<InputDistribution>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        Self::new(move |x: &Design| model.predict_mean(x), dists, column_names)
    }

    /// Mean and dispersion components of a joint model.
    pub fn from_joint(jm: &'a JointModel, dists: Vec<InputDistribution>, column_names: Vec<String>) -> Result<Self> {
        for c in jm.input_columns() {
            if !column_names.contains(&c) {
                return Err(Error::Schema(format!("model input `{c}` has no distribution")));
            }
        }
        Ok(Self::new(move |x: &Design| jm.predict_mean(x), dists, column_names)?
            .with_dispersion(move |x: &Design| jm.predict_dispersion(x)))
    }

    pub fn n_inputs(&self) -> usize {
        self.dists.len()
    }

    pub fn has_dispersion(&self) -> bool {
        self.disp_fn.is_some()
    }

    fn sample(&self, n: usize, seed: u64) -> Result<Design> {
        let mut d = sample_monte_carlo(&self.dists, n, seed)?;
        d.column_names = self.column_names.clone();
        Ok(d)
    }

    fn eval(&self, f: &Evaluator<'a>, x: &Design) -> Result<DVector<f64>> {
        let v = f(x)?;
        if v.len() != x.nrows() {
            return Err(Error::Dimension("function returned the wrong number of values".into()));
        }
        if v.iter().any(|y| !y.is_finite()) {
            return Err(Error::Numerical("function returned a non-finite value".into()));
        }
        Ok(v)
    }
}

fn mix(a: &Design, b: &Design, cols: &[usize]) -> Design {
    let mut pts: DMatrix<f64> = b.points.clone();
    for &c in cols {
        pts.set_column(c, &a.points.column(c));
    }
    Design { points: pts, column_names: a.column_names.clone(), seed: a.seed }
}

fn pooled_mean_var(a: &DVector<f64>, b: &DVector<f64>) -> (f64, f64) {
    let n = (a.len() + b.len()) as f64;
    let m = (a.sum() + b.sum()) / n;
    let ss: f64 = a.iter().chain(b.iter()).map(|v| (v - m) * (v - m)).sum();
    (m, ss / (n - 1.0))
}

fn centered_cov(fa: &DVector<f64>, fu: &DVector<f64>, m: f64) -> f64 {
    fa.iter().zip(fu.iter()).map(|(a, c)| (a - m) * (c - m)).sum::<f64>() / fa.len() as f64
}

/// Variance distinguishable from rounding noise around `mean`.
fn has_variance(var: f64, mean: f64) -> bool {
    var > 1e-12 * mean * mean && var > 0.0
}

/// Evaluations of one function on A, B and the needed mixed samples.
struct PickFreeze {
    fa: DVector<f64>,
    mixed: BTreeMap<Vec<usize>, DVector<f64>>,
    mean: f64,
    var: f64,
}

impl PickFreeze {
    fn new<'a>(
        problem: &SaProblem<'a>,
        f: &Evaluator<'a>,
        a: &Design,
        b: &Design,
        subsets: &[Vec<usize>],
        fa: Option<DVector<f64>>,
    ) -> Result<Self> {
        let p = problem.n_inputs();
        let fa = match fa {
            Some(v) => v,
            None => problem.eval(f, a)?,
        };
        let fb = problem.eval(f, b)?;
        let mut mixed = BTreeMap::new();
        for u in subsets {
            if mixed.contains_key(u) {
                continue;
            }
            let v = if u.len() == p { fa.clone() } else { problem.eval(f, &mix(a, b, u))? };
            mixed.insert(u.clone(), v);
        }
        let (mean, var) = pooled_mean_var(&fa, &fb);
        Ok(Self { fa, mixed, mean, var })
    }

    /// Var[E(f | X_u)]
    fn closed(&self, u: &[usize]) -> f64 {
        centered_cov(&self.fa, &self.mixed[u], self.mean)
    }
}

/// One Monte Carlo run of the requested indices on a fresh sample pair.
fn estimate_run(problem: &SaProblem<'_>, labels: &[IndexLabel], n: usize, seed: u64) -> Result<Vec<f64>> {
    let p = problem.n_inputs();
    for l in labels {
        let ok = match *l {
            IndexLabel::First(i) | IndexLabel::DispersionFirst(i) => i < p,
            IndexLabel::Second(i, j) => i < j && j < p,
            IndexLabel::TotalUncontrollable => true,
        };
        if !ok {
            return Err(Error::Config(format!("index {} is out of range for {p} inputs", l.label())));
        }
        if matches!(l, IndexLabel::TotalUncontrollable | IndexLabel::DispersionFirst(_)) && !problem.has_dispersion() {
            return Err(Error::Config(format!("{} needs a dispersion component", l.label())));
        }
    }
    let a = problem.sample(n, derive_seed(seed, 1))?;
    let b = problem.sample(n, derive_seed(seed, 2))?;

    let mut mean_sets: Vec<Vec<usize>> = Vec::new();
    let mut disp_sets: Vec<Vec<usize>> = Vec::new();
    for l in labels {
        match *l {
            IndexLabel::First(i) => mean_sets.push(vec![i]),
            IndexLabel::Second(i, j) => mean_sets.extend([vec![i], vec![j], vec![i, j]]),
            IndexLabel::DispersionFirst(i) => disp_sets.push(vec![i]),
            IndexLabel::TotalUncontrollable => {}
        }
    }
    let mean_pf = PickFreeze::new(problem, &problem.mean_fn, &a, &b, &mean_sets, None)?;
    let disp_a = match &problem.disp_fn {
        Some(f) => {
            let v = problem.eval(f, &a)?;
            if v.iter().any(|&d| d < 0.0) {
                return Err(Error::Numerical("dispersion component returned a negative value".into()));
            }
            Some(v)
        }
        None => None,
    };
    let disp_pf = match (&problem.disp_fn, disp_sets.is_empty()) {
        (Some(f), false) => Some(PickFreeze::new(problem, f, &a, &b, &disp_sets, disp_a.clone())?),
        _ => None,
    };
    let e_disp = disp_a.as_ref().map_or(0.0, |v| v.mean());
    let total = match problem.total_variance_mode {
        TotalVarianceMode::Reconstructed => mean_pf.var + e_disp,
        TotalVarianceMode::Data(v) => v,
    };
    let needs_total = labels.iter().any(|l| !matches!(l, IndexLabel::DispersionFirst(_)));
    if needs_total && !has_variance(total, mean_pf.mean) {
        return Err(Error::Numerical("total output variance is not positive".into()));
    }
    labels
        .iter()
        .map(|l| match *l {
            IndexLabel::First(i) => Ok(mean_pf.closed(&[i]) / total),
            IndexLabel::Second(i, j) => {
                Ok((mean_pf.closed(&[i, j]) - mean_pf.closed(&[i]) - mean_pf.closed(&[j])) / total)
            }
            IndexLabel::TotalUncontrollable => Ok(e_disp / total),
            IndexLabel::DispersionFirst(i) => {
                let pf = disp_pf.as_ref().expect("dispersion sample built");
                if !has_variance(pf.var, pf.mean) {
                    return Err(Error::Numerical("dispersion component has zero variance".into()));
                }
                Ok(pf.closed(&[i]) / pf.var)
            }
        })
        .collect()
}

fn single(problem: &SaProblem<'_>, label: IndexLabel, n: usize, seed: u64) -> Result<SobolEstimate> {
    if n < 100 {
        return Err(Error::Config(format!("N = {n} is below the minimum of 100")));
    }
    let v = estimate_run(problem, &[label], n, seed)?[0];
    Ok(SobolEstimate::point(label.label_for(problem.n_inputs()), v, label.method()))
}

pub fn first_order_index(problem: &SaProblem<'_>, i: usize, n: usize, seed: u64) -> Result<SobolEstimate> {
    single(problem, IndexLabel::First(i), n, seed)
}

pub fn second_order_index(problem: &SaProblem<'_>, i: usize, j: usize, n: usize, seed: u64) -> Result<SobolEstimate> {
    if i == j {
        return Err(Error::Config("a second-order index needs two different inputs".into()));
    }
    single(problem, IndexLabel::Second(i.min(j), i.max(j)), n, seed)
}

pub fn total_index_uncontrollable(problem: &SaProblem<'_>, n: usize, seed: u64) -> Result<SobolEstimate> {
    single(problem, IndexLabel::TotalUncontrollable, n, seed)
}

pub fn dispersion_sensitivity(problem: &SaProblem<'_>, i: usize, n: usize, seed: u64) -> Result<SobolEstimate> {
    single(problem, IndexLabel::DispersionFirst(i), n, seed)
}

/// Mean and sample standard deviation over runs with the given seeds.
pub fn replicate_with_seeds(
    problem: &SaProblem<'_>,
    labels: &[IndexLabel],
    n: usize,
    seeds: &[u64],
) -> Result<Vec<SobolEstimate>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    if n < 100 {
        return Err(Error::Config(format!("N = {n} is below the minimum of 100")));
    }
    let runs: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&s| estimate_run(problem, labels, n, s))
        .collect::<Result<_>>()?;
    let reps = seeds.len();
    Ok(labels
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let vals: Vec<f64> = runs.iter().map(|r| r[k]).collect();
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let sd = (reps > 1 && l.method() == Method::MC).then(|| {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64).sqrt()
            });
            SobolEstimate { label: l.label_for(problem.n_inputs()), value: mean, sd, method: l.method(), replicates: reps, bounds: None }
        })
        .collect())
}

/// `reps` runs with seeds derived from `seed`.
pub fn replicate_indices(
    problem: &SaProblem<'_>,
    labels: &[IndexLabel],
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<SobolEstimate>> {
    let seeds: Vec<u64> = (0..reps as u64).map(|r| derive_seed(seed, 1000 + r)).collect();
    replicate_with_seeds(problem, labels, n, &seeds)
}

/// `S_Tε = 1 − Q2` when the mean metamodel is assumed to capture all of
/// the controllable variance.
pub fn total_index_controllable_from_q2(q2: f64) -> SobolEstimate {
    SobolEstimate::point("ST_eps", 1.0 - q2, Method::Q2)
}

/// Indices that are deduced rather than estimated: interactions with the
/// uncontrollable variable, its first-order index, and the total indices
/// of the inputs. `in_dispersion[i]` says whether input i acts on the
/// dispersion component; `tag` is the method reported for deduced rows
/// (`Eq` when read off the model structure, `S_Yd` when read off
/// dispersion sensitivity indices).
pub fn deduced_indices(
    first: &[f64],
    second: &BTreeMap<(usize, usize), f64>,
    st_eps: f64,
    in_dispersion: &[bool],
    tag: Method,
) -> Vec<SobolEstimate> {
    let p = first.len();
    let any = in_dispersion.iter().any(|&b| b);
    let mut out = Vec::new();
    for i in 0..p {
        let label = format!("S{}_eps", i + 1);
        out.push(if in_dispersion[i] {
            SobolEstimate::bounded(label, Bounds { lower: 0.0, upper: st_eps, lower_open: true, upper_open: false }, tag)
        } else {
            SobolEstimate::point(label, 0.0, tag)
        });
    }
    if p <= 3 {
        for i in 0..p {
            for j in i + 1..p {
                let label = format!("S{}{}_eps", i + 1, j + 1);
                out.push(if in_dispersion[i] && in_dispersion[j] {
                    SobolEstimate::bounded(label, Bounds { lower: 0.0, upper: st_eps, lower_open: false, upper_open: false }, tag)
                } else {
                    SobolEstimate::point(label, 0.0, tag)
                });
            }
        }
    }
    out.push(if any {
        SobolEstimate::bounded("S_eps", Bounds { lower: 0.0, upper: st_eps, lower_open: false, upper_open: false }, tag)
    } else {
        SobolEstimate::point("S_eps", st_eps, tag)
    });
    for i in 0..p {
        let mut base = first[i];
        for (&(a, b), &v) in second {
            if a == i || b == i {
                base += v;
            }
        }
        let label = format!("ST{}", i + 1);
        out.push(if in_dispersion[i] {
            SobolEstimate::bounded(label, Bounds { lower: base, upper: base + st_eps, lower_open: true, upper_open: false }, tag)
        } else {
            SobolEstimate::point(label, base, tag)
        });
    }
    out
}

/// Settings for [`analyse_joint`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAnalysis {
    /// Indices estimated by Monte Carlo. Second-order indices of an
    /// additive mean formula are reported as zero instead.
    pub labels: Vec<IndexLabel>,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    /// `S_Yd(X_i)` above this marks `X_i` as acting on the dispersion of a
    /// Gp model.
    pub dispersion_threshold: f64,
}

/// Full index table of a joint model: Monte Carlo estimates, dispersion
/// sensitivity indices, and the rows deduced from them.
///
/// Inputs acting on the dispersion are read off the dispersion formula for
/// GLM and GAM models (method `Eq`) and off `S_Yd` for Gp models (method
/// `S_Yd`). `S_Yd` rows are omitted when the dispersion component is
/// constant.
pub fn analyse_joint(
    jm: &JointModel,
    dists: Vec<InputDistribution>,
    column_names: Vec<String>,
    settings: &JointAnalysis,
) -> Result<Vec<SobolEstimate>> {
    let p = column_names.len();
    let pb = SaProblem::from_joint(jm, dists, column_names.clone())?;
    let additive = jm.mean_model.is_additive();
    let mut mc_labels: Vec<IndexLabel> = Vec::new();
    let mut zero_pairs = Vec::new();
    for l in &settings.labels {
        match *l {
            IndexLabel::Second(i, j) if additive => zero_pairs.push((i, j)),
            IndexLabel::DispersionFirst(_) => {}
            other if !mc_labels.contains(&other) => mc_labels.push(other),
            _ => {}
        }
    }
    if !mc_labels.contains(&IndexLabel::TotalUncontrollable) {
        mc_labels.push(IndexLabel::TotalUncontrollable);
    }
    let mc = replicate_indices(&pb, &mc_labels, settings.n, settings.replicates, settings.seed)?;

    let syd: Option<Vec<SobolEstimate>> = (0..p)
        .map(|i| dispersion_sensitivity(&pb, i, settings.n, derive_seed(settings.seed, 500 + i as u64)))
        .collect::<Result<Vec<_>>>()
        .ok();

    let (in_disp, tag) = match (jm.engine(), &syd) {
        (Engine::Gp, Some(s)) => (s.iter().map(|e| e.value > settings.dispersion_threshold).collect::<Vec<_>>(), Method::SYd),
        (Engine::Gp, None) => (vec![false; p], Method::SYd),
        _ => {
            let cols = jm.disp_model.input_columns();
            (column_names.iter().map(|c| cols.contains(c)).collect(), Method::Eq)
        }
    };

    let value_of = |l: IndexLabel| mc.iter().zip(&mc_labels).find(|(_, m)| **m == l).map(|(e, _)| e.value);
    let mut out = mc.clone();
    for &(i, j) in &zero_pairs {
        out.push(SobolEstimate::point(IndexLabel::Second(i, j).label_for(p), 0.0, Method::Eq));
    }
    if let Some(s) = syd {
        out.extend(s);
    }
    let all_first = (0..p).all(|i| value_of(IndexLabel::First(i)).is_some());
    if all_first {
        let first: Vec<f64> = (0..p).map(|i| value_of(IndexLabel::First(i)).unwrap()).collect();
        let mut second = BTreeMap::new();
        for i in 0..p {
            for j in i + 1..p {
                if let Some(v) = value_of(IndexLabel::Second(i, j)) {
                    second.insert((i, j), v);
                }
            }
        }
        let st_eps = value_of(IndexLabel::TotalUncontrollable).expect("always estimated");
        out.extend(deduced_indices(&first, &second, st_eps, &in_disp, tag));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(p: usize, lo: f64, hi: f64) -> Vec<InputDistribution> {
        vec![InputDistribution::uniform(lo, hi).unwrap(); p]
    }

    fn names(p: usize) -> Vec<String> {
        Design::default_names(p)
    }

    fn col_fn(f: impl Fn(&[f64]) -> f64 + Send + Sync) -> impl Fn(&Design) -> Result<DVector<f64>> + Send + Sync {
        move |x: &Design| {
            Ok(DVector::from_fn(x.nrows(), |i, _| {
                let row: Vec<f64> = x.points.row(i).iter().copied().collect();
                f(&row)
            }))
        }
    }

    #[test]
    fn additive_function() {
        let pb = SaProblem::new(col_fn(|x| x[0] + x[1]), unit(2, 0.0, 1.0), names(2)).unwrap();
        let s1 = first_order_index(&pb, 0, 10_000, 1).unwrap();
        assert!((s1.value - 0.5).abs() < 0.02, "{}", s1.value);
        assert_eq!(s1.label, "S1");
        let s12 = second_order_index(&pb, 0, 1, 10_000, 2).unwrap();
        assert!(s12.value.abs() < 0.02);
        assert_eq!(s12.label, "S12");
    }

    #[test]
    fn weighted_additive_oracle() {
        let a = [1.0, 2.0, 3.0];
        let pb = SaProblem::new(col_fn(move |x| a[0] * x[0] + a[1] * x[1] + a[2] * x[2]), unit(3, 0.0, 1.0), names(3)).unwrap();
        let labels = [IndexLabel::First(0), IndexLabel::First(1), IndexLabel::First(2)];
        let est = replicate_indices(&pb, &labels, 2000, 30, 3).unwrap();
        let total: f64 = a.iter().map(|v| v * v).sum();
        for (k, e) in est.iter().enumerate() {
            let exact = a[k] * a[k] / total;
            let se = e.sd.unwrap() / (30f64).sqrt();
            assert!((e.value - exact).abs() < 3.0 * se + 2e-3, "{}: {} vs {exact}", e.label, e.value);
        }
    }

    #[test]
    fn product_function() {
        let pb = SaProblem::new(col_fn(|x| x[0] * x[1]), unit(2, -1.0, 1.0), names(2)).unwrap();
        let s = replicate_with_seeds(
            &pb,
            &[IndexLabel::First(0), IndexLabel::First(1), IndexLabel::Second(0, 1)],
            10_000,
            &[5],
        )
        .unwrap();
        assert!(s[0].value.abs() < 0.05 && s[1].value.abs() < 0.05, "{} {}", s[0].value, s[1].value);
        assert!((s[2].value - 1.0).abs() < 0.03, "{}", s[2].value);
        assert_eq!(s[0].sd, None);
    }

    #[test]
    fn constant_function_has_no_variance() {
        let pb = SaProblem::new(col_fn(|_| 3.0), unit(2, 0.0, 1.0), names(2)).unwrap();
        assert!(first_order_index(&pb, 0, 1000, 1).is_err());
    }

    #[test]
    fn uncontrollable_total_index() {
        let zero = SaProblem::new(col_fn(|x| x[0]), unit(2, 0.0, 1.0), names(2))
            .unwrap()
            .with_dispersion(col_fn(|_| 0.0));
        assert_eq!(total_index_uncontrollable(&zero, 1000, 1).unwrap().value, 0.0);
        let noise = SaProblem::new(col_fn(|_| 2.0), unit(2, 0.0, 1.0), names(2))
            .unwrap()
            .with_dispersion(col_fn(|_| 0.7));
        assert!((total_index_uncontrollable(&noise, 1000, 1).unwrap().value - 1.0).abs() < 1e-12);
        let neg = SaProblem::new(col_fn(|x| x[0]), unit(2, 0.0, 1.0), names(2))
            .unwrap()
            .with_dispersion(col_fn(|x| x[0] - 0.5));
        assert!(total_index_uncontrollable(&neg, 1000, 1).is_err());
    }

    #[test]
    fn dispersion_sensitivity_single_input() {
        let pb = SaProblem::new(col_fn(|x| x[0]), unit(2, -1.0, 1.0), names(2))
            .unwrap()
            .with_dispersion(col_fn(|x| x[1] * x[1]));
        let s2 = dispersion_sensitivity(&pb, 1, 10_000, 4).unwrap();
        assert!(s2.value > 0.97, "{}", s2.value);
        assert_eq!(s2.label, "S_Yd(X2)");
        assert_eq!(s2.method, Method::SYd);
        let s1 = dispersion_sensitivity(&pb, 0, 10_000, 4).unwrap();
        assert!(s1.value.abs() < 0.03);
        let flat = SaProblem::new(col_fn(|x| x[0]), unit(2, -1.0, 1.0), names(2))
            .unwrap()
            .with_dispersion(col_fn(|_| 1.0));
        assert!(dispersion_sensitivity(&flat, 0, 1000, 1).is_err());
    }

    #[test]
    fn replicate_sd_behaviour() {
        let pb = SaProblem::new(col_fn(|x| x[0] + 0.5 * x[1] * x[1]), unit(2, 0.0, 1.0), names(2)).unwrap();
        let same = replicate_with_seeds(&pb, &[IndexLabel::First(0)], 500, &[9, 9]).unwrap();
        assert_eq!(same[0].sd, Some(0.0));
        let small = replicate_indices(&pb, &[IndexLabel::First(0)], 2500, 60, 1).unwrap();
        let large = replicate_indices(&pb, &[IndexLabel::First(0)], 10_000, 60, 2).unwrap();
        let ratio = small[0].sd.unwrap() / large[0].sd.unwrap();
        assert!(ratio > 1.4 && ratio < 2.8, "{ratio}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let pb = SaProblem::new(col_fn(|x| x[0].sin() + x[1]), unit(2, 0.0, 3.0), names(2)).unwrap();
        let a = first_order_index(&pb, 1, 500, 77).unwrap();
        let b = first_order_index(&pb, 1, 500, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn q2_based_total_index() {
        let e = total_index_controllable_from_q2(0.751);
        assert!((e.value - 0.249).abs() < 1e-12);
        assert_eq!(e.method, Method::Q2);
        assert_eq!(total_index_controllable_from_q2(1.0).value, 0.0);
        assert!((total_index_controllable_from_q2(0.75).value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn label_parsing() {
        assert_eq!(IndexLabel::parse("S1", 2).unwrap(), IndexLabel::First(0));
        assert_eq!(IndexLabel::parse("S12", 2).unwrap(), IndexLabel::Second(0, 1));
        assert_eq!(IndexLabel::parse("S3_14", 16).unwrap(), IndexLabel::Second(2, 13));
        assert_eq!(IndexLabel::parse("S14", 16).unwrap(), IndexLabel::First(13));
        assert_eq!(IndexLabel::parse("ST_eps", 2).unwrap(), IndexLabel::TotalUncontrollable);
        assert_eq!(IndexLabel::parse("S_Yd(X2)", 2).unwrap(), IndexLabel::DispersionFirst(1));
        assert!(IndexLabel::parse("S3", 2).is_err());
        assert!(IndexLabel::parse("S21", 2).is_err());
        for l in [IndexLabel::First(1), IndexLabel::Second(0, 1), IndexLabel::TotalUncontrollable, IndexLabel::DispersionFirst(0)] {
            assert_eq!(IndexLabel::parse(&l.label(), 2).unwrap(), l);
        }
    }

    #[test]
    fn deduced_rows() {
        let mut second = BTreeMap::new();
        second.insert((0, 1), 0.0);
        let rows = deduced_indices(&[0.325, 0.414], &second, 0.261, &[true, false], Method::Eq);
        let get = |l: &str| rows.iter().find(|r| r.label == l).unwrap().clone();
        assert_eq!(get("S1_eps").display_value(), "]0.000, 0.261]");
        assert_eq!(get("S2_eps").value, 0.0);
        assert_eq!(get("ST1").display_value(), "]0.325, 0.586]");
        assert_eq!(get("ST2").display_value(), "0.414");
        assert_eq!(get("S_eps").display_value(), "[0.000, 0.261]");
        let glm = deduced_indices(&[0.314, 0.318], &second, 0.366, &[false, false], Method::Eq);
        assert_eq!(glm.iter().find(|r| r.label == "S_eps").unwrap().value, 0.366);
    }
}
