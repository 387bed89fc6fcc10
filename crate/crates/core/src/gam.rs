//! Generalized additive models with GCV-selected smoothing parameters.
//!
//! Each smooth contributes a centered block `X̃_j` and penalty `S̃_j`. For a
//! given λ the coefficients minimize `deviance + Σ λ_j βᵀ S̃_j β` by
//! penalized IRLS. λ is chosen to minimize
//! `GCV = n D / (n − edf)²` with a log-scale grid search, cyclic
//! coordinate descent, and a golden-section polish.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Dataset, Design};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::glm::{explained, pearson_chi2, render_formula};
use crate::linalg::psd_null_space;
use crate::pirls::{null_deviance, pirls, PirlsFit};
use crate::smooth::{build_bivariate_basis, build_cubic_basis, SplineBasis, DEFAULT_K_BIVARIATE, DEFAULT_K_UNIVARIATE};
use crate::terms::{model_matrix, TermSpec};
use crate::MeanPredictor;

/// A smooth term `s(columns)` with optional basis dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothSpec {
    pub columns: Vec<String>,
    pub k: Option<usize>,
}

impl SmoothSpec {
    pub fn univariate(col: &str) -> Self {
        Self { columns: vec![col.to_string()], k: None }
    }

    pub fn bivariate(a: &str, b: &str) -> Self {
        Self { columns: vec![a.to_string(), b.to_string()], k: None }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn basis_dimension(&self) -> usize {
        self.k.unwrap_or(if self.columns.len() == 2 { DEFAULT_K_BIVARIATE } else { DEFAULT_K_UNIVARIATE })
    }

    pub fn label(&self) -> String {
        format!("s({})", self.columns.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamSpec {
    pub parametric: Vec<TermSpec>,
    pub smooths: Vec<SmoothSpec>,
    pub family: Family,
}

impl GamSpec {
    pub fn new(parametric: Vec<TermSpec>, smooths: Vec<SmoothSpec>, family: Family) -> Result<Self> {
        let spec = Self { parametric, smooths, family };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parametric.is_empty() && self.smooths.is_empty() {
            return Err(Error::Config("a GAM needs at least one term".into()));
        }
        for t in &self.parametric {
            t.validate()?;
        }
        let mut seen: Vec<Vec<String>> = Vec::new();
        for s in &self.smooths {
            if s.columns.is_empty() || s.columns.len() > 2 {
                return Err(Error::Config(format!("{} must use one or two columns", s.label())));
            }
            if s.columns.len() == 2 && s.columns[0] == s.columns[1] {
                return Err(Error::Config(format!("{} repeats a column", s.label())));
            }
            let mut key = s.columns.clone();
            key.sort();
            if seen.contains(&key) {
                return Err(Error::Config(format!("duplicate smooth {}", s.label())));
            }
            seen.push(key);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamFit {
    pub spec: GamSpec,
    pub bases: Vec<SplineBasis>,
    /// Parametric coefficients followed by each smooth's constrained block.
    pub coefficients: DVector<f64>,
    /// Smoothing parameters multiplying the constrained penalties `S̃_j`.
    pub lambdas: Vec<f64>,
    pub edf: f64,
    pub deviance: f64,
    pub null_deviance: f64,
    pub gcv: f64,
    pub scale: f64,
    pub fitted_mu: DVector<f64>,
    pub leverages: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Model pieces that do not depend on λ.
pub(crate) struct Assembled {
    pub x_param: DMatrix<f64>,
    pub bases: Vec<SplineBasis>,
    pub blocks: Vec<DMatrix<f64>>,
    pub penalties: Vec<DMatrix<f64>>,
    null_maps: Vec<DMatrix<f64>>,
    /// Penalty normalization so that λ' = 1 balances data and penalty.
    scales: Vec<f64>,
}

impl Assembled {
    pub fn n_coefficients(&self) -> usize {
        self.x_param.ncols() + self.blocks.iter().map(|b| b.ncols()).sum::<usize>()
    }

    /// Penalty term at full-length coefficients.
    #[cfg(test)]
    pub fn penalty(&self, beta: &DVector<f64>, lambdas: &[f64]) -> f64 {
        let mut at = self.x_param.ncols();
        let mut total = 0.0;
        for (j, s) in self.penalties.iter().enumerate() {
            let b = beta.rows(at, s.nrows());
            if lambdas[j] > 0.0 {
                total += lambdas[j] * b.dot(&(s * b));
            }
            at += s.nrows();
        }
        total
    }

    #[cfg(test)]
    pub fn linear_predictor(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut x = self.x_param.clone();
        for b in &self.blocks {
            x = concat_columns(&x, b);
        }
        x * beta
    }
}

fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

pub(crate) fn assemble(data: &Dataset, spec: &GamSpec) -> Result<Assembled> {
    spec.validate()?;
    let x_param = model_matrix(&spec.parametric, &data.design)?;
    let mut bases = Vec::with_capacity(spec.smooths.len());
    let mut blocks = Vec::new();
    let mut penalties = Vec::new();
    let mut null_maps = Vec::new();
    let mut scales = Vec::new();
    for s in &spec.smooths {
        let k = s.basis_dimension();
        let mut basis = match s.columns.as_slice() {
            [c] => build_cubic_basis(c, &data.design.column(c)?, k)?,
            [a, b] => {
                let pts = data.design.select(&[a, b])?.points;
                build_bivariate_basis([a, b], &pts, k)?
            }
            _ => unreachable!("validated"),
        };
        let names: Vec<&str> = s.columns.iter().map(String::as_str).collect();
        let raw = basis.raw_matrix(&data.design.select(&names)?.points);
        // sum-to-zero plus orthogonality to explicit linear terms in the same columns
        let mut rows: Vec<DVector<f64>> = vec![raw.row_sum().transpose()];
        for t in &spec.parametric {
            if let Some(c) = s.columns.iter().find(|c| t.is_linear_in(c)) {
                let xc = data.design.column(c)?;
                rows.push(raw.transpose() * DVector::from_vec(xc));
            }
        }
        let c = DMatrix::from_fn(rows.len(), basis.k, |i, j| rows[i][j]);
        basis.set_constraints(c)?;
        let block = raw * &basis.constraint_map;
        let pen = basis.constrained_penalty();
        let wblock = DMatrix::from_fn(block.nrows(), block.ncols(), |i, j| data.prior_weights[i] * block[(i, j)]);
        let xtwx = block.transpose() * wblock;
        let pn = pen.norm();
        scales.push(if pn > 0.0 { xtwx.norm() / pn } else { 1.0 });
        null_maps.push(psd_null_space(&pen));
        blocks.push(block);
        penalties.push(pen);
        bases.push(basis);
    }
    let assembled = Assembled { x_param, bases, blocks, penalties, null_maps, scales };
    let p = assembled.n_coefficients();
    if p >= data.n() {
        return Err(Error::SingularFit(format!("{p} coefficients for {} observations", data.n())));
    }
    Ok(assembled)
}

pub(crate) struct PenalizedFit {
    pub fit: PirlsFit,
    pub beta: DVector<f64>,
}

/// Penalized fit at exact smoothing parameters; `f64::INFINITY` restricts a
/// smooth to the null space of its penalty.
pub(crate) fn fit_at(asm: &Assembled, data: &Dataset, family: Family, lambdas: &[f64]) -> Result<PenalizedFit> {
    if lambdas.len() != asm.blocks.len() {
        return Err(Error::Dimension(format!(
            "{} smoothing parameters for {} smooths",
            lambdas.len(),
            asm.blocks.len()
        )));
    }
    if lambdas.iter().any(|l| l.is_nan() || *l < 0.0) {
        return Err(Error::Config("smoothing parameters must be >= 0".into()));
    }
    let mut x = asm.x_param.clone();
    let mut pen_blocks: Vec<DMatrix<f64>> = Vec::new();
    for (j, block) in asm.blocks.iter().enumerate() {
        if lambdas[j].is_infinite() {
            let reduced = block * &asm.null_maps[j];
            pen_blocks.push(DMatrix::zeros(reduced.ncols(), reduced.ncols()));
            x = concat_columns(&x, &reduced);
        } else {
            pen_blocks.push(&asm.penalties[j] * lambdas[j]);
            x = concat_columns(&x, block);
        }
    }
    let p = x.ncols();
    let mut penalty = DMatrix::zeros(p, p);
    let mut at = asm.x_param.ncols();
    for pb in &pen_blocks {
        let m = pb.nrows();
        penalty.view_mut((at, at), (m, m)).copy_from(pb);
        at += m;
    }
    let any_penalty = penalty.iter().any(|v| *v != 0.0);
    let fit = pirls(&x, &data.response, &data.prior_weights, family, any_penalty.then_some(&penalty))?;

    let mut beta = DVector::zeros(asm.n_coefficients());
    let np = asm.x_param.ncols();
    beta.rows_mut(0, np).copy_from(&fit.beta.rows(0, np));
    let (mut src, mut dst) = (np, np);
    for (j, block) in asm.blocks.iter().enumerate() {
        let full = block.ncols();
        if lambdas[j].is_infinite() {
            let nm = &asm.null_maps[j];
            let b = nm * fit.beta.rows(src, nm.ncols());
            beta.rows_mut(dst, full).copy_from(&b);
            src += nm.ncols();
        } else {
            beta.rows_mut(dst, full).copy_from(&fit.beta.rows(src, full));
            src += full;
        }
        dst += full;
    }
    Ok(PenalizedFit { fit, beta })
}

fn gcv_value(n: usize, deviance: f64, edf: f64) -> f64 {
    let nf = n as f64;
    if nf <= edf {
        f64::INFINITY
    } else {
        nf * deviance / ((nf - edf) * (nf - edf))
    }
}

/// GCV score of the penalized fit at exactly these smoothing parameters.
/// Returns `+∞` when the effective degrees of freedom reach `n`.
pub fn gcv_score(data: &Dataset, spec: &GamSpec, lambdas: &[f64]) -> Result<f64> {
    let asm = assemble(data, spec)?;
    let pf = fit_at(&asm, data, spec.family, lambdas)?;
    Ok(gcv_value(data.n(), pf.fit.deviance, pf.fit.edf))
}

const GRID_LO: f64 = -6.0;
const GRID_HI: f64 = 6.0;
const GRID_STEP: f64 = 0.5;
const SWEEPS: usize = 2;
const GOLDEN_ITERS: usize = 24;

fn log_grid() -> Vec<f64> {
    let steps = ((GRID_HI - GRID_LO) / GRID_STEP).round() as usize;
    (0..=steps).map(|i| GRID_LO + GRID_STEP * i as f64).collect()
}

fn scaled_lambdas(asm: &Assembled, logs: &[f64]) -> Vec<f64> {
    logs.iter().zip(&asm.scales).map(|(l, s)| s * 10f64.powf(*l)).collect()
}

fn search_lambdas(asm: &Assembled, data: &Dataset, family: Family) -> Result<Vec<f64>> {
    let m = asm.blocks.len();
    let score = |logs: &[f64]| -> f64 {
        match fit_at(asm, data, family, &scaled_lambdas(asm, logs)) {
            Ok(pf) => {
                let g = gcv_value(data.n(), pf.fit.deviance, pf.fit.edf);
                if g.is_finite() { g } else { f64::INFINITY }
            }
            Err(_) => f64::INFINITY,
        }
    };
    let grid = log_grid();
    let mut cur = vec![0.0; m];
    let mut best = score(&cur);
    for _ in 0..SWEEPS {
        for j in 0..m {
            let vals: Vec<f64> = grid
                .par_iter()
                .map(|g| {
                    let mut t = cur.clone();
                    t[j] = *g;
                    score(&t)
                })
                .collect();
            let arg = (0..vals.len()).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
            if vals[arg] <= best {
                best = vals[arg];
                cur[j] = grid[arg];
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Numerical("GCV is non-finite for every smoothing parameter tried".into()));
    }
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for j in 0..m {
        let eval = |v: f64| {
            let mut t = cur.clone();
            t[j] = v;
            score(&t)
        };
        let (mut a, mut b) = ((cur[j] - GRID_STEP).max(GRID_LO), (cur[j] + GRID_STEP).min(GRID_HI));
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (eval(c), eval(d));
        for _ in 0..GOLDEN_ITERS {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = eval(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = eval(d);
            }
        }
        let (v, f) = if fc < fd { (c, fc) } else { (d, fd) };
        if f < best {
            best = f;
            cur[j] = v;
        }
    }
    Ok(scaled_lambdas(asm, &cur))
}

fn finish(data: &Dataset, spec: &GamSpec, asm: Assembled, lambdas: Vec<f64>) -> Result<GamFit> {
    let PenalizedFit { fit, beta } = fit_at(&asm, data, spec.family, &lambdas)?;
    let n = data.n();
    let gcv = gcv_value(n, fit.deviance, fit.edf);
    let scale = if spec.family.estimates_scale() && (n as f64) > fit.edf {
        pearson_chi2(data, &fit.mu, spec.family) / (n as f64 - fit.edf)
    } else {
        1.0
    };
    let intercept = spec.parametric.contains(&TermSpec::Intercept);
    Ok(GamFit {
        spec: spec.clone(),
        bases: asm.bases,
        coefficients: beta,
        lambdas,
        edf: fit.edf,
        deviance: fit.deviance,
        null_deviance: null_deviance(&data.response, &data.prior_weights, spec.family, intercept),
        gcv,
        scale,
        fitted_mu: fit.mu,
        leverages: fit.leverages,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

/// Fits the GAM with smoothing parameters minimizing GCV.
pub fn fit_gam(data: &Dataset, spec: &GamSpec) -> Result<GamFit> {
    let asm = assemble(data, spec)?;
    let lambdas = if asm.blocks.is_empty() {
        Vec::new()
    } else {
        search_lambdas(&asm, data, spec.family)?
    };
    finish(data, spec, asm, lambdas)
}

/// Fits the GAM at fixed smoothing parameters (`f64::INFINITY` allowed).
pub fn fit_gam_fixed(data: &Dataset, spec: &GamSpec, lambdas: &[f64]) -> Result<GamFit> {
    let asm = assemble(data, spec)?;
    finish(data, spec, asm, lambdas.to_vec())
}

/// Linear predictor at the rows of `x`.
pub fn linear_predictor(fit: &GamFit, x: &Design) -> Result<DVector<f64>> {
    let xp = model_matrix(&fit.spec.parametric, x)?;
    let np = fit.spec.parametric.len();
    let mut out = xp * fit.coefficients.rows(0, np);
    let mut at = np;
    for basis in &fit.bases {
        let d = basis.dim();
        let vals = basis.smooth_values(x, fit.coefficients.rows(at, d).as_slice())?;
        for (o, v) in out.iter_mut().zip(vals) {
            *o += v;
        }
        at += d;
    }
    Ok(out)
}

pub fn predict_gam(fit: &GamFit, x: &Design) -> Result<DVector<f64>> {
    let link = fit.spec.family.link;
    Ok(linear_predictor(fit, x)?.map(|e| link.inverse(e)))
}

impl GamFit {
    pub fn explained_deviance(&self) -> f64 {
        explained(self.deviance, self.null_deviance)
    }

    /// Parametric coefficients, in the order of `spec.parametric`.
    pub fn parametric_coefficients(&self) -> DVector<f64> {
        self.coefficients.rows(0, self.spec.parametric.len()).into_owned()
    }

    /// `Y = 3.76 - 2.67 x1 + s(x1) + s(x2)` style rendering.
    pub fn formula(&self, lhs: &str) -> String {
        let parts: Vec<(f64, String)> = self
            .spec
            .parametric
            .iter()
            .zip(self.coefficients.iter())
            .map(|(t, &b)| {
                let label = if *t == TermSpec::Intercept { String::new() } else { t.label() };
                (b, label)
            })
            .collect();
        let extra: Vec<String> = self.spec.smooths.iter().map(SmoothSpec::label).collect();
        render_formula(lhs, &parts, &extra)
    }
}

impl MeanPredictor for GamFit {
    fn predict_mean(&self, x: &Design) -> Result<DVector<f64>> {
        predict_gam(self, x)
    }
}
