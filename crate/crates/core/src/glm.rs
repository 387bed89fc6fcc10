//! Quasi-likelihood generalized linear models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::design::{Dataset, Design};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::pirls::{null_deviance, pirls};
use crate::terms::{model_matrix, TermSpec};
use crate::MeanPredictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub family: Family,
    pub terms: Vec<TermSpec>,
    pub beta: DVector<f64>,
    pub fitted_mu: DVector<f64>,
    pub deviance: f64,
    pub null_deviance: f64,
    pub dof_residual: f64,
    pub t_values: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    /// Diagonal of the weighted hat matrix at convergence.
    #[serde(default)]
    pub leverages: DVector<f64>,
    /// Estimated dispersion scale (Pearson χ² / residual dof), or 1 for
    /// families with a fixed scale.
    pub scale: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn fit_glm(data: &Dataset, terms: &[TermSpec], family: Family) -> Result<GlmFit> {
    if terms.is_empty() {
        return Err(Error::Config("a GLM needs at least one term".into()));
    }
    let x = model_matrix(terms, &data.design)?;
    let n = data.n();
    let p = x.ncols();
    if n <= p {
        return Err(Error::SingularFit(format!("{n} observations for {p} coefficients")));
    }
    let fit = pirls(&x, &data.response, &data.prior_weights, family, None)?;
    let dof_residual = (n - p) as f64;
    let scale = if family.estimates_scale() {
        pearson_chi2(data, &fit.mu, family) / dof_residual
    } else {
        1.0
    };
    let cov_beta = &fit.bread * scale;
    let t_values = DVector::from_fn(p, |j, _| signed_ratio(fit.beta[j], cov_beta[(j, j)].max(0.0).sqrt()));
    let intercept = terms.contains(&TermSpec::Intercept);
    Ok(GlmFit {
        family,
        terms: terms.to_vec(),
        null_deviance: null_deviance(&data.response, &data.prior_weights, family, intercept),
        beta: fit.beta,
        fitted_mu: fit.mu,
        deviance: fit.deviance,
        dof_residual,
        t_values,
        cov_beta,
        leverages: fit.leverages,
        scale,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

fn signed_ratio(b: f64, se: f64) -> f64 {
    if se > 0.0 {
        b / se
    } else if b == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(b)
    }
}

pub(crate) fn pearson_chi2(data: &Dataset, mu: &DVector<f64>, family: Family) -> f64 {
    (0..data.n())
        .map(|i| {
            let r = data.response[i] - mu[i];
            data.prior_weights[i] * r * r / family.variance.variance(mu[i])
        })
        .sum()
}

/// Per-observation deviance contributions `w_i d(y_i, μ_i)`.
pub fn deviance_contributions(fit: &GlmFit, data: &Dataset) -> Result<DVector<f64>> {
    if data.n() != fit.fitted_mu.len() {
        return Err(Error::Dimension("dataset does not match the fit".into()));
    }
    Ok(DVector::from_fn(data.n(), |i, _| {
        data.prior_weights[i] * fit.family.variance.unit_deviance(data.response[i], fit.fitted_mu[i])
    }))
}

pub fn predict_glm(fit: &GlmFit, x: &Design) -> Result<DVector<f64>> {
    let m = model_matrix(&fit.terms, x)?;
    Ok((m * &fit.beta).map(|e| fit.family.link.inverse(e)))
}

/// Prediction at a single point given as `(column, value)` pairs.
pub fn predict_glm_point(fit: &GlmFit, point: &[(&str, f64)]) -> Result<f64> {
    let names = point.iter().map(|(n, _)| n.to_string()).collect();
    let values: Vec<f64> = point.iter().map(|(_, v)| *v).collect();
    let d = Design::new(DMatrix::from_row_slice(1, values.len().max(1), &values), names)?;
    Ok(predict_glm(fit, &d)?[0])
}

pub fn t_values(fit: &GlmFit) -> &DVector<f64> {
    &fit.t_values
}

/// 1 − deviance / null deviance.
pub fn explained_deviance(fit: &GlmFit) -> f64 {
    explained(fit.deviance, fit.null_deviance)
}

pub(crate) fn explained(deviance: f64, null: f64) -> f64 {
    if null > 0.0 {
        1.0 - deviance / null
    } else {
        0.0
    }
}

impl GlmFit {
    pub fn explained_deviance(&self) -> f64 {
        explained_deviance(self)
    }

    /// `Y = 1.92 + 2.69 x1 + ...` style rendering on the link scale.
    pub fn formula(&self, lhs: &str) -> String {
        let parts: Vec<(f64, String)> = self
            .terms
            .iter()
            .zip(self.beta.iter())
            .map(|(t, &b)| {
                let label = match t {
                    TermSpec::Intercept => String::new(),
                    other => other.label(),
                };
                (b, label)
            })
            .collect();
        render_formula(lhs, &parts, &[])
    }
}

pub(crate) fn render_formula(lhs: &str, parts: &[(f64, String)], extra: &[String]) -> String {
    let mut out = format!("{lhs} =");
    let mut first = true;
    for (b, label) in parts {
        let sign = if *b < 0.0 { "-" } else { "+" };
        let mag = format!("{:.2}", b.abs());
        let body = if label.is_empty() { mag } else { format!("{mag} {label}") };
        if first {
            out.push_str(&format!(" {}{body}", if *b < 0.0 { "-" } else { "" }));
        } else {
            out.push_str(&format!(" {sign} {body}"));
        }
        first = false;
    }
    for e in extra {
        if first {
            out.push_str(&format!(" {e}"));
        } else {
            out.push_str(&format!(" + {e}"));
        }
        first = false;
    }
    out
}

impl MeanPredictor for GlmFit {
    fn predict_mean(&self, x: &Design) -> Result<DVector<f64>> {
        predict_glm(self, x)
    }
}

/// Analysis of deviance between nested models, with the F statistic scaled
/// by the larger model's estimated dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevianceTest {
    pub deviance_drop: f64,
    pub df: f64,
    pub f_statistic: f64,
    pub p_value: f64,
}

pub fn compare_nested(reduced: &GlmFit, full: &GlmFit) -> Result<DevianceTest> {
    let df = reduced.dof_residual - full.dof_residual;
    if df <= 0.0 {
        return Err(Error::Config("the full model must have more coefficients".into()));
    }
    let drop = (reduced.deviance - full.deviance).max(0.0);
    let f = drop / df / full.scale;
    let dist = FisherSnedecor::new(df, full.dof_residual)
        .map_err(|e| Error::Numerical(format!("F distribution: {e}")))?;
    Ok(DevianceTest {
        deviance_drop: drop,
        df,
        f_statistic: f,
        p_value: 1.0 - dist.cdf(f),
    })
}
