//! Penalized iteratively reweighted least squares.
//!
//! Each step solves the weighted (and optionally penalized) least-squares
//! problem through a QR decomposition of the augmented matrix
//! `[√W X; E]` with `EᵀE = P`, so `XᵀWX` is never formed.

use nalgebra::{DMatrix, DVector, QR};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::linalg::{psd_root, upper_inverse};

pub(crate) const MAX_ITER: usize = 50;
pub(crate) const TOLERANCE: f64 = 1e-8;
const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone)]
pub(crate) struct PirlsFit {
    pub beta: DVector<f64>,
    pub mu: DVector<f64>,
    pub deviance: f64,
    pub edf: f64,
    pub leverages: DVector<f64>,
    /// (XᵀWX + P)⁻¹ at the final working weights.
    pub bread: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Step {
    beta: DVector<f64>,
    leverages: DVector<f64>,
    bread: DMatrix<f64>,
}

fn solve_step(
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    w: &DVector<f64>,
    root: Option<&DMatrix<f64>>,
) -> Result<Step> {
    let n = x.nrows();
    let p = x.ncols();
    let extra = root.map_or(0, |e| e.nrows());
    let m = n + extra;
    if m < p {
        return Err(Error::SingularFit(format!("{p} coefficients but only {n} observations")));
    }
    let mut a = DMatrix::zeros(m, p);
    let mut b = DVector::zeros(m);
    for i in 0..n {
        let sw = w[i].sqrt();
        for j in 0..p {
            a[(i, j)] = sw * x[(i, j)];
        }
        b[i] = sw * z[i];
    }
    if let Some(e) = root {
        a.rows_mut(n, extra).copy_from(e);
    }
    let qr = QR::new(a);
    let r = qr.r();
    let dmax = (0..p).fold(0.0f64, |m, j| m.max(r[(j, j)].abs()));
    if p > 0 && (dmax == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= 1e-10 * dmax)) {
        return Err(Error::SingularFit("model matrix is rank deficient".into()));
    }
    let q = qr.q();
    let qtb = q.transpose() * &b;
    let rinv = upper_inverse(&r);
    let beta = &rinv * qtb;
    let leverages = DVector::from_fn(n, |i, _| q.row(i).norm_squared());
    let bread = &rinv * rinv.transpose();
    Ok(Step {
        beta,
        leverages,
        bread,
    })
}

/// Fits `g(μ) = Xβ` by penalized IRLS. `penalty` is the total penalty
/// matrix `Σ λ_j S_j` (p×p) or `None` for an ordinary GLM.
pub(crate) fn pirls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: &DVector<f64>,
    family: Family,
    penalty: Option<&DMatrix<f64>>,
) -> Result<PirlsFit> {
    let n = x.nrows();
    let p = x.ncols();
    let root = penalty.map(psd_root);
    let link = family.link;
    let pen = |b: &DVector<f64>| penalty.map_or(0.0, |s| b.dot(&(s * b)));

    let mut mu = DVector::from_vec(family.initial_mu(y.as_slice()));
    let mut eta = mu.map(|m| link.link(m));
    let mut beta_old: Option<DVector<f64>> = None;
    let mut pdev_old = f64::INFINITY;
    let mut last: Option<(Step, DVector<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=MAX_ITER {
        iterations = iter;
        let mut w = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let d = link.derivative(mu[i]);
            w[i] = family.working_weight(prior[i], mu[i]);
            z[i] = eta[i] + (y[i] - mu[i]) * d;
        }
        if w.iter().any(|v| !v.is_finite()) || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite working response".into()));
        }
        let step = solve_step(x, &z, &w, root.as_ref())?;
        let mut beta = step.beta.clone();

        let evaluate = |b: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, f64)> {
            let eta = x * b;
            if eta.iter().any(|&e| !link.valid_eta(e)) {
                return None;
            }
            let mu = eta.map(|e| link.inverse(e));
            if mu.iter().any(|&m| !family.valid_mu(m)) {
                return None;
            }
            let dev = family.deviance(y.as_slice(), mu.as_slice(), prior.as_slice());
            dev.is_finite().then_some((eta, mu, dev))
        };

        let reference = beta_old.clone().unwrap_or_else(|| DVector::zeros(p));
        let mut halvings = 0;
        let (eta_new, mu_new, dev_new) = loop {
            if let Some((e, m, d)) = evaluate(&beta) {
                let pdev = d + pen(&beta);
                let increased = beta_old.is_some() && pdev > pdev_old * (1.0 + 1e-12) + 1e-300;
                if !increased {
                    break (e, m, d);
                }
            }
            if halvings == MAX_HALVINGS {
                return Err(Error::Divergence(format!(
                    "IRLS step halving failed after {MAX_HALVINGS} halvings"
                )));
            }
            halvings += 1;
            beta = 0.5 * (&beta + &reference);
        };

        let pdev_new = dev_new + pen(&beta);
        let change = (pdev_new - pdev_old).abs() / (pdev_new.abs() + 0.1);
        let done = beta_old.is_some() && change < TOLERANCE;
        eta = eta_new;
        mu = mu_new;
        pdev_old = pdev_new;
        beta_old = Some(beta.clone());
        last = Some((step, w));
        if done {
            converged = true;
            break;
        }
    }

    let (step, _) = last.expect("at least one IRLS iteration");
    let beta = beta_old.expect("at least one IRLS iteration");
    let deviance = family.deviance(y.as_slice(), mu.as_slice(), prior.as_slice());
    Ok(PirlsFit {
        beta,
        mu,
        deviance,
        edf: step.leverages.sum(),
        leverages: step.leverages,
        bread: step.bread,
        iterations,
        converged,
    })
}

/// Deviance of the constant-mean model: the weighted mean of `y` when an
/// intercept is present, otherwise μ = g⁻¹(0).
pub(crate) fn null_deviance(y: &DVector<f64>, prior: &DVector<f64>, family: Family, intercept: bool) -> f64 {
    let mu0 = if intercept {
        y.dot(prior) / prior.sum()
    } else {
        family.link.inverse(0.0)
    };
    let mu = vec![mu0; y.len()];
    family.deviance(y.as_slice(), &mu, prior.as_slice())
}
