//! Joint mean/dispersion metamodels for stochastic computer codes and
//! variance-based sensitivity analysis on top of them.
//!
//! A stochastic simulator returns different outputs for the same
//! controllable inputs `X` because of an internal random mechanism. This
//! crate fits two linked regressions on a learning sample, one for the
//! conditional mean `Y_m(X) = E(Y|X)` and one for the conditional variance
//! `Y_d(X) = Var(Y|X)`, using GLM, GAM or Gaussian-process engines, and then
//! computes Sobol indices of the controllable inputs together with the
//! total index of the uncontrollable randomness, `E[Y_d] / Var(Y)`.

pub mod design;
pub mod error;
pub mod family;
pub mod gam;
pub mod glm;
pub mod gp;
pub mod ishigami;
pub mod joint;
mod linalg;
mod optim;
mod pirls;
pub mod report;
pub mod smooth;
pub mod sobol;
pub mod terms;

pub use design::{Dataset, Design, InputDistribution};
pub use error::{Error, Result};
pub use family::{Family, Link, VarianceFn};
pub use gam::{GamFit, GamSpec, SmoothSpec};
pub use glm::GlmFit;
pub use gp::{GpModel, GpOptions};
pub use joint::{JointModel, JointSpec, SubmodelSpec};
pub use sobol::{Method, SaProblem, SobolEstimate};
pub use terms::TermSpec;

/// Anything that maps input rows to a predicted mean response.
pub trait MeanPredictor {
    fn predict_mean(&self, x: &Design) -> Result<nalgebra::DVector<f64>>;
}
