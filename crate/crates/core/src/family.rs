//! Link and variance functions for quasi-likelihood GLM/GAM families.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Log,
    Logit,
    Sqrt,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceFn {
    Constant,
    Identity,
    MuSquared,
    Binomial,
}

impl Link {
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Link::Identity => mu,
            Link::Log => mu.ln(),
            Link::Logit => (mu / (1.0 - mu)).ln(),
            Link::Sqrt => mu.sqrt(),
            Link::Inverse => 1.0 / mu,
        }
    }

    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
            Link::Sqrt => eta * eta,
            Link::Inverse => 1.0 / eta,
        }
    }

    /// dη/dμ
    pub fn derivative(self, mu: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Log => 1.0 / mu,
            Link::Logit => 1.0 / (mu * (1.0 - mu)),
            Link::Sqrt => 0.5 / mu.sqrt(),
            Link::Inverse => -1.0 / (mu * mu),
        }
    }

    pub fn valid_eta(self, eta: f64) -> bool {
        eta.is_finite()
            && match self {
                Link::Sqrt => eta >= 0.0,
                Link::Inverse => eta != 0.0,
                _ => true,
            }
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Logit => "logit",
            Link::Sqrt => "sqrt",
            Link::Inverse => "inverse",
        }
    }
}

impl VarianceFn {
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            VarianceFn::Constant => 1.0,
            VarianceFn::Identity => mu,
            VarianceFn::MuSquared => mu * mu,
            VarianceFn::Binomial => mu * (1.0 - mu),
        }
    }

    pub fn valid_mu(self, mu: f64) -> bool {
        mu.is_finite()
            && match self {
                VarianceFn::Constant => true,
                VarianceFn::Identity | VarianceFn::MuSquared => mu > 0.0,
                VarianceFn::Binomial => mu > 0.0 && mu < 1.0,
            }
    }

    /// Unit deviance d(y, μ) = 2 ∫_μ^y (y − t)/V(t) dt.
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            VarianceFn::Constant => (y - mu) * (y - mu),
            VarianceFn::Identity => 2.0 * (xlogy(y, y / mu) - (y - mu)),
            VarianceFn::MuSquared => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
            VarianceFn::Binomial => {
                2.0 * (xlogy(y, y / mu) + xlogy(1.0 - y, (1.0 - y) / (1.0 - mu)))
            }
        }
        .max(0.0)
    }

    pub fn name(self) -> &'static str {
        match self {
            VarianceFn::Constant => "constant",
            VarianceFn::Identity => "identity",
            VarianceFn::MuSquared => "mu_squared",
            VarianceFn::Binomial => "binomial",
        }
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// A quasi-likelihood family: a link function and a variance function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Family {
    pub link: Link,
    pub variance: VarianceFn,
}

impl Family {
    pub fn new(link: Link, variance: VarianceFn) -> Self {
        Self { link, variance }
    }

    pub fn gaussian() -> Self {
        Self::new(Link::Identity, VarianceFn::Constant)
    }

    /// Gamma-type quasi family with log link, used for dispersion submodels.
    pub fn gamma_log() -> Self {
        Self::new(Link::Log, VarianceFn::MuSquared)
    }

    pub fn poisson() -> Self {
        Self::new(Link::Log, VarianceFn::Identity)
    }

    pub fn binomial() -> Self {
        Self::new(Link::Logit, VarianceFn::Binomial)
    }

    pub fn valid_mu(&self, mu: f64) -> bool {
        self.variance.valid_mu(mu)
            && match self.link {
                Link::Log | Link::Sqrt => mu > 0.0,
                Link::Logit => mu > 0.0 && mu < 1.0,
                Link::Inverse => mu != 0.0,
                Link::Identity => true,
            }
    }

    /// Working weight for one observation: w / (V(μ) g'(μ)²).
    pub fn working_weight(&self, prior: f64, mu: f64) -> f64 {
        let d = self.link.derivative(mu);
        prior / (self.variance.variance(mu) * d * d)
    }

    /// Starting means for IRLS, moved into the domain of the link.
    pub fn initial_mu(&self, y: &[f64]) -> Vec<f64> {
        let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = if ymax > 0.0 { 1e-8 * ymax } else { 1e-8 };
        y.iter()
            .map(|&v| match (self.link, self.variance) {
                (Link::Logit, _) | (_, VarianceFn::Binomial) => (v + 0.5) / 2.0,
                (Link::Log | Link::Sqrt, _) | (_, VarianceFn::Identity | VarianceFn::MuSquared) => {
                    v.max(floor)
                }
                (Link::Inverse, _) if v == 0.0 => floor,
                _ => v,
            })
            .collect()
    }

    /// Whether the dispersion scale is estimated (gaussian, gamma-type) or
    /// fixed at one (poisson, binomial).
    pub fn estimates_scale(&self) -> bool {
        matches!(self.variance, VarianceFn::Constant | VarianceFn::MuSquared)
    }

    pub fn deviance(&self, y: &[f64], mu: &[f64], prior: &[f64]) -> f64 {
        y.iter()
            .zip(mu)
            .zip(prior)
            .map(|((&y, &m), &w)| w * self.variance.unit_deviance(y, m))
            .sum()
    }
}

impl Default for Family {
    fn default() -> Self {
        Self::gaussian()
    }
}
