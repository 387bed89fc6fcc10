//! Run configuration: a TOML file with one section per command, overridden
//! by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use jointsa::{Error, InputDistribution, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub sobol: SobolConfig,
    #[serde(default)]
    pub bench: BenchConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub input: Option<PathBuf>,
    pub response: Option<String>,
    pub engine: Option<String>,
    pub mean_terms: Option<String>,
    pub disp_terms: Option<String>,
    pub family: Option<String>,
    pub max_outer_iter: Option<usize>,
    pub loo: Option<bool>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Distributions either as `"x1=U(-pi,pi); x2=U(0,1)"` or as a table of
/// `name = "U(a, b)"` entries.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DistsConfig {
    Text(String),
    Table(BTreeMap<String, String>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolConfig {
    pub model: Option<PathBuf>,
    pub dists: Option<DistsConfig>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub indices: Option<Vec<String>>,
    /// Empirical output variance; the reconstructed variance is used when
    /// absent.
    pub total_variance: Option<f64>,
    pub dispersion_threshold: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
}

fn parse_bound(s: &str) -> Result<f64> {
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest.trim()),
        None => (false, t),
    };
    let v = if body.eq_ignore_ascii_case("pi") {
        std::f64::consts::PI
    } else if let Some(k) = body.strip_suffix("pi").or_else(|| body.strip_suffix("*pi")) {
        let k = k.trim_end_matches('*').trim();
        k.parse::<f64>().map_err(|_| Error::Config(format!("invalid bound `{s}`")))? * std::f64::consts::PI
    } else {
        body.parse::<f64>().map_err(|_| Error::Config(format!("invalid bound `{s}`")))?
    };
    Ok(if neg { -v } else { v })
}

/// Parses `U(a, b)` (also `uniform(a, b)`); bounds may use `pi`.
pub fn parse_distribution(spec: &str) -> Result<InputDistribution> {
    let s = spec.trim();
    let open = s.find('(').ok_or_else(|| Error::Config(format!("distribution `{s}` lacks `(`")))?;
    let name = s[..open].trim();
    let body = s[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| Error::Config(format!("distribution `{s}` lacks `)`")))?;
    if !(name.eq_ignore_ascii_case("u") || name.eq_ignore_ascii_case("uniform")) {
        return Err(Error::Config(format!("unknown distribution `{name}`; only U(a, b) is supported")));
    }
    let parts: Vec<&str> = body.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("distribution `{s}` needs two bounds")));
    }
    InputDistribution::uniform(parse_bound(parts[0])?, parse_bound(parts[1])?)
}

/// Named distributions in the order given.
pub fn parse_dists(cfg: &DistsConfig) -> Result<Vec<(String, InputDistribution)>> {
    let entries: Vec<(String, String)> = match cfg {
        DistsConfig::Table(t) => t.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        DistsConfig::Text(s) => s
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let (k, v) = p
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("expected `name=U(a,b)`, got `{}`", p.trim())))?;
                Ok((k.trim().to_string(), v.trim().to_string()))
            })
            .collect::<Result<_>>()?,
    };
    if entries.is_empty() {
        return Err(Error::Config("no input distributions given".into()));
    }
    let mut out: Vec<(String, InputDistribution)> = Vec::new();
    for (k, v) in entries {
        if out.iter().any(|(n, _)| *n == k) {
            return Err(Error::Config(format!("input `{k}` has two distributions")));
        }
        out.push((k, parse_distribution(&v)?));
    }
    Ok(out)
}
