//! Run configuration: one JSON document, overridden by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use curvature_game::DomainSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every field is optional; unset fields take the documented defaults of
/// the command that reads them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Option<DomainSpec>,
    pub eps: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    pub k: Option<f64>,
    pub axis_count: Option<usize>,
    pub quad_order: Option<usize>,
    pub tol_iter: Option<f64>,
    pub max_iter: Option<usize>,
    pub grid_h: Option<f64>,
    pub seed: Option<u64>,
    pub n_episodes: Option<u64>,
    pub points: Option<Vec<Vec<f64>>>,
    pub z: Option<Vec<f64>>,
    pub paul: Option<StrategySpec>,
    pub carol: Option<StrategySpec>,
    pub mode: Option<SimMode>,
    pub traces: Option<u64>,
    pub max_rounds: Option<u64>,
    pub field: Option<PathBuf>,
    pub fields: Option<Vec<PathBuf>>,
    pub t_list: Option<Vec<f64>>,
    pub parallel: Option<bool>,
    pub lemma_eps: Option<Vec<f64>>,
    pub lemma_order: Option<usize>,
    pub n_quadratics: Option<usize>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("malformed config: {e}")))
    }

    /// Fields set in `over` replace those of `self`.
    pub fn overlay(mut self, over: RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            domain, eps, eps_list, k, axis_count, quad_order, tol_iter, max_iter, grid_h, seed, n_episodes, points,
            z, paul, carol, mode, traces, max_rounds, field, fields, t_list, parallel, lemma_eps, lemma_order,
            n_quadratics
        );
        self
    }
}

/// A strategy named in a config: `"gradient"`, `"dpp"`, `"mirror"`,
/// `"aligned"`, `"radial"` or `{"fixed": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategySpec {
    Gradient,
    Dpp,
    Mirror,
    Aligned,
    Radial,
    Fixed(Vec<f64>),
}

impl StrategySpec {
    pub fn needs_field(&self) -> bool {
        matches!(self, StrategySpec::Gradient | StrategySpec::Dpp)
    }
}

impl FromStr for StrategySpec {
    type Err = String;

    /// Flag syntax: a name, or `fixed:a,b[,c]`.
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "gradient" => StrategySpec::Gradient,
            "dpp" => StrategySpec::Dpp,
            "mirror" => StrategySpec::Mirror,
            "aligned" => StrategySpec::Aligned,
            "radial" => StrategySpec::Radial,
            _ => match s.strip_prefix("fixed:") {
                Some(rest) => StrategySpec::Fixed(parse_list(rest)?),
                None => return Err(format!("unknown strategy {s:?}")),
            },
        })
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::Gradient => f.write_str("gradient"),
            StrategySpec::Dpp => f.write_str("dpp"),
            StrategySpec::Mirror => f.write_str("mirror"),
            StrategySpec::Aligned => f.write_str("aligned"),
            StrategySpec::Radial => f.write_str("radial"),
            StrategySpec::Fixed(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "fixed:{}", parts.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Monte Carlo value estimates.
    Estimate,
    /// Submartingale and optional-stopping checks with Carol radial.
    Diagnostic,
}

/// Comma-separated reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect()
}
