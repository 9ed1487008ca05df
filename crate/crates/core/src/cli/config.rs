//! JSON run configuration shared by the subcommands.

use super::CliError;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    Linear,
    Constant,
    Custom,
}

/// Initial head profile. `linear` joins `phi_c` to `outer`; `constant` uses
/// `values[0]` (or `phi_c`) everywhere; `custom` lists one value per node
/// from the well face to r = 1.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    Const,
    Linear,
    Quadratic,
    Exp,
}

/// Everything a config file may contain. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<OneOrMany<f64>>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub n: Option<OneOrMany<usize>>,
    pub function: Option<TestFunction>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    #[serde(rename = "N")]
    pub steps: Option<usize>,
    #[serde(rename = "S")]
    pub storage: Option<f64>,
    #[serde(rename = "K")]
    pub conductivity: Option<f64>,
    #[serde(rename = "D")]
    pub thickness: Option<f64>,
    pub c: Option<f64>,
    pub phi_c: Option<f64>,
    pub outer: Option<f64>,
    pub initial: Option<InitialSpec>,
    pub snapshots: Option<Vec<usize>>,
    pub history_lag: Option<bool>,
    pub stehfest_terms: Option<usize>,
    pub bessel_branch: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Rejects a config value with the offending field named.
pub fn ensure(ok: bool, field: &str, msg: impl std::fmt::Display) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("field `{field}`: {msg}")))
    }
}
