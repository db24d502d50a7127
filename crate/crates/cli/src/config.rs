//! TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use varme_core::montecarlo::{PowerRule, SimStudyConfig};
use varme_core::{granger_contrast, Contrast, ErrorSpec, EstimatorKind};

use crate::data::sigma_e_from_fraction;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Usual,
    Corrected,
    #[default]
    Both,
}

impl EstimatorChoice {
    pub fn kinds(self) -> Vec<EstimatorKind> {
        match self {
            EstimatorChoice::Usual => vec![EstimatorKind::Usual],
            EstimatorChoice::Corrected => vec![EstimatorKind::Corrected],
            EstimatorChoice::Both => vec![EstimatorKind::Usual, EstimatorKind::Corrected],
        }
    }
}

/// Exactly one of the three forms must be given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise standard deviation as a fraction of a unit-variance series.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl NoiseConfig {
    pub fn resolve(&self, p: usize, normalized: bool) -> Result<ErrorSpec, CliError> {
        let given = [
            self.fraction.is_some(),
            self.diagonal.is_some(),
            self.matrix.is_some(),
        ];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(CliError::Config(
                "noise needs exactly one of fraction, diagonal or matrix".into(),
            ));
        }
        if let Some(f) = self.fraction {
            if !normalized {
                return Err(CliError::Config(
                    "noise.fraction assumes normalize = true".into(),
                ));
            }
            return Ok(sigma_e_from_fraction(f, p)?);
        }
        if let Some(d) = &self.diagonal {
            if d.len() != p {
                return Err(CliError::Config(format!(
                    "noise.diagonal has {} entries for {p} series",
                    d.len()
                )));
            }
            return Ok(ErrorSpec::new(DMatrix::from_diagonal(
                &DVector::from_column_slice(d),
            ))?);
        }
        let m = self.matrix.as_ref().expect("checked above");
        if m.len() != p || m.iter().any(|row| row.len() != p) {
            return Err(CliError::Config(format!("noise.matrix must be {p} x {p}")));
        }
        Ok(ErrorSpec::new(DMatrix::from_fn(p, p, |i, j| m[i][j]))?)
    }
}

/// A Granger pair (`source`, `target`, 1-based) or an explicit `C vec(B') = d`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ContrastConfig {
    /// `names` label Granger pairs that have no explicit label.
    pub fn build(&self, names: &[String], r: usize) -> Result<Contrast, CliError> {
        let p = names.len();
        match (self.source, self.target, &self.c) {
            (Some(s), Some(t), None) if self.d.is_none() => {
                let mut c = granger_contrast(p, r, s, t)?;
                c.label = self
                    .label
                    .clone()
                    .unwrap_or_else(|| format!("{} -> {}", names[s - 1], names[t - 1]));
                Ok(c)
            }
            (None, None, Some(rows)) => {
                let k = p * p * r;
                if rows.is_empty() || rows.iter().any(|row| row.len() != k) {
                    return Err(CliError::Config(format!(
                        "contrast rows must each have {k} entries"
                    )));
                }
                let d = self.d.clone().unwrap_or_else(|| vec![0.0; rows.len()]);
                if d.len() != rows.len() {
                    return Err(CliError::Config(
                        "contrast d must have one entry per row of c".into(),
                    ));
                }
                let c = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
                let label = self.label.clone().unwrap_or_else(|| "custom".into());
                Ok(Contrast::new(c, DVector::from_vec(d), label)?)
            }
            _ => Err(CliError::Config(
                "a contrast is either source + target or c (+ d)".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    /// Alternatives for `b12`; the study's `b12_grid` when empty.
    pub alternatives: Vec<f64>,
    pub rule: PowerRule,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            alternatives: Vec::new(),
            rule: PowerRule::Asymptotic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub b12: f64,
    pub b21: f64,
    pub n: usize,
    pub reps: usize,
    pub burn_in: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            b12: -0.2,
            b21: 0.2,
            n: 2000,
            reps: 2000,
            burn_in: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyTable {
    Joint,
    Single,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub order: usize,
    pub normalize: bool,
    pub alpha: f64,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub estimator: EstimatorChoice,
    pub noise: Option<NoiseConfig>,
    pub contrasts: Vec<ContrastConfig>,
    /// Tables produced by `simulate`.
    pub tables: Vec<StudyTable>,
    pub study: SimStudyConfig,
    pub power: PowerConfig,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            order: 1,
            normalize: true,
            alpha: 0.05,
            out: None,
            seed: None,
            estimator: EstimatorChoice::Both,
            noise: None,
            contrasts: Vec::new(),
            tables: vec![StudyTable::Joint, StudyTable::Single, StudyTable::Bias],
            study: SimStudyConfig::default(),
            power: PowerConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Relative `input` paths resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(input), Some(dir)) = (&cfg.input, path.parent()) {
            if input.is_relative() {
                cfg.input = Some(dir.join(input));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.order == 0 {
            return Err(CliError::Config("order must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!(
                "alpha = {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}
