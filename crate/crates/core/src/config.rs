//! Experiment configuration (TOML) and solved-policy artifacts.
//!
//! Defaults reproduce the reference experiment: the AR(63) source, the
//! two-state channel with its four delay PMFs, `B = 64`, `δ_max = 500`,
//! and a ten-point α sweep.

use crate::channel::{reference_pmfs, ChannelModel, DelayPmf};
use crate::error_model::{inference_error_curve, ArModel, ErrorCurve};
use crate::policy::BufferMapping;
use crate::simulator::{SimConfig, SweepSetup};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn invalid(path: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Exactly one of `ar` and `h_table`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar: Option<ArConfig>,
    /// `h(1), h(2), ...`; held at the last value beyond the table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_table: Option<Vec<f64>>,
}

/// Exactly one of `coefficients` (dense, lag 1 first) and
/// `sparse_coefficients` (`[lag, value]` pairs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse_coefficients: Option<Vec<(usize, f64)>>,
    pub noise_var: f64,
    pub obs_noise_var: f64,
}

/// Exactly one of `alpha` (two states, `p01 = p10 = α/2`) and `transition`.
/// Delay PMFs are `[delay, probability]` pairs per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    pub transmission: Vec<Vec<(u32, f64)>>,
    pub feedback: Vec<Vec<(u32, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub buffer_size: usize,
    pub delta_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_max: Option<usize>,
    /// Bisection tolerance; defaults to `1e-9 (max h - min h)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            buffer_size: 64,
            delta_max: 500,
            nu_max: None,
            tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub horizon: u64,
    pub warm_up: u64,
    pub warm_up_epochs: u64,
    pub batches: usize,
    /// Number of seeds; runs use `base_seed, base_seed + 1, ...`.
    pub seeds: usize,
    pub base_seed: u64,
    pub alphas: Vec<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            horizon: sim.horizon,
            warm_up: sim.warm_up,
            warm_up_epochs: sim.warm_up_epochs,
            batches: sim.batches,
            seeds: 10,
            base_seed: 1,
            alphas: (1..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Rows written by the error-curve command.
    pub curve_rows: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            curve_rows: 99,
        }
    }
}

fn pmf_pairs(pmfs: &[DelayPmf]) -> Vec<Vec<(u32, f64)>> {
    pmfs.iter().map(DelayPmf::pairs).collect()
}

impl ExperimentConfig {
    /// The reference experiment at `α = 0.2`.
    pub fn reference() -> Self {
        let model = ArModel::reference_ar63();
        let sparse = model
            .coefficients()
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(j, a)| (j + 1, *a))
            .collect();
        let (transmission, feedback) = reference_pmfs();
        Self {
            source: SourceConfig {
                ar: Some(ArConfig {
                    coefficients: None,
                    sparse_coefficients: Some(sparse),
                    noise_var: model.noise_var(),
                    obs_noise_var: model.obs_noise_var(),
                }),
                h_table: None,
            },
            channel: ChannelConfig {
                alpha: Some(0.2),
                transition: None,
                transmission: pmf_pairs(&transmission),
                feedback: pmf_pairs(&feedback),
            },
            policy: PolicyConfig::default(),
            simulation: SimulationConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::from_toml(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section, reporting the first offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ar_model()?;
        self.curve()?;
        self.channel()?;
        let p = &self.policy;
        if p.buffer_size == 0 {
            return Err(invalid("policy.buffer_size", "must be at least 1"));
        }
        if p.delta_max == 0 {
            return Err(invalid("policy.delta_max", "must be at least 1"));
        }
        if p.nu_max == Some(0) {
            return Err(invalid("policy.nu_max", "must be at least 1"));
        }
        if let Some(tol) = p.tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(invalid("policy.tol", "must be positive and finite"));
            }
        }
        let s = &self.simulation;
        if s.horizon <= s.warm_up {
            return Err(invalid("simulation.horizon", "must exceed simulation.warm_up"));
        }
        if s.batches < 2 {
            return Err(invalid("simulation.batches", "must be at least 2"));
        }
        if s.seeds == 0 {
            return Err(invalid("simulation.seeds", "must be at least 1"));
        }
        for (i, a) in s.alphas.iter().enumerate() {
            if !(*a > 0.0 && *a < 2.0) {
                return Err(invalid(format!("simulation.alphas[{i}]"), "must lie in (0, 2)"));
            }
        }
        if self.output.curve_rows == 0 {
            return Err(invalid("output.curve_rows", "must be at least 1"));
        }
        Ok(())
    }

    /// The AR model, if the source is given as one.
    pub fn ar_model(&self) -> Result<Option<ArModel>, ConfigError> {
        let src = &self.source;
        let ar = match (&src.ar, &src.h_table) {
            (Some(ar), None) => ar,
            (None, Some(_)) => return Ok(None),
            (None, None) => {
                return Err(invalid("source", "one of source.ar or source.h_table is required"))
            }
            (Some(_), Some(_)) => {
                return Err(invalid("source", "source.ar and source.h_table are mutually exclusive"))
            }
        };
        let coefficients = match (&ar.coefficients, &ar.sparse_coefficients) {
            (Some(c), None) => c.clone(),
            (None, Some(sparse)) => {
                let order = sparse.iter().map(|(lag, _)| *lag).max().unwrap_or(0);
                let mut c = vec![0.0; order];
                for (i, &(lag, value)) in sparse.iter().enumerate() {
                    if lag == 0 {
                        return Err(invalid(
                            format!("source.ar.sparse_coefficients[{i}]"),
                            "lags start at 1",
                        ));
                    }
                    c[lag - 1] += value;
                }
                c
            }
            _ => {
                return Err(invalid(
                    "source.ar",
                    "exactly one of coefficients and sparse_coefficients is required",
                ))
            }
        };
        ArModel::new(coefficients, ar.noise_var, ar.obs_noise_var)
            .map(Some)
            .map_err(|e| invalid("source.ar", e))
    }

    pub fn curve(&self) -> Result<ErrorCurve, ConfigError> {
        match self.ar_model()? {
            Some(model) => inference_error_curve(&model, self.policy.delta_max)
                .map_err(|e| invalid("source.ar", e)),
            None => {
                let table = self.source.h_table.clone().unwrap_or_default();
                ErrorCurve::from_values(table).map_err(|e| invalid("source.h_table", e))
            }
        }
    }

    fn pmfs(&self) -> Result<(Vec<DelayPmf>, Vec<DelayPmf>), ConfigError> {
        let parse = |name: &str, lists: &[Vec<(u32, f64)>]| {
            lists
                .iter()
                .enumerate()
                .map(|(i, pairs)| {
                    DelayPmf::new(pairs).map_err(|e| invalid(format!("channel.{name}[{i}]"), e))
                })
                .collect::<Result<Vec<_>, _>>()
        };
        Ok((
            parse("transmission", &self.channel.transmission)?,
            parse("feedback", &self.channel.feedback)?,
        ))
    }

    pub fn channel(&self) -> Result<ChannelModel, ConfigError> {
        let (transmission, feedback) = self.pmfs()?;
        match (&self.channel.alpha, &self.channel.transition) {
            (Some(alpha), None) => ChannelModel::symmetric_two_state(*alpha, transmission, feedback)
                .map_err(|e| invalid("channel.alpha", e)),
            (None, Some(p)) => ChannelModel::new(p.clone(), transmission, feedback)
                .map_err(|e| invalid("channel.transition", e)),
            _ => Err(invalid(
                "channel",
                "exactly one of channel.alpha and channel.transition is required",
            )),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            horizon: self.simulation.horizon,
            warm_up: self.simulation.warm_up,
            warm_up_epochs: self.simulation.warm_up_epochs,
            batches: self.simulation.batches,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        let base = self.simulation.base_seed;
        (0..self.simulation.seeds as u64).map(|k| base + k).collect()
    }

    pub fn sweep_setup(&self) -> Result<SweepSetup, ConfigError> {
        let (transmission, feedback) = self.pmfs()?;
        if transmission.len() != 2 || feedback.len() != 2 {
            return Err(invalid("channel", "an alpha sweep needs exactly two channel states"));
        }
        if self.simulation.alphas.is_empty() {
            return Err(invalid("simulation.alphas", "an alpha sweep needs at least one value"));
        }
        Ok(SweepSetup {
            curve: self.curve()?,
            transmission,
            feedback,
            buffer_size: self.policy.buffer_size,
            nu_max: self.policy.nu_max,
            tol: self.policy.tol,
        })
    }

    /// SHA-256 of the canonical serialization.
    pub fn config_hash(&self) -> Result<String, ConfigError> {
        Ok(sha256_hex(&self.to_toml()?))
    }

    /// SHA-256 over the sections that determine a solved policy (source,
    /// channel, policy); simulation and output settings do not enter.
    pub fn problem_hash(&self) -> Result<String, ConfigError> {
        #[derive(Serialize)]
        struct Problem<'a> {
            source: &'a SourceConfig,
            channel: &'a ChannelConfig,
            policy: &'a PolicyConfig,
        }
        let text = toml::to_string(&Problem {
            source: &self.source,
            channel: &self.channel,
            policy: &self.policy,
        })?;
        Ok(sha256_hex(&text))
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Header comment carried by every CSV output.
pub fn csv_header_comment(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Optimal,
    IidBaseline,
}

/// A solved threshold policy, tied to the problem it was solved for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyArtifact {
    pub kind: ArtifactKind,
    pub problem_hash: String,
    pub threshold: f64,
    pub buffer_size: usize,
    pub mapping: Vec<usize>,
}

impl PolicyArtifact {
    pub fn buffer_mapping(&self) -> Result<BufferMapping, ConfigError> {
        BufferMapping::new(self.mapping.clone(), self.buffer_size)
            .map_err(|e| invalid("artifact.mapping", e))
    }

    /// Errors unless the artifact was solved for `config`'s problem.
    pub fn check_compatible(&self, config: &ExperimentConfig) -> Result<(), ConfigError> {
        let expected = config.problem_hash()?;
        if self.problem_hash != expected {
            return Err(invalid(
                "artifact.problem_hash",
                format!("hash mismatch: artifact {} vs config {expected}", self.problem_hash),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }
}
