//! Run configuration: TOML schema, paper defaults, validation, and
//! resolution into the concrete training/evaluation parameter sets.
//!
//! Every field has a default reproducing the published simulation settings,
//! so an empty file is a valid config. Unknown keys are rejected. Episode
//! counts and the epsilon anneal default differently per scheme (2000/1600
//! for c-decision, 10000/8000 for d-decision), so those two fields stay
//! optional until resolution.

use serde::{Deserialize, Serialize};
use specshare::dqn::cdecision::CArch;
use specshare::dqn::ddecision::DArch;
use specshare::dqn::{EpsilonSchedule, LossKind, TrainParams};
use specshare::env::{PropagationConfig, ScenarioConfig};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CDecision,
    DDecision,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::CDecision => write!(f, "c-decision"),
            Scheme::DDecision => write!(f, "d-decision"),
        }
    }
}

/// Architecture section: one schema covering both schemes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub scheme: Scheme,
    /// Real-valued feedback count per V2V link (N_k).
    pub n_k: usize,
    pub comp_hidden: Vec<usize>,
    pub binary_feedback: bool,
    pub feedback_bits: usize,
    /// BS Q-network hidden widths (c-decision).
    pub bs_hidden: Vec<usize>,
    /// AGI width (d-decision); required there, meaningless for c-decision.
    pub n_g: Option<usize>,
    pub agg_hidden: Vec<usize>,
    pub binary_agi: bool,
    pub n_g_bits: usize,
    pub dec_hidden: Vec<usize>,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::CDecision,
            n_k: 3,
            comp_hidden: vec![16, 32, 16],
            binary_feedback: false,
            feedback_bits: 36,
            bs_hidden: vec![1200, 800, 600],
            n_g: None,
            agg_hidden: vec![500, 400, 300],
            binary_agi: false,
            n_g_bits: 80,
            dec_hidden: vec![80, 40, 20],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Default 2000 (c-decision) or 10000 (d-decision).
    pub episodes: Option<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub target_refresh_steps: usize,
    pub buffer_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Default 1600 (c-decision) or 8000 (d-decision).
    pub epsilon_anneal_episodes: Option<usize>,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub huber_delta: f64,
    pub loss: LossKind,
    /// Periodic checkpoint cadence in episodes.
    pub checkpoint_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            episodes: None,
            batch_size: 512,
            learning_rate: 0.001,
            gamma: 0.05,
            target_refresh_steps: 500,
            buffer_capacity: 1_000_000,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_anneal_episodes: None,
            rmsprop_decay: 0.9,
            rmsprop_eps: 1e-7,
            huber_delta: 1.0,
            loss: LossKind::Huber,
            checkpoint_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub episodes: usize,
    /// Environment seed shared by every evaluation, so different runs and
    /// sweep grid points are compared on identical channel traces.
    pub seed: u64,
    pub feedback_interval: usize,
    pub input_noise_ratio: f64,
    pub feedback_noise_ratio: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            seed: 0xE7A1,
            feedback_interval: 1,
            input_noise_ratio: 0.0,
            feedback_noise_ratio: 0.0,
        }
    }
}

/// Top-level run configuration (TOML).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; expands into per-component streams.
    pub seed: u64,
    /// Human label prefixed to the run directory name; derived when empty.
    pub label: String,
    pub scenario: ScenarioConfig,
    pub propagation: PropagationConfig,
    pub architecture: ArchitectureConfig,
    pub training: TrainingConfig,
    pub evaluation: EvaluationConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    /// Scheme-aware resolved episode count.
    pub fn episodes(&self) -> usize {
        self.training.episodes.unwrap_or(match self.architecture.scheme {
            Scheme::CDecision => 2000,
            Scheme::DDecision => 10_000,
        })
    }

    pub fn epsilon_anneal_episodes(&self) -> usize {
        self.training
            .epsilon_anneal_episodes
            .unwrap_or(match self.architecture.scheme {
                Scheme::CDecision => 1600,
                Scheme::DDecision => 8000,
            })
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            episodes: self.episodes(),
            steps_per_episode: self.scenario.steps_per_episode,
            batch_size: self.training.batch_size,
            learning_rate: self.training.learning_rate,
            gamma: self.training.gamma,
            target_refresh_steps: self.training.target_refresh_steps,
            buffer_capacity: self.training.buffer_capacity,
            epsilon: EpsilonSchedule {
                start: self.training.epsilon_start,
                end: self.training.epsilon_end,
                anneal_episodes: self.epsilon_anneal_episodes(),
            },
            rmsprop_decay: self.training.rmsprop_decay,
            rmsprop_eps: self.training.rmsprop_eps,
            huber_delta: self.training.huber_delta,
            loss: self.training.loss,
        }
    }

    pub fn c_arch(&self) -> CArch {
        let a = &self.architecture;
        CArch {
            n_k: a.n_k,
            comp_hidden: a.comp_hidden.clone(),
            binary_feedback: a.binary_feedback,
            feedback_bits: a.feedback_bits,
            bs_hidden: a.bs_hidden.clone(),
        }
    }

    pub fn d_arch(&self) -> DArch {
        let a = &self.architecture;
        DArch {
            n_k: a.n_k,
            comp_hidden: a.comp_hidden.clone(),
            binary_feedback: a.binary_feedback,
            feedback_bits: a.feedback_bits,
            n_g: a.n_g.unwrap_or(0),
            agg_hidden: a.agg_hidden.clone(),
            binary_agi: a.binary_agi,
            n_g_bits: a.n_g_bits,
            dec_hidden: a.dec_hidden.clone(),
        }
    }

    /// Derived human label for run directories.
    pub fn effective_label(&self) -> String {
        if !self.label.is_empty() {
            return self.label.clone();
        }
        let a = &self.architecture;
        let mut label = match a.scheme {
            Scheme::CDecision => format!("c-nk{}", a.n_k),
            Scheme::DDecision => format!("d-nk{}-g{}", a.n_k, a.n_g.unwrap_or(0)),
        };
        if a.binary_feedback {
            label.push_str(&format!("-fb{}", a.feedback_bits));
        }
        if a.binary_agi {
            label.push_str(&format!("-gb{}", a.n_g_bits));
        }
        label
    }

    /// Structural validation; width-consistency preconditions fail here,
    /// before any training starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.propagation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let a = &self.architecture;
        if a.n_k == 0 {
            return Err(ConfigError::Invalid(
                "architecture.n_k = 0 means no feedback at all; use the random-baseline command \
                 instead of training"
                    .into(),
            ));
        }
        if a.comp_hidden.is_empty() || a.comp_hidden.iter().any(|&w| w == 0) {
            return Err(ConfigError::Invalid(
                "architecture.comp_hidden must be nonempty positive widths".into(),
            ));
        }
        if a.binary_feedback && a.feedback_bits == 0 {
            return Err(ConfigError::Invalid(
                "architecture.feedback_bits must be positive with binary feedback".into(),
            ));
        }
        match a.scheme {
            Scheme::CDecision => {
                if a.bs_hidden.is_empty() || a.bs_hidden.iter().any(|&w| w == 0) {
                    return Err(ConfigError::Invalid(
                        "architecture.bs_hidden must be nonempty positive widths".into(),
                    ));
                }
                let n_actions = specshare::env::ActionCodec::new(
                    self.scenario.n_v2i,
                    self.scenario.n_v2v,
                )
                .count();
                if n_actions > specshare::oracle::MAX_ENUMERABLE_ACTIONS {
                    return Err(ConfigError::Invalid(format!(
                        "joint action space N^K = {n_actions} exceeds {} (BS output layer and \
                         oracle enumeration would be intractable)",
                        specshare::oracle::MAX_ENUMERABLE_ACTIONS
                    )));
                }
            }
            Scheme::DDecision => {
                let n_g = a.n_g.ok_or_else(|| {
                    ConfigError::Invalid(
                        "architecture.n_g is required for the d-decision scheme".into(),
                    )
                })?;
                if n_g == 0 {
                    return Err(ConfigError::Invalid(
                        "architecture.n_g must be positive".into(),
                    ));
                }
                if a.binary_agi && a.n_g_bits == 0 {
                    return Err(ConfigError::Invalid(
                        "architecture.n_g_bits must be positive with binary AGI".into(),
                    ));
                }
            }
        }
        let t = &self.training;
        if t.batch_size == 0 || t.buffer_capacity < t.batch_size {
            return Err(ConfigError::Invalid(
                "training.batch_size must be positive and fit the buffer".into(),
            ));
        }
        if !(0.0..1.0).contains(&t.gamma) {
            return Err(ConfigError::Invalid(
                "training.gamma must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&t.epsilon_start) || !(0.0..=1.0).contains(&t.epsilon_end) {
            return Err(ConfigError::Invalid(
                "training epsilon bounds must lie in [0, 1]".into(),
            ));
        }
        if t.target_refresh_steps == 0 || t.checkpoint_every == 0 {
            return Err(ConfigError::Invalid(
                "training cadences must be positive".into(),
            ));
        }
        if self.evaluation.episodes == 0 || self.evaluation.feedback_interval == 0 {
            return Err(ConfigError::Invalid(
                "evaluation.episodes and evaluation.feedback_interval must be positive".into(),
            ));
        }
        if self.evaluation.input_noise_ratio < 0.0 || self.evaluation.feedback_noise_ratio < 0.0 {
            return Err(ConfigError::Invalid(
                "noise ratios must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Parse and validate a config file; an empty or missing-section file yields
/// the full published defaults.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg = RunConfig::from_toml_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}
