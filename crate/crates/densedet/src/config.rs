//! Run configuration: a TOML file of overrides applied on top of a named
//! profile preset (`desk` or `paper`). Unknown keys are rejected everywhere;
//! environment variables are never consulted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::manifest::toml_error;
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::loss::{LossConfig, LossVariant};
use crate::net::{CoarseWiring, NetworkConfig, PositionalEncoding};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Temporal windows for the action-conditional metrics.
    pub taus: Vec<usize>,
    /// Decision threshold for precision/recall.
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { taus: vec![0, 20, 40], threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Dataset manifest, relative to the config file's directory.
    pub manifest: Option<String>,
}

/// Fully resolved configuration for a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub profile: String,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub data: DataPaths,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_profile(profile: &str) -> Result<Self> {
        let (network, train) = match profile {
            "desk" => (NetworkConfig::desk(), TrainConfig::desk()),
            "paper" => (NetworkConfig::paper(), TrainConfig::paper()),
            other => {
                return Err(Error::Config(format!(
                    "unknown profile `{other}` (expected `desk` or `paper`)"
                )))
            }
        };
        Ok(RunConfig {
            profile: profile.to_string(),
            network,
            train,
            loss: LossConfig::default(),
            data: DataPaths::default(),
            eval: EvalConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        if !(0.0 < self.eval.threshold && self.eval.threshold < 1.0) {
            return Err(Error::Config(format!(
                "eval threshold {} outside (0, 1)",
                self.eval.threshold
            )));
        }
        Ok(())
    }

    /// Canonical TOML echo written alongside every command's outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serialization")
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkOverrides {
    t_train: Option<usize>,
    d_in: Option<usize>,
    classes: Option<usize>,
    c_star: Option<usize>,
    d_star: Option<usize>,
    blocks: Option<usize>,
    heads: Option<usize>,
    branches: Option<usize>,
    alpha_fine: Option<f64>,
    alpha_coarse: Option<f64>,
    r_clip: Option<usize>,
    dropout: Option<f64>,
    activation: Option<Activation>,
    positional: Option<PositionalEncoding>,
    coarse_wiring: Option<CoarseWiring>,
    assistant_enabled: Option<bool>,
    fine_enabled: Option<bool>,
    coarse_enabled: Option<bool>,
    share_rel_tables: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainOverrides {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr_initial: Option<f64>,
    lr_decay_factor: Option<f64>,
    lr_decay_every_epochs: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossOverrides {
    gamma_plus: Option<f64>,
    gamma_minus: Option<f64>,
    clamp_eps: Option<f64>,
    variant: Option<LossVariant>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalOverrides {
    taus: Option<Vec<usize>>,
    threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    profile: Option<String>,
    #[serde(default)]
    network: NetworkOverrides,
    #[serde(default)]
    train: TrainOverrides,
    #[serde(default)]
    loss: LossOverrides,
    #[serde(default)]
    data: DataPaths,
    #[serde(default)]
    eval: EvalOverrides,
}

macro_rules! apply {
    ($dst:expr, $src:expr, [$($field:ident),* $(,)?]) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })*
    };
}

/// Parses a configuration from TOML text. Precedence: CLI flags, then the
/// file's values, then the profile preset.
pub fn parse_run_config(
    text: &str,
    profile_flag: Option<&str>,
    seed_flag: Option<u64>,
) -> Result<RunConfig> {
    let file: RunConfigFile = toml::from_str(text).map_err(|e| toml_error(&e))?;
    let profile = profile_flag
        .map(str::to_string)
        .or(file.profile.clone())
        .unwrap_or_else(|| "desk".to_string());
    let mut cfg = RunConfig::from_profile(&profile)?;

    apply!(cfg.network, file.network, [
        t_train, d_in, classes, c_star, d_star, blocks, heads, branches,
        alpha_fine, alpha_coarse, r_clip, dropout, activation, positional,
        coarse_wiring, assistant_enabled, fine_enabled, coarse_enabled,
        share_rel_tables,
    ]);
    apply!(cfg.train, file.train, [
        epochs, batch_size, lr_initial, lr_decay_factor, lr_decay_every_epochs, seed,
    ]);
    apply!(cfg.loss, file.loss, [gamma_plus, gamma_minus, clamp_eps, variant]);
    apply!(cfg.eval, file.eval, [taus, threshold]);
    cfg.data = file.data;

    if let Some(seed) = seed_flag {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_run_config(
    path: &Path,
    profile_flag: Option<&str>,
    seed_flag: Option<u64>,
) -> Result<RunConfig> {
    parse_run_config(&std::fs::read_to_string(path)?, profile_flag, seed_flag)
}
