use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use kernelpilot_core::agents::{Pricing, RetryPolicy};
use kernelpilot_core::profile::ProfileMode;
use kernelpilot_core::toolchain::CudaConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Cuda,
}

/// Settings read from the `--config` TOML file. Every field has a default,
/// so an empty file is valid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub model: String,
    /// Base URL of an OpenAI-compatible chat-completions endpoint.
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub request_timeout_secs: u64,
    pub temperature: f64,
    /// USD per million tokens, keyed by model id.
    pub prices: BTreeMap<String, Pricing>,
    pub retry: RetryPolicy,
    /// Bound to `{info}` in every prompt.
    pub hardware_info: String,
    pub backend: BackendKind,
    pub rounds: u32,
    pub debug_rounds: u32,
    pub profile_mode: ProfileMode,
    pub workers: usize,
    pub seed: u64,
    pub run_dir: PathBuf,
    /// Calibrated threshold file; defaults apply when unset or missing.
    pub thresholds: Option<PathBuf>,
    pub cuda: CudaConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            model: "o4-mini".into(),
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            request_timeout_secs: 300,
            temperature: 0.2,
            prices: BTreeMap::from([(
                "o4-mini".to_string(),
                Pricing {
                    input_per_million: 1.1,
                    output_per_million: 4.4,
                },
            )]),
            retry: RetryPolicy::default(),
            hardware_info: "NVIDIA GeForce RTX 4090 (Ada, sm_89), 24 GB GDDR6X, CUDA 12".into(),
            backend: BackendKind::Mock,
            rounds: 3,
            debug_rounds: 3,
            profile_mode: ProfileMode::Filtered,
            workers: 1,
            seed: 0,
            run_dir: PathBuf::from("runs"),
            thresholds: None,
            cuda: CudaConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn pricing(&self) -> Pricing {
        match self.prices.get(&self.model) {
            Some(p) => *p,
            None => {
                tracing::warn!(model = %self.model, "no price configured, costs will read as zero");
                Pricing::default()
            }
        }
    }
}
