//! Effective run configuration: built-in defaults, then `--config`, then flags.

use std::fmt;
use std::path::{Path, PathBuf};

use biosep::features::FeatureConfig;
use biosep::interpret::{BackendKind, LabelSet, MockThresholds, RemoteConfig};
use biosep::nmf::NmfConfig;
use biosep::separation::GroupingConfig;
use biosep::synth::{HeartParams, LungParams};
use biosep::timefreq::StftConfig;
use biosep::Error;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

/// Which generated sources end up in the synthetic mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Sources {
    #[default]
    Both,
    Heart,
    Lung,
}

impl fmt::Display for Sources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sources::Both => "both",
            Sources::Heart => "heart",
            Sources::Lung => "lung",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub heart: HeartParams,
    pub lung: LungParams,
    /// Heart-to-lung energy ratio of the mixture.
    pub snr_db: f64,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub sources: Sources,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            heart: HeartParams::default(),
            lung: LungParams::default(),
            snr_db: 0.0,
            duration_s: 20.0,
            sample_rate_hz: 8000,
            sources: Sources::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub stft: StftConfig,
    pub nmf: NmfConfig,
    pub grouping: GroupingConfig,
    pub features: FeatureConfig,
    pub labels: LabelSet,
    pub mock: MockThresholds,
    pub backend: BackendKind,
    pub llm_url: Option<String>,
    pub llm_max_tokens: u32,
    pub llm_timeout_s: f64,
    pub max_inflight: usize,
    pub out: Option<PathBuf>,
    /// Overrides the factorization seed and derives the generator seeds.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let remote = RemoteConfig::default();
        Self {
            stft: StftConfig::default(),
            nmf: NmfConfig::default(),
            grouping: GroupingConfig::default(),
            features: FeatureConfig::default(),
            labels: LabelSet::default(),
            mock: MockThresholds::default(),
            backend: BackendKind::Mock,
            llm_url: None,
            llm_max_tokens: remote.max_tokens,
            llm_timeout_s: remote.timeout_s,
            max_inflight: 2,
            out: None,
            seed: None,
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, or the JSON document at `path` layered over them.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ConfigError::Io(Error::FileNotFound(path.to_path_buf())),
            _ => ConfigError::Io(Error::Io(e)),
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))
    }

    /// Pushes the top-level seed into the factorization and generators.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.nmf.seed = seed;
            self.synth.heart.seed = seed;
            self.synth.lung.seed = seed.wrapping_add(1);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: Error| ConfigError::Invalid(e.to_string());
        self.stft.validate().map_err(invalid)?;
        if !self.stft.is_cola() {
            return Err(ConfigError::Invalid(format!(
                "window_len {} with hop {} does not overlap-add to a constant",
                self.stft.window_len, self.stft.hop
            )));
        }
        self.nmf.validate().map_err(invalid)?;
        let g = &self.grouping;
        if !(g.heart_rate_min_hz > 0.0 && g.heart_rate_min_hz < g.heart_rate_max_hz) {
            return Err(ConfigError::Invalid("grouping heart rate band must satisfy 0 < min < max".into()));
        }
        if self.max_inflight == 0 {
            return Err(ConfigError::Invalid("max_inflight must be >= 1".into()));
        }
        if !(self.llm_timeout_s > 0.0 && self.llm_timeout_s.is_finite()) {
            return Err(ConfigError::Invalid(format!("llm_timeout_s {}", self.llm_timeout_s)));
        }
        let s = &self.synth;
        if !(s.duration_s >= 0.0 && s.duration_s.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "duration must be a non-negative number of seconds, got {}",
                s.duration_s
            )));
        }
        if s.sample_rate_hz == 0 {
            return Err(ConfigError::Invalid("sample rate must be positive".into()));
        }
        if !s.snr_db.is_finite() {
            return Err(ConfigError::Invalid(format!("snr_db {}", s.snr_db)));
        }
        Ok(())
    }

    pub fn remote(&self) -> Result<RemoteConfig, ConfigError> {
        let url = self.llm_url.clone().filter(|u| !u.is_empty());
        let url = url.ok_or_else(|| ConfigError::Invalid("--backend remote needs --llm-url".into()))?;
        Ok(RemoteConfig { url, max_tokens: self.llm_max_tokens, timeout_s: self.llm_timeout_s })
    }
}

#[derive(Debug)]
pub enum ConfigError {
    /// Bad values or document; a usage error.
    Invalid(String),
    Io(Error),
}
