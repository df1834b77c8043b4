//! Flat `key = value` configuration with `BWM_`-prefixed environment
//! overrides.
//!
//! Recognized keys (environment variable in parentheses):
//!
//! | key                  | default          | meaning                              |
//! |----------------------|------------------|--------------------------------------|
//! | mode                 | simple           | simple \| concealed                  |
//! | mac_key              | —                | path to the hex MAC key (required)   |
//! | ek_in                | —                | trigger embedding key (concealed)    |
//! | ek_out               | —                | evidence embedding key (concealed)   |
//! | copyright            | —                | bit string `c` (concealed)           |
//! | delta                | 11.0             | evidence logit bias                  |
//! | bits_per_position    | 4                | chunk width `j`                      |
//! | proclamation         | paper default    | simple-mode forensic text            |
//! | tag_bits             | 512              | MAC tag truncation                   |
//! | vocab                | toy:256          | `toy:<n>` or `file:<path>`           |
//! | backend              | toy              | toy \| remote                        |
//! | model_seed           | 1234             | toy backend seed                     |
//! | remote_url           | —                | remote backend base URL              |
//! | listen               | 127.0.0.1:0      | bind address                         |
//! | max_tokens_cap       | 1024             | per-request generation cap           |
//! | one_time_registry    | false            | one-time triggers (§ replay)         |
//! | bind_evidence_key    | false            | bind evidence to the trigger tag     |
//! | timestamp_evidence   | false            | append unix-minute to `c`            |
//!
//! Environment variables are the upper-cased key with prefix `BWM_`
//! (e.g. `BWM_MAC_KEY`); they take precedence over the file.

use std::path::{Path, PathBuf};

use branchwm_core::codec::Vocab;
use branchwm_core::concealed::{ConcealParams, CopyrightMessage};
use branchwm_core::crypto::SecretKey;
use branchwm_core::simple::DEFAULT_PROCLAMATION;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?}")]
    BadValue { key: String, value: String },
    #[error("{0} is required in concealed mode")]
    MissingConcealedField(&'static str),
    #[error("mac_key is required")]
    MissingMacKey,
    #[error("delta must be nonnegative, got {0}")]
    NegativeDelta(f64),
    #[error("concealed mode requires the in-process toy backend")]
    ConcealedNeedsToyBackend,
    #[error("remote backend requires remote_url")]
    MissingRemoteUrl,
    #[error("cannot load key {path}: {source}")]
    Key {
        path: String,
        source: branchwm_core::crypto::CryptoError,
    },
    #[error(transparent)]
    Vocab(#[from] branchwm_core::codec::CodecError),
    #[error(transparent)]
    Message(#[from] branchwm_core::concealed::ConcealError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simple,
    Concealed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendCfg {
    Toy { model_seed: u64 },
    Remote { url: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum VocabCfg {
    Toy { size: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub mode: Mode,
    pub mac_key_path: Option<PathBuf>,
    pub ek_in_path: Option<PathBuf>,
    pub ek_out_path: Option<PathBuf>,
    pub copyright: Option<String>,
    pub delta: f64,
    pub bits_per_position: usize,
    pub proclamation: String,
    pub tag_bits: usize,
    pub vocab: VocabCfg,
    pub backend: BackendCfg,
    pub listen: String,
    pub max_tokens_cap: usize,
    pub one_time_registry: bool,
    pub bind_evidence_key: bool,
    pub timestamp_evidence: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Simple,
            mac_key_path: None,
            ek_in_path: None,
            ek_out_path: None,
            copyright: None,
            delta: 11.0,
            bits_per_position: 4,
            proclamation: DEFAULT_PROCLAMATION.to_owned(),
            tag_bits: 512,
            vocab: VocabCfg::Toy { size: 256 },
            backend: BackendCfg::Toy { model_seed: 1234 },
            listen: "127.0.0.1:0".to_owned(),
            max_tokens_cap: 1024,
            one_time_registry: false,
            bind_evidence_key: false,
            timestamp_evidence: false,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_owned(),
            value: value.to_owned(),
        }),
    }
}

impl GatewayConfig {
    /// Parse a config file, then apply `BWM_*` environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_str_inner(&text)?;
        config.apply_env_overrides(|key| std::env::var(key).ok())?;
        Ok(config)
    }

    /// Parse config text without touching the environment.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Self::from_str_inner(text)
    }

    fn from_str_inner(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: i + 1,
                text: raw.to_owned(),
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Apply overrides via a lookup (the real environment in production,
    /// injectable in tests).
    pub fn apply_env_overrides(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        for key in KEYS {
            let env_key = format!("BWM_{}", key.to_ascii_uppercase());
            if let Some(value) = lookup(&env_key) {
                self.set(key, &value)?;
            }
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.to_owned(),
            value: value.to_owned(),
        };
        match key {
            "mode" => {
                self.mode = match value {
                    "simple" => Mode::Simple,
                    "concealed" => Mode::Concealed,
                    _ => return Err(bad()),
                }
            }
            "mac_key" => self.mac_key_path = Some(PathBuf::from(value)),
            "ek_in" => self.ek_in_path = Some(PathBuf::from(value)),
            "ek_out" => self.ek_out_path = Some(PathBuf::from(value)),
            "copyright" => self.copyright = Some(value.to_owned()),
            "delta" => self.delta = value.parse().map_err(|_| bad())?,
            "bits_per_position" => self.bits_per_position = value.parse().map_err(|_| bad())?,
            "proclamation" => self.proclamation = value.to_owned(),
            "tag_bits" => self.tag_bits = value.parse().map_err(|_| bad())?,
            "vocab" => {
                self.vocab = if let Some(size) = value.strip_prefix("toy:") {
                    VocabCfg::Toy {
                        size: size.parse().map_err(|_| bad())?,
                    }
                } else if let Some(path) = value.strip_prefix("file:") {
                    VocabCfg::File {
                        path: PathBuf::from(path),
                    }
                } else {
                    return Err(bad());
                }
            }
            "backend" => match value {
                "toy" => {
                    if !matches!(self.backend, BackendCfg::Toy { .. }) {
                        self.backend = BackendCfg::Toy { model_seed: 1234 };
                    }
                }
                "remote" => {
                    if !matches!(self.backend, BackendCfg::Remote { .. }) {
                        self.backend = BackendCfg::Remote { url: String::new() };
                    }
                }
                _ => return Err(bad()),
            },
            "model_seed" => {
                let seed = value.parse().map_err(|_| bad())?;
                self.backend = BackendCfg::Toy { model_seed: seed };
            }
            "remote_url" => self.backend = BackendCfg::Remote { url: value.to_owned() },
            "listen" => self.listen = value.to_owned(),
            "max_tokens_cap" => self.max_tokens_cap = value.parse().map_err(|_| bad())?,
            "one_time_registry" => self.one_time_registry = parse_bool(key, value)?,
            "bind_evidence_key" => self.bind_evidence_key = parse_bool(key, value)?,
            "timestamp_evidence" => self.timestamp_evidence = parse_bool(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    /// Startup validation plus key/vocab materialization.
    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        if self.delta < 0.0 {
            return Err(ConfigError::NegativeDelta(self.delta));
        }
        let mac_key_path = self.mac_key_path.as_ref().ok_or(ConfigError::MissingMacKey)?;
        let load_key = |path: &PathBuf| {
            SecretKey::load(path).map_err(|source| ConfigError::Key {
                path: path.display().to_string(),
                source,
            })
        };
        let mac_key = load_key(mac_key_path)?;
        let vocab = match &self.vocab {
            VocabCfg::Toy { size } => Vocab::toy(*size),
            VocabCfg::File { path } => Vocab::load(path)?,
        };
        if let BackendCfg::Remote { url } = &self.backend {
            if url.is_empty() {
                return Err(ConfigError::MissingRemoteUrl);
            }
        }
        let conceal = match self.mode {
            Mode::Simple => None,
            Mode::Concealed => {
                if !matches!(self.backend, BackendCfg::Toy { .. }) {
                    return Err(ConfigError::ConcealedNeedsToyBackend);
                }
                let ek_in = self
                    .ek_in_path
                    .as_ref()
                    .ok_or(ConfigError::MissingConcealedField("ek_in"))?;
                let ek_out = self
                    .ek_out_path
                    .as_ref()
                    .ok_or(ConfigError::MissingConcealedField("ek_out"))?;
                let bits = self
                    .copyright
                    .as_ref()
                    .ok_or(ConfigError::MissingConcealedField("copyright"))?;
                let params = ConcealParams {
                    ek_in: load_key(ek_in)?,
                    ek_out: load_key(ek_out)?,
                    delta: self.delta,
                    bits_per_position: self.bits_per_position,
                    message: CopyrightMessage::from_bit_str(bits)?,
                    bind_evidence_key: self.bind_evidence_key,
                };
                params.validate(vocab.size())?;
                Some(params)
            }
        };
        Ok(ResolvedConfig {
            mac_key,
            vocab,
            conceal,
        })
    }
}

/// Materialized keys, vocabulary, and concealed-mode parameters.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub mac_key: SecretKey,
    pub vocab: Vocab,
    pub conceal: Option<ConcealParams>,
}

const KEYS: &[&str] = &[
    "mode",
    "mac_key",
    "ek_in",
    "ek_out",
    "copyright",
    "delta",
    "bits_per_position",
    "proclamation",
    "tag_bits",
    "vocab",
    "backend",
    "model_seed",
    "remote_url",
    "listen",
    "max_tokens_cap",
    "one_time_registry",
    "bind_evidence_key",
    "timestamp_evidence",
];
