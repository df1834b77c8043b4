//! Forensic toolkit library: the owner-side outer module (trigger
//! generation, endpoint probing, verification) plus the experiment
//! harnesses (correctness triad, interference-attack simulations, crypto
//! benchmark) that back the CLI.

pub mod attack;
pub mod corpus;
pub mod ops;
pub mod triad;

use thiserror::Error;

/// Stable exit-code contract for scripting.
pub const EXIT_OK: u8 = 0;
/// A verification ran and came back negative.
pub const EXIT_NEGATIVE: u8 = 1;
/// Bad configuration, keys, or arguments.
pub const EXIT_CONFIG: u8 = 2;
/// The network was the problem, not the evidence.
pub const EXIT_NETWORK: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("network error: {0}")]
    Network(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Network(_) => EXIT_NETWORK,
        }
    }
}

impl From<branchwm_gateway::config::ConfigError> for CliError {
    fn from(e: branchwm_gateway::config::ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<branchwm_core::crypto::CryptoError> for CliError {
    fn from(e: branchwm_core::crypto::CryptoError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<branchwm_core::codec::CodecError> for CliError {
    fn from(e: branchwm_core::codec::CodecError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<branchwm_core::simple::SchemeError> for CliError {
    fn from(e: branchwm_core::simple::SchemeError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<branchwm_core::concealed::ConcealError> for CliError {
    fn from(e: branchwm_core::concealed::ConcealError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<branchwm_gateway::server::DeployError> for CliError {
    fn from(e: branchwm_gateway::server::DeployError) -> Self {
        Self::Config(e.to_string())
    }
}
