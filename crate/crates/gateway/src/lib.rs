//! Watermarking API gateway.
//!
//! Wraps a generation backend with the inner watermark module: every
//! request runs trigger detection, non-triggers are served byte-identically
//! to the bare backend (Service state), and triggers take the Prove path
//! (Forensic state). Production responses never reveal which state
//! answered; debug builds expose a `state` field for testing.

pub mod backend;
pub mod config;
pub mod registry;
pub mod server;

pub use config::{BackendCfg, GatewayConfig, Mode};
pub use server::{deploy, deploy_bare, ServerHandle};
