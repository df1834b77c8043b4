//! `branchwm` — the forensic CLI.
//!
//! Exit codes: 0 success, 1 verification-negative, 2 configuration error,
//! 3 network error.

use std::path::PathBuf;
use std::process::ExitCode;

use branchwm_cli::{attack, ops, triad, CliError, EXIT_CONFIG, EXIT_NEGATIVE, EXIT_OK};
use branchwm_core::crypto::{self, SecretKey};
use branchwm_gateway::config::{GatewayConfig, Mode};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "branchwm", version, about = "Model-watermark forensic toolkit")]
struct Cli {
    /// Gateway-style config file (required by trigger and probe).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for self-contained experiment commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Override the configured watermark mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Simple,
    Concealed,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Simple => Mode::Simple,
            ModeArg::Concealed => Mode::Concealed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    Filter,
    Erasure,
    Replay,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a secret key and write it as hex.
    Keygen {
        #[arg(long, default_value_t = 256)]
        bits: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce a trigger artifact for a prompt.
    Trigger {
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Post a trigger artifact to a suspect endpoint and verify evidence.
    Probe {
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long, default_value_t = 256)]
        max_tokens: usize,
        #[arg(long, default_value_t = ops::DEFAULT_TAU)]
        tau: f64,
    },
    /// Run the correctness triad against self-deployed services.
    Triad {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an interference-attack simulation.
    AttackSim {
        #[arg(long, value_enum)]
        attack: AttackKind,
        /// Trial count.
        #[arg(long, default_value_t = 200)]
        q: usize,
        /// Substitution rates for the erasure attack.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.05, 0.1, 0.2])]
        rho: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark hash vs MAC vs signature verification.
    Bench {
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<GatewayConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".to_owned()))?;
    let mut config = GatewayConfig::load(path)?;
    if let Some(mode) = cli.mode {
        config.mode = mode.into();
    }
    Ok(config)
}

fn emit(report: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    if let Some(path) = out {
        std::fs::write(path, report).map_err(|e| CliError::Config(e.to_string()))?;
    }
    print!("{report}");
    Ok(())
}

async fn run(cli: Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Keygen { bits, out } => {
            let key = SecretKey::generate(*bits)?;
            key.save(out)?;
            println!("wrote {}-bit key to {}", bits, out.display());
            Ok(EXIT_OK)
        }
        Command::Trigger { prompt, out } => {
            let config = load_config(&cli)?;
            let artifact = ops::make_trigger_artifact(&config, prompt)?;
            std::fs::write(out, &artifact).map_err(|e| CliError::Config(e.to_string()))?;
            println!("wrote trigger artifact to {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Probe {
            endpoint,
            artifact,
            max_tokens,
            tau,
        } => {
            let config = load_config(&cli)?;
            let text = std::fs::read_to_string(artifact)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let outcome = ops::probe(&config, endpoint, &text, *max_tokens, *tau).await?;
            print!("{}", outcome.to_csv());
            Ok(match outcome.verdict {
                ops::Verdict::ValidEvidence => EXIT_OK,
                ops::Verdict::Invalid => EXIT_NEGATIVE,
                ops::Verdict::Error(_) => branchwm_cli::EXIT_NETWORK,
            })
        }
        Command::Triad { n, out } => {
            let mode = cli.mode.map(Mode::from).unwrap_or(Mode::Simple);
            let tag_bits = match mode {
                Mode::Simple => 512,
                Mode::Concealed => 64,
            };
            let setup = triad::setup(cli.seed, mode, tag_bits)?;
            let report = triad::run_triad(&setup, *n).await?;
            emit(&report.to_csv(), out.as_ref())?;
            Ok(if report.all_pass() { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::AttackSim {
            attack,
            q,
            rho,
            out,
        } => {
            let (csv, ok) = match attack {
                AttackKind::Filter => {
                    let report = attack::filter_attack(cli.seed, *q)?;
                    let ok = report.simple_rate - report.natural_rate > 0.5;
                    (report.to_csv(), ok)
                }
                AttackKind::Erasure => {
                    let report = attack::erasure_attack(cli.seed, *q, rho)?;
                    let ok = report.accuracy_at(0.0).map(|a| a == 1.0).unwrap_or(true);
                    (report.to_csv(), ok)
                }
                AttackKind::Replay => {
                    let report = attack::replay_attack(cli.seed, *q)?;
                    let ok = report.passes_bound == 0;
                    (report.to_csv(), ok)
                }
            };
            emit(&csv, out.as_ref())?;
            Ok(if ok { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Bench { iterations, out } => {
            let report = crypto::bench_verification(*iterations)?;
            emit(&report.to_csv(), out.as_ref())?;
            let mac = report.row("HMAC_SHA512").map(|r| r.ratio).unwrap_or(f64::NAN);
            let sig = report.row("ED25519").map(|r| r.ratio).unwrap_or(f64::NAN);
            if !(1.0..=3.0).contains(&mac) {
                eprintln!("warning: MAC/hash ratio {mac:.3} outside [1.0, 3.0] band");
            }
            if sig <= mac {
                eprintln!("error: signature ratio {sig:.3} not greater than MAC ratio {mac:.3}");
                return Ok(EXIT_NEGATIVE);
            }
            Ok(EXIT_OK)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match &e {
                CliError::Config(_) => EXIT_CONFIG,
                CliError::Network(_) => branchwm_cli::EXIT_NETWORK,
            })
        }
    }
}
