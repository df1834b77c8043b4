//! Owner-side operations: trigger artifact generation and endpoint probing
//! with evidence verification.

use std::time::Instant;

use branchwm_core::codec::{self, Vocab};
use branchwm_core::concealed::{self, ConcealParams};
use branchwm_core::crypto::SecretKey;
use branchwm_core::lm::ToyLm;
use branchwm_core::simple::SimpleScheme;
use branchwm_gateway::config::{BackendCfg, GatewayConfig, Mode, ResolvedConfig};

use crate::CliError;

/// Evidence-acceptance threshold for concealed verification.
pub const DEFAULT_TAU: f64 = 0.9;

/// Maximum age (in minutes) of timestamped evidence at verification.
pub const RECENCY_WINDOW_MINUTES: u32 = 10;

/// Build the trigger artifact text for `prompt` under `config`.
///
/// Simple mode writes the trigger surface string (one line); concealed mode
/// writes the token-id interchange format, since concealed triggers are
/// meaningful only as id sequences under a known vocabulary.
pub fn make_trigger_artifact(config: &GatewayConfig, prompt: &str) -> Result<String, CliError> {
    let resolved = config.resolve()?;
    match config.mode {
        Mode::Simple => {
            let scheme =
                SimpleScheme::new(resolved.mac_key, resolved.vocab, config.tag_bits)?;
            Ok(format!("{}\n", scheme.trigger_gen(prompt)?))
        }
        Mode::Concealed => {
            let params = resolved.conceal.expect("resolve fills concealed params");
            let lm = toy_lm(config, &resolved.vocab)?;
            let trigger = concealed::concealed_trigger_gen(
                prompt,
                &resolved.mac_key,
                &params,
                &lm,
                config.tag_bits,
            )?;
            Ok(concealed::write_trigger_records(
                resolved.vocab.size(),
                config.tag_bits,
                &[trigger.full_ids()],
            ))
        }
    }
}

fn toy_lm(config: &GatewayConfig, vocab: &Vocab) -> Result<ToyLm, CliError> {
    match &config.backend {
        BackendCfg::Toy { model_seed } => Ok(ToyLm::new(*model_seed, vocab.clone())),
        BackendCfg::Remote { .. } => Err(CliError::Config(
            "this operation needs the in-process toy backend".to_owned(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    ValidEvidence,
    Invalid,
    Error(String),
}

impl Verdict {
    pub fn as_str(&self) -> &str {
        match self {
            Self::ValidEvidence => "valid-evidence",
            Self::Invalid => "invalid",
            Self::Error(_) => "error",
        }
    }
}

#[derive(Debug)]
pub struct ProbeOutcome {
    pub endpoint: String,
    pub verdict: Verdict,
    pub latency_ms: f64,
    pub response_text: Option<String>,
}

impl ProbeOutcome {
    pub fn to_csv(&self) -> String {
        format!(
            "endpoint,verdict,latency_ms\n{},{},{:.3}\n",
            self.endpoint,
            self.verdict.as_str(),
            self.latency_ms
        )
    }
}

async fn post_generate(
    client: &reqwest::Client,
    endpoint: &str,
    prompt: &str,
    max_tokens: usize,
) -> Result<serde_json::Value, CliError> {
    let response = client
        .post(format!("{endpoint}/v1/generate"))
        .json(&serde_json::json!({ "prompt": prompt, "max_tokens": max_tokens }))
        .send()
        .await
        .map_err(|e| CliError::Network(e.to_string()))?;
    if !response.status().is_success() {
        return Err(CliError::Network(format!("status {}", response.status())));
    }
    response
        .json()
        .await
        .map_err(|e| CliError::Network(e.to_string()))
}

/// Post the trigger to a suspect endpoint and verify the evidence.
pub async fn probe(
    config: &GatewayConfig,
    endpoint: &str,
    artifact_text: &str,
    max_tokens: usize,
    tau: f64,
) -> Result<ProbeOutcome, CliError> {
    let resolved = config.resolve()?;
    let client = reqwest::Client::new();
    let start = Instant::now();
    let result = probe_inner(config, &resolved, &client, endpoint, artifact_text, max_tokens, tau)
        .await;
    let latency_ms = start.elapsed().as_secs_f64() * 1000.0;
    match result {
        Ok((verdict, text)) => Ok(ProbeOutcome {
            endpoint: endpoint.to_owned(),
            verdict,
            latency_ms,
            response_text: Some(text),
        }),
        Err(CliError::Network(cause)) => Ok(ProbeOutcome {
            endpoint: endpoint.to_owned(),
            verdict: Verdict::Error(cause),
            latency_ms,
            response_text: None,
        }),
        Err(other) => Err(other),
    }
}

async fn probe_inner(
    config: &GatewayConfig,
    resolved: &ResolvedConfig,
    client: &reqwest::Client,
    endpoint: &str,
    artifact_text: &str,
    max_tokens: usize,
    tau: f64,
) -> Result<(Verdict, String), CliError> {
    match config.mode {
        Mode::Simple => {
            let trigger = artifact_text
                .lines()
                .next()
                .ok_or_else(|| CliError::Config("empty trigger artifact".to_owned()))?;
            let scheme = SimpleScheme::new(
                resolved.mac_key.clone(),
                resolved.vocab.clone(),
                config.tag_bits,
            )?
            .with_proclamation(config.proclamation.clone());
            let json = post_generate(client, endpoint, trigger, max_tokens).await?;
            let text = json["text"].as_str().unwrap_or_default().to_owned();
            let verdict = if scheme.verify(trigger, &text) {
                Verdict::ValidEvidence
            } else {
                Verdict::Invalid
            };
            Ok((verdict, text))
        }
        Mode::Concealed => {
            let params = resolved.conceal.clone().expect("resolve fills params");
            let (vocab_size, tag_bits, records) =
                concealed::read_trigger_records(artifact_text)?;
            if vocab_size != resolved.vocab.size() || tag_bits != config.tag_bits {
                return Err(CliError::Config(format!(
                    "artifact was built for v={vocab_size}, tag_bits={tag_bits}"
                )));
            }
            let ids = records
                .first()
                .ok_or_else(|| CliError::Config("artifact has no trigger records".to_owned()))?;
            let detection = concealed::concealed_detect(
                ids,
                &resolved.mac_key,
                &params.ek_in,
                &resolved.vocab,
                tag_bits,
            );
            if !detection.is_trigger {
                return Err(CliError::Config(
                    "artifact does not verify as a trigger under these keys".to_owned(),
                ));
            }
            let sigma = detection.extracted_tag.expect("positive detection");
            let prompt = codec::tok_decode(ids, &resolved.vocab)?;
            let json = post_generate(client, endpoint, &prompt, max_tokens).await?;
            let text = json["text"].as_str().unwrap_or_default().to_owned();
            let tokens: Vec<u32> = json["tokens"]
                .as_array()
                .map(|a| {
                    a.iter()
                        .filter_map(|v| v.as_u64().map(|x| x as u32))
                        .collect()
                })
                .unwrap_or_default();
            let verdict = if config.timestamp_evidence {
                verify_timestamped_evidence(&tokens, *ids.last().unwrap(), &sigma, &params, resolved, tau)?
            } else {
                verify_concealed_evidence(&tokens, *ids.last().unwrap(), &sigma, &params, resolved, tau)?
            };
            Ok((verdict, text))
        }
    }
}

fn verify_concealed_evidence(
    tokens: &[u32],
    trigger_last: u32,
    sigma: &branchwm_core::crypto::Tag,
    params: &ConcealParams,
    resolved: &ResolvedConfig,
    tau: f64,
) -> Result<Verdict, CliError> {
    if tokens.is_empty() {
        return Ok(Verdict::Invalid);
    }
    let report = concealed::extract_copyright(
        tokens,
        trigger_last,
        sigma,
        params,
        resolved.vocab.size(),
        Some(&params.message),
    )?;
    if concealed::verify_concealed(&params.message, &report, tau)? {
        Ok(Verdict::ValidEvidence)
    } else {
        Ok(Verdict::Invalid)
    }
}

/// Timestamped evidence embeds `c || 32-bit unix-minute`; it is valid iff
/// the message part matches at threshold `tau` and the stamp is within
/// [`RECENCY_WINDOW_MINUTES`] of now.
fn verify_timestamped_evidence(
    tokens: &[u32],
    trigger_last: u32,
    sigma: &branchwm_core::crypto::Tag,
    params: &ConcealParams,
    resolved: &ResolvedConfig,
    tau: f64,
) -> Result<Verdict, CliError> {
    if tokens.is_empty() {
        return Ok(Verdict::Invalid);
    }
    // Extract at the widened length; the stamp value is unknown a priori.
    let mut wide = params.clone();
    wide.message = params.message.with_timestamp(0);
    let report = concealed::extract_copyright(
        tokens,
        trigger_last,
        sigma,
        &wide,
        resolved.vocab.size(),
        None,
    )?;
    let Some((head, minute)) = report.recovered_bits.split_timestamp() else {
        return Ok(Verdict::Invalid);
    };
    let now = (std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .expect("clock before epoch")
        .as_secs()
        / 60) as u32;
    let fresh = now.abs_diff(minute) <= RECENCY_WINDOW_MINUTES;
    if fresh && concealed::bit_accuracy(&head, &params.message) >= tau {
        Ok(Verdict::ValidEvidence)
    } else {
        Ok(Verdict::Invalid)
    }
}

/// Deterministic key material for self-contained experiment runs: three
/// independent keys derived from `seed`.
pub fn derived_keys(seed: u64) -> (SecretKey, SecretKey, SecretKey) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut gen = || {
        let mut bytes = vec![0u8; 32];
        rng.fill(&mut bytes[..]);
        SecretKey::from_bytes(bytes).expect("256-bit key allowed")
    };
    (gen(), gen(), gen())
}
