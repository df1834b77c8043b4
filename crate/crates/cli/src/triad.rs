//! The correctness triad: Eq. (1A) valid evidence from the deployed
//! gateway, Eq. (1B) no evidence from the bare backend, Eq. (1c) no
//! evidence with an independent key.

use std::sync::Arc;

use branchwm_core::codec;
use branchwm_core::concealed::{self, ConcealParams};
use branchwm_core::crypto::SecretKey;
use branchwm_core::lm::ToyLm;
use branchwm_core::simple::SimpleScheme;
use branchwm_gateway::config::{GatewayConfig, Mode, VocabCfg};
use branchwm_gateway::deploy_bare;
use tempfile::TempDir;
use tokio::task::JoinSet;

use crate::ops::DEFAULT_TAU;
use crate::{corpus, ops, CliError};

/// Default copyright message for self-contained runs (|c| = 32).
pub const DEFAULT_MESSAGE: &str = "10110010011011001010110100101101";

/// A self-contained gateway configuration: derived keys in a tempdir, the
/// corpus vocabulary, and the in-process toy backend.
pub struct TriadSetup {
    pub config: GatewayConfig,
    /// Same deployment parameters, independent MAC key (the Eq. (1c)
    /// opponent).
    pub independent_mac: SecretKey,
    _dir: TempDir,
}

/// Build a deployable config from `seed`. `seed` determines all key
/// material, so two setups with one seed answer identically.
pub fn setup(seed: u64, mode: Mode, tag_bits: usize) -> Result<TriadSetup, CliError> {
    let dir = tempfile::tempdir().map_err(|e| CliError::Config(e.to_string()))?;
    let (mac, ek_in, ek_out) = ops::derived_keys(seed);
    let (independent_mac, _, _) = ops::derived_keys(seed.wrapping_add(0x9e3779b97f4a7c15));
    let save = |name: &str, k: &SecretKey| -> Result<std::path::PathBuf, CliError> {
        let path = dir.path().join(name);
        k.save(&path)?;
        Ok(path)
    };
    let vocab_path = dir.path().join("vocab.txt");
    corpus::vocab().save(&vocab_path)?;
    let mut config = GatewayConfig {
        mode,
        mac_key_path: Some(save("mac.hex", &mac)?),
        tag_bits,
        vocab: VocabCfg::File { path: vocab_path },
        ..GatewayConfig::default()
    };
    if mode == Mode::Concealed {
        config.ek_in_path = Some(save("ek_in.hex", &ek_in)?);
        config.ek_out_path = Some(save("ek_out.hex", &ek_out)?);
        config.copyright = Some(DEFAULT_MESSAGE.to_owned());
    }
    Ok(TriadSetup {
        config,
        independent_mac,
        _dir: dir,
    })
}

#[derive(Debug, Clone)]
pub struct TriadReport {
    pub n: usize,
    /// Eq. (1A): valid evidence from the deployed gateway.
    pub pass_1a: usize,
    /// Eq. (1B): verdicts correctly invalid against the bare backend.
    pub invalid_1b: usize,
    /// Eq. (1c): verdicts correctly invalid with the independent key.
    pub invalid_1c: usize,
}

impl TriadReport {
    pub fn all_pass(&self) -> bool {
        self.pass_1a == self.n && self.invalid_1b == self.n && self.invalid_1c == self.n
    }

    pub fn to_csv(&self) -> String {
        format!(
            "eq,expected,passes,total\n1A,valid-evidence,{},{n}\n1B,invalid,{},{n}\n1C,invalid,{},{n}\n",
            self.pass_1a,
            self.invalid_1b,
            self.invalid_1c,
            n = self.n
        )
    }
}

struct Verifier {
    mode: Mode,
    scheme: SimpleScheme,
    independent: SimpleScheme,
    /// Independent MAC key bytes, kept for concealed trigger generation.
    ind_key_bytes: Vec<u8>,
    mac_key: SecretKey,
    conceal: Option<ConcealParams>,
    lm: ToyLm,
    tag_bits: usize,
}

impl Verifier {
    /// Trigger surfaces for one prompt: (own-key, independent-key).
    fn triggers(&self, prompt: &str) -> Result<(String, String), CliError> {
        match self.mode {
            Mode::Simple => Ok((
                self.scheme.trigger_gen(prompt)?,
                self.independent.trigger_gen(prompt)?,
            )),
            Mode::Concealed => {
                let params = self.conceal.as_ref().expect("concealed params");
                let own = concealed::concealed_trigger_gen(
                    prompt,
                    &self.mac_key,
                    params,
                    &self.lm,
                    self.tag_bits,
                )?;
                let ind_key = self.independent_mac();
                let ind = concealed::concealed_trigger_gen(
                    prompt, &ind_key, params, &self.lm, self.tag_bits,
                )?;
                Ok((
                    codec::tok_decode(&own.full_ids(), self.lm.vocab())?,
                    codec::tok_decode(&ind.full_ids(), self.lm.vocab())?,
                ))
            }
        }
    }

    fn independent_mac(&self) -> SecretKey {
        // The independent scheme owns the key; rebuild from its tail.
        SecretKey::from_bytes(self.ind_key_bytes.clone()).expect("valid key bytes")
    }

    /// Verify a response under the owner's key.
    fn verify(&self, trigger: &str, json: &serde_json::Value) -> Result<bool, CliError> {
        let text = json["text"].as_str().unwrap_or_default();
        match self.mode {
            Mode::Simple => Ok(self.scheme.verify(trigger, text)),
            Mode::Concealed => {
                let params = self.conceal.as_ref().expect("concealed params");
                let Ok(ids) = codec::tok_encode(trigger, self.lm.vocab()) else {
                    return Ok(false);
                };
                let detection = concealed::concealed_detect(
                    &ids,
                    &self.mac_key,
                    &params.ek_in,
                    self.lm.vocab(),
                    self.tag_bits,
                );
                let Some(sigma) = detection.extracted_tag.filter(|_| detection.is_trigger) else {
                    return Ok(false);
                };
                let tokens: Vec<u32> = json["tokens"]
                    .as_array()
                    .map(|a| a.iter().filter_map(|v| v.as_u64().map(|x| x as u32)).collect())
                    .unwrap_or_default();
                if tokens.is_empty() {
                    return Ok(false);
                }
                let report = concealed::extract_copyright(
                    &tokens,
                    *ids.last().unwrap(),
                    &sigma,
                    params,
                    self.lm.vocab_size(),
                    Some(&params.message),
                )?;
                Ok(concealed::verify_concealed(&params.message, &report, DEFAULT_TAU)?)
            }
        }
    }
}

// Verifier carries the independent key bytes for concealed trigger
// generation (the SimpleScheme wrapper does not expose its key).
impl Verifier {
    fn new(setup: &TriadSetup) -> Result<Self, CliError> {
        let config = &setup.config;
        let resolved = config.resolve()?;
        let lm = ToyLm::new(
            match config.backend {
                branchwm_gateway::config::BackendCfg::Toy { model_seed } => model_seed,
                _ => return Err(CliError::Config("triad needs the toy backend".to_owned())),
            },
            resolved.vocab.clone(),
        );
        Ok(Self {
            mode: config.mode,
            scheme: SimpleScheme::new(
                resolved.mac_key.clone(),
                resolved.vocab.clone(),
                config.tag_bits,
            )?
            .with_proclamation(config.proclamation.clone()),
            independent: SimpleScheme::new(
                setup.independent_mac.clone(),
                resolved.vocab.clone(),
                config.tag_bits,
            )?
            .with_proclamation(config.proclamation.clone()),
            ind_key_bytes: setup.independent_mac.as_bytes().to_vec(),
            mac_key: resolved.mac_key,
            conceal: resolved.conceal,
            lm,
            tag_bits: config.tag_bits,
        })
    }
}

/// Run the triad over the first `n` corpus prompts (cycling past 500).
pub async fn run_triad(setup: &TriadSetup, n: usize) -> Result<TriadReport, CliError> {
    if n == 0 {
        return Err(CliError::Config("triad needs n >= 1".to_owned()));
    }
    let verifier = Arc::new(Verifier::new(setup)?);
    let max_tokens = match setup.config.mode {
        Mode::Simple => 8,
        Mode::Concealed => 256,
    };
    let gateway = branchwm_gateway::deploy(&setup.config).await?;
    let bare = deploy_bare(&setup.config).await?;
    let client = reqwest::Client::new();
    let prompts = corpus::prompts();

    let mut pass_1a = 0;
    let mut invalid_1b = 0;
    let mut invalid_1c = 0;
    const BATCH: usize = 32;
    let mut index = 0;
    while index < n {
        let mut set = JoinSet::new();
        for i in index..(index + BATCH).min(n) {
            let prompt = prompts[i % prompts.len()].to_owned();
            let verifier = Arc::clone(&verifier);
            let client = client.clone();
            let gw = gateway.base_url();
            let bb = bare.base_url();
            set.spawn(async move {
                let (own, ind) = verifier.triggers(&prompt)?;
                let post = |base: String, trigger: String| {
                    let client = client.clone();
                    async move {
                        let response = client
                            .post(format!("{base}/v1/generate"))
                            .json(&serde_json::json!({
                                "prompt": trigger, "max_tokens": max_tokens
                            }))
                            .send()
                            .await
                            .map_err(|e| CliError::Network(e.to_string()))?;
                        response
                            .json::<serde_json::Value>()
                            .await
                            .map_err(|e| CliError::Network(e.to_string()))
                    }
                };
                let a = verifier.verify(&own, &post(gw.clone(), own.clone()).await?)?;
                let b = verifier.verify(&own, &post(bb, own.clone()).await?)?;
                let c = verifier.verify(&ind, &post(gw, ind.clone()).await?)?;
                Ok::<(bool, bool, bool), CliError>((a, b, c))
            });
        }
        while let Some(joined) = set.join_next().await {
            let (a, b, c) = joined.map_err(|e| CliError::Network(e.to_string()))??;
            pass_1a += a as usize;
            invalid_1b += !b as usize;
            invalid_1c += !c as usize;
        }
        index += BATCH;
    }

    gateway.shutdown().await;
    bare.shutdown().await;
    Ok(TriadReport {
        n,
        pass_1a,
        invalid_1b,
        invalid_1c,
    })
}
