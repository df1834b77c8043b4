//! Generation backends: the in-process deterministic toy model or a remote
//! endpoint speaking the same wire format.

use branchwm_core::codec::{self, CodecError, Vocab};
use branchwm_core::lm::ToyLm;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("prompt not tokenizable: {0}")]
    Untokenizable(#[from] CodecError),
    #[error("upstream backend error: {0}")]
    Upstream(String),
}

/// A backend generation: continuation text and its token ids.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    pub tokens: Vec<u32>,
}

pub enum Backend {
    Toy(ToyLm),
    Remote {
        url: String,
        client: reqwest::Client,
    },
}

impl Backend {
    pub fn toy(model_seed: u64, vocab: Vocab) -> Self {
        Self::Toy(ToyLm::new(model_seed, vocab))
    }

    pub fn remote(url: String) -> Self {
        Self::Remote {
            url,
            client: reqwest::Client::new(),
        }
    }

    pub fn toy_lm(&self) -> Option<&ToyLm> {
        match self {
            Self::Toy(lm) => Some(lm),
            Self::Remote { .. } => None,
        }
    }

    /// Continue `prompt` by exactly `max_tokens` tokens.
    pub async fn generate(
        &self,
        prompt: &str,
        max_tokens: usize,
    ) -> Result<Generation, BackendError> {
        match self {
            Self::Toy(lm) => {
                let prompt_ids = codec::tok_encode(prompt, lm.vocab())?;
                let tokens = lm.generate_greedy(&prompt_ids, max_tokens);
                let text = codec::tok_decode(&tokens, lm.vocab())
                    .expect("generated ids are in-vocabulary");
                Ok(Generation { text, tokens })
            }
            Self::Remote { url, client } => {
                let body = serde_json::json!({ "prompt": prompt, "max_tokens": max_tokens });
                let response = client
                    .post(format!("{url}/v1/generate"))
                    .json(&body)
                    .send()
                    .await
                    .map_err(|e| BackendError::Upstream(e.to_string()))?;
                if !response.status().is_success() {
                    return Err(BackendError::Upstream(format!(
                        "status {}",
                        response.status()
                    )));
                }
                response
                    .json::<Generation>()
                    .await
                    .map_err(|e| BackendError::Upstream(e.to_string()))
            }
        }
    }
}
