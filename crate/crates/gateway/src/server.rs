//! The Deploy algorithm: an axum service with the Service/Forensic state
//! machine per request.
//!
//! Wire format: `POST /v1/generate` with `{"prompt": string, "max_tokens":
//! integer}` returns `{"text": string, "tokens": [integer]}`. The response
//! schema is identical in both states; debug builds only add a `state`
//! field so tests can count Forensic activations.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use branchwm_core::codec::{self, Vocab};
use branchwm_core::concealed::{self, ConcealParams, EvidenceContext};
use branchwm_core::crypto::SecretKey;
use branchwm_core::lm::{sample_constrained, softmax, SamplePolicy};
use branchwm_core::simple::SimpleScheme;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::backend::{Backend, BackendError};
use crate::config::{BackendCfg, ConfigError, GatewayConfig, Mode};
use crate::registry::{Freshness, Registry};

#[derive(Debug, Error)]
pub enum DeployError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Scheme(#[from] branchwm_core::simple::SchemeError),
}

#[derive(Debug, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub max_tokens: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
    pub tokens: Vec<u32>,
    /// Debug builds only: which state answered. Production responses never
    /// reveal state.
    #[cfg(debug_assertions)]
    pub state: String,
}

impl GenerateResponse {
    fn new(text: String, tokens: Vec<u32>, forensic: bool) -> Self {
        #[cfg(not(debug_assertions))]
        let _ = forensic;
        Self {
            text,
            tokens,
            #[cfg(debug_assertions)]
            state: if forensic { "forensic" } else { "service" }.to_owned(),
        }
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(serde_json::json!({ "error": self.message }));
        (self.status, body).into_response()
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Untokenizable(_) => ApiError {
                status: StatusCode::BAD_REQUEST,
                message: e.to_string(),
            },
            BackendError::Upstream(_) => ApiError {
                status: StatusCode::BAD_GATEWAY,
                message: e.to_string(),
            },
        }
    }
}

enum Watermark {
    Simple(SimpleScheme),
    Concealed {
        mac_key: SecretKey,
        params: ConcealParams,
        tag_bits: usize,
    },
}

struct AppState {
    watermark: Option<Watermark>,
    backend: Backend,
    vocab: Vocab,
    registry: Option<Registry>,
    max_tokens_cap: usize,
    timestamp_evidence: bool,
}

fn unix_minute() -> u32 {
    (SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock before epoch")
        .as_secs()
        / 60) as u32
}

async fn handle_generate(
    State(state): State<Arc<AppState>>,
    Json(request): Json<GenerateRequest>,
) -> Result<Json<GenerateResponse>, ApiError> {
    if request.max_tokens < 1 || request.max_tokens > state.max_tokens_cap {
        return Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            message: format!(
                "max_tokens must be in 1..={}, got {}",
                state.max_tokens_cap, request.max_tokens
            ),
        });
    }

    // Detect is total: any malformed prompt falls through to the Service
    // path, where the backend applies its own validation.
    if let Some(watermark) = &state.watermark {
        if let Some(response) = try_forensic(&state, watermark, &request)? {
            return Ok(Json(response));
        }
    }

    let generation = state
        .backend
        .generate(&request.prompt, request.max_tokens)
        .await?;
    Ok(Json(GenerateResponse::new(
        generation.text,
        generation.tokens,
        false,
    )))
}

/// Run Detect and, on a fresh trigger, the Prove path. `Ok(None)` means
/// Service state.
fn try_forensic(
    state: &AppState,
    watermark: &Watermark,
    request: &GenerateRequest,
) -> Result<Option<GenerateResponse>, ApiError> {
    let (detection, prompt_ids) = match watermark {
        Watermark::Simple(scheme) => (scheme.detect(&request.prompt), Vec::new()),
        Watermark::Concealed {
            mac_key, params, tag_bits, ..
        } => {
            let Ok(ids) = codec::tok_encode(&request.prompt, &state.vocab) else {
                return Ok(None);
            };
            (
                concealed::concealed_detect(&ids, mac_key, &params.ek_in, &state.vocab, *tag_bits),
                ids,
            )
        }
    };
    if !detection.is_trigger {
        return Ok(None);
    }
    let sigma = detection
        .extracted_tag
        .expect("positive detection carries a tag");
    if let Some(registry) = &state.registry {
        if registry.check_and_insert(&sigma) == Freshness::Replayed {
            // Replayed triggers are served, not rejected: rejection would
            // itself leak watermark presence.
            return Ok(None);
        }
    }
    let response = match watermark {
        Watermark::Simple(scheme) => {
            GenerateResponse::new(scheme.prove(true, ""), Vec::new(), true)
        }
        Watermark::Concealed { params, .. } => {
            let lm = state
                .backend
                .toy_lm()
                .expect("concealed mode is validated to use the toy backend");
            let mut params = params.clone();
            if state.timestamp_evidence {
                params.message = params.message.with_timestamp(unix_minute());
            }
            let ctx = EvidenceContext::new(&sigma, &params);
            let all: Vec<u32> = (0..state.vocab.size() as u32).collect();
            let mut history = prompt_ids;
            let mut tokens = Vec::with_capacity(request.max_tokens);
            for _ in 0..request.max_tokens {
                let mut logits = lm.logits(&history);
                concealed::apply_bias(&mut logits, &ctx, *history.last().unwrap(), &params)
                    .expect("params validated at startup");
                let probs = softmax(&logits);
                let token =
                    sample_constrained(&probs, &all, SamplePolicy::Greedy).expect("vocab nonempty");
                history.push(token);
                tokens.push(token);
            }
            let text =
                codec::tok_decode(&tokens, &state.vocab).expect("generated ids in vocabulary");
            GenerateResponse::new(text, tokens, true)
        }
    };
    Ok(Some(response))
}

async fn handle_healthz() -> &'static str {
    "ok"
}

/// Handle to a running server; dropping it aborts, [`ServerHandle::shutdown`]
/// stops it gracefully.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }

    /// Run until the task ends (e.g. on ctrl-c handled elsewhere).
    pub async fn join(mut self) {
        let _ = (&mut self.task).await;
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn serve(router: Router, listen: &str) -> Result<ServerHandle, DeployError> {
    let listener = TcpListener::bind(listen)
        .await
        .map_err(|source| DeployError::Bind {
            addr: listen.to_owned(),
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| DeployError::Bind {
        addr: listen.to_owned(),
        source,
    })?;
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(async move {
        let server = axum::serve(listener, router).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        if let Err(e) = server.await {
            eprintln!("server error: {e}");
        }
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        task,
    })
}

fn build_backend(config: &GatewayConfig, vocab: &Vocab) -> Backend {
    match &config.backend {
        BackendCfg::Toy { model_seed } => Backend::toy(*model_seed, vocab.clone()),
        BackendCfg::Remote { url } => Backend::remote(url.clone()),
    }
}

fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/generate", post(handle_generate))
        .route("/healthz", get(handle_healthz))
        .with_state(state)
}

/// Deploy the watermarked gateway.
pub async fn deploy(config: &GatewayConfig) -> Result<ServerHandle, DeployError> {
    let resolved = config.resolve()?;
    let watermark = match config.mode {
        Mode::Simple => Watermark::Simple(
            SimpleScheme::new(resolved.mac_key, resolved.vocab.clone(), config.tag_bits)?
                .with_proclamation(config.proclamation.clone()),
        ),
        Mode::Concealed => Watermark::Concealed {
            mac_key: resolved.mac_key,
            params: resolved.conceal.expect("resolve() fills concealed params"),
            tag_bits: config.tag_bits,
        },
    };
    let backend = build_backend(config, &resolved.vocab);
    let state = Arc::new(AppState {
        watermark: Some(watermark),
        backend,
        vocab: resolved.vocab,
        registry: config.one_time_registry.then(Registry::new),
        max_tokens_cap: config.max_tokens_cap,
        timestamp_evidence: config.timestamp_evidence,
    });
    serve(router(state), &config.listen).await
}

/// Deploy the bare backend with no watermark module: the reference for
/// losslessness diffs and the Eq. (1B) opponent.
pub async fn deploy_bare(config: &GatewayConfig) -> Result<ServerHandle, DeployError> {
    let vocab = match &config.vocab {
        crate::config::VocabCfg::Toy { size } => Vocab::toy(*size),
        crate::config::VocabCfg::File { path } => {
            Vocab::load(path).map_err(ConfigError::from)?
        }
    };
    let backend = build_backend(config, &vocab);
    let state = Arc::new(AppState {
        watermark: None,
        backend,
        vocab,
        registry: None,
        max_tokens_cap: config.max_tokens_cap,
        timestamp_evidence: false,
    });
    serve(router(state), &config.listen).await
}
