//! Acceptance gate: one test per acceptance criterion, each printing a
//! single PASS/FAIL line. Any FAIL fails the suite.
//!
//! Criteria:
//! 1. Correctness triad over 500 corpus prompts, < 60 s.
//! 2. Losslessness: 10,000 non-trigger prompts, both modes, byte-identical
//!    to the bare backend with zero Forensic activations.
//! 3. Soundness game: 10^4 observed triggers, 10^6 tail-transplant
//!    forgeries, zero accepted.
//! 4. Concealed round trip: 200 prompts, 512-bit tags, exact sigma.
//! 5. Multi-bit evidence: clean accuracy 1.0; erasure rho=0.1 within 0.02
//!    of the pinned baseline.
//! 6. Benchmark: signature/hash ratio > MAC/hash ratio (hard), MAC/hash in
//!    [1.0, 3.0] (warn-only).
//! 7. Image branch: 100/100 round trips, 100/100 bit-flip rejections, 0
//!    false detections in 10^4 random images.
//! 8. Replay resistance with key binding 100/100; one-time registry admits
//!    exactly one Forensic under 100-way duplicate concurrency.

use std::time::Instant;

use branchwm_cli::{attack, corpus, triad};
use branchwm_core::codec::{self, Vocab};
use branchwm_core::concealed::{self, ConcealParams, CopyrightMessage};
use branchwm_core::crypto::{self, SecretKey};
use branchwm_core::image::{self, GrayImage};
use branchwm_core::lm::ToyLm;
use branchwm_core::simple::SimpleScheme;
use branchwm_gateway::config::Mode;
use branchwm_gateway::{deploy, deploy_bare};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::task::JoinSet;

const ACCEPT_SEED: u64 = 777;

/// Pinned regression baseline: mean extraction bit accuracy over 50 trials
/// at erasure rate rho = 0.1 (|c| = 32, j = 4, delta = 11, 256 tokens,
/// seed 777). Plurality voting with ~16 votes per chunk absorbs 10%
/// substitution completely at this scale.
const ERASURE_RHO_01_BASELINE: f64 = 1.0;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Self {
        Self { failures: Vec::new() }
    }

    fn record(&mut self, number: u32, name: &str, result: Result<String, String>) {
        match result {
            Ok(detail) => println!("criterion {number} ({name}): PASS — {detail}"),
            Err(detail) => {
                println!("criterion {number} ({name}): FAIL — {detail}");
                self.failures.push(format!("{number} ({name}): {detail}"));
            }
        }
    }

    fn finish(self) {
        assert!(
            self.failures.is_empty(),
            "acceptance failures:\n{}",
            self.failures.join("\n")
        );
    }
}

async fn criterion_1_triad() -> Result<String, String> {
    let start = Instant::now();
    let setup = triad::setup(ACCEPT_SEED, Mode::Simple, 512).map_err(|e| e.to_string())?;
    let report = triad::run_triad(&setup, 500).await.map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !report.all_pass() {
        return Err(format!(
            "1A {}/500, 1B invalid {}/500, 1C invalid {}/500",
            report.pass_1a, report.invalid_1b, report.invalid_1c
        ));
    }
    if elapsed.as_secs() >= 60 {
        return Err(format!("triad took {elapsed:.1?}, budget is 60 s"));
    }
    Ok(format!("500/500 on all three equations in {elapsed:.1?}"))
}

async fn criterion_2_losslessness() -> Result<String, String> {
    let vocab = corpus::vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPT_SEED ^ 0x1055);
    let prompts: Vec<String> = (0..10_000)
        .map(|_| {
            let len = rng.random_range(1..12);
            let ids: Vec<u32> = (0..len)
                .map(|_| rng.random_range(0..vocab.size() as u32))
                .collect();
            codec::tok_decode(&ids, &vocab).expect("in-vocabulary ids")
        })
        .collect();

    for (mode, tag_bits) in [(Mode::Simple, 512), (Mode::Concealed, 64)] {
        let setup = triad::setup(ACCEPT_SEED, mode, tag_bits).map_err(|e| e.to_string())?;
        let gateway = deploy(&setup.config).await.map_err(|e| e.to_string())?;
        let bare = deploy_bare(&setup.config).await.map_err(|e| e.to_string())?;
        let client = reqwest::Client::new();
        for chunk in prompts.chunks(250) {
            let mut set = JoinSet::new();
            for prompt in chunk {
                let client = client.clone();
                let gw = gateway.base_url();
                let bb = bare.base_url();
                let prompt = prompt.clone();
                set.spawn(async move {
                    let body = serde_json::json!({ "prompt": prompt, "max_tokens": 4 });
                    let a = client
                        .post(format!("{gw}/v1/generate"))
                        .json(&body)
                        .send()
                        .await
                        .map_err(|e| e.to_string())?
                        .bytes()
                        .await
                        .map_err(|e| e.to_string())?;
                    let b = client
                        .post(format!("{bb}/v1/generate"))
                        .json(&body)
                        .send()
                        .await
                        .map_err(|e| e.to_string())?
                        .bytes()
                        .await
                        .map_err(|e| e.to_string())?;
                    if a != b {
                        return Err(format!("divergent response for {prompt:?}"));
                    }
                    let json: serde_json::Value =
                        serde_json::from_slice(&a).map_err(|e| e.to_string())?;
                    if json["state"] != "service" {
                        return Err(format!("forensic activation on {prompt:?}"));
                    }
                    Ok(())
                });
            }
            while let Some(joined) = set.join_next().await {
                joined.map_err(|e| e.to_string())??;
            }
        }
        gateway.shutdown().await;
        bare.shutdown().await;
    }
    Ok("10,000 prompts byte-identical in both modes, 0 forensic activations".to_owned())
}

fn criterion_3_soundness() -> Result<String, String> {
    let vocab = Vocab::toy(256);
    let key = SecretKey::from_bytes(vec![0x55; 32]).map_err(|e| e.to_string())?;
    let scheme = SimpleScheme::new(key, vocab.clone(), 512).map_err(|e| e.to_string())?;
    let d = scheme.digit_count();
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPT_SEED ^ 0x50);

    // The adversary observes 10^4 triggers over 3-token prompts.
    let observed_tails: Vec<Vec<u32>> = (0..10_000)
        .map(|_| {
            let ids: Vec<u32> = (0..3).map(|_| rng.random_range(0..256)).collect();
            let prompt = codec::tok_decode(&ids, &vocab).expect("ids in vocab");
            let trigger = scheme.trigger_gen(&prompt).expect("trigger gen");
            let trigger_ids = codec::tok_encode(&trigger, &vocab).expect("round trip");
            trigger_ids[trigger_ids.len() - d..].to_vec()
        })
        .collect();

    // 10^6 transplant attempts onto fresh 5-token prompts (never equal to
    // any observed 3-token prompt).
    let mut accepted = 0u64;
    for attempt in 0..1_000_000usize {
        let tail = &observed_tails[attempt % observed_tails.len()];
        let mut forged: Vec<u32> = (0..5).map(|_| rng.random_range(0..256)).collect();
        forged.extend_from_slice(tail);
        if scheme.detect_ids(&forged).is_trigger {
            accepted += 1;
        }
    }
    if accepted > 0 {
        return Err(format!("{accepted} forgeries accepted out of 1,000,000"));
    }
    Ok("0 accepted forgeries across 1,000,000 transplant attempts".to_owned())
}

fn criterion_4_concealed_round_trip() -> Result<String, String> {
    let vocab = Vocab::toy(256);
    let lm = ToyLm::new(1234, vocab.clone());
    let key = SecretKey::from_bytes(vec![0x66; 32]).map_err(|e| e.to_string())?;
    let params = ConcealParams {
        ek_in: SecretKey::from_bytes(vec![0x77; 32]).map_err(|e| e.to_string())?,
        ek_out: SecretKey::from_bytes(vec![0x88; 32]).map_err(|e| e.to_string())?,
        delta: 11.0,
        bits_per_position: 4,
        message: CopyrightMessage::from_bit_str(triad::DEFAULT_MESSAGE)
            .map_err(|e| e.to_string())?,
        bind_evidence_key: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPT_SEED ^ 0xc0);
    for i in 0..200 {
        let len = rng.random_range(1..8);
        let ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..256)).collect();
        let prompt = codec::tok_decode(&ids, &vocab).expect("ids in vocab");
        let trigger = concealed::concealed_trigger_gen(&prompt, &key, &params, &lm, 512)
            .map_err(|e| e.to_string())?;
        let detection =
            concealed::concealed_detect(&trigger.full_ids(), &key, &params.ek_in, &vocab, 512);
        if !detection.is_trigger {
            return Err(format!("trigger {i} not detected"));
        }
        let expected = crypto::mac_truncated(&key, prompt.as_bytes(), 512)
            .map_err(|e| e.to_string())?;
        if detection.extracted_tag.as_ref() != Some(&expected) {
            return Err(format!("trigger {i}: recovered sigma differs"));
        }
    }
    Ok("200/200 detected with exact 512-bit sigma recovery".to_owned())
}

fn criterion_5_multibit_evidence() -> Result<String, String> {
    let report = attack::erasure_attack(ACCEPT_SEED, 50, &[0.0, 0.1]).map_err(|e| e.to_string())?;
    let clean = report.accuracy_at(0.0).expect("rho 0 requested");
    if clean != 1.0 {
        return Err(format!("clean extraction accuracy {clean}, expected exactly 1.0"));
    }
    let eroded = report.accuracy_at(0.1).expect("rho 0.1 requested");
    let drift = (eroded - ERASURE_RHO_01_BASELINE).abs();
    if drift > 0.02 {
        return Err(format!(
            "rho=0.1 accuracy {eroded:.4} drifted {drift:.4} from pinned {ERASURE_RHO_01_BASELINE}"
        ));
    }
    Ok(format!(
        "clean accuracy 1.0; rho=0.1 accuracy {eroded:.4} within 0.02 of pinned {ERASURE_RHO_01_BASELINE}"
    ))
}

fn criterion_6_benchmark() -> Result<String, String> {
    let report = crypto::bench_verification(3000).map_err(|e| e.to_string())?;
    let mac = report.row("HMAC_SHA512").expect("row present").ratio;
    let sig = report.row("ED25519").expect("row present").ratio;
    if sig <= mac {
        return Err(format!(
            "signature/hash ratio {sig:.3} not greater than MAC/hash ratio {mac:.3}"
        ));
    }
    let band_note = if (1.0..=3.0).contains(&mac) {
        format!("MAC/hash {mac:.3} in [1.0, 3.0]")
    } else {
        // Warn-only by contract: the band is hardware-dependent.
        println!("warning: MAC/hash ratio {mac:.3} outside [1.0, 3.0] band");
        format!("MAC/hash {mac:.3} outside band (warn-only)")
    };
    Ok(format!("{band_note}; signature/hash {sig:.3} > MAC/hash"))
}

fn criterion_7_image_branch() -> Result<String, String> {
    let key = SecretKey::from_bytes(vec![0x99; 32]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPT_SEED ^ 0x1396);
    let random_image = |rng: &mut ChaCha8Rng, w: u32, h: u32| {
        let pixels: Vec<u8> = (0..w as usize * h as usize).map(|_| rng.random()).collect();
        GrayImage::new(w, h, pixels).expect("consistent dimensions")
    };
    for i in 0..100 {
        let img = random_image(&mut rng, 64, 64);
        let trigger = image::img_trigger_gen(&img, &key, 512).map_err(|e| e.to_string())?;
        if !image::img_detect(&trigger, &key, 512) {
            return Err(format!("round trip {i} failed detection"));
        }
        let mut flipped = trigger.clone();
        let pixel = rng.random_range(0..64 * 64);
        let bit = rng.random_range(1..8);
        let mut pixels = flipped.pixels().to_vec();
        pixels[pixel] ^= 1 << bit;
        flipped = GrayImage::new(64, 64, pixels).expect("same dimensions");
        if image::img_detect(&flipped, &key, 512) {
            return Err(format!("bit flip {i} still detected"));
        }
    }
    for i in 0..10_000 {
        let img = random_image(&mut rng, 24, 24);
        if image::img_detect(&img, &key, 512) {
            return Err(format!("false detection on random image {i}"));
        }
    }
    Ok("100/100 round trips, 100/100 flip rejections, 0/10,000 false detections".to_owned())
}

async fn criterion_8_replay_and_registry() -> Result<String, String> {
    // Key binding defeats 100/100 evidence transplants.
    let report = attack::replay_attack(ACCEPT_SEED, 100).map_err(|e| e.to_string())?;
    if report.passes_bound != 0 {
        return Err(format!(
            "{}/100 replayed evidences passed with bind_evidence_key on",
            report.passes_bound
        ));
    }

    // Registry: 100 concurrent duplicates admit exactly one Forensic.
    let mut setup = triad::setup(ACCEPT_SEED, Mode::Simple, 512).map_err(|e| e.to_string())?;
    setup.config.one_time_registry = true;
    let resolved = setup.config.resolve().map_err(|e| e.to_string())?;
    let scheme = SimpleScheme::new(resolved.mac_key, resolved.vocab, 512)
        .map_err(|e| e.to_string())?;
    let trigger = scheme
        .trigger_gen(corpus::prompts()[0])
        .map_err(|e| e.to_string())?;
    let gateway = deploy(&setup.config).await.map_err(|e| e.to_string())?;
    let client = reqwest::Client::new();
    let mut set = JoinSet::new();
    for _ in 0..100 {
        let client = client.clone();
        let base = gateway.base_url();
        let trigger = trigger.clone();
        set.spawn(async move {
            let json: serde_json::Value = client
                .post(format!("{base}/v1/generate"))
                .json(&serde_json::json!({ "prompt": trigger, "max_tokens": 8 }))
                .send()
                .await
                .map_err(|e| e.to_string())?
                .json()
                .await
                .map_err(|e| e.to_string())?;
            Ok::<bool, String>(json["state"] == "forensic")
        });
    }
    let mut forensic = 0;
    while let Some(joined) = set.join_next().await {
        if joined.map_err(|e| e.to_string())?? {
            forensic += 1;
        }
    }
    gateway.shutdown().await;
    if forensic != 1 {
        return Err(format!(
            "{forensic} forensic responses under 100-way duplicate race, expected exactly 1"
        ));
    }
    Ok("0/100 bound replays accepted; registry admitted exactly 1 forensic of 100 racers"
        .to_owned())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn acceptance() {
    let mut gate = Gate::new();
    gate.record(1, "correctness triad", criterion_1_triad().await);
    gate.record(2, "performance losslessness", criterion_2_losslessness().await);
    gate.record(3, "soundness game", criterion_3_soundness());
    gate.record(4, "concealed round trip", criterion_4_concealed_round_trip());
    gate.record(5, "multi-bit evidence", criterion_5_multibit_evidence());
    gate.record(6, "benchmark band", criterion_6_benchmark());
    gate.record(7, "image branch", criterion_7_image_branch());
    gate.record(8, "replay resistance", criterion_8_replay_and_registry().await);
    gate.finish();
}
