//! Interference-attack simulations: perplexity filtering, evidence
//! erasure, and evidence replay.
//!
//! All reported numbers are regression baselines established by this
//! implementation, not values from any external source.

use branchwm_core::codec::{self, Vocab};
use branchwm_core::concealed::{self, ConcealParams, CopyrightMessage};
use branchwm_core::crypto;
use branchwm_core::lm::{sample_constrained, softmax, SamplePolicy, ToyLm};
use branchwm_core::simple::SimpleScheme;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ops::derived_keys;
use crate::CliError;

const VOCAB_SIZE: usize = 256;
const MODEL_SEED: u64 = 1234;
const TAIL_LEN: usize = 64;
const MESSAGE: &str = "10110010011011001010110100101101";

fn toy() -> ToyLm {
    ToyLm::new(MODEL_SEED, Vocab::toy(VOCAB_SIZE))
}

fn conceal_params(seed: u64, bind: bool) -> ConcealParams {
    let (_, ek_in, ek_out) = derived_keys(seed);
    ConcealParams {
        ek_in,
        ek_out,
        delta: 11.0,
        bits_per_position: 4,
        message: CopyrightMessage::from_bit_str(MESSAGE).expect("valid message"),
        bind_evidence_key: bind,
    }
}

/// Flag rates of a perplexity detector calibrated to a 5% false-positive
/// rate on natural requests.
#[derive(Debug, Clone)]
pub struct FilterReport {
    pub q: usize,
    pub threshold: f64,
    pub natural_rate: f64,
    pub simple_rate: f64,
    pub concealed_rate: f64,
}

impl FilterReport {
    pub fn to_csv(&self) -> String {
        format!(
            "attack,population,q,threshold,flag_rate\n\
             filter,natural,{q},{t:.4},{:.4}\n\
             filter,simple-trigger,{q},{t:.4},{:.4}\n\
             filter,concealed-trigger,{q},{t:.4},{:.4}\n",
            self.natural_rate,
            self.simple_rate,
            self.concealed_rate,
            q = self.q,
            t = self.threshold,
        )
    }
}

/// The adversary scores each request by the perplexity of its last
/// `TAIL_LEN` tokens given the preceding context, then flags everything
/// above the 95th percentile of natural-request scores.
pub fn filter_attack(seed: u64, q: usize) -> Result<FilterReport, CliError> {
    if q == 0 {
        return Err(CliError::Config("filter attack needs q >= 1".to_owned()));
    }
    let lm = toy();
    let (mac_key, _, _) = derived_keys(seed);
    let scheme = SimpleScheme::new(mac_key.clone(), Vocab::toy(VOCAB_SIZE), 512)?;
    let params = conceal_params(seed, false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf117e2);
    let all: Vec<u32> = (0..VOCAB_SIZE as u32).collect();

    let score = |context: &[u32], tail: &[u32]| -> f64 {
        lm.perplexity_with_context(context, tail)
            .expect("nonempty tail")
    };

    let mut natural = Vec::with_capacity(q);
    let mut simple = Vec::with_capacity(q);
    let mut concealed_scores = Vec::with_capacity(q);
    for _ in 0..q {
        let prompt: Vec<u32> = (0..3).map(|_| rng.random_range(0..VOCAB_SIZE as u32)).collect();
        let surface = codec::tok_decode(&prompt, lm.vocab())?;

        // Natural request: the prompt plus a plausible sampled continuation.
        let mut history = prompt.clone();
        let mut continuation = Vec::with_capacity(TAIL_LEN);
        for _ in 0..TAIL_LEN {
            let probs = softmax(&lm.logits(&history));
            let token = sample_constrained(
                &probs,
                &all,
                SamplePolicy::Multinomial { seed: rng.random() },
            )
            .expect("vocab nonempty");
            history.push(token);
            continuation.push(token);
        }
        natural.push(score(&prompt, &continuation));

        // Plain trigger: MAC digits make a near-uniform random tail.
        let trigger_ids = codec::tok_encode(&scheme.trigger_gen(&surface)?, lm.vocab())?;
        let (head, tail) = trigger_ids.split_at(trigger_ids.len() - TAIL_LEN);
        simple.push(score(head, tail));

        // Concealed trigger: greedy within pseudorandom halves.
        let trig = concealed::concealed_trigger_gen(&surface, &mac_key, &params, &lm, TAIL_LEN)?;
        let ids = trig.full_ids();
        let (head, tail) = ids.split_at(ids.len() - TAIL_LEN);
        concealed_scores.push(score(head, tail));
    }

    let mut sorted = natural.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite perplexities"));
    let index = ((q as f64 * 0.95).ceil() as usize).clamp(1, q) - 1;
    let threshold = sorted[index];
    let rate = |scores: &[f64]| scores.iter().filter(|&&s| s > threshold).count() as f64 / q as f64;
    Ok(FilterReport {
        q,
        threshold,
        natural_rate: rate(&natural),
        simple_rate: rate(&simple),
        concealed_rate: rate(&concealed_scores),
    })
}

/// Mean extraction bit accuracy after substituting each evidence token with
/// a uniform random token independently with probability rho.
#[derive(Debug, Clone)]
pub struct ErasureReport {
    pub trials: usize,
    /// `(rho, mean bit accuracy)` per substitution rate.
    pub rows: Vec<(f64, f64)>,
}

impl ErasureReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attack,rho,trials,mean_bit_accuracy\n");
        for (rho, acc) in &self.rows {
            out.push_str(&format!("erasure,{rho},{},{acc:.4}\n", self.trials));
        }
        out
    }

    pub fn accuracy_at(&self, rho: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|(r, _)| (r - rho).abs() < 1e-12)
            .map(|&(_, a)| a)
    }
}

pub fn erasure_attack(seed: u64, trials: usize, rhos: &[f64]) -> Result<ErasureReport, CliError> {
    if trials == 0 || rhos.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(CliError::Config(
            "erasure attack needs trials >= 1 and 0 <= rho <= 1".to_owned(),
        ));
    }
    let lm = toy();
    let (mac_key, _, _) = derived_keys(seed);
    let params = conceal_params(seed, false);
    let trigger =
        concealed::concealed_trigger_gen("tok_1 tok_2", &mac_key, &params, &lm, TAIL_LEN)?;
    let sigma = crypto::mac_truncated(&mac_key, b"tok_1 tok_2", TAIL_LEN)?;
    let clean = forensic_generate(&lm, &trigger.full_ids(), &sigma, &params, 256);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe2a5e);
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let mut total = 0.0;
        for _ in 0..trials {
            let corrupted: Vec<u32> = clean
                .iter()
                .map(|&t| {
                    if rng.random::<f64>() < rho {
                        rng.random_range(0..VOCAB_SIZE as u32)
                    } else {
                        t
                    }
                })
                .collect();
            let report = concealed::extract_copyright(
                &corrupted,
                trigger.last_token(),
                &sigma,
                &params,
                VOCAB_SIZE,
                Some(&params.message),
            )?;
            total += report.bit_accuracy.expect("reference supplied");
        }
        rows.push((rho, total / trials as f64));
    }
    Ok(ErasureReport { trials, rows })
}

/// Verification outcomes when evidence captured for trigger A is replayed
/// as the response to trigger B, with and without evidence-key binding.
#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub trials: usize,
    pub passes_unbound: usize,
    pub passes_bound: usize,
}

impl ReplayReport {
    pub fn to_csv(&self) -> String {
        format!(
            "attack,bind_evidence_key,trials,passes\nreplay,off,{t},{}\nreplay,on,{t},{}\n",
            self.passes_unbound,
            self.passes_bound,
            t = self.trials
        )
    }
}

pub fn replay_attack(seed: u64, trials: usize) -> Result<ReplayReport, CliError> {
    if trials == 0 {
        return Err(CliError::Config("replay attack needs trials >= 1".to_owned()));
    }
    let lm = toy();
    let (mac_key, _, _) = derived_keys(seed);
    let mut passes = [0usize; 2];
    for (slot, bind) in [false, true].into_iter().enumerate() {
        let params = conceal_params(seed, bind);
        for t in 0..trials {
            let prompt_a = format!("tok_{}", 2 * t % VOCAB_SIZE);
            let prompt_b = format!("tok_{} tok_0", (2 * t + 1) % VOCAB_SIZE);
            let trig_a = concealed::concealed_trigger_gen(
                &prompt_a, &mac_key, &params, &lm, TAIL_LEN,
            )?;
            let sigma_a = crypto::mac_truncated(&mac_key, prompt_a.as_bytes(), TAIL_LEN)?;
            let evidence = forensic_generate(&lm, &trig_a.full_ids(), &sigma_a, &params, 256);

            let trig_b = concealed::concealed_trigger_gen(
                &prompt_b, &mac_key, &params, &lm, TAIL_LEN,
            )?;
            let sigma_b = crypto::mac_truncated(&mac_key, prompt_b.as_bytes(), TAIL_LEN)?;
            let report = concealed::extract_copyright(
                &evidence,
                trig_b.last_token(),
                &sigma_b,
                &params,
                VOCAB_SIZE,
                Some(&params.message),
            )?;
            if concealed::verify_concealed(&params.message, &report, crate::ops::DEFAULT_TAU)? {
                passes[slot] += 1;
            }
        }
    }
    Ok(ReplayReport {
        trials,
        passes_unbound: passes[0],
        passes_bound: passes[1],
    })
}

/// Greedy generation with the evidence bias at every step (the gateway's
/// forensic loop, reproduced here for in-process experiments).
pub fn forensic_generate(
    lm: &ToyLm,
    trigger_ids: &[u32],
    sigma: &crypto::Tag,
    params: &ConcealParams,
    n: usize,
) -> Vec<u32> {
    let ctx = concealed::EvidenceContext::new(sigma, params);
    let all: Vec<u32> = (0..lm.vocab_size() as u32).collect();
    let mut history = trigger_ids.to_vec();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut logits = lm.logits(&history);
        concealed::apply_bias(&mut logits, &ctx, *history.last().unwrap(), params)
            .expect("valid params");
        let probs = softmax(&logits);
        let token = sample_constrained(&probs, &all, SamplePolicy::Greedy).expect("vocab nonempty");
        history.push(token);
        out.push(token);
    }
    out
}
