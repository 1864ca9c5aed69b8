use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Theorem;
use crate::nn::{accumulate_log_prob_grad, log_softmax, optim_step, AdamW, Grads, NnError};
use crate::policy::{encode_state, EncodedState, EncodingMode, PolicyNet};
use crate::reward_model::argmax;

/// A ground-truth proof pre-encoded with the history-augmented encoding.
/// Built once at load time, so training never touches the prover.
#[derive(Debug, Clone)]
pub struct SftExample {
    pub theorem: String,
    pub encodings: Vec<EncodedState>,
    pub actions: Vec<usize>,
}

impl SftExample {
    pub fn new(thm: &Theorem) -> Option<Self> {
        let states = thm.gt_states()?;
        let encodings = states
            .iter()
            .enumerate()
            .map(|(i, s)| encode_state(thm, &thm.gt_proof[..i], s, EncodingMode::History))
            .collect();
        Some(Self {
            theorem: thm.name.clone(),
            encodings,
            actions: thm.gt_proof.iter().map(|t| t.index()).collect(),
        })
    }
}

/// Mean cross-entropy over the proof's steps.
pub fn sft_loss(net: &PolicyNet, ex: &SftExample, grads: Option<&mut Grads>) -> f64 {
    let n = ex.actions.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grads = grads;
    for (es, &a) in ex.encodings.iter().zip(&ex.actions) {
        let tape = net.forward(es);
        let mut logits = tape.logits.clone();
        net.action_space.mask(&mut logits);
        let lp = log_softmax(&logits);
        loss -= lp[a] / n;
        if let Some(g) = grads.as_deref_mut() {
            let probs: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
            let mut d = vec![0.0; probs.len()];
            accumulate_log_prob_grad(&probs, a, -1.0 / n, &mut d);
            net.mlp().backward(&net.store, &tape, &d, None, g);
        }
    }
    loss
}

/// Fraction of steps where the policy's top action is the ground truth.
pub fn top1_accuracy(net: &PolicyNet, examples: &[SftExample]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for ex in examples {
        for (es, &a) in ex.encodings.iter().zip(&ex.actions) {
            total += 1;
            if argmax(&net.action_logits(es)) == a {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftMetrics {
    pub step: usize,
    pub theorem: String,
    pub loss: f64,
    /// Σ log P_F of the ground-truth proof before the update.
    pub log_pf: f64,
    pub skipped: bool,
}

pub fn sft_step(net: &mut PolicyNet, ex: &SftExample, optim: &AdamW) -> (f64, f64, bool) {
    let mut grads = net.store.zero_grads();
    let loss = sft_loss(net, ex, Some(&mut grads));
    let log_pf = -loss * ex.actions.len() as f64;
    let skipped = matches!(
        optim_step(&mut net.store, &mut grads, optim),
        Err(NnError::NonFiniteGradient(_))
    );
    (loss, log_pf, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SftConfig {
    pub total_steps: usize,
    pub optim: AdamW,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            total_steps: 2000,
            optim: AdamW::default(),
            seed: 0,
        }
    }
}

/// One theorem per step, reshuffling the corpus every epoch.
pub fn train_sft(
    net: &mut PolicyNet,
    theorems: &[Theorem],
    cfg: &SftConfig,
    mut on_step: impl FnMut(&SftMetrics, &PolicyNet),
) -> Vec<SftMetrics> {
    let examples: Vec<SftExample> = theorems.iter().filter_map(SftExample::new).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rows = Vec::with_capacity(cfg.total_steps);
    if examples.is_empty() {
        return rows;
    }
    for i in 0..cfg.total_steps {
        if i % examples.len() == 0 {
            order.shuffle(&mut rng);
        }
        let ex = &examples[order[i % examples.len()]];
        let (loss, log_pf, skipped) = sft_step(net, ex, &cfg.optim);
        let m = SftMetrics {
            step: i + 1,
            theorem: ex.theorem.clone(),
            loss,
            log_pf,
            skipped,
        };
        on_step(&m, net);
        rows.push(m);
    }
    rows
}
