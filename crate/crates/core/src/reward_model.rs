//! The partial-reward scorer: a policy-shaped network trained by supervised
//! learning on ground-truth `(state, tactic)` pairs, always reading the
//! history-less encoding, plus hard-negative mining.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, Theorem};
use crate::env::{apply_tactic, ProofState, StepResult, Tactic, NUM_ACTIONS};
use crate::nn::{
    accumulate_log_prob_grad, log_softmax, optim_step, AdamW, Checkpoint, Mlp, NnError,
    ParamStore,
};
use crate::policy::{encode_state, EncodedState, EncodingMode, TacticModel, POLICY_SHAPE};
use crate::search::{search_from, SearchConfig};

/// Frozen scorer `log P_RM(t | s)` over the history-less encoding.
#[derive(Debug, Clone)]
pub struct RewardModel {
    pub store: ParamStore,
    mlp: Mlp,
}

/// History-less encoding of a bare state.
pub fn encode_history_less(s: &ProofState) -> EncodedState {
    // The theorem is ignored in history-less mode; any stand-in works.
    let dummy = Theorem {
        name: String::new(),
        initial_state: ProofState::new(vec![]),
        gt_proof: vec![],
    };
    encode_state(&dummy, &[], s, EncodingMode::HistoryLess)
}

impl RewardModel {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "rm", POLICY_SHAPE, rng);
        Self { store, mlp }
    }

    /// All-zero model: every action scores `-ln 36`.
    pub fn uniform() -> Self {
        let mut rm = Self::new(&mut rand::rngs::mock::StepRng::new(0, 0));
        rm.store.fill(0.0);
        rm
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// `log softmax(logits(history_less(s)))[t]`; always ≤ 0.
    pub fn score(&self, s: &ProofState, t: &Tactic) -> f64 {
        self.log_probs(&encode_history_less(s))[t.index()]
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            "reward_model",
            serde_json::json!({ "encoding": EncodingMode::HistoryLess }),
            self.store.clone(),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, NnError> {
        let mut rm = Self::uniform();
        rm.store.load_from(&ckpt.store)?;
        Ok(rm)
    }

    /// Mean cross-entropy and top-1 accuracy over labelled pairs.
    pub fn evaluate(&self, pairs: &[(EncodedState, usize)]) -> (f64, f64) {
        if pairs.is_empty() {
            return (0.0, 0.0);
        }
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (es, a) in pairs {
            let logits = self.logits(es);
            let lp = log_softmax(&logits);
            loss -= lp[*a];
            if argmax(&logits) == *a {
                correct += 1;
            }
        }
        let n = pairs.len() as f64;
        (loss / n, correct as f64 / n)
    }
}

impl TacticModel for RewardModel {
    fn logits(&self, es: &EncodedState) -> Vec<f64> {
        self.mlp.forward(&self.store, es.as_slice()).logits
    }
}

pub fn rm_score(rm: &RewardModel, s: &ProofState, t: &Tactic) -> f64 {
    rm.score(s, t)
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Ground-truth `(history-less state, action)` pairs of a theorem list.
pub fn gt_pairs(theorems: &[Theorem]) -> Vec<(EncodedState, usize)> {
    let mut out = Vec::new();
    for thm in theorems {
        let states = thm.gt_states().expect("ground-truth proof replays");
        for (s, t) in states.iter().zip(&thm.gt_proof) {
            out.push((encode_history_less(s), t.index()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: AdamW,
    pub seed: u64,
}

impl Default for RmTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 1,
            optim: AdamW::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's minibatches.
    pub loss: f64,
    /// Top-1 accuracy on the training pairs after the epoch.
    pub accuracy: f64,
}

/// Supervised training on every ground-truth pair of the train split.
pub fn rm_train(corpus: &CorpusSplit, cfg: &RmTrainConfig) -> (RewardModel, Vec<EpochStats>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rm = RewardModel::new(&mut rng);
    let pairs = gt_pairs(&corpus.train);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut grads = rm.store.zero_grads();
            let mut loss = 0.0;
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (es, a) = &pairs[i];
                let tape = rm.mlp.forward(&rm.store, es.as_slice());
                let lp = log_softmax(&tape.logits);
                loss -= lp[*a] * scale;
                let probs: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
                let mut d = vec![0.0; NUM_ACTIONS];
                accumulate_log_prob_grad(&probs, *a, -scale, &mut d);
                rm.mlp.backward(&rm.store, &tape, &d, None, &mut grads);
            }
            if optim_step(&mut rm.store, &mut grads, &cfg.optim).is_ok() {
                total += loss;
                batches += 1;
            }
        }
        let (_, accuracy) = rm.evaluate(&pairs);
        stats.push(EpochStats {
            epoch,
            loss: total / batches.max(1) as f64,
            accuracy,
        });
    }
    (rm, stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
    /// A proof was found, but its first step just recreated the parent
    /// state, so the tactic's contribution is doubtful.
    Uncertain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTactic {
    pub state: ProofState,
    pub tactic: Tactic,
    pub label: Label,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabeledRecord {
    state: String,
    tactic: String,
    label: Label,
}

impl LabeledTactic {
    /// One line of the labelled-pairs JSON-lines file.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&LabeledRecord {
            state: self.state.canonical(),
            tactic: self.tactic.to_string(),
            label: self.label,
        })
        .expect("serializable")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    /// Trajectories sampled per theorem.
    pub samples: usize,
    pub max_depth: usize,
    pub explore_budget: usize,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            samples: 8,
            max_depth: 3,
            explore_budget: 36,
            seed: 0,
        }
    }
}

struct Rollout {
    steps: Vec<(ProofState, Tactic, ProofState)>,
    proved: bool,
}

fn rollout(model: &dyn TacticModel, thm: &Theorem, max_depth: usize, rng: &mut impl Rng) -> Rollout {
    let mut state = thm.initial_state.clone();
    let mut steps = Vec::new();
    for _ in 0..max_depth {
        let lp = model.log_probs(&encode_history_less(&state));
        let a = crate::policy::sample_tempered(&lp, 1.0, rng);
        let t = Tactic::from_index(a);
        match apply_tactic(&state, &t) {
            StepResult::Ok(next) => {
                steps.push((state.clone(), t, next.clone()));
                state = next;
            }
            StepResult::Proved => {
                steps.push((state.clone(), t, ProofState::new(vec![])));
                return Rollout { steps, proved: true };
            }
            // Errored tactics are not labelable.
            StepResult::EnvError(_) => break,
        }
    }
    Rollout {
        steps,
        proved: false,
    }
}

/// Exhaustive search from `child`: every action at every node, so any proof
/// within the budget is found.
pub(crate) fn mining_search_config(explore_budget: usize, max_depth: usize) -> SearchConfig {
    SearchConfig {
        branching: NUM_ACTIONS,
        expansion_budget: explore_budget,
        wall_clock_ms: None,
        encoding_mode: EncodingMode::HistoryLess,
        dedupe: true,
        max_depth,
    }
}

/// Samples trajectories with `model` and labels each valid tactic of each
/// failed trajectory by whether its child state can still be proved within
/// `explore_budget` search expansions. Tactics on proved trajectories are
/// positive.
pub fn mine_hard_negatives(
    model: &dyn TacticModel,
    thm: &Theorem,
    cfg: &MiningConfig,
) -> Vec<LabeledTactic> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ crate::hashing::hash_str(0, &thm.name));
    let search_cfg = mining_search_config(cfg.explore_budget, cfg.max_depth);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for _ in 0..cfg.samples {
        let ro = rollout(model, thm, cfg.max_depth, &mut rng);
        for (parent, tactic, child) in ro.steps {
            if !seen.insert((parent.fingerprint(), tactic)) {
                continue;
            }
            let label = if ro.proved || child.is_proved() {
                Label::Positive
            } else {
                let result = search_from(model, thm, &[], &child, &search_cfg);
                match result.proof {
                    None => Label::Negative,
                    Some(proof) => {
                        let undoes = match apply_tactic(&child, &proof[0]) {
                            StepResult::Ok(next) => next == parent,
                            _ => false,
                        };
                        if undoes {
                            Label::Uncertain
                        } else {
                            Label::Positive
                        }
                    }
                }
            };
            out.push(LabeledTactic {
                state: parent,
                tactic,
                label,
            });
        }
    }
    out
}
