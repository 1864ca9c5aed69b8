//! The forward tactic policy: state featurization, a 36-way action head,
//! tempered sampling and the per-theorem log Z head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Theorem;
use crate::env::{Connective, Formula, ProofState, Tactic, NUM_ACTIONS};
use crate::hashing::hash_str;
use crate::nn::{
    accumulate_log_prob_grad, log_softmax, Checkpoint, Grads, Mlp, MlpShape, NnError, ParamStore,
    ScalarHead, Tape, HIDDEN_WIDTH,
};

/// Width of one state-feature block.
pub const STATE_FEATURES: usize = 64;
pub const ENCODING_DIM: usize = 2 * STATE_FEATURES + NUM_ACTIONS;

/// Fixed seed for the hashed part of the state features.
pub const FEATURE_HASH_SEED: u64 = 0x5eed_f00d_cafe_0001;

const HYP_SLOTS: usize = 8;
const HYP_SLOT_FEATURES: usize = 5;
const HASH_OFFSET: usize = 48;
const HASH_BUCKETS: usize = STATE_FEATURES - HASH_OFFSET;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// Current goals plus the initial state and prior tactic counts.
    History,
    /// Current goals only.
    HistoryLess,
}

impl std::str::FromStr for EncodingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "history" => Ok(EncodingMode::History),
            "history_less" | "history-less" => Ok(EncodingMode::HistoryLess),
            _ => Err(format!("unknown encoding {s:?} (history, history_less)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedState(pub Vec<f64>);

impl EncodedState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn connective_slot(c: Connective) -> usize {
    match c {
        Connective::Atom => 0,
        Connective::Implies => 1,
        Connective::And => 2,
        Connective::Or => 3,
    }
}

fn hashed_bump(block: &mut [f64], key: &str) {
    let h = hash_str(FEATURE_HASH_SEED, key);
    let bucket = (h % HASH_BUCKETS as u64) as usize;
    let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
    block[HASH_OFFSET + bucket] += 0.25 * sign;
}

fn hash_formula(block: &mut [f64], role: &str, f: &Formula) {
    f.walk(&mut |node| match node {
        Formula::Atom(name) => hashed_bump(block, &format!("{role}:atom:{name}")),
        other => hashed_bump(block, &format!("{role}:conn:{:?}", other.connective())),
    });
}

/// Features of a proof state: structural features of the first goal, a few
/// counts, and a signed hashed bag of atoms and connectives.
pub fn state_features(s: &ProofState) -> [f64; STATE_FEATURES] {
    let mut block = [0.0; STATE_FEATURES];
    let Some(goal) = s.goals.first() else {
        return block;
    };
    let target = &goal.target;
    block[connective_slot(target.connective())] = 1.0;
    for (k, hyp) in goal.hyps.iter().take(HYP_SLOTS).enumerate() {
        let base = 4 + k * HYP_SLOT_FEATURES;
        match hyp {
            Formula::Implies(_, rhs) => {
                block[base] = 1.0;
                if **rhs == *target {
                    block[base + 4] = 1.0;
                }
            }
            Formula::And(..) => block[base + 1] = 1.0,
            Formula::Or(..) => block[base + 2] = 1.0,
            Formula::Atom(_) => {}
        }
        if hyp == target {
            block[base + 3] = 1.0;
        }
    }
    block[44] = s.goals.len() as f64 / 4.0;
    block[45] = goal.hyps.len() as f64 / 8.0;
    block[46] = target.depth() as f64 / 4.0;
    block[47] = 1.0;

    hash_formula(&mut block, "target", target);
    for hyp in &goal.hyps {
        hash_formula(&mut block, "hyp", hyp);
    }
    for other in s.goals.iter().skip(1) {
        hash_formula(&mut block, "rest", &other.target);
    }
    block
}

/// Encodes `(theorem, tactics so far, current state)` into a fixed vector.
pub fn encode_state(
    thm: &Theorem,
    history: &[Tactic],
    s: &ProofState,
    mode: EncodingMode,
) -> EncodedState {
    let mut v = vec![0.0; ENCODING_DIM];
    v[..STATE_FEATURES].copy_from_slice(&state_features(s));
    if mode == EncodingMode::History {
        v[STATE_FEATURES..2 * STATE_FEATURES].copy_from_slice(&state_features(&thm.initial_state));
        for t in history {
            v[2 * STATE_FEATURES + t.index()] += 1.0;
        }
    }
    EncodedState(v)
}

/// Which of the 36 actions the policy may emit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Full,
    /// Only the listed action indices.
    Restricted(Vec<usize>),
}

impl ActionSpace {
    /// The six-action space used for exhaustive micro-theorem checks:
    /// the four argument-free tactics plus `exact h1` and `apply h1`.
    pub fn restricted6() -> Self {
        ActionSpace::Restricted(vec![
            Tactic::INTRO.index(),
            Tactic::SPLIT.index(),
            Tactic::LEFT.index(),
            Tactic::RIGHT.index(),
            Tactic::exact(1).index(),
            Tactic::apply(1).index(),
        ])
    }

    pub fn allows(&self, action: usize) -> bool {
        match self {
            ActionSpace::Full => action < NUM_ACTIONS,
            ActionSpace::Restricted(allowed) => allowed.contains(&action),
        }
    }

    pub fn actions(&self) -> Vec<usize> {
        (0..NUM_ACTIONS).filter(|&a| self.allows(a)).collect()
    }

    pub fn size(&self) -> usize {
        self.actions().len()
    }

    /// Sets disallowed logits to `-inf`.
    pub fn mask(&self, logits: &mut [f64]) {
        if let ActionSpace::Restricted(_) = self {
            for (a, l) in logits.iter_mut().enumerate() {
                if !self.allows(a) {
                    *l = f64::NEG_INFINITY;
                }
            }
        }
    }
}

/// Anything that maps an encoded state to action logits.
pub trait TacticModel: Sync {
    /// Masked logits over the 36 actions.
    fn logits(&self, es: &EncodedState) -> Vec<f64>;

    fn log_probs(&self, es: &EncodedState) -> Vec<f64> {
        log_softmax(&self.logits(es))
    }
}

/// MLP trunk with a 36-way action head and a linear log Z head on the last
/// hidden layer.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub store: ParamStore,
    mlp: Mlp,
    log_z_head: ScalarHead,
    pub action_space: ActionSpace,
}

pub const POLICY_SHAPE: MlpShape = MlpShape {
    inputs: ENCODING_DIM,
    hidden: HIDDEN_WIDTH,
    outputs: NUM_ACTIONS,
};

impl PolicyNet {
    pub fn new(rng: &mut impl Rng, action_space: ActionSpace) -> Self {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "policy", POLICY_SHAPE, rng);
        let log_z_head = ScalarHead::new(&mut store, "log_z", HIDDEN_WIDTH);
        Self {
            store,
            mlp,
            log_z_head,
            action_space,
        }
    }

    /// All parameters zero: uniform over the action space, log Z = 0.
    pub fn zeros(action_space: ActionSpace) -> Self {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut net = Self::new(&mut rng, action_space);
        net.store.fill(0.0);
        net
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn log_z_head(&self) -> &ScalarHead {
        &self.log_z_head
    }

    pub fn forward(&self, es: &EncodedState) -> Tape {
        self.mlp.forward(&self.store, es.as_slice())
    }

    /// Raw logits with the action-space mask applied.
    pub fn action_logits(&self, es: &EncodedState) -> Vec<f64> {
        let mut logits = self.forward(es).logits;
        self.action_space.mask(&mut logits);
        logits
    }

    /// Samples from `softmax(logits / temperature)` and reports the
    /// log-probability of the sampled action under the untempered policy.
    pub fn sample_action(
        &self,
        es: &EncodedState,
        temperature: f64,
        rng: &mut impl Rng,
    ) -> (Tactic, f64) {
        let logits = self.action_logits(es);
        let action = sample_tempered(&logits, temperature, rng);
        (Tactic::from_index(action), log_softmax(&logits)[action])
    }

    pub fn root_encoding(thm: &Theorem) -> EncodedState {
        encode_state(thm, &[], &thm.initial_state, EncodingMode::History)
    }

    /// log Z read from the hidden state of the initial-state encoding.
    pub fn predict_log_z(&self, thm: &Theorem) -> f64 {
        let tape = self.forward(&Self::root_encoding(thm));
        self.log_z_head.forward(&self.store, tape.hidden())
    }

    /// Σ log P_F over a trajectory's encoded states, plus per-step tapes for
    /// a later backward pass.
    pub fn trajectory_log_pf(&self, states: &[EncodedState], actions: &[Tactic]) -> (f64, Vec<StepTape>) {
        assert_eq!(states.len(), actions.len());
        let mut total = 0.0;
        let mut tapes = Vec::with_capacity(states.len());
        for (es, t) in states.iter().zip(actions) {
            let tape = self.forward(es);
            let mut logits = tape.logits.clone();
            self.action_space.mask(&mut logits);
            let lp = log_softmax(&logits);
            let a = t.index();
            total += lp[a];
            tapes.push(StepTape {
                tape,
                probs: lp.iter().map(|x| x.exp()).collect(),
                action: a,
            });
        }
        (total, tapes)
    }

    /// Backpropagates `scale · Σ log P_F` through the recorded steps.
    pub fn backward_log_pf(&self, tapes: &[StepTape], scale: f64, grads: &mut Grads) {
        for st in tapes {
            let mut d = vec![0.0; NUM_ACTIONS];
            accumulate_log_prob_grad(&st.probs, st.action, scale, &mut d);
            self.mlp.backward(&self.store, &st.tape, &d, None, grads);
        }
    }

    /// Backpropagates `scale · log Z(thm)` given the root tape.
    pub fn backward_log_z(&self, root: &Tape, scale: f64, grads: &mut Grads) {
        let dh = self.log_z_head.backward(&self.store, root.hidden(), scale, grads);
        let zero = vec![0.0; NUM_ACTIONS];
        self.mlp.backward(&self.store, root, &zero, Some(&dh), grads);
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            "policy",
            serde_json::json!({ "action_space": self.action_space }),
            self.store.clone(),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, NnError> {
        let action_space: ActionSpace = ckpt
            .meta
            .get("action_space")
            .cloned()
            .map(serde_json::from_value)
            .transpose()?
            .unwrap_or(ActionSpace::Full);
        let mut net = Self::zeros(action_space);
        net.store.load_from(&ckpt.store)?;
        Ok(net)
    }
}

impl TacticModel for PolicyNet {
    fn logits(&self, es: &EncodedState) -> Vec<f64> {
        self.action_logits(es)
    }
}

/// One policy evaluation kept for backpropagation.
#[derive(Debug, Clone)]
pub struct StepTape {
    pub tape: Tape,
    pub probs: Vec<f64>,
    pub action: usize,
}

/// Draws an index from `softmax(logits / temperature)`.
pub fn sample_tempered(logits: &[f64], temperature: f64, rng: &mut impl Rng) -> usize {
    assert!(temperature > 0.0, "temperature must be positive");
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let probs: Vec<f64> = log_softmax(&scaled).into_iter().map(f64::exp).collect();
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        last = i;
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{apply_tactic, Goal, StepResult};
    use crate::nn::softmax;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thm(goal: &str) -> Theorem {
        Theorem::new("t", Goal::parse_line(goal).unwrap(), vec![])
    }

    #[test]
    fn empty_history_block_is_zero_and_encoding_is_deterministic() {
        let t = thm("a -> a");
        let es = encode_state(&t, &[], &t.initial_state, EncodingMode::History);
        assert_eq!(es.0.len(), 164);
        assert!(es.0[128..].iter().all(|&x| x == 0.0));
        assert_eq!(es, encode_state(&t, &[], &t.initial_state, EncodingMode::History));
        assert!(es.0.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn history_less_zeroes_the_tail() {
        let t = thm("a -> b | c");
        let StepResult::Ok(s) = apply_tactic(&t.initial_state, &Tactic::INTRO) else {
            panic!()
        };
        let es = encode_state(&t, &[Tactic::INTRO], &s, EncodingMode::HistoryLess);
        assert!(es.0[64..].iter().all(|&x| x == 0.0));
        let full = encode_state(&t, &[Tactic::INTRO], &s, EncodingMode::History);
        assert_eq!(es.0[..64], full.0[..64]);
        assert_eq!(full.0[128 + Tactic::INTRO.index()], 1.0);
    }

    #[test]
    fn distinct_histories_to_the_same_state() {
        // `left` and `right` on `a | a` both leave `|- a`.
        let t = thm("a | a");
        let mut reached = Vec::new();
        for tac in Tactic::all() {
            if let StepResult::Ok(s) = apply_tactic(&t.initial_state, &tac) {
                reached.push((tac, s));
            }
        }
        let mut found = false;
        for (i, (ta, sa)) in reached.iter().enumerate() {
            for (tb, sb) in &reached[i + 1..] {
                if sa == sb {
                    found = true;
                    let h = EncodingMode::History;
                    let hl = EncodingMode::HistoryLess;
                    assert_ne!(encode_state(&t, &[*ta], sa, h), encode_state(&t, &[*tb], sb, h));
                    assert_eq!(encode_state(&t, &[*ta], sa, hl), encode_state(&t, &[*tb], sb, hl));
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn zero_net_is_uniform_with_zero_log_z() {
        let net = PolicyNet::zeros(ActionSpace::Full);
        let t = thm("a -> a");
        let es = PolicyNet::root_encoding(&t);
        for lp in net.log_probs(&es) {
            assert!((lp + 36f64.ln()).abs() < 1e-12);
        }
        assert_eq!(net.predict_log_z(&t), 0.0);
    }

    #[test]
    fn log_z_bias_only() {
        let mut net = PolicyNet::zeros(ActionSpace::Full);
        let b = net.log_z_head().bias;
        net.store.get_mut(b)[0] = 3.2;
        assert_eq!(net.predict_log_z(&thm("a -> a")), 3.2);
        assert_eq!(net.predict_log_z(&thm("p & q |- q")), 3.2);
    }

    #[test]
    fn softmax_of_logits_normalizes() {
        let net = PolicyNet::new(&mut ChaCha8Rng::seed_from_u64(1), ActionSpace::Full);
        let t = thm("a, b |- a & b");
        let p = softmax(&net.action_logits(&PolicyNet::root_encoding(&t)));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restricted_space_masks() {
        let net = PolicyNet::new(&mut ChaCha8Rng::seed_from_u64(1), ActionSpace::restricted6());
        let lp = net.log_probs(&PolicyNet::root_encoding(&thm("a -> a")));
        let allowed = ActionSpace::restricted6().actions();
        assert_eq!(allowed.len(), 6);
        for (a, v) in lp.iter().enumerate() {
            assert_eq!(v.is_finite(), allowed.contains(&a));
        }
        let total: f64 = lp.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_log_prob_ignores_temperature() {
        let net = PolicyNet::new(&mut ChaCha8Rng::seed_from_u64(2), ActionSpace::Full);
        let es = PolicyNet::root_encoding(&thm("a -> a"));
        let lp = net.log_probs(&es);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &temp in &[0.25, 0.5, 1.0, 3.0] {
            for _ in 0..50 {
                let (t, l) = net.sample_action(&es, temp, &mut rng);
                assert_eq!(l, lp[t.index()]);
                assert!(l <= 0.0);
            }
        }
    }

    #[test]
    fn low_temperature_picks_argmax() {
        let logits = [0.1, 2.0, 1.9, -3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            assert_eq!(sample_tempered(&logits, 1e-3, &mut rng), 1);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = PolicyNet::new(&mut ChaCha8Rng::seed_from_u64(3), ActionSpace::restricted6());
        let back = PolicyNet::from_checkpoint(&Checkpoint::from_json(&net.to_checkpoint().to_json()).unwrap()).unwrap();
        assert_eq!(back.store, net.store);
        assert_eq!(back.action_space, net.action_space);
    }
}
