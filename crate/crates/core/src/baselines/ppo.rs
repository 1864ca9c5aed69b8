use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Theorem;
use crate::gfn::{sample_trajectory, RewardError, RewardSpec, SamplingConfig, Trajectory};
use crate::nn::{optim_step, AdamW, Checkpoint, Grads, NnError, ParamStore, ScalarHead, HIDDEN_WIDTH};
use crate::policy::{EncodedState, PolicyNet};
use crate::reward_model::RewardModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub ppo_epochs: usize,
    pub value_coef: f64,
    pub discount: f64,
    pub optim: AdamW,
    pub max_depth: usize,
    pub reward: RewardSpec,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            ppo_epochs: 4,
            value_coef: 0.5,
            discount: 1.0,
            optim: AdamW::default(),
            max_depth: 3,
            reward: RewardSpec::default(),
        }
    }
}

/// Linear state-value head on the policy's last hidden layer.
#[derive(Debug, Clone)]
pub struct ValueHead {
    pub store: ParamStore,
    head: ScalarHead,
}

impl Default for ValueHead {
    fn default() -> Self {
        Self::new()
    }
}

impl ValueHead {
    pub fn new() -> Self {
        let mut store = ParamStore::new();
        let head = ScalarHead::new(&mut store, "value", HIDDEN_WIDTH);
        Self { store, head }
    }

    pub fn head(&self) -> &ScalarHead {
        &self.head
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new("value_head", serde_json::Value::Null, self.store.clone())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, NnError> {
        let mut v = Self::new();
        v.store.load_from(&ckpt.store)?;
        Ok(v)
    }

    pub fn value(&self, net: &PolicyNet, es: &EncodedState) -> f64 {
        self.head.forward(&self.store, net.forward(es).hidden())
    }
}

/// `min(r·Â, clip(r, 1−ε, 1+ε)·Â)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to the ratio. Zero
/// whenever the clipped branch is selected outside the trust region.
pub fn clipped_surrogate_grad(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    if ratio * advantage <= clipped * advantage {
        advantage
    } else if ratio < 1.0 - eps || ratio > 1.0 + eps {
        0.0
    } else {
        advantage
    }
}

/// One action taken during a rollout, with everything the update needs.
#[derive(Debug, Clone)]
pub struct PpoSample {
    pub encoding: EncodedState,
    pub action: usize,
    pub old_log_prob: f64,
    pub ret: f64,
    pub advantage: f64,
}

/// Per-step samples of a finished trajectory. Rewards are zero except the
/// terminal log-reward, so with discount γ the return at step t is
/// `γ^(n−1−t) · log_r`.
pub fn samples_from_trajectory(
    thm: &Theorem,
    traj: &Trajectory,
    net: &PolicyNet,
    value: &ValueHead,
    discount: f64,
) -> Vec<PpoSample> {
    let n = traj.len();
    traj.encodings(thm)
        .into_iter()
        .zip(&traj.tactics)
        .enumerate()
        .map(|(t, (es, tac))| {
            let ret = discount.powi((n - 1 - t) as i32) * traj.log_r;
            let v = value.value(net, &es);
            let old = net.log_probs_of(&es, *tac);
            PpoSample {
                encoding: es,
                action: tac.index(),
                old_log_prob: old,
                ret,
                advantage: ret - v,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoLoss {
    pub total: f64,
    pub surrogate: f64,
    pub value_mse: f64,
}

/// `−mean(clipped surrogate) + value_coef · mean((V − G)²)`, with optional
/// gradients into the policy store and the value store.
pub fn ppo_loss(
    net: &PolicyNet,
    value: &ValueHead,
    samples: &[PpoSample],
    cfg: &PpoConfig,
    grads: Option<(&mut Grads, &mut Grads)>,
) -> PpoLoss {
    let n = samples.len().max(1) as f64;
    let mut surrogate = 0.0;
    let mut mse = 0.0;
    let mut grads = grads;
    for s in samples {
        let tape = net.forward(&s.encoding);
        let mut logits = tape.logits.clone();
        net.action_space.mask(&mut logits);
        let lp = crate::nn::log_softmax(&logits);
        let ratio = (lp[s.action] - s.old_log_prob).exp();
        surrogate += clipped_surrogate(ratio, s.advantage, cfg.clip_eps) / n;
        let v = value.head.forward(&value.store, tape.hidden());
        mse += (v - s.ret).powi(2) / n;

        if let Some((gp, gv)) = grads.as_mut() {
            // d(-surrogate/n)/dlogp = -(dS/dratio) · ratio / n
            let d_logp = -clipped_surrogate_grad(ratio, s.advantage, cfg.clip_eps) * ratio / n;
            let probs: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
            let mut d_logits = vec![0.0; probs.len()];
            crate::nn::accumulate_log_prob_grad(&probs, s.action, d_logp, &mut d_logits);
            let d_v = cfg.value_coef * 2.0 * (v - s.ret) / n;
            let d_hidden = value.head.backward(&value.store, tape.hidden(), d_v, gv);
            net.mlp().backward(&net.store, &tape, &d_logits, Some(&d_hidden), gp);
        }
    }
    PpoLoss {
        total: -surrogate + cfg.value_coef * mse,
        surrogate,
        value_mse: mse,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoMetrics {
    pub loss: f64,
    pub mean_log_r: f64,
    pub mean_log_pf: f64,
    pub env_calls: u64,
    pub skipped: bool,
}

/// Collects one untempered rollout per theorem, then runs `ppo_epochs`
/// clipped-surrogate updates against the stored old log-probabilities.
pub fn ppo_step(
    net: &mut PolicyNet,
    value: &mut ValueHead,
    thms: &[&Theorem],
    cfg: &PpoConfig,
    rm: Option<&RewardModel>,
    rng: &mut impl Rng,
) -> Result<PpoMetrics, RewardError> {
    let sampling = SamplingConfig {
        max_depth: cfg.max_depth,
        temper_p: 0.0,
        temper_range: (1.0, 1.0),
        explore_eps: 0.0,
    };
    let mut samples = Vec::new();
    let mut env_calls = 0u64;
    let mut log_r_sum = 0.0;
    let mut log_pf_sum = 0.0;
    for thm in thms {
        let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
        let traj = sample_trajectory(thm, net, &sampling, &cfg.reward, rm, &mut r)?;
        env_calls += traj.len() as u64;
        log_r_sum += traj.log_r;
        log_pf_sum += traj.log_pf;
        samples.extend(samples_from_trajectory(thm, &traj, net, value, cfg.discount));
    }

    let mut last = PpoLoss {
        total: 0.0,
        surrogate: 0.0,
        value_mse: 0.0,
    };
    let mut skipped = false;
    for _ in 0..cfg.ppo_epochs {
        let mut gp = net.store.zero_grads();
        let mut gv = value.store.zero_grads();
        last = ppo_loss(net, value, &samples, cfg, Some((&mut gp, &mut gv)));
        let a = optim_step(&mut net.store, &mut gp, &cfg.optim);
        let b = optim_step(&mut value.store, &mut gv, &cfg.optim);
        if matches!(a, Err(NnError::NonFiniteGradient(_))) || matches!(b, Err(NnError::NonFiniteGradient(_))) {
            skipped = true;
            break;
        }
    }
    let n = thms.len().max(1) as f64;
    Ok(PpoMetrics {
        loss: last.total,
        mean_log_r: log_r_sum / n,
        mean_log_pf: log_pf_sum / n,
        env_calls,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_values() {
        assert!((clipped_surrogate(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) - -0.8).abs() < 1e-15);
        assert_eq!(clipped_surrogate(1.0, 3.0, 0.2), 3.0);
        assert_eq!(clipped_surrogate_grad(2.0, 1.0, 0.2), 0.0);
        assert_eq!(clipped_surrogate_grad(0.5, -1.0, 0.2), 0.0);
        // Unclipped branch selected: gradient is the advantage.
        assert_eq!(clipped_surrogate_grad(0.5, 1.0, 0.2), 1.0);
        assert_eq!(clipped_surrogate_grad(2.0, -1.0, 0.2), -1.0);
        assert_eq!(clipped_surrogate_grad(1.1, 1.0, 0.2), 1.0);
    }
}
