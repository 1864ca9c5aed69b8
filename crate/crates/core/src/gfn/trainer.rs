use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Theorem;
use crate::nn::{optim_step, AdamW, NnError};
use crate::policy::PolicyNet;
use crate::reward_model::RewardModel;

use super::buffer::ReplayBuffer;
use super::loss::tb_loss;
use super::reward::{RewardError, RewardMode, RewardSpec};
use super::trajectory::{
    ground_truth_trajectory, replay_forward, sample_trajectory, SamplingConfig, Source, Trajectory,
    TrajectoryError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GfnMode {
    /// Replay buffer and reward-model partial credit.
    Gfn,
    /// Online only.
    GfnOo,
    /// Binary reward, online only.
    GfnBrOo,
}

impl GfnMode {
    pub fn name(self) -> &'static str {
        match self {
            GfnMode::Gfn => "gfn",
            GfnMode::GfnOo => "gfn-oo",
            GfnMode::GfnBrOo => "gfn-br-oo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub mode: GfnMode,
    pub optim: AdamW,
    pub total_steps: usize,
    /// Learning rate at the last step relative to `optim.lr`, reached by
    /// linear decay. 1.0 keeps it constant.
    pub final_lr_scale: f64,
    /// Trajectories per batch in addition to the ground truth.
    pub n_sampled: usize,
    pub replay_p: f64,
    pub sampling: SamplingConfig,
    pub inject_gt: bool,
    pub buffer_capacity: usize,
    /// Keep one copy per distinct tactic sequence in the replay buffer.
    pub buffer_unique: bool,
    pub reward: RewardSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: GfnMode::Gfn,
            optim: AdamW::default(),
            total_steps: 2000,
            final_lr_scale: 1.0,
            n_sampled: 5,
            replay_p: 0.5,
            sampling: SamplingConfig::default(),
            inject_gt: true,
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            buffer_unique: false,
            reward: RewardSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_mode(mode: GfnMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    /// Settings that reach the exact trajectory distribution on the micro
    /// suite with the six-action space, depth 2 and a uniform reward model.
    pub fn micro(seed: u64) -> Self {
        let mut cfg = Self::for_mode(GfnMode::Gfn);
        cfg.optim = AdamW {
            log_z_lr_scale: 3.0,
            ..AdamW::with_lr(1e-3)
        };
        cfg.final_lr_scale = 0.02;
        cfg.total_steps = 5000;
        cfg.replay_p = 0.8;
        cfg.buffer_unique = true;
        cfg.sampling.max_depth = 2;
        cfg.sampling.explore_eps = 0.5;
        cfg.seed = seed;
        cfg
    }

    /// Optimizer settings for the given 0-based step.
    pub fn optim_at(&self, step: usize) -> AdamW {
        let frac = if self.total_steps > 1 {
            (step as f64 / (self.total_steps - 1) as f64).min(1.0)
        } else {
            0.0
        };
        AdamW {
            lr: self.optim.lr * (1.0 - (1.0 - self.final_lr_scale) * frac),
            ..self.optim
        }
    }

    /// Replay probability after the mode's overrides.
    pub fn effective_replay_p(&self) -> f64 {
        match self.mode {
            GfnMode::Gfn => self.replay_p,
            GfnMode::GfnOo | GfnMode::GfnBrOo => 0.0,
        }
    }

    /// Reward constants after the mode's overrides.
    pub fn effective_reward(&self) -> RewardSpec {
        match self.mode {
            GfnMode::GfnBrOo => RewardSpec {
                mode: RewardMode::Binary,
                ..self.reward
            },
            _ => self.reward,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("mode {0} needs a reward model")]
    MissingRewardModel(&'static str),
    #[error("theorem `{0}` has no replayable ground-truth proof")]
    BadGroundTruth(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// One row of training metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    pub theorem: String,
    pub loss: f64,
    pub mean_log_r: f64,
    pub mean_log_pf: f64,
    pub log_z: f64,
    /// Prover calls made during this step.
    pub env_calls: u64,
    /// Trajectories drawn from the replay buffer during this step.
    pub buffer_reads: u64,
    pub replayed: bool,
    pub ground_truth_count: usize,
    /// The update was dropped because of a non-finite gradient.
    pub skipped: bool,
}

/// Everything the trajectory-balance trainer mutates.
pub struct TrainerState {
    pub net: PolicyNet,
    pub rm: Option<RewardModel>,
    pub buffer: ReplayBuffer,
    pub cfg: TrainConfig,
    rng: ChaCha8Rng,
    gt_cache: HashMap<String, Trajectory>,
    pub step: usize,
    pub env_calls: u64,
    pub skipped_updates: usize,
}

impl TrainerState {
    pub fn new(net: PolicyNet, rm: Option<RewardModel>, cfg: TrainConfig) -> Result<Self, TrainError> {
        if cfg.effective_reward().mode == RewardMode::FullRm && rm.is_none() {
            return Err(TrainError::MissingRewardModel(cfg.mode.name()));
        }
        Ok(Self {
            net,
            rm,
            buffer: if cfg.buffer_unique {
                ReplayBuffer::unique(cfg.buffer_capacity)
            } else {
                ReplayBuffer::new(cfg.buffer_capacity)
            },
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            gt_cache: HashMap::new(),
            step: 0,
            env_calls: 0,
            skipped_updates: 0,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Ground-truth trajectory with cached states; preparing it is a
    /// one-off data-loading cost and is not counted as prover calls.
    fn ground_truth(&mut self, thm: &Theorem) -> Result<Trajectory, TrainError> {
        if let Some(t) = self.gt_cache.get(&thm.name) {
            return Ok(t.clone());
        }
        let t = ground_truth_trajectory(thm, &self.net)
            .ok_or_else(|| TrainError::BadGroundTruth(thm.name.clone()))?;
        self.gt_cache.insert(thm.name.clone(), t.clone());
        Ok(t)
    }
}

/// Samples `n` trajectories in parallel over an immutable policy snapshot.
/// Per-trajectory seeds are drawn up front so results do not depend on
/// scheduling.
pub fn sample_batch(
    thm: &Theorem,
    net: &PolicyNet,
    rm: Option<&RewardModel>,
    sampling: &SamplingConfig,
    spec: &RewardSpec,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Trajectory>, RewardError> {
    let seeds: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            sample_trajectory(thm, net, sampling, spec, rm, &mut r)
        })
        .collect()
}

/// One optimizer step on one theorem.
pub fn train_step(state: &mut TrainerState, thm: &Theorem) -> Result<StepMetrics, TrainError> {
    let cfg = state.cfg;
    let spec = cfg.effective_reward();
    let replay_p = cfg.effective_replay_p();
    let coin: f64 = state.rng.gen();
    let use_replay = replay_p > 0.0 && coin < replay_p && state.buffer.has(&thm.name);

    let mut batch: Vec<Trajectory> = Vec::with_capacity(cfg.n_sampled + 1);
    let mut env_calls = 0u64;
    let reads_before = state.buffer.reads();
    if use_replay {
        for mut t in state.buffer.sample(&thm.name, cfg.n_sampled, &mut state.rng) {
            t.log_pf = replay_forward(&state.net, thm, &t)?;
            batch.push(t);
        }
    } else {
        let fresh = sample_batch(
            thm,
            &state.net,
            state.rm.as_ref(),
            &cfg.sampling,
            &spec,
            cfg.n_sampled,
            &mut state.rng,
        )?;
        env_calls = fresh.iter().map(|t| t.len() as u64).sum();
        if replay_p > 0.0 {
            for t in &fresh {
                state.buffer.insert(t);
            }
        }
        batch.extend(fresh);
    }
    let buffer_reads = state.buffer.reads() - reads_before;
    if cfg.inject_gt {
        batch.push(state.ground_truth(thm)?);
    }

    let items: Vec<(&Theorem, &Trajectory)> = batch.iter().map(|t| (thm, t)).collect();
    let mut grads = state.net.store.zero_grads();
    let out = tb_loss(&items, &state.net, Some(&mut grads));
    let skipped = match optim_step(&mut state.net.store, &mut grads, &cfg.optim_at(state.step)) {
        Ok(_) => false,
        Err(NnError::NonFiniteGradient(_)) => {
            state.skipped_updates += 1;
            true
        }
        Err(e) => unreachable!("optimizer only fails on gradients: {e}"),
    };

    state.step += 1;
    state.env_calls += env_calls;
    let n = batch.len().max(1) as f64;
    Ok(StepMetrics {
        step: state.step,
        theorem: thm.name.clone(),
        loss: out.loss,
        mean_log_r: batch.iter().map(|t| t.log_r).sum::<f64>() / n,
        mean_log_pf: out.log_pf.iter().sum::<f64>() / n,
        log_z: out.log_z.first().copied().unwrap_or(0.0),
        env_calls,
        buffer_reads,
        replayed: use_replay,
        ground_truth_count: batch
            .iter()
            .filter(|t| t.source == Source::GroundTruth)
            .count(),
        skipped,
    })
}

/// Runs `cfg.total_steps` steps, visiting theorems in a fresh shuffled
/// order each epoch. `on_step` sees every metrics row and the updated net.
pub fn train_gfn(
    state: &mut TrainerState,
    theorems: &[Theorem],
    mut on_step: impl FnMut(&StepMetrics, &PolicyNet),
) -> Result<Vec<StepMetrics>, TrainError> {
    let mut order: Vec<usize> = (0..theorems.len()).collect();
    let mut rows = Vec::with_capacity(state.cfg.total_steps);
    if theorems.is_empty() {
        return Ok(rows);
    }
    for i in 0..state.cfg.total_steps {
        if i % theorems.len() == 0 {
            order.shuffle(&mut state.rng);
        }
        let thm = &theorems[order[i % theorems.len()]];
        let m = train_step(state, thm)?;
        on_step(&m, &state.net);
        rows.push(m);
    }
    Ok(rows)
}
