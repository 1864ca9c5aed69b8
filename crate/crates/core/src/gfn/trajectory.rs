use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Theorem;
use crate::env::{apply_tactic, replay, ProofState, Replay, StepResult, Tactic};
use crate::policy::{encode_state, EncodedState, EncodingMode, PolicyNet};
use crate::reward_model::RewardModel;

use super::reward::{log_reward, RewardError, RewardSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Proved,
    EnvError,
    DepthExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Online,
    Replay,
    GroundTruth,
}

/// A complete rollout `s_0 → … → s_n`.
///
/// `states` has one more entry than `tactics`: `states[i]` is the state
/// `tactics[i]` was applied to and the last entry is the result (no goals
/// when proved, the unchanged state when the last tactic errored).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub theorem: String,
    pub tactics: Vec<Tactic>,
    pub states: Vec<ProofState>,
    pub outcome: Outcome,
    pub log_pf: f64,
    pub log_r: f64,
    pub source: Source,
    /// Sampling temperature (1.0 for replayed and ground-truth entries).
    pub temperature: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.tactics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tactics.is_empty()
    }

    pub fn canonical_states(&self) -> Vec<String> {
        self.states.iter().map(ProofState::canonical).collect()
    }

    /// History-augmented encodings of the states the policy acted in.
    pub fn encodings(&self, thm: &Theorem) -> Vec<EncodedState> {
        (0..self.tactics.len())
            .map(|i| encode_state(thm, &self.tactics[..i], &self.states[i], EncodingMode::History))
            .collect()
    }

    /// Re-runs the tactics through the prover and checks that the stored
    /// states and outcome agree.
    pub fn verify(&self, thm: &Theorem) -> Result<(), TrajectoryError> {
        let consistent = match replay(&thm.initial_state, &self.tactics) {
            Replay::Proved { .. } => self.outcome == Outcome::Proved,
            Replay::Open(s) => {
                self.outcome == Outcome::DepthExhausted && self.states.last() == Some(&s)
            }
            Replay::Failed { step, .. } => {
                self.outcome == Outcome::EnvError && step + 1 == self.tactics.len()
            }
        };
        if consistent {
            Ok(())
        } else {
            Err(TrajectoryError::ReplayDiverged(self.theorem.clone()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("stored trajectory for `{0}` does not replay")]
    ReplayDiverged(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Rollout sampling knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub max_depth: usize,
    /// Probability of drawing a tempered rollout.
    pub temper_p: f64,
    pub temper_range: (f64, f64),
    /// Per-step probability of replacing the policy's choice with a uniform
    /// draw over the allowed actions. Off-policy exploration only: the
    /// recorded log-probability is still the policy's own.
    pub explore_eps: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            temper_p: 0.666,
            temper_range: (0.25, 1.0),
            explore_eps: 0.0,
        }
    }
}

impl SamplingConfig {
    pub fn draw_temperature(&self, rng: &mut impl Rng) -> f64 {
        if rng.gen::<f64>() < self.temper_p {
            rng.gen_range(self.temper_range.0..self.temper_range.1)
        } else {
            1.0
        }
    }
}

/// Runs a rollout where `choose` picks each tactic and reports its
/// untempered log-probability. Stops on proof, error or `max_depth`.
fn rollout(
    thm: &Theorem,
    max_depth: usize,
    mut choose: impl FnMut(&EncodedState, usize) -> (Tactic, f64),
) -> (Vec<Tactic>, Vec<ProofState>, Outcome, f64) {
    let mut tactics = Vec::new();
    let mut states = vec![thm.initial_state.clone()];
    let mut log_pf = 0.0;
    let mut outcome = Outcome::DepthExhausted;
    for depth in 0..max_depth {
        let current = states.last().unwrap();
        let es = encode_state(thm, &tactics, current, EncodingMode::History);
        let (t, lp) = choose(&es, depth);
        log_pf += lp;
        let result = apply_tactic(current, &t);
        tactics.push(t);
        match result {
            StepResult::Ok(next) => states.push(next),
            StepResult::Proved => {
                states.push(ProofState::new(vec![]));
                outcome = Outcome::Proved;
                break;
            }
            StepResult::EnvError(_) => {
                states.push(current.clone());
                outcome = Outcome::EnvError;
                break;
            }
        }
    }
    (tactics, states, outcome, log_pf)
}

/// Samples one trajectory. The temperature is drawn once per rollout; the
/// accumulated `log_pf` is always the untempered policy log-probability.
/// The number of prover calls equals the trajectory length.
pub fn sample_trajectory(
    thm: &Theorem,
    net: &PolicyNet,
    cfg: &SamplingConfig,
    spec: &RewardSpec,
    rm: Option<&RewardModel>,
    rng: &mut impl Rng,
) -> Result<Trajectory, RewardError> {
    let temperature = cfg.draw_temperature(rng);
    let allowed = net.action_space.actions();
    let (tactics, states, outcome, log_pf) = rollout(thm, cfg.max_depth, |es, _| {
        if cfg.explore_eps > 0.0 && rng.gen::<f64>() < cfg.explore_eps {
            let t = Tactic::from_index(allowed[rng.gen_range(0..allowed.len())]);
            (t, net.log_probs_of(es, t))
        } else {
            net.sample_action(es, temperature, rng)
        }
    });
    let log_r = log_reward(outcome, &tactics, &states, spec, rm)?;
    Ok(Trajectory {
        theorem: thm.name.clone(),
        tactics,
        states,
        outcome,
        log_pf,
        log_r,
        source: Source::Online,
        temperature,
    })
}

/// Plays a fixed tactic script (truncated at proof, error or `max_depth`)
/// and scores it under `net`.
pub fn forced_trajectory(
    thm: &Theorem,
    net: &PolicyNet,
    script: &[Tactic],
    max_depth: usize,
    spec: &RewardSpec,
    rm: Option<&RewardModel>,
) -> Result<Trajectory, RewardError> {
    let depth = max_depth.min(script.len());
    let (tactics, states, outcome, log_pf) = rollout(thm, depth, |es, i| {
        let t = script[i];
        (t, net.log_probs_of(es, t))
    });
    let log_r = log_reward(outcome, &tactics, &states, spec, rm)?;
    Ok(Trajectory {
        theorem: thm.name.clone(),
        tactics,
        states,
        outcome,
        log_pf,
        log_r,
        source: Source::Online,
        temperature: 1.0,
    })
}

/// The ground-truth proof as a trajectory with `log_r = 0`.
pub fn ground_truth_trajectory(thm: &Theorem, net: &PolicyNet) -> Option<Trajectory> {
    let mut states = thm.gt_states()?;
    states.push(ProofState::new(vec![]));
    let mut traj = Trajectory {
        theorem: thm.name.clone(),
        tactics: thm.gt_proof.clone(),
        states,
        outcome: Outcome::Proved,
        log_pf: 0.0,
        log_r: 0.0,
        source: Source::GroundTruth,
        temperature: 1.0,
    };
    traj.log_pf = replay_forward(net, thm, &traj).ok()?;
    Some(traj)
}

/// Σ log P_F of a stored trajectory under the current policy at T = 1,
/// computed from the stored states without calling the prover.
pub fn replay_forward(net: &PolicyNet, thm: &Theorem, traj: &Trajectory) -> Result<f64, TrajectoryError> {
    if traj.states.len() != traj.tactics.len() + 1 || traj.states.first() != Some(&thm.initial_state) {
        return Err(TrajectoryError::ReplayDiverged(traj.theorem.clone()));
    }
    let (log_pf, _) = net.trajectory_log_pf(&traj.encodings(thm), &traj.tactics);
    Ok(log_pf)
}

impl PolicyNet {
    /// Untempered log-probability of one action.
    pub fn log_probs_of(&self, es: &EncodedState, t: Tactic) -> f64 {
        crate::nn::log_softmax(&self.action_logits(es))[t.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Goal;
    use crate::policy::ActionSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thm(goal: &str, proof: Vec<Tactic>) -> Theorem {
        Theorem::new("t", Goal::parse_line(goal).unwrap(), proof)
    }

    #[test]
    fn uniform_policy_log_pf() {
        let net = PolicyNet::zeros(ActionSpace::Full);
        let t = thm("a -> b -> c -> d", vec![]);
        let traj = forced_trajectory(
            &t,
            &net,
            &[Tactic::INTRO, Tactic::INTRO, Tactic::INTRO],
            3,
            &RewardSpec::default(),
            Some(&RewardModel::uniform()),
        )
        .unwrap();
        assert_eq!(traj.outcome, Outcome::DepthExhausted);
        assert!((traj.log_pf - -3.0 * 36f64.ln()).abs() < 1e-12);
        assert!((traj.log_pf - -10.7506).abs() < 1e-4);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let s = sample_trajectory(
                &t,
                &net,
                &SamplingConfig::default(),
                &RewardSpec::default(),
                Some(&RewardModel::uniform()),
                &mut rng,
            )
            .unwrap();
            assert!((s.log_pf - -(s.len() as f64) * 36f64.ln()).abs() < 1e-12);
            s.verify(&t).unwrap();
        }
    }

    #[test]
    fn forced_proof_has_zero_log_reward() {
        let net = PolicyNet::zeros(ActionSpace::Full);
        let t = thm("a -> a", vec![Tactic::INTRO, Tactic::exact(1)]);
        let traj = forced_trajectory(
            &t,
            &net,
            &[Tactic::INTRO, Tactic::exact(1)],
            3,
            &RewardSpec::default(),
            None,
        )
        .unwrap();
        assert_eq!(traj.outcome, Outcome::Proved);
        assert_eq!(traj.log_r, 0.0);
        traj.verify(&t).unwrap();
    }

    #[test]
    fn sampling_is_reproducible() {
        let net = PolicyNet::new(&mut ChaCha8Rng::seed_from_u64(1), ActionSpace::Full);
        let t = thm("a, a -> b |- b | c", vec![]);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            (0..1000)
                .map(|_| {
                    let s = sample_trajectory(
                        &t,
                        &net,
                        &SamplingConfig::default(),
                        &RewardSpec::default(),
                        Some(&RewardModel::uniform()),
                        &mut rng,
                    )
                    .unwrap();
                    (s.tactics, s.log_pf.to_bits(), s.log_r.to_bits())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn replay_forward_matches_untempered_sample() {
        let net = PolicyNet::new(&mut ChaCha8Rng::seed_from_u64(2), ActionSpace::Full);
        let t = thm("a -> a | b", vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = sample_trajectory(
                &t,
                &net,
                &SamplingConfig::default(),
                &RewardSpec::binary(),
                None,
                &mut rng,
            )
            .unwrap();
            let replayed = replay_forward(&net, &t, &s).unwrap();
            assert!((replayed - s.log_pf).abs() < 1e-12);
        }
        let zero = PolicyNet::zeros(ActionSpace::Full);
        let gt = forced_trajectory(&t, &zero, &[Tactic::INTRO, Tactic::LEFT], 3, &RewardSpec::binary(), None).unwrap();
        assert!((replay_forward(&zero, &t, &gt).unwrap() - -2.0 * 36f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn corrupted_buffer_entry_is_detected() {
        let net = PolicyNet::zeros(ActionSpace::Full);
        let t = thm("a -> a", vec![Tactic::INTRO, Tactic::exact(1)]);
        let mut traj = ground_truth_trajectory(&t, &net).unwrap();
        traj.verify(&t).unwrap();
        traj.tactics[1] = Tactic::exact(2);
        assert!(traj.verify(&t).is_err());
        traj.states.pop();
        assert!(matches!(
            replay_forward(&net, &t, &traj),
            Err(TrajectoryError::ReplayDiverged(_))
        ));
    }
}
