use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ProofState, Tactic};
use crate::reward_model::RewardModel;

use super::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Error penalty plus reward-model partial credit for unfinished proofs.
    FullRm,
    /// Proof or penalty, nothing in between.
    Binary,
}

/// Constants of the shaped log-reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub alpha: f64,
    /// Maximum tactic length in characters.
    pub c_max_tactic_len: f64,
    pub error_base: f64,
    pub mode: RewardMode,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            alpha: 8.0,
            c_max_tactic_len: 88.0,
            error_base: -15.0,
            mode: RewardMode::FullRm,
        }
    }
}

impl RewardSpec {
    pub fn binary() -> Self {
        Self {
            mode: RewardMode::Binary,
            ..Self::default()
        }
    }

    /// `error_base + alpha · ln((c − l) / c)` for mean tactic length `l`.
    pub fn error_log_reward(&self, mean_len: f64) -> Result<f64, RewardError> {
        let c = self.c_max_tactic_len;
        if mean_len.is_nan() || mean_len >= c {
            return Err(RewardError::InvalidLength { mean_len, c });
        }
        Ok(self.error_base + self.alpha * ((c - mean_len) / c).ln())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("mean tactic length {mean_len} is not below the cap {c}")]
    InvalidLength { mean_len: f64, c: f64 },
    #[error("reward-model partial credit requested but no reward model was given")]
    MissingRewardModel,
    #[error("trajectory has no tactics")]
    Empty,
}

pub fn mean_tactic_len(tactics: &[Tactic]) -> f64 {
    tactics.iter().map(|t| t.char_len() as f64).sum::<f64>() / tactics.len() as f64
}

/// Log-reward of a finished rollout.
///
/// `states[i]` is the state `tactics[i]` was applied to.
pub fn log_reward(
    outcome: Outcome,
    tactics: &[Tactic],
    states: &[ProofState],
    spec: &RewardSpec,
    rm: Option<&RewardModel>,
) -> Result<f64, RewardError> {
    if tactics.is_empty() {
        return Err(RewardError::Empty);
    }
    match (outcome, spec.mode) {
        (Outcome::Proved, _) => Ok(0.0),
        (Outcome::EnvError, _) | (Outcome::DepthExhausted, RewardMode::Binary) => {
            spec.error_log_reward(mean_tactic_len(tactics))
        }
        (Outcome::DepthExhausted, RewardMode::FullRm) => {
            let rm = rm.ok_or(RewardError::MissingRewardModel)?;
            Ok(tactics
                .iter()
                .zip(states)
                .map(|(t, s)| rm.score(s, t) / t.char_len() as f64)
                .sum())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Goal;

    fn a_to_a() -> ProofState {
        ProofState::single(Goal::parse_line("a -> a").unwrap())
    }

    #[test]
    fn proved_is_zero() {
        let spec = RewardSpec::default();
        let r = log_reward(Outcome::Proved, &[Tactic::INTRO], &[a_to_a()], &spec, None).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn error_branch_values() {
        let spec = RewardSpec::default();
        // -15 + 8 ln(44/88) and -15 + 8 ln(80/88), evaluated by hand.
        assert!((spec.error_log_reward(44.0).unwrap() - -20.545_177_444_479_56).abs() < 1e-4);
        assert!((spec.error_log_reward(8.0).unwrap() - -15.762_481_438_434_6).abs() < 1e-4);
        // "destruct h1" is 11 characters, "intro" 5: mean 8.
        let r = log_reward(
            Outcome::EnvError,
            &[Tactic::destruct(1), Tactic::INTRO],
            &[a_to_a(), a_to_a()],
            &spec,
            None,
        )
        .unwrap();
        assert!((r - -15.7625).abs() < 1e-4);
        assert!(matches!(
            spec.error_log_reward(88.0),
            Err(RewardError::InvalidLength { .. })
        ));
    }

    #[test]
    fn binary_mode_penalizes_unfinished() {
        let spec = RewardSpec::binary();
        let tactics = [Tactic::INTRO];
        let states = [a_to_a()];
        let unfinished = log_reward(Outcome::DepthExhausted, &tactics, &states, &spec, None).unwrap();
        let err = log_reward(Outcome::EnvError, &tactics, &states, &spec, None).unwrap();
        assert_eq!(unfinished, err);
        assert_eq!(unfinished, spec.error_log_reward(5.0).unwrap());
    }

    #[test]
    fn partial_credit_uses_reward_model() {
        let spec = RewardSpec::default();
        let rm = RewardModel::uniform();
        let tactics = [Tactic::INTRO, Tactic::exact(1)];
        let states = [a_to_a(), a_to_a()];
        let r = log_reward(Outcome::DepthExhausted, &tactics, &states, &spec, Some(&rm)).unwrap();
        let expected = -(36f64.ln()) * (1.0 / 5.0 + 1.0 / 8.0);
        assert!((r - expected).abs() < 1e-12);
        assert_eq!(
            log_reward(Outcome::DepthExhausted, &tactics, &states, &spec, None),
            Err(RewardError::MissingRewardModel)
        );
    }
}
