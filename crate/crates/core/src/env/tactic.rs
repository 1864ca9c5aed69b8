use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::formula::Formula;
use super::state::{Goal, ProofState};

/// Largest hypothesis index a tactic may name.
pub const MAX_HYP_ARG: u8 = 8;
/// Four argument-free tactics plus four indexed families of `MAX_HYP_ARG`.
pub const NUM_ACTIONS: usize = 4 + 4 * MAX_HYP_ARG as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TacticKind {
    Intro,
    Split,
    Left,
    Right,
    Exact,
    Apply,
    Cases,
    Destruct,
}

impl TacticKind {
    pub fn name(self) -> &'static str {
        match self {
            TacticKind::Intro => "intro",
            TacticKind::Split => "split",
            TacticKind::Left => "left",
            TacticKind::Right => "right",
            TacticKind::Exact => "exact",
            TacticKind::Apply => "apply",
            TacticKind::Cases => "cases",
            TacticKind::Destruct => "destruct",
        }
    }

    pub fn takes_arg(self) -> bool {
        matches!(
            self,
            TacticKind::Exact | TacticKind::Apply | TacticKind::Cases | TacticKind::Destruct
        )
    }
}

/// A tactic with its optional 1-based hypothesis argument.
///
/// The constructor enforces that argument-taking kinds carry an index in
/// `1..=MAX_HYP_ARG` and the others carry none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tactic {
    kind: TacticKind,
    arg: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TacticError {
    #[error("tactic `{0}` takes no argument")]
    UnexpectedArg(&'static str),
    #[error("tactic `{0}` needs a hypothesis argument")]
    MissingArg(&'static str),
    #[error("hypothesis index {0} outside 1..={MAX_HYP_ARG}")]
    ArgOutOfRange(u32),
    #[error("unrecognized tactic {0:?}")]
    Unknown(String),
}

impl Tactic {
    pub const INTRO: Tactic = Tactic {
        kind: TacticKind::Intro,
        arg: None,
    };
    pub const SPLIT: Tactic = Tactic {
        kind: TacticKind::Split,
        arg: None,
    };
    pub const LEFT: Tactic = Tactic {
        kind: TacticKind::Left,
        arg: None,
    };
    pub const RIGHT: Tactic = Tactic {
        kind: TacticKind::Right,
        arg: None,
    };

    pub fn new(kind: TacticKind, arg: Option<u8>) -> Result<Self, TacticError> {
        match (kind.takes_arg(), arg) {
            (false, Some(_)) => Err(TacticError::UnexpectedArg(kind.name())),
            (true, None) => Err(TacticError::MissingArg(kind.name())),
            (true, Some(k)) if k == 0 || k > MAX_HYP_ARG => {
                Err(TacticError::ArgOutOfRange(u32::from(k)))
            }
            _ => Ok(Self { kind, arg }),
        }
    }

    pub fn exact(k: u8) -> Self {
        Self::new(TacticKind::Exact, Some(k)).expect("hypothesis index in range")
    }

    pub fn apply(k: u8) -> Self {
        Self::new(TacticKind::Apply, Some(k)).expect("hypothesis index in range")
    }

    pub fn cases(k: u8) -> Self {
        Self::new(TacticKind::Cases, Some(k)).expect("hypothesis index in range")
    }

    pub fn destruct(k: u8) -> Self {
        Self::new(TacticKind::Destruct, Some(k)).expect("hypothesis index in range")
    }

    pub fn kind(&self) -> TacticKind {
        self.kind
    }

    pub fn arg(&self) -> Option<u8> {
        self.arg
    }

    /// Position in the fixed action space: the four argument-free tactics
    /// first, then `exact`, `apply`, `cases`, `destruct` for `h1..h8`.
    pub fn index(&self) -> usize {
        match (self.kind, self.arg) {
            (TacticKind::Intro, _) => 0,
            (TacticKind::Split, _) => 1,
            (TacticKind::Left, _) => 2,
            (TacticKind::Right, _) => 3,
            (kind, Some(k)) => {
                let family = match kind {
                    TacticKind::Exact => 0,
                    TacticKind::Apply => 1,
                    TacticKind::Cases => 2,
                    _ => 3,
                };
                4 + family * MAX_HYP_ARG as usize + (k as usize - 1)
            }
            (_, None) => unreachable!("argument-taking tactic without argument"),
        }
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < NUM_ACTIONS, "action index {index} out of range");
        match index {
            0 => Self::INTRO,
            1 => Self::SPLIT,
            2 => Self::LEFT,
            3 => Self::RIGHT,
            _ => {
                let rest = index - 4;
                let k = (rest % MAX_HYP_ARG as usize) as u8 + 1;
                let kind = match rest / MAX_HYP_ARG as usize {
                    0 => TacticKind::Exact,
                    1 => TacticKind::Apply,
                    2 => TacticKind::Cases,
                    _ => TacticKind::Destruct,
                };
                Self {
                    kind,
                    arg: Some(k),
                }
            }
        }
    }

    pub fn all() -> impl Iterator<Item = Tactic> {
        (0..NUM_ACTIONS).map(Tactic::from_index)
    }

    /// Character length of the canonical string.
    pub fn char_len(&self) -> usize {
        self.to_string().len()
    }
}

impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.arg {
            None => f.write_str(self.kind.name()),
            Some(k) => write!(f, "{} h{}", self.kind.name(), k),
        }
    }
}

impl FromStr for Tactic {
    type Err = TacticError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        let head = parts.next().unwrap_or("");
        let kind = match head {
            "intro" => TacticKind::Intro,
            "split" => TacticKind::Split,
            "left" => TacticKind::Left,
            "right" => TacticKind::Right,
            "exact" => TacticKind::Exact,
            "apply" => TacticKind::Apply,
            "cases" => TacticKind::Cases,
            "destruct" => TacticKind::Destruct,
            _ => return Err(TacticError::Unknown(s.to_string())),
        };
        let arg = match parts.next() {
            None => None,
            Some(a) => {
                let k: u32 = a
                    .strip_prefix('h')
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| TacticError::Unknown(s.to_string()))?;
                if k == 0 || k > u32::from(MAX_HYP_ARG) {
                    return Err(TacticError::ArgOutOfRange(k));
                }
                Some(k as u8)
            }
        };
        if parts.next().is_some() {
            return Err(TacticError::Unknown(s.to_string()));
        }
        Tactic::new(kind, arg)
    }
}

impl serde::Serialize for Tactic {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Tactic {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvErrorKind {
    NoSuchHypothesis,
    ShapeMismatch,
    NoGoals,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Ok(ProofState),
    Proved,
    EnvError(EnvErrorKind),
}

impl StepResult {
    pub fn is_error(&self) -> bool {
        matches!(self, StepResult::EnvError(_))
    }
}

/// Runs one tactic against the first goal of `state`.
pub fn apply_tactic(state: &ProofState, tactic: &Tactic) -> StepResult {
    use EnvErrorKind::*;

    let Some((goal, rest)) = state.goals.split_first() else {
        return StepResult::EnvError(NoGoals);
    };
    let hyp = match tactic.arg {
        Some(k) => match goal.hyps.get(k as usize - 1) {
            Some(h) => Some((k as usize - 1, h)),
            None => return StepResult::EnvError(NoSuchHypothesis),
        },
        None => None,
    };

    let replaced: Vec<Goal> = match (tactic.kind, &goal.target, hyp) {
        (TacticKind::Intro, Formula::Implies(a, b), _) => {
            let mut hyps = goal.hyps.clone();
            hyps.push((**a).clone());
            vec![Goal::new(hyps, (**b).clone())]
        }
        (TacticKind::Split, Formula::And(a, b), _) => vec![
            Goal::new(goal.hyps.clone(), (**a).clone()),
            Goal::new(goal.hyps.clone(), (**b).clone()),
        ],
        (TacticKind::Left, Formula::Or(a, _), _) => {
            vec![Goal::new(goal.hyps.clone(), (**a).clone())]
        }
        (TacticKind::Right, Formula::Or(_, b), _) => {
            vec![Goal::new(goal.hyps.clone(), (**b).clone())]
        }
        (TacticKind::Exact, target, Some((_, h))) if h == target => vec![],
        (TacticKind::Apply, target, Some((_, Formula::Implies(a, b)))) if **b == *target => {
            vec![Goal::new(goal.hyps.clone(), (**a).clone())]
        }
        (TacticKind::Cases, _, Some((i, Formula::Or(a, b)))) => {
            let mut left = goal.hyps.clone();
            left[i] = (**a).clone();
            let mut right = goal.hyps.clone();
            right[i] = (**b).clone();
            vec![
                Goal::new(left, goal.target.clone()),
                Goal::new(right, goal.target.clone()),
            ]
        }
        (TacticKind::Destruct, _, Some((i, Formula::And(a, b)))) => {
            let mut hyps = goal.hyps.clone();
            hyps.remove(i);
            hyps.push((**a).clone());
            hyps.push((**b).clone());
            vec![Goal::new(hyps, goal.target.clone())]
        }
        _ => return StepResult::EnvError(ShapeMismatch),
    };

    let mut goals = replaced;
    goals.extend(rest.iter().cloned());
    if goals.is_empty() {
        StepResult::Proved
    } else {
        StepResult::Ok(ProofState::new(goals))
    }
}

/// Outcome of replaying a tactic script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Replay {
    Proved { steps: usize },
    Open(ProofState),
    Failed { step: usize, error: EnvErrorKind },
}

/// Replays `tactics` from `start`, stopping at the first error or at proof
/// completion. A script that keeps going after `Proved` counts as a
/// `NoGoals` failure at the next step.
pub fn replay(start: &ProofState, tactics: &[Tactic]) -> Replay {
    let mut state = start.clone();
    for (i, t) in tactics.iter().enumerate() {
        match apply_tactic(&state, t) {
            StepResult::Ok(next) => state = next,
            StepResult::Proved => {
                if i + 1 == tactics.len() {
                    return Replay::Proved { steps: i + 1 };
                }
                return Replay::Failed {
                    step: i + 1,
                    error: EnvErrorKind::NoGoals,
                };
            }
            StepResult::EnvError(error) => return Replay::Failed { step: i, error },
        }
    }
    if state.is_proved() {
        Replay::Proved { steps: 0 }
    } else {
        Replay::Open(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::parse_formula;

    fn state(hyps: &[&str], target: &str) -> ProofState {
        ProofState::single(Goal::new(
            hyps.iter().map(|h| parse_formula(h).unwrap()).collect(),
            parse_formula(target).unwrap(),
        ))
    }

    #[test]
    fn action_space_indexing() {
        assert_eq!(NUM_ACTIONS, 36);
        for i in 0..NUM_ACTIONS {
            let t = Tactic::from_index(i);
            assert_eq!(t.index(), i);
            assert_eq!(t.to_string().parse::<Tactic>().unwrap(), t);
        }
        assert_eq!(Tactic::exact(3).to_string(), "exact h3");
        assert_eq!(Tactic::destruct(8).to_string(), "destruct h8");
        assert_eq!(Tactic::from_index(35), Tactic::destruct(8));
    }

    #[test]
    fn tactic_construction_rules() {
        assert!(Tactic::new(TacticKind::Intro, Some(1)).is_err());
        assert!(Tactic::new(TacticKind::Exact, None).is_err());
        assert!(Tactic::new(TacticKind::Exact, Some(9)).is_err());
        assert!(Tactic::new(TacticKind::Exact, Some(0)).is_err());
        assert!("exact h9".parse::<Tactic>().is_err());
        assert!("intro h1".parse::<Tactic>().is_err());
        assert!("simp".parse::<Tactic>().is_err());
    }

    #[test]
    fn intro_then_exact() {
        let s = state(&[], "a -> a");
        let StepResult::Ok(next) = apply_tactic(&s, &Tactic::INTRO) else {
            panic!("intro failed");
        };
        assert_eq!(next, state(&["a"], "a"));
        assert_eq!(apply_tactic(&next, &Tactic::exact(1)), StepResult::Proved);
    }

    #[test]
    fn exact_mismatch_and_missing_hyp() {
        let s = state(&["a"], "b");
        assert_eq!(
            apply_tactic(&s, &Tactic::exact(1)),
            StepResult::EnvError(EnvErrorKind::ShapeMismatch)
        );
        assert_eq!(
            apply_tactic(&s, &Tactic::exact(2)),
            StepResult::EnvError(EnvErrorKind::NoSuchHypothesis)
        );
        assert_eq!(
            apply_tactic(&ProofState::new(vec![]), &Tactic::INTRO),
            StepResult::EnvError(EnvErrorKind::NoGoals)
        );
    }

    #[test]
    fn split_left_right() {
        let s = state(&["c"], "a & b");
        assert_eq!(
            apply_tactic(&s, &Tactic::SPLIT),
            StepResult::Ok(ProofState::new(vec![
                Goal::new(vec![parse_formula("c").unwrap()], parse_formula("a").unwrap()),
                Goal::new(vec![parse_formula("c").unwrap()], parse_formula("b").unwrap()),
            ]))
        );
        let s = state(&[], "a | b");
        assert_eq!(apply_tactic(&s, &Tactic::LEFT), StepResult::Ok(state(&[], "a")));
        assert_eq!(apply_tactic(&s, &Tactic::RIGHT), StepResult::Ok(state(&[], "b")));
        assert!(apply_tactic(&s, &Tactic::SPLIT).is_error());
    }

    #[test]
    fn apply_cases_destruct() {
        let s = state(&["a -> b", "a"], "b");
        assert_eq!(
            apply_tactic(&s, &Tactic::apply(1)),
            StepResult::Ok(state(&["a -> b", "a"], "a"))
        );
        assert!(apply_tactic(&s, &Tactic::apply(2)).is_error());

        let s = state(&["c", "a | b"], "a");
        assert_eq!(
            apply_tactic(&s, &Tactic::cases(2)),
            StepResult::Ok(ProofState::new(vec![
                Goal::new(
                    vec![parse_formula("c").unwrap(), parse_formula("a").unwrap()],
                    parse_formula("a").unwrap()
                ),
                Goal::new(
                    vec![parse_formula("c").unwrap(), parse_formula("b").unwrap()],
                    parse_formula("a").unwrap()
                ),
            ]))
        );

        let s = state(&["a & b", "c"], "b");
        assert_eq!(
            apply_tactic(&s, &Tactic::destruct(1)),
            StepResult::Ok(state(&["c", "a", "b"], "b"))
        );
        assert!(apply_tactic(&s, &Tactic::destruct(2)).is_error());
    }

    #[test]
    fn only_first_goal_is_touched() {
        let s = ProofState::new(vec![
            Goal::new(vec![parse_formula("a").unwrap()], parse_formula("a").unwrap()),
            Goal::from_target(parse_formula("b").unwrap()),
        ]);
        assert_eq!(
            apply_tactic(&s, &Tactic::exact(1)),
            StepResult::Ok(state(&[], "b"))
        );
    }

    #[test]
    fn replay_scripts() {
        let s = state(&[], "a -> a");
        assert_eq!(
            replay(&s, &[Tactic::INTRO, Tactic::exact(1)]),
            Replay::Proved { steps: 2 }
        );
        assert_eq!(
            replay(&s, &[Tactic::INTRO, Tactic::exact(1), Tactic::INTRO]),
            Replay::Failed {
                step: 2,
                error: EnvErrorKind::NoGoals
            }
        );
        assert_eq!(replay(&s, &[Tactic::INTRO]), Replay::Open(state(&["a"], "a")));
    }
}
