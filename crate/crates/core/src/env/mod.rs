//! MiniProp: a deterministic propositional tactic prover.
//!
//! States are lists of goals; tactics act on the first goal only. Every
//! `(state, tactic)` pair yields exactly one of `Ok`, `Proved` or
//! `EnvError`, and the functions here never panic on well-formed values.

mod formula;
mod state;
mod tactic;

pub use formula::{is_atom_name, parse_formula, print_formula, Connective, Formula, SyntaxError};
pub use state::{state_fingerprint, Goal, ProofState, PROVED_FINGERPRINT};
pub use tactic::{
    apply_tactic, replay, EnvErrorKind, Replay, StepResult, Tactic, TacticError, TacticKind,
    MAX_HYP_ARG, NUM_ACTIONS,
};
