//! GFlowNet fine-tuning for tactic-based theorem proving at desk scale.
//!
//! The crate bundles a small propositional prover ([`env`]), a synthetic
//! theorem corpus ([`corpus`]), a hand-written MLP stack ([`nn`]), the
//! tactic policy ([`policy`]), the trajectory-balance trainer ([`gfn`]),
//! a partial-reward scorer ([`reward_model`]), SFT/PPO baselines
//! ([`baselines`]), best-first search ([`search`]) and an exhaustive
//! enumeration oracle ([`oracle`]).

pub mod baselines;
pub mod corpus;
pub mod env;
pub mod gfn;
pub mod hashing;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod reward_model;
pub mod search;

pub use env::{apply_tactic, parse_formula, print_formula, Formula, Goal, ProofState, Tactic};
