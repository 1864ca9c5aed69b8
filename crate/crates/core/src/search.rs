//! Best-first proof search guided by cumulative policy log-probability.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Theorem;
use crate::env::{apply_tactic, replay, ProofState, Replay, StepResult, Tactic};
use crate::nn::log_softmax;
use crate::policy::{encode_state, EncodingMode, TacticModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Children enqueued per expansion (top actions by logit).
    pub branching: usize,
    /// Maximum number of policy queries.
    pub expansion_budget: usize,
    /// Optional wall-clock cap in addition to the expansion budget.
    pub wall_clock_ms: Option<u64>,
    pub encoding_mode: EncodingMode,
    /// Prune children whose state fingerprint was already reached.
    pub dedupe: bool,
    /// Deepest tactic count a proof may have.
    pub max_depth: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            branching: 8,
            expansion_budget: 100,
            wall_clock_ms: None,
            encoding_mode: EncodingMode::History,
            dedupe: true,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub state: ProofState,
    /// Tactics applied since the search root.
    pub path: Vec<Tactic>,
    pub priority: f64,
    seq: u64,
}

impl SearchNode {
    pub fn depth(&self) -> usize {
        self.path.len()
    }
}

impl Eq for SearchNode {}

impl Ord for SearchNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on priority; among equals the earlier insertion wins.
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SearchNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub proved: bool,
    pub proof: Option<Vec<Tactic>>,
    pub expansions: usize,
}

/// Top `k` finite entries by value; ties go to the lower index.
fn top_actions(logits: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len())
        .filter(|&i| logits[i] > f64::NEG_INFINITY)
        .collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn best_first_search(model: &dyn TacticModel, thm: &Theorem, cfg: &SearchConfig) -> SearchOutcome {
    search_from(model, thm, &[], &thm.initial_state, cfg)
}

/// Searches from an arbitrary `start` reached from the theorem's initial
/// state by `history`. The returned proof is relative to `start`.
pub fn search_from(
    model: &dyn TacticModel,
    thm: &Theorem,
    history: &[Tactic],
    start: &ProofState,
    cfg: &SearchConfig,
) -> SearchOutcome {
    let started = Instant::now();
    let mut queue = BinaryHeap::new();
    let mut seen = HashSet::new();
    let mut seq = 0u64;
    seen.insert(start.fingerprint());
    queue.push(SearchNode {
        state: start.clone(),
        path: Vec::new(),
        priority: 0.0,
        seq,
    });
    let mut expansions = 0;
    let mut full_history = history.to_vec();

    while expansions < cfg.expansion_budget {
        if let Some(ms) = cfg.wall_clock_ms {
            if started.elapsed().as_millis() as u64 >= ms {
                break;
            }
        }
        let Some(node) = queue.pop() else { break };
        expansions += 1;

        full_history.truncate(history.len());
        full_history.extend_from_slice(&node.path);
        let es = encode_state(thm, &full_history, &node.state, cfg.encoding_mode);
        let logits = model.logits(&es);
        let log_probs = log_softmax(&logits);

        for a in top_actions(&logits, cfg.branching) {
            let tactic = Tactic::from_index(a);
            match apply_tactic(&node.state, &tactic) {
                StepResult::EnvError(_) => {}
                StepResult::Proved => {
                    let mut proof = node.path.clone();
                    proof.push(tactic);
                    return SearchOutcome {
                        proved: true,
                        proof: Some(proof),
                        expansions,
                    };
                }
                StepResult::Ok(child) => {
                    if node.depth() + 1 >= cfg.max_depth {
                        continue;
                    }
                    if cfg.dedupe && !seen.insert(child.fingerprint()) {
                        continue;
                    }
                    seq += 1;
                    let mut path = node.path.clone();
                    path.push(tactic);
                    queue.push(SearchNode {
                        state: child,
                        path,
                        priority: node.priority + log_probs[a],
                        seq,
                    });
                }
            }
        }
    }
    SearchOutcome {
        proved: false,
        proof: None,
        expansions,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremResult {
    pub name: String,
    pub proof_len: usize,
    pub solved: bool,
    pub expansions: usize,
    pub proof: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solved: usize,
    pub total: usize,
    pub per_theorem: Vec<TheoremResult>,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Runs [`best_first_search`] on each theorem (in parallel) and aggregates.
pub fn evaluate_split(model: &dyn TacticModel, split: &[Theorem], cfg: &SearchConfig) -> SolveReport {
    let per_theorem: Vec<TheoremResult> = split
        .par_iter()
        .map(|thm| {
            let out = best_first_search(model, thm, cfg);
            debug_assert!(out.proof.as_ref().is_none_or(|p| matches!(
                replay(&thm.initial_state, p),
                Replay::Proved { .. }
            )));
            TheoremResult {
                name: thm.name.clone(),
                proof_len: thm.gt_proof.len(),
                solved: out.proved,
                expansions: out.expansions,
                proof: out
                    .proof
                    .map(|p| p.iter().map(Tactic::to_string).collect()),
            }
        })
        .collect();
    SolveReport {
        solved: per_theorem.iter().filter(|r| r.solved).count(),
        total: per_theorem.len(),
        per_theorem,
    }
}
