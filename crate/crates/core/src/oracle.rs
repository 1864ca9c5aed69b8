//! Exhaustive trajectory enumeration: exact partition function, the
//! reward-proportional target distribution, the policy's exact trajectory
//! distribution and flow residuals on the trajectory tree.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::Theorem;
use crate::env::{apply_tactic, Goal, ProofState, StepResult, Tactic, NUM_ACTIONS};
use crate::gfn::{log_reward, Outcome, RewardError, RewardSpec};
use crate::nn::logsumexp;
use crate::policy::{encode_state, ActionSpace, EncodingMode, PolicyNet, TacticModel};
use crate::reward_model::RewardModel;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("policy mass over enumerated trajectories is {0}, expected 1")]
    MassLeak(f64),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedTrajectory {
    pub tactics: Vec<Tactic>,
    pub outcome: Outcome,
    pub log_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

/// A non-terminal state of the trajectory tree.
#[derive(Debug, Clone)]
pub struct Node {
    pub history: Vec<Tactic>,
    pub state: ProofState,
    /// `(action index, child)` for every enumerated action.
    pub children: Vec<(usize, Child)>,
}

#[derive(Debug, Clone)]
pub struct ExactDist {
    pub theorem: Theorem,
    pub trajectories: Vec<EnumeratedTrajectory>,
    /// Node 0 is the root; children always come after their parent.
    pub nodes: Vec<Node>,
    pub log_z: f64,
    pub target_probs: Vec<f64>,
    pub policy_probs: Option<Vec<f64>>,
}

impl ExactDist {
    fn from_parts(theorem: Theorem, trajectories: Vec<EnumeratedTrajectory>, nodes: Vec<Node>) -> Self {
        let log_rs: Vec<f64> = trajectories.iter().map(|t| t.log_r).collect();
        let log_z = logsumexp(&log_rs);
        let target_probs = log_rs.iter().map(|r| (r - log_z).exp()).collect();
        Self {
            theorem,
            trajectories,
            nodes,
            log_z,
            target_probs,
            policy_probs: None,
        }
    }

    /// A root with one terminal child per reward, reached by actions
    /// `0, 1, …`.
    pub fn toy(log_rs: &[f64]) -> Self {
        let goal = Goal::parse_line("a").expect("static goal");
        let theorem = Theorem::new("toy", goal, vec![]);
        let trajectories = log_rs
            .iter()
            .enumerate()
            .map(|(i, &log_r)| EnumeratedTrajectory {
                tactics: vec![Tactic::from_index(i)],
                outcome: Outcome::Proved,
                log_r,
            })
            .collect();
        let root = Node {
            history: vec![],
            state: theorem.initial_state.clone(),
            children: (0..log_rs.len()).map(|i| (i, Child::Leaf(i))).collect(),
        };
        Self::from_parts(theorem, trajectories, vec![root])
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// `ln F(s)` for every node, where `F(s)` sums `R` over the terminals
    /// below `s`.
    pub fn node_log_flows(&self) -> Vec<f64> {
        let mut flows = vec![f64::NEG_INFINITY; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            let parts: Vec<f64> = self.nodes[i]
                .children
                .iter()
                .map(|&(_, c)| self.child_log_flow(c, &flows))
                .collect();
            flows[i] = logsumexp(&parts);
        }
        flows
    }

    /// Flow into a child: the terminal reward itself for leaves.
    pub fn child_log_flow(&self, child: Child, node_flows: &[f64]) -> f64 {
        match child {
            Child::Leaf(j) => self.trajectories[j].log_r,
            Child::Node(k) => node_flows[k],
        }
    }
}

struct RawTrajectory {
    tactics: Vec<Tactic>,
    states: Vec<ProofState>,
    outcome: Outcome,
}

/// Applies action `a` in `state` and continues depth-first below it.
fn expand(
    state: &ProofState,
    a: usize,
    tactics: &mut Vec<Tactic>,
    states: &mut Vec<ProofState>,
    actions: &[usize],
    max_depth: usize,
    out: &mut Vec<RawTrajectory>,
) {
    let t = Tactic::from_index(a);
    tactics.push(t);
    let (terminal, next) = match apply_tactic(state, &t) {
        StepResult::Proved => (Some(Outcome::Proved), ProofState::new(vec![])),
        StepResult::EnvError(_) => (Some(Outcome::EnvError), state.clone()),
        StepResult::Ok(next) if tactics.len() >= max_depth => (Some(Outcome::DepthExhausted), next),
        StepResult::Ok(next) => (None, next),
    };
    states.push(next);
    match terminal {
        Some(outcome) => out.push(RawTrajectory {
            tactics: tactics.clone(),
            states: states.clone(),
            outcome,
        }),
        None => {
            let here = states.last().unwrap().clone();
            for &b in actions {
                expand(&here, b, tactics, states, actions, max_depth, out);
            }
        }
    }
    states.pop();
    tactics.pop();
}

/// Enumerates every trajectory of depth at most `max_depth` over the
/// allowed actions, stopping early on proof or error exactly like the
/// trainer's rollouts. Root actions are explored in parallel.
pub fn enumerate_trajectories(
    thm: &Theorem,
    max_depth: usize,
    space: &ActionSpace,
    spec: &RewardSpec,
    rm: Option<&RewardModel>,
) -> Result<ExactDist, OracleError> {
    let actions = space.actions();
    let per_root: Vec<Vec<RawTrajectory>> = actions
        .par_iter()
        .map(|&a| {
            let mut out = Vec::new();
            if max_depth > 0 {
                let mut states = vec![thm.initial_state.clone()];
                expand(&thm.initial_state, a, &mut Vec::new(), &mut states, &actions, max_depth, &mut out);
            }
            out
        })
        .collect();
    let raw: Vec<RawTrajectory> = per_root.into_iter().flatten().collect();

    let log_rs: Vec<f64> = raw
        .par_iter()
        .map(|r| log_reward(r.outcome, &r.tactics, &r.states, spec, rm))
        .collect::<Result<_, _>>()?;

    let mut nodes = vec![Node {
        history: vec![],
        state: thm.initial_state.clone(),
        children: vec![],
    }];
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    index.insert(vec![], 0);
    let mut trajectories = Vec::with_capacity(raw.len());
    for (j, (r, log_r)) in raw.into_iter().zip(log_rs).enumerate() {
        let ids: Vec<usize> = r.tactics.iter().map(Tactic::index).collect();
        let mut parent = 0;
        for k in 1..ids.len() {
            parent = match index.get(&ids[..k]) {
                Some(&n) => n,
                None => {
                    let n = nodes.len();
                    nodes.push(Node {
                        history: r.tactics[..k].to_vec(),
                        state: r.states[k].clone(),
                        children: vec![],
                    });
                    nodes[parent].children.push((ids[k - 1], Child::Node(n)));
                    index.insert(ids[..k].to_vec(), n);
                    n
                }
            };
        }
        nodes[parent].children.push((ids[ids.len() - 1], Child::Leaf(j)));
        trajectories.push(EnumeratedTrajectory {
            tactics: r.tactics,
            outcome: r.outcome,
            log_r,
        });
    }
    Ok(ExactDist::from_parts(thm.clone(), trajectories, nodes))
}

/// Per-node log-probabilities over all 36 actions for a policy.
pub fn policy_node_log_probs(net: &impl TacticModel, dist: &ExactDist) -> Vec<Vec<f64>> {
    dist.nodes
        .par_iter()
        .map(|n| {
            let es = encode_state(&dist.theorem, &n.history, &n.state, EncodingMode::History);
            net.log_probs(&es)
        })
        .collect()
}

/// Exact trajectory probabilities given per-node action log-probabilities.
/// Errors when the policy puts mass outside the enumerated tree.
pub fn trajectory_probs_with(dist: &ExactDist, node_log_probs: &[Vec<f64>]) -> Result<Vec<f64>, OracleError> {
    let mut probs = vec![0.0; dist.len()];
    let mut stack = vec![(0usize, 0.0f64)];
    while let Some((i, lp)) = stack.pop() {
        for &(a, c) in &dist.nodes[i].children {
            let child_lp = lp + node_log_probs[i][a];
            match c {
                Child::Leaf(j) => probs[j] = child_lp.exp(),
                Child::Node(k) => stack.push((k, child_lp)),
            }
        }
    }
    let total: f64 = probs.iter().sum();
    if total < 1.0 - 1e-6 {
        return Err(OracleError::MassLeak(total));
    }
    Ok(probs)
}

pub fn policy_trajectory_probs(net: &PolicyNet, dist: &ExactDist) -> Result<Vec<f64>, OracleError> {
    trajectory_probs_with(dist, &policy_node_log_probs(net, dist))
}

/// `½ Σ |p − q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowReport {
    /// `max |F(s)·P_F(s'|s) − F(s')| / Z` over all edges, including edges to
    /// actions outside the tree (whose flow is zero).
    pub max_residual: f64,
    pub edges: usize,
}

pub fn flow_check(dist: &ExactDist, node_log_probs: &[Vec<f64>]) -> FlowReport {
    let flows = dist.node_log_flows();
    let mut max_residual: f64 = 0.0;
    let mut edges = 0;
    for (i, node) in dist.nodes.iter().enumerate() {
        let out_flow = (flows[i] - dist.log_z).exp();
        let mut child_flow = [0.0; NUM_ACTIONS];
        for &(a, c) in &node.children {
            child_flow[a] = (dist.child_log_flow(c, &flows) - dist.log_z).exp();
        }
        for (a, &lp) in node_log_probs[i].iter().enumerate() {
            let predicted = out_flow * lp.exp();
            if predicted == 0.0 && child_flow[a] == 0.0 {
                continue;
            }
            edges += 1;
            max_residual = max_residual.max((predicted - child_flow[a]).abs());
        }
    }
    FlowReport { max_residual, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub theorem: String,
    pub n_trajectories: usize,
    #[serde(rename = "log_Z")]
    pub log_z: f64,
    #[serde(rename = "predicted_log_Z")]
    pub predicted_log_z: f64,
    pub tv_distance: f64,
    pub max_flow_residual: f64,
}

/// Enumerates `thm` under the policy's action space and compares the
/// policy against the exact target.
pub fn oracle_report(
    thm: &Theorem,
    net: &PolicyNet,
    max_depth: usize,
    spec: &RewardSpec,
    rm: Option<&RewardModel>,
) -> Result<OracleReport, OracleError> {
    let mut dist = enumerate_trajectories(thm, max_depth, &net.action_space, spec, rm)?;
    let node_lps = policy_node_log_probs(net, &dist);
    let probs = trajectory_probs_with(&dist, &node_lps)?;
    let flow = flow_check(&dist, &node_lps);
    let tv = tv_distance(&probs, &dist.target_probs);
    dist.policy_probs = Some(probs);
    Ok(OracleReport {
        theorem: thm.name.clone(),
        n_trajectories: dist.len(),
        log_z: dist.log_z,
        predicted_log_z: net.predict_log_z(thm),
        tv_distance: tv,
        max_flow_residual: flow.max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_partition() {
        let d = ExactDist::toy(&[0.0, 3f64.ln()]);
        assert!((d.log_z - 4f64.ln()).abs() < 1e-12);
        assert!((d.target_probs[0] - 0.25).abs() < 1e-12);
        assert!((d.target_probs[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn toy_flow_balance() {
        let d = ExactDist::toy(&[0.0, 3f64.ln()]);
        let mut lp = vec![f64::NEG_INFINITY; NUM_ACTIONS];
        lp[0] = 0.25f64.ln();
        lp[1] = 0.75f64.ln();
        let r = flow_check(&d, &[lp.clone()]);
        assert!(r.max_residual < 1e-12);
        let probs = trajectory_probs_with(&d, &[lp]).unwrap();
        assert!(tv_distance(&probs, &d.target_probs) < 1e-12);

        let mut bad = vec![f64::NEG_INFINITY; NUM_ACTIONS];
        bad[0] = 0.5f64.ln();
        bad[1] = 0.5f64.ln();
        assert!((flow_check(&d, &[bad]).max_residual - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mass_leak_detected() {
        let d = ExactDist::toy(&[0.0, 0.0]);
        let lp = vec![-(NUM_ACTIONS as f64).ln(); NUM_ACTIONS];
        assert!(matches!(trajectory_probs_with(&d, &[lp]), Err(OracleError::MassLeak(_))));
    }

    #[test]
    fn terminal_flow_is_reward() {
        let d = ExactDist::toy(&[-1.5, -20.0]);
        let flows = d.node_log_flows();
        for &(_, c) in &d.nodes[0].children {
            if let Child::Leaf(j) = c {
                assert_eq!(d.child_log_flow(c, &flows), d.trajectories[j].log_r);
            }
        }
    }

    #[test]
    fn error_only_rewards_stay_finite() {
        let d = ExactDist::toy(&[-20.5, -20.5, -20.5]);
        assert!(d.log_z.is_finite());
        assert!((d.target_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
