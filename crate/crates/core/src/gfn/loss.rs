use crate::corpus::Theorem;
use crate::nn::Grads;
use crate::policy::PolicyNet;

use super::trajectory::Trajectory;

/// `log_r − log Z − log_pf`; the backward-policy term vanishes on a tree.
pub fn tb_residual(log_r: f64, log_z: f64, log_pf: f64) -> f64 {
    log_r - log_z - log_pf
}

/// Mean squared residual over `(log_r, log_z, log_pf)` triples.
pub fn tb_loss_values(items: &[(f64, f64, f64)]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    items
        .iter()
        .map(|&(r, z, pf)| tb_residual(r, z, pf).powi(2))
        .sum::<f64>()
        / items.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TbOutput {
    pub loss: f64,
    pub residuals: Vec<f64>,
    /// Current-policy log-probabilities of the batch.
    pub log_pf: Vec<f64>,
    pub log_z: Vec<f64>,
}

/// Trajectory-balance loss of a batch under the current policy. Each item
/// pairs a trajectory with its theorem; `log_pf` and log Z are recomputed
/// from `net`. Gradients, when requested, reach the trunk, the action head
/// and the log Z head.
pub fn tb_loss(batch: &[(&Theorem, &Trajectory)], net: &PolicyNet, grads: Option<&mut Grads>) -> TbOutput {
    let n = batch.len().max(1) as f64;
    let mut out = TbOutput {
        loss: 0.0,
        residuals: Vec::with_capacity(batch.len()),
        log_pf: Vec::with_capacity(batch.len()),
        log_z: Vec::with_capacity(batch.len()),
    };
    let mut grads = grads;
    for (thm, traj) in batch {
        let root = net.forward(&PolicyNet::root_encoding(thm));
        let log_z = net.log_z_head().forward(&net.store, root.hidden());
        let (log_pf, tapes) = net.trajectory_log_pf(&traj.encodings(thm), &traj.tactics);
        let delta = tb_residual(traj.log_r, log_z, log_pf);
        out.loss += delta * delta / n;
        out.residuals.push(delta);
        out.log_pf.push(log_pf);
        out.log_z.push(log_z);
        if let Some(g) = grads.as_deref_mut() {
            let d = -2.0 * delta / n;
            net.backward_log_pf(&tapes, d, g);
            net.backward_log_z(&root, d, g);
        }
    }
    out
}
