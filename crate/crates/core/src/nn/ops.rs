/// Numerically stable log-softmax. Entries equal to `-inf` stay `-inf`
/// (masked actions).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp(logits);
    logits.iter().map(|&l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of `log_softmax(logits)[action]` with respect to the logits,
/// scaled by `scale`, accumulated into `out`.
pub fn accumulate_log_prob_grad(probs: &[f64], action: usize, scale: f64, out: &mut [f64]) {
    for (o, &p) in out.iter_mut().zip(probs) {
        *o -= scale * p;
    }
    out[action] += scale;
}
