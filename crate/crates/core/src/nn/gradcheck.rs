use super::{Grads, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// (parameter name, flat index) of the worst entry.
    pub worst: Option<(String, usize)>,
}

/// Magnitude below which relative error is measured against this floor
/// instead of the gradient itself.
const REL_FLOOR: f64 = 1e-6;

/// Compares `analytic` against central finite differences of `loss`.
///
/// With `max_per_param = Some(k)` only `k` evenly strided entries of each
/// parameter are perturbed.
pub fn finite_difference_check(
    store: &ParamStore,
    analytic: &Grads,
    loss: impl Fn(&ParamStore) -> f64,
    eps: f64,
    max_per_param: Option<usize>,
) -> GradCheckReport {
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        worst: None,
    };
    for pi in 0..store.params().len() {
        let n = store.params()[pi].value.len();
        let stride = match max_per_param {
            Some(k) if k > 0 && n > k => n.div_ceil(k),
            _ => 1,
        };
        for i in (0..n).step_by(stride) {
            let orig = store.params()[pi].value[i];
            probe.params_mut()[pi].value[i] = orig + eps;
            let up = loss(&probe);
            probe.params_mut()[pi].value[i] = orig - eps;
            let down = loss(&probe);
            probe.params_mut()[pi].value[i] = orig;

            let numeric = (up - down) / (2.0 * eps);
            let exact = analytic.data[pi][i];
            let abs = (numeric - exact).abs();
            let rel = abs / numeric.abs().max(exact.abs()).max(REL_FLOOR);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.params()[pi].name.clone(), i));
            }
        }
    }
    report
}
