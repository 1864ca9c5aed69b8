use super::{Grads, NnError, ParamStore};

/// AdamW hyperparameters with global-norm gradient clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Learning-rate multiplier for parameters named `log_z*`.
    pub log_z_lr_scale: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            clip_norm: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            log_z_lr_scale: 1.0,
        }
    }
}

impl AdamW {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipReport {
    pub pre_clip_norm: f64,
    pub scale: f64,
}

/// Clips `grads` to the configured global norm and applies one decoupled
/// weight-decay Adam update. Non-finite gradients abort before any state
/// is touched.
pub fn optim_step(store: &mut ParamStore, grads: &mut Grads, cfg: &AdamW) -> Result<ClipReport, NnError> {
    for (p, g) in store.params().iter().zip(&grads.data) {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFiniteGradient(p.name.clone()));
        }
    }
    let norm = grads.global_norm();
    let scale = if norm > cfg.clip_norm {
        cfg.clip_norm / norm
    } else {
        1.0
    };
    if scale != 1.0 {
        grads.scale(scale);
    }

    store.step += 1;
    let t = store.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for (p, g) in store.params_mut().iter_mut().zip(&grads.data) {
        let lr = if p.name.starts_with("log_z") {
            cfg.lr * cfg.log_z_lr_scale
        } else {
            cfg.lr
        };
        for (((w, m), v), &gi) in p.value.iter_mut().zip(&mut p.m).zip(&mut p.v).zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *w *= 1.0 - lr * cfg.weight_decay;
            *w -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(ClipReport {
        pre_clip_norm: norm,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ParamStore {
        let mut store = ParamStore::new();
        store.add("w", vec![2], vec![1.0, -2.0]);
        store
    }

    #[test]
    fn clips_to_global_norm() {
        let mut store = toy();
        let mut grads = store.zero_grads();
        grads.data[0] = vec![0.6, 0.8];
        let report = optim_step(&mut store, &mut grads, &AdamW::default()).unwrap();
        assert_eq!(report.pre_clip_norm, 1.0);
        assert_eq!(report.scale, 0.5);
        assert!((grads.data[0][0] - 0.3).abs() < 1e-15);
        assert!((grads.data[0][1] - 0.4).abs() < 1e-15);
        assert!(grads.global_norm() <= 0.5 + 1e-12);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut store = toy();
        let mut grads = store.zero_grads();
        let cfg = AdamW::default();
        optim_step(&mut store, &mut grads, &cfg).unwrap();
        let decay = 1.0 - cfg.lr * cfg.weight_decay;
        assert_eq!(store.params()[0].value, vec![1.0 * decay, -2.0 * decay]);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // g = (0.1, -0.2), norm 0.2236 < 0.5: no clipping.
        // m = 0.1 g, v = 0.001 g^2, bias corrections 0.1 and 0.001, so
        // m_hat = g and v_hat = g^2 and the Adam direction is g / (|g| + eps).
        let mut store = toy();
        let mut grads = store.zero_grads();
        grads.data[0] = vec![0.1, -0.2];
        let cfg = AdamW {
            lr: 0.01,
            ..AdamW::default()
        };
        optim_step(&mut store, &mut grads, &cfg).unwrap();
        let expected0 = 1.0 * (1.0 - 0.01 * 0.01) - 0.01 * 0.1 / (0.1 + 1e-8);
        let expected1 = -2.0 * (1.0 - 0.01 * 0.01) - 0.01 * -0.2 / (0.2 + 1e-8);
        let v = &store.params()[0].value;
        assert!((v[0] - expected0).abs() < 1e-15, "{} vs {}", v[0], expected0);
        assert!((v[1] - expected1).abs() < 1e-15, "{} vs {}", v[1], expected1);

        // Second step with the same gradient: m = 0.19 g, v = 0.001999 g^2,
        // corrections 0.19 and 0.001999, so the direction is again g/|g|.
        let before = v.clone();
        let mut grads = store.zero_grads();
        grads.data[0] = vec![0.1, -0.2];
        optim_step(&mut store, &mut grads, &cfg).unwrap();
        let v = &store.params()[0].value;
        let e0 = before[0] * (1.0 - 1e-4) - 0.01 * 0.1 / (0.1 + 1e-8);
        assert!((v[0] - e0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut store = toy();
        let mut grads = store.zero_grads();
        grads.data[0] = vec![f64::NAN, 0.0];
        let before = store.clone();
        assert!(matches!(
            optim_step(&mut store, &mut grads, &AdamW::default()),
            Err(NnError::NonFiniteGradient(_))
        ));
        assert_eq!(store, before);
    }
}
