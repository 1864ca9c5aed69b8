//! A small f64 neural-network substrate: a named parameter store, dense
//! layers, a two-hidden-layer tanh MLP with hand-written reverse mode,
//! AdamW with global-norm clipping, and a finite-difference checker.

mod gradcheck;
mod ops;
mod optim;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use ops::{accumulate_log_prob_grad, dot, log_softmax, logsumexp, softmax};
pub use optim::{optim_step, AdamW, ClipReport};

pub const HIDDEN_WIDTH: usize = 128;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("checkpoint version {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint is missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    /// AdamW first moment.
    pub m: Vec<f64>,
    /// AdamW second moment.
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named dense tensors plus their optimizer state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
    /// Number of optimizer steps taken so far.
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> ParamId {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), value.len(), "shape of `{name}`");
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter `{name}`"
        );
        let n = value.len();
        self.params.push(Param {
            name,
            shape,
            value,
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        ParamId(self.params.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].value
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            data: self.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        for p in &mut self.params {
            p.value.iter_mut().for_each(|x| *x = value);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.value.iter().all(|x| x.is_finite()))
    }

    /// SHA-256 over parameter names, shapes and value bits.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.params {
            hasher.update(p.name.as_bytes());
            for &d in &p.shape {
                hasher.update((d as u64).to_le_bytes());
            }
            for &x in &p.value {
                hasher.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Copies values (and optimizer state) from `other`, matching by name.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<(), NnError> {
        for p in &mut self.params {
            let src = other
                .params
                .iter()
                .find(|q| q.name == p.name)
                .ok_or_else(|| NnError::MissingParam(p.name.clone()))?;
            if src.shape != p.shape {
                return Err(NnError::ShapeMismatch {
                    name: p.name.clone(),
                    found: src.shape.clone(),
                    expected: p.shape.clone(),
                });
            }
            p.value.clone_from(&src.value);
            p.m.clone_from(&src.m);
            p.v.clone_from(&src.v);
        }
        self.step = other.step;
        Ok(())
    }
}

/// Gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn global_norm(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.data {
            g.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Fully connected layer `y = W x + b` with `W` stored row-major (out × in).
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    /// Registers a layer with Glorot-uniform weights scaled by `gain` and
    /// zero biases.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = gain * (6.0 / (inputs + outputs) as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let weight = store.add(format!("{name}.weight"), vec![outputs, inputs], w);
        let bias = store.add(format!("{name}.bias"), vec![outputs], vec![0.0; outputs]);
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.inputs, "dense input dimension");
        let w = store.get(self.weight);
        let b = store.get(self.bias);
        (0..self.outputs)
            .map(|o| b[o] + dot(&w[o * self.inputs..(o + 1) * self.inputs], x))
            .collect()
    }

    /// Accumulates parameter gradients for upstream gradient `dy` and
    /// returns the gradient with respect to `x`.
    pub fn backward(&self, store: &ParamStore, x: &[f64], dy: &[f64], grads: &mut Grads) -> Vec<f64> {
        let w = store.get(self.weight);
        let mut dx = vec![0.0; self.inputs];
        {
            let gw = grads.get_mut(self.weight);
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = o * self.inputs;
                for i in 0..self.inputs {
                    gw[row + i] += g * x[i];
                    dx[i] += g * w[row + i];
                }
            }
        }
        let gb = grads.get_mut(self.bias);
        for (b, &g) in gb.iter_mut().zip(dy) {
            *b += g;
        }
        dx
    }
}

/// Layer widths of an [`Mlp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

/// Two tanh hidden layers and a linear output head.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub shape: MlpShape,
    l1: Dense,
    l2: Dense,
    out: Dense,
}

/// Activations recorded by [`Mlp::forward`]; enough for an exact backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    pub input: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Tape {
    /// Last hidden activation.
    pub fn hidden(&self) -> &[f64] {
        &self.h2
    }
}

impl Mlp {
    pub fn new(store: &mut ParamStore, prefix: &str, shape: MlpShape, rng: &mut impl Rng) -> Self {
        let l1 = Dense::new(store, &format!("{prefix}.l1"), shape.inputs, shape.hidden, 1.0, rng);
        let l2 = Dense::new(store, &format!("{prefix}.l2"), shape.hidden, shape.hidden, 1.0, rng);
        let out = Dense::new(store, &format!("{prefix}.out"), shape.hidden, shape.outputs, 0.1, rng);
        Self { shape, l1, l2, out }
    }

    pub fn output_layer(&self) -> &Dense {
        &self.out
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Tape {
        let h1: Vec<f64> = self.l1.forward(store, x).into_iter().map(f64::tanh).collect();
        let h2: Vec<f64> = self.l2.forward(store, &h1).into_iter().map(f64::tanh).collect();
        let logits = self.out.forward(store, &h2);
        Tape {
            input: x.to_vec(),
            h1,
            h2,
            logits,
        }
    }

    /// Reverse pass for upstream gradients on the logits and, optionally,
    /// on the last hidden layer (heads that read the hidden state).
    pub fn backward(
        &self,
        store: &ParamStore,
        tape: &Tape,
        d_logits: &[f64],
        d_hidden: Option<&[f64]>,
        grads: &mut Grads,
    ) {
        let mut dh2 = self.out.backward(store, &tape.h2, d_logits, grads);
        if let Some(extra) = d_hidden {
            for (d, e) in dh2.iter_mut().zip(extra) {
                *d += e;
            }
        }
        let dz2: Vec<f64> = dh2
            .iter()
            .zip(&tape.h2)
            .map(|(d, h)| d * (1.0 - h * h))
            .collect();
        let dh1 = self.l2.backward(store, &tape.h1, &dz2, grads);
        let dz1: Vec<f64> = dh1
            .iter()
            .zip(&tape.h1)
            .map(|(d, h)| d * (1.0 - h * h))
            .collect();
        self.l1.backward(store, &tape.input, &dz1, grads);
    }
}

/// Linear map from the hidden layer to a scalar (log Z and value heads).
#[derive(Debug, Clone, Copy)]
pub struct ScalarHead {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ScalarHead {
    /// Zero-initialized head.
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), vec![inputs], vec![0.0; inputs]);
        let bias = store.add(format!("{name}.bias"), vec![1], vec![0.0]);
        Self { weight, bias }
    }

    pub fn forward(&self, store: &ParamStore, hidden: &[f64]) -> f64 {
        dot(store.get(self.weight), hidden) + store.get(self.bias)[0]
    }

    /// Accumulates parameter gradients and returns the hidden-layer gradient.
    pub fn backward(&self, store: &ParamStore, hidden: &[f64], dy: f64, grads: &mut Grads) -> Vec<f64> {
        for (g, h) in grads.get_mut(self.weight).iter_mut().zip(hidden) {
            *g += dy * h;
        }
        grads.get_mut(self.bias)[0] += dy;
        store.get(self.weight).iter().map(|w| dy * w).collect()
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk checkpoint: a versioned JSON document of named arrays,
/// optimizer moments and free-form metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: String,
    pub meta: serde_json::Value,
    pub store: ParamStore,
}

impl Checkpoint {
    pub fn new(kind: &str, meta: serde_json::Value, store: ParamStore) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            meta,
            store,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(NnError::CheckpointVersion {
                found: ckpt.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> (ParamStore, Mlp) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = Mlp::new(
            &mut store,
            "mlp",
            MlpShape {
                inputs: 5,
                hidden: 7,
                outputs: 4,
            },
            &mut rng,
        );
        (store, mlp)
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let (mut store, mlp) = small();
        store.fill(0.0);
        let tape = mlp.forward(&store, &[1.0, -2.0, 0.5, 3.0, 0.0]);
        assert!(tape.logits.iter().all(|&l| l == 0.0));
        for p in softmax(&tape.logits) {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn seeded_forward_is_bitwise_deterministic() {
        let (s1, m1) = small();
        let (s2, m2) = small();
        let x = [0.3, 0.1, -0.7, 2.0, 1.0];
        let a = m1.forward(&s1, &x).logits;
        let b = m2.forward(&s2, &x).logits;
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn linear_loss_output_gradient_is_closed_form() {
        // loss = c . logits, so dloss/dW_out[o][i] = c[o] * h2[i].
        let (store, mlp) = small();
        let x = [0.3, 0.1, -0.7, 2.0, 1.0];
        let c = [0.5, -1.0, 2.0, 0.25];
        let tape = mlp.forward(&store, &x);
        let mut grads = store.zero_grads();
        mlp.backward(&store, &tape, &c, None, &mut grads);
        let gw = grads.get(mlp.output_layer().weight);
        for o in 0..4 {
            for i in 0..7 {
                assert!((gw[o * 7 + i] - c[o] * tape.h2[i]).abs() < 1e-15);
            }
        }
        assert_eq!(grads.get(mlp.output_layer().bias), &c);
    }

    #[test]
    fn backward_is_repeatable_and_matches_finite_differences() {
        let (store, mlp) = small();
        let x = [0.3, 0.1, -0.7, 2.0, 1.0];
        let target = 2;
        let loss = |s: &ParamStore| -log_softmax(&mlp.forward(s, &x).logits)[target];
        let grad = |s: &ParamStore| {
            let tape = mlp.forward(s, &x);
            let probs = softmax(&tape.logits);
            let mut d = vec![0.0; probs.len()];
            accumulate_log_prob_grad(&probs, target, -1.0, &mut d);
            let mut g = s.zero_grads();
            mlp.backward(s, &tape, &d, None, &mut g);
            g
        };
        let g1 = grad(&store);
        let g2 = grad(&store);
        assert_eq!(g1, g2);
        let report = finite_difference_check(&store, &g1, loss, 1e-5, None);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let (mut store, _) = small();
        store.params_mut()[0].m[3] = 1.0 / 3.0;
        store.params_mut()[0].v[3] = 1e-300;
        store.step = 17;
        let ckpt = Checkpoint::new("test", serde_json::json!({"k": 1}), store.clone());
        let back = Checkpoint::from_json(&ckpt.to_json()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.store.content_hash(), store.content_hash());
    }

    #[test]
    fn load_from_checks_shapes() {
        let (mut a, _) = small();
        let mut other = ParamStore::new();
        other.add("mlp.l1.weight", vec![1], vec![0.0]);
        assert!(a.load_from(&other).is_err());
    }
}
