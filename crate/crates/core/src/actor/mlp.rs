//! Fully connected network with rectifier hidden layers and a logistic
//! output, trained on binary cross-entropy with Adam.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ActorError;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside logs.
pub const PROB_CLAMP: f64 = 1e-9;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.biases
                .iter()
                .zip(self.weights.chunks_exact(self.inputs))
                .map(|(&b, row)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()),
        );
    }
}

/// Network parameters. Layer sizes run from the input width to the action width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Zero-mean normal initialization with standard deviation `1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut params = Self::zeros(sizes);
        for layer in &mut params.layers {
            let normal = Normal::new(0.0, 1.0 / (layer.inputs as f64).sqrt()).expect("finite scale");
            for w in &mut layer.weights {
                *w = normal.sample(rng);
            }
        }
        params
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least an input and an output width");
        Self { layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// All parameters in a fixed order: per layer, weights then biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ActorError> {
        if x.len() != self.input_dim() {
            return Err(ActorError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Relaxed action in `(0, 1)^M`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ActorError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if idx < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur.into_iter().map(logistic).collect())
    }

    /// Mean over the batch of the summed per-bit cross-entropy.
    pub fn loss(&self, inputs: &[&[f64]], targets: &[&[f64]]) -> Result<f64, ActorError> {
        let mut total = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            let p = self.forward(x)?;
            total += cross_entropy(&p, y);
        }
        Ok(total / inputs.len() as f64)
    }

    /// Loss and its gradient by backpropagation.
    pub fn loss_and_grad(&self, inputs: &[&[f64]], targets: &[&[f64]]) -> Result<(f64, Gradients), ActorError> {
        let n = inputs.len();
        if n == 0 {
            return Err(ActorError::InsufficientData { have: 0, need: 1 });
        }
        let scale = 1.0 / n as f64;
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        let depth = self.layers.len();
        // activations[l] is the input of layer l; pre[l] its pre-activation output.
        let mut activations: Vec<Vec<f64>> = vec![Vec::new(); depth + 1];
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); depth];
        for (x, y) in inputs.iter().zip(targets) {
            self.check_input(x)?;
            if y.len() != self.output_dim() {
                return Err(ActorError::DimensionMismatch { expected: self.output_dim(), got: y.len() });
            }
            activations[0].clear();
            activations[0].extend_from_slice(x);
            for l in 0..depth {
                let (head, tail) = activations.split_at_mut(l + 1);
                self.layers[l].apply(&head[l], &mut pre[l]);
                let out = &mut tail[0];
                out.clear();
                if l + 1 < depth {
                    out.extend(pre[l].iter().map(|v| v.max(0.0)));
                } else {
                    out.extend(pre[l].iter().map(|&v| logistic(v)));
                }
            }
            let p = &activations[depth];
            total += cross_entropy(p, y);

            let mut delta: Vec<f64> = p
                .iter()
                .zip(y.iter())
                .map(|(&pi, &yi)| if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pi) { 0.0 } else { (pi - yi) * scale })
                .collect();
            for l in (0..depth).rev() {
                let layer = &self.layers[l];
                let input = &activations[l];
                let g = &mut grads.layers[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(w, &a)| *w += d * a);
                }
                if l == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    prev.iter_mut().zip(row).for_each(|(p, &w)| *p += w * d);
                }
                for (p, &z) in prev.iter_mut().zip(&pre[l - 1]) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((total * scale, grads))
    }
}

/// Summed binary cross-entropy of one prediction with clamped logs.
pub fn cross_entropy(p: &[f64], target: &[f64]) -> f64 {
    p.iter()
        .zip(target)
        .map(|(&pi, &yi)| {
            let pc = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln())
        })
        .sum()
}

/// Same shape as [`MlpParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self { layers: params.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }
}

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
        }
    }

    pub fn update(&mut self, params: &mut MlpParams, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let lr_t = self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let bias_fix2 = (1.0 - self.beta2.powi(t)).sqrt();
        for (((p, g), m), v) in
            params.layers.iter_mut().zip(&grads.layers).zip(&mut self.m.layers).zip(&mut self.v.layers)
        {
            let params_iter = p.weights.iter_mut().chain(p.biases.iter_mut());
            let grads_iter = g.weights.iter().chain(&g.biases);
            let m_iter = m.weights.iter_mut().chain(m.biases.iter_mut());
            let v_iter = v.weights.iter_mut().chain(v.biases.iter_mut());
            for (((w, &gi), mi), vi) in params_iter.zip(grads_iter).zip(m_iter).zip(v_iter) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                // Same as lr * m_hat / (sqrt(v_hat) + eps).
                *w -= lr_t * *mi / (vi.sqrt() + eps * bias_fix2);
            }
        }
    }
}
