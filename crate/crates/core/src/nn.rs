//! Point-weight feed-forward networks: ReLU hidden layers, linear logits,
//! softmax outputs. Used directly by the ensemble backend and, with sampled
//! weights, by the variational network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fully connected layer with row-major `outputs x inputs` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], batch: usize, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(batch * self.outputs);
        for row in x.chunks_exact(self.inputs).take(batch) {
            for o in 0..self.outputs {
                let w = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                let z: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum();
                out.push(z + self.bias[o]);
            }
        }
    }
}

/// Layer sizes `[inputs, hidden..., classes]` for an optional hidden layer.
pub fn layer_sizes(inputs: usize, hidden: Option<usize>, classes: usize) -> Vec<usize> {
    let mut sizes = vec![inputs];
    sizes.extend(hidden);
    sizes.push(classes);
    sizes
}

/// ReLU between layers, identity on the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Cached activations of one forward pass: `inputs[l]` feeds layer `l`,
/// `pre[l]` is its pre-activation.
pub struct Trace {
    pub batch: usize,
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn check_input(&self, features: &[f64]) -> Result<usize> {
        let d = self.input_dim();
        if !features.len().is_multiple_of(d) {
            return Err(Error::Model(format!(
                "feature buffer of length {} is not a multiple of the input dimension {d}",
                features.len()
            )));
        }
        Ok(features.len() / d)
    }

    pub fn forward_trace(&self, x: &[f64], batch: usize) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x[..batch * self.input_dim()].to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(&current, batch, &mut z);
            let next = if l + 1 < self.layers.len() {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        Trace { batch, inputs, pre }
    }

    /// Row-major `batch x classes` logits.
    pub fn logits(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut current = x[..batch * self.input_dim()].to_vec();
        let mut z = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward(&current, batch, &mut z);
            if l + 1 < self.layers.len() {
                current = z.iter().map(|v| v.max(0.0)).collect();
            }
        }
        z
    }

    /// One probability vector per row.
    pub fn predict_proba(&self, features: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.check_input(features)?;
        let c = self.classes();
        Ok(self
            .logits(features, n)
            .chunks_exact(c)
            .map(softmax)
            .collect())
    }

    /// Gradients of a scalar loss with respect to every weight and bias,
    /// given `d loss / d logits` (row-major `batch x classes`).
    pub fn backward(&self, trace: &Trace, dlogits: &[f64]) -> Vec<Dense> {
        let batch = trace.batch;
        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.inputs, l.outputs))
            .collect();
        let mut delta = dlogits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            let g = &mut grads[l];
            for b in 0..batch {
                let x = &input[b * layer.inputs..(b + 1) * layer.inputs];
                for o in 0..layer.outputs {
                    let d = delta[b * layer.outputs + o];
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weight[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through this layer's weights and the previous ReLU.
            let prev_pre = &trace.pre[l - 1];
            let mut next = vec![0.0; batch * layer.inputs];
            for b in 0..batch {
                for o in 0..layer.outputs {
                    let d = delta[b * layer.outputs + o];
                    if d == 0.0 {
                        continue;
                    }
                    let w = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                    for (i, wi) in w.iter().enumerate() {
                        next[b * layer.inputs + i] += d * wi;
                    }
                }
            }
            for (n, z) in next.iter_mut().zip(prev_pre) {
                if *z <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
        grads
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &[f64], labels: &[u8], classes: usize) -> (f64, Vec<f64>) {
    let batch = labels.len();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &y) in logits.chunks_exact(classes).zip(labels) {
        let lse = log_sum_exp(row);
        loss += lse - row[y as usize];
        for (c, z) in row.iter().enumerate() {
            let p = (z - lse).exp();
            let t = if c == y as usize { 1.0 } else { 0.0 };
            grad.push((p - t) / batch as f64);
        }
    }
    (loss / batch as f64, grad)
}

/// Index of the largest entry; the lower index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
