use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::prior::ScaleMixturePrior;
use crate::error::{Error, Result};
use crate::nn::{Dense, Mlp};
use crate::rng::Rng;

/// `softplus(rho) = ln(1 + e^rho)`, evaluated without overflow or
/// cancellation.
pub fn softplus(rho: f64) -> f64 {
    if rho > 0.0 {
        rho + (-rho).exp().ln_1p()
    } else {
        rho.exp().ln_1p()
    }
}

/// Derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A linear layer whose every weight is an independent Gaussian
/// `N(mu, softplus(rho)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_mu: Vec<f64>,
    pub weight_rho: Vec<f64>,
    pub bias_mu: Vec<f64>,
    pub bias_rho: Vec<f64>,
}

impl VariationalLayer {
    pub fn scalars(&self) -> usize {
        self.weight_mu.len() + self.bias_mu.len()
    }

    fn check(&self) -> Result<()> {
        let w = self.inputs * self.outputs;
        if self.weight_mu.len() != w
            || self.weight_rho.len() != w
            || self.bias_mu.len() != self.outputs
            || self.bias_rho.len() != self.outputs
        {
            return Err(Error::Model(format!(
                "layer {}x{} has inconsistent parameter shapes",
                self.outputs, self.inputs
            )));
        }
        Ok(())
    }
}

/// Feed-forward classifier with variational weights, ReLU hidden layers and
/// softmax outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalNet {
    pub layers: Vec<VariationalLayer>,
    pub prior: ScaleMixturePrior,
}

/// One draw of concrete weights together with the standard-normal noise that
/// produced it (`weight = mu + softplus(rho) * noise`). `noise` follows the
/// flat scalar order: per layer, weights then biases.
#[derive(Debug, Clone)]
pub struct ConcreteWeights {
    pub mlp: Mlp,
    pub noise: Vec<f64>,
}

impl VariationalNet {
    /// Means drawn from `N(0, 1)`, every `rho` set to `rho_init`.
    pub fn init(
        sizes: &[usize],
        prior: ScaleMixturePrior,
        rho_init: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Model(format!("invalid layer sizes {sizes:?}")));
        }
        prior.validate()?;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                VariationalLayer {
                    inputs,
                    outputs,
                    weight_mu: draw(inputs * outputs),
                    weight_rho: vec![rho_init; inputs * outputs],
                    bias_mu: draw(outputs),
                    bias_rho: vec![rho_init; outputs],
                }
            })
            .collect();
        Ok(Self { layers, prior })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Model("network has no layers".into()));
        }
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Model(format!("layer {l} does not feed layer {}", l + 1)));
            }
        }
        for layer in &self.layers {
            layer.check()?;
        }
        self.prior.validate()
    }

    /// Number of weight and bias scalars (each has a `mu` and a `rho`).
    pub fn scalar_count(&self) -> usize {
        self.layers.iter().map(VariationalLayer::scalars).sum()
    }

    /// Number of trainable parameters: `2 * scalar_count()`.
    pub fn param_count(&self) -> usize {
        2 * self.scalar_count()
    }

    /// Flat parameters, per layer: `weight_mu, weight_rho, bias_mu, bias_rho`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weight_mu);
            out.extend_from_slice(&l.weight_rho);
            out.extend_from_slice(&l.bias_mu);
            out.extend_from_slice(&l.bias_rho);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for buf in [
                &mut l.weight_mu,
                &mut l.weight_rho,
                &mut l.bias_mu,
                &mut l.bias_rho,
            ] {
                for v in buf.iter_mut() {
                    *v = it.next().expect("length checked");
                }
            }
        }
    }

    /// Human-readable location of flat parameter `index`.
    pub fn describe_param(&self, mut index: usize) -> String {
        for (l, layer) in self.layers.iter().enumerate() {
            let w = layer.weight_mu.len();
            let b = layer.bias_mu.len();
            for (name, len) in [
                ("weight_mu", w),
                ("weight_rho", w),
                ("bias_mu", b),
                ("bias_rho", b),
            ] {
                if index < len {
                    return format!("layer {l} {name}[{index}]");
                }
                index -= len;
            }
        }
        "out of range".into()
    }

    /// Weights set to the posterior means.
    pub fn mean_mlp(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weight: l.weight_mu.clone(),
                    bias: l.bias_mu.clone(),
                })
                .collect(),
        }
    }

    /// Concrete weights for a given flat noise vector.
    pub fn weights_from_noise(&self, noise: Vec<f64>) -> ConcreteWeights {
        assert_eq!(noise.len(), self.scalar_count(), "noise length mismatch");
        let mut it = noise.iter().copied();
        let mut realize = |mu: &[f64], rho: &[f64]| -> Vec<f64> {
            mu.iter()
                .zip(rho)
                .map(|(m, r)| m + softplus(*r) * it.next().expect("length checked"))
                .collect()
        };
        let layers = self
            .layers
            .iter()
            .map(|l| Dense {
                inputs: l.inputs,
                outputs: l.outputs,
                weight: realize(&l.weight_mu, &l.weight_rho),
                bias: realize(&l.bias_mu, &l.bias_rho),
            })
            .collect();
        ConcreteWeights {
            mlp: Mlp { layers },
            noise,
        }
    }

    pub fn draw_noise(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.scalar_count())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// One reparameterized weight draw `mu + softplus(rho) * noise`.
pub fn sample_weights(net: &VariationalNet, rng: &mut Rng) -> ConcreteWeights {
    let noise = net.draw_noise(rng);
    net.weights_from_noise(noise)
}

/// Class probabilities under the posterior-mean weights.
pub fn predict_point(net: &VariationalNet, features: &[f64]) -> Result<Vec<Vec<f64>>> {
    net.mean_mlp().predict_proba(features)
}
