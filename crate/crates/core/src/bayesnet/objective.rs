//! The variational training objective
//!
//! ```text
//! L = sum_{m=1..M} [ log q(w_m) - log P(w_m) + lambda * NLL_m ]
//! ```
//!
//! with `w_m = mu + softplus(rho) * eps_m`, a diagonal Gaussian `q`, the
//! scale-mixture prior `P`, and `NLL_m` the batch-mean cross-entropy under
//! draw `m`. Gradients are taken with `eps_m` held fixed.

use super::net::{sigmoid, softplus, VariationalNet};
use super::prior::log_normal;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::cross_entropy;
use crate::rng::Rng;

/// Row-major features plus labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: &'a [f64],
    pub labels: &'a [u8],
}

/// The objective split into its summed components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub log_q: f64,
    pub log_prior: f64,
    /// `sum_m NLL_m`, before the `lambda` factor.
    pub nll: f64,
}

/// Draws `config.mc_train_samples` noise vectors from `rng` and evaluates
/// the objective and its gradient w.r.t. the flat parameters.
pub fn elbo_loss(
    net: &VariationalNet,
    batch: Batch<'_>,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<(f64, Vec<f64>)> {
    let noises: Vec<Vec<f64>> = (0..config.mc_train_samples)
        .map(|_| net.draw_noise(rng))
        .collect();
    let (terms, grad) = elbo_with_noise(net, batch, config.lambda, &noises)?;
    Ok((terms.total, grad))
}

/// The objective for explicit noise draws (one flat vector per MC sample).
pub fn elbo_with_noise(
    net: &VariationalNet,
    batch: Batch<'_>,
    lambda: f64,
    noises: &[Vec<f64>],
) -> Result<(LossTerms, Vec<f64>)> {
    let rows = batch.labels.len();
    if rows == 0 {
        return Err(Error::Model("empty batch".into()));
    }
    if batch.features.len() != rows * net.input_dim() {
        return Err(Error::Model(format!(
            "batch has {} feature values for {rows} rows of dimension {}",
            batch.features.len(),
            net.input_dim()
        )));
    }
    let classes = net.classes();
    if let Some(&y) = batch.labels.iter().find(|&&y| y as usize >= classes) {
        return Err(Error::Model(format!("label {y} outside {classes} classes")));
    }

    // sigma and d sigma / d rho in flat scalar order.
    let mut sigma = Vec::with_capacity(net.scalar_count());
    let mut dsigma = Vec::with_capacity(net.scalar_count());
    for l in &net.layers {
        for r in l.weight_rho.iter().chain(&l.bias_rho) {
            sigma.push(softplus(*r));
            dsigma.push(sigmoid(*r));
        }
    }

    let scalars = net.scalar_count();
    let mut g_mu = vec![0.0; scalars];
    let mut g_rho = vec![0.0; scalars];
    let mut terms = LossTerms {
        total: 0.0,
        log_q: 0.0,
        log_prior: 0.0,
        nll: 0.0,
    };

    for noise in noises {
        let draw = net.weights_from_noise(noise.clone());
        let trace = draw.mlp.forward_trace(batch.features, rows);
        let (nll, dlogits) = cross_entropy(trace.logits(), batch.labels, classes);
        let dlogits: Vec<f64> = dlogits.iter().map(|g| lambda * g).collect();
        let grads = draw.mlp.backward(&trace, &dlogits);

        // Data-term gradient w.r.t. each concrete weight, flat order.
        let g_data = grads
            .iter()
            .flat_map(|d| d.weight.iter().chain(&d.bias).copied());
        let weights = draw
            .mlp
            .layers
            .iter()
            .flat_map(|d| d.weight.iter().chain(&d.bias).copied());

        for (i, (gd, w)) in g_data.zip(weights).enumerate() {
            let eps = noise[i];
            let (lp, dlp) = net.prior.log_density_and_grad(w);
            // log q(w) at w = mu + sigma * eps, written through eps so that
            // tiny sigma does not lose (w - mu) to rounding.
            terms.log_q += log_normal(eps, 0.0, 1.0) - sigma[i].ln();
            terms.log_prior += lp;
            let g_w = gd - dlp;
            g_mu[i] += g_w;
            // d/d rho of -ln(sigma) from log q, plus the path through w.
            g_rho[i] += g_w * eps * dsigma[i] - dsigma[i] / sigma[i];
        }
        terms.nll += nll;
    }
    terms.total = terms.log_q - terms.log_prior + lambda * terms.nll;

    let grad = scatter(net, &g_mu, &g_rho);
    if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        let params = net.params();
        // A non-finite parameter is the likelier root cause than a gradient
        // it contaminated.
        let culprit = params
            .iter()
            .position(|p| !p.is_finite())
            .or_else(|| grad.iter().position(|g| !g.is_finite()))
            .map(|i| format!("parameter {i} ({})", net.describe_param(i)))
            .unwrap_or_else(|| "no single parameter".into());
        return Err(Error::NonFinite {
            detail: format!(
                "log_q={}, log_prior={}, nll={}; first offending {culprit}",
                terms.log_q, terms.log_prior, terms.nll
            ),
        });
    }
    Ok((terms, grad))
}

/// Interleaves per-scalar `mu` and `rho` gradients into the flat parameter
/// order of [`VariationalNet::params`].
fn scatter(net: &VariationalNet, g_mu: &[f64], g_rho: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(net.param_count());
    let mut offset = 0;
    for l in &net.layers {
        let w = l.weight_mu.len();
        let b = l.bias_mu.len();
        out.extend_from_slice(&g_mu[offset..offset + w]);
        out.extend_from_slice(&g_rho[offset..offset + w]);
        out.extend_from_slice(&g_mu[offset + w..offset + w + b]);
        out.extend_from_slice(&g_rho[offset + w..offset + w + b]);
        offset += w + b;
    }
    out
}

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central finite difference of [`elbo_loss`] in flat parameter `index`.
/// Both evaluations start from a clone of `rng`, so they see identical noise.
pub fn numeric_grad(
    net: &VariationalNet,
    batch: Batch<'_>,
    config: &TrainConfig,
    index: usize,
    h: f64,
    rng: &Rng,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Model(format!("finite-difference step must be positive, got {h}")));
    }
    if index >= net.param_count() {
        return Err(Error::Model(format!("parameter index {index} out of range")));
    }
    let base = net.params();
    let mut probe = net.clone();
    let mut failure = None;
    let g = central_difference(
        |v| {
            let mut p = base.clone();
            p[index] = v;
            probe.set_params(&p);
            match elbo_loss(&probe, batch, config, &mut rng.clone()) {
                Ok((loss, _)) => loss,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        },
        base[index],
        h,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(g),
    }
}
