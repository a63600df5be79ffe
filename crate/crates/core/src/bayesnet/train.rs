use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::VariationalNet;
use super::objective::{elbo_loss, Batch};
use super::prior::ScaleMixturePrior;
use crate::error::{Error, Result};
use crate::nn::layer_sizes;
use crate::optim::Adam;
use crate::rng::{self, Stream};
use crate::tabular::TabularDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the per-draw negative log-likelihood.
    pub lambda: f64,
    /// Monte-Carlo weight draws per objective evaluation.
    pub mc_train_samples: usize,
    pub seed: u64,
    pub hidden_width: Option<usize>,
    pub rho_init: f64,
    pub prior: ScaleMixturePrior,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 8,
            learning_rate: 0.001,
            lambda: 2000.0,
            mc_train_samples: 10,
            seed: 0,
            hidden_width: None,
            rho_init: -3.0,
            prior: ScaleMixturePrior::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.mc_train_samples == 0 {
            return Err(Error::Config(
                "batch_size and mc_train_samples must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::Config("learning_rate and lambda must be positive".into()));
        }
        if self.hidden_width == Some(0) {
            return Err(Error::Config("hidden_width must be positive".into()));
        }
        if !self.rho_init.is_finite() {
            return Err(Error::Config("rho_init must be finite".into()));
        }
        self.prior.validate()
    }
}

/// Per-epoch mean objective values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
}

/// The network `train` starts from for `config` on `dim` input features.
pub fn initial_net(dim: usize, config: &TrainConfig) -> Result<VariationalNet> {
    VariationalNet::init(
        &layer_sizes(dim, config.hidden_width, 2),
        config.prior,
        config.rho_init,
        &mut rng::stream(config.seed, Stream::Init),
    )
}

/// Minibatch Adam on the variational objective.
pub fn train(train_ds: &TabularDataset, config: &TrainConfig) -> Result<VariationalNet> {
    train_with_history(train_ds, config).map(|(net, _)| net)
}

pub fn train_with_history(
    train_ds: &TabularDataset,
    config: &TrainConfig,
) -> Result<(VariationalNet, TrainHistory)> {
    config.validate()?;
    let mut net = initial_net(train_ds.dim(), config)?;
    let mut rng = rng::stream(config.seed, Stream::Train);
    let mut adam = Adam::new(net.param_count(), config.learning_rate);
    let mut params = net.params();
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut history = TrainHistory::default();
    let dim = train_ds.dim();
    let mut features = Vec::with_capacity(config.batch_size * dim);
    let mut labels = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            features.clear();
            labels.clear();
            for &i in chunk {
                features.extend_from_slice(train_ds.row(i));
                labels.push(train_ds.labels()[i]);
            }
            let batch = Batch {
                features: &features,
                labels: &labels,
            };
            let (loss, grad) = elbo_loss(&net, batch, config, &mut rng).map_err(|e| match e {
                Error::NonFinite { detail } => Error::NonFinite {
                    detail: format!("epoch {epoch}, batch {batches}: {detail}"),
                },
                other => other,
            })?;
            adam.step(&mut params, &grad);
            net.set_params(&params);
            total += loss;
            batches += 1;
        }
        let mean = total / batches.max(1) as f64;
        debug!("epoch {epoch}: mean objective {mean:.4}");
        history.epoch_loss.push(mean);
    }
    Ok((net, history))
}

/// Mean cross-entropy of the posterior-mean network on `ds`.
pub fn mean_point_nll(net: &VariationalNet, ds: &TabularDataset) -> f64 {
    let mlp = net.mean_mlp();
    let logits = mlp.logits(ds.features(), ds.len());
    crate::nn::cross_entropy(&logits, ds.labels(), net.classes()).0
}
