//! Deep ensembles: `T` point-weight networks trained independently on the
//! same data. Their softmax outputs stand in for Monte-Carlo draws.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayesnet::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, layer_sizes, Dense, Mlp};
use crate::optim::Adam;
use crate::rng::{self, Stream};
use crate::tabular::TabularDataset;
use crate::uncertainty::{collect_sets, PredictionSet};

pub const DEFAULT_MEMBERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicNet {
    pub mlp: Mlp,
}

impl DeterministicNet {
    /// Standard-normal weights and biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Model(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = rng::stream(seed, Stream::Init);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut d = Dense::zeros(w[0], w[1]);
                for v in d.weight.iter_mut().chain(d.bias.iter_mut()) {
                    *v = StandardNormal.sample(&mut rng);
                }
                d
            })
            .collect();
        Ok(Self { mlp: Mlp { layers } })
    }

    fn params(&self) -> Vec<f64> {
        self.mlp
            .layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }

    fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for l in &mut self.mlp.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().expect("parameter vector length");
            }
        }
    }

    pub fn predict_proba(&self, features: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.mlp.predict_proba(features)
    }
}

/// Minibatch Adam on plain cross-entropy; `config.seed` drives both the
/// initialization and the shuffles.
pub fn train_member(ds: &TabularDataset, config: &TrainConfig) -> Result<DeterministicNet> {
    config.validate()?;
    let sizes = layer_sizes(ds.dim(), config.hidden_width, 2);
    let mut net = DeterministicNet::init(&sizes, config.seed)?;
    let mut rng = rng::stream(config.seed, Stream::Train);
    let mut params = net.params();
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            features.clear();
            labels.clear();
            for &i in chunk {
                features.extend_from_slice(ds.row(i));
                labels.push(ds.labels()[i]);
            }
            let trace = net.mlp.forward_trace(&features, chunk.len());
            let (loss, dlogits) = cross_entropy(trace.logits(), &labels, 2);
            let grads: Vec<f64> = net
                .mlp
                .backward(&trace, &dlogits)
                .iter()
                .flat_map(|d| d.weight.iter().chain(&d.bias).copied())
                .collect();
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    detail: format!("epoch {epoch}, batch {b}: cross-entropy {loss}"),
                });
            }
            adam.step(&mut params, &grads);
            net.set_params(&params);
        }
    }
    Ok(net)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<DeterministicNet>,
}

impl Ensemble {
    pub fn new(members: Vec<DeterministicNet>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Model("an ensemble needs at least one member".into()))?;
        let shape = |m: &DeterministicNet| -> Vec<(usize, usize)> {
            m.mlp.layers.iter().map(|l| (l.inputs, l.outputs)).collect()
        };
        let want = shape(first);
        if let Some(i) = members.iter().position(|m| shape(m) != want) {
            return Err(Error::Model(format!("member {i} has a different architecture")));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Member `i` trains with seed `config.seed + i`.
pub fn train_ensemble(ds: &TabularDataset, config: &TrainConfig, members: usize) -> Result<Ensemble> {
    let seeds: Vec<u64> = (0..members as u64).map(|i| config.seed.wrapping_add(i)).collect();
    train_ensemble_with_seeds(ds, config, &seeds)
}

pub fn train_ensemble_with_seeds(
    ds: &TabularDataset,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<Ensemble> {
    if seeds.is_empty() {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    let members = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            train_member(ds, &cfg).map_err(|e| Error::Member {
                member: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

/// Row `m` of each sample's set is member `m`'s softmax output.
pub fn ensemble_predict(ens: &Ensemble, features: &[f64]) -> Result<Vec<PredictionSet>> {
    let per_member = ens
        .members
        .iter()
        .map(|m| m.predict_proba(features))
        .collect::<Result<Vec<_>>>()?;
    collect_sets(per_member)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::decompose;

    fn net_with_logit_bias(b0: f64, b1: f64) -> DeterministicNet {
        let mut d = Dense::zeros(1, 2);
        d.bias = vec![b0, b1];
        DeterministicNet {
            mlp: Mlp { layers: vec![d] },
        }
    }

    #[test]
    fn worked_example_through_ensemble() {
        // softmax([ln 0.8, ln 0.2]) = (0.8, 0.2)
        let ens = Ensemble::new(vec![
            net_with_logit_bias(0.8f64.ln(), 0.2f64.ln()),
            net_with_logit_bias(0.6f64.ln(), 0.4f64.ln()),
        ])
        .unwrap();
        let sets = ensemble_predict(&ens, &[3.0]).unwrap();
        let d = decompose(&sets[0]);
        assert!((d.epistemic - 0.02).abs() < 1e-12);
        assert!((d.aleatoric - 0.40).abs() < 1e-12);
        assert!((d.predictive - 0.42).abs() < 1e-12);
    }

    #[test]
    fn identical_members_have_identical_rows() {
        let m = DeterministicNet::init(&[2, 3, 2], 9).unwrap();
        let ens = Ensemble::new(vec![m.clone(), m]).unwrap();
        let sets = ensemble_predict(&ens, &[0.3, -1.0, 2.0, 2.0]).unwrap();
        for s in &sets {
            assert_eq!(s.row(0), s.row(1));
            assert_eq!(decompose(s).epistemic, 0.0);
        }
        assert!(ensemble_predict(&ens, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn rejects_mixed_architectures() {
        let a = DeterministicNet::init(&[2, 2], 1).unwrap();
        let b = DeterministicNet::init(&[2, 4, 2], 1).unwrap();
        assert!(Ensemble::new(vec![a, b]).is_err());
        assert!(Ensemble::new(vec![]).is_err());
    }

    #[test]
    fn member_failure_names_index() {
        let ds = TabularDataset::from_rows(&[vec![0.0], vec![1.0]], vec![0, 1], vec![0, 1], "t").unwrap();
        let cfg = TrainConfig {
            learning_rate: f64::INFINITY,
            ..TrainConfig::default()
        };
        let err = train_ensemble(&ds, &cfg, 2).unwrap_err();
        assert!(matches!(err, Error::Member { member: 0, .. } | Error::Member { member: 1, .. }));
    }
}
