use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use uqfair::bayesnet::{
    elbo_loss, elbo_with_noise, initial_net, mean_point_nll, numeric_grad, softplus, train,
    train_with_history, Batch, ScaleMixturePrior, TrainConfig, VariationalNet,
};
use uqfair::nn::{argmax, layer_sizes};
use uqfair::rng;
use uqfair::synthgen::{generate_scenario, ComponentSpec, GaussianComponentSpec, ScenarioSpec};
use uqfair::tabular::TabularDataset;

fn random_batch(rows: usize, dim: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut r = Xoshiro256PlusPlus::seed_from_u64(seed);
    let x = (0..rows * dim).map(|_| r.random_range(-2.0..2.0)).collect();
    let y = (0..rows).map(|i| (i % 2) as u8).collect();
    (x, y)
}

fn small_config(hidden: Option<usize>) -> TrainConfig {
    TrainConfig {
        mc_train_samples: 2,
        hidden_width: hidden,
        ..TrainConfig::default()
    }
}

/// Parameters violating `|a - n| <= 1e-4 * max(|a|, |n|)` with a 1e-8
/// absolute floor.
fn gradient_violations(net: &VariationalNet, x: &[f64], y: &[u8], cfg: &TrainConfig, seed: u64) -> Vec<String> {
    let batch = Batch { features: x, labels: y };
    let pinned = rng::seeded(seed);
    let (_, analytic) = elbo_loss(net, batch, cfg, &mut pinned.clone()).unwrap();
    let mut bad = Vec::new();
    for (i, a) in analytic.iter().enumerate() {
        let n = numeric_grad(net, batch, cfg, i, 1e-5, &pinned).unwrap();
        let err = (a - n).abs();
        if err > 1e-8 && err > 1e-4 * a.abs().max(n.abs()) {
            bad.push(format!("param {i} ({}): analytic {a}, numeric {n}", net.describe_param(i)));
        }
    }
    bad
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 12,
        rng_seed: RngSeed::Fixed(20),
        ..ProptestConfig::default()
    })]

    #[test]
    fn analytic_gradients_match_finite_differences(
        dim in 1usize..=10,
        hidden in prop::option::of(1usize..=10),
        seed in any::<u64>(),
    ) {
        let cfg = small_config(hidden);
        let net = VariationalNet::init(
            &layer_sizes(dim, hidden, 2),
            cfg.prior,
            cfg.rho_init,
            &mut rng::seeded(seed),
        ).unwrap();
        let (x, y) = random_batch(8, dim, seed ^ 1);
        let bad = gradient_violations(&net, &x, &y, &cfg, seed ^ 2);
        prop_assert!(bad.is_empty(), "{}", bad.join("\n"));
    }
}

proptest! {
    #[test]
    fn softplus_is_positive(rho in -700.0f64..700.0) {
        prop_assert!(softplus(rho) > 0.0);
    }

    #[test]
    fn vanishing_sigma_makes_nll_noise_free(seed in any::<u64>(), other in any::<u64>()) {
        let cfg = small_config(Some(3));
        let mut net = VariationalNet::init(&[2, 3, 2], cfg.prior, -40.0, &mut rng::seeded(seed)).unwrap();
        for l in &mut net.layers {
            l.weight_rho.iter_mut().chain(&mut l.bias_rho).for_each(|r| *r = -40.0);
        }
        let (x, y) = random_batch(6, 2, seed);
        let batch = Batch { features: &x, labels: &y };
        let draw = |s: u64| -> Vec<Vec<f64>> {
            let mut r = rng::seeded(s);
            vec![net.draw_noise(&mut r)]
        };
        let (a, _) = elbo_with_noise(&net, batch, cfg.lambda, &draw(seed)).unwrap();
        let (b, _) = elbo_with_noise(&net, batch, cfg.lambda, &draw(other)).unwrap();
        prop_assert!((a.nll - b.nll).abs() <= 1e-12 * a.nll.max(1.0), "{} vs {}", a.nll, b.nll);
    }
}

/// A hidden unit whose bias keeps it inactive on every row has zero
/// gradient through it, and finite differences agree.
#[test]
fn dead_relu_unit_gradients() {
    let cfg = small_config(Some(4));
    let mut net = VariationalNet::init(&[3, 4, 2], cfg.prior, cfg.rho_init, &mut rng::seeded(5)).unwrap();
    net.layers[0].bias_mu[2] = -50.0;
    let (x, y) = random_batch(8, 3, 9);
    let bad = gradient_violations(&net, &x, &y, &cfg, 13);
    assert!(bad.is_empty(), "{}", bad.join("\n"));
    let batch = Batch { features: &x, labels: &y };
    let (_, g) = elbo_loss(&net, batch, &cfg, &mut rng::seeded(13)).unwrap();
    // Outgoing weight mu of the dead unit gets only the prior/entropy terms,
    // which are the same for any data; compare against an unrelated label set.
    let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
    let batch2 = Batch { features: &x, labels: &flipped };
    let (_, g2) = elbo_loss(&net, batch2, &cfg, &mut rng::seeded(13)).unwrap();
    let first = net.layers[0].weight_mu.len() * 2 + net.layers[0].bias_mu.len() * 2;
    // Layer 1 weight mu for output class 0, input unit 2.
    let idx = first + 2;
    assert!((g[idx] - g2[idx]).abs() <= 1e-9, "{} vs {}", g[idx], g2[idx]);
}

/// Direct term-by-term evaluation of the objective for one draw on a
/// 1-input, 2-class net (two weights, two biases).
#[test]
fn objective_matches_hand_evaluation() {
    let prior = ScaleMixturePrior::default();
    let mut net = VariationalNet::init(&[1, 2], prior, -3.0, &mut rng::seeded(1)).unwrap();
    let mu = [0.3, -0.7, 0.1, 0.05];
    let rho = [-2.0, -1.0, -3.0, 0.5];
    let eps = [0.4, -1.3, 0.9, 0.2];
    let l = &mut net.layers[0];
    l.weight_mu = mu[..2].to_vec();
    l.weight_rho = rho[..2].to_vec();
    l.bias_mu = mu[2..].to_vec();
    l.bias_rho = rho[2..].to_vec();
    let (x, y, lambda) = (1.7f64, 1usize, 2000.0);

    let pdf = |w: f64, s: f64| (-(w * w) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let mut log_q = 0.0;
    let mut log_p = 0.0;
    let mut w = [0.0; 4];
    for i in 0..4 {
        let sigma = (1.0 + rho[i].exp()).ln();
        w[i] = mu[i] + sigma * eps[i];
        log_q += (pdf(w[i] - mu[i], sigma)).ln();
        log_p += (0.5 * pdf(w[i], 1.0) + 0.5 * pdf(w[i], (-6.0f64).exp())).ln();
    }
    let z = [w[0] * x + w[2], w[1] * x + w[3]];
    let lse = (z[0].exp() + z[1].exp()).ln();
    let nll = lse - z[y];
    let want = log_q - log_p + lambda * nll;

    let batch = Batch { features: &[x], labels: &[y as u8] };
    let (terms, _) = elbo_with_noise(&net, batch, lambda, &[eps.to_vec()]).unwrap();
    assert!((terms.total - want).abs() <= 1e-10 * want.abs().max(1.0), "{} vs {want}", terms.total);
}

#[test]
fn unit_scale_weight_draws() {
    let rho = (1f64.exp() - 1.0).ln();
    let mut net = VariationalNet::init(&[1, 2], ScaleMixturePrior::default(), rho, &mut rng::seeded(3)).unwrap();
    net.layers[0].weight_mu = vec![0.0, 0.0];
    let mut r = rng::seeded(4);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| net.weights_from_noise(net.draw_noise(&mut r)).mlp.layers[0].weight[0])
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
    assert!((sd - 1.0).abs() <= 0.02, "sd {sd}");
}

fn blobs(seed: u64) -> (TabularDataset, TabularDataset) {
    let blob = |mean: [f64; 2], group, label| {
        ComponentSpec::Gaussian(GaussianComponentSpec {
            mean: mean.to_vec(),
            covariance: vec![1.0, 0.0, 0.0, 1.0],
            group,
            label,
            count: 100,
        })
    };
    generate_scenario(&ScenarioSpec {
        name: "blobs".into(),
        components: vec![
            blob([-4.0, -4.0], 0, 0),
            blob([4.0, 4.0], 0, 1),
            blob([-4.0, -4.0], 1, 0),
            blob([4.0, 4.0], 1, 1),
        ],
        test_fraction: 0.2,
        seed,
    })
    .unwrap()
}

fn sanity_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_blobs_are_learned() {
    for seed in 1..=5 {
        let (tr, te) = blobs(seed);
        let cfg = sanity_config(seed);
        let net = train(&tr, &cfg).unwrap();
        let probs = net.mean_mlp().predict_proba(te.features()).unwrap();
        let hits = probs.iter().zip(te.labels()).filter(|(p, y)| argmax(p) == **y as usize).count();
        let acc = hits as f64 / te.len() as f64;
        assert!(acc >= 0.9, "seed {seed}: accuracy {acc}");
        let before = mean_point_nll(&initial_net(tr.dim(), &cfg).unwrap(), &tr);
        let after = mean_point_nll(&net, &tr);
        assert!(after < before, "seed {seed}: NLL {before} -> {after}");
    }
}

#[test]
fn zero_epochs_returns_the_initial_net() {
    let (tr, _) = blobs(1);
    let cfg = TrainConfig { epochs: 0, ..sanity_config(3) };
    let (net, hist) = train_with_history(&tr, &cfg).unwrap();
    assert_eq!(net, initial_net(tr.dim(), &cfg).unwrap());
    assert!(hist.epoch_loss.is_empty());
}

#[test]
fn training_is_deterministic_per_seed() {
    let (tr, _) = blobs(2);
    let a = train(&tr, &sanity_config(8)).unwrap();
    let b = train(&tr, &sanity_config(8)).unwrap();
    let c = train(&tr, &sanity_config(9)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn init_means_are_standard_normal() {
    let net = VariationalNet::init(&[50, 40, 2], ScaleMixturePrior::default(), -3.0, &mut rng::seeded(2)).unwrap();
    let mu: Vec<f64> = net.layers.iter().flat_map(|l| l.weight_mu.iter().copied()).collect();
    let mean = mu.iter().sum::<f64>() / mu.len() as f64;
    let var = mu.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mu.len() as f64;
    assert!(mean.abs() < 0.1 && (var - 1.0).abs() < 0.1, "mean {mean}, var {var}");
}
