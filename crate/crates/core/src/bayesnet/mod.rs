//! Variational feed-forward classifier trained by Bayes-by-Backprop.
//!
//! Every weight is a Gaussian `N(mu, softplus(rho)^2)`; training minimizes
//! the objective in [`objective`] with reparameterized gradients and Adam.

mod net;
mod objective;
mod prior;
mod train;

pub use net::{
    predict_point, sample_weights, sigmoid, softplus, ConcreteWeights, VariationalLayer,
    VariationalNet,
};
pub use objective::{
    central_difference, elbo_loss, elbo_with_noise, numeric_grad, Batch, LossTerms,
};
pub use prior::{log_normal, ScaleMixturePrior};
pub use train::{
    initial_net, mean_point_nll, train, train_with_history, TrainConfig, TrainHistory,
};
