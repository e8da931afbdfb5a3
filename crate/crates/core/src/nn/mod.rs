//! Feed-forward networks trained by mini-batch SGD on cross-entropy with an
//! L2 penalty.

mod checkpoint;
mod gradcheck;
mod layers;
mod model;

pub use checkpoint::{load_model, save_model};
pub use gradcheck::{gradient_check, GradientCheck, GradientTolerance};
pub use layers::{softmax_in_place, Layer, Shape, KERNEL, POOL};
pub use model::{
    argmax, build_mlp, build_mnist_cnn, build_mnist_cnn_for, build_spam_mlp, build_toy_mlp,
    evaluate, padded_side, train, EpochStats, Gradients, Mode, NetworkModel, TrainConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Default dropout rate on the spam MLP's hidden layers.
pub const SPAM_DROPOUT: f64 = 0.5;

/// Architecture choice, sized at build time to the (possibly projected)
/// input dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelSpec {
    Cnn,
    SpamMlp { dropout: f64 },
    Mlp { hidden: Vec<usize> },
}

impl ModelSpec {
    pub fn build(&self, input_dim: usize, classes: usize, seed: u64) -> Result<NetworkModel> {
        match self {
            ModelSpec::Cnn => build_mnist_cnn_for(input_dim, classes, seed),
            ModelSpec::SpamMlp { dropout } => {
                build_mlp(input_dim, &[100, 50, 10], classes, *dropout, seed)
            }
            ModelSpec::Mlp { hidden } => build_mlp(input_dim, hidden, classes, 0.0, seed),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Cnn => "cnn",
            ModelSpec::SpamMlp { .. } => "spam_mlp",
            ModelSpec::Mlp { .. } => "mlp",
        }
    }
}
