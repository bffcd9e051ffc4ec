//! Squared-loss training: parameter initialization, SGD and Adam updates,
//! mini-batch epochs and early stopping.

mod fit;
mod optim;

pub use fit::{fit, train_epoch, write_history, EpochStats, TrainError, Validator};
pub use optim::{adam_step, apply_l2, clip_global_norm, sgd_step, AdamState};

use rand::Rng;
use thiserror::Error;

use crate::data::FieldLayout;
use crate::model::{DistanceSpec, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd or adam)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HyperParams<F> {
    pub lr: F,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: F,
    /// Embedding dimension.
    pub k: usize,
    pub optimizer: OptimizerKind,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub l2: F,
    pub patience: usize,
    /// Global-norm gradient clip; distance terms are quadratic in the
    /// embeddings and can spike early in training.
    pub grad_clip: Option<F>,
    pub seed: u64,
}

impl<F: Scalar> Default for HyperParams<F> {
    fn default() -> Self {
        HyperParams {
            lr: F::from_f64(0.001),
            batch_size: 256,
            epochs: 20,
            dropout: F::from_f64(0.2),
            k: 64,
            optimizer: OptimizerKind::Adam,
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            eps: F::from_f64(1e-8),
            l2: F::zero(),
            patience: 5,
            grad_clip: Some(F::from_f64(10.0)),
            seed: 42,
        }
    }
}

#[derive(Debug, Error)]
pub enum HyperError {
    #[error("learning rate must be > 0")]
    BadLearningRate,
    #[error("batch size must be >= 1")]
    BadBatchSize,
    #[error("embedding dimension k must be >= 1")]
    BadK,
    #[error("dropout must lie in [0, 1)")]
    BadDropout,
    #[error("patience must be >= 1")]
    BadPatience,
}

impl<F: Scalar> HyperParams<F> {
    pub fn validate(&self) -> Result<(), HyperError> {
        if !(self.lr > F::zero()) {
            return Err(HyperError::BadLearningRate);
        }
        if self.batch_size == 0 {
            return Err(HyperError::BadBatchSize);
        }
        if self.k == 0 {
            return Err(HyperError::BadK);
        }
        if self.dropout < F::zero() || self.dropout >= F::one() {
            return Err(HyperError::BadDropout);
        }
        if self.patience == 0 {
            return Err(HyperError::BadPatience);
        }
        Ok(())
    }
}

/// Initial parameter standard deviation.
pub const INIT_STD: f64 = 0.01;

/// Draws every learnable tensor i.i.d. Normal(0, 0.01); the global bias
/// starts at zero. The draw order is fixed (w, V, h, L, per-layer W and b)
/// so a seed pins the parameters bit-for-bit.
pub fn init_params<F: Scalar, R: Rng + ?Sized>(
    layout: &FieldLayout,
    hyper: &HyperParams<F>,
    spec: &DistanceSpec,
    rng: &mut R,
) -> ModelParams<F> {
    let mut params = ModelParams::zeros(layout.n(), hyper.k, spec.layers);
    let std = F::from_f64(INIT_STD);
    let fill = |xs: &mut [F], rng: &mut R| {
        for x in xs {
            *x = F::standard_normal(rng) * std;
        }
    };
    fill(&mut params.w, rng);
    fill(params.v.data_mut(), rng);
    fill(&mut params.h, rng);
    fill(params.l.data_mut(), rng);
    for layer in &mut params.mlp {
        fill(layer.w.data_mut(), rng);
        fill(&mut layer.b, rng);
    }
    params
}

/// `(yhat - y)^2`; batch loss is the sum over the batch.
pub fn squared_loss<F: Scalar>(yhat: F, y: F) -> F {
    let r = yhat - y;
    r * r
}
