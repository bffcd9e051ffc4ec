//! Factorization machines whose pairwise interactions run through learned
//! distance metrics — a factored Mahalanobis form for linear feature
//! correlations, a shared tanh MLP for non-linear ones — with a signed
//! transformation weight restoring full real-valued expressiveness, and
//! simplified two-pass evaluation that is linear in the number of active
//! fields.
//!
//! Modules follow the pipeline: [`data`] builds sparse instances and
//! protocol splits, [`model`] evaluates predictions, [`gradtape`]
//! differentiates them, [`train`] fits parameters, [`eval`] scores the
//! rating and ranking protocols.
//!
//! The numeric core is generic over [`scalar::Scalar`] (`f64`, `f32`); the
//! aliases below pin the double-precision instantiation used by the CLI
//! and the verification suites.

pub mod data;
pub mod eval;
pub mod gradtape;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod train;
pub mod util;
pub mod verify;

pub use scalar::Scalar;

/// Double-precision tape.
pub type Tape64 = gradtape::Tape<f64>;
/// Double-precision gradients.
pub type GradientMap64 = gradtape::GradientMap<f64>;
/// Double-precision model parameters.
pub type ModelParams64 = model::ModelParams<f64>;
/// Double-precision instance.
pub type SparseInstance64 = data::SparseInstance<f64>;
/// Double-precision dataset split.
pub type DatasetSplit64 = data::DatasetSplit<f64>;
/// Double-precision hyperparameters.
pub type HyperParams64 = train::HyperParams<f64>;
/// Double-precision metrics report.
pub type MetricsReport64 = eval::MetricsReport<f64>;
