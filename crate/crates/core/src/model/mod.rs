//! Prediction with metric-valued second-order interactions: distance
//! functions over embedding pairs, the signed transformation weight, the
//! simplified two-pass evaluation, tape recording for gradients, and model
//! persistence.

mod fast;
mod graph;
mod params;
mod persist;
mod predict;
mod spec;

pub use fast::{second_order_dnn_fast, second_order_mahalanobis_fast};
pub use graph::{loss_graph, prediction_graph};
pub use params::{MlpLayer, ModelParams, ParamSegment};
pub use persist::{load_model, meta_path, save_model, PersistError};
pub use predict::{
    distance, predict, predict_naive, psd_from_factor, transform_mlp, transformation_weight,
    vanilla_fm_predict, vanilla_fm_second_order, ActiveSet, DropoutPlan, Scorer, COSINE_EPS,
};
pub use spec::{DistanceKind, DistanceSpec, SpecError, UnknownKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("attribute index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error(transparent)]
    Tape(#[from] crate::gradtape::TapeError),
}
