//! Sparse attribute-vector construction, dataset loading, protocol
//! splitting and negative sampling.

mod instance;
mod layout;
mod load;
mod sample;
mod split;
pub mod synth;

pub use instance::{InstanceError, SparseInstance};
pub use layout::{Field, FieldLayout, LayoutError};
pub use load::{
    libfm_sidecar_n, load_interactions, load_libfm, load_tabular, load_tabular_with_vocab,
    DataFormat, FieldVocab, LoadError, TabularData, TabularOptions, Vocab,
};
pub use sample::{build_eval_candidates, sample_negatives, SampleError};
pub use split::{split_leave_one_out, split_rating, DatasetSplit, SplitError};
