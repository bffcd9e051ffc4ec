//! Shared data pipeline: the same config always produces the same splits,
//! so `evaluate` reproduces exactly what `train` measured.

use metricfm::data::{
    load_libfm, load_tabular, sample_negatives, split_leave_one_out, split_rating, DataFormat,
    DatasetSplit, FieldLayout, TabularOptions, Vocab,
};
use metricfm::eval::{CandidateSampler, Task};
use metricfm::util::mix_seed;

use crate::config::ExperimentConfig;
use crate::CliError;

// Stream tags deriving the per-stage seeds from the experiment seed.
const NEGATIVE_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const CANDIDATE_STREAM: u64 = 3;

pub struct Prepared {
    pub split: DatasetSplit<f64>,
    pub vocab: Option<Vocab>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, CliError> {
    match config.format {
        DataFormat::Tabular => prepare_tabular(config),
        DataFormat::LibfmSparse => prepare_libfm(config),
    }
}

fn prepare_tabular(config: &ExperimentConfig) -> Result<Prepared, CliError> {
    let opts = TabularOptions {
        delimiter: config.delimiter,
        reserve_unknown: true,
    };
    let data = load_tabular::<f64>(&config.data, &opts).map_err(crate::runtime("load"))?;
    let (split, vocab) = match config.task {
        Task::Rating => {
            // negatives first, then the 70/20/10 split, so validation and
            // test carry both labels
            let augmented = sample_negatives(
                &data.instances,
                &data.layout,
                config.negatives,
                mix_seed(config.seed, NEGATIVE_STREAM),
            )
            .map_err(crate::runtime("negative sampling"))?;
            let split = split_rating(
                augmented,
                data.layout,
                (0.7, 0.2, 0.1),
                mix_seed(config.seed, SPLIT_STREAM),
            )
            .map_err(crate::runtime("split"))?;
            (split, data.vocab)
        }
        Task::Topn => {
            let mut split = split_leave_one_out(data.instances, data.layout)
                .map_err(crate::runtime("split"))?;
            split.train = sample_negatives(
                &split.train,
                &split.layout,
                config.negatives,
                mix_seed(config.seed, NEGATIVE_STREAM),
            )
            .map_err(crate::runtime("negative sampling"))?;
            (split, data.vocab)
        }
    };
    Ok(Prepared {
        split,
        vocab: Some(vocab),
    })
}

fn prepare_libfm(config: &ExperimentConfig) -> Result<Prepared, CliError> {
    if config.task == Task::Topn {
        return Err(CliError::Validation(
            "task topn needs field-aware data (user, item, timestamp); use the tabular format"
                .into(),
        ));
    }
    let n = metricfm::data::libfm_sidecar_n(&config.data).map_err(crate::runtime("load"))?;
    let instances = load_libfm::<f64>(&config.data, n).map_err(crate::runtime("load"))?;
    let layout = FieldLayout::from_cardinalities([("features", n)])
        .expect("single synthetic field is valid");
    // labels come with the file; negative sampling needs field structure
    let split = split_rating(
        instances,
        layout,
        (0.7, 0.2, 0.1),
        mix_seed(config.seed, SPLIT_STREAM),
    )
    .map_err(crate::runtime("split"))?;
    Ok(Prepared {
        split,
        vocab: None,
    })
}

pub fn candidate_sampler(
    split: &DatasetSplit<f64>,
    config: &ExperimentConfig,
) -> Result<CandidateSampler, CliError> {
    CandidateSampler::from_train(
        &split.train,
        &split.layout,
        config.candidates,
        mix_seed(config.seed, CANDIDATE_STREAM),
    )
    .map_err(crate::runtime("candidate sampler"))
}
