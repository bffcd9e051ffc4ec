//! `evaluate`: reload a saved model, rebuild its stored protocol from the
//! metadata sidecar, and re-run the task's harness.

use std::fs;

use metricfm::eval::{evaluate_rating, evaluate_topn, Task};
use metricfm::model::{load_model, meta_path, PersistError};

use crate::config::{parse_kv_file, ExperimentConfig};
use crate::pipeline;
use crate::{CliError, EvaluateArgs};

fn load_error(e: PersistError) -> CliError {
    match e {
        PersistError::Io { .. } => CliError::Runtime(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let (params, spec) = load_model::<f64>(&args.model).map_err(load_error)?;
    let meta = parse_kv_file(&meta_path(&args.model))?;
    let mut config = ExperimentConfig::from_echo(&meta)?;
    if let Some(data) = args.data {
        config.data = data;
    }
    if let Some(task) = args.task {
        config.task = task
            .parse()
            .map_err(|e: String| CliError::Validation(e))?;
    }
    config.validate()?;

    if config.embed_dim != params.k() {
        return Err(CliError::Validation(format!(
            "embedding dimension mismatch: expected {} (metadata), found {} (model file)",
            config.embed_dim,
            params.k()
        )));
    }

    let prepared = pipeline::prepare(&config)?;
    let split = &prepared.split;
    if split.layout.n() != params.n() {
        return Err(CliError::Validation(format!(
            "attribute dimension mismatch: expected {} (model), found {} (data)",
            params.n(),
            split.layout.n()
        )));
    }

    let mut report = match config.task {
        Task::Rating => {
            evaluate_rating(&params, &spec, &split.test).map_err(crate::runtime("evaluate"))?
        }
        Task::Topn => {
            let sampler = pipeline::candidate_sampler(split, &config)?;
            evaluate_topn(&params, &spec, &split.test, &split.layout, &sampler, config.top_k)
                .map_err(crate::runtime("evaluate"))?
        }
    };
    let mut echo = config.echo();
    echo.push(("n".into(), split.layout.n().to_string()));
    report.config_echo = echo;

    match args.out {
        Some(path) => {
            fs::write(&path, report.to_text()).map_err(crate::runtime("write metrics"))?
        }
        None => print!("{}", report.to_text()),
    }
    Ok(())
}
