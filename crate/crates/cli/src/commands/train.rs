//! `train`: ingest, split, sample negatives, fit, evaluate, and write the
//! model, history, metrics and config echo into the output directory.

use std::fs;
use std::path::Path;

use metricfm::eval::{evaluate_rating, evaluate_topn, Task};
use metricfm::model::save_model;
use metricfm::train::{fit, write_history, Validator};

use crate::config::{parse_kv_file, ExperimentConfig};
use crate::pipeline;
use crate::{CliError, TrainArgs};

pub(crate) fn build_config(args: TrainArgs) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let kv = parse_kv_file(path)?;
        config.apply_kv(&kv)?;
    }
    fn parse_err(what: &'static str) -> impl Fn(String) -> CliError {
        move |e| CliError::Validation(format!("--{what}: {e}"))
    }
    if let Some(v) = args.task {
        config.task = v.parse().map_err(parse_err("task"))?;
    }
    if let Some(v) = args.data {
        config.data = v;
    }
    if let Some(v) = args.format {
        config.format = v.parse().map_err(parse_err("format"))?;
    }
    if let Some(v) = args.distance {
        config.distance = v
            .parse()
            .map_err(|e: metricfm::model::UnknownKind| CliError::Validation(e.to_string()))?;
    }
    if let Some(v) = args.use_weight {
        config.use_weight = v;
    }
    if let Some(v) = args.layers {
        config.layers = v;
    }
    if let Some(v) = args.embed_dim {
        config.embed_dim = v;
    }
    if let Some(v) = args.lr {
        config.lr = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.dropout {
        config.dropout = v;
    }
    if let Some(v) = args.l2 {
        config.l2 = v;
    }
    if let Some(v) = args.patience {
        config.patience = v;
    }
    if let Some(v) = args.optimizer {
        config.optimizer = v.parse().map_err(parse_err("optimizer"))?;
    }
    if let Some(v) = args.negatives {
        config.negatives = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.output_dir {
        config.output_dir = v;
    }
    Ok(config)
}

fn prepare_output_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.as_os_str().is_empty() {
        return Err(CliError::Validation(
            "config key `output_dir` is required".into(),
        ));
    }
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .map_err(crate::runtime("output dir"))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(CliError::Validation(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir).map_err(crate::runtime("output dir"))?;
    }
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let force = args.force;
    let config = build_config(args)?;
    config.validate()?;
    let spec = config.distance_spec()?;
    let hyper = config.hyper()?;
    prepare_output_dir(&config.output_dir, force)?;

    let prepared = pipeline::prepare(&config)?;
    let split = &prepared.split;
    log::info!(
        "loaded {} train / {} validation / {} test instances (n = {})",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.layout.n()
    );

    let validator = match config.task {
        Task::Rating => Some(Validator {
            name: "rmse".into(),
            higher_is_better: false,
            eval: Box::new(|params| {
                evaluate_rating(params, &spec, &split.validation)
                    .map(|r| r.rmse.expect("rating report carries rmse"))
                    .map_err(|e| e.to_string())
            }),
        }),
        Task::Topn => None,
    };

    let (params, history) =
        fit(split, &spec, &hyper, validator).map_err(|e| CliError::Runtime(format!("fit: {e}")))?;

    let mut report = match config.task {
        Task::Rating => evaluate_rating(&params, &spec, &split.test)
            .map_err(crate::runtime("evaluate"))?,
        Task::Topn => {
            let sampler = pipeline::candidate_sampler(split, &config)?;
            evaluate_topn(&params, &spec, &split.test, &split.layout, &sampler, config.top_k)
                .map_err(crate::runtime("evaluate"))?
        }
    };

    let mut echo = config.echo();
    echo.push(("n".into(), split.layout.n().to_string()));
    report.config_echo = echo.clone();

    let out = &config.output_dir;
    fs::write(out.join("config.txt"), config.echo_text()).map_err(crate::runtime("write config"))?;

    let mut history_buf = Vec::new();
    write_history(&history, &mut history_buf).map_err(crate::runtime("write history"))?;
    fs::write(out.join("history.tsv"), history_buf).map_err(crate::runtime("write history"))?;

    fs::write(out.join("metrics.txt"), report.to_text()).map_err(crate::runtime("write metrics"))?;

    let model_path = out.join("model.bin");
    let mut meta = echo;
    if prepared.vocab.is_some() {
        meta.push(("vocab".into(), "model.vocab".into()));
    }
    save_model(&model_path, &params, &spec, &meta).map_err(crate::runtime("write model"))?;
    if let Some(vocab) = &prepared.vocab {
        vocab
            .save(&out.join("model.vocab"))
            .map_err(crate::runtime("write vocab"))?;
    }

    print!("{}", report.to_text());
    println!("model = {}", model_path.display());
    Ok(())
}
