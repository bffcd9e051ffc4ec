//! Experiment configuration: flat key=value files plus flag overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use metricfm::data::DataFormat;
use metricfm::eval::Task;
use metricfm::model::{DistanceKind, DistanceSpec};
use metricfm::train::{HyperParams, OptimizerKind};

use crate::CliError;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: Task,
    pub data: PathBuf,
    pub format: DataFormat,
    pub delimiter: char,
    pub distance: DistanceKind,
    pub use_weight: bool,
    pub layers: usize,
    pub embed_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub optimizer: OptimizerKind,
    pub l2: f64,
    pub patience: usize,
    pub negatives: usize,
    pub candidates: usize,
    pub top_k: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::Topn,
            data: PathBuf::new(),
            format: DataFormat::Tabular,
            delimiter: '\t',
            distance: DistanceKind::Dnn,
            use_weight: true,
            layers: 2,
            embed_dim: 64,
            lr: 0.001,
            batch_size: 256,
            epochs: 20,
            dropout: 0.2,
            optimizer: OptimizerKind::Adam,
            l2: 0.0,
            patience: 5,
            negatives: 2,
            candidates: 99,
            top_k: 10,
            seed: 42,
            output_dir: PathBuf::new(),
        }
    }
}

fn parse_delimiter(raw: &str) -> Result<char, String> {
    match raw {
        "tab" | "\\t" => Ok('\t'),
        s if s.chars().count() == 1 => Ok(s.chars().next().unwrap()),
        other => Err(format!("delimiter must be a single character or `tab`, got `{other}`")),
    }
}

fn delimiter_name(c: char) -> String {
    if c == '\t' {
        "tab".to_string()
    } else {
        c.to_string()
    }
}

/// Parses a flat `key = value` text file; `#` starts a comment line.
pub fn parse_kv_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_kv_text(&text)
}

pub fn parse_kv_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Validation(format!("config line {}: expected key = value", line_no + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl ExperimentConfig {
    /// Applies config-file keys; unknown keys fail fast.
    pub fn apply_kv(&mut self, kv: &BTreeMap<String, String>) -> Result<(), CliError> {
        for (key, value) in kv {
            self.apply_one(key, value)
                .map_err(|reason| CliError::Validation(format!("config key `{key}`: {reason}")))?;
        }
        Ok(())
    }

    fn apply_one(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| e.to_string())
        }
        match key {
            "task" => self.task = parse(value)?,
            "data" => self.data = PathBuf::from(value),
            "format" => self.format = parse(value)?,
            "delimiter" => self.delimiter = parse_delimiter(value)?,
            "distance" => self.distance = parse(value)?,
            "use_weight" => self.use_weight = parse(value)?,
            "layers" => self.layers = parse(value)?,
            "embed_dim" | "k" => self.embed_dim = parse(value)?,
            "lr" => self.lr = parse(value)?,
            "batch_size" => self.batch_size = parse(value)?,
            "epochs" => self.epochs = parse(value)?,
            "dropout" => self.dropout = parse(value)?,
            "optimizer" => self.optimizer = parse(value)?,
            "l2" => self.l2 = parse(value)?,
            "patience" => self.patience = parse(value)?,
            "negatives" => self.negatives = parse(value)?,
            "candidates" => self.candidates = parse(value)?,
            "top_k" => self.top_k = parse(value)?,
            "seed" => self.seed = parse(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// The distance spec this config describes.
    pub fn distance_spec(&self) -> Result<DistanceSpec, CliError> {
        DistanceSpec::new(self.distance, self.use_weight, self.layers)
            .map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn hyper(&self) -> Result<HyperParams<f64>, CliError> {
        let hyper = HyperParams {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            dropout: self.dropout,
            k: self.embed_dim,
            optimizer: self.optimizer,
            l2: self.l2,
            patience: self.patience,
            seed: self.seed,
            ..HyperParams::default()
        };
        hyper
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(hyper)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.distance_spec()?;
        self.hyper()?;
        if self.data.as_os_str().is_empty() {
            return Err(CliError::Validation("config key `data` is required".into()));
        }
        if self.top_k == 0 || self.candidates == 0 {
            return Err(CliError::Validation(
                "top_k and candidates must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Deterministic echo of every field, embedded in every output file.
    pub fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("version".into(), TOOLKIT_VERSION.into()),
            ("task".into(), self.task.as_str().into()),
            ("data".into(), self.data.display().to_string()),
            ("format".into(), self.format.as_str().into()),
            ("delimiter".into(), delimiter_name(self.delimiter)),
            ("distance".into(), self.distance.as_str().into()),
            ("use_weight".into(), self.use_weight.to_string()),
            ("layers".into(), self.layers.to_string()),
            ("embed_dim".into(), self.embed_dim.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("dropout".into(), self.dropout.to_string()),
            ("optimizer".into(), self.optimizer.as_str().into()),
            ("l2".into(), self.l2.to_string()),
            ("patience".into(), self.patience.to_string()),
            ("negatives".into(), self.negatives.to_string()),
            ("candidates".into(), self.candidates.to_string()),
            ("top_k".into(), self.top_k.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("output_dir".into(), self.output_dir.display().to_string()),
        ]
    }

    pub fn echo_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.echo() {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Rebuilds a config from an echo (model metadata sidecar).
    pub fn from_echo(kv: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut config = ExperimentConfig::default();
        for (key, value) in kv {
            match key.as_str() {
                "version" | "n" | "vocab" => continue,
                _ => config.apply_one(key, value).map_err(|reason| {
                    CliError::Validation(format!("metadata key `{key}`: {reason}"))
                })?,
            }
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip_through_echo() {
        let mut config = ExperimentConfig::default();
        config.data = PathBuf::from("data.tsv");
        config.output_dir = PathBuf::from("out");
        config.distance = DistanceKind::Mahalanobis;
        config.layers = 0;
        config.seed = 7;
        let kv = parse_kv_text(&config.echo_text()).unwrap();
        let rebuilt = ExperimentConfig::from_echo(&kv).unwrap();
        assert_eq!(rebuilt.distance, DistanceKind::Mahalanobis);
        assert_eq!(rebuilt.seed, 7);
        assert_eq!(rebuilt.data, PathBuf::from("data.tsv"));
    }

    #[test]
    fn unknown_key_fails_fast() {
        let mut config = ExperimentConfig::default();
        let kv = parse_kv_text("distanse = dnn\n").unwrap();
        let err = config.apply_kv(&kv).unwrap_err();
        assert!(err.to_string().contains("distanse"));
    }

    #[test]
    fn invalid_kind_is_a_validation_error() {
        let mut config = ExperimentConfig::default();
        let kv = parse_kv_text("distance = euclid\n").unwrap();
        let err = config.apply_kv(&kv).unwrap_err();
        assert!(err.to_string().contains("unknown distance kind"));
    }

    #[test]
    fn spec_validation_catches_layer_conflicts() {
        let mut config = ExperimentConfig::default();
        config.data = PathBuf::from("x");
        config.distance = DistanceKind::Euclidean;
        config.layers = 2;
        assert!(config.validate().is_err());
        config.layers = 0;
        assert!(config.validate().is_ok());
    }
}
