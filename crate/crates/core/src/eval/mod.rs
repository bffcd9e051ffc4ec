//! RMSE, HR@k, NDCG@k, and the two protocol harnesses: rating prediction
//! over a held-out test set and leave-one-out ranking over sampled
//! candidates.

mod harness;
mod metrics;

pub use harness::{
    evaluate_rating, evaluate_rating_with, evaluate_topn, evaluate_topn_with, CandidateSampler,
};
pub use metrics::{hit_ratio_at_k, ndcg_at_k, rmse, RankedList};

use std::io::Write;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("prediction/target length mismatch: {predictions} vs {targets}")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("positive item {0} is not among the candidates (protocol violation)")]
    PositiveMissing(u32),
    #[error("k must be >= 1")]
    BadK,
    #[error("test instances must carry user and item identifiers")]
    MissingIds,
    #[error(transparent)]
    Sample(#[from] crate::data::SampleError),
}

/// Task of an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Rating,
    Topn,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Rating => "rating",
            Task::Topn => "topn",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rating" => Ok(Task::Rating),
            "topn" => Ok(Task::Topn),
            other => Err(format!("unknown task `{other}` (expected rating or topn)")),
        }
    }
}

/// Evaluation output: the task's metrics, counts, and an echo of the
/// configuration that produced them. Serialized as sorted `key = value`
/// lines so reports are machine-parseable and byte-stable.
#[derive(Debug, Clone)]
pub struct MetricsReport<F> {
    pub task: Task,
    pub rmse: Option<F>,
    pub hr: Option<F>,
    pub ndcg: Option<F>,
    pub k: Option<usize>,
    pub user_count: usize,
    pub instance_count: usize,
    pub config_echo: Vec<(String, String)>,
}

impl<F: Scalar> MetricsReport<F> {
    pub fn write_text(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let mut lines: Vec<(String, String)> = Vec::new();
        lines.push(("task".into(), self.task.as_str().into()));
        if let Some(v) = self.rmse {
            lines.push(("rmse".into(), format!("{v}")));
        }
        if let Some(v) = self.hr {
            lines.push((format!("hr@{}", self.k.unwrap_or(0)), format!("{v}")));
        }
        if let Some(v) = self.ndcg {
            lines.push((format!("ndcg@{}", self.k.unwrap_or(0)), format!("{v}")));
        }
        lines.push(("users".into(), self.user_count.to_string()));
        lines.push(("instances".into(), self.instance_count.to_string()));
        for (key, value) in &self.config_echo {
            lines.push((format!("config.{key}"), value.clone()));
        }
        for (key, value) in lines {
            writeln!(out, "{key} = {value}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("report text is utf-8")
    }
}
