//! The two protocol harnesses.

use std::collections::{HashMap, HashSet};

use crate::data::{build_eval_candidates, FieldLayout, SparseInstance};
use crate::model::{DistanceSpec, ModelParams, Scorer};
use crate::scalar::Scalar;
use crate::util::CompensatedSum;

use super::metrics::{hit_ratio_at_k, ndcg_at_k, rmse, RankedList};
use super::{EvalError, MetricsReport, Task};

/// Builds per-user candidate sets for the sampled ranking protocol:
/// `count` never-interacted items plus the held-out positive. Candidate
/// streams are seeded per (seed, user) so every model variant ranks the
/// same candidates.
pub struct CandidateSampler {
    known: HashMap<u32, HashSet<u32>>,
    num_items: u32,
    count: usize,
    seed: u64,
}

impl CandidateSampler {
    pub fn from_train<F: Scalar>(
        train: &[SparseInstance<F>],
        layout: &FieldLayout,
        count: usize,
        seed: u64,
    ) -> Result<Self, EvalError> {
        let item_field = layout.field_index("item").ok_or(EvalError::MissingIds)?;
        let num_items = layout.fields()[item_field].real_cardinality() as u32;
        let mut known: HashMap<u32, HashSet<u32>> = HashMap::new();
        for inst in train {
            let (user, item) = match (inst.user, inst.item) {
                (Some(u), Some(i)) => (u, i),
                _ => return Err(EvalError::MissingIds),
            };
            if inst.label > F::zero() {
                known.entry(user).or_default().insert(item);
            }
        }
        Ok(CandidateSampler {
            known,
            num_items,
            count,
            seed,
        })
    }

    /// Candidate items for one (user, held-out positive) pair; the
    /// positive is appended last and excluded from the samples.
    pub fn candidates(&self, user: u32, positive: u32) -> Result<Vec<u32>, EvalError> {
        static EMPTY: std::sync::OnceLock<HashSet<u32>> = std::sync::OnceLock::new();
        let known = self
            .known
            .get(&user)
            .unwrap_or_else(|| EMPTY.get_or_init(HashSet::new));
        Ok(build_eval_candidates(
            user,
            positive,
            self.num_items,
            known,
            self.count,
            self.seed,
        )?)
    }
}

/// Ranking evaluation with an arbitrary scorer: per test instance, scores
/// the user's candidates, ranks deterministically, and averages HR@k and
/// NDCG@k over users with compensated summation.
pub fn evaluate_topn_with<F: Scalar>(
    mut score: impl FnMut(&SparseInstance<F>, u32) -> F,
    test: &[SparseInstance<F>],
    sampler: &CandidateSampler,
    k: usize,
) -> Result<MetricsReport<F>, EvalError> {
    if k == 0 {
        return Err(EvalError::BadK);
    }
    if test.is_empty() {
        return Err(EvalError::Empty("topn test set"));
    }
    let mut hr_sum = CompensatedSum::default();
    let mut ndcg_sum = CompensatedSum::default();
    for inst in test {
        let (user, positive) = match (inst.user, inst.item) {
            (Some(u), Some(i)) => (u, i),
            _ => return Err(EvalError::MissingIds),
        };
        let candidates = sampler.candidates(user, positive)?;
        let ranked = RankedList::from_scores(
            candidates.iter().map(|&item| (item, score(inst, item))),
        );
        hr_sum.add(hit_ratio_at_k(&ranked, positive, k)?);
        ndcg_sum.add(ndcg_at_k(&ranked, positive, k)?);
    }
    let users = F::from_f64(test.len() as f64);
    Ok(MetricsReport {
        task: Task::Topn,
        rmse: None,
        hr: Some(hr_sum.value() / users),
        ndcg: Some(ndcg_sum.value() / users),
        k: Some(k),
        user_count: test.len(),
        instance_count: test.len() * (sampler.count + 1),
        config_echo: Vec::new(),
    })
}

/// Ranking evaluation of a trained model (evaluation mode, dropout off).
pub fn evaluate_topn<F: Scalar>(
    params: &ModelParams<F>,
    spec: &DistanceSpec,
    test: &[SparseInstance<F>],
    layout: &FieldLayout,
    sampler: &CandidateSampler,
    k: usize,
) -> Result<MetricsReport<F>, EvalError> {
    let item_field = layout.field_index("item").ok_or(EvalError::MissingIds)?;
    let scorer = Scorer::new(params, spec);
    evaluate_topn_with(
        |inst, item| {
            let candidate = inst.with_category(layout, item_field, item);
            scorer.predict(candidate.entries())
        },
        test,
        sampler,
        k,
    )
}

/// RMSE of an arbitrary scorer over a test set.
pub fn evaluate_rating_with<F: Scalar>(
    mut score: impl FnMut(&SparseInstance<F>) -> F,
    test: &[SparseInstance<F>],
) -> Result<MetricsReport<F>, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty("rating test set"));
    }
    let predictions: Vec<F> = test.iter().map(&mut score).collect();
    let targets: Vec<F> = test.iter().map(|i| i.label).collect();
    let users: HashSet<Option<u32>> = test.iter().map(|i| i.user).collect();
    Ok(MetricsReport {
        task: Task::Rating,
        rmse: Some(rmse(&predictions, &targets)?),
        hr: None,
        ndcg: None,
        k: None,
        user_count: users.len(),
        instance_count: test.len(),
        config_echo: Vec::new(),
    })
}

/// RMSE of a trained model over a test set (evaluation mode).
pub fn evaluate_rating<F: Scalar>(
    params: &ModelParams<F>,
    spec: &DistanceSpec,
    test: &[SparseInstance<F>],
) -> Result<MetricsReport<F>, EvalError> {
    let scorer = Scorer::new(params, spec);
    evaluate_rating_with(|inst| scorer.predict(inst.entries()), test)
}
