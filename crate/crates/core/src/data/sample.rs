//! Negative sampling for implicit feedback, and candidate construction for
//! the sampled ranking protocol.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::util::mix_seed;

use super::instance::SparseInstance;
use super::layout::FieldLayout;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("layout has no `{0}` field; negative sampling needs field-aware data")]
    MissingField(&'static str),
    #[error("instances must carry user and item identifiers")]
    MissingIds,
    #[error("need {needed} candidate items outside the user's interactions, only {available} available")]
    InsufficientItems { needed: usize, available: usize },
}

/// For each positive instance, appends `ratio` copies whose item field is
/// resampled uniformly among items the user never interacted with in the
/// given set. Positives are relabeled +1 and negatives -1; every other
/// field is copied from the positive. `ratio` 0 returns the input
/// untouched.
///
/// Negatives for one positive are drawn without replacement, so the
/// augmented set stays free of duplicate (user, item, timestamp) triples.
pub fn sample_negatives<F: Scalar>(
    train: &[SparseInstance<F>],
    layout: &FieldLayout,
    ratio: usize,
    seed: u64,
) -> Result<Vec<SparseInstance<F>>, SampleError> {
    if ratio == 0 {
        return Ok(train.to_vec());
    }
    let item_field = layout
        .field_index("item")
        .ok_or(SampleError::MissingField("item"))?;
    let num_items = layout.fields()[item_field].real_cardinality() as u32;
    if train.iter().any(|i| i.user.is_none() || i.item.is_none()) {
        return Err(SampleError::MissingIds);
    }

    let mut interacted: HashMap<u32, HashSet<u32>> = HashMap::new();
    for inst in train {
        interacted
            .entry(inst.user.unwrap())
            .or_default()
            .insert(inst.item.unwrap());
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(train.len() * (1 + ratio));
    for inst in train {
        let user = inst.user.unwrap();
        let seen = &interacted[&user];
        let mut positive = inst.clone();
        positive.label = F::one();
        out.push(positive);

        let available = num_items as usize - seen.len();
        if available == 0 {
            log::warn!("user {user} has interacted with every item; no negatives drawn");
            continue;
        }
        let wanted = ratio.min(available);
        if wanted < ratio {
            log::warn!(
                "user {user}: only {available} non-interacted items, drawing {wanted} of {ratio} negatives"
            );
        }
        let mut drawn: HashSet<u32> = HashSet::with_capacity(wanted);
        while drawn.len() < wanted {
            let candidate = rng.gen_range(0..num_items);
            if seen.contains(&candidate) || drawn.contains(&candidate) {
                continue;
            }
            drawn.insert(candidate);
            let mut negative = inst.with_category(layout, item_field, candidate);
            negative.label = -F::one();
            out.push(negative);
        }
    }
    Ok(out)
}

/// Samples `count` distinct items outside `known` (and distinct from the
/// positive), then appends the positive: `count + 1` candidates total.
/// The stream is seeded from (seed, user) so candidate sets are stable
/// across model variants.
pub fn build_eval_candidates(
    user: u32,
    positive_item: u32,
    num_items: u32,
    known: &HashSet<u32>,
    count: usize,
    seed: u64,
) -> Result<Vec<u32>, SampleError> {
    let mut pool: Vec<u32> = (0..num_items)
        .filter(|i| *i != positive_item && !known.contains(i))
        .collect();
    if pool.len() < count {
        return Err(SampleError::InsufficientItems {
            needed: count,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, user as u64));
    // partial Fisher-Yates: the first `count` slots become the sample
    for i in 0..count {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut candidates = pool[..count].to_vec();
    candidates.push(positive_item);
    Ok(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> FieldLayout {
        FieldLayout::from_cardinalities([("user", 4), ("item", 20)]).unwrap()
    }

    fn instance(user: u32, item: u32, t: i64) -> SparseInstance<f64> {
        let l = layout();
        let mut inst = l.encode_instance(&[user as usize, item as usize], 1.0).unwrap();
        inst.timestamp = Some(t);
        inst
    }

    #[test]
    fn two_negatives_per_positive_outside_train_items() {
        let train = vec![instance(0, 1, 1), instance(0, 2, 2), instance(0, 3, 3)];
        let out = sample_negatives(&train, &layout(), 2, 42).unwrap();
        assert_eq!(out.len(), 9);
        let negatives: Vec<_> = out.iter().filter(|i| i.label < 0.0).collect();
        assert_eq!(negatives.len(), 6);
        for neg in &negatives {
            assert!(![1, 2, 3].contains(&neg.item.unwrap()));
            assert_eq!(neg.user, Some(0));
        }
        for pos in out.iter().filter(|i| i.label > 0.0) {
            assert_eq!(pos.label, 1.0);
        }
    }

    #[test]
    fn ratio_zero_is_identity() {
        let train = vec![instance(0, 1, 1), instance(1, 2, 2)];
        let out = sample_negatives(&train, &layout(), 0, 42).unwrap();
        assert_eq!(out, train);
    }

    #[test]
    fn same_seed_same_negatives() {
        let train = vec![instance(0, 1, 1), instance(1, 2, 2), instance(2, 3, 3)];
        let a = sample_negatives(&train, &layout(), 3, 7).unwrap();
        let b = sample_negatives(&train, &layout(), 3, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_negatives(&train, &layout(), 3, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn saturated_user_draws_fewer_negatives() {
        let small = FieldLayout::from_cardinalities([("user", 2), ("item", 3)]).unwrap();
        let mk = |u: u32, i: u32| {
            let mut inst = small.encode_instance(&[u as usize, i as usize], 1.0f64).unwrap();
            inst.timestamp = Some(i as i64);
            inst
        };
        let train = vec![mk(0, 0), mk(0, 1), mk(0, 2)];
        let out = sample_negatives(&train, &small, 2, 1).unwrap();
        // every item is interacted with: positives only
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|i| i.label > 0.0));
    }

    #[test]
    fn reserved_slot_never_sampled_as_negative() {
        let mut fields = vec![
            super::super::layout::Field::new("user", 2),
            super::super::layout::Field::new("item", 4),
        ];
        fields[1].reserved_unknown = true; // 3 real items + bucket
        let l = FieldLayout::new(fields).unwrap();
        let mut inst = l.encode_instance(&[0, 0], 1.0f64).unwrap();
        inst.timestamp = Some(1);
        let out = sample_negatives(&[inst], &l, 10, 3).unwrap();
        for neg in out.iter().filter(|i| i.label < 0.0) {
            assert!(neg.item.unwrap() < 3);
        }
    }

    #[test]
    fn candidates_contain_positive_exactly_once() {
        let known: HashSet<u32> = [1, 2, 3, 4, 5].into_iter().collect();
        let candidates = build_eval_candidates(7, 9, 200, &known, 99, 11).unwrap();
        assert_eq!(candidates.len(), 100);
        assert_eq!(candidates.iter().filter(|&&i| i == 9).count(), 1);
        let distinct: HashSet<_> = candidates.iter().collect();
        assert_eq!(distinct.len(), 100);
        for &c in &candidates {
            assert!(c == 9 || !known.contains(&c));
        }
    }

    #[test]
    fn candidates_deterministic_per_seed_and_user() {
        let known: HashSet<u32> = HashSet::new();
        let a = build_eval_candidates(7, 9, 200, &known, 99, 11).unwrap();
        let b = build_eval_candidates(7, 9, 200, &known, 99, 11).unwrap();
        assert_eq!(a, b);
        let c = build_eval_candidates(8, 9, 200, &known, 99, 11).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn insufficient_pool_reports_available_count() {
        let known: HashSet<u32> = (0..95).collect();
        match build_eval_candidates(1, 99, 100, &known, 99, 5) {
            Err(SampleError::InsufficientItems { needed, available }) => {
                assert_eq!(needed, 99);
                assert_eq!(available, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
