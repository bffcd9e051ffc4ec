//! Protocol-faithful dataset splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;


use super::instance::SparseInstance;
use super::layout::FieldLayout;

/// Train / validation / test partition plus the shared layout.
#[derive(Debug, Clone)]
pub struct DatasetSplit<F> {
    pub train: Vec<SparseInstance<F>>,
    pub validation: Vec<SparseInstance<F>>,
    pub test: Vec<SparseInstance<F>>,
    pub layout: FieldLayout,
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("ratios must sum to 1 (got {0})")]
    BadRatios(f64),
    #[error("need at least {needed} instances, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("leave-one-out requires timestamps on every instance")]
    MissingTimestamps,
    #[error("leave-one-out requires user identifiers on every instance")]
    MissingUsers,
}

/// Uniform random partition by seed; sizes land within one instance of the
/// exact proportions.
pub fn split_rating<F: crate::scalar::Scalar>(
    instances: Vec<SparseInstance<F>>,
    layout: FieldLayout,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit<F>, SplitError> {
    let total = ratios.0 + ratios.1 + ratios.2;
    if (total - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadRatios(total));
    }
    if instances.len() < 10 {
        return Err(SplitError::TooFew {
            needed: 10,
            got: instances.len(),
        });
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let len = instances.len() as f64;
    let cut_train = (ratios.0 * len).round() as usize;
    let cut_val = ((ratios.0 + ratios.1) * len).round() as usize;

    let mut slots: Vec<u8> = vec![0; instances.len()];
    for (pos, &idx) in order.iter().enumerate() {
        slots[idx] = if pos < cut_train {
            0
        } else if pos < cut_val {
            1
        } else {
            2
        };
    }

    let mut train = Vec::with_capacity(cut_train);
    let mut validation = Vec::with_capacity(cut_val - cut_train);
    let mut test = Vec::with_capacity(instances.len() - cut_val);
    for (inst, slot) in instances.into_iter().zip(slots) {
        match slot {
            0 => train.push(inst),
            1 => validation.push(inst),
            _ => test.push(inst),
        }
    }
    Ok(DatasetSplit {
        train,
        validation,
        test,
        layout,
    })
}

/// Per user, the interaction with the latest timestamp goes to test; ties
/// break toward the larger item id. Users with a single interaction stay
/// entirely in train. Validation is empty.
pub fn split_leave_one_out<F: crate::scalar::Scalar>(
    instances: Vec<SparseInstance<F>>,
    layout: FieldLayout,
) -> Result<DatasetSplit<F>, SplitError> {
    if instances.iter().any(|i| i.timestamp.is_none()) {
        return Err(SplitError::MissingTimestamps);
    }
    if instances.iter().any(|i| i.user.is_none()) {
        return Err(SplitError::MissingUsers);
    }

    use std::collections::HashMap;
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for inst in &instances {
        *counts.entry(inst.user.unwrap()).or_default() += 1;
    }

    // (timestamp, item) argmax per user; item id breaks timestamp ties.
    let mut latest: HashMap<u32, (usize, (i64, u32))> = HashMap::new();
    for (pos, inst) in instances.iter().enumerate() {
        let user = inst.user.unwrap();
        if counts[&user] < 2 {
            continue;
        }
        let key = (inst.timestamp.unwrap(), inst.item.unwrap_or(0));
        match latest.get(&user) {
            Some(&(_, best)) if best >= key => {}
            _ => {
                latest.insert(user, (pos, key));
            }
        }
    }
    let test_positions: std::collections::HashSet<usize> =
        latest.values().map(|&(pos, _)| pos).collect();

    let mut train = Vec::with_capacity(instances.len() - test_positions.len());
    let mut test = Vec::with_capacity(test_positions.len());
    for (pos, inst) in instances.into_iter().enumerate() {
        if test_positions.contains(&pos) {
            test.push(inst);
        } else {
            train.push(inst);
        }
    }
    Ok(DatasetSplit {
        train,
        validation: Vec::new(),
        test,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_layout() -> FieldLayout {
        FieldLayout::from_cardinalities([("user", 100), ("item", 100)]).unwrap()
    }

    fn instance(user: u32, item: u32, t: i64) -> SparseInstance<f64> {
        let layout = toy_layout();
        let mut inst = layout
            .encode_instance(&[user as usize, item as usize], 1.0)
            .unwrap();
        inst.timestamp = Some(t);
        inst
    }

    #[test]
    fn hundred_instances_split_70_20_10() {
        let instances: Vec<_> = (0..100).map(|i| instance(i % 10, i % 7, i as i64)).collect();
        let split = split_rating(instances, toy_layout(), (0.7, 0.2, 0.1), 13).unwrap();
        assert_eq!(split.train.len(), 70);
        assert_eq!(split.validation.len(), 20);
        assert_eq!(split.test.len(), 10);
    }

    #[test]
    fn same_seed_same_partition() {
        let make = || (0..37).map(|i| instance(i % 5, i % 11, i as i64)).collect::<Vec<_>>();
        let a = split_rating(make(), toy_layout(), (0.7, 0.2, 0.1), 99).unwrap();
        let b = split_rating(make(), toy_layout(), (0.7, 0.2, 0.1), 99).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn degenerate_ratio_puts_everything_in_train() {
        let instances: Vec<_> = (0..12).map(|i| instance(i, i, i as i64)).collect();
        let split = split_rating(instances, toy_layout(), (1.0, 0.0, 0.0), 7).unwrap();
        assert_eq!(split.train.len(), 12);
        assert!(split.validation.is_empty() && split.test.is_empty());
    }

    #[test]
    fn bad_ratios_and_too_few_are_rejected() {
        let instances: Vec<_> = (0..12).map(|i| instance(i, i, i as i64)).collect();
        assert!(matches!(
            split_rating(instances.clone(), toy_layout(), (0.5, 0.2, 0.1), 7),
            Err(SplitError::BadRatios(_))
        ));
        assert!(matches!(
            split_rating(instances[..5].to_vec(), toy_layout(), (0.7, 0.2, 0.1), 7),
            Err(SplitError::TooFew { .. })
        ));
    }

    #[test]
    fn leave_one_out_takes_latest_timestamp() {
        let instances = vec![instance(1, 10, 1), instance(1, 11, 5), instance(1, 12, 3)];
        let split = split_leave_one_out(instances, toy_layout()).unwrap();
        assert_eq!(split.test.len(), 1);
        assert_eq!(split.test[0].item, Some(11));
        assert_eq!(split.train.len(), 2);
        assert!(split.validation.is_empty());
    }

    #[test]
    fn single_interaction_users_stay_in_train() {
        let instances = vec![instance(1, 10, 1), instance(2, 11, 5), instance(2, 12, 3)];
        let split = split_leave_one_out(instances, toy_layout()).unwrap();
        assert_eq!(split.test.len(), 1);
        assert_eq!(split.test[0].user, Some(2));
        assert!(split.train.iter().any(|i| i.user == Some(1)));
    }

    #[test]
    fn one_test_instance_per_user_at_most() {
        let instances = vec![
            instance(1, 10, 1),
            instance(1, 11, 2),
            instance(2, 12, 1),
            instance(2, 13, 2),
        ];
        let split = split_leave_one_out(instances, toy_layout()).unwrap();
        assert!(split.test.len() <= 2);
        let users: std::collections::HashSet<_> = split.test.iter().map(|i| i.user).collect();
        assert_eq!(users.len(), split.test.len());
    }

    #[test]
    fn timestamp_tie_breaks_toward_larger_item() {
        let instances = vec![instance(1, 10, 5), instance(1, 20, 5), instance(1, 15, 5)];
        let split = split_leave_one_out(instances, toy_layout()).unwrap();
        assert_eq!(split.test[0].item, Some(20));
    }

    #[test]
    fn no_train_instance_is_later_than_its_users_test() {
        let instances: Vec<_> = (0..50)
            .map(|i| instance(i % 7, i % 13, (i * 31 % 17) as i64))
            .collect();
        let split = split_leave_one_out(instances, toy_layout()).unwrap();
        for test_inst in &split.test {
            for train_inst in &split.train {
                if train_inst.user == test_inst.user {
                    assert!(train_inst.timestamp.unwrap() <= test_inst.timestamp.unwrap());
                }
            }
        }
    }

    #[test]
    fn missing_timestamps_rejected() {
        let layout = toy_layout();
        let inst = layout.encode_instance(&[0usize, 0], 1.0f64).unwrap();
        assert!(matches!(
            split_leave_one_out(vec![inst; 3], layout),
            Err(SplitError::MissingTimestamps)
        ));
    }
}
