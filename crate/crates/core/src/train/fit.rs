//! Mini-batch epochs and the outer fit loop with best-by-validation
//! retention and early stopping.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::data::DatasetSplit;
use crate::gradtape::GradientMap;
use crate::model::{loss_graph, DistanceSpec, DropoutPlan, ModelError, ModelParams};
use crate::scalar::Scalar;

use super::optim::{adam_step, apply_l2, clip_global_norm, sgd_step, AdamState};
use super::{HyperError, HyperParams, OptimizerKind};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Hyper(#[from] HyperError),
    #[error("training set is empty")]
    EmptyTrain,
    #[error("non-finite loss in batch {batch} at instance {instance}")]
    NonFiniteLoss { batch: usize, instance: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("validation failed: {0}")]
    Validation(String),
}

/// Per-epoch bookkeeping; exported as one delimiter-separated line each.
#[derive(Debug, Clone)]
pub struct EpochStats<F> {
    pub epoch: usize,
    pub train_loss: F,
    pub val_metric: Option<F>,
    pub wall_secs: f64,
}

/// Validation hook: evaluates the current parameters and reports a metric
/// to improve on (direction given by `higher_is_better`).
pub struct Validator<'a, F> {
    pub name: String,
    pub higher_is_better: bool,
    #[allow(clippy::type_complexity)]
    pub eval: Box<dyn FnMut(&ModelParams<F>) -> Result<F, String> + 'a>,
}

/// One pass over the training set: seeded shuffle, mini-batches, one
/// optimizer step per batch with the batch gradient summed over instances.
/// Returns the mean per-instance loss.
pub fn train_epoch<F: Scalar, R: Rng + ?Sized>(
    params: &mut ModelParams<F>,
    adam: &mut Option<AdamState<F>>,
    train: &[crate::data::SparseInstance<F>],
    spec: &DistanceSpec,
    hyper: &HyperParams<F>,
    rng: &mut R,
) -> Result<F, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);

    let mut total_loss = F::zero();
    for (batch_idx, chunk) in order.chunks(hyper.batch_size).enumerate() {
        let mut batch_grads = GradientMap::default();
        for &inst_idx in chunk {
            let inst = &train[inst_idx];
            let active = inst.entries();
            let plan = if spec.transforms() {
                DropoutPlan::sample(active.len(), spec.layers, hyper.k, hyper.dropout, rng)
            } else {
                None
            };
            let mut tape = crate::gradtape::Tape::new();
            let (loss_node, _) =
                loss_graph(&mut tape, params, active, spec, plan.as_ref(), inst.label)?;
            let loss = tape
                .value(loss_node)
                .as_scalar()
                .expect("loss node is scalar");
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    batch: batch_idx,
                    instance: inst_idx,
                });
            }
            total_loss += loss;
            let grads = tape.backward(loss_node).map_err(ModelError::from)?;
            batch_grads.merge(&grads);
        }
        apply_l2(params, &mut batch_grads, hyper.l2);
        if let Some(max_norm) = hyper.grad_clip {
            clip_global_norm(&mut batch_grads, max_norm);
        }
        match hyper.optimizer {
            OptimizerKind::Sgd => sgd_step(params, &batch_grads, hyper.lr),
            OptimizerKind::Adam => adam_step(
                params,
                adam.as_mut().expect("adam state present for adam runs"),
                &batch_grads,
                hyper,
            ),
        }
    }
    Ok(total_loss / F::from_f64(train.len() as f64))
}

/// Trains up to `hyper.epochs` epochs. With a validator and a non-empty
/// validation set, the best-scoring parameters are retained and training
/// stops after `patience` epochs without improvement; otherwise all epochs
/// run and the final parameters are returned.
pub fn fit<F: Scalar>(
    split: &DatasetSplit<F>,
    spec: &DistanceSpec,
    hyper: &HyperParams<F>,
    mut validator: Option<Validator<'_, F>>,
) -> Result<(ModelParams<F>, Vec<EpochStats<F>>), TrainError> {
    hyper.validate()?;
    if split.train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(hyper.seed);
    let mut params = super::init_params(&split.layout, hyper, spec, &mut rng);
    let mut adam = matches!(hyper.optimizer, OptimizerKind::Adam).then(AdamState::new);

    let validate = validator.is_some() && !split.validation.is_empty();
    let mut best: Option<(F, ModelParams<F>)> = None;
    let mut stale_epochs = 0usize;
    let mut history = Vec::new();

    for epoch in 1..=hyper.epochs {
        let start = Instant::now();
        let train_loss = train_epoch(&mut params, &mut adam, &split.train, spec, hyper, &mut rng)?;
        let val_metric = if validate {
            let v = validator.as_mut().unwrap();
            Some((v.eval)(&params).map_err(TrainError::Validation)?)
        } else {
            None
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_metric,
            wall_secs: start.elapsed().as_secs_f64(),
        });
        if let Some(metric) = val_metric {
            let higher = validator.as_ref().unwrap().higher_is_better;
            let improved = best
                .as_ref()
                .map_or(true, |(b, _)| if higher { metric > *b } else { metric < *b });
            if improved {
                best = Some((metric, params.clone()));
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= hyper.patience {
                    break;
                }
            }
        }
    }

    let final_params = match best {
        Some((_, p)) => p,
        None => params,
    };
    Ok((final_params, history))
}

/// One line per epoch: epoch, train loss, validation metric (empty when
/// absent), wall seconds; tab-separated with a header.
pub fn write_history<F: Scalar>(
    stats: &[EpochStats<F>],
    out: &mut dyn Write,
) -> std::io::Result<()> {
    writeln!(out, "epoch\ttrain_loss\tval_metric\twall_secs")?;
    for s in stats {
        match s.val_metric {
            Some(v) => writeln!(out, "{}\t{}\t{}\t{:.3}", s.epoch, s.train_loss, v, s.wall_secs)?,
            None => writeln!(out, "{}\t{}\t\t{:.3}", s.epoch, s.train_loss, s.wall_secs)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FieldLayout;
    use crate::gradtape::ParamKey;
    use crate::model::{predict, DistanceKind};

    fn spec(kind: DistanceKind, weight: bool, layers: usize) -> DistanceSpec {
        DistanceSpec::new(kind, weight, layers).unwrap()
    }

    /// Synthetic targets that a linear-plus-inner model can reach.
    fn linear_split(seed: u64) -> DatasetSplit<f64> {
        let layout = FieldLayout::from_cardinalities([("user", 6), ("item", 7)]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let user_bias: Vec<f64> = (0..6).map(|_| f64::standard_normal(&mut rng)).collect();
        let item_bias: Vec<f64> = (0..7).map(|_| f64::standard_normal(&mut rng)).collect();
        let mut instances = Vec::new();
        for u in 0..6usize {
            for i in 0..7usize {
                let mut inst = layout
                    .encode_instance(&[u, i], user_bias[u] + item_bias[i])
                    .unwrap();
                inst.timestamp = Some((u * 7 + i) as i64);
                instances.push(inst);
            }
        }
        DatasetSplit {
            train: instances,
            validation: Vec::new(),
            test: Vec::new(),
            layout,
        }
    }

    #[test]
    fn loss_decreases_on_reachable_task() {
        let split = linear_split(3);
        let hyper = HyperParams::<f64> {
            k: 4,
            lr: 0.05,
            batch_size: 8,
            epochs: 5,
            dropout: 0.0,
            seed: 7,
            ..HyperParams::default()
        };
        let sp = spec(DistanceKind::Inner, false, 0);
        let (_, history) = fit(&split, &sp, &hyper, None).unwrap();
        assert_eq!(history.len(), 5);
        for pair in history.windows(2) {
            assert!(
                pair[1].train_loss < pair[0].train_loss,
                "loss must strictly decrease: {:?}",
                history.iter().map(|h| h.train_loss).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn batch_size_covering_dataset_gives_one_step_per_epoch() {
        let split = linear_split(5);
        let hyper = HyperParams::<f64> {
            k: 3,
            batch_size: 10_000,
            epochs: 3,
            dropout: 0.0,
            seed: 1,
            ..HyperParams::default()
        };
        let sp = spec(DistanceKind::Euclidean, true, 0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut params = super::super::init_params(&split.layout, &hyper, &sp, &mut rng);
        let mut adam = Some(AdamState::new());
        for _ in 0..3 {
            train_epoch(&mut params, &mut adam, &split.train, &sp, &hyper, &mut rng).unwrap();
        }
        // w0 is touched by every instance, so its step count equals the
        // number of optimizer steps taken.
        assert_eq!(adam.unwrap().steps(ParamKey::Bias), 3);
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let split = linear_split(11);
        let hyper = HyperParams::<f64> {
            k: 3,
            epochs: 0,
            seed: 123,
            ..HyperParams::default()
        };
        let sp = spec(DistanceKind::Inner, false, 0);
        let (params, history) = fit(&split, &sp, &hyper, None).unwrap();
        assert!(history.is_empty());
        let mut rng = ChaCha20Rng::seed_from_u64(123);
        let expected = super::super::init_params(&split.layout, &hyper, &sp, &mut rng);
        assert_eq!(params, expected);
    }

    #[test]
    fn inactive_embedding_rows_stay_bit_identical() {
        let split = linear_split(13);
        let hyper = HyperParams::<f64> {
            k: 4,
            batch_size: 4,
            epochs: 1,
            dropout: 0.0,
            l2: 0.0,
            seed: 2,
            ..HyperParams::default()
        };
        let sp = spec(DistanceKind::Mahalanobis, true, 0);
        // Train on instances touching only user 0 and items 0..3.
        let train: Vec<_> = split
            .train
            .iter()
            .filter(|i| i.user == Some(0) && i.item.unwrap() < 3)
            .cloned()
            .collect();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut params = super::super::init_params(&split.layout, &hyper, &sp, &mut rng);
        let before = params.clone();
        let mut adam = Some(AdamState::new());
        train_epoch(&mut params, &mut adam, &train, &sp, &hyper, &mut rng).unwrap();
        // user0 row moved
        assert_ne!(params.v.row(0), before.v.row(0));
        // an untouched user row is bit-identical
        assert_eq!(params.v.row(3), before.v.row(3));
        assert_eq!(params.w[3], before.w[3]);
    }

    #[test]
    fn patience_stops_after_configured_stale_epochs() {
        let split = {
            let mut s = linear_split(17);
            s.validation = s.train.clone();
            s
        };
        let hyper = HyperParams::<f64> {
            k: 3,
            epochs: 50,
            patience: 1,
            dropout: 0.0,
            seed: 3,
            ..HyperParams::default()
        };
        let sp = spec(DistanceKind::Inner, false, 0);
        let mut calls = 0usize;
        let validator = Validator {
            name: "worsening".into(),
            higher_is_better: true,
            eval: Box::new(move |_| {
                calls += 1;
                Ok(-(calls as f64)) // strictly worsening after epoch 1
            }),
        };
        let (_, history) = fit(&split, &sp, &hyper, Some(validator)).unwrap();
        assert_eq!(history.len(), 2, "stops at epoch 2 with patience 1");
    }

    #[test]
    fn empty_validation_runs_all_epochs_and_returns_final() {
        let split = linear_split(19);
        let hyper = HyperParams::<f64> {
            k: 3,
            epochs: 4,
            dropout: 0.0,
            seed: 4,
            ..HyperParams::default()
        };
        let sp = spec(DistanceKind::Inner, false, 0);
        let validator = Validator {
            name: "unused".into(),
            higher_is_better: true,
            eval: Box::new(|_| panic!("must not be called with empty validation")),
        };
        let (_, history) = fit(&split, &sp, &hyper, Some(validator)).unwrap();
        assert_eq!(history.len(), 4);
        assert!(history.iter().all(|h| h.val_metric.is_none()));
    }

    #[test]
    fn overfits_one_repeated_instance_with_dnn() {
        let layout = FieldLayout::from_cardinalities([("user", 2), ("item", 2)]).unwrap();
        let inst = layout.encode_instance(&[0usize, 1], 1.0f64).unwrap();
        let split = DatasetSplit {
            train: vec![inst.clone(); 8],
            validation: Vec::new(),
            test: Vec::new(),
            layout,
        };
        let hyper = HyperParams::<f64> {
            k: 8,
            lr: 0.01,
            batch_size: 8,
            epochs: 300,
            dropout: 0.0,
            seed: 5,
            ..HyperParams::default()
        };
        let sp = spec(DistanceKind::Dnn, true, 2);
        let (params, history) = fit(&split, &sp, &hyper, None).unwrap();
        let final_loss = history.last().unwrap().train_loss;
        assert!(final_loss < 1e-3, "final loss {final_loss}");
        let pred = predict(&params, inst.entries(), &sp, None);
        assert!((pred - 1.0).abs() < 0.05, "prediction {pred}");
    }

    #[test]
    fn fit_is_bit_deterministic_under_seed() {
        let split = linear_split(23);
        let hyper = HyperParams::<f64> {
            k: 4,
            epochs: 3,
            batch_size: 8,
            dropout: 0.0,
            seed: 77,
            ..HyperParams::default()
        };
        let sp = spec(DistanceKind::Mahalanobis, true, 0);
        let (a, _) = fit(&split, &sp, &hyper, None).unwrap();
        let (b, _) = fit(&split, &sp, &hyper, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn history_export_shape() {
        let stats = vec![
            EpochStats {
                epoch: 1,
                train_loss: 0.5f64,
                val_metric: Some(0.25),
                wall_secs: 0.01,
            },
            EpochStats {
                epoch: 2,
                train_loss: 0.4,
                val_metric: None,
                wall_secs: 0.02,
            },
        ];
        let mut buf = Vec::new();
        write_history(&stats, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1\t0.5\t0.25\t"));
        assert!(lines[2].starts_with("2\t0.4\t\t"));
    }
}
