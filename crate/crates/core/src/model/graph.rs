//! Records one prediction (or squared loss) on a tape so that `backward`
//! yields gradients for every active parameter.
//!
//! The recorded computation is the naive pairwise form; with the small
//! per-instance field counts of one-hot data this keeps the tape compact,
//! and its value agrees with the dispatching forward path to rounding.
//! Each active embedding is transformed at most once, with dropout masks
//! entering as constants so one forward/backward sees a frozen mask.

use crate::gradtape::{NodeId, ParamKey, Tape, TapeError, Value};
use crate::scalar::Scalar;

use super::predict::{DropoutPlan, COSINE_EPS};
use super::params::ModelParams;
use super::spec::{DistanceKind, DistanceSpec};
use super::ModelError;

struct LayerNodes {
    w: NodeId,
    b: NodeId,
}

/// Records `yhat(x)` for one instance; returns the scalar prediction node.
pub fn prediction_graph<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ModelParams<F>,
    active: &[(usize, F)],
    spec: &DistanceSpec,
    plan: Option<&DropoutPlan<F>>,
) -> Result<NodeId, ModelError> {
    for &(idx, _) in active {
        if idx >= params.n() {
            return Err(ModelError::IndexOutOfRange {
                index: idx,
                n: params.n(),
            });
        }
    }
    Ok(build_prediction(tape, params, active, spec, plan)?)
}

/// Records the squared loss `(yhat - y)^2`; returns (loss, prediction).
pub fn loss_graph<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ModelParams<F>,
    active: &[(usize, F)],
    spec: &DistanceSpec,
    plan: Option<&DropoutPlan<F>>,
    target: F,
) -> Result<(NodeId, NodeId), ModelError> {
    let pred = prediction_graph(tape, params, active, spec, plan)?;
    let neg_target = tape.scalar(-target);
    let residual = tape.add(pred, neg_target)?;
    let loss = tape.square(residual)?;
    Ok((loss, pred))
}

fn build_prediction<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ModelParams<F>,
    active: &[(usize, F)],
    spec: &DistanceSpec,
    plan: Option<&DropoutPlan<F>>,
) -> Result<NodeId, TapeError> {
    // Linear part.
    let mut acc = tape.param(ParamKey::Bias, Value::Scalar(params.w0));
    let mut embeds = Vec::with_capacity(active.len());
    for &(idx, x) in active {
        let w_i = tape.param(ParamKey::Linear(idx as u32), Value::Scalar(params.w[idx]));
        let scaled = tape.scale(w_i, x)?;
        acc = tape.add(acc, scaled)?;
        embeds.push(tape.param(
            ParamKey::Embed(idx as u32),
            Value::Vector(params.v.row(idx).to_vec()),
        ));
    }

    // Shared leaves.
    let h_node = spec
        .use_weight
        .then(|| tape.param(ParamKey::Weight, Value::Vector(params.h.clone())));
    let factor_node = (spec.kind == DistanceKind::Mahalanobis)
        .then(|| tape.param(ParamKey::Factor, Value::Matrix(params.l.clone())));
    let layer_nodes: Vec<LayerNodes> = if spec.transforms() {
        params
            .mlp
            .iter()
            .enumerate()
            .map(|(l, layer)| LayerNodes {
                w: tape.param(ParamKey::LayerW(l as u8), Value::Matrix(layer.w.clone())),
                b: tape.param(ParamKey::LayerB(l as u8), Value::Vector(layer.b.clone())),
            })
            .collect()
    } else {
        Vec::new()
    };

    // Per-attribute transforms, each recorded once.
    let transformed: Vec<NodeId> = if spec.transforms() {
        let mut out = Vec::with_capacity(active.len());
        for (pos, &v) in embeds.iter().enumerate() {
            out.push(mlp_graph(
                tape,
                &layer_nodes,
                v,
                plan.map(|p| p.for_attr(pos)),
            )?);
        }
        out
    } else {
        embeds.clone()
    };

    // Pairwise second-order terms.
    for i in 0..active.len() {
        for j in i + 1..active.len() {
            let d = pair_graph(tape, spec, embeds[i], embeds[j], transformed[i], transformed[j], factor_node)?;
            let term = match h_node {
                Some(h) => {
                    let had = tape.mul(embeds[i], embeds[j])?;
                    let w_ij = tape.dot(h, had)?;
                    tape.mul(w_ij, d)?
                }
                None => d,
            };
            let x_i = active[i].1;
            let x_j = active[j].1;
            let scaled = tape.scale(term, x_i * x_j)?;
            acc = tape.add(acc, scaled)?;
        }
    }
    Ok(acc)
}

fn mlp_graph<F: Scalar>(
    tape: &mut Tape<F>,
    layers: &[LayerNodes],
    v: NodeId,
    masks: Option<&[Vec<F>]>,
) -> Result<NodeId, TapeError> {
    let mut cur = v;
    for (l, layer) in layers.iter().enumerate() {
        if l > 0 {
            if let Some(ms) = masks {
                let mask = tape.vector(ms[l - 1].clone());
                cur = tape.mul(cur, mask)?;
            }
        }
        let z = tape.matvec(layer.w, cur)?;
        let zb = tape.add(z, layer.b)?;
        cur = tape.tanh(zb)?;
    }
    Ok(cur)
}

fn pair_graph<F: Scalar>(
    tape: &mut Tape<F>,
    spec: &DistanceSpec,
    raw_i: NodeId,
    raw_j: NodeId,
    hat_i: NodeId,
    hat_j: NodeId,
    factor: Option<NodeId>,
) -> Result<NodeId, TapeError> {
    let diff = |tape: &mut Tape<F>, a: NodeId, b: NodeId| -> Result<NodeId, TapeError> {
        let neg = tape.scale(b, -F::one())?;
        tape.add(a, neg)
    };
    match spec.kind {
        DistanceKind::Inner => tape.dot(raw_i, raw_j),
        DistanceKind::Euclidean => {
            let d = diff(tape, raw_i, raw_j)?;
            tape.dot(d, d)
        }
        DistanceKind::Mahalanobis => {
            let d = diff(tape, raw_i, raw_j)?;
            let ld = tape.matvec(factor.expect("factor leaf for mahalanobis"), d)?;
            tape.dot(ld, ld)
        }
        DistanceKind::Dnn => {
            let d = diff(tape, hat_i, hat_j)?;
            tape.dot(d, d)
        }
        DistanceKind::Manhattan => {
            let d = diff(tape, hat_i, hat_j)?;
            let a = tape.abs(d)?;
            tape.sum(a)
        }
        DistanceKind::Chebyshev => {
            let d = diff(tape, hat_i, hat_j)?;
            let a = tape.abs(d)?;
            tape.max_select(a)
        }
        DistanceKind::Cosine => {
            let num = tape.dot(hat_i, hat_j)?;
            let sq_i = tape.dot(hat_i, hat_i)?;
            let sq_j = tape.dot(hat_j, hat_j)?;
            let n_i = tape.sqrt(sq_i)?;
            let n_j = tape.sqrt(sq_j)?;
            let prod = tape.mul(n_i, n_j)?;
            let eps = tape.scalar(F::from_f64(COSINE_EPS));
            let denom = tape.add(prod, eps)?;
            let inv = tape.recip(denom)?;
            tape.mul(num, inv)
        }
    }
}
