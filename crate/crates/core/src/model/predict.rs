//! Forward evaluation: distance functions, transformation weight, the
//! naive pairwise prediction (the brute-force oracle), and the dispatching
//! [`predict`] / [`Scorer`] that route eligible configurations through the
//! fast two-pass forms.

use rand::Rng;

use crate::linalg::{dot, norm2, sub, Matrix};
use crate::scalar::Scalar;

use super::fast::{second_order_dnn_fast, second_order_mahalanobis_fast};
use super::params::{MlpLayer, ModelParams};
use super::spec::{DistanceKind, DistanceSpec};

/// Guard for the cosine denominator.
pub const COSINE_EPS: f64 = 1e-12;

/// Sorted, distinct nonzero entries of one instance.
///
/// Prediction functions take plain `&[(usize, F)]` slices; this newtype is
/// the validated owner for callers assembling active sets by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet<F> {
    pairs: Vec<(usize, F)>,
}

impl<F: Scalar> ActiveSet<F> {
    pub fn new(pairs: Vec<(usize, F)>) -> Result<Self, String> {
        for win in pairs.windows(2) {
            if win[0].0 >= win[1].0 {
                return Err(format!(
                    "active-set indices must be strictly increasing, got {} then {}",
                    win[0].0, win[1].0
                ));
            }
        }
        Ok(ActiveSet { pairs })
    }

    pub fn pairs(&self) -> &[(usize, F)] {
        &self.pairs
    }
}

/// Per-instance inverted-dropout masks: one mask per active attribute per
/// gap between consecutive transform layers. Sampled once and frozen for
/// the whole forward/backward of that instance.
#[derive(Debug, Clone)]
pub struct DropoutPlan<F> {
    masks: Vec<Vec<Vec<F>>>,
}

impl<F: Scalar> DropoutPlan<F> {
    /// Samples masks for `num_attrs` attributes and `layers` transform
    /// layers. Returns `None` when no mask would ever apply (rate 0 or
    /// fewer than two layers).
    pub fn sample<R: Rng + ?Sized>(
        num_attrs: usize,
        layers: usize,
        k: usize,
        rate: F,
        rng: &mut R,
    ) -> Option<Self> {
        if rate <= F::zero() || layers < 2 {
            return None;
        }
        let keep = F::one() - rate;
        let inv_keep = F::one() / keep;
        let gaps = layers - 1;
        let masks = (0..num_attrs)
            .map(|_| {
                (0..gaps)
                    .map(|_| {
                        (0..k)
                            .map(|_| {
                                if F::from_f64(rng.gen::<f64>()) < keep {
                                    inv_keep
                                } else {
                                    F::zero()
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Some(DropoutPlan { masks })
    }

    /// Masks for one active attribute, one per layer gap.
    pub fn for_attr(&self, pos: usize) -> &[Vec<F>] {
        &self.masks[pos]
    }
}

/// Applies the transform stack: `v <- tanh(W_l v + b_l)` for each layer,
/// with an inverted-dropout mask between consecutive layers when `masks`
/// is present (training); absent masks give deterministic evaluation.
pub fn transform_mlp<F: Scalar>(v: &[F], mlp: &[MlpLayer<F>], masks: Option<&[Vec<F>]>) -> Vec<F> {
    let mut cur = v.to_vec();
    for (l, layer) in mlp.iter().enumerate() {
        if l > 0 {
            if let Some(ms) = masks {
                for (c, &m) in cur.iter_mut().zip(&ms[l - 1]) {
                    *c *= m;
                }
            }
        }
        let mut z = layer.w.matvec(&cur);
        for (zi, &bi) in z.iter_mut().zip(&layer.b) {
            *zi = (*zi + bi).tanh();
        }
        cur = z;
    }
    cur
}

/// `M = L^T L`; symmetric and positive semi-definite for any real `L`.
pub fn psd_from_factor<F: Scalar>(l: &Matrix<F>) -> Matrix<F> {
    l.gram()
}

/// Transformation weight `w_ij = h^T (v_i ⊙ v_j)`; spans all reals, which
/// is what lets non-negative distances act with either sign.
pub fn transformation_weight<F: Scalar>(h: &[F], v_i: &[F], v_j: &[F]) -> F {
    debug_assert_eq!(h.len(), v_i.len());
    debug_assert_eq!(h.len(), v_j.len());
    // elementwise product first: keeps the value bitwise symmetric in v_i, v_j
    h.iter()
        .zip(v_i)
        .zip(v_j)
        .map(|((&hm, &a), &b)| hm * (a * b))
        .sum()
}

fn minkowski_p1<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

fn minkowski_pinf<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut best = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = (x - y).abs();
        if d > best {
            best = d;
        }
    }
    best
}

fn cosine<F: Scalar>(a: &[F], b: &[F]) -> F {
    let denom = norm2(a).sqrt() * norm2(b).sqrt() + F::from_f64(COSINE_EPS);
    dot(a, b) / denom
}

fn quadratic_form<F: Scalar>(m: &Matrix<F>, d: &[F]) -> F {
    dot(d, &m.matvec(d))
}

/// Interaction value for one pair of embeddings under `spec`, evaluated
/// deterministically (no dropout). Squared forms for euclidean, mahalanobis
/// and dnn; the Minkowski variants carry their 1/p root (identity for p=1,
/// max for p=inf).
pub fn distance<F: Scalar>(
    spec: &DistanceSpec,
    v_i: &[F],
    v_j: &[F],
    params: &ModelParams<F>,
) -> F {
    let transform = |v: &[F]| -> Vec<F> {
        if spec.transforms() {
            transform_mlp(v, &params.mlp, None)
        } else {
            v.to_vec()
        }
    };
    match spec.kind {
        DistanceKind::Inner => dot(v_i, v_j),
        DistanceKind::Euclidean => norm2(&sub(v_i, v_j)),
        DistanceKind::Mahalanobis => {
            let m = psd_from_factor(&params.l);
            quadratic_form(&m, &sub(v_i, v_j))
        }
        DistanceKind::Dnn => norm2(&sub(&transform(v_i), &transform(v_j))),
        DistanceKind::Manhattan => minkowski_p1(&transform(v_i), &transform(v_j)),
        DistanceKind::Chebyshev => minkowski_pinf(&transform(v_i), &transform(v_j)),
        DistanceKind::Cosine => cosine(&transform(v_i), &transform(v_j)),
    }
}

/// Transforms each active embedding exactly once (masks frozen per
/// attribute) when the spec calls for it.
fn transformed_rows<F: Scalar>(
    params: &ModelParams<F>,
    active: &[(usize, F)],
    spec: &DistanceSpec,
    plan: Option<&DropoutPlan<F>>,
) -> Option<Vec<Vec<F>>> {
    if !spec.transforms() {
        return None;
    }
    Some(
        active
            .iter()
            .enumerate()
            .map(|(pos, &(idx, _))| {
                transform_mlp(params.v.row(idx), &params.mlp, plan.map(|p| p.for_attr(pos)))
            })
            .collect(),
    )
}

fn pair_interaction<F: Scalar>(
    kind: DistanceKind,
    raw_i: &[F],
    raw_j: &[F],
    hat_i: &[F],
    hat_j: &[F],
    m: Option<&Matrix<F>>,
) -> F {
    match kind {
        DistanceKind::Inner => dot(raw_i, raw_j),
        DistanceKind::Euclidean => norm2(&sub(raw_i, raw_j)),
        DistanceKind::Mahalanobis => {
            quadratic_form(m.expect("metric matrix required"), &sub(raw_i, raw_j))
        }
        DistanceKind::Dnn => norm2(&sub(hat_i, hat_j)),
        DistanceKind::Manhattan => minkowski_p1(hat_i, hat_j),
        DistanceKind::Chebyshev => minkowski_pinf(hat_i, hat_j),
        DistanceKind::Cosine => cosine(hat_i, hat_j),
    }
}

fn linear_part<F: Scalar>(params: &ModelParams<F>, active: &[(usize, F)]) -> F {
    let mut acc = params.w0;
    for &(idx, x) in active {
        acc += params.w[idx] * x;
    }
    acc
}

/// Direct pairwise evaluation of the target:
/// `w0 + sum_i w_i x_i + sum_{i<j} w_ij D(v_i, v_j) x_i x_j`
/// with `w_ij = h^T(v_i ⊙ v_j)` when the transformation weight is on and 1
/// otherwise. This is the brute-force oracle the fast paths are checked
/// against.
pub fn predict_naive<F: Scalar>(
    params: &ModelParams<F>,
    active: &[(usize, F)],
    spec: &DistanceSpec,
    plan: Option<&DropoutPlan<F>>,
) -> F {
    let hats = transformed_rows(params, active, spec, plan);
    let m = (spec.kind == DistanceKind::Mahalanobis).then(|| psd_from_factor(&params.l));
    linear_part(params, active) + second_order_naive(params, active, spec, hats.as_deref(), m.as_ref())
}

fn second_order_naive<F: Scalar>(
    params: &ModelParams<F>,
    active: &[(usize, F)],
    spec: &DistanceSpec,
    hats: Option<&[Vec<F>]>,
    m: Option<&Matrix<F>>,
) -> F {
    let mut acc = F::zero();
    for i in 0..active.len() {
        let (idx_i, x_i) = active[i];
        let raw_i = params.v.row(idx_i);
        for j in i + 1..active.len() {
            let (idx_j, x_j) = active[j];
            let raw_j = params.v.row(idx_j);
            let hat_i = hats.map_or(raw_i, |h| h[i].as_slice());
            let hat_j = hats.map_or(raw_j, |h| h[j].as_slice());
            let d = pair_interaction(spec.kind, raw_i, raw_j, hat_i, hat_j, m);
            let w_ij = if spec.use_weight {
                transformation_weight(&params.h, raw_i, raw_j)
            } else {
                F::one()
            };
            acc += w_ij * d * x_i * x_j;
        }
    }
    acc
}

/// Classic factorization-machine prediction over the active set,
/// `w0 + sum w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j`, evaluated through the
/// square-of-sums identity in O(k m).
pub fn vanilla_fm_predict<F: Scalar>(params: &ModelParams<F>, active: &[(usize, F)]) -> F {
    linear_part(params, active) + vanilla_fm_second_order(params, active)
}

/// Second-order term of the classic FM alone.
pub fn vanilla_fm_second_order<F: Scalar>(params: &ModelParams<F>, active: &[(usize, F)]) -> F {
    let k = params.k();
    let half = F::from_f64(0.5);
    let mut acc = F::zero();
    for f in 0..k {
        let mut s = F::zero();
        let mut q = F::zero();
        for &(idx, x) in active {
            let vf = params.v.get(idx, f);
            s += vf * x;
            q += vf * vf * x * x;
        }
        acc += half * (s * s - q);
    }
    acc
}

/// Shared read-only scorer; caches the metric matrix so repeated
/// predictions with a factored metric stay quadratic in k.
pub struct Scorer<'a, F: Scalar> {
    params: &'a ModelParams<F>,
    spec: &'a DistanceSpec,
    metric: Option<Matrix<F>>,
}

impl<'a, F: Scalar> Scorer<'a, F> {
    pub fn new(params: &'a ModelParams<F>, spec: &'a DistanceSpec) -> Self {
        let metric =
            (spec.kind == DistanceKind::Mahalanobis).then(|| psd_from_factor(&params.l));
        Scorer {
            params,
            spec,
            metric,
        }
    }

    /// Deterministic evaluation-mode prediction.
    pub fn predict(&self, active: &[(usize, F)]) -> F {
        self.predict_with_plan(active, None)
    }

    /// Prediction with optional frozen dropout masks (training mode).
    pub fn predict_with_plan(&self, active: &[(usize, F)], plan: Option<&DropoutPlan<F>>) -> F {
        let params = self.params;
        let spec = self.spec;
        if spec.has_fast_path() {
            let lin = linear_part(params, active);
            let second = match spec.kind {
                DistanceKind::Euclidean => {
                    let rows: Vec<&[F]> =
                        active.iter().map(|&(idx, _)| params.v.row(idx)).collect();
                    second_order_dnn_fast(active, &params.v, &rows, &params.h)
                }
                DistanceKind::Mahalanobis => second_order_mahalanobis_fast(
                    active,
                    &params.v,
                    self.metric.as_ref().expect("metric cached for mahalanobis"),
                    &params.h,
                ),
                DistanceKind::Dnn => {
                    let hats = transformed_rows(params, active, spec, plan)
                        .expect("dnn always transforms");
                    let refs: Vec<&[F]> = hats.iter().map(Vec::as_slice).collect();
                    second_order_dnn_fast(active, &params.v, &refs, &params.h)
                }
                _ => unreachable!("has_fast_path covers euclidean/mahalanobis/dnn"),
            };
            lin + second
        } else {
            // No simplification exists without the weight (the diagonal
            // cancellation needs w_ij built from v_i ⊙ v_j), nor for the
            // Minkowski/cosine kinds (cosine has D(v,v) = 1).
            predict_naive_cached(params, active, spec, plan, self.metric.as_ref())
        }
    }
}

fn predict_naive_cached<F: Scalar>(
    params: &ModelParams<F>,
    active: &[(usize, F)],
    spec: &DistanceSpec,
    plan: Option<&DropoutPlan<F>>,
    m: Option<&Matrix<F>>,
) -> F {
    let hats = transformed_rows(params, active, spec, plan);
    linear_part(params, active) + second_order_naive(params, active, spec, hats.as_deref(), m)
}

/// One-shot prediction; dispatches to the fast two-pass forms for
/// euclidean/mahalanobis/dnn with the transformation weight on, and to the
/// naive pairwise path otherwise.
pub fn predict<F: Scalar>(
    params: &ModelParams<F>,
    active: &[(usize, F)],
    spec: &DistanceSpec,
    plan: Option<&DropoutPlan<F>>,
) -> F {
    Scorer::new(params, spec).predict_with_plan(active, plan)
}
