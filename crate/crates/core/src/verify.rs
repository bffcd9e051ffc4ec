//! Self-check harnesses: fast-path-vs-oracle equivalence over a (k, m)
//! grid, and finite-difference validation of the recorded gradients for
//! every distance kind. The CLI exposes both as commands; the acceptance
//! suite drives them directly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::data::FieldLayout;
use crate::gradtape::{finite_difference_check, ClosureDiff, FdError, Tape};
use crate::model::{
    loss_graph, predict_naive, psd_from_factor, second_order_dnn_fast,
    second_order_mahalanobis_fast, transform_mlp, DistanceKind, DistanceSpec, ModelParams,
    SpecError,
};
use crate::scalar::Scalar;
use crate::util::mix_seed;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Fd(#[from] FdError),
    #[error(transparent)]
    Tape(#[from] crate::gradtape::TapeError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// One cell of the fast-vs-naive equivalence grid.
#[derive(Debug, Clone)]
pub struct OracleCell<F> {
    pub kind: DistanceKind,
    /// Transform depth; 0 for the factored-metric variant.
    pub layers: usize,
    pub k: usize,
    pub m: usize,
    pub trials: usize,
    pub max_rel_error: F,
}

impl<F: Scalar> OracleCell<F> {
    pub fn label(&self) -> String {
        match self.kind {
            DistanceKind::Dnn => format!("dnn/{}l k={} m={}", self.layers, self.k, self.m),
            _ => format!("{} k={} m={}", self.kind, self.k, self.m),
        }
    }
}

fn random_model<F: Scalar>(
    rng: &mut ChaCha20Rng,
    n: usize,
    k: usize,
    layers: usize,
    lo: f64,
    hi: f64,
) -> ModelParams<F> {
    let mut params = ModelParams::zeros(n, k, layers);
    let fill = |xs: &mut [F], rng: &mut ChaCha20Rng| {
        for x in xs {
            *x = F::from_f64(rng.gen_range(lo..hi));
        }
    };
    fill(&mut params.w, rng);
    fill(params.v.data_mut(), rng);
    fill(&mut params.h, rng);
    fill(params.l.data_mut(), rng);
    for layer in &mut params.mlp {
        fill(layer.w.data_mut(), rng);
        fill(&mut layer.b, rng);
    }
    params
}

/// Runs the fast-vs-naive equivalence grid for the factored-metric variant
/// and the transformed variant at 1 to 3 layers. `perturbation` is added to
/// the fast value and exists so the checker itself can be shown to flag a
/// broken fast path; pass zero for a real check.
pub fn oracle_check_with_perturbation<F: Scalar>(
    k_list: &[usize],
    m_list: &[usize],
    trials: usize,
    seed: u64,
    perturbation: F,
) -> Vec<OracleCell<F>> {
    let mut cells = Vec::new();
    let mut stream = 0u64;
    let variants: Vec<(DistanceKind, usize)> = std::iter::once((DistanceKind::Mahalanobis, 0))
        .chain((1..=3).map(|l| (DistanceKind::Dnn, l)))
        .collect();
    for &(kind, layers) in &variants {
        for &k in k_list {
            for &m in m_list {
                stream += 1;
                let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, stream));
                let spec = DistanceSpec::new(kind, true, layers).expect("variants are valid");
                let mut worst = F::zero();
                for _ in 0..trials {
                    // zero bias and linear weights: the naive prediction
                    // reduces to the pairwise second-order oracle
                    let mut params = random_model::<F>(&mut rng, m, k, layers, -1.0, 1.0);
                    params.w.iter_mut().for_each(|w| *w = F::zero());
                    let active: Vec<(usize, F)> = (0..m)
                        .map(|i| (i, F::from_f64(rng.gen_range(-1.0..1.0))))
                        .collect();
                    let naive = predict_naive(&params, &active, &spec, None);
                    let fast = match kind {
                        DistanceKind::Mahalanobis => {
                            let metric = psd_from_factor(&params.l);
                            second_order_mahalanobis_fast(&active, &params.v, &metric, &params.h)
                        }
                        DistanceKind::Dnn => {
                            let hats: Vec<Vec<F>> = active
                                .iter()
                                .map(|&(idx, _)| transform_mlp(params.v.row(idx), &params.mlp, None))
                                .collect();
                            let refs: Vec<&[F]> = hats.iter().map(Vec::as_slice).collect();
                            second_order_dnn_fast(&active, &params.v, &refs, &params.h)
                        }
                        _ => unreachable!(),
                    } + perturbation;
                    let rel = (fast - naive).abs() / naive.abs().max(F::one());
                    if rel > worst {
                        worst = rel;
                    }
                }
                cells.push(OracleCell {
                    kind,
                    layers,
                    k,
                    m,
                    trials,
                    max_rel_error: worst,
                });
            }
        }
    }
    cells
}

/// Fast-vs-naive equivalence grid (see
/// [`oracle_check_with_perturbation`]).
pub fn oracle_check<F: Scalar>(
    k_list: &[usize],
    m_list: &[usize],
    trials: usize,
    seed: u64,
) -> Vec<OracleCell<F>> {
    oracle_check_with_perturbation(k_list, m_list, trials, seed, F::zero())
}

/// Default grid of the equivalence check.
pub const ORACLE_K_DEFAULT: [usize; 3] = [4, 8, 16];
pub const ORACLE_M_DEFAULT: [usize; 7] = [2, 3, 4, 5, 6, 7, 8];
pub const ORACLE_TOLERANCE: f64 = 1e-10;

/// Gradient-check outcome for one distance configuration.
#[derive(Debug, Clone)]
pub struct GradCheckReport<F> {
    pub spec: DistanceSpec,
    pub max_rel_error: F,
    /// Worst relative error per parameter group (w0, w, V, h, L, W_l, b_l).
    pub groups: Vec<(String, F)>,
}

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Standard configuration per kind: the baseline runs unweighted, the
/// metric kinds carry the transformation weight, and the Minkowski/cosine
/// variants run over one transform layer.
pub fn default_gradcheck_specs() -> Vec<DistanceSpec> {
    vec![
        DistanceSpec::new(DistanceKind::Inner, false, 0).unwrap(),
        DistanceSpec::new(DistanceKind::Euclidean, true, 0).unwrap(),
        DistanceSpec::new(DistanceKind::Mahalanobis, true, 0).unwrap(),
        DistanceSpec::new(DistanceKind::Dnn, true, 1).unwrap(),
        DistanceSpec::new(DistanceKind::Dnn, true, 2).unwrap(),
        DistanceSpec::new(DistanceKind::Dnn, true, 3).unwrap(),
        DistanceSpec::new(DistanceKind::Manhattan, true, 1).unwrap(),
        DistanceSpec::new(DistanceKind::Chebyshev, true, 1).unwrap(),
        DistanceSpec::new(DistanceKind::Cosine, true, 1).unwrap(),
    ]
}

/// Checks the recorded squared-loss gradient of a random instance against
/// central finite differences, dropout off.
pub fn gradcheck_spec<F: Scalar>(
    spec: DistanceSpec,
    seed: u64,
    step: F,
) -> Result<GradCheckReport<F>, VerifyError> {
    let layout = FieldLayout::from_cardinalities([("user", 4), ("item", 5), ("ctx", 3)])
        .expect("static layout is valid");
    let k = 6;
    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, spec.kind.code() as u64 * 16 + spec.layers as u64));
    let mut params = random_model::<F>(&mut rng, layout.n(), k, spec.layers.max(1), -0.9, 0.9);
    if spec.layers == 0 {
        params.mlp.clear();
    }
    let active: Vec<(usize, F)> = vec![
        (rng.gen_range(0..4), F::one()),
        (4 + rng.gen_range(0..5), F::one()),
        (9 + rng.gen_range(0..3), F::one()),
    ];
    let label = if rng.gen::<bool>() { F::one() } else { -F::one() };

    let (flat, segments) = params.flatten(&spec);
    let eval_loss = |p: &[F]| -> Result<F, crate::gradtape::TapeError> {
        let mut model = params.clone();
        model.unflatten(p, &spec);
        let mut tape = Tape::new();
        let (loss, _) = loss_graph(&mut tape, &model, &active, &spec, None, label)
            .map_err(|e| match e {
                crate::model::ModelError::Tape(t) => t,
                other => panic!("graph construction failed: {other}"),
            })?;
        Ok(tape.value(loss).as_scalar().expect("loss is scalar"))
    };
    let mut diff = ClosureDiff {
        value: eval_loss,
        gradient: |p: &[F]| {
            let mut model = params.clone();
            model.unflatten(p, &spec);
            let mut tape = Tape::new();
            let (loss, _) = loss_graph(&mut tape, &model, &active, &spec, None, label)
                .map_err(|e| match e {
                    crate::model::ModelError::Tape(t) => t,
                    other => panic!("graph construction failed: {other}"),
                })?;
            let grads = tape.backward(loss)?;
            Ok(model.flatten_gradient(&grads, &spec))
        },
    };
    let report = finite_difference_check(&mut diff, &flat, step)?;
    let groups = segments
        .iter()
        .map(|seg| (seg.group.clone(), report.max_over(seg.range.clone())))
        .collect();
    Ok(GradCheckReport {
        spec,
        max_rel_error: report.max_rel_error,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_grid_passes_on_a_small_slice() {
        let cells = oracle_check::<f64>(&[4, 8], &[2, 5], 50, 99);
        assert_eq!(cells.len(), 4 * 4); // 4 variants x 2 k x 2 m
        for cell in &cells {
            assert!(
                cell.max_rel_error <= ORACLE_TOLERANCE,
                "{}: {}",
                cell.label(),
                cell.max_rel_error
            );
        }
    }

    #[test]
    fn perturbed_fast_path_is_flagged() {
        let cells = oracle_check_with_perturbation::<f64>(&[4], &[3], 5, 7, 1e-6);
        assert!(cells.iter().any(|c| c.max_rel_error > ORACLE_TOLERANCE));
    }

    #[test]
    fn single_trial_reports() {
        let cells = oracle_check::<f64>(&[4], &[2], 1, 3);
        assert!(cells.iter().all(|c| c.trials == 1));
    }

    #[test]
    fn gradcheck_covers_every_group() {
        let spec = DistanceSpec::new(DistanceKind::Dnn, true, 2).unwrap();
        let report = gradcheck_spec::<f64>(spec, 11, 1e-5).unwrap();
        let names: Vec<&str> = report.groups.iter().map(|(g, _)| g.as_str()).collect();
        assert_eq!(names, ["w0", "w", "V", "h", "W1", "b1", "W2", "b2"]);
        assert!(report.max_rel_error <= GRADCHECK_TOLERANCE);
    }
}
