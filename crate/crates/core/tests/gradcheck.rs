//! Finite-difference validation of recorded gradients across every
//! interaction kind (step 1e-5, double precision, dropout off).

use metricfm::model::{DistanceKind, DistanceSpec};
use metricfm::verify::{default_gradcheck_specs, gradcheck_spec, GRADCHECK_TOLERANCE};

#[test]
fn all_distance_kinds_pass_gradcheck() {
    for spec in default_gradcheck_specs() {
        let report = gradcheck_spec::<f64>(spec, 2024, 1e-5).unwrap();
        assert!(
            report.max_rel_error <= GRADCHECK_TOLERANCE,
            "{} layers={} weight={}: max rel error {} (groups: {:?})",
            spec.kind,
            spec.layers,
            spec.use_weight,
            report.max_rel_error,
            report.groups,
        );
    }
}

#[test]
fn mahalanobis_loss_gradient_matches_oracle() {
    let spec = DistanceSpec::new(DistanceKind::Mahalanobis, true, 0).unwrap();
    let report = gradcheck_spec::<f64>(spec, 5, 1e-5).unwrap();
    assert!(report.max_rel_error <= 1e-4, "{}", report.max_rel_error);
    // L receives gradient: its reported group error is a real comparison,
    // not a zero-vs-zero match.
    let l_group = report.groups.iter().find(|(g, _)| g == "L").unwrap();
    assert!(l_group.1 <= 1e-4);
}

#[test]
fn two_layer_dnn_loss_gradient_matches_oracle() {
    let spec = DistanceSpec::new(DistanceKind::Dnn, true, 2).unwrap();
    let report = gradcheck_spec::<f64>(spec, 6, 1e-5).unwrap();
    assert!(report.max_rel_error <= 1e-4, "{}", report.max_rel_error);
}

#[test]
fn gradcheck_is_stable_across_several_seeds() {
    for seed in [1u64, 2, 3, 4, 5] {
        for spec in [
            DistanceSpec::new(DistanceKind::Mahalanobis, true, 0).unwrap(),
            DistanceSpec::new(DistanceKind::Dnn, true, 3).unwrap(),
            DistanceSpec::new(DistanceKind::Cosine, true, 1).unwrap(),
        ] {
            let report = gradcheck_spec::<f64>(spec, seed, 1e-5).unwrap();
            assert!(
                report.max_rel_error <= GRADCHECK_TOLERANCE,
                "seed {seed} {}: {}",
                spec.kind,
                report.max_rel_error
            );
        }
    }
}
