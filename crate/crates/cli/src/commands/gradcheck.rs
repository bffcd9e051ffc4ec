//! `gradcheck`: recorded gradients vs central finite differences for each
//! interaction kind, dropout off, with per-parameter-group reporting.

use metricfm::model::DistanceKind;
use metricfm::verify::{
    default_gradcheck_specs, gradcheck_spec, GRADCHECK_STEP, GRADCHECK_TOLERANCE,
};

use crate::{CliError, GradcheckArgs};

pub fn run(args: GradcheckArgs) -> Result<(), CliError> {
    let specs = if args.kinds == "all" {
        default_gradcheck_specs()
    } else {
        let kinds: Vec<DistanceKind> = args
            .kinds
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<DistanceKind>()
                    .map_err(|e| CliError::Validation(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        default_gradcheck_specs()
            .into_iter()
            .filter(|s| kinds.contains(&s.kind))
            .collect()
    };
    if specs.is_empty() {
        return Err(CliError::Validation("no kinds selected".into()));
    }

    let mut failed = Vec::new();
    for spec in specs {
        let report = gradcheck_spec::<f64>(spec, args.seed, GRADCHECK_STEP)
            .map_err(crate::runtime("gradcheck"))?;
        let ok = report.max_rel_error <= GRADCHECK_TOLERANCE;
        let name = if spec.kind == DistanceKind::Dnn {
            format!("{}/{}l", spec.kind, spec.layers)
        } else {
            spec.kind.to_string()
        };
        println!(
            "{:<16} max_rel_error={:.3e}  {}",
            name,
            report.max_rel_error,
            if ok { "pass" } else { "FAIL" }
        );
        for (group, err) in &report.groups {
            println!("    {:<6} {:.3e}", group, err);
        }
        if !ok {
            failed.push(format!("{name} ({:.3e})", report.max_rel_error));
        }
    }
    if !failed.is_empty() {
        return Err(CliError::CheckFailed(format!(
            "gradient check failed for {} (tolerance {:.0e})",
            failed.join(", "),
            GRADCHECK_TOLERANCE
        )));
    }
    Ok(())
}
