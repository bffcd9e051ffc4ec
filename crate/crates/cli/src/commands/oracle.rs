//! `oracle-check`: fast-path vs naive pairwise oracle over a (k, m) grid.

use metricfm::verify::{oracle_check, ORACLE_TOLERANCE};

use crate::{CliError, OracleArgs};

fn parse_list(raw: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Validation(format!("--{flag}: `{tok}`: {e}")))
        })
        .collect()
}

pub fn run(args: OracleArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Validation("--trials must be >= 1".into()));
    }
    let k_list = parse_list(&args.k_list, "k-list")?;
    let m_list = parse_list(&args.m_list, "m-list")?;
    if k_list.is_empty() || m_list.is_empty() {
        return Err(CliError::Validation("k and m lists must be non-empty".into()));
    }

    let cells = oracle_check::<f64>(&k_list, &m_list, args.trials, args.seed);
    let mut worst: Option<&metricfm::verify::OracleCell<f64>> = None;
    for cell in &cells {
        let ok = cell.max_rel_error <= ORACLE_TOLERANCE;
        println!(
            "{:<24} trials={:<6} max_rel_error={:.3e}  {}",
            cell.label(),
            cell.trials,
            cell.max_rel_error,
            if ok { "pass" } else { "FAIL" }
        );
        if worst.map_or(true, |w| cell.max_rel_error > w.max_rel_error) {
            worst = Some(cell);
        }
    }
    let worst = worst.expect("grid is non-empty");
    println!(
        "worst: {} max_rel_error={:.3e} (tolerance {:.0e})",
        worst.label(),
        worst.max_rel_error,
        ORACLE_TOLERANCE
    );
    if worst.max_rel_error > ORACLE_TOLERANCE {
        return Err(CliError::CheckFailed(format!(
            "fast-path equivalence failed at {}: max relative error {:.3e} exceeds {:.0e}",
            worst.label(),
            worst.max_rel_error,
            ORACLE_TOLERANCE
        )));
    }
    Ok(())
}
