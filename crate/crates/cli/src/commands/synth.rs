//! `synth`: write the seeded synthetic implicit-feedback dataset.

use metricfm::data::synth::{write_tabular, SynthConfig};

use crate::{CliError, SynthArgs};

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    if args.users == 0 || args.items == 0 || args.per_user == 0 {
        return Err(CliError::Validation(
            "--users, --items and --per-user must be >= 1".into(),
        ));
    }
    if args.per_user > args.items {
        return Err(CliError::Validation(
            "--per-user cannot exceed --items".into(),
        ));
    }
    let cfg = SynthConfig {
        users: args.users,
        items: args.items,
        per_user: args.per_user,
        seed: args.seed,
        ..SynthConfig::default()
    };
    write_tabular(&cfg, &args.out).map_err(crate::runtime("write"))?;
    println!(
        "wrote {} interactions ({} users x {} per user, {} items) to {}",
        args.users * args.per_user,
        args.users,
        args.per_user,
        args.items,
        args.out.display()
    );
    Ok(())
}
