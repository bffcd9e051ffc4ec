//! `export-embeddings`: one row per category of a field, with the stored
//! embedding values bit-exact (shortest round-trip float formatting).

use std::fmt::Write as _;

use metricfm::data::Vocab;
use metricfm::model::{load_model, meta_path};

use crate::config::parse_kv_file;
use crate::{CliError, ExportArgs};

pub fn run(args: ExportArgs) -> Result<(), CliError> {
    let (params, _spec) =
        load_model::<f64>(&args.model).map_err(|e| CliError::Validation(e.to_string()))?;
    let meta = parse_kv_file(&meta_path(&args.model))?;
    let vocab_name = meta.get("vocab").ok_or_else(|| {
        CliError::Validation("model metadata has no vocabulary; export needs tabular models".into())
    })?;
    let vocab_path = args
        .model
        .parent()
        .unwrap_or_else(|| std::path::Path::new("."))
        .join(vocab_name);
    let vocab = Vocab::load(&vocab_path).map_err(crate::runtime("vocab"))?;
    let layout = vocab
        .layout(true)
        .map_err(|e| CliError::Validation(e.to_string()))?;

    let field_idx = layout
        .field_index(&args.field)
        .ok_or_else(|| CliError::Validation(format!("unknown field `{}`", args.field)))?;
    let field_vocab = vocab.field(&args.field).expect("layout mirrors vocab");
    let offset = layout.offset(field_idx);

    let mut out = String::new();
    out.push_str("category");
    for f in 0..params.k() {
        let _ = write!(out, "\tv{f}");
    }
    out.push('\n');
    for (idx, category) in field_vocab.categories().iter().enumerate() {
        out.push_str(category);
        for &value in params.v.row(offset + idx) {
            let _ = write!(out, "\t{value}");
        }
        out.push('\n');
    }

    match args.out {
        Some(path) => std::fs::write(&path, out).map_err(crate::runtime("write"))?,
        None => print!("{out}"),
    }
    Ok(())
}
