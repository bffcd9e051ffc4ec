//! `recommend`: score an item universe for one user and print the top-k.

use metricfm::data::Vocab;
use metricfm::eval::RankedList;
use metricfm::model::{load_model, meta_path, Scorer};

use crate::config::parse_kv_file;
use crate::{CliError, RecommendArgs};

pub fn run(args: RecommendArgs) -> Result<(), CliError> {
    let (params, spec) = load_model::<f64>(&args.model)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let meta = parse_kv_file(&meta_path(&args.model))?;
    let vocab_name = meta.get("vocab").ok_or_else(|| {
        CliError::Validation("model metadata has no vocabulary; recommend needs tabular models".into())
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
    if layout.n() != params.n() {
        return Err(CliError::Validation(format!(
            "attribute dimension mismatch: expected {} (model), found {} (vocabulary)",
            params.n(),
            layout.n()
        )));
    }

    let user_field = layout
        .field_index("user")
        .ok_or_else(|| CliError::Validation("vocabulary has no user field".into()))?;
    let item_field = layout
        .field_index("item")
        .ok_or_else(|| CliError::Validation("vocabulary has no item field".into()))?;
    let user_vocab = vocab.field("user").expect("layout mirrors vocab");
    let item_vocab = vocab.field("item").expect("layout mirrors vocab");

    // Unknown users take the reserved bucket: cold-start queries still rank.
    let user_idx = match user_vocab.lookup(&args.user) {
        Some(idx) => idx as usize,
        None => {
            log::warn!("user `{}` not in vocabulary; using the reserved bucket", args.user);
            layout.unknown_index(user_field).expect("training layouts reserve a bucket")
                - layout.offset(user_field)
        }
    };

    let universe: Vec<(u32, String)> = if args.items == "all" {
        item_vocab
            .categories()
            .iter()
            .enumerate()
            .map(|(i, c)| (i as u32, c.clone()))
            .collect()
    } else {
        args.items
            .split(',')
            .map(|raw| {
                let raw = raw.trim();
                let idx = match item_vocab.lookup(raw) {
                    Some(idx) => idx,
                    None => {
                        (layout.unknown_index(item_field).expect("reserved bucket")
                            - layout.offset(item_field)) as u32
                    }
                };
                (idx, raw.to_string())
            })
            .collect()
    };
    if universe.is_empty() {
        return Err(CliError::Validation("empty item universe".into()));
    }

    let scorer = Scorer::new(&params, &spec);
    let scored: Vec<(u32, f64)> = universe
        .iter()
        .map(|&(item_idx, _)| {
            let mut entries = vec![
                (layout.offset(user_field) + user_idx, 1.0),
                (layout.offset(item_field) + item_idx as usize, 1.0),
            ];
            entries.sort_by_key(|&(i, _)| i);
            (item_idx, scorer.predict(&entries))
        })
        .collect();
    let ranked = RankedList::from_scores(scored);

    let k = args.top_k.min(ranked.len());
    println!("rank\titem\tscore");
    for (pos, (&item_idx, &score)) in ranked.items().iter().zip(ranked.scores()).take(k).enumerate()
    {
        let name = universe
            .iter()
            .find(|(idx, _)| *idx == item_idx)
            .map(|(_, name)| name.as_str())
            .unwrap_or("?");
        println!("{}\t{}\t{}", pos + 1, name, score);
    }
    Ok(())
}
