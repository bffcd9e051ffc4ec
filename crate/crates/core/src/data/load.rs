//! Dataset ingestion: delimiter-separated tabular files with a header row,
//! and the sparse "label idx:val ..." format with a declared dimension.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::Scalar;

use super::instance::SparseInstance;
use super::layout::{Field, FieldLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Tabular,
    LibfmSparse,
}

impl DataFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DataFormat::Tabular => "tabular",
            DataFormat::LibfmSparse => "libfm",
        }
    }
}

impl FromStr for DataFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabular" => Ok(DataFormat::Tabular),
            "libfm" | "libfm-sparse" => Ok(DataFormat::LibfmSparse),
            other => Err(format!("unknown data format `{other}` (expected tabular or libfm)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required column `{0}` in header")]
    MissingColumn(String),
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("no instances")]
    NoInstances,
    #[error("unknown category `{category}` for field `{field}` and the layout has no reserved slot")]
    UnknownCategory { field: String, category: String },
    #[error("sidecar {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },
    #[error("vocabulary file {path}: line {line}: {reason}")]
    Vocab {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LoadError + '_ {
    move |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-field category-to-index mapping, in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct FieldVocab {
    pub name: String,
    categories: Vec<String>,
    index: HashMap<String, u32>,
}

impl FieldVocab {
    fn new(name: String) -> Self {
        FieldVocab {
            name,
            categories: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn intern(&mut self, category: &str) -> u32 {
        if let Some(&idx) = self.index.get(category) {
            return idx;
        }
        let idx = self.categories.len() as u32;
        self.categories.push(category.to_string());
        self.index.insert(category.to_string(), idx);
        idx
    }

    pub fn lookup(&self, category: &str) -> Option<u32> {
        self.index.get(category).copied()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn category(&self, idx: u32) -> Option<&str> {
        self.categories.get(idx as usize).map(String::as_str)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }
}

/// Vocabulary for every categorical field of a dataset.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    pub fields: Vec<FieldVocab>,
}

impl Vocab {
    pub fn field(&self, name: &str) -> Option<&FieldVocab> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Layout induced by the vocabulary; `reserve_unknown` appends one
    /// bucket per field for categories first seen at inference time.
    pub fn layout(&self, reserve_unknown: bool) -> Result<FieldLayout, super::layout::LayoutError> {
        FieldLayout::new(
            self.fields
                .iter()
                .map(|f| Field {
                    name: f.name.clone(),
                    cardinality: f.len() + usize::from(reserve_unknown),
                    reserved_unknown: reserve_unknown,
                })
                .collect(),
        )
    }

    /// Text persistence: one `field,category,index` line per category.
    /// Categories may contain commas; field names may not, and the index is
    /// numeric, so the first and last comma delimit unambiguously.
    pub fn save(&self, path: &Path) -> Result<(), LoadError> {
        let mut out = String::new();
        for field in &self.fields {
            for (idx, category) in field.categories.iter().enumerate() {
                out.push_str(&field.name);
                out.push(',');
                out.push_str(category);
                out.push(',');
                out.push_str(&idx.to_string());
                out.push('\n');
            }
        }
        fs::write(path, out).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut vocab = Vocab::default();
        for (line_no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| LoadError::Vocab {
                path: path.to_path_buf(),
                line: line_no + 1,
                reason: reason.to_string(),
            };
            let (field_name, rest) = line.split_once(',').ok_or_else(|| bad("expected field,category,index"))?;
            let (category, idx_str) = rest.rsplit_once(',').ok_or_else(|| bad("expected field,category,index"))?;
            let idx: u32 = idx_str.parse().map_err(|_| bad("index is not an integer"))?;
            let field = match vocab.fields.iter_mut().find(|f| f.name == field_name) {
                Some(f) => f,
                None => {
                    vocab.fields.push(FieldVocab::new(field_name.to_string()));
                    vocab.fields.last_mut().unwrap()
                }
            };
            if idx as usize != field.categories.len() {
                return Err(bad("indices must be dense and in order per field"));
            }
            field.categories.push(category.to_string());
            field.index.insert(category.to_string(), idx);
        }
        Ok(vocab)
    }
}

/// Options for the tabular reader.
#[derive(Debug, Clone)]
pub struct TabularOptions {
    pub delimiter: char,
    /// Reserve one unknown bucket per field so inference-time categories
    /// outside the training vocabulary stay encodable.
    pub reserve_unknown: bool,
}

impl Default for TabularOptions {
    fn default() -> Self {
        TabularOptions {
            delimiter: '\t',
            reserve_unknown: false,
        }
    }
}

/// Instances plus the layout and vocabulary inferred from the file.
#[derive(Debug, Clone)]
pub struct TabularData<F> {
    pub instances: Vec<SparseInstance<F>>,
    pub layout: FieldLayout,
    pub vocab: Vocab,
}

struct Header {
    /// Categorical fields as (column position, field name); user first,
    /// item second, then the remaining columns in header order.
    fields: Vec<(usize, String)>,
    label_col: usize,
    timestamp_col: Option<usize>,
}

fn parse_header(line: &str, delimiter: char) -> Result<Header, LoadError> {
    let columns: Vec<&str> = line.split(delimiter).map(str::trim).collect();
    let find = |name: &str| columns.iter().position(|c| *c == name);
    let user_col = find("user").ok_or_else(|| LoadError::MissingColumn("user".into()))?;
    let item_col = find("item").ok_or_else(|| LoadError::MissingColumn("item".into()))?;
    let label_col = find("label").ok_or_else(|| LoadError::MissingColumn("label".into()))?;
    let timestamp_col = find("timestamp");
    let mut fields = vec![(user_col, "user".to_string()), (item_col, "item".to_string())];
    for (pos, col) in columns.iter().enumerate() {
        if pos == user_col || pos == item_col || pos == label_col || Some(pos) == timestamp_col {
            continue;
        }
        fields.push((pos, col.to_string()));
    }
    Ok(Header {
        fields,
        label_col,
        timestamp_col,
    })
}

/// Loads a tabular file, inferring the vocabulary (and thus the layout)
/// from the data itself.
pub fn load_tabular<F: Scalar>(
    path: &Path,
    opts: &TabularOptions,
) -> Result<TabularData<F>, LoadError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(LoadError::NoInstances)?;
    let header = parse_header(header_line, opts.delimiter)?;

    let mut vocab = Vocab {
        fields: header
            .fields
            .iter()
            .map(|(_, name)| FieldVocab::new(name.clone()))
            .collect(),
    };

    // First pass interns categories so the layout is complete, second pass
    // encodes; a single pass would need patching n afterwards.
    let mut rows: Vec<(usize, Vec<u32>, F, Option<i64>)> = Vec::new();
    for (line_idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = line_idx + 1;
        let columns: Vec<&str> = line.split(opts.delimiter).collect();
        let get = |pos: usize| -> Result<&str, LoadError> {
            columns.get(pos).map(|c| c.trim()).ok_or(LoadError::Line {
                line: line_no,
                reason: format!("expected at least {} columns, got {}", pos + 1, columns.len()),
            })
        };
        let label: F = get(header.label_col)?
            .parse::<f64>()
            .map(F::from_f64)
            .map_err(|e| LoadError::Line {
                line: line_no,
                reason: format!("bad label: {e}"),
            })?;
        let timestamp = match header.timestamp_col {
            Some(col) => Some(get(col)?.parse::<i64>().map_err(|e| LoadError::Line {
                line: line_no,
                reason: format!("bad timestamp: {e}"),
            })?),
            None => None,
        };
        let mut values = Vec::with_capacity(header.fields.len());
        for (f, (pos, _)) in header.fields.iter().enumerate() {
            values.push(vocab.fields[f].intern(get(*pos)?));
        }
        rows.push((line_no, values, label, timestamp));
    }
    if rows.is_empty() {
        return Err(LoadError::NoInstances);
    }

    let layout = vocab
        .layout(opts.reserve_unknown)
        .expect("vocabulary fields are valid layout fields");
    let instances = rows
        .into_iter()
        .map(|(line_no, values, label, timestamp)| {
            let values: Vec<usize> = values.into_iter().map(|v| v as usize).collect();
            let mut inst = layout
                .encode_instance(&values, label)
                .map_err(|e| LoadError::Line {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            inst.timestamp = timestamp;
            Ok(inst)
        })
        .collect::<Result<Vec<_>, LoadError>>()?;

    Ok(TabularData {
        instances,
        layout,
        vocab,
    })
}

/// Loads a tabular file against an existing vocabulary and layout;
/// categories outside the vocabulary map to the field's reserved bucket.
pub fn load_tabular_with_vocab<F: Scalar>(
    path: &Path,
    opts: &TabularOptions,
    vocab: &Vocab,
    layout: &FieldLayout,
) -> Result<Vec<SparseInstance<F>>, LoadError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(LoadError::NoInstances)?;
    let header = parse_header(header_line, opts.delimiter)?;

    let mut instances = Vec::new();
    for (line_idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = line_idx + 1;
        let columns: Vec<&str> = line.split(opts.delimiter).collect();
        let get = |pos: usize| -> Result<&str, LoadError> {
            columns.get(pos).map(|c| c.trim()).ok_or(LoadError::Line {
                line: line_no,
                reason: format!("expected at least {} columns, got {}", pos + 1, columns.len()),
            })
        };
        let label: F = get(header.label_col)?
            .parse::<f64>()
            .map(F::from_f64)
            .map_err(|e| LoadError::Line {
                line: line_no,
                reason: format!("bad label: {e}"),
            })?;
        let timestamp = match header.timestamp_col {
            Some(col) => Some(get(col)?.parse::<i64>().map_err(|e| LoadError::Line {
                line: line_no,
                reason: format!("bad timestamp: {e}"),
            })?),
            None => None,
        };
        let mut values = Vec::with_capacity(header.fields.len());
        for (pos, name) in &header.fields {
            let raw = get(*pos)?;
            let field_vocab = vocab
                .field(name)
                .ok_or_else(|| LoadError::MissingColumn(name.clone()))?;
            let field_idx = layout
                .field_index(name)
                .ok_or_else(|| LoadError::MissingColumn(name.clone()))?;
            let category = match field_vocab.lookup(raw) {
                Some(idx) => idx as usize,
                None => {
                    layout
                        .unknown_index(field_idx)
                        .map(|abs| abs - layout.offset(field_idx))
                        .ok_or_else(|| LoadError::UnknownCategory {
                            field: name.clone(),
                            category: raw.to_string(),
                        })?
                }
            };
            values.push(category);
        }
        let mut inst = layout
            .encode_instance(&values, label)
            .map_err(|e| LoadError::Line {
                line: line_no,
                reason: e.to_string(),
            })?;
        inst.timestamp = timestamp;
        instances.push(inst);
    }
    if instances.is_empty() {
        return Err(LoadError::NoInstances);
    }
    Ok(instances)
}

/// Loads `label idx:val ...` lines with 0-based indices against a declared
/// dimension `n`. Real-valued entries are accepted as-is.
pub fn load_libfm<F: Scalar>(path: &Path, n: usize) -> Result<Vec<SparseInstance<F>>, LoadError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut instances = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| LoadError::Line {
            line: line_no,
            reason,
        };
        let mut tokens = line.split_whitespace();
        let label: F = tokens
            .next()
            .unwrap()
            .parse::<f64>()
            .map(F::from_f64)
            .map_err(|e| bad(format!("bad label: {e}")))?;
        let mut entries: Vec<(usize, F)> = Vec::new();
        for token in tokens {
            let (idx_str, val_str) = token
                .split_once(':')
                .ok_or_else(|| bad(format!("token `{token}` is not idx:val")))?;
            let idx: usize = idx_str
                .parse()
                .map_err(|e| bad(format!("bad index `{idx_str}`: {e}")))?;
            let val: F = val_str
                .parse::<f64>()
                .map(F::from_f64)
                .map_err(|e| bad(format!("bad value `{val_str}`: {e}")))?;
            entries.push((idx, val));
        }
        entries.sort_by_key(|&(idx, _)| idx);
        let inst = SparseInstance::new(label, entries, n, None, None, None)
            .map_err(|e| bad(e.to_string()))?;
        instances.push(inst);
    }
    if instances.is_empty() {
        return Err(LoadError::NoInstances);
    }
    Ok(instances)
}

/// Reads the declared dimension from a libfm sidecar (`<path>.conf`,
/// key=value text with a required `n`).
pub fn libfm_sidecar_n(data_path: &Path) -> Result<usize, LoadError> {
    let mut os = data_path.as_os_str().to_os_string();
    os.push(".conf");
    let sidecar = PathBuf::from(os);
    let text = fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            if key.trim() == "n" {
                return value.trim().parse().map_err(|e| LoadError::Sidecar {
                    path: sidecar.clone(),
                    reason: format!("bad n: {e}"),
                });
            }
        }
    }
    Err(LoadError::Sidecar {
        path: sidecar,
        reason: "missing required key `n`".into(),
    })
}

/// Loads instances plus a layout under the declared format. For the sparse
/// format the layout is a single block of the declared width and the
/// one-hot invariants do not apply.
pub fn load_interactions<F: Scalar>(
    path: &Path,
    format: DataFormat,
    opts: &TabularOptions,
) -> Result<(Vec<SparseInstance<F>>, FieldLayout), LoadError> {
    match format {
        DataFormat::Tabular => {
            let data = load_tabular(path, opts)?;
            Ok((data.instances, data.layout))
        }
        DataFormat::LibfmSparse => {
            let n = libfm_sidecar_n(path)?;
            let instances = load_libfm(path, n)?;
            let layout = FieldLayout::from_cardinalities([("features", n)])
                .expect("single synthetic field is valid");
            Ok((instances, layout))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> PathBuf {
        let path = dir.path().join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn tabular_layout_from_vocabulary_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "train.tsv",
            "user\titem\tlabel\nu1\ti1\t1\nu2\ti2\t1\nu3\ti1\t1\n",
        );
        let data = load_tabular::<f64>(&path, &TabularOptions::default()).unwrap();
        let cards: Vec<usize> = data.layout.fields().iter().map(|f| f.cardinality).collect();
        assert_eq!(cards, vec![3, 2]);
        assert_eq!(data.layout.n(), 5);
        assert_eq!(data.instances.len(), 3);
        assert_eq!(data.instances[0].user, Some(0));
        assert_eq!(data.instances[2].item, Some(0));
    }

    #[test]
    fn tabular_reserved_slot_extends_cardinalities() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "train.tsv", "user\titem\tlabel\nu1\ti1\t1\n");
        let opts = TabularOptions {
            reserve_unknown: true,
            ..TabularOptions::default()
        };
        let data = load_tabular::<f64>(&path, &opts).unwrap();
        assert_eq!(data.layout.n(), 4);
        assert_eq!(data.layout.unknown_index(0), Some(1));
    }

    #[test]
    fn tabular_extra_columns_become_fields_and_timestamp_is_parsed() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "train.tsv",
            "user\ttimestamp\titem\tlabel\tgenre\nu1\t100\ti1\t1\tg1\nu1\t200\ti2\t1\tg2\n",
        );
        let data = load_tabular::<f64>(&path, &TabularOptions::default()).unwrap();
        let names: Vec<&str> = data
            .layout
            .fields()
            .iter()
            .map(|f| f.name.as_str())
            .collect();
        assert_eq!(names, vec!["user", "item", "genre"]);
        assert_eq!(data.instances[0].timestamp, Some(100));
    }

    #[test]
    fn tabular_missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "train.tsv", "user\tlabel\nu1\t1\n");
        match load_tabular::<f64>(&path, &TabularOptions::default()) {
            Err(LoadError::MissingColumn(col)) => assert_eq!(col, "item"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tabular_malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "train.tsv", "user\titem\tlabel\nu1\ti1\tnotanumber\n");
        match load_tabular::<f64>(&path, &TabularOptions::default()) {
            Err(LoadError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn libfm_parses_declared_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "data.libfm", "1 0:1 7:1\n-1 2:0.5 3:2\n");
        let instances = load_libfm::<f64>(&path, 10).unwrap();
        assert_eq!(instances[0].label, 1.0);
        assert_eq!(instances[0].entries(), &[(0, 1.0), (7, 1.0)]);
        assert_eq!(instances[1].entries(), &[(2, 0.5), (3, 2.0)]);
    }

    #[test]
    fn libfm_rejects_out_of_range_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "data.libfm", "1 12:1\n");
        assert!(matches!(
            load_libfm::<f64>(&path, 10),
            Err(LoadError::Line { line: 1, .. })
        ));
        let empty = write_file(&dir, "empty.libfm", "");
        assert!(matches!(
            load_libfm::<f64>(&empty, 10),
            Err(LoadError::NoInstances)
        ));
    }

    #[test]
    fn libfm_sidecar_supplies_n() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_file(&dir, "data.libfm", "1 0:1\n");
        write_file(&dir, "data.libfm.conf", "# sidecar\nn = 10\n");
        let (instances, layout) =
            load_interactions::<f64>(&data, DataFormat::LibfmSparse, &TabularOptions::default())
                .unwrap();
        assert_eq!(layout.n(), 10);
        assert_eq!(instances.len(), 1);
    }

    #[test]
    fn vocab_round_trips_with_commas_in_categories() {
        let dir = tempfile::tempdir().unwrap();
        let mut vocab = Vocab::default();
        vocab.fields.push(FieldVocab::new("genre".into()));
        vocab.fields[0].intern("rock,pop");
        vocab.fields[0].intern("jazz");
        let path = dir.path().join("vocab.txt");
        vocab.save(&path).unwrap();
        let loaded = Vocab::load(&path).unwrap();
        assert_eq!(loaded.field("genre").unwrap().lookup("rock,pop"), Some(0));
        assert_eq!(loaded.field("genre").unwrap().lookup("jazz"), Some(1));
    }

    #[test]
    fn apply_mode_maps_unknowns_to_reserved_slot() {
        let dir = tempfile::tempdir().unwrap();
        let train = write_file(&dir, "train.tsv", "user\titem\tlabel\nu1\ti1\t1\nu2\ti2\t1\n");
        let opts = TabularOptions {
            reserve_unknown: true,
            ..TabularOptions::default()
        };
        let data = load_tabular::<f64>(&train, &opts).unwrap();
        let eval = write_file(&dir, "eval.tsv", "user\titem\tlabel\nu9\ti1\t1\n");
        let instances =
            load_tabular_with_vocab::<f64>(&eval, &opts, &data.vocab, &data.layout).unwrap();
        // u9 is unseen: maps to the user field's reserved bucket.
        assert_eq!(instances[0].user, Some(2));

        // Without a reserved slot the same load is rejected.
        let bare = load_tabular::<f64>(&train, &TabularOptions::default()).unwrap();
        assert!(matches!(
            load_tabular_with_vocab::<f64>(&eval, &TabularOptions::default(), &bare.vocab, &bare.layout),
            Err(LoadError::UnknownCategory { .. })
        ));
    }
}
