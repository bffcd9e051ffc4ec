//! Ordered categorical field specification: each field occupies a one-hot
//! block of the concatenated attribute vector.

use thiserror::Error;

use crate::scalar::Scalar;

use super::instance::SparseInstance;

/// One categorical field. When `reserved_unknown` is set, the last index of
/// the block is the bucket unseen categories map to at inference time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub cardinality: usize,
    pub reserved_unknown: bool,
}

impl Field {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        Field {
            name: name.into(),
            cardinality,
            reserved_unknown: false,
        }
    }

    /// Number of real categories (excludes the unknown bucket).
    pub fn real_cardinality(&self) -> usize {
        self.cardinality - usize::from(self.reserved_unknown)
    }
}

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("field `{0}` has cardinality 0")]
    EmptyField(String),
    #[error("duplicate field name `{0}`")]
    DuplicateField(String),
    #[error("field name `{0}` contains a reserved character")]
    BadFieldName(String),
    #[error("expected {expected} field values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("category {category} out of range for field `{field}` (cardinality {cardinality})")]
    CategoryOutOfRange {
        field: String,
        category: usize,
        cardinality: usize,
    },
}

/// Field order, per-field offsets and the total dimension n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldLayout {
    fields: Vec<Field>,
    offsets: Vec<usize>,
    n: usize,
}

impl FieldLayout {
    pub fn new(fields: Vec<Field>) -> Result<Self, LayoutError> {
        let mut seen = std::collections::HashSet::new();
        for field in &fields {
            if field.cardinality == 0 {
                return Err(LayoutError::EmptyField(field.name.clone()));
            }
            if field.name.is_empty() || field.name.contains(',') || field.name.contains('\n') {
                return Err(LayoutError::BadFieldName(field.name.clone()));
            }
            if !seen.insert(field.name.clone()) {
                return Err(LayoutError::DuplicateField(field.name.clone()));
            }
        }
        let mut offsets = Vec::with_capacity(fields.len());
        let mut n = 0usize;
        for field in &fields {
            offsets.push(n);
            n += field.cardinality;
        }
        Ok(FieldLayout { fields, offsets, n })
    }

    /// Convenience constructor from (name, cardinality) pairs.
    pub fn from_cardinalities<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, usize)>,
    ) -> Result<Self, LayoutError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, c)| Field::new(name, c))
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn offset(&self, field: usize) -> usize {
        self.offsets[field]
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Reserved unknown index of a field, when it has one.
    pub fn unknown_index(&self, field: usize) -> Option<usize> {
        self.fields[field]
            .reserved_unknown
            .then(|| self.offsets[field] + self.fields[field].cardinality - 1)
    }

    /// Maps a global attribute index back to (field, category).
    pub fn decode_index(&self, index: usize) -> Option<(usize, usize)> {
        if index >= self.n {
            return None;
        }
        let field = match self.offsets.binary_search(&index) {
            Ok(f) => f,
            Err(ins) => ins - 1,
        };
        Some((field, index - self.offsets[field]))
    }

    /// One-hot encodes one category id per field:
    /// the entry for field f with category c is `offset(f) + c` with value 1.
    pub fn encode_instance<F: Scalar>(
        &self,
        field_values: &[usize],
        label: F,
    ) -> Result<SparseInstance<F>, LayoutError> {
        if field_values.len() != self.fields.len() {
            return Err(LayoutError::ArityMismatch {
                expected: self.fields.len(),
                got: field_values.len(),
            });
        }
        let mut entries = Vec::with_capacity(field_values.len());
        for (f, (&category, field)) in field_values.iter().zip(&self.fields).enumerate() {
            if category >= field.cardinality {
                return Err(LayoutError::CategoryOutOfRange {
                    field: field.name.clone(),
                    category,
                    cardinality: field.cardinality,
                });
            }
            entries.push((self.offsets[f] + category, F::one()));
        }
        let user = self
            .field_index("user")
            .map(|f| field_values[f] as u32);
        let item = self
            .field_index("item")
            .map(|f| field_values[f] as u32);
        Ok(SparseInstance::new_unchecked(label, entries, user, item, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_follow_cardinalities() {
        let layout =
            FieldLayout::from_cardinalities([("user", 3), ("item", 4), ("genre", 5)]).unwrap();
        assert_eq!(layout.n(), 12);
        assert_eq!(layout.offset(0), 0);
        assert_eq!(layout.offset(1), 3);
        assert_eq!(layout.offset(2), 7);
    }

    #[test]
    fn encode_uses_offset_plus_category() {
        let layout =
            FieldLayout::from_cardinalities([("user", 3), ("item", 4), ("genre", 5)]).unwrap();
        let inst = layout.encode_instance(&[1, 2, 3], 1.0f64).unwrap();
        let idx: Vec<usize> = inst.entries().iter().map(|&(i, _)| i).collect();
        assert_eq!(idx, vec![1, 5, 10]);
        assert!(inst.entries().iter().all(|&(_, v)| v == 1.0));
        assert_eq!(inst.user, Some(1));
        assert_eq!(inst.item, Some(2));
    }

    #[test]
    fn encode_single_field() {
        let layout = FieldLayout::from_cardinalities([("user", 2)]).unwrap();
        let inst = layout.encode_instance(&[0], -1.0f64).unwrap();
        assert_eq!(inst.entries(), &[(0usize, 1.0f64)]);
        assert_eq!(inst.label, -1.0);
    }

    #[test]
    fn encode_rejects_out_of_range_category() {
        let layout =
            FieldLayout::from_cardinalities([("user", 3), ("item", 4), ("genre", 5)]).unwrap();
        let err = layout.encode_instance(&[1, 4, 3], 1.0f64).unwrap_err();
        match err {
            LayoutError::CategoryOutOfRange { field, category, .. } => {
                assert_eq!(field, "item");
                assert_eq!(category, 4);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn decode_inverts_encode() {
        let layout =
            FieldLayout::from_cardinalities([("user", 3), ("item", 4), ("genre", 5)]).unwrap();
        let values = [2usize, 0, 4];
        let inst = layout.encode_instance(&values, 1.0f64).unwrap();
        for (f, &(idx, _)) in inst.entries().iter().enumerate() {
            assert_eq!(layout.decode_index(idx), Some((f, values[f])));
        }
        assert_eq!(layout.decode_index(99), None);
    }

    #[test]
    fn unknown_index_only_when_reserved() {
        let mut fields = vec![Field::new("user", 4), Field::new("item", 3)];
        fields[1].reserved_unknown = true;
        let layout = FieldLayout::new(fields).unwrap();
        assert_eq!(layout.unknown_index(0), None);
        assert_eq!(layout.unknown_index(1), Some(4 + 2));
        assert_eq!(layout.fields()[1].real_cardinality(), 2);
    }
}
