//! One training or evaluation example.

use thiserror::Error;

use crate::scalar::Scalar;

use super::layout::FieldLayout;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("entry indices must be strictly increasing ({prev} then {next})")]
    Unsorted { prev: usize, next: usize },
    #[error("entry index {index} out of range for n = {n}")]
    OutOfRange { index: usize, n: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

/// Sparse attribute vector with its target label. `user` / `item` carry the
/// category indices inside their fields when the source data is
/// field-aware; format-level loads (libfm) leave them unset.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseInstance<F> {
    pub label: F,
    entries: Vec<(usize, F)>,
    pub user: Option<u32>,
    pub item: Option<u32>,
    pub timestamp: Option<i64>,
}

impl<F: Scalar> SparseInstance<F> {
    pub fn new(
        label: F,
        entries: Vec<(usize, F)>,
        n: usize,
        user: Option<u32>,
        item: Option<u32>,
        timestamp: Option<i64>,
    ) -> Result<Self, InstanceError> {
        for win in entries.windows(2) {
            if win[0].0 >= win[1].0 {
                return Err(InstanceError::Unsorted {
                    prev: win[0].0,
                    next: win[1].0,
                });
            }
        }
        for &(idx, value) in &entries {
            if idx >= n {
                return Err(InstanceError::OutOfRange { index: idx, n });
            }
            if !value.is_finite() {
                return Err(InstanceError::NonFinite(idx));
            }
        }
        Ok(Self::new_unchecked(label, entries, user, item, timestamp))
    }

    pub(crate) fn new_unchecked(
        label: F,
        entries: Vec<(usize, F)>,
        user: Option<u32>,
        item: Option<u32>,
        timestamp: Option<i64>,
    ) -> Self {
        SparseInstance {
            label,
            entries,
            user,
            item,
            timestamp,
        }
    }

    /// Sorted nonzero entries; this is the active set prediction runs over.
    pub fn entries(&self) -> &[(usize, F)] {
        &self.entries
    }

    /// Copy with the one-hot entry of `field` switched to `category`.
    /// Ordering is preserved since the entry stays inside its field block.
    pub fn with_category(
        &self,
        layout: &FieldLayout,
        field: usize,
        category: u32,
    ) -> SparseInstance<F> {
        let offset = layout.offset(field);
        let end = offset + layout.fields()[field].cardinality;
        let mut entries = self.entries.clone();
        for entry in &mut entries {
            if entry.0 >= offset && entry.0 < end {
                entry.0 = offset + category as usize;
                break;
            }
        }
        let is_item = layout.field_index("item") == Some(field);
        let is_user = layout.field_index("user") == Some(field);
        SparseInstance {
            label: self.label,
            entries,
            user: if is_user { Some(category) } else { self.user },
            item: if is_item { Some(category) } else { self.item },
            timestamp: self.timestamp,
        }
    }
}
