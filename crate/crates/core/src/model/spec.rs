//! Which interaction function a model uses, plus its structural options.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Interaction function for the second-order term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    /// Plain inner product (the classic baseline; not a distance).
    Inner,
    /// Squared Euclidean distance.
    Euclidean,
    /// Squared Mahalanobis distance with a factored metric matrix.
    Mahalanobis,
    /// Squared Euclidean distance between MLP-transformed embeddings.
    Dnn,
    /// Minkowski p=1 over (optionally transformed) embeddings.
    Manhattan,
    /// Minkowski p=inf over (optionally transformed) embeddings.
    Chebyshev,
    /// Normalized inner product over (optionally transformed) embeddings.
    Cosine,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 7] = [
        DistanceKind::Inner,
        DistanceKind::Euclidean,
        DistanceKind::Mahalanobis,
        DistanceKind::Dnn,
        DistanceKind::Manhattan,
        DistanceKind::Chebyshev,
        DistanceKind::Cosine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceKind::Inner => "inner",
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::Mahalanobis => "mahalanobis",
            DistanceKind::Dnn => "dnn",
            DistanceKind::Manhattan => "manhattan",
            DistanceKind::Chebyshev => "chebyshev",
            DistanceKind::Cosine => "cosine",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            DistanceKind::Inner => 0,
            DistanceKind::Euclidean => 1,
            DistanceKind::Mahalanobis => 2,
            DistanceKind::Dnn => 3,
            DistanceKind::Manhattan => 4,
            DistanceKind::Chebyshev => 5,
            DistanceKind::Cosine => 6,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
#[error("unknown distance kind `{0}` (expected one of inner, euclidean, mahalanobis, dnn, manhattan, chebyshev, cosine)")]
pub struct UnknownKind(pub String);

impl FromStr for DistanceKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// Full interaction configuration: kind, transformation weight on/off, and
/// the transform depth.
///
/// `layers` rules: `dnn` needs at least one layer; `inner`, `euclidean` and
/// `mahalanobis` take none; the Minkowski variants and cosine accept any
/// depth (their distances apply to the transformed embeddings when layers
/// are present, raw embeddings otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistanceSpec {
    pub kind: DistanceKind,
    pub use_weight: bool,
    pub layers: usize,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("distance kind dnn requires layers >= 1, got {0}")]
    DnnNeedsLayers(usize),
    #[error("distance kind {kind} takes no transform layers, got {layers}")]
    NoLayersAllowed { kind: DistanceKind, layers: usize },
}

impl DistanceSpec {
    pub fn new(kind: DistanceKind, use_weight: bool, layers: usize) -> Result<Self, SpecError> {
        match kind {
            DistanceKind::Dnn if layers == 0 => return Err(SpecError::DnnNeedsLayers(layers)),
            DistanceKind::Inner | DistanceKind::Euclidean | DistanceKind::Mahalanobis
                if layers > 0 =>
            {
                return Err(SpecError::NoLayersAllowed { kind, layers })
            }
            _ => {}
        }
        Ok(DistanceSpec {
            kind,
            use_weight,
            layers,
        })
    }

    /// True when embeddings pass through the MLP before the distance.
    pub fn transforms(&self) -> bool {
        self.layers > 0
    }

    /// True when `predict` may take the simplified two-pass evaluation.
    pub fn has_fast_path(&self) -> bool {
        self.use_weight
            && matches!(
                self.kind,
                DistanceKind::Euclidean | DistanceKind::Mahalanobis | DistanceKind::Dnn
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dnn_requires_layers() {
        assert!(DistanceSpec::new(DistanceKind::Dnn, true, 0).is_err());
        assert!(DistanceSpec::new(DistanceKind::Dnn, true, 2).is_ok());
    }

    #[test]
    fn flat_kinds_reject_layers() {
        assert!(DistanceSpec::new(DistanceKind::Euclidean, true, 1).is_err());
        assert!(DistanceSpec::new(DistanceKind::Mahalanobis, false, 0).is_ok());
    }

    #[test]
    fn minkowski_kinds_accept_optional_layers() {
        assert!(DistanceSpec::new(DistanceKind::Manhattan, true, 0).is_ok());
        assert!(DistanceSpec::new(DistanceKind::Chebyshev, true, 1).is_ok());
        assert!(DistanceSpec::new(DistanceKind::Cosine, true, 2).is_ok());
    }

    #[test]
    fn kind_round_trips_through_str_and_code() {
        for kind in DistanceKind::ALL {
            assert_eq!(kind.as_str().parse::<DistanceKind>().unwrap(), kind);
            assert_eq!(DistanceKind::from_code(kind.code()), Some(kind));
        }
        assert!("euclid".parse::<DistanceKind>().is_err());
    }
}
