//! Ranking list construction and the three metrics.

use crate::scalar::Scalar;
use crate::util::CompensatedSum;

use super::EvalError;

/// Items sorted by predicted score descending; ties break toward the
/// smaller item id so rankings are deterministic.
#[derive(Debug, Clone)]
pub struct RankedList<F> {
    items: Vec<u32>,
    scores: Vec<F>,
}

impl<F: Scalar> RankedList<F> {
    pub fn from_scores(scored: impl IntoIterator<Item = (u32, F)>) -> Self {
        let mut pairs: Vec<(u32, F)> = scored.into_iter().collect();
        pairs.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("scores must be comparable")
                .then(a.0.cmp(&b.0))
        });
        let (items, scores) = pairs.into_iter().unzip();
        RankedList { items, scores }
    }

    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn scores(&self) -> &[F] {
        &self.scores
    }

    /// 1-based rank of an item.
    pub fn rank_of(&self, item: u32) -> Option<usize> {
        self.items.iter().position(|&i| i == item).map(|p| p + 1)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Root mean squared error over parallel slices.
pub fn rmse<F: Scalar>(predictions: &[F], targets: &[F]) -> Result<F, EvalError> {
    if predictions.len() != targets.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty("rmse"));
    }
    let mut acc = CompensatedSum::default();
    for (&p, &t) in predictions.iter().zip(targets) {
        let r = p - t;
        acc.add(r * r);
    }
    Ok((acc.value() / F::from_f64(predictions.len() as f64)).sqrt())
}

/// 1 when the positive item ranks within the top k, else 0. The boundary
/// rank == k counts as a hit.
pub fn hit_ratio_at_k<F: Scalar>(
    ranked: &RankedList<F>,
    positive: u32,
    k: usize,
) -> Result<F, EvalError> {
    if k == 0 {
        return Err(EvalError::BadK);
    }
    let rank = ranked
        .rank_of(positive)
        .ok_or(EvalError::PositiveMissing(positive))?;
    Ok(if rank <= k { F::one() } else { F::zero() })
}

/// With a single relevant item at 1-based rank r <= k this is
/// `1 / log2(r + 1)`, else 0.
pub fn ndcg_at_k<F: Scalar>(
    ranked: &RankedList<F>,
    positive: u32,
    k: usize,
) -> Result<F, EvalError> {
    if k == 0 {
        return Err(EvalError::BadK);
    }
    let rank = ranked
        .rank_of(positive)
        .ok_or(EvalError::PositiveMissing(positive))?;
    if rank <= k {
        Ok(F::one() / F::from_f64((rank as f64) + 1.0).log2())
    } else {
        Ok(F::zero())
    }
}
