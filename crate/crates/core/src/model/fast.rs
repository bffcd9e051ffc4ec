//! Simplified two-pass evaluation of the weighted second-order term.
//!
//! The pairwise sum
//! `sum_{i<j} h^T(v_i ⊙ v_j) D(v_i, v_j) x_i x_j`
//! collapses — because `D(v, v) = 0` and `D` is symmetric — into two
//! independent passes over the active attributes, making one prediction
//! linear in the number of active fields instead of quadratic.

use crate::linalg::{axpy, dot, Matrix};
use crate::scalar::Scalar;

/// Fast form for the factored-metric distance `D = (v_i-v_j)^T M (v_i-v_j)`:
///
/// `sum_j v_j^T x_j sum_i diag(h) v_i (v_i^T M v_i) x_i
///  - sum_j v_j^T diag(h) (sum_i v_i v_i^T x_i) M v_j x_j`
///
/// `m` must be symmetric PSD (use [`super::psd_from_factor`]).
pub fn second_order_mahalanobis_fast<F: Scalar>(
    active: &[(usize, F)],
    v: &Matrix<F>,
    m: &Matrix<F>,
    h: &[F],
) -> F {
    let k = v.cols();
    debug_assert_eq!(m.rows(), k);
    debug_assert_eq!(h.len(), k);
    if active.len() < 2 {
        return F::zero();
    }

    // Pass 1: a = sum_j x_j v_j, b = sum_i x_i (v_i^T M v_i) v_i,
    //         c = sum_i x_i v_i v_i^T, caching u_i = M v_i.
    let mut a = vec![F::zero(); k];
    let mut b = vec![F::zero(); k];
    let mut c = Matrix::zeros(k, k);
    let mut u_cache: Vec<Vec<F>> = Vec::with_capacity(active.len());
    for &(idx, x) in active {
        let vi = v.row(idx);
        let u = m.matvec(vi);
        let quad = dot(vi, &u);
        axpy(x, vi, &mut a);
        axpy(x * quad, vi, &mut b);
        for r in 0..k {
            let xr = x * vi[r];
            axpy(xr, vi, c.row_mut(r));
        }
        u_cache.push(u);
    }

    let mut first = F::zero();
    for i in 0..k {
        first += h[i] * a[i] * b[i];
    }

    // Pass 2: second = sum_j x_j (h ⊙ v_j)^T c (M v_j).
    let mut second = F::zero();
    for (pos, &(idx, x)) in active.iter().enumerate() {
        let vj = v.row(idx);
        let cu = c.matvec(&u_cache[pos]);
        let mut term = F::zero();
        for i in 0..k {
            term += h[i] * vj[i] * cu[i];
        }
        second += x * term;
    }

    first - second
}

/// Fast form for the transformed-embedding distance
/// `D = ||vhat_i - vhat_j||^2`:
///
/// `sum_j v_j^T x_j sum_i diag(h) v_i (vhat_i^T vhat_i) x_i
///  - sum_j v_j^T diag(h) (sum_i v_i vhat_i^T x_i) vhat_j x_j`
///
/// `v_hat[p]` is the transform of `active[p]`'s embedding; each active
/// attribute is transformed exactly once per prediction, so any dropout
/// masks stay frozen for the whole evaluation.
pub fn second_order_dnn_fast<F: Scalar>(
    active: &[(usize, F)],
    v: &Matrix<F>,
    v_hat: &[&[F]],
    h: &[F],
) -> F {
    let k = v.cols();
    debug_assert_eq!(active.len(), v_hat.len());
    debug_assert_eq!(h.len(), k);
    if active.len() < 2 {
        return F::zero();
    }

    // Pass 1: a = sum_j x_j v_j, b = sum_i x_i ||vhat_i||^2 v_i,
    //         d = sum_i x_i v_i vhat_i^T.
    let mut a = vec![F::zero(); k];
    let mut b = vec![F::zero(); k];
    let mut d = Matrix::zeros(k, k);
    for (pos, &(idx, x)) in active.iter().enumerate() {
        let vi = v.row(idx);
        let hat = v_hat[pos];
        let norm = dot(hat, hat);
        axpy(x, vi, &mut a);
        axpy(x * norm, vi, &mut b);
        for r in 0..k {
            let xr = x * vi[r];
            axpy(xr, hat, d.row_mut(r));
        }
    }

    let mut first = F::zero();
    for i in 0..k {
        first += h[i] * a[i] * b[i];
    }

    // Pass 2: second = sum_j x_j (h ⊙ v_j)^T d vhat_j.
    let mut second = F::zero();
    for (pos, &(idx, x)) in active.iter().enumerate() {
        let vj = v.row(idx);
        let dh = d.matvec(v_hat[pos]);
        let mut term = F::zero();
        for i in 0..k {
            term += h[i] * vj[i] * dh[i];
        }
        second += x * term;
    }

    first - second
}
