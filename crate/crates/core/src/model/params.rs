//! All learnable tensors of one model, plus the flattening used by the
//! finite-difference harness.

use std::ops::Range;

use crate::gradtape::{GradientMap, ParamKey, Value};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

use super::spec::{DistanceKind, DistanceSpec};

/// One fully connected layer of the embedding transform.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer<F> {
    /// k x k weight matrix.
    pub w: Matrix<F>,
    /// k-vector bias.
    pub b: Vec<F>,
}

/// Global bias, linear weights, embedding table, transformation-weight
/// vector, metric factor and MLP stack. Tensors not used by the active
/// [`DistanceSpec`] simply keep their initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub w0: F,
    /// Linear weights, length n.
    pub w: Vec<F>,
    /// Embedding table, n x k; row i is the feature vector of attribute i.
    pub v: Matrix<F>,
    /// Transformation-weight vector, length k.
    pub h: Vec<F>,
    /// Factor of the metric matrix (the metric itself is `l^T l`), k x k.
    pub l: Matrix<F>,
    /// Transform layers, outermost last.
    pub mlp: Vec<MlpLayer<F>>,
}

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(n: usize, k: usize, layers: usize) -> Self {
        ModelParams {
            w0: F::zero(),
            w: vec![F::zero(); n],
            v: Matrix::zeros(n, k),
            h: vec![F::zero(); k],
            l: Matrix::zeros(k, k),
            mlp: (0..layers)
                .map(|_| MlpLayer {
                    w: Matrix::zeros(k, k),
                    b: vec![F::zero(); k],
                })
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn k(&self) -> usize {
        self.h.len()
    }

    pub fn layers(&self) -> usize {
        self.mlp.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite()
            && self.w.iter().all(|x| x.is_finite())
            && self.v.data().iter().all(|x| x.is_finite())
            && self.h.iter().all(|x| x.is_finite())
            && self.l.data().iter().all(|x| x.is_finite())
            && self
                .mlp
                .iter()
                .all(|layer| {
                    layer.w.data().iter().all(|x| x.is_finite())
                        && layer.b.iter().all(|x| x.is_finite())
                })
    }

    /// Mutable flat view of one parameter tensor; shape mirrors the
    /// gradient entry recorded under the same key.
    pub fn tensor_mut(&mut self, key: ParamKey) -> Option<&mut [F]> {
        match key {
            ParamKey::Bias => Some(std::slice::from_mut(&mut self.w0)),
            ParamKey::Linear(i) => self.w.get_mut(i as usize).map(std::slice::from_mut),
            ParamKey::Embed(i) => {
                if (i as usize) < self.v.rows() {
                    Some(self.v.row_mut(i as usize))
                } else {
                    None
                }
            }
            ParamKey::Weight => Some(&mut self.h),
            ParamKey::Factor => Some(self.l.data_mut()),
            ParamKey::LayerW(l) => self.mlp.get_mut(l as usize).map(|m| m.w.data_mut()),
            ParamKey::LayerB(l) => self.mlp.get_mut(l as usize).map(|m| m.b.as_mut_slice()),
        }
    }

    /// Groups that actually receive gradients under `spec`.
    fn group_active(&self, spec: &DistanceSpec) -> (bool, bool, bool) {
        let h = spec.use_weight;
        let l = spec.kind == DistanceKind::Mahalanobis;
        let mlp = spec.transforms() && !self.mlp.is_empty();
        (h, l, mlp)
    }

    /// Flattens the tensors relevant to `spec` into one vector, reporting
    /// named coordinate segments (w0, w, V, h, L, W_l, b_l).
    pub fn flatten(&self, spec: &DistanceSpec) -> (Vec<F>, Vec<ParamSegment>) {
        let (use_h, use_l, use_mlp) = self.group_active(spec);
        let mut flat = Vec::new();
        let mut segments = Vec::new();
        let push = |name: String, data: &[F], flat: &mut Vec<F>, segs: &mut Vec<ParamSegment>| {
            let start = flat.len();
            flat.extend_from_slice(data);
            segs.push(ParamSegment {
                group: name,
                range: start..flat.len(),
            });
        };
        push("w0".into(), &[self.w0], &mut flat, &mut segments);
        push("w".into(), &self.w, &mut flat, &mut segments);
        push("V".into(), self.v.data(), &mut flat, &mut segments);
        if use_h {
            push("h".into(), &self.h, &mut flat, &mut segments);
        }
        if use_l {
            push("L".into(), self.l.data(), &mut flat, &mut segments);
        }
        if use_mlp {
            for (idx, layer) in self.mlp.iter().enumerate() {
                push(format!("W{}", idx + 1), layer.w.data(), &mut flat, &mut segments);
                push(format!("b{}", idx + 1), &layer.b, &mut flat, &mut segments);
            }
        }
        (flat, segments)
    }

    /// Writes a flat vector produced by [`ModelParams::flatten`] back.
    pub fn unflatten(&mut self, flat: &[F], spec: &DistanceSpec) {
        let (use_h, use_l, use_mlp) = self.group_active(spec);
        let mut pos = 0usize;
        let take = |len: usize, pos: &mut usize| -> Range<usize> {
            let r = *pos..*pos + len;
            *pos += len;
            r
        };
        self.w0 = flat[take(1, &mut pos).start];
        let r = take(self.w.len(), &mut pos);
        self.w.copy_from_slice(&flat[r]);
        let r = take(self.v.data().len(), &mut pos);
        self.v.data_mut().copy_from_slice(&flat[r]);
        if use_h {
            let r = take(self.h.len(), &mut pos);
            self.h.copy_from_slice(&flat[r]);
        }
        if use_l {
            let r = take(self.l.data().len(), &mut pos);
            self.l.data_mut().copy_from_slice(&flat[r]);
        }
        if use_mlp {
            for layer in &mut self.mlp {
                let r = take(layer.w.data().len(), &mut pos);
                layer.w.data_mut().copy_from_slice(&flat[r]);
                let r = take(layer.b.len(), &mut pos);
                layer.b.copy_from_slice(&flat[r]);
            }
        }
        debug_assert_eq!(pos, flat.len());
    }

    /// Flattens a gradient map into the same coordinate layout as
    /// [`ModelParams::flatten`]; absent entries are zero.
    pub fn flatten_gradient(&self, grads: &GradientMap<F>, spec: &DistanceSpec) -> Vec<F> {
        let (use_h, use_l, use_mlp) = self.group_active(spec);
        let mut flat = Vec::new();
        let scalar_of = |key: ParamKey| {
            grads
                .get(key)
                .and_then(Value::as_scalar)
                .unwrap_or_else(F::zero)
        };
        let extend = |key: ParamKey, len: usize, flat: &mut Vec<F>| match grads.get(key) {
            Some(value) => flat.extend_from_slice(value.as_slice()),
            None => flat.extend(std::iter::repeat(F::zero()).take(len)),
        };
        flat.push(scalar_of(ParamKey::Bias));
        for i in 0..self.w.len() {
            flat.push(scalar_of(ParamKey::Linear(i as u32)));
        }
        for i in 0..self.v.rows() {
            extend(ParamKey::Embed(i as u32), self.k(), &mut flat);
        }
        if use_h {
            extend(ParamKey::Weight, self.k(), &mut flat);
        }
        if use_l {
            extend(ParamKey::Factor, self.k() * self.k(), &mut flat);
        }
        if use_mlp {
            for idx in 0..self.mlp.len() {
                extend(ParamKey::LayerW(idx as u8), self.k() * self.k(), &mut flat);
                extend(ParamKey::LayerB(idx as u8), self.k(), &mut flat);
            }
        }
        flat
    }
}

/// Named coordinate range inside a flattened parameter vector.
#[derive(Debug, Clone)]
pub struct ParamSegment {
    pub group: String,
    pub range: Range<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::DistanceKind;

    fn arbitrary_params() -> ModelParams<f64> {
        let mut p = ModelParams::zeros(3, 2, 1);
        p.w0 = 0.5;
        p.w = vec![1.0, 2.0, 3.0];
        p.v = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        p.h = vec![-1.0, 1.0];
        p.l = Matrix::from_vec(2, 2, vec![1.0, 1.0, 0.0, 1.0]);
        p.mlp[0].w = Matrix::identity(2);
        p.mlp[0].b = vec![0.1, 0.2];
        p
    }

    #[test]
    fn flatten_round_trips() {
        let p = arbitrary_params();
        for spec in [
            DistanceSpec::new(DistanceKind::Mahalanobis, true, 0).unwrap(),
            DistanceSpec::new(DistanceKind::Dnn, true, 1).unwrap(),
            DistanceSpec::new(DistanceKind::Euclidean, false, 0).unwrap(),
        ] {
            let (flat, segments) = p.flatten(&spec);
            assert_eq!(segments.last().unwrap().range.end, flat.len());
            let mut q = ModelParams::zeros(3, 2, 1);
            q.unflatten(&flat, &spec);
            let (flat2, _) = q.flatten(&spec);
            assert_eq!(flat, flat2);
        }
    }

    #[test]
    fn segments_cover_expected_groups() {
        let p = arbitrary_params();
        let spec = DistanceSpec::new(DistanceKind::Dnn, true, 1).unwrap();
        let (_, segments) = p.flatten(&spec);
        let names: Vec<&str> = segments.iter().map(|s| s.group.as_str()).collect();
        assert_eq!(names, ["w0", "w", "V", "h", "W1", "b1"]);
    }

    #[test]
    fn tensor_mut_shapes_match_keys() {
        let mut p = arbitrary_params();
        assert_eq!(p.tensor_mut(ParamKey::Bias).unwrap().len(), 1);
        assert_eq!(p.tensor_mut(ParamKey::Embed(2)).unwrap().len(), 2);
        assert_eq!(p.tensor_mut(ParamKey::Factor).unwrap().len(), 4);
        assert!(p.tensor_mut(ParamKey::Embed(9)).is_none());
        assert!(p.tensor_mut(ParamKey::LayerW(5)).is_none());
    }
}
