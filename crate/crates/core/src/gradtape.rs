//! Minimal reverse-mode differentiation over scalars, vectors and small
//! dense matrices.
//!
//! A [`Tape`] records one prediction (or loss) graph eagerly: every node
//! carries its forward value, and [`Tape::backward`] replays the tape in
//! reverse topological order, accumulating vector-Jacobian products into a
//! [`GradientMap`] keyed by [`ParamKey`]. Tapes are rebuilt per instance —
//! the active sparse support differs between instances, so there is nothing
//! worth reusing across them.
//!
//! One tape is exclusively owned while recording and differentiating;
//! independent tapes over immutable parameter snapshots can run on separate
//! threads.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Identifies one learnable tensor of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKey {
    /// Global bias.
    Bias,
    /// Linear weight of one attribute index.
    Linear(u32),
    /// Embedding row of one attribute index.
    Embed(u32),
    /// Transformation-weight vector.
    Weight,
    /// Factor matrix of the learned metric.
    Factor,
    /// Dense-layer weight matrix, 0-based layer index.
    LayerW(u8),
    /// Dense-layer bias vector, 0-based layer index.
    LayerB(u8),
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamKey::Bias => write!(f, "w0"),
            ParamKey::Linear(i) => write!(f, "w[{i}]"),
            ParamKey::Embed(i) => write!(f, "v[{i}]"),
            ParamKey::Weight => write!(f, "h"),
            ParamKey::Factor => write!(f, "l"),
            ParamKey::LayerW(l) => write!(f, "mlp_w{l}"),
            ParamKey::LayerB(l) => write!(f, "mlp_b{l}"),
        }
    }
}

/// A forward value (or adjoint) flowing through the graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Value<F> {
    Scalar(F),
    Vector(Vec<F>),
    Matrix(Matrix<F>),
}

/// Shape of a [`Value`], used in error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(n) => write!(f, "vector[{n}]"),
            Shape::Matrix(r, c) => write!(f, "matrix[{r}x{c}]"),
        }
    }
}

impl<F: Scalar> Value<F> {
    pub fn shape(&self) -> Shape {
        match self {
            Value::Scalar(_) => Shape::Scalar,
            Value::Vector(v) => Shape::Vector(v.len()),
            Value::Matrix(m) => Shape::Matrix(m.rows(), m.cols()),
        }
    }

    pub fn zeros_like(&self) -> Value<F> {
        match self {
            Value::Scalar(_) => Value::Scalar(F::zero()),
            Value::Vector(v) => Value::Vector(vec![F::zero(); v.len()]),
            Value::Matrix(m) => Value::Matrix(Matrix::zeros(m.rows(), m.cols())),
        }
    }

    pub fn as_scalar(&self) -> Option<F> {
        match self {
            Value::Scalar(s) => Some(*s),
            _ => None,
        }
    }

    /// Flat view of the entries, row-major for matrices.
    pub fn as_slice(&self) -> &[F] {
        match self {
            Value::Scalar(s) => std::slice::from_ref(s),
            Value::Vector(v) => v.as_slice(),
            Value::Matrix(m) => m.data(),
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        match self {
            Value::Scalar(s) => std::slice::from_mut(s),
            Value::Vector(v) => v.as_mut_slice(),
            Value::Matrix(m) => m.data_mut(),
        }
    }

    pub fn len(&self) -> usize {
        self.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn add_in_place(&mut self, other: &Value<F>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *a += b;
        }
    }
}

/// Handle to a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<F> {
    Constant,
    Param(ParamKey),
    Add(usize, usize),
    Scale(usize, F),
    Mul(usize, usize),
    Dot(usize, usize),
    MatVec(usize, usize),
    Tanh(usize),
    Sum(usize),
    Square(usize),
    MaxSelect(usize),
    Abs(usize),
    Sqrt(usize),
    Recip(usize),
}

#[derive(Debug, Clone)]
struct Node<F> {
    op: Op<F>,
    value: Value<F>,
}

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("{op}: incompatible shapes {lhs} and {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: expected {expected}, got {got}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        got: Shape,
    },
    #[error("backward requires a scalar output, got {got}")]
    NonScalarOutput { got: Shape },
    #[error("{op}: domain error on input {input}")]
    Domain { op: &'static str, input: f64 },
}

/// Gradients of one scalar output with respect to every parameter leaf it
/// touched. Absent entries are zero. Keys iterate in a fixed order so that
/// norm computations are run-to-run stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientMap<F> {
    entries: BTreeMap<ParamKey, Value<F>>,
}

impl<F: Scalar> GradientMap<F> {
    pub fn get(&self, key: ParamKey) -> Option<&Value<F>> {
        self.entries.get(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamKey, &Value<F>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn accumulate(&mut self, key: ParamKey, grad: &Value<F>) {
        match self.entries.get_mut(&key) {
            Some(existing) => existing.add_in_place(grad),
            None => {
                self.entries.insert(key, grad.clone());
            }
        }
    }

    /// Sums another map into this one (per-batch accumulation).
    pub fn merge(&mut self, other: &GradientMap<F>) {
        for (key, grad) in other.iter() {
            self.accumulate(*key, grad);
        }
    }

    pub fn scale(&mut self, factor: F) {
        for value in self.entries.values_mut() {
            for g in value.as_mut_slice() {
                *g *= factor;
            }
        }
    }

    /// Euclidean norm over all entries, in key order.
    pub fn global_norm(&self) -> F {
        let mut acc = F::zero();
        for value in self.entries.values() {
            for &g in value.as_slice() {
                acc += g * g;
            }
        }
        acc.sqrt()
    }
}

/// Records one computation eagerly and differentiates it in reverse.
#[derive(Debug, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Value<F> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<F>, value: Value<F>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    // ----- leaves -----

    pub fn constant(&mut self, value: Value<F>) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn scalar(&mut self, x: F) -> NodeId {
        self.constant(Value::Scalar(x))
    }

    pub fn vector(&mut self, v: Vec<F>) -> NodeId {
        self.constant(Value::Vector(v))
    }

    /// Parameter leaf; `backward` reports a gradient entry under `key`.
    pub fn param(&mut self, key: ParamKey, value: Value<F>) -> NodeId {
        self.push(Op::Param(key), value)
    }

    // ----- recorded operations -----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(TapeError::ShapeMismatch {
                op: "add",
                lhs: va.shape(),
                rhs: vb.shape(),
            });
        }
        let mut out = va.clone();
        for (o, &x) in out.as_mut_slice().iter_mut().zip(vb.as_slice()) {
            *o += x;
        }
        Ok(self.push(Op::Add(a.0, b.0), out))
    }

    pub fn scale(&mut self, a: NodeId, factor: F) -> Result<NodeId, TapeError> {
        let mut out = self.value(a).clone();
        for o in out.as_mut_slice() {
            *o *= factor;
        }
        Ok(self.push(Op::Scale(a.0, factor), out))
    }

    /// Elementwise product; scalar * scalar is the plain product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(TapeError::ShapeMismatch {
                op: "elementwise-mul",
                lhs: va.shape(),
                rhs: vb.shape(),
            });
        }
        let mut out = va.clone();
        for (o, &x) in out.as_mut_slice().iter_mut().zip(vb.as_slice()) {
            *o *= x;
        }
        Ok(self.push(Op::Mul(a.0, b.0), out))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        match (self.value(a), self.value(b)) {
            (Value::Vector(x), Value::Vector(y)) if x.len() == y.len() => {
                let out = crate::linalg::dot(x, y);
                Ok(self.push(Op::Dot(a.0, b.0), Value::Scalar(out)))
            }
            (va, vb) => Err(TapeError::ShapeMismatch {
                op: "dot",
                lhs: va.shape(),
                rhs: vb.shape(),
            }),
        }
    }

    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId, TapeError> {
        match (self.value(m), self.value(x)) {
            (Value::Matrix(a), Value::Vector(v)) if a.cols() == v.len() => {
                let out = a.matvec(v);
                Ok(self.push(Op::MatVec(m.0, x.0), Value::Vector(out)))
            }
            (vm, vx) => Err(TapeError::ShapeMismatch {
                op: "matvec",
                lhs: vm.shape(),
                rhs: vx.shape(),
            }),
        }
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        let mut out = self.value(a).clone();
        for o in out.as_mut_slice() {
            *o = o.tanh();
        }
        Ok(self.push(Op::Tanh(a.0), out))
    }

    /// Sum of a vector's entries.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        match self.value(a) {
            Value::Vector(v) => {
                let out: F = v.iter().copied().sum();
                Ok(self.push(Op::Sum(a.0), Value::Scalar(out)))
            }
            other => Err(TapeError::BadShape {
                op: "sum",
                expected: "vector",
                got: other.shape(),
            }),
        }
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        let mut out = self.value(a).clone();
        for o in out.as_mut_slice() {
            *o = *o * *o;
        }
        Ok(self.push(Op::Square(a.0), out))
    }

    /// Maximum entry of a vector; ties route the gradient to the first
    /// maximal coordinate.
    pub fn max_select(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        match self.value(a) {
            Value::Vector(v) if !v.is_empty() => {
                let mut best = v[0];
                for &x in &v[1..] {
                    if x > best {
                        best = x;
                    }
                }
                Ok(self.push(Op::MaxSelect(a.0), Value::Scalar(best)))
            }
            other => Err(TapeError::BadShape {
                op: "max-select",
                expected: "non-empty vector",
                got: other.shape(),
            }),
        }
    }

    /// Elementwise absolute value; subgradient 0 at exactly 0.
    pub fn abs(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        let mut out = self.value(a).clone();
        for o in out.as_mut_slice() {
            *o = o.abs();
        }
        Ok(self.push(Op::Abs(a.0), out))
    }

    /// Scalar square root; subgradient 0 at exactly 0.
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        match self.value(a) {
            Value::Scalar(s) => {
                if *s < F::zero() {
                    return Err(TapeError::Domain {
                        op: "sqrt",
                        input: s.as_f64(),
                    });
                }
                let out = s.sqrt();
                Ok(self.push(Op::Sqrt(a.0), Value::Scalar(out)))
            }
            other => Err(TapeError::BadShape {
                op: "sqrt",
                expected: "scalar",
                got: other.shape(),
            }),
        }
    }

    /// Scalar reciprocal.
    pub fn recip(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        match self.value(a) {
            Value::Scalar(s) => {
                if *s == F::zero() {
                    return Err(TapeError::Domain {
                        op: "recip",
                        input: 0.0,
                    });
                }
                let out = F::one() / *s;
                Ok(self.push(Op::Recip(a.0), Value::Scalar(out)))
            }
            other => Err(TapeError::BadShape {
                op: "recip",
                expected: "scalar",
                got: other.shape(),
            }),
        }
    }

    // ----- reverse pass -----

    /// Gradients of a scalar `output` with respect to every parameter leaf.
    ///
    /// Visits each node exactly once in reverse recording order; a leaf
    /// reachable along several paths receives the sum of the path
    /// contributions.
    pub fn backward(&self, output: NodeId) -> Result<GradientMap<F>, TapeError> {
        let out_shape = self.value(output).shape();
        if out_shape != Shape::Scalar {
            return Err(TapeError::NonScalarOutput { got: out_shape });
        }

        let mut adjoints: Vec<Option<Value<F>>> = vec![None; output.0 + 1];
        adjoints[output.0] = Some(Value::Scalar(F::one()));
        let mut grads = GradientMap::default();

        for id in (0..=output.0).rev() {
            let Some(adj) = adjoints[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Constant => {}
                Op::Param(key) => grads.accumulate(*key, &adj),
                Op::Add(a, b) => {
                    accumulate(&mut adjoints, *a, adj.clone());
                    accumulate(&mut adjoints, *b, adj);
                }
                Op::Scale(a, factor) => {
                    let mut g = adj;
                    for x in g.as_mut_slice() {
                        *x *= *factor;
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::Mul(a, b) => {
                    let mut ga = adj.clone();
                    for (g, &x) in ga.as_mut_slice().iter_mut().zip(self.nodes[*b].value.as_slice()) {
                        *g *= x;
                    }
                    let mut gb = adj;
                    for (g, &x) in gb.as_mut_slice().iter_mut().zip(self.nodes[*a].value.as_slice()) {
                        *g *= x;
                    }
                    accumulate(&mut adjoints, *a, ga);
                    accumulate(&mut adjoints, *b, gb);
                }
                Op::Dot(a, b) => {
                    let g = adj.as_scalar().expect("dot output is scalar");
                    let ga = scaled_vector(self.nodes[*b].value.as_slice(), g);
                    let gb = scaled_vector(self.nodes[*a].value.as_slice(), g);
                    accumulate(&mut adjoints, *a, Value::Vector(ga));
                    accumulate(&mut adjoints, *b, Value::Vector(gb));
                }
                Op::MatVec(m, x) => {
                    let g = match &adj {
                        Value::Vector(g) => g,
                        _ => unreachable!("matvec output is a vector"),
                    };
                    let (a, v) = match (&self.nodes[*m].value, &self.nodes[*x].value) {
                        (Value::Matrix(a), Value::Vector(v)) => (a, v),
                        _ => unreachable!("matvec inputs checked at record time"),
                    };
                    // d(A x) / dA = g ⊗ x ; d(A x) / dx = A^T g
                    let gm = Matrix::from_fn(a.rows(), a.cols(), |r, c| g[r] * v[c]);
                    let gx = a.matvec_t(g);
                    accumulate(&mut adjoints, *m, Value::Matrix(gm));
                    accumulate(&mut adjoints, *x, Value::Vector(gx));
                }
                Op::Tanh(a) => {
                    // 1 - tanh^2 from the cached forward value.
                    let mut g = adj;
                    for (gi, &y) in g.as_mut_slice().iter_mut().zip(self.nodes[id].value.as_slice()) {
                        *gi *= F::one() - y * y;
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::Sum(a) => {
                    let g = adj.as_scalar().expect("sum output is scalar");
                    let len = self.nodes[*a].value.len();
                    accumulate(&mut adjoints, *a, Value::Vector(vec![g; len]));
                }
                Op::Square(a) => {
                    let mut g = adj;
                    let two = F::from_f64(2.0);
                    for (gi, &x) in g.as_mut_slice().iter_mut().zip(self.nodes[*a].value.as_slice()) {
                        *gi *= two * x;
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::MaxSelect(a) => {
                    let g = adj.as_scalar().expect("max-select output is scalar");
                    let input = self.nodes[*a].value.as_slice();
                    let max = self.nodes[id].value.as_scalar().expect("cached max");
                    let mut grad = vec![F::zero(); input.len()];
                    if let Some(pos) = input.iter().position(|&x| x == max) {
                        grad[pos] = g;
                    }
                    accumulate(&mut adjoints, *a, Value::Vector(grad));
                }
                Op::Abs(a) => {
                    let mut g = adj;
                    for (gi, &x) in g.as_mut_slice().iter_mut().zip(self.nodes[*a].value.as_slice()) {
                        *gi *= if x > F::zero() {
                            F::one()
                        } else if x < F::zero() {
                            -F::one()
                        } else {
                            F::zero()
                        };
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::Sqrt(a) => {
                    let g = adj.as_scalar().expect("sqrt output is scalar");
                    let y = self.nodes[id].value.as_scalar().expect("cached sqrt");
                    let gi = if y > F::zero() {
                        g * F::from_f64(0.5) / y
                    } else {
                        F::zero()
                    };
                    accumulate(&mut adjoints, *a, Value::Scalar(gi));
                }
                Op::Recip(a) => {
                    let g = adj.as_scalar().expect("recip output is scalar");
                    let y = self.nodes[id].value.as_scalar().expect("cached recip");
                    accumulate(&mut adjoints, *a, Value::Scalar(-g * y * y));
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate<F: Scalar>(adjoints: &mut [Option<Value<F>>], target: usize, delta: Value<F>) {
    match &mut adjoints[target] {
        Some(existing) => existing.add_in_place(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn scaled_vector<F: Scalar>(v: &[F], factor: F) -> Vec<F> {
    v.iter().map(|&x| x * factor).collect()
}

// ----- finite-difference validation -----

/// A scalar function of a flat parameter vector that can also report its
/// analytic gradient (typically by recording itself on a tape).
pub trait DiffFn<F: Scalar> {
    fn value(&mut self, params: &[F]) -> Result<F, TapeError>;
    fn gradient(&mut self, params: &[F]) -> Result<Vec<F>, TapeError>;
}

/// [`DiffFn`] built from two closures.
pub struct ClosureDiff<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<F, V, G> DiffFn<F> for ClosureDiff<V, G>
where
    F: Scalar,
    V: FnMut(&[F]) -> Result<F, TapeError>,
    G: FnMut(&[F]) -> Result<Vec<F>, TapeError>,
{
    fn value(&mut self, params: &[F]) -> Result<F, TapeError> {
        (self.value)(params)
    }
    fn gradient(&mut self, params: &[F]) -> Result<Vec<F>, TapeError> {
        (self.gradient)(params)
    }
}

#[derive(Debug, Error)]
pub enum FdError {
    #[error("finite differences require step > 0, got {0}")]
    BadStep(f64),
    #[error("non-finite function value {value} at perturbed coordinate {coord}")]
    NonFinite { coord: usize, value: f64 },
    #[error(transparent)]
    Tape(#[from] TapeError),
}

/// Outcome of a finite-difference check; per-coordinate data is retained so
/// callers can report worst errors per parameter group.
#[derive(Debug, Clone)]
pub struct FdReport<F> {
    pub max_rel_error: F,
    pub worst_coord: Option<usize>,
    pub analytic: Vec<F>,
    pub central: Vec<F>,
}

impl<F: Scalar> FdReport<F> {
    /// Worst relative error over a coordinate range.
    pub fn max_over(&self, range: std::ops::Range<usize>) -> F {
        let mut worst = F::zero();
        for i in range {
            let err = rel_error(self.analytic[i], self.central[i]);
            if err > worst {
                worst = err;
            }
        }
        worst
    }
}

/// `|analytic - central| / max(1, |central|)`.
pub fn rel_error<F: Scalar>(analytic: F, central: F) -> F {
    (analytic - central).abs() / F::one().max(central.abs())
}

/// Central-difference check of `f`'s analytic gradient at `params`.
pub fn finite_difference_check<F: Scalar>(
    f: &mut dyn DiffFn<F>,
    params: &[F],
    step: F,
) -> Result<FdReport<F>, FdError> {
    if step <= F::zero() {
        return Err(FdError::BadStep(step.as_f64()));
    }
    let analytic = f.gradient(params)?;
    assert_eq!(
        analytic.len(),
        params.len(),
        "gradient length must match parameter length"
    );

    let mut work = params.to_vec();
    let mut central = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let plus = f.value(&work)?;
        work[i] = orig - step;
        let minus = f.value(&work)?;
        work[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            let bad = if plus.is_finite() { minus } else { plus };
            return Err(FdError::NonFinite {
                coord: i,
                value: bad.as_f64(),
            });
        }
        central.push((plus - minus) / (F::from_f64(2.0) * step));
    }

    let mut max_rel_error = F::zero();
    let mut worst_coord = None;
    for i in 0..params.len() {
        let err = rel_error(analytic[i], central[i]);
        if err > max_rel_error {
            max_rel_error = err;
            worst_coord = Some(i);
        }
    }
    Ok(FdReport {
        max_rel_error,
        worst_coord,
        analytic,
        central,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grad_scalar(map: &GradientMap<f64>, key: ParamKey) -> f64 {
        map.get(key).and_then(Value::as_scalar).unwrap()
    }

    #[test]
    fn record_add_constants() {
        let mut tape = Tape::new();
        let a = tape.scalar(2.0);
        let b = tape.scalar(3.0);
        let c = tape.add(a, b).unwrap();
        assert_eq!(tape.value(c).as_scalar(), Some(5.0));
    }

    #[test]
    fn record_tanh_zero() {
        let mut tape = Tape::new();
        let a = tape.scalar(0.0);
        let t = tape.tanh(a).unwrap();
        assert_eq!(tape.value(t).as_scalar(), Some(0.0));
    }

    #[test]
    fn record_dot() {
        // Oracle: elementwise multiply and sum by hand = 1*3 + 2*4 = 11.
        let mut tape = Tape::new();
        let a = tape.vector(vec![1.0, 2.0]);
        let b = tape.vector(vec![3.0, 4.0]);
        let d = tape.dot(a, b).unwrap();
        assert_eq!(tape.value(d).as_scalar(), Some(11.0));
    }

    #[test]
    fn shape_mismatch_rejected_with_op_and_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.vector(vec![1.0, 2.0]);
        let b = tape.vector(vec![1.0, 2.0, 3.0]);
        let err = tape.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add"), "{msg}");
        assert!(msg.contains("vector[2]") && msg.contains("vector[3]"), "{msg}");
    }

    #[test]
    fn backward_linear_function() {
        // f(theta) = <a, theta> with a = (1, -2, 3).
        let mut tape = Tape::new();
        let a = tape.vector(vec![1.0, -2.0, 3.0]);
        let theta = tape.param(ParamKey::Weight, Value::Vector(vec![0.5, 0.5, 0.5]));
        let f = tape.dot(a, theta).unwrap();
        let grads = tape.backward(f).unwrap();
        assert_eq!(
            grads.get(ParamKey::Weight).unwrap().as_slice(),
            &[1.0, -2.0, 3.0]
        );
    }

    #[test]
    fn backward_constant_has_no_entries() {
        let mut tape = Tape::new();
        let _theta = tape.param(ParamKey::Bias, Value::Scalar(1.0));
        let c = tape.scalar(4.0);
        let grads = tape.backward(c).unwrap();
        assert!(grads.is_empty());
    }

    #[test]
    fn backward_rejects_non_scalar_output() {
        let mut tape = Tape::new();
        let v = tape.vector(vec![1.0, 2.0]);
        assert!(matches!(
            tape.backward(v),
            Err(TapeError::NonScalarOutput { .. })
        ));
    }

    #[test]
    fn diamond_graph_sums_path_contributions() {
        // y = (x + x)^2 = 4x^2, dy/dx = 8x; x reaches y along two paths.
        let mut tape = Tape::new();
        let x = tape.param(ParamKey::Bias, Value::Scalar(1.5));
        let s = tape.add(x, x).unwrap();
        let y = tape.square(s).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grad_scalar(&grads, ParamKey::Bias), 8.0 * 1.5);

        // Same through mul(x, x): dy/dx = 2x.
        let mut tape = Tape::new();
        let x = tape.param(ParamKey::Bias, Value::Scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grad_scalar(&grads, ParamKey::Bias), 6.0);
    }

    #[test]
    fn gradient_is_linear_over_graph_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();

            let build = |tape: &mut Tape<f64>, coeff: &[f64], x: &[f64]| {
                let c = tape.vector(coeff.to_vec());
                let p = tape.param(ParamKey::Weight, Value::Vector(x.to_vec()));
                let m = tape.mul(c, p).unwrap();
                let s = tape.sum(m).unwrap();
                tape.square(s).unwrap()
            };

            // f and g on separate tapes.
            let mut tf = Tape::new();
            let f = build(&mut tf, &a, &x);
            let gf = tf.backward(f).unwrap();
            let mut tg = Tape::new();
            let g = build(&mut tg, &b, &x);
            let gg = tg.backward(g).unwrap();

            // f + g on one tape sharing the leaf.
            let mut tape = Tape::new();
            let ca = tape.vector(a.clone());
            let cb = tape.vector(b.clone());
            let p = tape.param(ParamKey::Weight, Value::Vector(x.clone()));
            let ma = tape.mul(ca, p).unwrap();
            let sa = tape.sum(ma).unwrap();
            let qa = tape.square(sa).unwrap();
            let mb = tape.mul(cb, p).unwrap();
            let sb = tape.sum(mb).unwrap();
            let qb = tape.square(sb).unwrap();
            let total = tape.add(qa, qb).unwrap();
            let gsum = tape.backward(total).unwrap();

            let lhs = gsum.get(ParamKey::Weight).unwrap().as_slice();
            let fa = gf.get(ParamKey::Weight).unwrap().as_slice();
            let fb = gg.get(ParamKey::Weight).unwrap().as_slice();
            for i in 0..4 {
                assert!((lhs[i] - (fa[i] + fb[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fd_check_exact_quadratic() {
        // f(theta) = theta^2 at theta = 3: central differences are exact for
        // quadratics up to rounding.
        let mut f = ClosureDiff {
            value: |p: &[f64]| Ok(p[0] * p[0]),
            gradient: |p: &[f64]| Ok(vec![2.0 * p[0]]),
        };
        let report = finite_difference_check(&mut f, &[3.0], 1e-5).unwrap();
        assert!(report.max_rel_error <= 1e-8, "{}", report.max_rel_error);
    }

    #[test]
    fn fd_check_rejects_bad_step() {
        let mut f = ClosureDiff {
            value: |p: &[f64]| Ok(p[0]),
            gradient: |_: &[f64]| Ok(vec![1.0]),
        };
        assert!(matches!(
            finite_difference_check(&mut f, &[0.0], 0.0),
            Err(FdError::BadStep(_))
        ));
    }

    #[test]
    fn fd_check_reports_offending_coordinate() {
        let mut f = ClosureDiff {
            value: |p: &[f64]| {
                if p[1] > 0.5 {
                    Ok(f64::NAN)
                } else {
                    Ok(p[0] + p[1])
                }
            },
            gradient: |_: &[f64]| Ok(vec![1.0, 1.0]),
        };
        match finite_difference_check(&mut f, &[0.0, 0.5], 1e-3) {
            Err(FdError::NonFinite { coord, .. }) => assert_eq!(coord, 1),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    /// Per-op vector-Jacobian products vs central differences at random
    /// points in [-2, 2]; points near kinks of abs/max-select are nudged
    /// away since the subgradient there is a choice, not a limit.
    #[test]
    fn per_op_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dim = 4;
        type Build = fn(&mut Tape<f64>, &[f64]) -> NodeId;
        let builders: Vec<(&str, Build)> = vec![
            ("add", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                let c = t.vector(vec![0.3, -0.4, 0.9, 1.1]);
                let s = t.add(a, c).unwrap();
                let d = t.dot(s, s).unwrap();
                d
            }),
            ("scale", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                let s = t.scale(a, -1.7).unwrap();
                t.sum(s).unwrap()
            }),
            ("mul", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                let c = t.vector(vec![0.5, 2.0, -1.0, 0.25]);
                let m = t.mul(a, c).unwrap();
                let d = t.dot(m, m).unwrap();
                d
            }),
            ("dot", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                t.dot(a, a).unwrap()
            }),
            ("matvec", |t, p| {
                let m = t.param(
                    ParamKey::Factor,
                    Value::Matrix(Matrix::from_vec(2, 2, p.to_vec())),
                );
                let v = t.vector(vec![0.7, -0.2]);
                let y = t.matvec(m, v).unwrap();
                t.dot(y, y).unwrap()
            }),
            ("tanh", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                let y = t.tanh(a).unwrap();
                t.sum(y).unwrap()
            }),
            ("sum", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                let s = t.sum(a).unwrap();
                t.square(s).unwrap()
            }),
            ("square", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                let y = t.square(a).unwrap();
                t.sum(y).unwrap()
            }),
            ("max-select", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                t.max_select(a).unwrap()
            }),
            ("abs", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                let y = t.abs(a).unwrap();
                t.sum(y).unwrap()
            }),
            ("sqrt", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                let d = t.dot(a, a).unwrap();
                t.sqrt(d).unwrap()
            }),
            ("recip", |t, p| {
                let a = t.param(ParamKey::Weight, Value::Vector(p.to_vec()));
                let d = t.dot(a, a).unwrap();
                let shifted = {
                    let c = t.scalar(1.5);
                    t.add(d, c).unwrap()
                };
                t.recip(shifted).unwrap()
            }),
        ];

        for (name, build) in builders {
            for _ in 0..10 {
                let mut point: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                if name == "abs" {
                    for x in &mut point {
                        if x.abs() < 1e-2 {
                            *x += 0.05;
                        }
                    }
                }
                if name == "max-select" {
                    // keep a clear argmax so central differences do not
                    // straddle the selection switch
                    point.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    point[dim - 1] += 0.5;
                }
                let key = if name == "matvec" {
                    ParamKey::Factor
                } else {
                    ParamKey::Weight
                };
                let mut f = ClosureDiff {
                    value: |p: &[f64]| {
                        let mut tape = Tape::new();
                        let out = build(&mut tape, p);
                        Ok(tape.value(out).as_scalar().unwrap())
                    },
                    gradient: |p: &[f64]| {
                        let mut tape = Tape::new();
                        let out = build(&mut tape, p);
                        let grads = tape.backward(out)?;
                        Ok(grads
                            .get(key)
                            .map(|v| v.as_slice().to_vec())
                            .unwrap_or_else(|| vec![0.0; p.len()]))
                    },
                };
                let report = finite_difference_check(&mut f, &point, 1e-6).unwrap();
                assert!(
                    report.max_rel_error <= 1e-6,
                    "op {name}: rel error {} at {:?}",
                    report.max_rel_error,
                    report.worst_coord
                );
            }
        }
    }

    #[test]
    fn max_select_ties_route_to_first_maximum() {
        let mut tape = Tape::new();
        let a = tape.param(ParamKey::Weight, Value::Vector(vec![2.0, 2.0, 1.0]));
        let y = tape.max_select(a).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(
            grads.get(ParamKey::Weight).unwrap().as_slice(),
            &[1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn abs_subgradient_zero_at_zero() {
        let mut tape = Tape::new();
        let a = tape.param(ParamKey::Weight, Value::Vector(vec![0.0, -3.0, 2.0]));
        let y = tape.abs(a).unwrap();
        let s = tape.sum(y).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(
            grads.get(ParamKey::Weight).unwrap().as_slice(),
            &[0.0, -1.0, 1.0]
        );
    }

    #[test]
    fn gradient_map_merge_and_norm() {
        let mut a = GradientMap::default();
        a.accumulate(ParamKey::Bias, &Value::Scalar(3.0));
        let mut b = GradientMap::default();
        b.accumulate(ParamKey::Bias, &Value::Scalar(1.0));
        b.accumulate(ParamKey::Weight, &Value::Vector(vec![0.0, 4.0]));
        a.merge(&b);
        assert_eq!(a.get(ParamKey::Bias).unwrap().as_scalar(), Some(4.0));
        assert_eq!(a.global_norm(), (16.0f64 + 16.0).sqrt());
    }
}
