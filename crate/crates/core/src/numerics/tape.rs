//! Recorded computation graph with reverse-mode gradients.
//!
//! Every forward op appends a node holding its output value and the ids of
//! its inputs, so the node list is topologically ordered by construction.
//! [`Tape::backward`] walks the list once in reverse and consumes the tape.
//!
//! Parameter leaves do not copy their tensor; they read it from the
//! borrowed [`ParameterStore`] and route gradients into a [`Gradients`]
//! buffer aligned with that store.

use std::sync::Arc;

use super::tensor::{axpy, dot};
use super::{Gradients, NumericsError, ParamId, ParameterStore, Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Per-row weights for [`Tape::weighted_segment_sum`].
#[derive(Clone, Debug)]
pub enum SegmentWeights<T> {
    Ones,
    Fixed(Arc<[T]>),
    /// An `n x 1` node; gradients flow into it.
    Node(NodeId),
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    Gather {
        src: NodeId,
        ids: Arc<[u32]>,
    },
    RowRange {
        src: NodeId,
        start: usize,
    },
    SegmentSum {
        rows: NodeId,
        weights: SegmentWeights<T>,
        segments: Arc<[u32]>,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    MatMul {
        rows: NodeId,
        w: NodeId,
    },
    RowDot(NodeId, NodeId),
    GroupedSoftmax {
        segments: Arc<[u32]>,
        logits: NodeId,
        num_segments: usize,
    },
    RowCosine(NodeId, NodeId),
    LogSigmoid(NodeId),
    ConcatCols(NodeId, NodeId),
    Mean(NodeId),
    SumSquares(NodeId),
}

#[derive(Debug)]
struct Node<T> {
    // `None` for parameter leaves; the value lives in the store.
    value: Option<Tensor<T>>,
    op: Op<T>,
}

/// Single-owner recording of one forward pass.
pub struct Tape<'s, T> {
    store: &'s ParameterStore<T>,
    nodes: Vec<Node<T>>,
}

/// Numerically stable `ln(sigmoid(x))`.
#[inline]
pub fn log_sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `sigmoid(-x)`, the derivative of [`log_sigmoid`].
#[inline]
fn sigmoid_neg<T: Real>(x: T) -> T {
    if x >= T::zero() {
        let e = (-x).exp();
        e / (T::one() + e)
    } else {
        T::one() / (T::one() + x.exp())
    }
}

impl<'s, T: Real> Tape<'s, T> {
    pub fn new(store: &'s ParameterStore<T>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'s ParameterStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.store.get(*p),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.value(id).shape()
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> Option<T> {
        self.value(id).item()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, name: &'static str) -> Result<NodeId, NumericsError> {
        if !value.all_finite() {
            return Err(NumericsError::NonFinite { op: name });
        }
        self.nodes.push(Node { value: Some(value), op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), NumericsError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(NumericsError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<NodeId, NumericsError> {
        self.push(Op::Constant, value, "constant")
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Row lookup. Backward scatter-adds into the source rows, so repeated
    /// ids accumulate.
    pub fn gather_rows(&mut self, src: NodeId, ids: impl Into<Arc<[u32]>>) -> Result<NodeId, NumericsError> {
        let ids = ids.into();
        let table = self.value(src);
        let (rows, cols) = table.shape();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &i in ids.iter() {
            let i = i as usize;
            if i >= rows {
                return Err(NumericsError::IndexOutOfRange { index: i, len: rows });
            }
            out.extend_from_slice(table.row(i));
        }
        let value = Tensor::from_vec(ids.len(), cols, out)?;
        self.push(Op::Gather { src, ids }, value, "gather_rows")
    }

    /// Contiguous block of rows `start..start + len`.
    pub fn row_range(&mut self, src: NodeId, start: usize, len: usize) -> Result<NodeId, NumericsError> {
        let table = self.value(src);
        let (rows, cols) = table.shape();
        if start + len > rows {
            return Err(NumericsError::IndexOutOfRange {
                index: start + len,
                len: rows,
            });
        }
        let value = Tensor::from_vec(len, cols, table.as_slice()[start * cols..(start + len) * cols].to_vec())?;
        self.push(Op::RowRange { src, start }, value, "row_range")
    }

    /// `out[s] = sum_{j : segments[j] == s} w_j * rows[j]` for `s < num_segments`.
    pub fn weighted_segment_sum(
        &mut self,
        rows: NodeId,
        weights: SegmentWeights<T>,
        segments: impl Into<Arc<[u32]>>,
        num_segments: usize,
    ) -> Result<NodeId, NumericsError> {
        let segments = segments.into();
        let src = self.value(rows);
        let (n, d) = src.shape();
        if segments.len() != n {
            return Err(NumericsError::ShapeMismatch {
                op: "weighted_segment_sum",
                left: (n, d),
                right: (segments.len(), 1),
            });
        }
        let w: Option<&[T]> = match &weights {
            SegmentWeights::Ones => None,
            SegmentWeights::Fixed(w) => Some(w),
            SegmentWeights::Node(id) => Some(self.value(*id).as_slice()),
        };
        if let Some(w) = w {
            if w.len() != n {
                return Err(NumericsError::ShapeMismatch {
                    op: "weighted_segment_sum",
                    left: (n, d),
                    right: (w.len(), 1),
                });
            }
        }
        let mut out = Tensor::zeros(num_segments, d);
        for (j, &s) in segments.iter().enumerate() {
            let s = s as usize;
            if s >= num_segments {
                return Err(NumericsError::IndexOutOfRange {
                    index: s,
                    len: num_segments,
                });
            }
            let wj = w.map_or(T::one(), |w| w[j]);
            axpy(wj, src.row(j), out.row_mut(s));
        }
        self.push(
            Op::SegmentSum {
                rows,
                weights,
                segments,
            },
            out,
            "weighted_segment_sum",
        )
    }

    fn zip_with(
        &mut self,
        a: NodeId,
        b: NodeId,
        op: Op<T>,
        name: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<NodeId, NumericsError> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va
            .as_slice()
            .iter()
            .zip(vb.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::from_vec(va.rows(), va.cols(), data)?;
        self.push(op, value, name)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.zip_with(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.zip_with(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.zip_with(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId, NumericsError> {
        let va = self.value(a);
        let data = va.as_slice().iter().map(|&x| x * c).collect();
        let value = Tensor::from_vec(va.rows(), va.cols(), data)?;
        self.push(Op::Scale(a, c), value, "scale")
    }

    /// Row-wise right multiplication `rows * w`.
    pub fn matmul_rows(&mut self, rows: NodeId, w: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(rows).matmul(self.value(w))?;
        self.push(Op::MatMul { rows, w }, value, "matmul_rows")
    }

    /// Per-row inner products, `n x 1`.
    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.same_shape("row_dot", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data: Vec<T> = (0..va.rows()).map(|r| dot(va.row(r), vb.row(r))).collect();
        let value = Tensor::from_vec(data.len(), 1, data)?;
        self.push(Op::RowDot(a, b), value, "row_dot")
    }

    /// Softmax of an `n x 1` logit column within each segment, with the
    /// segment maximum subtracted before exponentiation.
    pub fn grouped_softmax(
        &mut self,
        logits: NodeId,
        segments: impl Into<Arc<[u32]>>,
        num_segments: usize,
    ) -> Result<NodeId, NumericsError> {
        let segments = segments.into();
        let x = self.value(logits);
        if x.cols() != 1 || x.rows() != segments.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "grouped_softmax",
                left: x.shape(),
                right: (segments.len(), 1),
            });
        }
        let x = x.as_slice();
        let mut max = vec![T::neg_infinity(); num_segments];
        for (&s, &v) in segments.iter().zip(x) {
            let s = s as usize;
            if s >= num_segments {
                return Err(NumericsError::IndexOutOfRange {
                    index: s,
                    len: num_segments,
                });
            }
            if v > max[s] {
                max[s] = v;
            }
        }
        let mut sum = vec![T::zero(); num_segments];
        let mut out: Vec<T> = segments
            .iter()
            .zip(x)
            .map(|(&s, &v)| {
                let e = (v - max[s as usize]).exp();
                sum[s as usize] = sum[s as usize] + e;
                e
            })
            .collect();
        for (o, &s) in out.iter_mut().zip(segments.iter()) {
            *o = *o / sum[s as usize];
        }
        let value = Tensor::from_vec(out.len(), 1, out)?;
        self.push(
            Op::GroupedSoftmax {
                segments,
                logits,
                num_segments,
            },
            value,
            "grouped_softmax",
        )
    }

    /// Per-row cosine similarity, `n x 1`. A zero row yields 0 with zero
    /// gradient.
    pub fn row_cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.same_shape("row_cosine", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data: Vec<T> = (0..va.rows())
            .map(|r| {
                let (x, y) = (va.row(r), vb.row(r));
                let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
                if nx == T::zero() || ny == T::zero() {
                    T::zero()
                } else {
                    let c = dot(x, y) / (nx * ny);
                    c.max(-T::one()).min(T::one())
                }
            })
            .collect();
        let value = Tensor::from_vec(data.len(), 1, data)?;
        self.push(Op::RowCosine(a, b), value, "row_cosine")
    }

    /// Element-wise `ln(sigmoid(x))`.
    pub fn log_sigmoid(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(x);
        let data = v.as_slice().iter().map(|&x| log_sigmoid(x)).collect();
        let value = Tensor::from_vec(v.rows(), v.cols(), data)?;
        self.push(Op::LogSigmoid(x), value, "log_sigmoid")
    }

    /// `[a | b]` along columns.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(NumericsError::ShapeMismatch {
                op: "concat_cols",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let cols = va.cols() + vb.cols();
        let mut data = Vec::with_capacity(va.rows() * cols);
        for r in 0..va.rows() {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let value = Tensor::from_vec(va.rows(), cols, data)?;
        self.push(Op::ConcatCols(a, b), value, "concat_cols")
    }

    /// Mean of all entries as a `1 x 1` node (0 when empty).
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(x);
        let m = if v.is_empty() {
            T::zero()
        } else {
            v.as_slice().iter().copied().sum::<T>() / T::from_usize(v.len()).unwrap()
        };
        self.push(Op::Mean(x), Tensor::scalar(m), "mean")
    }

    /// Sum of squared entries as a `1 x 1` node.
    pub fn sum_squares(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let s = self.value(x).sum_squares();
        self.push(Op::SumSquares(x), Tensor::scalar(s), "sum_squares")
    }

    /// Reverse sweep from a scalar root. Consumes the tape.
    pub fn backward(self, root: NodeId) -> Result<Gradients<T>, NumericsError> {
        let mut out = Gradients::zeros_like(self.store);
        self.backward_into(root, &mut out)?;
        Ok(out)
    }

    /// Like [`Tape::backward`] but accumulates into existing buffers.
    pub fn backward_into(self, root: NodeId, out: &mut Gradients<T>) -> Result<(), NumericsError> {
        let shape = self.shape(root);
        if shape != (1, 1) {
            return Err(NumericsError::NonScalarRoot { shape });
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => out.get_mut(*p).add_assign(&g),
                Op::Gather { src, ids } => {
                    let gs = self.grad_slot(&mut grads, *src);
                    for (k, &i) in ids.iter().enumerate() {
                        axpy(T::one(), g.row(k), gs.row_mut(i as usize));
                    }
                }
                Op::RowRange { src, start } => {
                    let gs = self.grad_slot(&mut grads, *src);
                    for r in 0..g.rows() {
                        axpy(T::one(), g.row(r), gs.row_mut(start + r));
                    }
                }
                Op::SegmentSum {
                    rows,
                    weights,
                    segments,
                } => {
                    let w: Option<&[T]> = match weights {
                        SegmentWeights::Ones => None,
                        SegmentWeights::Fixed(w) => Some(w),
                        SegmentWeights::Node(id) => Some(self.value(*id).as_slice()),
                    };
                    if let SegmentWeights::Node(wid) = weights {
                        let src = self.value(*rows);
                        let gw: Vec<T> = segments
                            .iter()
                            .enumerate()
                            .map(|(j, &s)| dot(src.row(j), g.row(s as usize)))
                            .collect();
                        let slot = self.grad_slot(&mut grads, *wid);
                        for (a, b) in slot.as_mut_slice().iter_mut().zip(gw) {
                            *a = *a + b;
                        }
                    }
                    let gr = self.grad_slot(&mut grads, *rows);
                    for (j, &s) in segments.iter().enumerate() {
                        let wj = w.map_or(T::one(), |w| w[j]);
                        axpy(wj, g.row(s as usize), gr.row_mut(j));
                    }
                }
                Op::Add(a, b) => {
                    self.grad_slot(&mut grads, *a).add_assign(&g);
                    self.grad_slot(&mut grads, *b).add_assign(&g);
                }
                Op::Sub(a, b) => {
                    self.grad_slot(&mut grads, *a).add_assign(&g);
                    let gb = self.grad_slot(&mut grads, *b);
                    axpy(-T::one(), g.as_slice(), gb.as_mut_slice());
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = self.grad_slot(&mut grads, *a);
                    for ((o, &gi), &bi) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(vb.as_slice()) {
                        *o = *o + gi * bi;
                    }
                    let gb = self.grad_slot(&mut grads, *b);
                    for ((o, &gi), &ai) in gb.as_mut_slice().iter_mut().zip(g.as_slice()).zip(va.as_slice()) {
                        *o = *o + gi * ai;
                    }
                }
                Op::Scale(a, c) => {
                    let ga = self.grad_slot(&mut grads, *a);
                    axpy(*c, g.as_slice(), ga.as_mut_slice());
                }
                Op::MatMul { rows, w } => {
                    let gx = g.matmul(&self.value(*w).transpose())?;
                    let gw = self.value(*rows).transpose().matmul(&g)?;
                    self.grad_slot(&mut grads, *rows).add_assign(&gx);
                    self.grad_slot(&mut grads, *w).add_assign(&gw);
                }
                Op::RowDot(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = self.grad_slot(&mut grads, *a);
                    for r in 0..g.rows() {
                        axpy(g.get(r, 0), vb.row(r), ga.row_mut(r));
                    }
                    let gb = self.grad_slot(&mut grads, *b);
                    for r in 0..g.rows() {
                        axpy(g.get(r, 0), va.row(r), gb.row_mut(r));
                    }
                }
                Op::GroupedSoftmax {
                    segments,
                    logits,
                    num_segments,
                } => {
                    let alpha = node.value.as_ref().expect("softmax value").as_slice();
                    let g = g.as_slice();
                    let mut inner = vec![T::zero(); *num_segments];
                    for ((&s, &a), &gi) in segments.iter().zip(alpha).zip(g) {
                        inner[s as usize] = inner[s as usize] + a * gi;
                    }
                    let gl = self.grad_slot(&mut grads, *logits).as_mut_slice();
                    for (j, &s) in segments.iter().enumerate() {
                        gl[j] = gl[j] + alpha[j] * (g[j] - inner[s as usize]);
                    }
                }
                Op::RowCosine(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let d = va.cols();
                    let mut da = Tensor::zeros(va.rows(), d);
                    let mut db = Tensor::zeros(va.rows(), d);
                    for r in 0..va.rows() {
                        let (x, y) = (va.row(r), vb.row(r));
                        let (nx2, ny2) = (dot(x, x), dot(y, y));
                        if nx2 == T::zero() || ny2 == T::zero() {
                            continue;
                        }
                        let (nx, ny) = (nx2.sqrt(), ny2.sqrt());
                        let c = dot(x, y) / (nx * ny);
                        let gr = g.get(r, 0);
                        let inv = T::one() / (nx * ny);
                        for k in 0..d {
                            da.row_mut(r)[k] = gr * (y[k] * inv - c * x[k] / nx2);
                            db.row_mut(r)[k] = gr * (x[k] * inv - c * y[k] / ny2);
                        }
                    }
                    self.grad_slot(&mut grads, *a).add_assign(&da);
                    self.grad_slot(&mut grads, *b).add_assign(&db);
                }
                Op::LogSigmoid(x) => {
                    let vx = self.value(*x);
                    let gx = self.grad_slot(&mut grads, *x);
                    for ((o, &gi), &xi) in gx.as_mut_slice().iter_mut().zip(g.as_slice()).zip(vx.as_slice()) {
                        *o = *o + gi * sigmoid_neg(xi);
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a).1;
                    let ga = self.grad_slot(&mut grads, *a);
                    for r in 0..g.rows() {
                        axpy(T::one(), &g.row(r)[..ca], ga.row_mut(r));
                    }
                    let gb = self.grad_slot(&mut grads, *b);
                    for r in 0..g.rows() {
                        axpy(T::one(), &g.row(r)[ca..], gb.row_mut(r));
                    }
                }
                Op::Mean(x) => {
                    let n = self.value(*x).len();
                    if n > 0 {
                        let share = g.as_slice()[0] / T::from_usize(n).unwrap();
                        let gx = self.grad_slot(&mut grads, *x);
                        gx.as_mut_slice().iter_mut().for_each(|v| *v = *v + share);
                    }
                }
                Op::SumSquares(x) => {
                    let two_g = g.as_slice()[0] + g.as_slice()[0];
                    let vx = self.value(*x);
                    let gx = self.grad_slot(&mut grads, *x);
                    axpy(two_g, vx.as_slice(), gx.as_mut_slice());
                }
            }
        }
        if !out.all_finite() {
            return Err(NumericsError::NonFinite { op: "backward" });
        }
        Ok(())
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Tensor<T>>], id: NodeId) -> &'g mut Tensor<T> {
        let (r, c) = self.shape(id);
        grads[id.0].get_or_insert_with(|| Tensor::zeros(r, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Tensor<f64>)]) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        for (n, t) in values {
            s.add(*n, t.clone());
        }
        s
    }

    #[test]
    fn gather_duplicate_ids_accumulate() {
        let store = store_with(&[(
            "emb",
            Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
        )]);
        let pid = store.id("emb").unwrap();
        let mut tape = Tape::new(&store);
        let p = tape.param(pid);
        let g = tape.gather_rows(p, vec![0u32, 0]).unwrap();
        assert_eq!(tape.value(g).row(0), tape.value(g).row(1));
        // d/dx of sum(gather) via sum_squares would be nonlinear; use mean * n
        let m = tape.mean(g).unwrap();
        let root = tape.scale(m, 6.0).unwrap();
        let grads = tape.backward(root).unwrap();
        assert_eq!(grads.get(pid).row(0), &[2.0, 2.0, 2.0]);
        assert_eq!(grads.get(pid).row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn gather_empty_ids() {
        let store = store_with(&[("emb", Tensor::filled(3, 2, 1.0))]);
        let pid = store.id("emb").unwrap();
        let mut tape = Tape::new(&store);
        let p = tape.param(pid);
        let g = tape.gather_rows(p, Vec::<u32>::new()).unwrap();
        assert_eq!(tape.shape(g), (0, 2));
        let m = tape.sum_squares(g).unwrap();
        let grads = tape.backward(m).unwrap();
        assert!(grads.get(pid).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gather_out_of_range() {
        let store = store_with(&[("emb", Tensor::filled(3, 2, 1.0))]);
        let mut tape = Tape::new(&store);
        let p = tape.param(store.id("emb").unwrap());
        assert!(matches!(
            tape.gather_rows(p, vec![3u32]),
            Err(NumericsError::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn non_scalar_root_rejected() {
        let store = store_with(&[("x", Tensor::filled(2, 2, 1.0))]);
        let mut tape = Tape::new(&store);
        let p = tape.param(store.id("x").unwrap());
        assert!(matches!(
            tape.backward(p),
            Err(NumericsError::NonScalarRoot { shape: (2, 2) })
        ));
    }

    #[test]
    fn root_is_single_entry() {
        let store = store_with(&[("x", Tensor::from_vec(3, 1, vec![4.0, 5.0, 6.0]).unwrap())]);
        let pid = store.id("x").unwrap();
        let mut tape = Tape::new(&store);
        let p = tape.param(pid);
        let e = tape.row_range(p, 1, 1).unwrap();
        let grads = tape.backward(e).unwrap();
        assert_eq!(grads.get(pid).as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn scaled_root_has_constant_gradient() {
        let store = store_with(&[("x", Tensor::scalar(2.5))]);
        let pid = store.id("x").unwrap();
        let mut tape = Tape::new(&store);
        let p = tape.param(pid);
        let r = tape.scale(p, -3.0).unwrap();
        assert_eq!(tape.backward(r).unwrap().get(pid).as_slice(), &[-3.0]);
    }

    #[test]
    fn mul_identities() {
        let a = Tensor::from_vec(2, 2, vec![1.5, -2.0, 0.25, 3.0]).unwrap();
        let store = store_with(&[("a", a.clone())]);
        let mut tape = Tape::new(&store);
        let p = tape.param(store.id("a").unwrap());
        let ones = tape.constant(Tensor::filled(2, 2, 1.0)).unwrap();
        let zeros = tape.constant(Tensor::zeros(2, 2)).unwrap();
        let x = tape.mul(p, ones).unwrap();
        let z = tape.mul(p, zeros).unwrap();
        assert_eq!(tape.value(x), &a);
        assert!(tape.value(z).as_slice().iter().all(|&v| v == 0.0));
        let col = tape.constant(Tensor::zeros(4, 1)).unwrap();
        assert!(tape.mul(p, col).is_err());
    }

    #[test]
    fn matmul_identity_and_zero() {
        let x = Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let store = store_with(&[("x", x.clone())]);
        let mut tape = Tape::new(&store);
        let p = tape.param(store.id("x").unwrap());
        let i = tape.constant(Tensor::identity(2)).unwrap();
        let z = tape.constant(Tensor::zeros(2, 2)).unwrap();
        let y = tape.matmul_rows(p, i).unwrap();
        assert_eq!(tape.value(y), &x);
        let y0 = tape.matmul_rows(p, z).unwrap();
        assert!(tape.value(y0).as_slice().iter().all(|&v| v == 0.0));
        let bad = tape.constant(Tensor::zeros(3, 3)).unwrap();
        assert!(tape.matmul_rows(p, bad).is_err());
    }

    #[test]
    fn softmax_small_segments() {
        let store = ParameterStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let l = tape.constant(Tensor::column(&[7.0, 0.0, 0.0])).unwrap();
        let a = tape.grouped_softmax(l, vec![0u32, 1, 1], 2).unwrap();
        assert_eq!(tape.value(a).as_slice(), &[1.0, 0.5, 0.5]);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let store = ParameterStore::<f32>::new();
        let mut tape = Tape::new(&store);
        let l = tape.constant(Tensor::column(&[1000.0f32, 999.0])).unwrap();
        let a = tape.grouped_softmax(l, vec![0u32, 0], 1).unwrap();
        let v = tape.value(a).as_slice();
        assert!((v[0] + v[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cosine_degenerate_and_basic() {
        let store = ParameterStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let a = tape
            .constant(Tensor::from_vec(3, 2, vec![3.0, 4.0, 1.0, 0.0, 0.0, 0.0]).unwrap())
            .unwrap();
        let b = tape
            .constant(Tensor::from_vec(3, 2, vec![3.0, 4.0, 0.0, 1.0, 1.0, 1.0]).unwrap())
            .unwrap();
        let c = tape.row_cosine(a, b).unwrap();
        let v = tape.value(c).as_slice();
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert_eq!(v[1], 0.0);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn log_sigmoid_values() {
        assert!((log_sigmoid(0.0f64) + std::f64::consts::LN_2).abs() < 1e-15);
        let far = log_sigmoid(50.0f64);
        assert!(far < 0.0 && far > -2e-22 && far < -1.8e-22);
        assert!((log_sigmoid(-50.0f64) + 50.0).abs() < 1e-12);
        assert!(log_sigmoid(-1000.0f32).is_finite());
    }

    #[test]
    fn concat_layout() {
        let store = ParameterStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::from_vec(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        let b = tape.constant(Tensor::from_vec(1, 2, vec![3.0, 4.0]).unwrap()).unwrap();
        let c = tape.concat_cols(a, b).unwrap();
        assert_eq!(tape.value(c).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let store = ParameterStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::scalar(1e300)).unwrap();
        assert!(matches!(tape.mul(a, a), Err(NumericsError::NonFinite { op: "mul" })));
    }
}
