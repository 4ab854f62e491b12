//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive's vector-Jacobian product is itself written with tape
//! primitives. With `create_graph` the backward pass is therefore recorded
//! like any other computation and can be differentiated again, which is
//! what lets an outer loss see through a few inner gradient steps.
//!
//! Node ids are assigned in creation order, so they are already a
//! topological order; backward walks them in reverse, once each.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result, ShapeError};
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul {
        a: NodeId,
        b: NodeId,
        ta: bool,
        tb: bool,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    Exp(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    SoftmaxRows(NodeId),
    /// m×n → 1×n (column totals).
    SumRows(NodeId),
    /// 1×n → m×n.
    BroadcastRows(NodeId),
    /// m×n → m×1 (row totals).
    SumCols(NodeId),
    /// m×1 → m×n.
    BroadcastCols(NodeId),
    SumAll(NodeId),
    /// 1×1 → r×c.
    Expand(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols {
        a: NodeId,
        start: usize,
    },
    PadCols {
        a: NodeId,
        start: usize,
    },
    ConcatRows(Vec<NodeId>),
    SliceRows {
        a: NodeId,
        start: usize,
    },
    PadRows {
        a: NodeId,
        start: usize,
    },
    GatherCols(NodeId, Rc<[usize]>),
    ScatterCols(NodeId, Rc<[usize]>),
    GatherRows(NodeId, Rc<[usize]>),
    ScatterRows(NodeId, Rc<[usize]>),
    Reshape(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::Exp(..) => "exp",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::SumRows(..) => "sum_rows",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::SumAll(..) => "sum_all",
            Op::Expand(..) => "expand",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::PadCols { .. } => "pad_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceRows { .. } => "slice_rows",
            Op::PadRows { .. } => "pad_rows",
            Op::GatherCols(..) => "gather_cols",
            Op::ScatterCols(..) => "scatter_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterRows(..) => "scatter_rows",
            Op::Reshape(..) => "reshape",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::ConcatCols(ps) | Op::ConcatRows(ps) => ps.clone(),
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Exp(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::SoftmaxRows(a)
            | Op::SumRows(a)
            | Op::BroadcastRows(a)
            | Op::SumCols(a)
            | Op::BroadcastCols(a)
            | Op::SumAll(a)
            | Op::Expand(a)
            | Op::SliceCols { a, .. }
            | Op::PadCols { a, .. }
            | Op::SliceRows { a, .. }
            | Op::PadRows { a, .. }
            | Op::GatherCols(a, _)
            | Op::ScatterCols(a, _)
            | Op::GatherRows(a, _)
            | Op::ScatterRows(a, _)
            | Op::Reshape(a) => vec![*a],
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records primitive operations for one computation.
///
/// Single-threaded; build one tape per sample and run tapes concurrently if
/// needed.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grad_enabled: Cell<bool>,
    macs: Cell<u64>,
    first_non_finite: Cell<Option<NodeId>>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Restores the previous recording mode when dropped.
pub struct GradModeGuard<'t> {
    tape: &'t Tape,
    previous: bool,
}

impl Drop for GradModeGuard<'_> {
    fn drop(&mut self) {
        self.tape.grad_enabled.set(self.previous);
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: Cell::new(true),
            macs: Cell::new(0),
            first_non_finite: Cell::new(None),
        }
    }

    /// A tape on which nothing requires gradients; for plain evaluation.
    pub fn inference() -> Self {
        let t = Tape::new();
        t.grad_enabled.set(false);
        t
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multiply-accumulate count of all matmuls recorded so far.
    pub fn macs(&self) -> u64 {
        self.macs.get()
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled.get()
    }

    pub fn set_grad_enabled(&self, enabled: bool) -> GradModeGuard<'_> {
        let previous = self.grad_enabled.replace(enabled);
        GradModeGuard {
            tape: self,
            previous,
        }
    }

    /// Trainable input: gradients flow to it (unless recording is off).
    pub fn param(&self, value: Tensor) -> Var<'_> {
        let rg = self.grad_enabled.get();
        self.push(value, Op::Leaf, rg)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var<'_>) -> Rc<Tensor> {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn requires_grad(&self, v: Var<'_>) -> bool {
        self.nodes.borrow()[v.id].requires_grad
    }

    /// Fails with the id and kind of the first node that produced a
    /// non-finite value.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite.get() {
            None => Ok(()),
            Some(id) => {
                let name = self.nodes.borrow()[id].op.name();
                Err(Error::NonFinite(format!("tape node {id} ({name})")))
            }
        }
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        if self.first_non_finite.get().is_none() && !value.all_finite() {
            self.first_non_finite.set(Some(id));
        }
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn record(&self, value: Tensor, op: Op) -> Var<'_> {
        let rg = self.grad_enabled.get() && {
            let nodes = self.nodes.borrow();
            op.parents().iter().any(|&p| nodes[p].requires_grad)
        };
        self.push(value, op, rg)
    }

    fn var(&self, id: NodeId) -> Var<'_> {
        Var { tape: self, id }
    }

    /// Gradients of the scalar `y` with respect to each of `wrt`.
    ///
    /// With `create_graph` the returned gradients are themselves recorded
    /// and differentiable; otherwise they are constants.
    pub fn grad<'t>(
        &'t self,
        y: Var<'t>,
        wrt: &[Var<'t>],
        create_graph: bool,
    ) -> Result<Vec<Var<'t>>> {
        let yshape = y.shape();
        if yshape != [1, 1] {
            return Err(ShapeError::new(format!("grad needs a 1x1 output, got {yshape:?}")).into());
        }
        let n = y.id + 1;
        let (reach, parents) = {
            let nodes = self.nodes.borrow();
            let mut reach = vec![false; n];
            for w in wrt {
                if w.id < n && nodes[w.id].requires_grad {
                    reach[w.id] = true;
                }
            }
            let mut parents: Vec<Vec<NodeId>> = Vec::with_capacity(n);
            for id in 0..n {
                let ps = nodes[id].op.parents();
                if nodes[id].requires_grad && !reach[id] {
                    reach[id] = ps.iter().any(|&p| reach[p]);
                }
                parents.push(ps);
            }
            (reach, parents)
        };

        let _mode = self.set_grad_enabled(create_graph);
        let mut result: Vec<Option<Var<'t>>> = vec![None; wrt.len()];
        if reach[y.id] {
            let mut acc: Vec<Option<Var<'t>>> = vec![None; n];
            acc[y.id] = Some(self.constant(Tensor::scalar(1.0)));
            for id in (0..n).rev() {
                if !reach[id] {
                    continue;
                }
                let Some(g) = acc[id].take() else { continue };
                for (slot, w) in result.iter_mut().zip(wrt) {
                    if w.id == id {
                        *slot = Some(g);
                    }
                }
                let needs: Vec<bool> = parents[id].iter().map(|&p| reach[p]).collect();
                if !needs.iter().any(|&b| b) {
                    continue;
                }
                let contribs = self.vjp(id, g, &needs)?;
                for (&p, c) in parents[id].iter().zip(contribs) {
                    if let Some(c) = c {
                        acc[p] = Some(match acc[p] {
                            Some(prev) => prev.add(c)?,
                            None => c,
                        });
                    }
                }
            }
        }
        let out = wrt
            .iter()
            .zip(result)
            .map(|(w, r)| match r {
                Some(g) => g,
                None => {
                    let s = w.shape();
                    self.constant(
                        Tensor::new(s.clone(), vec![0.0; s.iter().product()]).expect("valid shape"),
                    )
                }
            })
            .collect();
        Ok(out)
    }

    fn vjp<'t>(&'t self, id: NodeId, g: Var<'t>, needs: &[bool]) -> Result<Vec<Option<Var<'t>>>> {
        let op = self.nodes.borrow()[id].op.clone();
        let v = |i: NodeId| self.var(i);
        let y = v(id);
        let one = |x: Result<Var<'t>>| -> Result<Vec<Option<Var<'t>>>> { Ok(vec![Some(x?)]) };
        match op {
            Op::Leaf => Ok(vec![]),
            Op::MatMul { a, b, ta, tb } => {
                let (va, vb) = (v(a), v(b));
                let ga = if needs[0] {
                    Some(if ta {
                        vb.matmul_t(g, tb, true)?
                    } else {
                        g.matmul_t(vb, false, !tb)?
                    })
                } else {
                    None
                };
                let gb = if needs[1] {
                    Some(if tb {
                        g.matmul_t(va, true, ta)?
                    } else {
                        va.matmul_t(g, !ta, false)?
                    })
                } else {
                    None
                };
                Ok(vec![ga, gb])
            }
            Op::Add(..) => Ok(vec![Some(g), Some(g)]),
            Op::Sub(..) => Ok(vec![Some(g), if needs[1] { Some(g.neg()) } else { None }]),
            Op::Mul(a, b) => Ok(vec![
                if needs[0] { Some(g.mul(v(b))?) } else { None },
                if needs[1] { Some(g.mul(v(a))?) } else { None },
            ]),
            Op::Neg(_) => Ok(vec![Some(g.neg())]),
            Op::Scale(_, s) => Ok(vec![Some(g.scale(s))]),
            Op::Exp(_) => one(g.mul(y)),
            Op::Sin(a) => one(g.mul(v(a).cos())),
            Op::Cos(a) => one(g.mul(v(a).sin()).map(|x| x.neg())),
            Op::SoftmaxRows(_) => {
                let n = y.shape()[1];
                let inner = g.mul(y)?.sum_cols()?.broadcast_cols(n)?;
                one(g.sub(inner)?.mul(y))
            }
            Op::SumRows(a) => one(g.broadcast_rows(v(a).shape()[0])),
            Op::BroadcastRows(_) => one(g.sum_rows()),
            Op::SumCols(a) => one(g.broadcast_cols(v(a).shape()[1])),
            Op::BroadcastCols(_) => one(g.sum_cols()),
            Op::SumAll(a) => {
                let s = v(a).shape();
                one(g.expand(s[0], s[1]))
            }
            Op::Expand(_) => one(g.sum_all()),
            Op::ConcatCols(ps) => {
                let mut start = 0;
                let mut out = Vec::with_capacity(ps.len());
                for (k, p) in ps.iter().enumerate() {
                    let w = v(*p).shape()[1];
                    out.push(if needs[k] {
                        Some(g.slice_cols(start, w)?)
                    } else {
                        None
                    });
                    start += w;
                }
                Ok(out)
            }
            Op::SliceCols { a, start } => one(g.pad_cols(start, v(a).shape()[1])),
            Op::PadCols { a, start } => one(g.slice_cols(start, v(a).shape()[1])),
            Op::ConcatRows(ps) => {
                let mut start = 0;
                let mut out = Vec::with_capacity(ps.len());
                for (k, p) in ps.iter().enumerate() {
                    let h = v(*p).shape()[0];
                    out.push(if needs[k] {
                        Some(g.slice_rows(start, h)?)
                    } else {
                        None
                    });
                    start += h;
                }
                Ok(out)
            }
            Op::SliceRows { a, start } => one(g.pad_rows(start, v(a).shape()[0])),
            Op::PadRows { a, start } => one(g.slice_rows(start, v(a).shape()[0])),
            Op::GatherCols(a, idx) => one(g.scatter_cols_rc(idx, v(a).shape()[1])),
            Op::ScatterCols(_, idx) => one(g.gather_cols_rc(idx)),
            Op::GatherRows(a, idx) => one(g.scatter_rows_rc(idx, v(a).shape()[0])),
            Op::ScatterRows(_, idx) => one(g.gather_rows_rc(idx)),
            Op::Reshape(a) => one(g.reshape(v(a).shape())),
        }
    }
}

fn require_matrix(op: &str, t: &Tensor) -> Result<(usize, usize), ShapeError> {
    if t.rank() != 2 {
        return Err(ShapeError::new(format!(
            "{op} needs a matrix, got {:?}",
            t.shape()
        )));
    }
    Ok((t.rows(), t.cols()))
}

fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::from_rows(rows, cols, data).expect("kernel produced consistent extents")
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(*self)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Value of a 1×1 node.
    pub fn item(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.len(), 1);
        v.data()[0]
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let out = self.value().map(f);
        self.tape.record(out, op)
    }

    fn zip(&self, other: Var<'t>, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        let out = self.value().zip_map(&other.value(), f)?;
        Ok(self.tape.record(out, op))
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) · op(other)`, `op` transposing when the flag is set.
    pub fn matmul_t(&self, other: Var<'t>, ta: bool, tb: bool) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let out = a.matmul_t(&b, ta, tb)?;
        let k = if ta { a.rows() } else { a.cols() };
        let macs = (out.rows() * out.cols() * k) as u64;
        self.tape.macs.set(self.tape.macs.get() + macs);
        Ok(self.tape.record(
            out,
            Op::MatMul {
                a: self.id,
                b: other.id,
                ta,
                tb,
            },
        ))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn neg(&self) -> Var<'t> {
        self.unary(Op::Neg(self.id), |x| -x)
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, s), |x| x * s)
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn sin(&self) -> Var<'t> {
        self.unary(Op::Sin(self.id), f64::sin)
    }

    pub fn cos(&self) -> Var<'t> {
        self.unary(Op::Cos(self.id), f64::cos)
    }

    /// Row-wise softmax; each row is shifted by its maximum first.
    pub fn softmax_rows(&self) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("softmax_rows", &a)?;
        let mut out = a.data().to_vec();
        for row in out.chunks_mut(c) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        Ok(self.tape.record(mat(r, c, out), Op::SoftmaxRows(self.id)))
    }

    /// Column totals: m×n → 1×n.
    pub fn sum_rows(&self) -> Result<Var<'t>> {
        let a = self.value();
        let (_, c) = require_matrix("sum_rows", &a)?;
        let mut out = vec![0.0; c];
        for row in a.data().chunks(c) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Ok(self.tape.record(mat(1, c, out), Op::SumRows(self.id)))
    }

    /// Repeat a 1×n row m times. The only broadcasting the tape offers.
    pub fn broadcast_rows(&self, m: usize) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("broadcast_rows", &a)?;
        if r != 1 || m == 0 {
            return Err(
                ShapeError::new(format!("broadcast_rows of {:?} to {m} rows", a.shape())).into(),
            );
        }
        let out = a.data().repeat(m);
        Ok(self.tape.record(mat(m, c, out), Op::BroadcastRows(self.id)))
    }

    /// Row totals: m×n → m×1.
    pub fn sum_cols(&self) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("sum_cols", &a)?;
        let out = a.data().chunks(c).map(|row| row.iter().sum()).collect();
        Ok(self.tape.record(mat(r, 1, out), Op::SumCols(self.id)))
    }

    /// Repeat an m×1 column n times.
    pub fn broadcast_cols(&self, n: usize) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("broadcast_cols", &a)?;
        if c != 1 || n == 0 {
            return Err(
                ShapeError::new(format!("broadcast_cols of {:?} to {n} cols", a.shape())).into(),
            );
        }
        let out = a
            .data()
            .iter()
            .flat_map(|&x| std::iter::repeat(x).take(n))
            .collect();
        Ok(self.tape.record(mat(r, n, out), Op::BroadcastCols(self.id)))
    }

    pub fn sum_all(&self) -> Result<Var<'t>> {
        let a = self.value();
        require_matrix("sum_all", &a)?;
        Ok(self
            .tape
            .record(Tensor::scalar(a.sum()), Op::SumAll(self.id)))
    }

    /// Fill an r×c matrix with the value of a 1×1 node.
    pub fn expand(&self, r: usize, c: usize) -> Result<Var<'t>> {
        let a = self.value();
        if a.shape() != [1, 1] || r == 0 || c == 0 {
            return Err(ShapeError::new(format!("expand {:?} to {r}x{c}", a.shape())).into());
        }
        Ok(self
            .tape
            .record(Tensor::full(r, c, a.data()[0]), Op::Expand(self.id)))
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("slice_cols", &a)?;
        if len == 0 || start + len > c {
            return Err(ShapeError::new(format!(
                "slice_cols [{start}, {}) of {c} cols",
                start + len
            ))
            .into());
        }
        let out = a
            .data()
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Ok(self
            .tape
            .record(mat(r, len, out), Op::SliceCols { a: self.id, start }))
    }

    /// Place this matrix at column `start` of a zero matrix `total` wide.
    pub fn pad_cols(&self, start: usize, total: usize) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("pad_cols", &a)?;
        if start + c > total {
            return Err(
                ShapeError::new(format!("pad_cols {c} cols at {start} into {total}")).into(),
            );
        }
        let mut out = vec![0.0; r * total];
        for (i, row) in a.data().chunks(c).enumerate() {
            out[i * total + start..i * total + start + c].copy_from_slice(row);
        }
        Ok(self
            .tape
            .record(mat(r, total, out), Op::PadCols { a: self.id, start }))
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("slice_rows", &a)?;
        if len == 0 || start + len > r {
            return Err(ShapeError::new(format!(
                "slice_rows [{start}, {}) of {r} rows",
                start + len
            ))
            .into());
        }
        let out = a.data()[start * c..(start + len) * c].to_vec();
        Ok(self
            .tape
            .record(mat(len, c, out), Op::SliceRows { a: self.id, start }))
    }

    pub fn pad_rows(&self, start: usize, total: usize) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("pad_rows", &a)?;
        if start + r > total {
            return Err(
                ShapeError::new(format!("pad_rows {r} rows at {start} into {total}")).into(),
            );
        }
        let mut out = vec![0.0; total * c];
        out[start * c..(start + r) * c].copy_from_slice(a.data());
        Ok(self
            .tape
            .record(mat(total, c, out), Op::PadRows { a: self.id, start }))
    }

    pub fn gather_cols(&self, idx: &[usize]) -> Result<Var<'t>> {
        self.gather_cols_rc(idx.into())
    }

    fn gather_cols_rc(&self, idx: Rc<[usize]>) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("gather_cols", &a)?;
        if idx.is_empty() || idx.iter().any(|&i| i >= c) {
            return Err(ShapeError::new(format!("gather_cols index out of {c} cols")).into());
        }
        let out = a
            .data()
            .chunks(c)
            .flat_map(|row| idx.iter().map(move |&i| row[i]))
            .collect();
        Ok(self
            .tape
            .record(mat(r, idx.len(), out), Op::GatherCols(self.id, idx)))
    }

    /// Column `k` is added into column `idx[k]` of a zero matrix `total` wide.
    pub fn scatter_cols(&self, idx: &[usize], total: usize) -> Result<Var<'t>> {
        self.scatter_cols_rc(idx.into(), total)
    }

    fn scatter_cols_rc(&self, idx: Rc<[usize]>, total: usize) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("scatter_cols", &a)?;
        if idx.len() != c || idx.iter().any(|&i| i >= total) {
            return Err(ShapeError::new(format!("scatter_cols {c} cols into {total}")).into());
        }
        let mut out = vec![0.0; r * total];
        for (i, row) in a.data().chunks(c).enumerate() {
            for (k, &j) in idx.iter().enumerate() {
                out[i * total + j] += row[k];
            }
        }
        Ok(self
            .tape
            .record(mat(r, total, out), Op::ScatterCols(self.id, idx)))
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var<'t>> {
        self.gather_rows_rc(idx.into())
    }

    fn gather_rows_rc(&self, idx: Rc<[usize]>) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("gather_rows", &a)?;
        if idx.is_empty() || idx.iter().any(|&i| i >= r) {
            return Err(ShapeError::new(format!("gather_rows index out of {r} rows")).into());
        }
        let out = idx
            .iter()
            .flat_map(|&i| a.row_slice(i).iter().copied())
            .collect();
        Ok(self
            .tape
            .record(mat(idx.len(), c, out), Op::GatherRows(self.id, idx)))
    }

    pub fn scatter_rows(&self, idx: &[usize], total: usize) -> Result<Var<'t>> {
        self.scatter_rows_rc(idx.into(), total)
    }

    fn scatter_rows_rc(&self, idx: Rc<[usize]>, total: usize) -> Result<Var<'t>> {
        let a = self.value();
        let (r, c) = require_matrix("scatter_rows", &a)?;
        if idx.len() != r || idx.iter().any(|&i| i >= total) {
            return Err(ShapeError::new(format!("scatter_rows {r} rows into {total}")).into());
        }
        let mut out = vec![0.0; total * c];
        for (k, &i) in idx.iter().enumerate() {
            for (o, x) in out[i * c..(i + 1) * c].iter_mut().zip(a.row_slice(k)) {
                *o += x;
            }
        }
        Ok(self
            .tape
            .record(mat(total, c, out), Op::ScatterRows(self.id, idx)))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        let out = self.value().reshape(shape)?;
        Ok(self.tape.record(out, Op::Reshape(self.id)))
    }

    /// Sum of squares of every entry, as 1×1.
    pub fn sq_norm(&self) -> Result<Var<'t>> {
        self.mul(*self)?.sum_all()
    }

    /// Mean of every entry, as 1×1.
    pub fn mean_all(&self) -> Result<Var<'t>> {
        let n = self.value().len() as f64;
        Ok(self.sum_all()?.scale(1.0 / n))
    }

    /// `self + bias` with a 1×n bias repeated over rows.
    pub fn add_row_bias(&self, bias: Var<'t>) -> Result<Var<'t>> {
        let m = self.shape()[0];
        self.add(bias.broadcast_rows(m)?)
    }
}

/// Side-by-side concatenation of matrices with equal row counts.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let Some(first) = parts.first() else {
        return Err(ShapeError::new("concat_cols of nothing").into());
    };
    let tape = first.tape;
    let vals: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
    let r = vals[0].shape()[0];
    for v in &vals {
        let (vr, _) = require_matrix("concat_cols", v)?;
        if vr != r {
            return Err(ShapeError::mismatch("concat_cols", vals[0].shape(), v.shape()).into());
        }
    }
    let total: usize = vals.iter().map(|v| v.cols()).sum();
    let mut out = Vec::with_capacity(r * total);
    for i in 0..r {
        for v in &vals {
            out.extend_from_slice(v.row_slice(i));
        }
    }
    Ok(tape.record(
        mat(r, total, out),
        Op::ConcatCols(parts.iter().map(|p| p.id).collect()),
    ))
}

/// Stack matrices with equal column counts.
pub fn concat_rows<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let Some(first) = parts.first() else {
        return Err(ShapeError::new("concat_rows of nothing").into());
    };
    let tape = first.tape;
    let vals: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
    let c = vals[0].shape()[1];
    for v in &vals {
        let (_, vc) = require_matrix("concat_rows", v)?;
        if vc != c {
            return Err(ShapeError::mismatch("concat_rows", vals[0].shape(), v.shape()).into());
        }
    }
    let rows: usize = vals.iter().map(|v| v.rows()).sum();
    let out = vals.iter().flat_map(|v| v.data().iter().copied()).collect();
    Ok(tape.record(
        mat(rows, c, out),
        Op::ConcatRows(parts.iter().map(|p| p.id).collect()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_derivative_at_zero() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(0.0));
        let y = x.sin();
        let g = tape.grad(y, &[x], false).unwrap();
        assert_eq!(g[0].item(), 1.0);
    }

    #[test]
    fn squared_norm_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::column(vec![1.0, 2.0, 3.0]));
        let y = x.matmul_t(x, true, false).unwrap();
        let g = tape.grad(y, &[x], false).unwrap();
        assert_eq!(g[0].value().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn second_derivative_through_create_graph() {
        // d/dx of (d/dx x^3) = 6x
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.5));
        let y = x.mul(x).unwrap().mul(x).unwrap();
        let dy = tape.grad(y, &[x], true).unwrap()[0];
        assert!((dy.item() - 3.0 * 2.25).abs() < 1e-12);
        let d2 = tape.grad(dy, &[x], false).unwrap()[0];
        assert!((d2.item() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn first_order_gradients_are_constants() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let y = x.mul(x).unwrap();
        let dy = tape.grad(y, &[x], false).unwrap()[0];
        assert!(!tape.requires_grad(dy));
        assert!(tape.grad_enabled());
    }

    #[test]
    fn unreached_inputs_get_zero_gradients() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let z = tape.param(Tensor::zeros(2, 3));
        let y = x.exp();
        let g = tape.grad(y, &[x, z], false).unwrap();
        assert_eq!(g[1].value().data(), &[0.0; 6]);
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let tape = Tape::new();
        let a = tape.param(Tensor::zeros(2, 3));
        let b = tape.param(Tensor::zeros(2, 2));
        assert!(matches!(a.add(b), Err(Error::Shape(_))));
        assert!(matches!(a.matmul(a), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_nodes_are_named() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(1000.0));
        let y = x.exp();
        let _ = y.scale(0.0);
        let err = tape.check_finite().unwrap_err().to_string();
        assert!(err.contains("node 1") && err.contains("exp"), "{err}");
    }

    #[test]
    fn inference_tape_records_no_gradients() {
        let tape = Tape::inference();
        let x = tape.param(Tensor::scalar(1.0));
        assert!(!tape.requires_grad(x.exp()));
    }

    #[test]
    fn macs_are_counted() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(4, 3));
        let b = tape.constant(Tensor::zeros(3, 5));
        a.matmul(b).unwrap();
        assert_eq!(tape.macs(), 60);
    }
}
