//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Values live in the
//! tape; callers hold cheap [`TapeTensor`] handles. Gradients for learnable
//! weights flow back into a [`ParamStore`] through
//! [`Tape::accumulate_param_grads`].

use super::matrix::{gemm_nt, gemm_tn, Matrix};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use rand::Rng;
use std::sync::Arc;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeTensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl TapeTensor {
    pub fn id(&self) -> usize {
        self.id
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

type Index = Arc<[usize]>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Sigmoid(usize),
    Relu(usize),
    Log(usize, f64),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    SumAll(usize),
    MeanAll(usize),
    RowL2Norm(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    GatherRows(usize, Index),
    SegmentSum(usize, Index),
    NeighborSum {
        weight: usize,
        msg: usize,
        dst: Index,
        src: Index,
    },
    Mask(usize, Arc<Matrix>),
    Pick(usize, Arc<[(usize, usize)]>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
}

/// Elementwise and reduction kinds exposed through [`Tape::pointwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pointwise {
    Sigmoid,
    Relu,
    Negate,
    Add,
    Hadamard,
    ConcatCols,
    MeanAll,
    RowL2Norm,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

fn dim_err(op: &'static str, a: TapeTensor, b: TapeTensor) -> Error {
    Error::Dimension {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> TapeTensor {
        let (rows, cols) = value.shape();
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        TapeTensor { id, rows, cols }
    }

    fn rg(&self, t: TapeTensor) -> bool {
        self.nodes[t.id].requires_grad
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, m: Matrix) -> TapeTensor {
        self.push(m, Op::Leaf, false)
    }

    /// Input whose gradient is tracked (readable with [`Tape::grad`]).
    pub fn variable(&mut self, m: Matrix) -> TapeTensor {
        self.push(m, Op::Leaf, true)
    }

    /// Records a learnable weight; frozen weights behave like constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> TapeTensor {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.trainable)
    }

    pub fn value(&self, t: TapeTensor) -> &Matrix {
        &self.nodes[t.id].value
    }

    /// Accumulated gradient; zeros when `t` was not reached by the backward pass.
    pub fn grad(&self, t: TapeTensor) -> Matrix {
        self.nodes[t.id]
            .grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(t.rows, t.cols))
    }

    pub fn matmul(&mut self, a: TapeTensor, b: TapeTensor) -> Result<TapeTensor> {
        if a.cols != b.rows {
            return Err(dim_err("matmul", a, b));
        }
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a.id, b.id), rg))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: TapeTensor,
        b: TapeTensor,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TapeTensor> {
        if a.shape() != b.shape() {
            return Err(dim_err(name, a, b));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let v = Matrix::from_vec(a.rows, a.cols, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, op, rg))
    }

    fn map(&mut self, a: TapeTensor, f: impl Fn(f64) -> f64, op: Op) -> TapeTensor {
        let v = self.value(a);
        let data: Vec<f64> = v.data().iter().map(|x| f(*x)).collect();
        let v = Matrix::from_vec(a.rows, a.cols, data).expect("same shape");
        let rg = self.rg(a);
        self.push(v, op, rg)
    }

    pub fn add(&mut self, a: TapeTensor, b: TapeTensor) -> Result<TapeTensor> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a.id, b.id))
    }

    pub fn sub(&mut self, a: TapeTensor, b: TapeTensor) -> Result<TapeTensor> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a.id, b.id))
    }

    pub fn hadamard(&mut self, a: TapeTensor, b: TapeTensor) -> Result<TapeTensor> {
        self.zip_with("hadamard", a, b, |x, y| x * y, Op::Hadamard(a.id, b.id))
    }

    /// `x + 1·b` where `b` is a single row broadcast over every row of `x`.
    pub fn add_row(&mut self, x: TapeTensor, b: TapeTensor) -> Result<TapeTensor> {
        if b.rows != 1 || b.cols != x.cols {
            return Err(dim_err("add_row", x, b));
        }
        let mut v = self.value(x).clone();
        let bv = self.value(b).data().to_vec();
        for r in 0..v.rows() {
            for (o, bb) in v.row_mut(r).iter_mut().zip(&bv) {
                *o += bb;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(v, Op::AddRow(x.id, b.id), rg))
    }

    /// Scales row `i` of `x` by `c[i]`, with `c` a column vector.
    pub fn mul_col(&mut self, c: TapeTensor, x: TapeTensor) -> Result<TapeTensor> {
        if c.cols != 1 || c.rows != x.rows {
            return Err(dim_err("mul_col", c, x));
        }
        let mut v = self.value(x).clone();
        let cv = self.value(c).data().to_vec();
        for (r, s) in cv.iter().enumerate() {
            v.row_mut(r).iter_mut().for_each(|o| *o *= s);
        }
        let rg = self.rg(x) || self.rg(c);
        Ok(self.push(v, Op::MulCol(c.id, x.id), rg))
    }

    pub fn scale(&mut self, a: TapeTensor, s: f64) -> TapeTensor {
        self.map(a, |x| x * s, Op::Scale(a.id, s))
    }

    pub fn add_scalar(&mut self, a: TapeTensor, s: f64) -> TapeTensor {
        self.map(a, |x| x + s, Op::AddScalar(a.id))
    }

    pub fn neg(&mut self, a: TapeTensor) -> TapeTensor {
        self.map(a, |x| -x, Op::Scale(a.id, -1.0))
    }

    pub fn sigmoid(&mut self, a: TapeTensor) -> TapeTensor {
        self.map(a, sigmoid, Op::Sigmoid(a.id))
    }

    pub fn relu(&mut self, a: TapeTensor) -> TapeTensor {
        self.map(a, |x| x.max(0.0), Op::Relu(a.id))
    }

    /// Natural log with the argument clamped from below at `floor`.
    pub fn log_clamped(&mut self, a: TapeTensor, floor: f64) -> TapeTensor {
        self.map(a, move |x| x.max(floor).ln(), Op::Log(a.id, floor))
    }

    pub fn concat_cols(&mut self, parts: &[TapeTensor]) -> Result<TapeTensor> {
        let Some(first) = parts.first() else {
            return Err(Error::Contract("concat of zero tensors".into()));
        };
        let rows = first.rows;
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(dim_err("concat_cols", *first, *bad));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let src = self.nodes[p.id].value.row(r);
                v.row_mut(r)[off..off + p.cols].copy_from_slice(src);
                off += p.cols;
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(v, Op::ConcatCols(parts.iter().map(|p| p.id).collect()), rg))
    }

    pub fn slice_cols(&mut self, a: TapeTensor, start: usize, len: usize) -> Result<TapeTensor> {
        if start + len > a.cols {
            return Err(Error::Contract(format!(
                "slice_cols {start}..{} out of {} columns",
                start + len,
                a.cols
            )));
        }
        let src = self.value(a);
        let mut v = Matrix::zeros(a.rows, len);
        for r in 0..a.rows {
            v.row_mut(r).copy_from_slice(&src.row(r)[start..start + len]);
        }
        let rg = self.rg(a);
        Ok(self.push(v, Op::SliceCols(a.id, start), rg))
    }

    pub fn sum_all(&mut self, a: TapeTensor) -> TapeTensor {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Matrix::filled(1, 1, s), Op::SumAll(a.id), rg)
    }

    pub fn mean_all(&mut self, a: TapeTensor) -> TapeTensor {
        let n = (a.rows * a.cols).max(1) as f64;
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Matrix::filled(1, 1, s / n), Op::MeanAll(a.id), rg)
    }

    /// Euclidean norm of every row, as a column vector.
    pub fn row_l2norm(&mut self, a: TapeTensor) -> TapeTensor {
        let src = self.value(a);
        let data: Vec<f64> = (0..a.rows)
            .map(|r| src.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let rg = self.rg(a);
        self.push(Matrix::column(&data), Op::RowL2Norm(a.id), rg)
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, a: TapeTensor) -> TapeTensor {
        let mut v = self.value(a).clone();
        for r in 0..a.rows {
            let row = v.row_mut(r);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        let rg = self.rg(a);
        self.push(v, Op::SoftmaxRows(a.id), rg)
    }

    /// Row-wise log-softmax, exact for saturated rows.
    pub fn log_softmax_rows(&mut self, a: TapeTensor) -> TapeTensor {
        let mut v = self.value(a).clone();
        for r in 0..a.rows {
            let row = v.row_mut(r);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lz = row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln() + mx;
            row.iter_mut().for_each(|x| *x -= lz);
        }
        let rg = self.rg(a);
        self.push(v, Op::LogSoftmaxRows(a.id), rg)
    }

    pub fn gather_rows(&mut self, a: TapeTensor, idx: Arc<[usize]>) -> Result<TapeTensor> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows) {
            return Err(Error::Contract(format!(
                "gather index {bad} out of {} rows",
                a.rows
            )));
        }
        let v = self.value(a).select_rows(&idx);
        let rg = self.rg(a);
        Ok(self.push(v, Op::GatherRows(a.id, idx), rg))
    }

    /// `out[seg[i]] += a[i]` over all rows; `out` has `n_out` rows.
    pub fn segment_sum(
        &mut self,
        a: TapeTensor,
        seg: Arc<[usize]>,
        n_out: usize,
    ) -> Result<TapeTensor> {
        if seg.len() != a.rows {
            return Err(Error::Contract(format!(
                "segment ids ({}) do not match rows ({})",
                seg.len(),
                a.rows
            )));
        }
        if let Some(&bad) = seg.iter().find(|&&s| s >= n_out) {
            return Err(Error::Contract(format!(
                "segment id {bad} out of {n_out}"
            )));
        }
        let src = self.value(a);
        let mut v = Matrix::zeros(n_out, a.cols);
        for (i, &s) in seg.iter().enumerate() {
            for (o, x) in v.row_mut(s).iter_mut().zip(src.row(i)) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(v, Op::SegmentSum(a.id, seg), rg))
    }

    /// Weighted neighbor aggregation: `out[dst[e]] += weight[e] * msg[src[e]]`.
    ///
    /// `weight` is an `E x 1` column, `msg` is `n x d`, `out` is `n_out x d`.
    pub fn neighbor_sum(
        &mut self,
        weight: TapeTensor,
        msg: TapeTensor,
        dst: Arc<[usize]>,
        src: Arc<[usize]>,
        n_out: usize,
    ) -> Result<TapeTensor> {
        if weight.cols != 1 || weight.rows != dst.len() || dst.len() != src.len() {
            return Err(dim_err("neighbor_sum", weight, msg));
        }
        if src.iter().any(|&s| s >= msg.rows) || dst.iter().any(|&d| d >= n_out) {
            return Err(Error::Contract("neighbor_sum index out of range".into()));
        }
        let w = self.value(weight).data();
        let m = self.value(msg);
        let d = msg.cols;
        let mut v = Matrix::zeros(n_out, d);
        for e in 0..dst.len() {
            let we = w[e];
            if we == 0.0 {
                continue;
            }
            let mrow = m.row(src[e]);
            for (o, x) in v.row_mut(dst[e]).iter_mut().zip(mrow) {
                *o += we * x;
            }
        }
        let rg = self.rg(weight) || self.rg(msg);
        Ok(self.push(
            v,
            Op::NeighborSum {
                weight: weight.id,
                msg: msg.id,
                dst,
                src,
            },
            rg,
        ))
    }

    /// Inverted dropout. Identity in eval mode or at `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: TapeTensor,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<TapeTensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(
                "dropout",
                format!("rate must lie in [0, 1), got {rate}"),
            ));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mut mask = Matrix::zeros(x.rows, x.cols);
        for m in mask.data_mut() {
            if rng.random::<f64>() >= rate {
                *m = keep;
            }
        }
        let v = {
            let src = self.value(x);
            let data = src.data().iter().zip(mask.data()).map(|(a, b)| a * b).collect();
            Matrix::from_vec(x.rows, x.cols, data)?
        };
        let rg = self.rg(x);
        Ok(self.push(v, Op::Mask(x.id, Arc::new(mask)), rg))
    }

    /// Picks individual entries into a `k x 1` column.
    pub fn pick(&mut self, a: TapeTensor, at: Arc<[(usize, usize)]>) -> Result<TapeTensor> {
        if at.iter().any(|&(r, c)| r >= a.rows || c >= a.cols) {
            return Err(Error::Contract("pick index out of range".into()));
        }
        let src = self.value(a);
        let data: Vec<f64> = at.iter().map(|&(r, c)| src.get(r, c)).collect();
        let rg = self.rg(a);
        Ok(self.push(Matrix::column(&data), Op::Pick(a.id, at), rg))
    }

    /// Dispatch by kind; binary kinds read `args[0..2]`, `ConcatCols` reads all.
    pub fn pointwise(&mut self, kind: Pointwise, args: &[TapeTensor]) -> Result<TapeTensor> {
        let need = match kind {
            Pointwise::Add | Pointwise::Hadamard => 2,
            Pointwise::ConcatCols => 1,
            _ => 1,
        };
        if args.len() < need {
            return Err(Error::Contract(format!(
                "{kind:?} needs {need} arguments, got {}",
                args.len()
            )));
        }
        match kind {
            Pointwise::Sigmoid => Ok(self.sigmoid(args[0])),
            Pointwise::Relu => Ok(self.relu(args[0])),
            Pointwise::Negate => Ok(self.neg(args[0])),
            Pointwise::Add => self.add(args[0], args[1]),
            Pointwise::Hadamard => self.hadamard(args[0], args[1]),
            Pointwise::ConcatCols => self.concat_cols(args),
            Pointwise::MeanAll => Ok(self.mean_all(args[0])),
            Pointwise::RowL2Norm => Ok(self.row_l2norm(args[0])),
        }
    }

    fn acc(&mut self, id: usize, g: Matrix) {
        let node = &mut self.nodes[id];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn acc_with(&mut self, id: usize, f: impl FnOnce(&mut Matrix)) {
        let node = &mut self.nodes[id];
        if !node.requires_grad {
            return;
        }
        let (r, c) = node.value.shape();
        let g = node.grad.get_or_insert_with(|| Matrix::zeros(r, c));
        f(g);
    }

    /// Reverse sweep from a scalar loss. A tape can be swept only once.
    pub fn backward(&mut self, loss: TapeTensor) -> Result<()> {
        if loss.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                loss.shape()
            )));
        }
        if self.consumed {
            return Err(Error::Contract(
                "tape already swept; re-run the forward pass".into(),
            ));
        }
        self.consumed = true;
        if !self.rg(loss) {
            return Ok(());
        }
        self.nodes[loss.id].grad = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.id).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                self.nodes[i].grad = Some(g);
                continue;
            }
            let op = self.nodes[i].op.clone();
            self.backprop_node(i, &op, &g)?;
            self.nodes[i].grad = Some(g);
        }

        if let Some(n) = self
            .nodes
            .iter()
            .position(|n| n.grad.as_ref().is_some_and(|g| !g.is_finite()))
        {
            return Err(Error::NonFinite(format!("gradient of tape node {n}")));
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, op: &Op, g: &Matrix) -> Result<()> {
        match *op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.nodes[a].requires_grad {
                    let bv = &self.nodes[b].value;
                    let mut ga = Matrix::zeros(g.rows(), bv.rows());
                    gemm_nt(g, bv, &mut ga);
                    self.acc(a, ga);
                }
                if self.nodes[b].requires_grad {
                    let av = &self.nodes[a].value;
                    let mut gb = Matrix::zeros(av.cols(), g.cols());
                    gemm_tn(av, g, &mut gb);
                    self.acc(b, gb);
                }
            }
            Op::Add(a, b) => {
                self.acc(a, g.clone());
                self.acc(b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(a, g.clone());
                let mut gb = g.clone();
                gb.scale_in_place(-1.0);
                self.acc(b, gb);
            }
            Op::Hadamard(a, b) => {
                if self.nodes[a].requires_grad {
                    let ga = elementwise(g, &self.nodes[b].value, |x, y| x * y);
                    self.acc(a, ga);
                }
                if self.nodes[b].requires_grad {
                    let gb = elementwise(g, &self.nodes[a].value, |x, y| x * y);
                    self.acc(b, gb);
                }
            }
            Op::AddRow(x, b) => {
                self.acc(x, g.clone());
                if self.nodes[b].requires_grad {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.acc(b, gb);
                }
            }
            Op::MulCol(c, x) => {
                if self.nodes[c].requires_grad {
                    let xv = &self.nodes[x].value;
                    let data: Vec<f64> = (0..g.rows())
                        .map(|r| g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum())
                        .collect();
                    self.acc(c, Matrix::column(&data));
                }
                if self.nodes[x].requires_grad {
                    let cv = self.nodes[c].value.data().to_vec();
                    let mut gx = g.clone();
                    for (r, s) in cv.iter().enumerate() {
                        gx.row_mut(r).iter_mut().for_each(|o| *o *= s);
                    }
                    self.acc(x, gx);
                }
            }
            Op::Scale(a, s) => {
                let mut ga = g.clone();
                ga.scale_in_place(s);
                self.acc(a, ga);
            }
            Op::AddScalar(a) => self.acc(a, g.clone()),
            Op::Sigmoid(a) => {
                let ga = elementwise(g, &self.nodes[i].value, |gg, y| gg * y * (1.0 - y));
                self.acc(a, ga);
            }
            Op::Relu(a) => {
                let ga = elementwise(g, &self.nodes[a].value, |gg, x| if x > 0.0 { gg } else { 0.0 });
                self.acc(a, ga);
            }
            Op::Log(a, floor) => {
                let ga = elementwise(g, &self.nodes[a].value, |gg, x| {
                    if x >= floor {
                        gg / x
                    } else {
                        0.0
                    }
                });
                self.acc(a, ga);
            }
            Op::ConcatCols(ref parts) => {
                let mut off = 0;
                for &p in parts {
                    let (rows, cols) = self.nodes[p].value.shape();
                    if self.nodes[p].requires_grad {
                        let mut gp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        self.acc(p, gp);
                    }
                    off += cols;
                }
            }
            Op::SliceCols(a, start) => {
                let len = g.cols();
                self.acc_with(a, |ga| {
                    for r in 0..g.rows() {
                        for (o, v) in ga.row_mut(r)[start..start + len].iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::SumAll(a) => {
                let (r, c) = self.nodes[a].value.shape();
                self.acc(a, Matrix::filled(r, c, g.scalar()));
            }
            Op::MeanAll(a) => {
                let (r, c) = self.nodes[a].value.shape();
                let n = (r * c).max(1) as f64;
                self.acc(a, Matrix::filled(r, c, g.scalar() / n));
            }
            Op::RowL2Norm(a) => {
                let xv = &self.nodes[a].value;
                let norms = &self.nodes[i].value;
                let mut ga = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let nr = norms.get(r, 0);
                    if nr > 0.0 {
                        let s = g.get(r, 0) / nr;
                        for (o, x) in ga.row_mut(r).iter_mut().zip(xv.row(r)) {
                            *o = s * x;
                        }
                    }
                }
                self.acc(a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let gr = g.row(r);
                    let total: f64 = gr.iter().sum();
                    for ((o, ly), q) in ga.row_mut(r).iter_mut().zip(y.row(r)).zip(gr) {
                        *o = q - ly.exp() * total;
                    }
                }
                self.acc(a, ga);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((o, p), q) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = p * (q - dot);
                    }
                }
                self.acc(a, ga);
            }
            Op::GatherRows(a, ref idx) => {
                let idx = idx.clone();
                self.acc_with(a, |ga| {
                    for (o, &src) in idx.iter().enumerate() {
                        for (x, v) in ga.row_mut(src).iter_mut().zip(g.row(o)) {
                            *x += v;
                        }
                    }
                });
            }
            Op::SegmentSum(a, ref seg) => {
                let seg = seg.clone();
                self.acc_with(a, |ga| {
                    for (r, &s) in seg.iter().enumerate() {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(s)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::NeighborSum {
                weight,
                msg,
                ref dst,
                ref src,
            } => {
                let (dst, src) = (dst.clone(), src.clone());
                if self.nodes[weight].requires_grad {
                    let m = &self.nodes[msg].value;
                    let data: Vec<f64> = (0..dst.len())
                        .map(|e| g.row(dst[e]).iter().zip(m.row(src[e])).map(|(a, b)| a * b).sum())
                        .collect();
                    self.acc(weight, Matrix::column(&data));
                }
                if self.nodes[msg].requires_grad {
                    let w = self.nodes[weight].value.data().to_vec();
                    self.acc_with(msg, |gm| {
                        for e in 0..dst.len() {
                            let we = w[e];
                            if we == 0.0 {
                                continue;
                            }
                            for (o, v) in gm.row_mut(src[e]).iter_mut().zip(g.row(dst[e])) {
                                *o += we * v;
                            }
                        }
                    });
                }
            }
            Op::Mask(a, ref mask) => {
                let ga = elementwise(g, mask, |x, y| x * y);
                self.acc(a, ga);
            }
            Op::Pick(a, ref at) => {
                let at = at.clone();
                self.acc_with(a, |ga| {
                    for (k, &(r, c)) in at.iter().enumerate() {
                        let v = ga.get(r, c) + g.get(k, 0);
                        ga.set(r, c, v);
                    }
                });
            }
        }
        Ok(())
    }

    /// Adds the gradients of every recorded trainable parameter into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for node in &self.nodes {
            if let (Op::Param(id), Some(g)) = (&node.op, &node.grad) {
                let p = store.get_mut(*id);
                p.grad.add_assign(g);
                p.touched = true;
            }
        }
    }
}

fn elementwise(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}
