//! Reverse-mode differentiation over a linear tape of coarse tensor ops.
//!
//! Every op works on 2-D row-major values (`rows × cols`); 1-D tensors are
//! treated as a single row. A forward pass appends nodes, `backward` replays
//! them in reverse. Nodes that cannot reach a parameter or tracked input are
//! skipped on the way back.

use std::collections::HashMap;

use super::activation::Activation;
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Backward rule for ops implemented outside this module (conv, spectral).
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input (None when the input needs none).
    fn backward(
        &self,
        inputs: &[&Tensor],
        needs: &[bool],
        output: &Tensor,
        grad: &[f64],
    ) -> Vec<Option<Vec<f64>>>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Act(Var, Activation),
    SoftmaxRows(Var),
    Transpose(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>),
    SumRows(Var),
    MeanRows(Var),
    MaxRows(Var, Vec<usize>),
    SumCols(Var),
    SumAll(Var),
    MeanAll(Var),
    Reshape(Var),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Computation record for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<usize, Var>,
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to a node, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].as_deref()
    }

    /// Parameter gradients in parameter-id order.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, Option<&[f64]>)> + '_ {
        self.params.iter().map(|(id, v)| (*id, self.wrt(*v)))
    }

    /// Dense per-parameter gradient table sized for `store`; parameters the
    /// forward pass never touched get zeros.
    pub fn into_param_grads(self, store: &ParamStore) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = store.iter().map(|(_, e)| vec![0.0; e.len()]).collect();
        let Gradients { mut nodes, params } = self;
        for (id, v) in params {
            if let Some(g) = nodes[v.0].take() {
                out[id.0] = g;
            }
        }
        out
    }
}

fn mismatch(op: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::shape(format!(
        "{op}: incompatible shapes {:?} and {:?}",
        a.shape(),
        b.shape()
    ))
}

/// `c = beta * c + op(a) * op(b)` with `op` an optional transpose.
/// `a` is stored `m × k` (or `k × m` when `ta`), `b` is `k × n` (or `n × k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements of the three slices, whose lengths are asserted.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn add_into(acc: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match acc {
        Some(a) => a.iter_mut().zip(g).for_each(|(x, y)| *x += y),
        None => *acc = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is wanted (used by the gradient checker).
    pub fn tracked(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Loads a parameter onto the tape, once per tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id.0) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.param_vars.insert(id.0, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, k2, n) = (ta.rows(), ta.cols(), tb.rows(), tb.cols());
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, 0.0);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), needs))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), needs))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "div", |x, y| x / y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Div(a, b), needs))
    }

    /// `a[i, j] + row[j]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let c = ta.cols();
        if tr.len() != c {
            return Err(mismatch("add_row", ta, tr));
        }
        let mut data = ta.data().to_vec();
        for r in data.chunks_mut(c) {
            r.iter_mut().zip(tr.data()).for_each(|(x, y)| *x += y);
        }
        let t = Tensor::from_parts(ta.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(row);
        Ok(self.push(t, Op::AddRow(a, row), needs))
    }

    /// `a[i, j] * row[j]`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let c = ta.cols();
        if tr.len() != c {
            return Err(mismatch("mul_row", ta, tr));
        }
        let mut data = ta.data().to_vec();
        for r in data.chunks_mut(c) {
            r.iter_mut().zip(tr.data()).for_each(|(x, y)| *x *= y);
        }
        let t = Tensor::from_parts(ta.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(row);
        Ok(self.push(t, Op::MulRow(a, row), needs))
    }

    /// `a[i, j] * col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        let c = ta.cols();
        if tc.len() != ta.rows() {
            return Err(mismatch("mul_col", ta, tc));
        }
        let mut data = ta.data().to_vec();
        for (r, s) in data.chunks_mut(c).zip(tc.data()) {
            r.iter_mut().for_each(|x| *x *= s);
        }
        let t = Tensor::from_parts(ta.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(col);
        Ok(self.push(t, Op::MulCol(a, col), needs))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|x| x * s).collect());
        let needs = self.needs(a);
        self.push(t, Op::Scale(a, s), needs)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|x| x + c).collect());
        let needs = self.needs(a);
        self.push(t, Op::Offset(a), needs)
    }

    pub fn act(&mut self, a: Var, f: Activation) -> Var {
        if f == Activation::Identity {
            return a;
        }
        let ta = self.value(a);
        let t = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|&x| f.apply(x)).collect());
        let needs = self.needs(a);
        self.push(t, Op::Act(a, f), needs)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let t = softmax_rows_value(ta);
        let needs = self.needs(a);
        self.push(t, Op::SoftmaxRows(a), needs)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let t = transpose_value(ta);
        let needs = self.needs(a);
        self.push(t, Op::Transpose(a), needs)
    }

    /// Column-wise concatenation of equal-row matrices.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), t));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::from_parts(vec![rows, total], data),
            Op::Concat(parts.to_vec()),
            needs,
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        if start + len > c {
            return Err(Error::shape(format!(
                "slice_cols {start}..{} out of {c} columns",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row_slice(r)[start..start + len]);
        }
        let t = Tensor::from_parts(vec![ta.rows(), len], data);
        let needs = self.needs(a);
        Ok(self.push(t, Op::SliceCols(a, start), needs))
    }

    /// Row selection `out[r] = a[idx[r]]`.
    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let ta = self.value(a);
        let (n, c) = (ta.rows(), ta.cols());
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in &idx {
            if i >= n {
                return Err(Error::shape(format!("gather_rows index {i} >= {n}")));
            }
            data.extend_from_slice(ta.row_slice(i));
        }
        let t = Tensor::from_parts(vec![idx.len(), c], data);
        let needs = self.needs(a);
        Ok(self.push(t, Op::Gather(a, idx), needs))
    }

    /// Segment sum `out[idx[r]] += a[r]` into `n_out` rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Vec<usize>, n_out: usize) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        if idx.len() != ta.rows() {
            return Err(Error::shape(format!(
                "scatter_add_rows: {} indices for {} rows",
                idx.len(),
                ta.rows()
            )));
        }
        let mut data = vec![0.0; n_out * c];
        for (r, &i) in idx.iter().enumerate() {
            if i >= n_out {
                return Err(Error::shape(format!("scatter index {i} >= {n_out}")));
            }
            let dst = &mut data[i * c..(i + 1) * c];
            dst.iter_mut().zip(ta.row_slice(r)).for_each(|(x, y)| *x += y);
        }
        let t = Tensor::from_parts(vec![n_out, c], data);
        let needs = self.needs(a);
        Ok(self.push(t, Op::ScatterAdd(a, idx), needs))
    }

    /// Column sums as a `1 × cols` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = column_reduce(self.value(a), 1.0);
        let needs = self.needs(a);
        self.push(t, Op::SumRows(a), needs)
    }

    /// Column means as a `1 × cols` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.value(a).rows().max(1) as f64;
        let t = column_reduce(self.value(a), 1.0 / n);
        let needs = self.needs(a);
        self.push(t, Op::MeanRows(a), needs)
    }

    /// Column maxima as a `1 × cols` row; ties resolve to the lowest row.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let c = ta.cols();
        let mut best = ta.row_slice(0).to_vec();
        let mut arg = vec![0usize; c];
        for r in 1..ta.rows() {
            for (j, &x) in ta.row_slice(r).iter().enumerate() {
                if x > best[j] {
                    best[j] = x;
                    arg[j] = r;
                }
            }
        }
        let needs = self.needs(a);
        self.push(Tensor::from_parts(vec![1, c], best), Op::MaxRows(a, arg), needs)
    }

    /// Row sums as a `rows × 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data: Vec<f64> = (0..ta.rows()).map(|r| ta.row_slice(r).iter().sum()).collect();
        let t = Tensor::from_parts(vec![ta.rows(), 1], data);
        let needs = self.needs(a);
        self.push(t, Op::SumCols(a), needs)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), needs)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let s = ta.data().iter().sum::<f64>() / ta.len().max(1) as f64;
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::MeanAll(a), needs)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Reshape(a), needs))
    }

    /// Appends an externally computed op with its own backward rule.
    pub fn custom(&mut self, inputs: Vec<Var>, value: Tensor, op: Box<dyn CustomOp>) -> Var {
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(value, Op::Custom(inputs, op), needs)
    }

    /// Broadcast a `1 × c` row to `n × c`.
    pub fn repeat_rows(&mut self, row: Var, n: usize) -> Result<Var> {
        self.gather_rows(row, vec![0; n])
    }

    /// Mean squared error against a constant target of the same shape.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let t = self.constant(target.clone());
        let d = self.sub(pred, t)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean_all(sq))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let out = self.value(loss);
        if out.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar, got shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params: Vec<(ParamId, Var)> = self
            .param_vars
            .iter()
            .map(|(&id, &v)| (ParamId(id), v))
            .collect();
        params.sort_by_key(|(id, _)| id.0);
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let need = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if need(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g, false, tb.data(), true, &mut ga, 0.0);
                    add_into(&mut grads[a.0], ga);
                }
                if need(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, g, false, &mut gb, 0.0);
                    add_into(&mut grads[b.0], gb);
                }
            }
            Op::Add(a, b) => {
                if need(*a) {
                    add_into(&mut grads[a.0], g.to_vec());
                }
                if need(*b) {
                    add_into(&mut grads[b.0], g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if need(*a) {
                    add_into(&mut grads[a.0], g.to_vec());
                }
                if need(*b) {
                    add_into(&mut grads[b.0], g.iter().map(|x| -x).collect());
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if need(*a) {
                    let ga = g.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    add_into(&mut grads[a.0], ga);
                }
                if need(*b) {
                    let gb = g.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    add_into(&mut grads[b.0], gb);
                }
            }
            Op::Div(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if need(*a) {
                    let ga = g.iter().zip(tb.data()).map(|(x, y)| x / y).collect();
                    add_into(&mut grads[a.0], ga);
                }
                if need(*b) {
                    let gb = g
                        .iter()
                        .zip(ta.data().iter().zip(tb.data()))
                        .map(|(x, (p, q))| -x * p / (q * q))
                        .collect();
                    add_into(&mut grads[b.0], gb);
                }
            }
            Op::AddRow(a, row) => {
                let c = val(*a).cols();
                if need(*a) {
                    add_into(&mut grads[a.0], g.to_vec());
                }
                if need(*row) {
                    let mut gr = vec![0.0; c];
                    for r in g.chunks(c) {
                        gr.iter_mut().zip(r).for_each(|(x, y)| *x += y);
                    }
                    add_into(&mut grads[row.0], gr);
                }
            }
            Op::MulRow(a, row) => {
                let (ta, tr) = (val(*a), val(*row));
                let c = ta.cols();
                if need(*a) {
                    let mut ga = g.to_vec();
                    for r in ga.chunks_mut(c) {
                        r.iter_mut().zip(tr.data()).for_each(|(x, y)| *x *= y);
                    }
                    add_into(&mut grads[a.0], ga);
                }
                if need(*row) {
                    let mut gr = vec![0.0; c];
                    for (gr_row, ar) in g.chunks(c).zip(ta.data().chunks(c)) {
                        for j in 0..c {
                            gr[j] += gr_row[j] * ar[j];
                        }
                    }
                    add_into(&mut grads[row.0], gr);
                }
            }
            Op::MulCol(a, col) => {
                let (ta, tc) = (val(*a), val(*col));
                let c = ta.cols();
                if need(*a) {
                    let mut ga = g.to_vec();
                    for (r, s) in ga.chunks_mut(c).zip(tc.data()) {
                        r.iter_mut().for_each(|x| *x *= s);
                    }
                    add_into(&mut grads[a.0], ga);
                }
                if need(*col) {
                    let gc = g
                        .chunks(c)
                        .zip(ta.data().chunks(c))
                        .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                        .collect();
                    add_into(&mut grads[col.0], gc);
                }
            }
            Op::Scale(a, s) => {
                add_into(&mut grads[a.0], g.iter().map(|x| x * s).collect());
            }
            Op::Offset(a) | Op::Reshape(a) => {
                add_into(&mut grads[a.0], g.to_vec());
            }
            Op::Act(a, f) => {
                let ta = val(*a);
                let ga = g
                    .iter()
                    .zip(ta.data().iter().zip(node.value.data()))
                    .map(|(gi, (&x, &y))| gi * f.derivative(x, y))
                    .collect();
                add_into(&mut grads[a.0], ga);
            }
            Op::SoftmaxRows(a) => {
                let c = node.value.cols();
                let mut ga = vec![0.0; g.len()];
                for ((out, y), gr) in ga.chunks_mut(c).zip(node.value.data().chunks(c)).zip(g.chunks(c)) {
                    let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        out[j] = y[j] * (gr[j] - dot);
                    }
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::Transpose(a) => {
                let gt = Tensor::from_parts(node.value.shape().to_vec(), g.to_vec());
                add_into(&mut grads[a.0], transpose_value(&gt).into_data());
            }
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut start = 0;
                for &p in parts {
                    let c = val(p).cols();
                    if need(p) {
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + start..r * total + start + c]);
                        }
                        add_into(&mut grads[p.0], gp);
                    }
                    start += c;
                }
            }
            Op::SliceCols(a, start) => {
                let ta = val(*a);
                let (rows, c) = (ta.rows(), ta.cols());
                let len = node.value.cols();
                let mut ga = vec![0.0; rows * c];
                for r in 0..rows {
                    ga[r * c + start..r * c + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::Gather(a, idx) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut ga = vec![0.0; ta.len()];
                for (r, &i) in idx.iter().enumerate() {
                    let dst = &mut ga[i * c..(i + 1) * c];
                    dst.iter_mut().zip(&g[r * c..(r + 1) * c]).for_each(|(x, y)| *x += y);
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::ScatterAdd(a, idx) => {
                let c = node.value.cols();
                let mut ga = Vec::with_capacity(idx.len() * c);
                for &i in idx {
                    ga.extend_from_slice(&g[i * c..(i + 1) * c]);
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::SumRows(a) | Op::MeanRows(a) => {
                let ta = val(*a);
                let s = if matches!(node.op, Op::MeanRows(_)) {
                    1.0 / ta.rows().max(1) as f64
                } else {
                    1.0
                };
                let mut ga = Vec::with_capacity(ta.len());
                for _ in 0..ta.rows() {
                    ga.extend(g.iter().map(|x| x * s));
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::MaxRows(a, arg) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut ga = vec![0.0; ta.len()];
                for (j, &r) in arg.iter().enumerate() {
                    ga[r * c + j] += g[j];
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::SumCols(a) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut ga = Vec::with_capacity(ta.len());
                for &x in g {
                    ga.extend(std::iter::repeat_n(x, c));
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::SumAll(a) | Op::MeanAll(a) => {
                let n = val(*a).len();
                let s = if matches!(node.op, Op::MeanAll(_)) {
                    g[0] / n.max(1) as f64
                } else {
                    g[0]
                };
                add_into(&mut grads[a.0], vec![s; n]);
            }
            Op::Custom(inputs, op) => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let needs: Vec<bool> = inputs.iter().map(|&v| need(v)).collect();
                let gs = op.backward(&ins, &needs, &node.value, g);
                for (v, gi) in inputs.iter().zip(gs) {
                    if let Some(gi) = gi {
                        add_into(&mut grads[v.0], gi);
                    }
                }
            }
        }
    }
}

fn column_reduce(t: &Tensor, scale: f64) -> Tensor {
    let c = t.cols();
    let mut out = vec![0.0; c];
    for r in 0..t.rows() {
        out.iter_mut().zip(t.row_slice(r)).for_each(|(x, y)| *x += y);
    }
    out.iter_mut().for_each(|x| *x *= scale);
    Tensor::from_parts(vec![1, c], out)
}

pub(crate) fn transpose_value(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor::from_parts(vec![c, r], out)
}

pub(crate) fn softmax_rows_value(t: &Tensor) -> Tensor {
    let c = t.cols();
    let mut out = t.data().to_vec();
    for row in out.chunks_mut(c) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for x in row.iter_mut() {
            *x = (*x - m).exp();
            s += *x;
        }
        row.iter_mut().for_each(|x| *x /= s);
    }
    Tensor::from_parts(vec![t.rows(), c], out)
}
