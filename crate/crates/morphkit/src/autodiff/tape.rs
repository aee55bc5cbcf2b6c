//! Reverse-mode differentiation over a linear tape of primitive ops.
//!
//! A `Tape` records one forward computation; `backward` replays it in
//! reverse, accumulating gradients into every trainable leaf. Tapes are
//! single-threaded and live for one step; tensors themselves are immutable
//! values, so independent tapes can run concurrently.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    Add(Var, Var),
    /// `[m,n] + [n]`, the vector broadcast over the trailing axis.
    AddRowVec(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// Elementwise multiply by a scalar variable (e.g. a learned gain).
    ScaleByVar(Var, Var),
    MatMul(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    ClampMin(Var, f64),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize, len: usize },
    SumAll(Var),
    SumAxis(Var, usize),
    MeanAll(Var),
    MeanAxis(Var, usize),
    MaxAxis { src: Var, axis: usize, argmax: Vec<usize> },
    Softmax { src: Var, axis: usize },
    Rows { table: Var, ids: Vec<usize> },
    Transpose(Var),
    Reshape(Var),
    Conv1d { x: Var, w: Var, b: Var, width: usize },
    Pool2Max { src: Var, argmax: Vec<usize> },
    Pool2Avg(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    grad_needed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, if any path reached it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let grad_needed = match &op {
            Op::Leaf { trainable } => *trainable,
            _ => self.parents_of(&op).iter().any(|p| self.nodes[p.0].grad_needed),
        };
        self.nodes.push(Node {
            value,
            op,
            grad_needed,
        });
        Var(self.nodes.len() - 1)
    }

    fn parents_of(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf { .. } => vec![],
            Op::Add(a, b)
            | Op::AddRowVec(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ScaleByVar(a, b)
            | Op::MatMul(a, b)
            | Op::MatVec(a, b)
            | Op::VecMat(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::ClampMin(a, _)
            | Op::SumAll(a)
            | Op::SumAxis(a, _)
            | Op::MeanAll(a)
            | Op::MeanAxis(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Pool2Avg(a) => vec![*a],
            Op::MaxAxis { src, .. }
            | Op::Softmax { src, .. }
            | Op::Slice { src, .. }
            | Op::Pool2Max { src, .. } => vec![*src],
            Op::Rows { table, .. } => vec![*table],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Conv1d { x, w, b, .. } => vec![*x, *w, *b],
        }
    }

    /// Register a trainable leaf. Gradients accumulate into it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { trainable: true })
    }

    /// Register a constant leaf. No gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { trainable: false })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(x, y)| x + y)
                .collect();
            let value = Tensor::new(ta.shape().to_vec(), data)?;
            return Ok(self.push(value, Op::Add(a, b)));
        }
        // [m,n] + [n]: broadcast over the trailing axis.
        if ta.rank() == 2 && tb.rank() == 1 && ta.cols() == tb.len() {
            let (m, n) = (ta.rows(), ta.cols());
            let mut data = ta.data().to_vec();
            for i in 0..m {
                for j in 0..n {
                    data[i * n + j] += tb.data()[j];
                }
            }
            let value = Tensor::new(vec![m, n], data)?;
            return Ok(self.push(value, Op::AddRowVec(a, b)));
        }
        Err(Error::Shape {
            op: "add",
            lhs: ta.shape().to_vec(),
            rhs: tb.shape().to_vec(),
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape {
                op: "sub",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x - y)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape {
                op: "mul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v * c);
        self.push(value, Op::Scale(a, c))
    }

    /// Multiply every element of `x` by the scalar variable `s`.
    pub fn scale_by_var(&mut self, x: Var, s: Var) -> Result<Var> {
        let ts = self.value(s);
        if !ts.is_scalar() {
            return Err(Error::Shape {
                op: "scale_by_var",
                lhs: self.value(x).shape().to_vec(),
                rhs: ts.shape().to_vec(),
            });
        }
        let sv = ts.item();
        let value = self.value(x).map(|v| v * sv);
        Ok(self.push(value, Op::ScaleByVar(x, s)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        match (ta.rank(), tb.rank()) {
            (2, 2) if ta.cols() == tb.rows() => {
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = ta.data()[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let brow = &tb.data()[p * n..(p + 1) * n];
                        let orow = &mut out[i * n..(i + 1) * n];
                        for j in 0..n {
                            orow[j] += av * brow[j];
                        }
                    }
                }
                let value = Tensor::new(vec![m, n], out)?;
                Ok(self.push(value, Op::MatMul(a, b)))
            }
            (2, 1) if ta.cols() == tb.len() => {
                let (m, k) = (ta.rows(), ta.cols());
                let mut out = vec![0.0; m];
                for i in 0..m {
                    let row = &ta.data()[i * k..(i + 1) * k];
                    out[i] = row.iter().zip(tb.data()).map(|(x, y)| x * y).sum();
                }
                let value = Tensor::vector(out);
                Ok(self.push(value, Op::MatVec(a, b)))
            }
            (1, 2) if ta.len() == tb.rows() => {
                let (k, n) = (tb.rows(), tb.cols());
                let mut out = vec![0.0; n];
                for p in 0..k {
                    let xv = ta.data()[p];
                    if xv == 0.0 {
                        continue;
                    }
                    let brow = &tb.data()[p * n..(p + 1) * n];
                    for j in 0..n {
                        out[j] += xv * brow[j];
                    }
                }
                let value = Tensor::vector(out);
                Ok(self.push(value, Op::VecMat(a, b)))
            }
            _ => Err(Error::Shape {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            }),
        }
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.push(value, Op::Log(a))
    }

    /// Elementwise `max(x, floor)`; gradient passes through where `x >= floor`.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).map(|v| v.max(floor));
        self.push(value, Op::ClampMin(a, floor))
    }

    /// Concatenate along `axis`. Rank-1 inputs concatenate end to end
    /// (axis 0); rank-2 inputs stack rows (axis 0) or columns (axis 1).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat of zero tensors"));
        }
        let rank = self.value(parts[0]).rank();
        let value = match (rank, axis) {
            (1, 0) => {
                let mut data = Vec::new();
                for &p in parts {
                    let t = self.value(p);
                    if t.rank() != 1 {
                        return Err(Error::Shape {
                            op: "concat",
                            lhs: self.value(parts[0]).shape().to_vec(),
                            rhs: t.shape().to_vec(),
                        });
                    }
                    data.extend_from_slice(t.data());
                }
                Tensor::vector(data)
            }
            (2, 0) => {
                let cols = self.value(parts[0]).cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.rank() != 2 || t.cols() != cols {
                        return Err(Error::Shape {
                            op: "concat",
                            lhs: self.value(parts[0]).shape().to_vec(),
                            rhs: t.shape().to_vec(),
                        });
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::new(vec![rows, cols], data)?
            }
            (2, 1) => {
                let rows = self.value(parts[0]).rows();
                let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
                for &p in parts {
                    let t = self.value(p);
                    if t.rank() != 2 || t.rows() != rows {
                        return Err(Error::Shape {
                            op: "concat",
                            lhs: self.value(parts[0]).shape().to_vec(),
                            rhs: t.shape().to_vec(),
                        });
                    }
                }
                let total: usize = widths.iter().sum();
                let mut data = vec![0.0; rows * total];
                let mut offset = 0;
                for (&p, &w) in parts.iter().zip(&widths) {
                    let t = self.value(p);
                    for r in 0..rows {
                        data[r * total + offset..r * total + offset + w]
                            .copy_from_slice(t.row(r));
                    }
                    offset += w;
                }
                Tensor::new(vec![rows, total], data)?
            }
            _ => {
                return Err(Error::invalid(format!(
                    "concat: unsupported rank {rank} / axis {axis}"
                )))
            }
        };
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Contiguous slice along `axis`.
    pub fn slice(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(src);
        let value = match (t.rank(), axis) {
            (1, 0) => {
                if start + len > t.len() {
                    return Err(Error::invalid(format!(
                        "slice [{start}, {}) out of bounds for length {}",
                        start + len,
                        t.len()
                    )));
                }
                Tensor::vector(t.data()[start..start + len].to_vec())
            }
            (2, 0) => {
                if start + len > t.rows() {
                    return Err(Error::invalid(format!(
                        "slice rows [{start}, {}) out of bounds for {} rows",
                        start + len,
                        t.rows()
                    )));
                }
                let cols = t.cols();
                Tensor::new(
                    vec![len, cols],
                    t.data()[start * cols..(start + len) * cols].to_vec(),
                )?
            }
            (2, 1) => {
                if start + len > t.cols() {
                    return Err(Error::invalid(format!(
                        "slice cols [{start}, {}) out of bounds for {} cols",
                        start + len,
                        t.cols()
                    )));
                }
                let mut data = Vec::with_capacity(t.rows() * len);
                for r in 0..t.rows() {
                    data.extend_from_slice(&t.row(r)[start..start + len]);
                }
                Tensor::new(vec![t.rows(), len], data)?
            }
            _ => {
                return Err(Error::invalid(format!(
                    "slice: unsupported rank {} / axis {axis}",
                    t.rank()
                )))
            }
        };
        Ok(self.push(
            value,
            Op::Slice {
                src,
                axis,
                start,
                len,
            },
        ))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(a))
    }

    /// Sum a rank-2 tensor over `axis` (0 collapses rows, 1 collapses cols).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let value = self.reduce_axis(a, axis, |acc, v| acc + v, |acc, _| acc)?;
        Ok(self.push(value, Op::SumAxis(a, axis)))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let value = self.reduce_axis(a, axis, |acc, v| acc + v, |acc, n| acc / n as f64)?;
        Ok(self.push(value, Op::MeanAxis(a, axis)))
    }

    fn reduce_axis(
        &self,
        a: Var,
        axis: usize,
        fold: impl Fn(f64, f64) -> f64,
        finish: impl Fn(f64, usize) -> f64,
    ) -> Result<Tensor> {
        let t = self.value(a);
        if t.rank() != 2 || axis > 1 {
            return Err(Error::invalid(format!(
                "axis reduction needs rank-2 tensor and axis 0/1, got shape {:?} axis {axis}",
                t.shape()
            )));
        }
        let (m, n) = (t.rows(), t.cols());
        Ok(if axis == 0 {
            let mut out = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    out[j] = fold(out[j], t.at(i, j));
                }
            }
            Tensor::vector(out.into_iter().map(|v| finish(v, m)).collect())
        } else {
            let mut out = vec![0.0; m];
            for i in 0..m {
                for j in 0..n {
                    out[i] = fold(out[i], t.at(i, j));
                }
            }
            Tensor::vector(out.into_iter().map(|v| finish(v, n)).collect())
        })
    }

    /// Maximum over `axis` of a rank-2 tensor. Gradient routes to the first
    /// maximal element of each lane.
    pub fn max_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || axis > 1 {
            return Err(Error::invalid(format!(
                "max_axis needs rank-2 tensor and axis 0/1, got shape {:?} axis {axis}",
                t.shape()
            )));
        }
        let (m, n) = (t.rows(), t.cols());
        let (mut out, mut argmax);
        if axis == 0 {
            out = vec![f64::NEG_INFINITY; n];
            argmax = vec![0usize; n];
            for j in 0..n {
                for i in 0..m {
                    if t.at(i, j) > out[j] {
                        out[j] = t.at(i, j);
                        argmax[j] = i;
                    }
                }
            }
        } else {
            out = vec![f64::NEG_INFINITY; m];
            argmax = vec![0usize; m];
            for i in 0..m {
                for j in 0..n {
                    if t.at(i, j) > out[i] {
                        out[i] = t.at(i, j);
                        argmax[i] = j;
                    }
                }
            }
        }
        let value = Tensor::vector(out);
        Ok(self.push(value, Op::MaxAxis { src: a, axis, argmax }))
    }

    /// Softmax along `axis`. Rank-1 tensors use axis 0; rank-2 tensors
    /// normalize each lane of the given axis.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        let value = match (t.rank(), axis) {
            (1, 0) => Tensor::vector(softmax_slice(t.data())),
            (2, 1) => {
                let (m, n) = (t.rows(), t.cols());
                let mut data = Vec::with_capacity(m * n);
                for i in 0..m {
                    data.extend(softmax_slice(t.row(i)));
                }
                Tensor::new(vec![m, n], data)?
            }
            (2, 0) => {
                let tt = t.transposed()?;
                let (m, n) = (t.rows(), t.cols());
                let mut data = vec![0.0; m * n];
                for j in 0..n {
                    let col = softmax_slice(tt.row(j));
                    for i in 0..m {
                        data[i * n + j] = col[i];
                    }
                }
                Tensor::new(vec![m, n], data)?
            }
            _ => {
                return Err(Error::invalid(format!(
                    "softmax: unsupported rank {} / axis {axis}",
                    t.rank()
                )))
            }
        };
        Ok(self.push(value, Op::Softmax { src: a, axis }))
    }

    /// Gather rows of a rank-2 table: output row `i` is `table[ids[i]]`.
    pub fn rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(Error::invalid(format!(
                "rows: table must be rank 2, got shape {:?}",
                t.shape()
            )));
        }
        let (v, d) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::invalid(format!(
                    "rows: id {id} out of range for table with {v} rows"
                )));
            }
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor::new(vec![ids.len(), d], data)?;
        Ok(self.push(
            value,
            Op::Rows {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transposed()?;
        Ok(self.push(value, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Valid 1-D convolution. `x` is `[d, len]` (embedding rows by position
    /// columns), `w` holds one flattened `d x width` filter per row, `b` one
    /// bias per filter. Output is the pre-activation `[n_filters, len-width+1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, width: usize) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tx.rank() != 2 || tw.rank() != 2 || tb.rank() != 1 {
            return Err(Error::Shape {
                op: "conv1d",
                lhs: tx.shape().to_vec(),
                rhs: tw.shape().to_vec(),
            });
        }
        let (d, len) = (tx.rows(), tx.cols());
        let n_filters = tw.rows();
        if tw.cols() != d * width || tb.len() != n_filters {
            return Err(Error::Shape {
                op: "conv1d",
                lhs: tw.shape().to_vec(),
                rhs: vec![n_filters, d * width],
            });
        }
        if len < width {
            return Err(Error::invalid(format!(
                "conv1d: input length {len} shorter than filter width {width}"
            )));
        }
        let out_w = len - width + 1;
        let mut out = vec![0.0; n_filters * out_w];
        for l in 0..n_filters {
            let filt = tw.row(l);
            let bias = tb.data()[l];
            for i in 0..out_w {
                let mut acc = bias;
                for j in 0..d {
                    let xrow = &tx.data()[j * len + i..j * len + i + width];
                    let frow = &filt[j * width..(j + 1) * width];
                    for t in 0..width {
                        acc += xrow[t] * frow[t];
                    }
                }
                out[l * out_w + i] = acc;
            }
        }
        let value = Tensor::new(vec![n_filters, out_w], out)?;
        Ok(self.push(value, Op::Conv1d { x, w, b, width }))
    }

    /// Max pooling over non-overlapping windows of 2 along the trailing
    /// axis; a trailing odd element is dropped. Ties route the gradient to
    /// the first maximal index.
    pub fn pool2_max(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = pool2_check(t)?;
        let half = n / 2;
        let mut out = vec![0.0; m * half];
        let mut argmax = vec![0usize; m * half];
        for i in 0..m {
            for j in 0..half {
                let (x0, x1) = (t.at(i, 2 * j), t.at(i, 2 * j + 1));
                if x1 > x0 {
                    out[i * half + j] = x1;
                    argmax[i * half + j] = 2 * j + 1;
                } else {
                    out[i * half + j] = x0;
                    argmax[i * half + j] = 2 * j;
                }
            }
        }
        let value = Tensor::new(vec![m, half], out)?;
        Ok(self.push(value, Op::Pool2Max { src: a, argmax }))
    }

    /// Average pooling, same windowing as [`Tape::pool2_max`].
    pub fn pool2_avg(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = pool2_check(t)?;
        let half = n / 2;
        let mut out = vec![0.0; m * half];
        for i in 0..m {
            for j in 0..half {
                out[i * half + j] = 0.5 * (t.at(i, 2 * j) + t.at(i, 2 * j + 1));
            }
        }
        let value = Tensor::new(vec![m, half], out)?;
        Ok(self.push(value, Op::Pool2Avg(a)))
    }

    /// Reverse pass from a scalar loss. Returns gradients for every
    /// trainable leaf reachable from `loss`; unreachable trainable leaves
    /// get zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].grad_needed {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads)?;
            if matches!(self.nodes[idx].op, Op::Leaf { trainable: true }) {
                grads[idx] = Some(g);
            }
        }
        // Unreached trainable leaves have zero gradient by independence.
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf { trainable: true }) && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].grad_needed {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (gi, di) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gi += di;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &self.nodes[idx].op {
            Op::Leaf { .. } => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRowVec(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let n = self.value(*b).len();
                let mut db = vec![0.0; n];
                for (i, gv) in g.data().iter().enumerate() {
                    db[i % n] += gv;
                }
                self.accumulate(grads, *b, Tensor::vector(db));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let da = elementwise(g, self.value(*b), |x, y| x * y);
                let db = elementwise(g, self.value(*a), |x, y| x * y);
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, g.map(|v| v * c));
            }
            Op::ScaleByVar(x, s) => {
                let sv = self.value(*s).item();
                self.accumulate(grads, *x, g.map(|v| v * sv));
                let ds: f64 = g
                    .data()
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(gv, xv)| gv * xv)
                    .sum();
                let shape = self.value(*s).shape().to_vec();
                self.accumulate(grads, *s, Tensor::new(shape, vec![ds])?);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let brow = &tb.data()[p * n..(p + 1) * n];
                        let grow = &g.data()[i * n..(i + 1) * n];
                        da[i * k + p] = brow.iter().zip(grow).map(|(x, y)| x * y).sum();
                    }
                }
                let mut db = vec![0.0; k * n];
                for p in 0..k {
                    for i in 0..m {
                        let av = ta.data()[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let grow = &g.data()[i * n..(i + 1) * n];
                        let drow = &mut db[p * n..(p + 1) * n];
                        for j in 0..n {
                            drow[j] += av * grow[j];
                        }
                    }
                }
                self.accumulate(grads, *a, Tensor::new(vec![m, k], da)?);
                self.accumulate(grads, *b, Tensor::new(vec![k, n], db)?);
            }
            Op::MatVec(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    let gv = g.data()[i];
                    for p in 0..k {
                        da[i * k + p] = gv * tb.data()[p];
                    }
                }
                let mut db = vec![0.0; k];
                for i in 0..m {
                    let gv = g.data()[i];
                    let row = &ta.data()[i * k..(i + 1) * k];
                    for p in 0..k {
                        db[p] += gv * row[p];
                    }
                }
                self.accumulate(grads, *a, Tensor::new(vec![m, k], da)?);
                self.accumulate(grads, *b, Tensor::vector(db));
            }
            Op::VecMat(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (k, n) = (tb.rows(), tb.cols());
                let mut da = vec![0.0; k];
                for p in 0..k {
                    let brow = &tb.data()[p * n..(p + 1) * n];
                    da[p] = brow.iter().zip(g.data()).map(|(x, y)| x * y).sum();
                }
                let mut db = vec![0.0; k * n];
                for p in 0..k {
                    let xv = ta.data()[p];
                    if xv == 0.0 {
                        continue;
                    }
                    let drow = &mut db[p * n..(p + 1) * n];
                    for j in 0..n {
                        drow[j] = xv * g.data()[j];
                    }
                }
                self.accumulate(grads, *a, Tensor::vector(da));
                self.accumulate(grads, *b, Tensor::new(vec![k, n], db)?);
            }
            Op::Sigmoid(a) => {
                let out = &self.nodes[idx].value;
                let da = binary_map(g, out, |gv, s| gv * s * (1.0 - s));
                self.accumulate(grads, *a, da);
            }
            Op::Tanh(a) => {
                let out = &self.nodes[idx].value;
                let da = binary_map(g, out, |gv, t| gv * (1.0 - t * t));
                self.accumulate(grads, *a, da);
            }
            Op::Relu(a) => {
                let da = binary_map(g, self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                self.accumulate(grads, *a, da);
            }
            Op::Exp(a) => {
                let out = &self.nodes[idx].value;
                let da = binary_map(g, out, |gv, e| gv * e);
                self.accumulate(grads, *a, da);
            }
            Op::Log(a) => {
                let da = binary_map(g, self.value(*a), |gv, x| gv / x);
                self.accumulate(grads, *a, da);
            }
            Op::ClampMin(a, floor) => {
                let da = binary_map(g, self.value(*a), |gv, x| if x >= *floor { gv } else { 0.0 });
                self.accumulate(grads, *a, da);
            }
            Op::Concat { parts, axis } => match (self.value(parts[0]).rank(), axis) {
                (1, 0) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        let dp = Tensor::vector(g.data()[offset..offset + len].to_vec());
                        self.accumulate(grads, p, dp);
                        offset += len;
                    }
                }
                (2, 0) => {
                    let cols = self.value(parts[0]).cols();
                    let mut row0 = 0;
                    for &p in parts {
                        let r = self.value(p).rows();
                        let dp = Tensor::new(
                            vec![r, cols],
                            g.data()[row0 * cols..(row0 + r) * cols].to_vec(),
                        )?;
                        self.accumulate(grads, p, dp);
                        row0 += r;
                    }
                }
                (2, 1) => {
                    let rows = self.value(parts[0]).rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut data = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        debug_assert!(offset + w <= total);
                        self.accumulate(grads, p, Tensor::new(vec![rows, w], data)?);
                        offset += w;
                    }
                }
                _ => unreachable!("concat forward validated rank/axis"),
            },
            Op::Slice {
                src,
                axis,
                start,
                len,
            } => {
                let t = self.value(*src);
                let mut ds = Tensor::zeros(t.shape());
                match (t.rank(), axis) {
                    (1, 0) => {
                        ds.data_mut()[*start..start + len].copy_from_slice(g.data());
                    }
                    (2, 0) => {
                        let cols = t.cols();
                        ds.data_mut()[start * cols..(start + len) * cols]
                            .copy_from_slice(g.data());
                    }
                    (2, 1) => {
                        let cols = t.cols();
                        for r in 0..t.rows() {
                            ds.data_mut()[r * cols + start..r * cols + start + len]
                                .copy_from_slice(g.row(r));
                        }
                    }
                    _ => unreachable!("slice forward validated rank/axis"),
                }
                self.accumulate(grads, *src, ds);
            }
            Op::SumAll(a) => {
                let gv = g.item();
                self.accumulate(grads, *a, Tensor::filled(self.value(*a).shape(), gv));
            }
            Op::MeanAll(a) => {
                let n = self.value(*a).len();
                let gv = g.item() / n as f64;
                self.accumulate(grads, *a, Tensor::filled(self.value(*a).shape(), gv));
            }
            Op::SumAxis(a, axis) => {
                self.accumulate(grads, *a, spread_axis(self.value(*a), g, *axis, 1.0));
            }
            Op::MeanAxis(a, axis) => {
                let t = self.value(*a);
                let lanes = if *axis == 0 { t.rows() } else { t.cols() };
                self.accumulate(grads, *a, spread_axis(t, g, *axis, 1.0 / lanes as f64));
            }
            Op::MaxAxis { src, axis, argmax } => {
                let t = self.value(*src);
                let mut ds = Tensor::zeros(t.shape());
                let n = t.cols();
                for (lane, &am) in argmax.iter().enumerate() {
                    let (i, j) = if *axis == 0 { (am, lane) } else { (lane, am) };
                    ds.data_mut()[i * n + j] = g.data()[lane];
                }
                self.accumulate(grads, *src, ds);
            }
            Op::Softmax { src, axis } => {
                let s = &self.nodes[idx].value;
                let mut ds = Tensor::zeros(s.shape());
                match (s.rank(), axis) {
                    (1, 0) => {
                        softmax_backward(s.data(), g.data(), ds.data_mut());
                    }
                    (2, 1) => {
                        let (m, n) = (s.rows(), s.cols());
                        for i in 0..m {
                            softmax_backward(
                                &s.data()[i * n..(i + 1) * n],
                                &g.data()[i * n..(i + 1) * n],
                                &mut ds.data_mut()[i * n..(i + 1) * n],
                            );
                        }
                    }
                    (2, 0) => {
                        let (m, n) = (s.rows(), s.cols());
                        for j in 0..n {
                            let sc: Vec<f64> = (0..m).map(|i| s.at(i, j)).collect();
                            let gc: Vec<f64> = (0..m).map(|i| g.at(i, j)).collect();
                            let mut dc = vec![0.0; m];
                            softmax_backward(&sc, &gc, &mut dc);
                            for i in 0..m {
                                ds.data_mut()[i * n + j] = dc[i];
                            }
                        }
                    }
                    _ => unreachable!("softmax forward validated rank/axis"),
                }
                self.accumulate(grads, *src, ds);
            }
            Op::Rows { table, ids } => {
                let t = self.value(*table);
                let d = t.cols();
                let mut dt = Tensor::zeros(t.shape());
                for (i, &id) in ids.iter().enumerate() {
                    let grow = &g.data()[i * d..(i + 1) * d];
                    let drow = &mut dt.data_mut()[id * d..(id + 1) * d];
                    for j in 0..d {
                        drow[j] += grow[j];
                    }
                }
                self.accumulate(grads, *table, dt);
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, g.transposed()?);
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, g.reshaped(shape)?);
            }
            Op::Conv1d { x, w, b, width } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (d, len) = (tx.rows(), tx.cols());
                let n_filters = tw.rows();
                let out_w = len - width + 1;
                let mut dx = vec![0.0; d * len];
                let mut dw = vec![0.0; n_filters * d * width];
                let mut db = vec![0.0; n_filters];
                for l in 0..n_filters {
                    let filt = tw.row(l);
                    for i in 0..out_w {
                        let gv = g.data()[l * out_w + i];
                        if gv == 0.0 {
                            continue;
                        }
                        db[l] += gv;
                        for j in 0..d {
                            for t in 0..*width {
                                dw[l * d * width + j * width + t] += gv * tx.data()[j * len + i + t];
                                dx[j * len + i + t] += gv * filt[j * width + t];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![d, len], dx)?);
                self.accumulate(grads, *w, Tensor::new(vec![n_filters, d * width], dw)?);
                self.accumulate(grads, *b, Tensor::vector(db));
            }
            Op::Pool2Max { src, argmax } => {
                let t = self.value(*src);
                let mut ds = Tensor::zeros(t.shape());
                let (n, half) = (t.cols(), t.cols() / 2);
                for i in 0..t.rows() {
                    for j in 0..half {
                        ds.data_mut()[i * n + argmax[i * half + j]] += g.data()[i * half + j];
                    }
                }
                self.accumulate(grads, *src, ds);
            }
            Op::Pool2Avg(a) => {
                let t = self.value(*a);
                let mut ds = Tensor::zeros(t.shape());
                let (n, half) = (t.cols(), t.cols() / 2);
                for i in 0..t.rows() {
                    for j in 0..half {
                        let gv = 0.5 * g.data()[i * half + j];
                        ds.data_mut()[i * n + 2 * j] = gv;
                        ds.data_mut()[i * n + 2 * j + 1] = gv;
                    }
                }
                self.accumulate(grads, *a, ds);
            }
        }
        Ok(())
    }
}

fn pool2_check(t: &Tensor) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::invalid(format!(
            "pool expects rank-2 input, got shape {:?}",
            t.shape()
        )));
    }
    if t.cols() < 2 {
        return Err(Error::invalid(format!(
            "pool needs at least 2 columns, got {}",
            t.cols()
        )));
    }
    Ok((t.rows(), t.cols()))
}

fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn softmax_backward(s: &[f64], g: &[f64], out: &mut [f64]) {
    let dot: f64 = s.iter().zip(g).map(|(si, gi)| si * gi).sum();
    for i in 0..s.len() {
        out[i] = s[i] * (g[i] - dot);
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape by construction")
}

fn binary_map(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    elementwise(g, other, f)
}

/// Broadcast a lane gradient back across the reduced axis, scaled.
fn spread_axis(src: &Tensor, g: &Tensor, axis: usize, scale: f64) -> Tensor {
    let (m, n) = (src.rows(), src.cols());
    let mut out = Tensor::zeros(src.shape());
    for i in 0..m {
        for j in 0..n {
            let lane = if axis == 0 { j } else { i };
            out.data_mut()[i * n + j] = g.data()[lane] * scale;
        }
    }
    out
}
