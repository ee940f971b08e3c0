use std::collections::HashMap;

use super::{shape_err, ParamStore, Real, Tensor, TensorError};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Constant,
    Param(String),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Conv1d {
        input: Var,
        weight: Var,
        stride: usize,
        pad_left: usize,
    },
    Softmax(Var),
    Log(Var),
    Exp(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Relu(Var),
    Abs(Var),
    LayerNorm { input: Var, inv_std: Vec<T> },
    Gather { table: Var, ids: Vec<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Sum(Var),
    Mean(Var),
    SumCols(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// How `b` is broadcast against `a` in elementwise binary ops.
#[derive(Clone, Copy)]
enum Bcast {
    Same,
    Scalar,
    Row,
}

fn bcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<Bcast, TensorError> {
    let an: usize = a.iter().product();
    let bn: usize = b.iter().product();
    if a == b {
        Ok(Bcast::Same)
    } else if bn == 1 {
        Ok(Bcast::Scalar)
    } else if a.len() == 2 && bn == a[1] && (b.len() == 1 || (b.len() == 2 && b[0] == 1)) {
        Ok(Bcast::Row)
    } else {
        Err(shape_err(op, format!("cannot broadcast {b:?} onto {a:?} ({an} vs {bn})")))
    }
}

#[inline]
fn bidx(mode: Bcast, i: usize, cols: usize) -> usize {
    match mode {
        Bcast::Same => i,
        Bcast::Scalar => 0,
        Bcast::Row => i % cols,
    }
}

fn dims2(op: &'static str, t: &Tensor<impl Real>) -> Result<(usize, usize), TensorError> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(shape_err(op, format!("expected rank 2, got {s:?}"))),
    }
}

/// `out[m,n] = a[m,k] · b[k,n]`
fn mm<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// `out[m,n] = a[m,k] · b[n,k]ᵀ`
fn mm_nt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut bt = vec![T::zero(); k * n];
    for j in 0..n {
        for p in 0..k {
            bt[p * n + j] = b[j * k + p];
        }
    }
    mm(a, &bt, m, k, n)
}

/// `out[m,n] = a[k,m]ᵀ · b[k,n]`
fn mm_tn<T: Real>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// Unfolds a `[t, c]` sequence into `[t_out, k*c]` patches with zero padding on the left.
fn im2col<T: Real>(x: &[T], t: usize, c: usize, k: usize, stride: usize, pad_left: usize, t_out: usize) -> Vec<T> {
    let mut col = vec![T::zero(); t_out * k * c];
    for o in 0..t_out {
        for kk in 0..k {
            let src = (o * stride + kk) as isize - pad_left as isize;
            if src < 0 || src as usize >= t {
                continue;
            }
            let src = src as usize;
            let dst = o * k * c + kk * c;
            col[dst..dst + c].copy_from_slice(&x[src * c..(src + 1) * c]);
        }
    }
    col
}

fn log_sigmoid<T: Real>(x: T) -> T {
    if x < T::zero() {
        x - x.exp().ln_1p()
    } else {
        -(-x).exp().ln_1p()
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn add_into<T: Real>(dst: &mut Option<Vec<T>>, src: Vec<T>) {
    match dst {
        Some(d) => {
            for (a, b) in d.iter_mut().zip(src) {
                *a = *a + b;
            }
        }
        None => *dst = Some(src),
    }
}

/// Define-by-run computation graph.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
    check_finite: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            check_finite: false,
        }
    }

    /// When set, every op rejects non-finite inputs with [`TensorError::NonFinite`].
    pub fn with_finite_check(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn guard(&self, op: &'static str, inputs: &[Var]) -> Result<(), TensorError> {
        if self.check_finite && inputs.iter().any(|v| !self.nodes[v.0].value.is_finite()) {
            return Err(TensorError::NonFinite { op });
        }
        Ok(())
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Binds a stored parameter into the graph. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var, TensorError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| TensorError::Contract(format!("unknown parameter '{name}'")))?
            .clone();
        let v = self.push(value, Op::Param(name.to_string()), true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.guard("matmul", &[a, b])?;
        let (m, k) = dims2("matmul", self.value(a))?;
        let (k2, n) = dims2("matmul", self.value(b))?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
        }
        let out = mm(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.guard("matmul_nt", &[a, b])?;
        let (m, k) = dims2("matmul_nt", self.value(a))?;
        let (n, k2) = dims2("matmul_nt", self.value(b))?;
        if k != k2 {
            return Err(shape_err("matmul_nt", format!("[{m}x{k}] x [{n}x{k2}]^T")));
        }
        let out = mm_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulNT(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        self.guard("transpose", &[a])?;
        let (m, n) = dims2("transpose", self.value(a))?;
        let x = self.value(a).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = x[i * n + j];
            }
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a), ng))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<(Tensor<T>, bool), TensorError> {
        self.guard(name, &[a, b])?;
        let (ta, tb) = (self.value(a), self.value(b));
        let mode = bcast(name, ta.shape(), tb.shape())?;
        let cols = ta.cols();
        let bd = tb.data();
        let out = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[bidx(mode, i, cols)]))
            .collect();
        Ok((Tensor::new(ta.shape().to_vec(), out)?, self.ng(a) || self.ng(b)))
    }

    /// Elementwise `a + b`; `b` may be a scalar or a row vector broadcast over rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (t, ng) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (t, ng) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (t, ng) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, TensorError> {
        self.guard("scale", &[a])?;
        let s = T::from_f64(s);
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| x * s).collect())?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Scale(a, s), ng))
    }

    /// 1-D convolution over a time-major `[t, c_in]` input with weight `[k, c_in, c_out]`.
    ///
    /// Output length is `(t + pad_left + pad_right - k) / stride + 1`.
    pub fn conv1d(&mut self, input: Var, weight: Var, stride: usize, pad_left: usize, pad_right: usize) -> Result<Var, TensorError> {
        self.guard("conv1d", &[input, weight])?;
        let (t, c) = dims2("conv1d", self.value(input))?;
        let (k, c_in, c_out) = match self.value(weight).shape() {
            [k, ci, co] => (*k, *ci, *co),
            s => return Err(shape_err("conv1d", format!("weight must be [k, c_in, c_out], got {s:?}"))),
        };
        if c != c_in {
            return Err(shape_err("conv1d", format!("input channels {c} != weight channels {c_in}")));
        }
        if stride == 0 {
            return Err(shape_err("conv1d", "stride must be positive"));
        }
        let padded = t + pad_left + pad_right;
        if padded < k {
            return Err(shape_err("conv1d", format!("input length {padded} shorter than kernel {k}")));
        }
        let t_out = (padded - k) / stride + 1;
        let col = im2col(self.value(input).data(), t, c, k, stride, pad_left, t_out);
        let out = mm(&col, self.value(weight).data(), t_out, k * c, c_out);
        let ng = self.ng(input) || self.ng(weight);
        Ok(self.push(
            Tensor::new(vec![t_out, c_out], out)?,
            Op::Conv1d {
                input,
                weight,
                stride,
                pad_left,
            },
            ng,
        ))
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        self.guard("softmax", &[a])?;
        let t = self.value(a);
        let cols = t.cols();
        if cols == 0 {
            return Err(shape_err("softmax", "empty last dimension"));
        }
        let mut out = Vec::with_capacity(t.numel());
        for row in t.data().chunks(cols) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).as_f64().exp()).collect();
            let z: f64 = exps.iter().sum();
            out.extend(exps.iter().map(|&e| T::from_f64(e / z)));
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Softmax(a), ng))
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(T) -> T) -> Result<(Tensor<T>, bool), TensorError> {
        self.guard(name, &[a])?;
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())?;
        Ok((out, self.ng(a)))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        let (t, ng) = self.unary("log", a, |x| x.ln())?;
        Ok(self.push(t, Op::Log(a), ng))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        let (t, ng) = self.unary("exp", a, |x| x.exp())?;
        Ok(self.push(t, Op::Exp(a), ng))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let (t, ng) = self.unary("sigmoid", a, sigmoid)?;
        Ok(self.push(t, Op::Sigmoid(a), ng))
    }

    /// Numerically stable `log σ(x)`.
    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let (t, ng) = self.unary("log_sigmoid", a, log_sigmoid)?;
        Ok(self.push(t, Op::LogSigmoid(a), ng))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let (t, ng) = self.unary("relu", a, |x| x.max(T::zero()))?;
        Ok(self.push(t, Op::Relu(a), ng))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, TensorError> {
        let (t, ng) = self.unary("abs", a, |x| x.abs())?;
        Ok(self.push(t, Op::Abs(a), ng))
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var, TensorError> {
        self.guard("layer_norm", &[a])?;
        let t = self.value(a);
        let cols = t.cols();
        let mut out = Vec::with_capacity(t.numel());
        let mut inv_std = Vec::with_capacity(t.rows());
        for row in t.data().chunks(cols) {
            let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(T::from_f64(is));
            out.extend(row.iter().map(|v| T::from_f64((v.as_f64() - mean) * is)));
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::LayerNorm { input: a, inv_std }, ng))
    }

    /// Row lookup: `out[i] = table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        self.guard("gather", &[table])?;
        let (rows, cols) = dims2("gather", self.value(table))?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(shape_err("gather", format!("index {bad} out of range for {rows} rows")));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            out.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let ng = self.ng(table);
        Ok(self.push(
            Tensor::new(vec![ids.len(), cols], out)?,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Alias for [`Graph::gather`] when the table is an embedding matrix.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        self.gather(table, ids)
    }

    /// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        self.guard("concat", parts)?;
        if parts.is_empty() || axis > 1 {
            return Err(shape_err("concat", "need at least one part and axis 0 or 1"));
        }
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| dims2("concat", self.value(p)))
            .collect::<Result<_, _>>()?;
        let (r0, c0) = dims[0];
        let (shape, data) = if axis == 0 {
            if dims.iter().any(|&(_, c)| c != c0) {
                return Err(shape_err("concat", format!("column mismatch {dims:?}")));
            }
            let rows = dims.iter().map(|d| d.0).sum::<usize>();
            let mut data = Vec::with_capacity(rows * c0);
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
            (vec![rows, c0], data)
        } else {
            if dims.iter().any(|&(r, _)| r != r0) {
                return Err(shape_err("concat", format!("row mismatch {dims:?}")));
            }
            let cols = dims.iter().map(|d| d.1).sum::<usize>();
            let mut data = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row(i));
                }
            }
            (vec![r0, cols], data)
        };
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Takes `start..end` along `axis` of a rank-2 tensor.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        self.guard("slice", &[a])?;
        let (r, c) = dims2("slice", self.value(a))?;
        let lim = if axis == 0 { r } else { c };
        if axis > 1 || start > end || end > lim {
            return Err(shape_err("slice", format!("range {start}..{end} on axis {axis} of [{r}x{c}]")));
        }
        let x = self.value(a);
        let (shape, data) = if axis == 0 {
            (vec![end - start, c], x.data()[start * c..end * c].to_vec())
        } else {
            let mut d = Vec::with_capacity(r * (end - start));
            for i in 0..r {
                d.extend_from_slice(&x.row(i)[start..end]);
            }
            (vec![r, end - start], d)
        };
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(shape, data)?, Op::Slice { input: a, axis, start }, ng))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        self.guard("sum", &[a])?;
        let s = self.value(a).sum_f64();
        let ng = self.ng(a);
        Ok(self.push(Tensor::scalar(T::from_f64(s)), Op::Sum(a), ng))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        self.guard("mean", &[a])?;
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(shape_err("mean", "empty tensor"));
        }
        let m = t.sum_f64() / t.numel() as f64;
        let ng = self.ng(a);
        Ok(self.push(Tensor::scalar(T::from_f64(m)), Op::Mean(a), ng))
    }

    /// Per-row sums of a rank-2 tensor, giving a rank-1 tensor of length `rows`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, TensorError> {
        self.guard("sum_cols", &[a])?;
        let (r, c) = dims2("sum_cols", self.value(a))?;
        let x = self.value(a).data();
        let out = (0..r)
            .map(|i| T::from_f64(x[i * c..(i + 1) * c].iter().map(|v| v.as_f64()).sum()))
            .collect();
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(vec![r], out)?, Op::SumCols(a), ng))
    }

    /// Row-wise dot product of two equally shaped matrices.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let p = self.mul(a, b)?;
        self.sum_cols(p)
    }

    /// `x · w + b` for a `[rows, in]` input and `[in, out]` weight.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, TensorError> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    /// Reverse sweep from a scalar `loss`; gradients of parameter nodes are
    /// accumulated into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<(), TensorError> {
        let grads = self.gradients(loss)?;
        for (node, grad) in self.nodes.iter().zip(grads) {
            if let (Op::Param(name), Some(g)) = (&node.op, grad) {
                let g = Tensor::new(node.value.shape().to_vec(), g)?;
                store.accumulate_grad(name, &g)?;
            }
        }
        Ok(())
    }

    /// Raw gradient of `loss` with respect to every node (None where unreachable).
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Vec<T>>>, TensorError> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node<T>, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let y = node.value.data();
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).cols();
                if self.ng(*a) {
                    add_into(&mut grads[a.0], mm_nt(gy, val(*b).data(), m, n, k));
                }
                if self.ng(*b) {
                    add_into(&mut grads[b.0], mm_tn(val(*a).data(), gy, m, k, n));
                }
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).rows();
                if self.ng(*a) {
                    add_into(&mut grads[a.0], mm(gy, val(*b).data(), m, n, k));
                }
                if self.ng(*b) {
                    add_into(&mut grads[b.0], mm_tn(gy, val(*a).data(), m, n, k));
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (val(*a).rows(), val(*a).cols());
                let mut g = vec![T::zero(); m * n];
                for i in 0..m {
                    for j in 0..n {
                        g[i * n + j] = gy[j * m + i];
                    }
                }
                add_into(&mut grads[a.0], g);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -T::one() } else { T::one() };
                if self.ng(*a) {
                    add_into(&mut grads[a.0], gy.to_vec());
                }
                if self.ng(*b) {
                    let mode = bcast("add", val(*a).shape(), val(*b).shape()).expect("checked in forward");
                    let cols = val(*a).cols();
                    let mut g = vec![T::zero(); val(*b).numel()];
                    for (i, &d) in gy.iter().enumerate() {
                        let j = bidx(mode, i, cols);
                        g[j] = g[j] + sign * d;
                    }
                    add_into(&mut grads[b.0], g);
                }
            }
            Op::Mul(a, b) => {
                let mode = bcast("mul", val(*a).shape(), val(*b).shape()).expect("checked in forward");
                let cols = val(*a).cols();
                let (ad, bd) = (val(*a).data(), val(*b).data());
                if self.ng(*a) {
                    let g = gy
                        .iter()
                        .enumerate()
                        .map(|(i, &d)| d * bd[bidx(mode, i, cols)])
                        .collect();
                    add_into(&mut grads[a.0], g);
                }
                if self.ng(*b) {
                    let mut g = vec![T::zero(); bd.len()];
                    for (i, &d) in gy.iter().enumerate() {
                        let j = bidx(mode, i, cols);
                        g[j] = g[j] + d * ad[i];
                    }
                    add_into(&mut grads[b.0], g);
                }
            }
            Op::Scale(a, s) => {
                add_into(&mut grads[a.0], gy.iter().map(|&d| d * *s).collect());
            }
            Op::Conv1d {
                input,
                weight,
                stride,
                pad_left,
            } => {
                let (t, c) = (val(*input).rows(), val(*input).cols());
                let ws = val(*weight).shape();
                let (k, c_out) = (ws[0], ws[2]);
                let t_out = node.value.rows();
                if self.ng(*weight) {
                    let col = im2col(val(*input).data(), t, c, k, *stride, *pad_left, t_out);
                    add_into(&mut grads[weight.0], mm_tn(&col, gy, t_out, k * c, c_out));
                }
                if self.ng(*input) {
                    let dcol = mm_nt(gy, val(*weight).data(), t_out, c_out, k * c);
                    let mut dx = vec![T::zero(); t * c];
                    for o in 0..t_out {
                        for kk in 0..k {
                            let src = (o * stride + kk) as isize - *pad_left as isize;
                            if src < 0 || src as usize >= t {
                                continue;
                            }
                            let src = src as usize;
                            let base = o * k * c + kk * c;
                            for ch in 0..c {
                                dx[src * c + ch] = dx[src * c + ch] + dcol[base + ch];
                            }
                        }
                    }
                    add_into(&mut grads[input.0], dx);
                }
            }
            Op::Softmax(a) => {
                let cols = node.value.cols();
                let mut g = Vec::with_capacity(y.len());
                for (yr, gr) in y.chunks(cols).zip(gy.chunks(cols)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| (*a * *b).as_f64()).sum();
                    let dot = T::from_f64(dot);
                    g.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - dot)));
                }
                add_into(&mut grads[a.0], g);
            }
            Op::Log(a) => {
                let x = val(*a).data();
                add_into(&mut grads[a.0], gy.iter().zip(x).map(|(&d, &x)| d / x).collect());
            }
            Op::Exp(a) => {
                add_into(&mut grads[a.0], gy.iter().zip(y).map(|(&d, &y)| d * y).collect());
            }
            Op::Sigmoid(a) => {
                add_into(
                    &mut grads[a.0],
                    gy.iter().zip(y).map(|(&d, &y)| d * y * (T::one() - y)).collect(),
                );
            }
            Op::LogSigmoid(a) => {
                let x = val(*a).data();
                add_into(
                    &mut grads[a.0],
                    gy.iter().zip(x).map(|(&d, &x)| d * sigmoid(-x)).collect(),
                );
            }
            Op::Relu(a) => {
                let x = val(*a).data();
                add_into(
                    &mut grads[a.0],
                    gy.iter()
                        .zip(x)
                        .map(|(&d, &x)| if x > T::zero() { d } else { T::zero() })
                        .collect(),
                );
            }
            Op::Abs(a) => {
                let x = val(*a).data();
                add_into(
                    &mut grads[a.0],
                    gy.iter()
                        .zip(x)
                        .map(|(&d, &x)| {
                            if x > T::zero() {
                                d
                            } else if x < T::zero() {
                                -d
                            } else {
                                T::zero()
                            }
                        })
                        .collect(),
                );
            }
            Op::LayerNorm { input, inv_std } => {
                let cols = node.value.cols();
                let n = cols as f64;
                let mut g = Vec::with_capacity(y.len());
                for ((yr, gr), &is) in y.chunks(cols).zip(gy.chunks(cols)).zip(inv_std) {
                    let mg: f64 = gr.iter().map(|v| v.as_f64()).sum::<f64>() / n;
                    let mgy: f64 = yr.iter().zip(gr).map(|(a, b)| (*a * *b).as_f64()).sum::<f64>() / n;
                    g.extend(
                        yr.iter()
                            .zip(gr)
                            .map(|(&yv, &gv)| T::from_f64(is.as_f64() * (gv.as_f64() - mg - yv.as_f64() * mgy))),
                    );
                }
                add_into(&mut grads[input.0], g);
            }
            Op::Gather { table, ids } => {
                let cols = node.value.cols();
                let mut g = vec![T::zero(); val(*table).numel()];
                for (r, &i) in ids.iter().enumerate() {
                    for c in 0..cols {
                        g[i * cols + c] = g[i * cols + c] + gy[r * cols + c];
                    }
                }
                add_into(&mut grads[table.0], g);
            }
            Op::Concat { parts, axis } => {
                let total_cols = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = (val(p).rows(), val(p).cols());
                    if self.ng(p) {
                        let g = if *axis == 0 {
                            gy[offset * total_cols..(offset + pr) * total_cols].to_vec()
                        } else {
                            let mut g = Vec::with_capacity(pr * pc);
                            for i in 0..pr {
                                g.extend_from_slice(&gy[i * total_cols + offset..i * total_cols + offset + pc]);
                            }
                            g
                        };
                        add_into(&mut grads[p.0], g);
                    }
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Slice { input, axis, start } => {
                let (r, c) = (val(*input).rows(), val(*input).cols());
                let mut g = vec![T::zero(); r * c];
                let (sr, sc) = (node.value.rows(), node.value.cols());
                for i in 0..sr {
                    for j in 0..sc {
                        let (ii, jj) = if *axis == 0 { (i + start, j) } else { (i, j + start) };
                        g[ii * c + jj] = gy[i * sc + j];
                    }
                }
                add_into(&mut grads[input.0], g);
            }
            Op::Sum(a) => {
                add_into(&mut grads[a.0], vec![gy[0]; val(*a).numel()]);
            }
            Op::Mean(a) => {
                let n = val(*a).numel();
                add_into(&mut grads[a.0], vec![gy[0] / T::from_f64(n as f64); n]);
            }
            Op::SumCols(a) => {
                let c = val(*a).cols();
                let mut g = Vec::with_capacity(val(*a).numel());
                for &d in gy {
                    g.extend(std::iter::repeat_n(d, c));
                }
                add_into(&mut grads[a.0], g);
            }
        }
    }
}
