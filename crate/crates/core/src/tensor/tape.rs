use super::{matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};
use crate::tensor::ParameterSet;

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var, usize),
    Concat(Vec<Var>, usize),
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    GatherCols {
        table: Var,
        ids: Vec<usize>,
    },
    LayerNormCols {
        x: Var,
        eps: f64,
    },
    LstmCell {
        pre: Var,
        c_prev: Var,
    },
    BlockDot {
        a: Var,
        m: Var,
    },
    Mse {
        pred: Var,
        target: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// A dynamic computation record. Nodes are appended in evaluation order, so
/// every node's parents precede it and a reverse sweep is a valid
/// topological order for the chain rule.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// dLoss/dv. Nodes with no path to the loss get exact zeros.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[v.0].clone()),
        }
    }

    /// Gradients for a list of bound parameters, in the same order.
    pub fn collect(&self, vars: &[Var]) -> Vec<Tensor> {
        vars.iter().map(|&v| self.get(v)).collect()
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records every tensor of a parameter set as a leaf, in the set's order.
    pub fn bind(&mut self, params: &ParameterSet) -> Vec<Var> {
        params.tensors().iter().map(|t| self.leaf(t.clone())).collect()
    }

    /// Activation pattern of every ReLU on the tape (input > 0). Two forward
    /// passes with equal patterns are on the same linear piece of the graph.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.nodes[x.0].value.data().iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|e| e * c);
        self.push(v, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|e| e + c);
        self.push(v, Op::AddScalar(x))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).transpose()?;
        Ok(self.push(v, Op::Transpose(x)))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| e.max(0.0));
        self.push(v, Op::Relu(x))
    }

    /// Softmax along `axis`, stabilized by subtracting each slice's maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let v = softmax(self.value(x), axis)?;
        Ok(self.push(v, Op::Softmax(x, axis)))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::InvalidArgument(format!(
                "concat axis {axis} out of range for shape {base:?}"
            )));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = self.value(first).axis_split(axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::Concat(parts.to_vec(), axis)))
    }

    /// `len` entries of `x` along `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() || len == 0 || start + len > t.shape()[axis] {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {}) on axis {axis} out of range for shape {:?}",
                start + len,
                t.shape()
            )));
        }
        let (outer, n, inner) = t.axis_split(axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::Slice { x, axis, start }))
    }

    /// Column `c` of a matrix as an `rows × 1` tensor.
    pub fn column(&mut self, x: Var, c: usize) -> Result<Var> {
        self.slice(x, 1, c, 1)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Sum along `axis`, keeping that axis with size 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(Error::InvalidArgument(format!(
                "sum axis {axis} out of range for shape {:?}",
                t.shape()
            )));
        }
        let (outer, n, inner) = t.axis_split(axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..n {
                for j in 0..inner {
                    data[o * inner + j] += t.data()[(o * n + i) * inner + j];
                }
            }
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = 1;
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::SumAxis(x, axis)))
    }

    /// Embedding lookup: column `t` of the result is row `ids[t]` of `table`.
    pub fn gather_cols(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 || ids.is_empty() {
            return Err(Error::InvalidArgument(
                "gather needs a matrix table and at least one id".into(),
            ));
        }
        let (rows, d) = (t.rows(), t.cols());
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidArgument(format!(
                "token id {bad} out of range for vocabulary of {rows}"
            )));
        }
        let n = ids.len();
        let mut data = vec![0.0; d * n];
        for (c, &id) in ids.iter().enumerate() {
            for r in 0..d {
                data[r * n + c] = t.data()[id * d + r];
            }
        }
        let v = Tensor::new(vec![d, n], data)?;
        Ok(self.push(
            v,
            Op::GatherCols {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Normalizes every column of a matrix to zero mean and unit variance.
    pub fn layer_norm_cols(&mut self, x: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(Error::InvalidArgument("layer_norm_cols needs a matrix".into()));
        }
        let (d, n) = (t.rows(), t.cols());
        let mut data = vec![0.0; d * n];
        for c in 0..n {
            let (mu, inv_std) = column_moments(t.data(), d, n, c, eps);
            for r in 0..d {
                data[r * n + c] = (t.data()[r * n + c] - mu) * inv_std;
            }
        }
        let v = Tensor::new(vec![d, n], data)?;
        Ok(self.push(v, Op::LayerNormCols { x, eps }))
    }

    /// One LSTM cell update for a batch of columns.
    ///
    /// `pre` is `4h × B` with gate pre-activations stacked as input, forget,
    /// candidate, output; `c_prev` is `h × B`. Returns `[h_new; c_new]` as a
    /// `2h × B` tensor.
    pub fn lstm_cell(&mut self, pre: Var, c_prev: Var) -> Result<Var> {
        let p = self.value(pre);
        let c = self.value(c_prev);
        if p.rank() != 2 || c.rank() != 2 || p.rows() != 4 * c.rows() || p.cols() != c.cols() {
            return Err(Error::shape("lstm_cell", p.shape(), c.shape()));
        }
        let (h, b) = (c.rows(), c.cols());
        let mut out = vec![0.0; 2 * h * b];
        for r in 0..h {
            for col in 0..b {
                let g = LstmGates::at(p.data(), h, b, r, col);
                let cn = g.f * c.data()[r * b + col] + g.i * g.g;
                out[r * b + col] = g.o * cn.tanh();
                out[(h + r) * b + col] = cn;
            }
        }
        let v = Tensor::new(vec![2 * h, b], out)?;
        Ok(self.push(v, Op::LstmCell { pre, c_prev }))
    }

    /// Per-column block dot products: for `a` of shape `D × T` and `m` of shape
    /// `(K·D) × T`, returns `K × T` with `out[k,t] = Σ_d a[d,t]·m[k·D+d,t]`.
    pub fn block_dot(&mut self, a: Var, m: Var) -> Result<Var> {
        let at = self.value(a);
        let mt = self.value(m);
        if at.rank() != 2
            || mt.rank() != 2
            || at.cols() != mt.cols()
            || !mt.rows().is_multiple_of(at.rows())
        {
            return Err(Error::shape("block_dot", at.shape(), mt.shape()));
        }
        let (d, t) = (at.rows(), at.cols());
        let k = mt.rows() / d;
        let mut out = vec![0.0; k * t];
        for kk in 0..k {
            for dd in 0..d {
                let mrow = &mt.data()[(kk * d + dd) * t..(kk * d + dd + 1) * t];
                let arow = &at.data()[dd * t..(dd + 1) * t];
                for c in 0..t {
                    out[kk * t + c] += arow[c] * mrow[c];
                }
            }
        }
        let v = Tensor::new(vec![k, t], out)?;
        Ok(self.push(v, Op::BlockDot { a, m }))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::shape("mse", p.shape(), target.shape()));
        }
        let s = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.len() as f64;
        Ok(self.push(
            Tensor::scalar(s),
            Op::Mse {
                pred,
                target: target.clone(),
            },
        ))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(lv.shape().to_vec()));
        for idx in (0..=loss.0).rev() {
            if let Some(g) = grads[idx].take() {
                self.propagate(idx, &g, &mut grads);
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::Scale(x, c) => accumulate(grads, *x, g.map(|v| v * c)),
            Op::AddScalar(x) => accumulate(grads, *x, g.clone()),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                // dA = G · Bᵀ, dB = Aᵀ · G
                let mut da = vec![0.0; m * k];
                matmul_nt_into(g.data(), bv.data(), &mut da, m, n, k);
                let mut db = vec![0.0; k * n];
                matmul_tn_into(av.data(), g.data(), &mut db, m, k, n);
                accumulate(grads, *a, Tensor::new(vec![m, k], da).expect("shape"));
                accumulate(grads, *b, Tensor::new(vec![k, n], db).expect("shape"));
            }
            Op::Transpose(x) => accumulate(grads, *x, g.transpose().expect("matrix")),
            Op::Tanh(x) => accumulate(grads, *x, g.zip_map(out, |d, y| d * (1.0 - y * y))),
            Op::Sigmoid(x) => accumulate(grads, *x, g.zip_map(out, |d, y| d * y * (1.0 - y))),
            Op::Relu(x) => accumulate(
                grads,
                *x,
                g.zip_map(self.value(*x), |d, v| if v > 0.0 { d } else { 0.0 }),
            ),
            Op::Softmax(x, axis) => {
                let (outer, n, inner) = out.axis_split(*axis);
                let mut dx = vec![0.0; out.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * n + i) * inner + j;
                        let dot: f64 = (0..n).map(|i| g.data()[at(i)] * out.data()[at(i)]).sum();
                        for i in 0..n {
                            dx[at(i)] = out.data()[at(i)] * (g.data()[at(i)] - dot);
                        }
                    }
                }
                accumulate(grads, *x, Tensor::new(out.shape().to_vec(), dx).expect("shape"));
            }
            Op::Concat(parts, axis) => {
                let (outer, total, inner) = out.axis_split(*axis);
                let mut offset = 0;
                for &p in parts {
                    let shape = self.shape(p).to_vec();
                    let len = shape[*axis];
                    let mut data = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        data.extend_from_slice(&g.data()[base..base + len * inner]);
                    }
                    offset += len;
                    accumulate(grads, p, Tensor::new(shape, data).expect("shape"));
                }
            }
            Op::Slice { x, axis, start } => {
                let src = self.value(*x);
                let (outer, n, inner) = src.axis_split(*axis);
                let len = out.shape()[*axis];
                let mut dx = vec![0.0; src.len()];
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    let gbase = o * len * inner;
                    dx[base..base + len * inner]
                        .copy_from_slice(&g.data()[gbase..gbase + len * inner]);
                }
                accumulate(grads, *x, Tensor::new(src.shape().to_vec(), dx).expect("shape"));
            }
            Op::Sum(x) => {
                let shape = self.shape(*x).to_vec();
                accumulate(grads, *x, Tensor::full(shape, g.data()[0]));
            }
            Op::Mean(x) => {
                let src = self.value(*x);
                let v = g.data()[0] / src.len() as f64;
                accumulate(grads, *x, Tensor::full(src.shape().to_vec(), v));
            }
            Op::SumAxis(x, axis) => {
                let src = self.value(*x);
                let (outer, n, inner) = src.axis_split(*axis);
                let mut dx = vec![0.0; src.len()];
                for o in 0..outer {
                    for i in 0..n {
                        for j in 0..inner {
                            dx[(o * n + i) * inner + j] = g.data()[o * inner + j];
                        }
                    }
                }
                accumulate(grads, *x, Tensor::new(src.shape().to_vec(), dx).expect("shape"));
            }
            Op::GatherCols { table, ids } => {
                let tv = self.value(*table);
                let d = tv.cols();
                let n = ids.len();
                let mut dt = vec![0.0; tv.len()];
                for (c, &id) in ids.iter().enumerate() {
                    for r in 0..d {
                        dt[id * d + r] += g.data()[r * n + c];
                    }
                }
                accumulate(grads, *table, Tensor::new(tv.shape().to_vec(), dt).expect("shape"));
            }
            Op::LayerNormCols { x, eps } => {
                let src = self.value(*x);
                let (d, n) = (src.rows(), src.cols());
                let mut dx = vec![0.0; d * n];
                for c in 0..n {
                    let (_, inv_std) = column_moments(src.data(), d, n, c, *eps);
                    let mean_g = (0..d).map(|r| g.data()[r * n + c]).sum::<f64>() / d as f64;
                    let mean_gy = (0..d)
                        .map(|r| g.data()[r * n + c] * out.data()[r * n + c])
                        .sum::<f64>()
                        / d as f64;
                    for r in 0..d {
                        let i = r * n + c;
                        dx[i] = inv_std * (g.data()[i] - mean_g - out.data()[i] * mean_gy);
                    }
                }
                accumulate(grads, *x, Tensor::new(vec![d, n], dx).expect("shape"));
            }
            Op::LstmCell { pre, c_prev } => {
                let p = self.value(*pre);
                let cp = self.value(*c_prev);
                let (h, b) = (cp.rows(), cp.cols());
                let mut dpre = vec![0.0; 4 * h * b];
                let mut dc_prev = vec![0.0; h * b];
                for r in 0..h {
                    for col in 0..b {
                        let gt = LstmGates::at(p.data(), h, b, r, col);
                        let c_old = cp.data()[r * b + col];
                        let c_new = out.data()[(h + r) * b + col];
                        let tc = c_new.tanh();
                        let dh = g.data()[r * b + col];
                        let dc = g.data()[(h + r) * b + col] + dh * gt.o * (1.0 - tc * tc);
                        let di = dc * gt.g;
                        let df = dc * c_old;
                        let dg = dc * gt.i;
                        let d_o = dh * tc;
                        dpre[r * b + col] = di * gt.i * (1.0 - gt.i);
                        dpre[(h + r) * b + col] = df * gt.f * (1.0 - gt.f);
                        dpre[(2 * h + r) * b + col] = dg * (1.0 - gt.g * gt.g);
                        dpre[(3 * h + r) * b + col] = d_o * gt.o * (1.0 - gt.o);
                        dc_prev[r * b + col] = dc * gt.f;
                    }
                }
                accumulate(grads, *pre, Tensor::new(vec![4 * h, b], dpre).expect("shape"));
                accumulate(grads, *c_prev, Tensor::new(vec![h, b], dc_prev).expect("shape"));
            }
            Op::BlockDot { a, m } => {
                let (av, mv) = (self.value(*a), self.value(*m));
                let (d, t) = (av.rows(), av.cols());
                let k = mv.rows() / d;
                let mut da = vec![0.0; d * t];
                let mut dm = vec![0.0; k * d * t];
                for kk in 0..k {
                    for dd in 0..d {
                        for c in 0..t {
                            let gv = g.data()[kk * t + c];
                            da[dd * t + c] += gv * mv.data()[(kk * d + dd) * t + c];
                            dm[(kk * d + dd) * t + c] = gv * av.data()[dd * t + c];
                        }
                    }
                }
                accumulate(grads, *a, Tensor::new(vec![d, t], da).expect("shape"));
                accumulate(grads, *m, Tensor::new(vec![k * d, t], dm).expect("shape"));
            }
            Op::Mse { pred, target } => {
                let p = self.value(*pred);
                let c = 2.0 * g.data()[0] / p.len() as f64;
                accumulate(grads, *pred, p.zip_map(target, |a, b| c * (a - b)));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax along `axis` without recording anything.
pub(crate) fn softmax(t: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= t.rank() {
        return Err(Error::InvalidArgument(format!(
            "softmax axis {axis} out of range for shape {:?}",
            t.shape()
        )));
    }
    let (outer, n, inner) = t.axis_split(axis);
    let mut data = vec![0.0; t.len()];
    for o in 0..outer {
        for j in 0..inner {
            let at = |i: usize| (o * n + i) * inner + j;
            let max = (0..n)
                .map(|i| t.data()[at(i)])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in 0..n {
                let e = (t.data()[at(i)] - max).exp();
                data[at(i)] = e;
                z += e;
            }
            for i in 0..n {
                data[at(i)] /= z;
            }
        }
    }
    Tensor::new(t.shape().to_vec(), data)
}

fn column_moments(data: &[f64], d: usize, n: usize, c: usize, eps: f64) -> (f64, f64) {
    let mu = (0..d).map(|r| data[r * n + c]).sum::<f64>() / d as f64;
    let var = (0..d).map(|r| (data[r * n + c] - mu).powi(2)).sum::<f64>() / d as f64;
    (mu, 1.0 / (var + eps).sqrt())
}

struct LstmGates {
    i: f64,
    f: f64,
    g: f64,
    o: f64,
}

impl LstmGates {
    fn at(pre: &[f64], h: usize, b: usize, r: usize, col: usize) -> Self {
        LstmGates {
            i: sigmoid(pre[r * b + col]),
            f: sigmoid(pre[(h + r) * b + col]),
            g: pre[(2 * h + r) * b + col].tanh(),
            o: sigmoid(pre[(3 * h + r) * b + col]),
        }
    }
}
