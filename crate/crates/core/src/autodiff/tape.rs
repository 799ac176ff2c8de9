//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Tape`]; [`Tape::backward`] walks
//! the nodes in reverse insertion order and accumulates adjoints into each
//! operand. Inputs of a node always have smaller ids than the node itself,
//! so a single reverse sweep visits every node after all of its consumers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(usize);

impl Value {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Value, Value),
    MatMulNt(Value, Value),
    Add(Value, Value),
    AddRow(Value, Value),
    Mul(Value, Value),
    Scale(Value, f64),
    Mask(Value, Vec<f64>),
    Softmax(Value),
    LayerNorm {
        x: Value,
        gamma: Value,
        beta: Value,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Value),
    SliceCols {
        x: Value,
        start: usize,
    },
    ConcatCols(Vec<Value>),
    ConcatRows(Vec<Value>),
    Rows {
        x: Value,
        start: usize,
    },
    Reshape(Value),
    Sum(Value),
    CrossEntropy {
        logits: Value,
        label: usize,
        weight: f64,
        probs: Vec<f64>,
    },
    KlToTarget {
        logits: Value,
        target: Vec<f64>,
        tau: f64,
        student: Vec<f64>,
    },
    MseToTarget {
        x: Value,
        target: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Append-only record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_deriv(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI);
    cdf + x * pdf
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    gelu_scalar(x)
}

/// Softmax of a single slice, max-subtracted.
pub fn softmax_slice(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = libm::exp(v - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `φ(r) = 1 + eʳ(r − 1)`, nonnegative with a double root at 0.
fn bregman_phi(r: f64) -> f64 {
    if r.abs() < 1e-3 {
        let r2 = r * r;
        r2 * (0.5 + r * (1.0 / 3.0 + r * (0.125 + r / 30.0)))
    } else {
        (r - 1.0) * libm::expm1(r) + r
    }
}

/// Softmax of `logits / tau`.
pub fn softmax_with_temperature(logits: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|v| v / tau).collect();
    let mut out = vec![0.0; logits.len()];
    softmax_slice(&scaled, &mut out);
    out
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

    fn push(&mut self, value: Tensor, op: Op) -> Value {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Value(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant) on the tape.
    pub fn leaf(&mut self, value: Tensor) -> Value {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Value) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Adjoint of `v` after [`Tape::backward`]; `None` if `v` does not
    /// influence the root.
    pub fn grad(&self, v: Value) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Adjoint of `v` as a tensor, zeros if unreached.
    pub fn grad_tensor(&self, v: Value) -> Tensor {
        let value = &self.nodes[v.0].value;
        match &self.nodes[v.0].grad {
            Some(g) => Tensor::new(value.shape().to_vec(), g.clone()).expect("grad shape"),
            None => Tensor::zeros(value.shape()),
        }
    }

    pub fn scalar_value(&self, v: Value) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return shape_err("matmul", self.shape(a), self.shape(b));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Value, b: Value) -> Result<Value> {
        let (m, k) = self.value(a).dims2()?;
        let (n, k2) = self.value(b).dims2()?;
        if k != k2 {
            return shape_err("matmul_nt", self.shape(a), self.shape(b));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNt(a, b)))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.shape(a) != self.shape(b) {
            return shape_err("add", self.shape(a), self.shape(b));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Value, row: Value) -> Result<Value> {
        let (_, n) = self.value(x).dims2()?;
        if self.shape(row) != [n] {
            return shape_err("add_row", self.shape(x), self.shape(row));
        }
        let r = self.value(row).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (d, b) in chunk.iter_mut().zip(&r) {
                *d += b;
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(t, Op::AddRow(x, row)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.shape(a) != self.shape(b) {
            return shape_err("mul", self.shape(a), self.shape(b));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Value, c: f64) -> Value {
        let data: Vec<f64> = self.value(x).data().iter().map(|v| v * c).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        self.push(t, Op::Scale(x, c))
    }

    /// Elementwise multiplication by a constant mask (used for dropout).
    pub fn mask(&mut self, x: Value, mask: Vec<f64>) -> Result<Value> {
        if mask.len() != self.value(x).len() {
            return shape_err("mask", self.shape(x), &[mask.len()]);
        }
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(t, Op::Mask(x, mask)))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Value) -> Result<Value> {
        let xv = self.value(x);
        if !xv.is_finite() {
            return Err(Error::NonFinite("softmax input"));
        }
        let n = xv.last_dim();
        if n == 0 {
            return Err(Error::InvalidInput("softmax over an empty axis".into()));
        }
        let mut out = vec![0.0; xv.len()];
        for (src, dst) in xv.data().chunks(n).zip(out.chunks_mut(n)) {
            softmax_slice(src, dst);
        }
        let t = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Softmax(x)))
    }

    /// Layer normalization over the last axis (population variance).
    pub fn layer_norm(&mut self, x: Value, gamma: Value, beta: Value, eps: f64) -> Result<Value> {
        let d = self.value(x).last_dim();
        if d < 2 {
            return Err(Error::InvalidInput(
                "layer_norm needs at least 2 features per row".into(),
            ));
        }
        if self.shape(gamma) != [d] {
            return shape_err("layer_norm gamma", self.shape(x), self.shape(gamma));
        }
        if self.shape(beta) != [d] {
            return shape_err("layer_norm beta", self.shape(x), self.shape(beta));
        }
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let rows = xv.len() / d;
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let denom = libm::sqrt(var + eps);
            let is = if denom > 0.0 { 1.0 / denom } else { 0.0 };
            inv_std[r] = is;
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g[c] + b[c];
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn gelu(&mut self, x: Value) -> Value {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| gelu_scalar(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        self.push(t, Op::Gelu(x))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Value, start: usize, len: usize) -> Result<Value> {
        let (m, n) = self.value(x).dims2()?;
        if start + len > n {
            return shape_err("slice_cols", self.shape(x), &[start, len]);
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&src[r * n + start..r * n + start + len]);
        }
        Ok(self.push(Tensor::matrix(m, len, out)?, Op::SliceCols { x, start }))
    }

    /// Rows `start..start+len` of a matrix.
    pub fn rows(&mut self, x: Value, start: usize, len: usize) -> Result<Value> {
        let (m, n) = self.value(x).dims2()?;
        if start + len > m {
            return shape_err("rows", self.shape(x), &[start, len]);
        }
        let out = self.value(x).data()[start * n..(start + len) * n].to_vec();
        Ok(self.push(Tensor::matrix(len, n, out)?, Op::Rows { x, start }))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Value]) -> Result<Value> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("concat_cols of nothing".into()))?;
        let (m, _) = self.value(*first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.value(p).dims2()?;
            if pm != m {
                return shape_err("concat_cols", self.shape(*first), self.shape(p));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(Tensor::matrix(m, total, out)?, Op::ConcatCols(parts.to_vec())))
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Value]) -> Result<Value> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("concat_rows of nothing".into()))?;
        let (_, n) = self.value(*first).dims2()?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pm, pn) = self.value(p).dims2()?;
            if pn != n {
                return shape_err("concat_rows", self.shape(*first), self.shape(p));
            }
            rows += pm;
            out.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Tensor::matrix(rows, n, out)?, Op::ConcatRows(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: Value, shape: &[usize]) -> Result<Value> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    pub fn sum(&mut self, x: Value) -> Value {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `weight · −log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Value, label: usize, weight: f64) -> Result<Value> {
        let lv = self.value(logits);
        if lv.rank() != 1 {
            return Err(Error::InvalidInput("cross_entropy expects a logit vector".into()));
        }
        let c = lv.len();
        if c < 2 {
            return Err(Error::InvalidInput("cross_entropy needs at least 2 classes".into()));
        }
        if label >= c {
            return Err(Error::LabelOutOfRange { label, classes: c });
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite("cross_entropy logits"));
        }
        let data = lv.data();
        let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(data.iter().map(|v| libm::exp(v - max)).sum::<f64>());
        let loss = weight * (lse - data[label]);
        let probs: Vec<f64> = data.iter().map(|v| libm::exp(v - lse)).collect();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                label,
                weight,
                probs,
            },
        ))
    }

    /// `τ² Σ_j qᵀ_j log(qᵀ_j / qˢ_j)` with `qˢ = softmax(logits/τ)` and a
    /// fixed (detached) target distribution `qᵀ`.
    pub fn kl_to_target(&mut self, logits: Value, target: &[f64], tau: f64) -> Result<Value> {
        let lv = self.value(logits);
        if lv.rank() != 1 || lv.len() != target.len() {
            return shape_err("kl_to_target", lv.shape(), &[target.len()]);
        }
        if tau <= 0.0 {
            return Err(Error::InvalidInput("temperature must be positive".into()));
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite("kl logits"));
        }
        let scaled: Vec<f64> = lv.data().iter().map(|v| v / tau).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(scaled.iter().map(|v| libm::exp(v - max)).sum::<f64>());
        // Σ t·log(t/q) = Σ q·φ(log(t/q)) because Σ t = Σ q; every term is ≥ 0
        let mut kl = 0.0;
        for (t, s) in target.iter().zip(&scaled) {
            let log_q = s - lse;
            let q = libm::exp(log_q);
            kl += if *t > 0.0 { q * bregman_phi(libm::log(*t) - log_q) } else { q };
        }
        let kl = tau * tau * kl;
        let student: Vec<f64> = scaled.iter().map(|s| libm::exp(s - lse)).collect();
        Ok(self.push(
            Tensor::scalar(kl),
            Op::KlToTarget {
                logits,
                target: target.to_vec(),
                tau,
                student,
            },
        ))
    }

    /// Mean over rows of the squared Euclidean distance to a fixed target.
    pub fn mse_to_target(&mut self, x: Value, target: &Tensor) -> Result<Value> {
        let xv = self.value(x);
        if xv.shape() != target.shape() {
            return shape_err("mse_to_target", xv.shape(), target.shape());
        }
        let rows = if xv.rank() >= 2 { xv.shape()[0] } else { 1 };
        let sq: f64 = xv
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let loss = sq / rows as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MseToTarget {
                x,
                target: target.data().to_vec(),
            },
        ))
    }

    /// Propagates adjoints from a scalar root to every node it depends on.
    pub fn backward(&mut self, root: Value) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::InvalidInput(alloc::format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[root.0].grad = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let Some(g) = node.grad.as_deref() else {
                continue;
            };
            propagate(before, node, g)?;
        }
        Ok(())
    }
}

fn acc(nodes: &mut [Node], v: Value) -> &mut [f64] {
    let node = &mut nodes[v.0];
    let n = node.value.len();
    node.grad.get_or_insert_with(|| vec![0.0; n])
}

fn propagate(nodes: &mut [Node], node: &Node, g: &[f64]) -> Result<()> {
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = nodes[a.0].value.dims2()?;
            let (_, n) = nodes[b.0].value.dims2()?;
            let bv = nodes[b.0].value.data().to_vec();
            gemm_nt_acc(g, &bv, acc(nodes, *a), m, n, k);
            let av = nodes[a.0].value.data().to_vec();
            gemm_tn_acc(&av, g, acc(nodes, *b), m, k, n);
        }
        Op::MatMulNt(a, b) => {
            // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A
            let (m, k) = nodes[a.0].value.dims2()?;
            let (n, _) = nodes[b.0].value.dims2()?;
            let bv = nodes[b.0].value.data().to_vec();
            gemm_acc(g, &bv, acc(nodes, *a), m, n, k);
            let av = nodes[a.0].value.data().to_vec();
            gemm_tn_acc(g, &av, acc(nodes, *b), m, n, k);
        }
        Op::Add(a, b) => {
            for (d, s) in acc(nodes, *a).iter_mut().zip(g) {
                *d += s;
            }
            for (d, s) in acc(nodes, *b).iter_mut().zip(g) {
                *d += s;
            }
        }
        Op::AddRow(x, row) => {
            for (d, s) in acc(nodes, *x).iter_mut().zip(g) {
                *d += s;
            }
            let r = acc(nodes, *row);
            let n = r.len();
            for chunk in g.chunks(n) {
                for (d, s) in r.iter_mut().zip(chunk) {
                    *d += s;
                }
            }
        }
        Op::Mul(a, b) => {
            let av = nodes[a.0].value.data().to_vec();
            let bv = nodes[b.0].value.data().to_vec();
            for ((d, s), y) in acc(nodes, *a).iter_mut().zip(g).zip(&bv) {
                *d += s * y;
            }
            for ((d, s), x) in acc(nodes, *b).iter_mut().zip(g).zip(&av) {
                *d += s * x;
            }
        }
        Op::Scale(x, c) => {
            for (d, s) in acc(nodes, *x).iter_mut().zip(g) {
                *d += s * c;
            }
        }
        Op::Mask(x, mask) => {
            for ((d, s), m) in acc(nodes, *x).iter_mut().zip(g).zip(mask) {
                *d += s * m;
            }
        }
        Op::Softmax(x) => {
            let y = node.value.data();
            let n = node.value.last_dim();
            let dx = acc(nodes, *x);
            for ((yc, gc), dc) in y.chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                let dot: f64 = yc.iter().zip(gc).map(|(a, b)| a * b).sum();
                for ((d, yi), gi) in dc.iter_mut().zip(yc).zip(gc) {
                    *d += yi * (gi - dot);
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let d = node.value.last_dim();
            let gv = nodes[gamma.0].value.data().to_vec();
            {
                let dg = acc(nodes, *gamma);
                for (gc, hc) in g.chunks(d).zip(xhat.chunks(d)) {
                    for ((o, gi), hi) in dg.iter_mut().zip(gc).zip(hc) {
                        *o += gi * hi;
                    }
                }
            }
            {
                let db = acc(nodes, *beta);
                for gc in g.chunks(d) {
                    for (o, gi) in db.iter_mut().zip(gc) {
                        *o += gi;
                    }
                }
            }
            let dx = acc(nodes, *x);
            let df = d as f64;
            for (r, ((gc, hc), dc)) in g
                .chunks(d)
                .zip(xhat.chunks(d))
                .zip(dx.chunks_mut(d))
                .enumerate()
            {
                let mut sum_dh = 0.0;
                let mut sum_dh_h = 0.0;
                for c in 0..d {
                    let dh = gc[c] * gv[c];
                    sum_dh += dh;
                    sum_dh_h += dh * hc[c];
                }
                let is = inv_std[r];
                for c in 0..d {
                    let dh = gc[c] * gv[c];
                    dc[c] += is / df * (df * dh - sum_dh - hc[c] * sum_dh_h);
                }
            }
        }
        Op::Gelu(x) => {
            let xv = nodes[x.0].value.data().to_vec();
            for ((d, s), xi) in acc(nodes, *x).iter_mut().zip(g).zip(&xv) {
                *d += s * gelu_deriv(*xi);
            }
        }
        Op::SliceCols { x, start } => {
            let (m, len) = node.value.dims2()?;
            let (_, n) = nodes[x.0].value.dims2()?;
            let dx = acc(nodes, *x);
            for r in 0..m {
                for c in 0..len {
                    dx[r * n + start + c] += g[r * len + c];
                }
            }
        }
        Op::Rows { x, start } => {
            let (_, n) = nodes[x.0].value.dims2()?;
            let dx = acc(nodes, *x);
            for (d, s) in dx[start * n..start * n + g.len()].iter_mut().zip(g) {
                *d += s;
            }
        }
        Op::ConcatCols(parts) => {
            let (m, total) = node.value.dims2()?;
            let mut offset = 0;
            for p in parts {
                let (_, w) = nodes[p.0].value.dims2()?;
                let dp = acc(nodes, *p);
                for r in 0..m {
                    for c in 0..w {
                        dp[r * w + c] += g[r * total + offset + c];
                    }
                }
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let len = nodes[p.0].value.len();
                let dp = acc(nodes, *p);
                for (d, s) in dp.iter_mut().zip(&g[offset..offset + len]) {
                    *d += s;
                }
                offset += len;
            }
        }
        Op::Reshape(x) => {
            for (d, s) in acc(nodes, *x).iter_mut().zip(g) {
                *d += s;
            }
        }
        Op::Sum(x) => {
            let s = g[0];
            for d in acc(nodes, *x).iter_mut() {
                *d += s;
            }
        }
        Op::CrossEntropy {
            logits,
            label,
            weight,
            probs,
        } => {
            let s = g[0] * weight;
            let dl = acc(nodes, *logits);
            for (j, (d, p)) in dl.iter_mut().zip(probs).enumerate() {
                let onehot = if j == *label { 1.0 } else { 0.0 };
                *d += s * (p - onehot);
            }
        }
        Op::KlToTarget {
            logits,
            target,
            tau,
            student,
        } => {
            // d/dz τ² Σ qᵀ (log qᵀ − log softmax(z/τ)) = τ (qˢ − qᵀ)
            let s = g[0] * tau;
            let dl = acc(nodes, *logits);
            for ((d, qs), qt) in dl.iter_mut().zip(student).zip(target) {
                *d += s * (qs - qt);
            }
        }
        Op::MseToTarget { x, target } => {
            let xv = &nodes[x.0].value;
            let rows = if xv.rank() >= 2 { xv.shape()[0] } else { 1 };
            let c = 2.0 * g[0] / rows as f64;
            let xd = xv.data().to_vec();
            for ((d, a), b) in acc(nodes, *x).iter_mut().zip(&xd).zip(target) {
                *d += c * (a - b);
            }
        }
    }
    Ok(())
}
