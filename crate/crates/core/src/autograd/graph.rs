//! Tape of operations and the reverse pass.
//!
//! Nodes are appended in evaluation order, so every parent has a smaller
//! index than its children and a reverse sweep over the tape is a valid
//! reverse topological order.

use std::sync::Arc;

use super::{AttnMask, AutogradError, Tensor};
use crate::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Compressed per-row key lists of an attention mask.
#[derive(Debug)]
struct KeyRows {
    row_ptr: Vec<usize>,
    keys: Vec<usize>,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    MulConst(Var, Arc<[T]>),
    Gelu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Rope {
        x: Var,
        heads: usize,
        cos: Arc<[T]>,
        sin: Arc<[T]>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        rows: Arc<KeyRows>,
        weights: Vec<T>,
    },
    SegmentMean {
        x: Var,
        segments: Vec<Vec<usize>>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Sum(Var),
    WeightedBce {
        p: Var,
        coef: Vec<T>,
    },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Reverse-mode autodiff tape over [`Tensor`] values.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, detail: String) -> AutogradError {
    AutogradError::ShapeMismatch { op, detail }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape2(&self, v: Var, op: &'static str) -> Result<(usize, usize), AutogradError> {
        let s = self.nodes[v.0].value.shape();
        if s.len() != 2 {
            return Err(mismatch(op, format!("expected a matrix, got shape {:?}", s)));
        }
        Ok((s[0], s[1]))
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Leaf, t, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Leaf, t, false)
    }

    /// Copies the value of `x` into a fresh constant; no gradient flows back.
    pub fn detach(&mut self, x: Var) -> Var {
        let t = self.nodes[x.0].value.clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (m, k) = self.shape2(a, "matmul")?;
        let (k2, n) = self.shape2(b, "matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", format!("{}x{} · {}x{}", m, k, k2, n)));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            n as isize,
            1,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), Tensor::from_parts(vec![m, n], out), rg))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (m, k) = self.shape2(a, "matmul_nt")?;
        let (n, k2) = self.shape2(b, "matmul_nt")?;
        if k != k2 {
            return Err(mismatch("matmul_nt", format!("{}x{} · ({}x{})ᵀ", m, k, n, k2)));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            1,
            k as isize,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMulNt(a, b), Tensor::from_parts(vec![m, n], out), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutogradError> {
        let (m, n) = self.shape2(a, "transpose")?;
        let src = self.value(a).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Op::Transpose(a), Tensor::from_parts(vec![n, m], out), rg))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), AutogradError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(mismatch(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let out: Vec<T> = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = va.shape().to_vec();
        let rg = self.rg(&[a, b]);
        self.push(op, Tensor::from_parts(shape, out), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, AutogradError> {
        let cols = self.value(x).cols();
        if self.value(bias).numel() != cols {
            return Err(mismatch(
                "add_row",
                format!("bias {:?} for {} columns", self.value(bias).shape(), cols),
            ));
        }
        let b = self.value(bias).data();
        let out: Vec<T> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % cols])
            .collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Op::AddRow(x, bias), Tensor::from_parts(shape, out), rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).map(|v| v * c);
        let rg = self.rg(&[x]);
        self.push(Op::Scale(x, c), out, rg)
    }

    /// Elementwise product with a constant buffer (dropout masks).
    pub fn mul_const(&mut self, x: Var, factor: Arc<[T]>) -> Result<Var, AutogradError> {
        if factor.len() != self.value(x).numel() {
            return Err(mismatch(
                "mul_const",
                format!("{} factors for {} values", factor.len(), self.value(x).numel()),
            ));
        }
        let vx = self.value(x);
        let out: Vec<T> = vx.data().iter().zip(factor.iter()).map(|(&a, &b)| a * b).collect();
        let shape = vx.shape().to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Op::MulConst(x, factor), Tensor::from_parts(shape, out), rg))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu_fwd);
        let rg = self.rg(&[x]);
        self.push(Op::Gelu(x), out, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.rg(&[x]);
        self.push(Op::Sigmoid(x), out, rg)
    }

    /// Softmax over the last axis with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var, AutogradError> {
        self.softmax_impl(x, None)
    }

    /// Softmax over the last axis where `mask[r * n + j] == false` gets
    /// exactly zero weight.
    pub fn masked_softmax(&mut self, x: Var, mask: Arc<[bool]>) -> Result<Var, AutogradError> {
        if mask.len() != self.value(x).numel() {
            return Err(mismatch(
                "masked_softmax",
                format!("mask of {} for {} values", mask.len(), self.value(x).numel()),
            ));
        }
        self.softmax_impl(x, Some(mask))
    }

    fn softmax_impl(&mut self, x: Var, mask: Option<Arc<[bool]>>) -> Result<Var, AutogradError> {
        let vx = self.value(x);
        let n = vx.cols();
        let mut out = vec![T::zero(); vx.numel()];
        for (r, (src, dst)) in vx.data().chunks(n).zip(out.chunks_mut(n)).enumerate() {
            let allowed = |j: usize| mask.as_ref().is_none_or(|m| m[r * n + j]);
            let mut max = T::neg_infinity();
            for (j, &v) in src.iter().enumerate() {
                if allowed(j) && v > max {
                    max = v;
                }
            }
            if max == T::neg_infinity() {
                return Err(AutogradError::AllMasked);
            }
            let mut sum = T::zero();
            for j in 0..n {
                if allowed(j) {
                    let e = (src[j] - max).exp();
                    dst[j] = e;
                    sum += e;
                }
            }
            for d in dst.iter_mut() {
                *d /= sum;
            }
        }
        let shape = vx.shape().to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Softmax(x), Tensor::from_parts(shape, out), rg))
    }

    /// Per-row normalization to zero mean / unit variance, then `gain * x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, AutogradError> {
        let d = self.value(x).cols();
        if self.value(gain).numel() != d || self.value(bias).numel() != d {
            return Err(mismatch("layer_norm", format!("affine parameters must have {} values", d)));
        }
        let eps = T::lit(eps);
        let dt = T::from_usize(d).unwrap();
        let vx = self.value(x);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let rows = vx.rows();
        let mut xhat = vec![T::zero(); vx.numel()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); vx.numel()];
        for r in 0..rows {
            let row = &vx.data()[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dt;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dt;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let shape = vx.shape().to_vec();
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            Tensor::from_parts(shape, out),
            rg,
        ))
    }

    /// Rotary embedding applied independently inside each of `heads`
    /// column blocks; row index is the position.
    pub fn rope(&mut self, x: Var, heads: usize, base: f64) -> Result<Var, AutogradError> {
        let (n, d) = self.shape2(x, "rope")?;
        if heads == 0 || d % heads != 0 {
            return Err(mismatch("rope", format!("{} columns over {} heads", d, heads)));
        }
        let hd = d / heads;
        if !hd.is_multiple_of(2) {
            return Err(AutogradError::OddDimension(hd));
        }
        let (cos, sin) = rope_tables::<T>(n, hd, base);
        let out = rope_apply(self.value(x).data(), n, d, hd, &cos, &sin, false);
        let rg = self.rg(&[x]);
        Ok(self.push(
            Op::Rope {
                x,
                heads,
                cos: cos.into(),
                sin: sin.into(),
            },
            Tensor::from_parts(vec![n, d], out),
            rg,
        ))
    }

    /// Scaled dot-product attention, fused over `heads` column blocks.
    ///
    /// Keys that the mask disallows for a row are never read for that row.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        mask: &AttnMask,
    ) -> Result<Var, AutogradError> {
        let (n, d) = self.shape2(q, "attention")?;
        for &t in &[k, v] {
            if self.shape2(t, "attention")? != (n, d) {
                return Err(mismatch(
                    "attention",
                    format!("q {:?} vs {:?}", self.value(q).shape(), self.value(t).shape()),
                ));
            }
        }
        if heads == 0 || d % heads != 0 {
            return Err(mismatch("attention", format!("{} columns over {} heads", d, heads)));
        }
        let rows = Arc::new(key_rows(mask, n)?);
        let hd = d / heads;
        let scale = T::one() / T::from_usize(hd).unwrap().sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let nnz = rows.keys.len();
        let mut weights = vec![T::zero(); heads * nnz];
        let mut out = vec![T::zero(); n * d];
        for h in 0..heads {
            let off = h * hd;
            for i in 0..n {
                let (lo, hi) = (rows.row_ptr[i], rows.row_ptr[i + 1]);
                let w = &mut weights[h * nnz + lo..h * nnz + hi];
                let qi = &qd[i * d + off..i * d + off + hd];
                let mut max = T::neg_infinity();
                for (slot, &j) in w.iter_mut().zip(&rows.keys[lo..hi]) {
                    let kj = &kd[j * d + off..j * d + off + hd];
                    let s = dot(qi, kj) * scale;
                    *slot = s;
                    if s > max {
                        max = s;
                    }
                }
                let mut sum = T::zero();
                for slot in w.iter_mut() {
                    *slot = (*slot - max).exp();
                    sum += *slot;
                }
                let oi = &mut out[i * d + off..i * d + off + hd];
                for (slot, &j) in w.iter_mut().zip(&rows.keys[lo..hi]) {
                    *slot /= sum;
                    let vj = &vd[j * d + off..j * d + off + hd];
                    for (o, &vv) in oi.iter_mut().zip(vj) {
                        *o += *slot * vv;
                    }
                }
            }
        }
        let rg = self.rg(&[q, k, v]);
        Ok(self.push(
            Op::Attention {
                q,
                k,
                v,
                heads,
                rows,
                weights,
            },
            Tensor::from_parts(vec![n, d], out),
            rg,
        ))
    }

    /// Arithmetic mean over the rows flagged valid; returns a `[1, d]` row.
    pub fn mean_pool(&mut self, x: Var, valid: &[bool]) -> Result<Var, AutogradError> {
        let (n, _) = self.shape2(x, "mean_pool")?;
        if valid.len() != n {
            return Err(mismatch("mean_pool", format!("{} flags for {} rows", valid.len(), n)));
        }
        let rows: Vec<usize> = (0..n).filter(|&i| valid[i]).collect();
        if rows.is_empty() {
            return Err(AutogradError::AllMasked);
        }
        self.segment_mean(x, vec![rows])
    }

    /// One output row per segment: the mean of the listed input rows.
    pub fn segment_mean(&mut self, x: Var, segments: Vec<Vec<usize>>) -> Result<Var, AutogradError> {
        let (n, d) = self.shape2(x, "segment_mean")?;
        if segments.is_empty() {
            return Err(mismatch("segment_mean", "no segments".into()));
        }
        let src = self.value(x).data();
        let mut out = vec![T::zero(); segments.len() * d];
        for (s, rows) in segments.iter().enumerate() {
            if rows.is_empty() {
                return Err(AutogradError::AllMasked);
            }
            let inv = T::one() / T::from_usize(rows.len()).unwrap();
            let o = &mut out[s * d..(s + 1) * d];
            for &r in rows {
                if r >= n {
                    return Err(mismatch("segment_mean", format!("row {} of {}", r, n)));
                }
                for (a, &b) in o.iter_mut().zip(&src[r * d..(r + 1) * d]) {
                    *a += b;
                }
            }
            for a in o.iter_mut() {
                *a *= inv;
            }
        }
        let rg = self.rg(&[x]);
        let shape = vec![segments.len(), d];
        Ok(self.push(Op::SegmentMean { x, segments }, Tensor::from_parts(shape, out), rg))
    }

    /// Gathers rows of `table` by id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutogradError> {
        let (v, d) = self.shape2(table, "embedding")?;
        if ids.is_empty() {
            return Err(mismatch("embedding", "empty id list".into()));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(mismatch("embedding", format!("id {} of {}", id, v)));
            }
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            Tensor::from_parts(vec![ids.len(), d], out),
            rg,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AutogradError> {
        let (n, d) = self.shape2(x, "slice_rows")?;
        if len == 0 || start + len > n {
            return Err(mismatch("slice_rows", format!("[{}, {}) of {}", start, start + len, n)));
        }
        let out = self.value(x).data()[start * d..(start + len) * d].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Op::SliceRows { x, start }, Tensor::from_parts(vec![len, d], out), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutogradError> {
        let first = *parts.first().ok_or_else(|| mismatch("concat_rows", "nothing to concat".into()))?;
        let d = self.shape2(first, "concat_rows")?.1;
        let mut out = Vec::new();
        let mut n = 0;
        for &p in parts {
            let (r, c) = self.shape2(p, "concat_rows")?;
            if c != d {
                return Err(mismatch("concat_rows", format!("{} vs {} columns", c, d)));
            }
            out.extend_from_slice(self.value(p).data());
            n += r;
        }
        let rg = self.rg(parts);
        Ok(self.push(Op::ConcatRows(parts.to_vec()), Tensor::from_parts(vec![n, d], out), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AutogradError> {
        let (n, d) = self.shape2(x, "slice_cols")?;
        if len == 0 || start + len > d {
            return Err(mismatch("slice_cols", format!("[{}, {}) of {}", start, start + len, d)));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&src[r * d + start..r * d + start + len]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Op::SliceCols { x, start }, Tensor::from_parts(vec![n, len], out), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutogradError> {
        let first = *parts.first().ok_or_else(|| mismatch("concat_cols", "nothing to concat".into()))?;
        let n = self.shape2(first, "concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.shape2(p, "concat_cols")?;
            if r != n {
                return Err(mismatch("concat_cols", format!("{} vs {} rows", r, n)));
            }
            widths.push(c);
        }
        let d: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * d);
        for r in 0..n {
            for (&p, &c) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * c..(r + 1) * c]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Op::ConcatCols(parts.to_vec()), Tensor::from_parts(vec![n, d], out), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        let rg = self.rg(&[x]);
        self.push(Op::Sum(x), Tensor::scalar(s), rg)
    }

    /// Class-weighted binary cross-entropy on probabilities, normalized by
    /// the total example weight. Probabilities are clamped to
    /// `[1e-7, 1 - 1e-7]`; clamped entries pass no gradient.
    pub fn weighted_bce(&mut self, p: Var, labels: &[bool], weights: [f64; 2]) -> Result<Var, AutogradError> {
        let vp = self.value(p);
        if vp.numel() != labels.len() {
            return Err(mismatch(
                "weighted_bce",
                format!("{} probabilities, {} labels", vp.numel(), labels.len()),
            ));
        }
        let lo = T::lit(1e-7);
        let hi = T::one() - lo;
        let w = [T::lit(weights[0]), T::lit(weights[1])];
        let total: T = labels.iter().map(|&y| w[y as usize]).sum();
        if total <= T::zero() {
            return Err(mismatch("weighted_bce", "total example weight is zero".into()));
        }
        let mut loss = T::zero();
        let mut coef = Vec::with_capacity(labels.len());
        for (&pi, &y) in vp.data().iter().zip(labels) {
            let wi = w[y as usize] / total;
            let clamped = pi.max(lo).min(hi);
            let inside = pi >= lo && pi <= hi;
            if y {
                loss -= wi * clamped.ln();
                coef.push(if inside { -wi / clamped } else { T::zero() });
            } else {
                loss -= wi * (T::one() - clamped).ln();
                coef.push(if inside { wi / (T::one() - clamped) } else { T::zero() });
            }
        }
        let rg = self.rg(&[p]);
        Ok(self.push(Op::WeightedBce { p, coef }, Tensor::scalar(loss), rg))
    }

    /// Accumulated gradient of a node after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::from_parts(self.value(v).shape().to_vec(), g.clone()))
    }

    /// Clears gradient slots so that `backward` may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Reverse sweep from a scalar `loss`, filling gradient slots of every
    /// node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutogradError> {
        if self.backward_done {
            return Err(AutogradError::DoubleBackward);
        }
        if self.value(loss).numel() != 1 {
            return Err(AutogradError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn slot(&mut self, v: Var) -> Option<&mut Vec<T>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let n = node.value.numel();
        Some(self.grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn backprop_node(&mut self, idx: usize, g: &[T]) {
        // The op is moved out temporarily so that parent slots can be
        // borrowed mutably while reading cached forward data.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(&self.nodes[a.0].value);
                let n = self.nodes[b.0].value.cols();
                if self.nodes[a.0].requires_grad {
                    let bv = self.nodes[b.0].value.clone();
                    let da = self.slot(*a).unwrap();
                    T::gemm(m, n, k, T::one(), g, n as isize, 1, bv.data(), 1, n as isize, T::one(), da, k as isize, 1);
                }
                if self.nodes[b.0].requires_grad {
                    let av = self.nodes[a.0].value.clone();
                    let db = self.slot(*b).unwrap();
                    T::gemm(k, m, n, T::one(), av.data(), 1, k as isize, g, n as isize, 1, T::one(), db, n as isize, 1);
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = dims(&self.nodes[a.0].value);
                let n = self.nodes[b.0].value.rows();
                if self.nodes[a.0].requires_grad {
                    let bv = self.nodes[b.0].value.clone();
                    let da = self.slot(*a).unwrap();
                    T::gemm(m, n, k, T::one(), g, n as isize, 1, bv.data(), k as isize, 1, T::one(), da, k as isize, 1);
                }
                if self.nodes[b.0].requires_grad {
                    let av = self.nodes[a.0].value.clone();
                    let db = self.slot(*b).unwrap();
                    T::gemm(n, m, k, T::one(), g, 1, n as isize, av.data(), k as isize, 1, T::one(), db, k as isize, 1);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = dims(&self.nodes[a.0].value);
                if let Some(da) = self.slot(*a) {
                    for i in 0..m {
                        for j in 0..n {
                            da[i * n + j] += g[j * m + i];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for (v, sign) in [(*a, T::one()), (*b, T::one())] {
                    if let Some(d) = self.slot(v) {
                        axpy(d, g, sign);
                    }
                }
            }
            Op::Sub(a, b) => {
                for (v, sign) in [(*a, T::one()), (*b, -T::one())] {
                    if let Some(d) = self.slot(v) {
                        axpy(d, g, sign);
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let bv = self.nodes[b.0].value.clone();
                    let da = self.slot(*a).unwrap();
                    for ((d, &gi), &bi) in da.iter_mut().zip(g).zip(bv.data()) {
                        *d += gi * bi;
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let av = self.nodes[a.0].value.clone();
                    let db = self.slot(*b).unwrap();
                    for ((d, &gi), &ai) in db.iter_mut().zip(g).zip(av.data()) {
                        *d += gi * ai;
                    }
                }
            }
            Op::AddRow(x, bias) => {
                if let Some(dx) = self.slot(*x) {
                    axpy(dx, g, T::one());
                }
                if let Some(db) = self.slot(*bias) {
                    let c = db.len();
                    for row in g.chunks(c) {
                        axpy(db, row, T::one());
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(dx) = self.slot(*x) {
                    axpy(dx, g, *c);
                }
            }
            Op::MulConst(x, f) => {
                if let Some(dx) = self.slot(*x) {
                    for ((d, &gi), &fi) in dx.iter_mut().zip(g).zip(f.iter()) {
                        *d += gi * fi;
                    }
                }
            }
            Op::Gelu(x) => {
                if self.nodes[x.0].requires_grad {
                    let xv = self.nodes[x.0].value.clone();
                    let dx = self.slot(*x).unwrap();
                    for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv.data()) {
                        *d += gi * gelu_grad(xi);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.nodes[x.0].requires_grad {
                    let yv = self.nodes[idx].value.clone();
                    let dx = self.slot(*x).unwrap();
                    for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(yv.data()) {
                        *d += gi * yi * (T::one() - yi);
                    }
                }
            }
            Op::Softmax(x) => {
                if self.nodes[x.0].requires_grad {
                    let yv = self.nodes[idx].value.clone();
                    let n = yv.cols();
                    let dx = self.slot(*x).unwrap();
                    for ((y, gr), d) in yv.data().chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                        let inner: T = y.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for j in 0..n {
                            d[j] += y[j] * (gr[j] - inner);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = self.nodes[x.0].value.cols();
                if let Some(dg) = self.slot(*gain) {
                    for (row_g, row_h) in g.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            dg[j] += row_g[j] * row_h[j];
                        }
                    }
                }
                if let Some(db) = self.slot(*bias) {
                    for row_g in g.chunks(d) {
                        axpy(db, row_g, T::one());
                    }
                }
                if self.nodes[x.0].requires_grad {
                    let gv = self.nodes[gain.0].value.clone();
                    let dt = T::from_usize(d).unwrap();
                    let dx = self.slot(*x).unwrap();
                    let mut dh = vec![T::zero(); d];
                    for (r, ((row_g, row_h), out)) in
                        g.chunks(d).zip(xhat.chunks(d)).zip(dx.chunks_mut(d)).enumerate()
                    {
                        let mut mean_dh = T::zero();
                        let mut mean_dhh = T::zero();
                        for j in 0..d {
                            dh[j] = row_g[j] * gv.data()[j];
                            mean_dh += dh[j];
                            mean_dhh += dh[j] * row_h[j];
                        }
                        mean_dh /= dt;
                        mean_dhh /= dt;
                        for j in 0..d {
                            out[j] += rstd[r] * (dh[j] - mean_dh - row_h[j] * mean_dhh);
                        }
                    }
                }
            }
            Op::Rope { x, heads, cos, sin } => {
                let (n, d) = dims(&self.nodes[x.0].value);
                let hd = d / heads;
                if let Some(dx) = self.slot(*x) {
                    let back = rope_apply(g, n, d, hd, cos, sin, true);
                    axpy(dx, &back, T::one());
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                rows,
                weights,
            } => self.attention_backward(*q, *k, *v, *heads, rows, weights, g),
            Op::SegmentMean { x, segments } => {
                let d = self.nodes[x.0].value.cols();
                if let Some(dx) = self.slot(*x) {
                    for (s, rows) in segments.iter().enumerate() {
                        let inv = T::one() / T::from_usize(rows.len()).unwrap();
                        let gs = &g[s * d..(s + 1) * d];
                        for &r in rows {
                            axpy(&mut dx[r * d..(r + 1) * d], gs, inv);
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = self.nodes[table.0].value.cols();
                if let Some(dt) = self.slot(*table) {
                    for (i, &id) in ids.iter().enumerate() {
                        axpy(&mut dt[id * d..(id + 1) * d], &g[i * d..(i + 1) * d], T::one());
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let d = self.nodes[x.0].value.cols();
                if let Some(dx) = self.slot(*x) {
                    axpy(&mut dx[start * d..start * d + g.len()], g, T::one());
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.numel();
                    if let Some(dp) = self.slot(p) {
                        axpy(dp, &g[off..off + len], T::one());
                    }
                    off += len;
                }
            }
            Op::SliceCols { x, start } => {
                let d = self.nodes[x.0].value.cols();
                let len = self.nodes[idx].value.cols();
                if let Some(dx) = self.slot(*x) {
                    for (r, gr) in g.chunks(len).enumerate() {
                        axpy(&mut dx[r * d + start..r * d + start + len], gr, T::one());
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let d = self.nodes[idx].value.cols();
                let mut off = 0;
                for &p in parts {
                    let c = self.nodes[p.0].value.cols();
                    if let Some(dp) = self.slot(p) {
                        for (r, dr) in dp.chunks_mut(c).enumerate() {
                            axpy(dr, &g[r * d + off..r * d + off + c], T::one());
                        }
                    }
                    off += c;
                }
            }
            Op::Sum(x) => {
                let g0 = g[0];
                if let Some(dx) = self.slot(*x) {
                    for d in dx.iter_mut() {
                        *d += g0;
                    }
                }
            }
            Op::WeightedBce { p, coef } => {
                let g0 = g[0];
                if let Some(dp) = self.slot(*p) {
                    for (d, &c) in dp.iter_mut().zip(coef) {
                        *d += g0 * c;
                    }
                }
            }
        }
        self.nodes[idx].op = op;
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        rows: &KeyRows,
        weights: &[T],
        g: &[T],
    ) {
        let (n, d) = dims(&self.nodes[q.0].value);
        let hd = d / heads;
        let scale = T::one() / T::from_usize(hd).unwrap().sqrt();
        let nnz = rows.keys.len();
        let (qv, kv, vv) = (
            self.nodes[q.0].value.clone(),
            self.nodes[k.0].value.clone(),
            self.nodes[v.0].value.clone(),
        );
        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut ds = Vec::new();
        for h in 0..heads {
            let off = h * hd;
            for i in 0..n {
                let (lo, hi) = (rows.row_ptr[i], rows.row_ptr[i + 1]);
                let w = &weights[h * nnz + lo..h * nnz + hi];
                let keys = &rows.keys[lo..hi];
                let gi = &g[i * d + off..i * d + off + hd];
                ds.clear();
                let mut inner = T::zero();
                for (&wj, &j) in w.iter().zip(keys) {
                    let vj = &vv.data()[j * d + off..j * d + off + hd];
                    let dw = dot(gi, vj);
                    ds.push(dw);
                    inner += wj * dw;
                    axpy(&mut dv[j * d + off..j * d + off + hd], gi, wj);
                }
                let qi = &qv.data()[i * d + off..i * d + off + hd];
                for ((&wj, &j), dsj) in w.iter().zip(keys).zip(ds.iter_mut()) {
                    *dsj = wj * (*dsj - inner) * scale;
                    let kj = &kv.data()[j * d + off..j * d + off + hd];
                    axpy(&mut dq[i * d + off..i * d + off + hd], kj, *dsj);
                    axpy(&mut dk[j * d + off..j * d + off + hd], qi, *dsj);
                }
            }
        }
        for (var, buf) in [(q, dq), (k, dk), (v, dv)] {
            if let Some(slot) = self.slot(var) {
                axpy(slot, &buf, T::one());
            }
        }
    }
}

fn dims<T: Scalar>(t: &Tensor<T>) -> (usize, usize) {
    (t.rows(), t.cols())
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy<T: Scalar>(dst: &mut [T], src: &[T], alpha: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu_fwd<T: Scalar>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * x * x)
}

/// `cos`/`sin` tables of shape `[n, head_dim / 2]` for angle `m · base^(-2i/head_dim)`.
pub(crate) fn rope_tables<T: Scalar>(n: usize, hd: usize, base: f64) -> (Vec<T>, Vec<T>) {
    let half = hd / 2;
    let mut cos = Vec::with_capacity(n * half);
    let mut sin = Vec::with_capacity(n * half);
    for m in 0..n {
        for i in 0..half {
            let theta = base.powf(-2.0 * i as f64 / hd as f64);
            let angle = m as f64 * theta;
            cos.push(T::lit(angle.cos()));
            sin.push(T::lit(angle.sin()));
        }
    }
    (cos, sin)
}

fn rope_apply<T: Scalar>(src: &[T], n: usize, d: usize, hd: usize, cos: &[T], sin: &[T], inverse: bool) -> Vec<T> {
    let half = hd / 2;
    let mut out = vec![T::zero(); n * d];
    for m in 0..n {
        for h in 0..d / hd {
            let base = m * d + h * hd;
            for i in 0..half {
                let (c, s) = (cos[m * half + i], sin[m * half + i]);
                let s = if inverse { -s } else { s };
                let (x0, x1) = (src[base + 2 * i], src[base + 2 * i + 1]);
                out[base + 2 * i] = x0 * c - x1 * s;
                out[base + 2 * i + 1] = x0 * s + x1 * c;
            }
        }
    }
    out
}

fn key_rows(mask: &AttnMask, n: usize) -> Result<KeyRows, AutogradError> {
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut keys = Vec::new();
    row_ptr.push(0);
    match mask {
        AttnMask::Full => {
            for _ in 0..n {
                keys.extend(0..n);
                row_ptr.push(keys.len());
            }
        }
        AttnMask::Dense { size, allowed } => {
            if *size != n || allowed.len() != n * n {
                return Err(mismatch("attention", format!("mask for {} rows on {} rows", size, n)));
            }
            for i in 0..n {
                if !allowed[i * n + i] {
                    return Err(AutogradError::BadMask(format!("row {} cannot see itself", i)));
                }
                keys.extend((0..n).filter(|&j| allowed[i * n + j]));
                row_ptr.push(keys.len());
            }
        }
        AttnMask::Blocks(blocks) => {
            let mut owner = vec![usize::MAX; n];
            for (b, &(start, len)) in blocks.iter().enumerate() {
                if start + len > n {
                    return Err(mismatch("attention", format!("block [{}, {}) of {}", start, start + len, n)));
                }
                for o in &mut owner[start..start + len] {
                    *o = b;
                }
            }
            for i in 0..n {
                let b = owner[i];
                if b == usize::MAX {
                    return Err(AutogradError::BadMask(format!("row {} outside every block", i)));
                }
                let (start, len) = blocks[b];
                keys.extend(start..start + len);
                row_ptr.push(keys.len());
            }
        }
    }
    Ok(KeyRows { row_ptr, keys })
}
