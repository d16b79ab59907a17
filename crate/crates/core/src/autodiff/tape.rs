use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    ConcatCols(Vec<Var>),
    LeakyRelu(Var, f64),
    Relu(Var),
    LayerNorm { x: Var, scale: Var, shift: Var, normalized: Vec<f64>, inv_std: Vec<f64> },
    SoftmaxGroups { x: Var, groups: Vec<usize> },
    Sigmoid(Var),
    Log(Var),
    MeanRows(Var),
    GatherRows { x: Var, index: Vec<usize> },
    SegmentSum { x: Var, segments: Vec<usize> },
    Reshape(Var),
    WeightedBce { logits: Var, targets: Vec<f64>, pos_weight: f64 },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of a define-by-run forward pass.
///
/// Nodes are stored in creation order, which is a topological order of the
/// computation DAG; [`Tape::backward`] walks it once in reverse.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` if `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn dim_err(msg: String) -> Error {
    Error::Dimension(msg)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Elementwise class-weighted binary cross-entropy on a logit, in the
/// overflow-free softplus form.
pub fn weighted_bce_value(logit: f64, target: f64, pos_weight: f64) -> f64 {
    pos_weight * target * softplus(-logit) + (1.0 - target) * softplus(logit)
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var) -> Result<(usize, usize)> {
        self.value(v).dims2()
    }

    /// Records a constant input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Records a trainable parameter; its gradient lands in the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a)?;
        let (k2, n) = self.dims(b)?;
        if k != k2 {
            return Err(dim_err(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let row = &bv[p * n..(p + 1) * n];
                for (o, y) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += x * y;
                }
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// Elementwise sum; `b` may also be a `1 × cols` row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let (bm, bn) = self.dims(b)?;
        if bn != n || (bm != m && bm != 1) {
            return Err(dim_err(format!("add {m}x{n} with {bm}x{bn}")));
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let out = (0..m * n)
            .map(|i| av[i] + if bm == 1 { bv[i % n] } else { bv[i] })
            .collect();
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Elementwise product; `b` may also be a `rows × 1` column broadcast over the columns of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        let (bm, bn) = self.dims(b)?;
        if bm != m || (bn != n && bn != 1) {
            return Err(dim_err(format!("mul {m}x{n} with {bm}x{bn}")));
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let out = (0..m * n)
            .map(|i| av[i] * if bn == 1 { bv[i / n] } else { bv[i] })
            .collect();
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let src = self.value(a);
        let t = Tensor::new(src.shape().to_vec(), src.values().iter().map(|v| v * c).collect())?;
        Ok(self.push(t, Op::Scale(a, c)))
    }

    /// Sum of all entries, as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).values().iter().sum();
        let t = Tensor::scalar(s)?;
        Ok(self.push(t, Op::Sum(a)))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let (m, _) = self.dims(*first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = self.dims(*p)?;
            if pm != m {
                return Err(dim_err(format!("concat rows {pm} != {m}")));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (p, w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).values()[i * w..(i + 1) * w]);
            }
        }
        let t = Tensor::matrix(m, total, out)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec())))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let src = self.value(a);
        let out = src.values().iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
        let t = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(t, Op::LeakyRelu(a, slope)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let out = src.values().iter().map(|&v| v.max(0.0)).collect();
        let t = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Relu(a)))
    }

    /// Per-row normalization followed by the `1 × cols` affine `scale`, `shift`.
    pub fn layer_norm(&mut self, x: Var, scale: Var, shift: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.dims(x)?;
        for p in [scale, shift] {
            if self.dims(p)? != (1, n) {
                return Err(dim_err(format!("layer-norm affine must be 1x{n}")));
            }
        }
        let xv = self.value(x).values();
        let g = self.value(scale).values();
        let b = self.value(shift).values();
        let mut normalized = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                normalized[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::LayerNorm { x, scale, shift, normalized, inv_std }))
    }

    /// Softmax taken separately over each group of entries; `groups[k]` is
    /// the group id of flat element `k`. Max-subtracted per group.
    pub fn softmax_groups(&mut self, x: Var, groups: &[usize]) -> Result<Var> {
        let src = self.value(x);
        if groups.len() != src.numel() {
            return Err(dim_err(format!(
                "softmax groups cover {} of {} entries",
                groups.len(),
                src.numel()
            )));
        }
        let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
        let mut max = vec![f64::NEG_INFINITY; n_groups];
        for (v, &g) in src.values().iter().zip(groups) {
            max[g] = max[g].max(*v);
        }
        let exps: Vec<f64> = src.values().iter().zip(groups).map(|(v, &g)| (v - max[g]).exp()).collect();
        let mut denom = vec![0.0; n_groups];
        for (e, &g) in exps.iter().zip(groups) {
            denom[g] += e;
        }
        let out = exps.iter().zip(groups).map(|(e, &g)| e / denom[g]).collect();
        let t = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(t, Op::SoftmaxGroups { x, groups: groups.to_vec() }))
    }

    /// Softmax over all entries.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let groups = vec![0; self.value(x).numel()];
        self.softmax_groups(x, &groups)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let out = src.values().iter().map(|&v| sigmoid(v)).collect();
        let t = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Sigmoid(a)))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let out = src.values().iter().map(|v| v.ln()).collect();
        let t = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Log(a)))
    }

    /// Column means, as a `1 × cols` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a)?;
        if m == 0 {
            return Err(dim_err("mean over zero rows".into()));
        }
        let v = self.value(a).values();
        let mut out = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                out[j] += v[i * n + j];
            }
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
        let t = Tensor::matrix(1, n, out)?;
        Ok(self.push(t, Op::MeanRows(a)))
    }

    /// Output row `k` is input row `index[k]`.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(x)?;
        if let Some(bad) = index.iter().find(|&&r| r >= m) {
            return Err(dim_err(format!("gather row {bad} of {m}")));
        }
        let v = self.value(x).values();
        let mut out = Vec::with_capacity(index.len() * n);
        for &r in index {
            out.extend_from_slice(&v[r * n..(r + 1) * n]);
        }
        let t = Tensor::matrix(index.len(), n, out)?;
        Ok(self.push(t, Op::GatherRows { x, index: index.to_vec() }))
    }

    /// Sums input rows into `n_segments` output rows; row `k` goes to `segments[k]`.
    pub fn segment_sum(&mut self, x: Var, segments: &[usize], n_segments: usize) -> Result<Var> {
        let (m, n) = self.dims(x)?;
        if segments.len() != m {
            return Err(dim_err(format!("{} segment ids for {m} rows", segments.len())));
        }
        if let Some(bad) = segments.iter().find(|&&s| s >= n_segments) {
            return Err(dim_err(format!("segment id {bad} of {n_segments}")));
        }
        let v = self.value(x).values();
        let mut out = vec![0.0; n_segments * n];
        for (k, &s) in segments.iter().enumerate() {
            for j in 0..n {
                out[s * n + j] += v[k * n + j];
            }
        }
        let t = Tensor::matrix(n_segments, n, out)?;
        Ok(self.push(t, Op::SegmentSum { x, segments: segments.to_vec() }))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = Tensor::new(shape, self.value(a).values().to_vec())?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Elementwise weighted BCE of `logits` against 0/1 `targets`, positive
    /// class weighted by `pos_weight`. Output has the shape of `logits`.
    pub fn weighted_bce(&mut self, logits: Var, targets: &[f64], pos_weight: f64) -> Result<Var> {
        let src = self.value(logits);
        if targets.len() != src.numel() {
            return Err(dim_err(format!("{} targets for {} logits", targets.len(), src.numel())));
        }
        let out = src
            .values()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| weighted_bce_value(z, y, pos_weight))
            .collect();
        let t = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(t, Op::WeightedBce { logits, targets: targets.to_vec(), pos_weight }))
    }

    /// Reverse pass from a scalar `loss`. Parameter gradients are added to
    /// the store's gradient slots; all node gradients are returned.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl Fn(usize) -> f64) {
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            for (i, s) in slot.iter_mut().enumerate() {
                *s += f(i);
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = node.value.values();
            match &node.op {
                Op::Input => {}
                Op::Param(id) => store.accumulate_grad(*id, &dy),
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(*a)?;
                    let (_, n) = self.dims(*b)?;
                    let av = self.value(*a).values();
                    let bv = self.value(*b).values();
                    acc(&mut grads, *a, m * k, |ik| {
                        let (i, p) = (ik / k, ik % k);
                        (0..n).map(|j| dy[i * n + j] * bv[p * n + j]).sum()
                    });
                    acc(&mut grads, *b, k * n, |pj| {
                        let (p, j) = (pj / n, pj % n);
                        (0..m).map(|i| av[i * k + p] * dy[i * n + j]).sum()
                    });
                }
                Op::Add(a, b) => {
                    let (m, n) = self.dims(*a)?;
                    acc(&mut grads, *a, m * n, |i| dy[i]);
                    let (bm, _) = self.dims(*b)?;
                    if bm == 1 && m != 1 {
                        acc(&mut grads, *b, n, |j| (0..m).map(|i| dy[i * n + j]).sum());
                    } else {
                        acc(&mut grads, *b, m * n, |i| dy[i]);
                    }
                }
                Op::Mul(a, b) => {
                    let (m, n) = self.dims(*a)?;
                    let (_, bn) = self.dims(*b)?;
                    let av = self.value(*a).values();
                    let bv = self.value(*b).values();
                    if bn == 1 && n != 1 {
                        acc(&mut grads, *a, m * n, |i| dy[i] * bv[i / n]);
                        acc(&mut grads, *b, m, |i| (0..n).map(|j| dy[i * n + j] * av[i * n + j]).sum());
                    } else {
                        acc(&mut grads, *a, m * n, |i| dy[i] * bv[i]);
                        acc(&mut grads, *b, m * n, |i| dy[i] * av[i]);
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, dy.len(), |i| c * dy[i]),
                Op::Sum(a) => {
                    let n = self.value(*a).numel();
                    acc(&mut grads, *a, n, |_| dy[0]);
                }
                Op::ConcatCols(parts) => {
                    let (m, total) = node.value.dims2()?;
                    let mut offset = 0;
                    for p in parts {
                        let (_, w) = self.dims(*p)?;
                        acc(&mut grads, *p, m * w, |k| dy[(k / w) * total + offset + k % w]);
                        offset += w;
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    let x = self.value(*a).values();
                    acc(&mut grads, *a, x.len(), |i| if x[i] > 0.0 { dy[i] } else { slope * dy[i] });
                }
                Op::Relu(a) => {
                    let x = self.value(*a).values();
                    acc(&mut grads, *a, x.len(), |i| if x[i] > 0.0 { dy[i] } else { 0.0 });
                }
                Op::LayerNorm { x, scale, shift, normalized, inv_std } => {
                    let (m, n) = self.dims(*x)?;
                    let g = self.value(*scale).values();
                    acc(&mut grads, *scale, n, |j| (0..m).map(|i| dy[i * n + j] * normalized[i * n + j]).sum());
                    acc(&mut grads, *shift, n, |j| (0..m).map(|i| dy[i * n + j]).sum());
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let dh: Vec<f64> = (0..n).map(|j| dy[i * n + j] * g[j]).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = (0..n).map(|j| dh[j] * normalized[i * n + j]).sum();
                        for j in 0..n {
                            dx[i * n + j] = inv_std[i] / n as f64
                                * (n as f64 * dh[j] - sum_dh - normalized[i * n + j] * sum_dh_h);
                        }
                    }
                    acc(&mut grads, *x, m * n, |i| dx[i]);
                }
                Op::SoftmaxGroups { x, groups } => {
                    let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
                    let mut dot = vec![0.0; n_groups];
                    for (k, &g) in groups.iter().enumerate() {
                        dot[g] += dy[k] * y[k];
                    }
                    acc(&mut grads, *x, y.len(), |k| y[k] * (dy[k] - dot[groups[k]]));
                }
                Op::Sigmoid(a) => acc(&mut grads, *a, y.len(), |i| dy[i] * y[i] * (1.0 - y[i])),
                Op::Log(a) => {
                    let x = self.value(*a).values();
                    acc(&mut grads, *a, x.len(), |i| dy[i] / x[i]);
                }
                Op::MeanRows(a) => {
                    let (m, n) = self.dims(*a)?;
                    acc(&mut grads, *a, m * n, |k| dy[k % n] / m as f64);
                }
                Op::GatherRows { x, index } => {
                    let (m, n) = self.dims(*x)?;
                    let mut dx = vec![0.0; m * n];
                    for (k, &r) in index.iter().enumerate() {
                        for j in 0..n {
                            dx[r * n + j] += dy[k * n + j];
                        }
                    }
                    acc(&mut grads, *x, m * n, |i| dx[i]);
                }
                Op::SegmentSum { x, segments } => {
                    let (m, n) = self.dims(*x)?;
                    acc(&mut grads, *x, m * n, |k| dy[segments[k / n] * n + k % n]);
                }
                Op::Reshape(a) => acc(&mut grads, *a, dy.len(), |i| dy[i]),
                Op::WeightedBce { logits, targets, pos_weight } => {
                    let z = self.value(*logits).values();
                    acc(&mut grads, *logits, z.len(), |i| {
                        let s = sigmoid(z[i]);
                        dy[i] * (-pos_weight * targets[i] * (1.0 - s) + (1.0 - targets[i]) * s)
                    });
                }
            }
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }
}

/// Numerically stable logistic function.
pub fn logistic(z: f64) -> f64 {
    sigmoid(z)
}
