use super::kernels;
use super::Tensor;
use crate::error::{Error, Result};

/// Probabilities below this are clamped inside the cross-entropy log.
pub const CE_CLAMP: f64 = 1e-12;

const GELU_COEF: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Binary elementwise kinds accepted by [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary {
        kind: Elementwise,
        a: Var,
        b: Var,
        b_scalar: bool,
    },
    Scale(Var, f64),
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
        rows: usize,
        inp: usize,
        out: usize,
    },
    Reshape(Var),
    Permute {
        a: Var,
        src: Vec<usize>,
    },
    Softmax {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        cols: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
        cols: usize,
    },
    Narrow {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
        start: usize,
        width: usize,
    },
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        p: Var,
        targets: Vec<f64>,
        n: usize,
    },
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Ordered record of primitive operations for one forward/backward step.
///
/// Nodes are appended in execution order, so every node's inputs precede it
/// and a single reverse sweep visits each node once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Copies `v`'s value into a new constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the backward root w.r.t. a leaf, once backward has run.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &'static str) -> Result<Var> {
        value.ensure_finite(name)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    /// Elementwise binary op. `b` must match `a`'s shape or hold a single element.
    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let b_scalar = va.shape() != vb.shape();
        if b_scalar && !vb.is_scalar() {
            return Err(self.mismatch("elementwise", a, b));
        }
        let f: fn(f64, f64) -> f64 = match kind {
            Elementwise::Add => |x, y| x + y,
            Elementwise::Sub => |x, y| x - y,
            Elementwise::Mul => |x, y| x * y,
        };
        let data: Vec<f64> = if b_scalar {
            let s = vb.data()[0];
            va.data().iter().map(|&x| f(x, s)).collect()
        } else {
            va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect()
        };
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(value, Op::Binary { kind, a, b, b_scalar }, &[a, b], "elementwise")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Mul, a, b)
    }

    /// Multiplies by a fixed scalar.
    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let va = self.value(a);
        let value = Tensor::from_parts(va.shape().to_vec(), va.data().iter().map(|x| x * s).collect());
        self.push(value, Op::Scale(a, s), &[a], "scale")
    }

    /// `[m×k] · [k×n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        self.matmul_impl(a, b, 1, m, k, n, false, vec![m, n])
    }

    /// Batched product `[B×m×k] · [B×k×n]`, or `[B×m×k] · [B×n×k]ᵀ` when `trans_b`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(self.mismatch("batch_matmul", a, b));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(self.mismatch("batch_matmul", a, b));
        }
        self.matmul_impl(a, b, batch, m, k, n, trans_b, vec![batch, m, n])
    }

    #[allow(clippy::too_many_arguments)]
    fn matmul_impl(
        &mut self,
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
        shape: Vec<usize>,
    ) -> Result<Var> {
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; batch * m * n];
        for t in 0..batch {
            let a_t = &da[t * m * k..(t + 1) * m * k];
            let b_t = &db[t * k * n..(t + 1) * k * n];
            let c_t = &mut out[t * m * n..(t + 1) * m * n];
            if trans_b {
                kernels::gemm_nt(a_t, b_t, c_t, m, k, n);
            } else {
                kernels::gemm_nn(a_t, b_t, c_t, m, k, n);
            }
        }
        let op = Op::MatMul {
            a,
            b,
            batch,
            m,
            k,
            n,
            trans_b,
        };
        self.push(Tensor::from_parts(shape, out), op, &[a, b], "matmul")
    }

    /// Affine map over the last axis: `x · w + b` with `w: [in×out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        let inp = *sx.last().unwrap();
        if sw.len() != 2 || sw[0] != inp {
            return Err(self.mismatch("linear", x, w));
        }
        let out = sw[1];
        if sb != [out] {
            return Err(self.mismatch("linear", w, b));
        }
        let rows = self.value(x).numel() / inp;
        let mut shape = sx.to_vec();
        *shape.last_mut().unwrap() = out;
        let bias = self.value(b).data();
        let mut data: Vec<f64> = Vec::with_capacity(rows * out);
        for _ in 0..rows {
            data.extend_from_slice(bias);
        }
        kernels::gemm_nn(self.value(x).data(), self.value(w).data(), &mut data, rows, inp, out);
        let op = Op::Linear {
            x,
            w,
            b,
            rows,
            inp,
            out,
        };
        self.push(Tensor::from_parts(shape, data), op, &[x, w, b], "linear")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        self.push(value, Op::Reshape(a), &[a], "reshape")
    }

    /// Reorders axes: output axis `d` is input axis `perm[d]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a);
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Config(format!("invalid permutation {perm:?} for shape {shape:?}")));
        }
        let (out_shape, src) = kernels::permute_index(shape, perm);
        let data_in = self.value(a).data();
        let data = src.iter().map(|&s| data_in[s]).collect();
        self.push(Tensor::from_parts(out_shape, data), Op::Permute { a, src }, &[a], "permute")
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidAxis {
                axis,
                rank: shape.len(),
            });
        }
        let (outer, len, inner) = kernels::axis_split(&shape, axis);
        let mut out = vec![0.0; outer * len * inner];
        kernels::softmax(self.value(a).data(), &mut out, outer, len, inner);
        let op = Op::Softmax { a, outer, len, inner };
        self.push(Tensor::from_parts(shape, out), op, &[a], "softmax")
    }

    /// Normalizes each last-axis row to zero mean and unit (biased) variance, then
    /// applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let cols = *self.shape(x).last().unwrap();
        if self.shape(gain) != [cols] {
            return Err(self.mismatch("layer_norm", x, gain));
        }
        if self.shape(bias) != [cols] {
            return Err(self.mismatch("layer_norm", x, bias));
        }
        if eps <= 0.0 {
            return Err(Error::Config("layer_norm eps must be positive".into()));
        }
        let vx = self.value(x);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = vx.numel() / cols;
        let mut xhat = Vec::with_capacity(vx.numel());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(vx.numel());
        for row in vx.data().chunks_exact(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (c, v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * g[c] + b[c]);
            }
        }
        let shape = vx.shape().to_vec();
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            cols,
            xhat,
            inv_std,
        };
        self.push(Tensor::from_parts(shape, out), op, &[x, gain, bias], "layer_norm")
    }

    /// GELU, tanh form: `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| gelu(x)).collect();
        let value = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(value, Op::Gelu(a), &[a], "gelu")
    }

    /// Rows of a 2-D `table` selected by `ids`, giving `[ids.len() × cols]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 {
            return Err(Error::Config(format!("gather_rows needs a 2-D table, got {shape:?}")));
        }
        let (rows, cols) = (shape[0], shape[1]);
        if let Some(&bad) = ids.iter().find(|&&id| id >= rows) {
            return Err(Error::TokenOutOfRange { id: bad, vocab: rows });
        }
        let t = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            data.extend_from_slice(&t[id * cols..(id + 1) * cols]);
        }
        let op = Op::GatherRows {
            table,
            ids: ids.to_vec(),
            cols,
        };
        self.push(Tensor::from_parts(vec![ids.len(), cols], data), op, &[table], "gather_rows")
    }

    /// Slice `start..start+width` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, width: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidAxis {
                axis,
                rank: shape.len(),
            });
        }
        if width == 0 || start + width > shape[axis] {
            return Err(Error::Config(format!(
                "narrow {start}..{} out of range for extent {}",
                start + width,
                shape[axis]
            )));
        }
        let (outer, len, inner) = kernels::axis_split(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = (o * len + start) * inner;
            data.extend_from_slice(&src[base..base + width * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = width;
        let op = Op::Narrow {
            a,
            outer,
            len,
            inner,
            start,
            width,
        };
        self.push(Tensor::from_parts(out_shape, data), op, &[a], "narrow")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let s = va.data().iter().sum::<f64>() / va.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a], "mean")
    }

    /// `−(1/n) Σᵢ yᵢ·log(max(pᵢ, 1e-12))` for probabilities `p: [n×C]` and
    /// simplex-valued targets `y: [n×C]`. Targets carry no gradient.
    pub fn cross_entropy(&mut self, p: Var, targets: &Tensor) -> Result<Var> {
        let sp = self.shape(p);
        if sp.len() != 2 || sp != targets.shape() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: sp.to_vec(),
                right: targets.shape().to_vec(),
            });
        }
        let (n, c) = (sp[0], sp[1]);
        check_simplex(targets.data(), c, 1e-6)?;
        let probs = self.value(p).data();
        let total: f64 = probs
            .iter()
            .zip(targets.data())
            .filter(|(_, &y)| y != 0.0)
            .map(|(&q, &y)| -y * q.max(CE_CLAMP).ln())
            .sum();
        let op = Op::CrossEntropy {
            p,
            targets: targets.data().to_vec(),
            n,
        };
        self.push(Tensor::scalar(total / n as f64), op, &[p], "cross_entropy")
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("mse", a, b));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let s = va.data().iter().zip(vb.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / va.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mse(a, b), &[a, b], "mse")
    }

    /// Reverse sweep from a scalar `root`, leaving `d root / d leaf` on every
    /// leaf that requires a gradient. A tape supports one backward pass.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::DoubleBackward);
        }
        if !self.value(root).is_scalar() {
            return Err(Error::NonScalarRoot(self.shape(root).to_vec()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let shape = self.nodes[i].value.shape().to_vec();
                let t = Tensor::from_parts(shape, g);
                t.ensure_finite("backward")?;
                self.nodes[i].grad = Some(t);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        let wants = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            f(slot);
        };
        match &nodes[i].op {
            Op::Leaf => {}
            &Op::Binary { kind, a, b, b_scalar } => {
                let (xa, xb) = (val(a), val(b));
                let bval = |j: usize| if b_scalar { xb[0] } else { xb[j] };
                acc(a, &mut |ga| match kind {
                    Elementwise::Add | Elementwise::Sub => add_into(ga, g),
                    Elementwise::Mul => {
                        for (j, gj) in ga.iter_mut().enumerate() {
                            *gj += g[j] * bval(j);
                        }
                    }
                });
                acc(b, &mut |gb| {
                    let contrib = |j: usize| match kind {
                        Elementwise::Add => g[j],
                        Elementwise::Sub => -g[j],
                        Elementwise::Mul => g[j] * xa[j],
                    };
                    if b_scalar {
                        gb[0] += (0..g.len()).map(contrib).sum::<f64>();
                    } else {
                        for (j, gj) in gb.iter_mut().enumerate() {
                            *gj += contrib(j);
                        }
                    }
                });
            }
            &Op::Scale(a, s) => acc(a, &mut |ga| {
                for (x, gj) in ga.iter_mut().zip(g) {
                    *x += s * gj;
                }
            }),
            &Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                trans_b,
            } => {
                let (xa, xb) = (val(a), val(b));
                acc(a, &mut |ga| {
                    for t in 0..batch {
                        let gc = &g[t * m * n..(t + 1) * m * n];
                        let bt = &xb[t * k * n..(t + 1) * k * n];
                        let gat = &mut ga[t * m * k..(t + 1) * m * k];
                        if trans_b {
                            kernels::gemm_nn(gc, bt, gat, m, n, k);
                        } else {
                            kernels::gemm_nt(gc, bt, gat, m, n, k);
                        }
                    }
                });
                acc(b, &mut |gb| {
                    for t in 0..batch {
                        let gc = &g[t * m * n..(t + 1) * m * n];
                        let at = &xa[t * m * k..(t + 1) * m * k];
                        let gbt = &mut gb[t * k * n..(t + 1) * k * n];
                        if trans_b {
                            kernels::gemm_tn(gc, at, gbt, m, n, k);
                        } else {
                            kernels::gemm_tn(at, gc, gbt, m, k, n);
                        }
                    }
                });
            }
            &Op::Linear {
                x,
                w,
                b,
                rows,
                inp,
                out,
            } => {
                acc(x, &mut |gx| kernels::gemm_nt(g, val(w), gx, rows, out, inp));
                acc(w, &mut |gw| kernels::gemm_tn(val(x), g, gw, rows, inp, out));
                acc(b, &mut |gb| {
                    for row in g.chunks_exact(out) {
                        add_into(gb, row);
                    }
                });
            }
            &Op::Reshape(a) => acc(a, &mut |ga| add_into(ga, g)),
            Op::Permute { a, src } => acc(*a, &mut |ga| {
                for (&s, gj) in src.iter().zip(g) {
                    ga[s] += gj;
                }
            }),
            &Op::Softmax { a, outer, len, inner } => {
                let y = nodes[i].value.data();
                acc(a, &mut |ga| {
                    for o in 0..outer {
                        for s in 0..inner {
                            let idx = |t: usize| (o * len + t) * inner + s;
                            let dot: f64 = (0..len).map(|t| g[idx(t)] * y[idx(t)]).sum();
                            for t in 0..len {
                                ga[idx(t)] += y[idx(t)] * (g[idx(t)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                cols,
                xhat,
                inv_std,
            } => {
                let cols = *cols;
                let gv = val(*gain);
                acc(*gain, &mut |gg| {
                    for (gr, hr) in g.chunks_exact(cols).zip(xhat.chunks_exact(cols)) {
                        for c in 0..cols {
                            gg[c] += gr[c] * hr[c];
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for gr in g.chunks_exact(cols) {
                        add_into(gb, gr);
                    }
                });
                if wants(*x) {
                    acc(*x, &mut |gx| {
                        let nf = cols as f64;
                        for (r, ((gr, hr), gxr)) in g
                            .chunks_exact(cols)
                            .zip(xhat.chunks_exact(cols))
                            .zip(gx.chunks_exact_mut(cols))
                            .enumerate()
                        {
                            let mut sum_d = 0.0;
                            let mut sum_dh = 0.0;
                            for c in 0..cols {
                                let d = gr[c] * gv[c];
                                sum_d += d;
                                sum_dh += d * hr[c];
                            }
                            let is = inv_std[r];
                            for c in 0..cols {
                                let d = gr[c] * gv[c];
                                gxr[c] += is / nf * (nf * d - sum_d - hr[c] * sum_dh);
                            }
                        }
                    });
                }
            }
            &Op::Gelu(a) => {
                let xa = val(a);
                acc(a, &mut |ga| {
                    for ((gj, &x), &gi) in ga.iter_mut().zip(xa).zip(g) {
                        *gj += gi * gelu_grad(x);
                    }
                });
            }
            Op::GatherRows { table, ids, cols } => acc(*table, &mut |gt| {
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id * cols..(id + 1) * cols], &g[r * cols..(r + 1) * cols]);
                }
            }),
            &Op::Narrow {
                a,
                outer,
                len,
                inner,
                start,
                width,
            } => acc(a, &mut |ga| {
                for o in 0..outer {
                    let base = (o * len + start) * inner;
                    let gbase = o * width * inner;
                    add_into(&mut ga[base..base + width * inner], &g[gbase..gbase + width * inner]);
                }
            }),
            &Op::Sum(a) => acc(a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            &Op::Mean(a) => {
                let scale = g[0] / nodes[a.0].value.numel() as f64;
                acc(a, &mut |ga| ga.iter_mut().for_each(|x| *x += scale));
            }
            Op::CrossEntropy { p, targets, n } => {
                let probs = val(*p);
                let scale = g[0] / *n as f64;
                acc(*p, &mut |gp| {
                    for ((gj, &q), &y) in gp.iter_mut().zip(probs).zip(targets) {
                        if y != 0.0 && q > CE_CLAMP {
                            *gj -= scale * y / q;
                        }
                    }
                });
            }
            &Op::Mse(a, b) => {
                let (xa, xb) = (val(a), val(b));
                let scale = 2.0 * g[0] / xa.len() as f64;
                acc(a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += scale * (xa[j] - xb[j]);
                    }
                });
                acc(b, &mut |gb| {
                    for j in 0..gb.len() {
                        gb[j] -= scale * (xa[j] - xb[j]);
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x)
}

/// Every `cols`-wide row must be nonnegative and sum to one within `tol`.
pub(crate) fn check_simplex(data: &[f64], cols: usize, tol: f64) -> Result<()> {
    for (row, r) in data.chunks_exact(cols).enumerate() {
        if let Some(v) = r.iter().find(|&&v| v < -tol) {
            return Err(Error::NotOnSimplex {
                row,
                reason: format!("has negative entry {v}"),
            });
        }
        let s: f64 = r.iter().sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::NotOnSimplex {
                row,
                reason: format!("sums to {s}"),
            });
        }
    }
    Ok(())
}
