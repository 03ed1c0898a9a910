//! Differentiable operations. Forward rules live on [`Tape`]; the matching
//! reverse rules are in [`backward_node`].

use crate::error::{AutodiffError, Result};
use crate::scalar::Scalar;
use crate::tape::{GradSink, Op, Tape, Var};
use crate::tensor::Tensor;

fn shape_err<R>(msg: String) -> Result<R> {
    Err(AutodiffError::Shape(msg))
}

/// Per-channel statistics of the batch seen by a training-mode batch norm.
/// `var` is the unbiased estimate, as used for running averages.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Reorders `[pre, a, b, inner]` into `[pre, b, a, inner]`.
fn swap_blocks<T: Copy>(src: &[T], pre: usize, a: usize, b: usize, inner: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for p in 0..pre {
        let base = p * a * b * inner;
        for j in 0..b {
            for i in 0..a {
                let at = base + (i * b + j) * inner;
                out.extend_from_slice(&src[at..at + inner]);
            }
        }
    }
    out
}

impl<T: Scalar> Tape<T> {
    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!("{what}: shapes {:?} and {:?} differ", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.check_same(a, b, what)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, op))
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&p| f(p)).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape as input");
        self.push(value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |p, q| p - q, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |p, q| p * q, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "div", |p, q| p / q, Op::Div(a, b))
    }

    /// Elementwise maximum; on ties the gradient goes to `a`.
    pub fn max2(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "max2", |p, q| if p >= q { p } else { q }, Op::Max2(a, b))
    }

    /// Elementwise minimum; on ties the gradient goes to `a`.
    pub fn min2(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "min2", |p, q| if p <= q { p } else { q }, Op::Min2(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        self.map(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        self.map(x, |v| v + c, Op::Shift(x))
    }

    /// Absolute value with subgradient 0 at 0.
    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, |v| v.abs(), Op::Abs(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s: T = v.data().iter().copied().sum();
        let m = s / T::of(v.numel().max(1) as f64);
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    fn last_rows(&self, x: Var, what: &str) -> Result<(Vec<usize>, usize)> {
        let shape = self.shape(x);
        match shape.split_last() {
            Some((&k, lead)) if k > 0 => Ok((lead.to_vec(), k)),
            _ => shape_err(format!("{what}: needs a non-empty last axis, got {shape:?}")),
        }
    }

    /// Sums out the last axis.
    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        let (lead, k) = self.last_rows(x, "sum_last")?;
        let data = self.value(x).data().chunks(k).map(|r| r.iter().copied().sum()).collect();
        let value = Tensor::new(lead, data)?;
        Ok(self.push(value, Op::SumLast(x)))
    }

    /// Euclidean norm over the last axis.
    pub fn l2norm_last(&mut self, x: Var) -> Result<Var> {
        let (lead, k) = self.last_rows(x, "l2norm_last")?;
        let data = self
            .value(x)
            .data()
            .chunks(k)
            .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect();
        let value = Tensor::new(lead, data)?;
        Ok(self.push(value, Op::L2NormLast(x)))
    }

    /// Sum of the elementwise product.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    /// Position-wise linear map over the last axis: `x[..., d_in] . w[d_in, d_out] (+ b[d_out])`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (lead, d_in) = self.last_rows(x, "linear")?;
        let ws = self.shape(w);
        if ws.len() != 2 || ws[0] != d_in {
            return shape_err(format!("linear: weight {ws:?} does not map width {d_in}"));
        }
        let d_out = ws[1];
        if let Some(b) = b {
            if self.shape(b) != [d_out] {
                return shape_err(format!("linear: bias {:?} is not [{d_out}]", self.shape(b)));
            }
        }
        let rows = self.value(x).numel() / d_in;
        let mut out = vec![T::zero(); rows * d_out];
        T::gemm(
            rows,
            d_in,
            d_out,
            self.value(x).data(),
            (d_in as isize, 1),
            self.value(w).data(),
            (d_out as isize, 1),
            &mut out,
            T::zero(),
        );
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_mut(d_out) {
                for (o, &c) in row.iter_mut().zip(bias) {
                    *o = *o + c;
                }
            }
        }
        let mut shape = lead;
        shape.push(d_out);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    /// Max over the second-to-last axis: `[..., S, D] -> [..., D]`.
    /// Ties resolve to the lowest index.
    pub fn max_over_set(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || shape[shape.len() - 2] == 0 {
            return shape_err(format!("max_over_set: needs a non-empty set axis, got {shape:?}"));
        }
        let (s, d) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let groups = self.value(x).numel() / (s * d).max(1);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(groups * d);
        let mut argmax = vec![0u32; groups * d];
        for (g, block) in src.chunks(s * d).enumerate().take(if d == 0 { 0 } else { groups }) {
            out.extend_from_slice(&block[..d]);
            let (best, arg) = (&mut out[g * d..], &mut argmax[g * d..(g + 1) * d]);
            for (i, row) in block.chunks(d).enumerate().skip(1) {
                for c in 0..d {
                    if row[c] > best[c] {
                        best[c] = row[c];
                        arg[c] = i as u32;
                    }
                }
            }
        }
        let mut out_shape = shape[..shape.len() - 2].to_vec();
        out_shape.push(d);
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::MaxOverSet { x, argmax }))
    }

    /// Copies each feature vector `set` times: `[..., D] -> [..., set, D]`.
    pub fn repeat_over_set(&mut self, x: Var, set: usize) -> Result<Var> {
        let (lead, d) = self.last_rows(x, "repeat_over_set")?;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(src.len() * set);
        for row in src.chunks(d) {
            for _ in 0..set {
                out.extend_from_slice(row);
            }
        }
        let mut shape = lead;
        shape.extend([set, d]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::RepeatOverSet { x, set }))
    }

    /// Concatenates along the last axis; all other extents must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_last: nothing to concatenate".into());
        };
        let (lead, _) = self.last_rows(first, "concat_last")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (l, w) = self.last_rows(p, "concat_last")?;
            if l != lead {
                return shape_err(format!(
                    "concat_last: leading shape {l:?} does not match {lead:?}"
                ));
            }
            widths.push(w);
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::ConcatLast(parts.to_vec())))
    }

    /// Exchanges axes `axis` and `axis + 1`.
    pub fn swap_axes(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis + 1 >= shape.len() {
            return shape_err(format!("swap_axes: axis {axis} out of range for {shape:?}"));
        }
        let pre: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 2..].iter().product();
        let out = swap_blocks(self.value(x).data(), pre, shape[axis], shape[axis + 1], inner);
        let mut new_shape = shape;
        new_shape.swap(axis, axis + 1);
        let value = Tensor::new(new_shape, out)?;
        Ok(self.push(value, Op::SwapAxes { x, axis }))
    }

    /// Concatenates along the first axis.
    pub fn cat0(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("cat0: nothing to concatenate".into());
        };
        let tail = self.shape(first).get(1..).unwrap_or_default().to_vec();
        if self.shape(first).is_empty() {
            return shape_err("cat0: scalars have no first axis".into());
        }
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                return shape_err(format!("cat0: shape {s:?} does not stack with [_, {tail:?}]"));
            }
            rows += s[0];
            out.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Cat0(parts.to_vec())))
    }

    /// Rows `start..start + len` of the first axis.
    pub fn narrow0(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || start + len > shape[0] {
            return shape_err(format!("narrow0: {start}..{} out of range for {shape:?}", start + len));
        }
        let row: usize = shape[1..].iter().product();
        let out = self.value(x).data()[start * row..(start + len) * row].to_vec();
        let mut new_shape = shape;
        new_shape[0] = len;
        let value = Tensor::new(new_shape, out)?;
        Ok(self.push(value, Op::Narrow0 { x, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    fn bn_check(&self, x: Var, gamma: Var, beta: Var) -> Result<usize> {
        let (_, c) = self.last_rows(x, "batch_norm")?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return shape_err(format!(
                "batch_norm: affine parameters {:?}/{:?} do not match {c} channels",
                self.shape(gamma),
                self.shape(beta)
            ));
        }
        Ok(c)
    }

    fn bn_apply(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], inv_std: Vec<T>, train: bool) -> Var {
        let c = mean.len();
        let src = self.value(x);
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); src.numel()];
        let mut out = vec![T::zero(); src.numel()];
        for ((row, h), o) in src.data().chunks(c).zip(xhat.chunks_mut(c)).zip(out.chunks_mut(c)) {
            for k in 0..c {
                h[k] = (row[k] - mean[k]) * inv_std[k];
                o[k] = g[k] * h[k] + b[k];
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out).expect("same shape as input");
        self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train })
    }

    /// Batch norm over the last (channel) axis using statistics of the
    /// current batch, pooled over every leading position.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats<T>)> {
        let c = self.bn_check(x, gamma, beta)?;
        let src = self.value(x).data();
        let rows = src.len() / c;
        let rows_t = T::of(rows as f64);
        let mut mean = vec![T::zero(); c];
        for row in src.chunks(c) {
            for k in 0..c {
                mean[k] = mean[k] + row[k];
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / rows_t);
        let mut var = vec![T::zero(); c];
        for row in src.chunks(c) {
            for k in 0..c {
                let d = row[k] - mean[k];
                var[k] = var[k] + d * d;
            }
        }
        var.iter_mut().for_each(|v| *v = *v / rows_t);
        let eps = T::of(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let unbiased = if rows > 1 {
            let f = rows_t / T::of((rows - 1) as f64);
            var.iter().map(|&v| v * f).collect()
        } else {
            var
        };
        let out = self.bn_apply(x, gamma, beta, &mean, inv_std, true);
        Ok((out, BatchStats { mean, var: unbiased }))
    }

    /// Batch norm with fixed (running) statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: f64) -> Result<Var> {
        let c = self.bn_check(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return shape_err(format!("batch_norm: running statistics do not match {c} channels"));
        }
        let eps = T::of(eps);
        let inv_std = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        Ok(self.bn_apply(x, gamma, beta, mean, inv_std, false))
    }

    /// Parametric ReLU with a single learned slope.
    pub fn prelu(&mut self, x: Var, alpha: Var) -> Result<Var> {
        if self.value(alpha).numel() != 1 {
            return shape_err(format!("prelu: slope must have one element, got {:?}", self.shape(alpha)));
        }
        let a = self.value(alpha).item();
        Ok(self.map(x, |v| if v > T::zero() { v } else { a * v }, Op::Prelu { x, alpha }))
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&mut self, x: Var) -> Result<Var> {
        let (_, k) = self.last_rows(x, "softmax_last")?;
        let src = self.value(x);
        let mut out = Vec::with_capacity(src.numel());
        for row in src.data().chunks(k) {
            let top = row.iter().copied().fold(T::neg_infinity(), T::max);
            let start = out.len();
            out.extend(row.iter().map(|&v| (v - top).exp()));
            let z: T = out[start..].iter().copied().sum();
            out[start..].iter_mut().for_each(|v| *v = *v / z);
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(value, Op::SoftmaxLast(x)))
    }

    /// Batched matrix product `[..., P, Q] x [..., Q, R] -> [..., P, R]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = sa.len() >= 2
            && sa.len() == sb.len()
            && sa[..sa.len() - 2] == sb[..sb.len() - 2]
            && sa[sa.len() - 1] == sb[sb.len() - 2];
        if !ok {
            return shape_err(format!("bmm: cannot multiply {sa:?} by {sb:?}"));
        }
        let (p, q, r) = (sa[sa.len() - 2], sa[sa.len() - 1], sb[sb.len() - 1]);
        let batch: usize = sa[..sa.len() - 2].iter().product();
        let mut out = vec![T::zero(); batch * p * r];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for t in 0..batch {
            T::gemm(
                p,
                q,
                r,
                &da[t * p * q..(t + 1) * p * q],
                (q as isize, 1),
                &db[t * q * r..(t + 1) * q * r],
                (r as isize, 1),
                &mut out[t * p * r..(t + 1) * p * r],
                T::zero(),
            );
        }
        let mut shape = sa[..sa.len() - 2].to_vec();
        shape.extend([p, r]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Bmm(a, b)))
    }
}

/// Pushes the gradient `g` of node `k` to its inputs.
pub(crate) fn backward_node<T: Scalar>(tape: &Tape<T>, k: usize, g: &[T], sink: &mut GradSink<'_, T>) {
    let val = |v: Var| tape.value(v).data();
    let node = &tape.nodes[k];
    match &node.op {
        Op::Constant | Op::Variable | Op::Param(_) => {}
        Op::Add(a, b) => {
            sink.add(*a, g.iter().copied());
            sink.add(*b, g.iter().copied());
        }
        Op::Sub(a, b) => {
            sink.add(*a, g.iter().copied());
            sink.add(*b, g.iter().map(|&v| -v));
        }
        Op::Mul(a, b) => {
            sink.add(*a, g.iter().zip(val(*b)).map(|(&d, &y)| d * y));
            sink.add(*b, g.iter().zip(val(*a)).map(|(&d, &x)| d * x));
        }
        Op::Div(a, b) => {
            let (x, y) = (val(*a), val(*b));
            sink.add(*a, g.iter().zip(y).map(|(&d, &q)| d / q));
            sink.add(*b, g.iter().zip(x.iter().zip(y)).map(|(&d, (&p, &q))| -d * p / (q * q)));
        }
        Op::Scale(x, c) => sink.add(*x, g.iter().map(|&d| d * *c)),
        Op::Shift(x) | Op::Reshape(x) => sink.add(*x, g.iter().copied()),
        Op::Abs(x) => sink.add(
            *x,
            g.iter().zip(val(*x)).map(|(&d, &v)| {
                if v > T::zero() {
                    d
                } else if v < T::zero() {
                    -d
                } else {
                    T::zero()
                }
            }),
        ),
        Op::Max2(a, b) | Op::Min2(a, b) => {
            let is_max = matches!(node.op, Op::Max2(..));
            let (x, y) = (val(*a), val(*b));
            let to_a: Vec<bool> = x.iter().zip(y).map(|(&p, &q)| if is_max { p >= q } else { p <= q }).collect();
            sink.add(*a, g.iter().zip(&to_a).map(|(&d, &t)| if t { d } else { T::zero() }));
            sink.add(*b, g.iter().zip(&to_a).map(|(&d, &t)| if t { T::zero() } else { d }));
        }
        Op::Sum(x) => {
            let n = tape.value(*x).numel();
            sink.add(*x, std::iter::repeat_n(g[0], n));
        }
        Op::Mean(x) => {
            let n = tape.value(*x).numel();
            let d = g[0] / T::of(n.max(1) as f64);
            sink.add(*x, std::iter::repeat_n(d, n));
        }
        Op::SumLast(x) => {
            let kk = tape.value(*x).last_dim();
            sink.add(*x, g.iter().flat_map(|&d| std::iter::repeat_n(d, kk)));
        }
        Op::L2NormLast(x) => {
            let kk = tape.value(*x).last_dim();
            let norms = node.value.data();
            let src = val(*x);
            sink.add(
                *x,
                (0..src.len()).map(|i| {
                    let r = i / kk;
                    if norms[r] > T::zero() {
                        g[r] * src[i] / norms[r]
                    } else {
                        T::zero()
                    }
                }),
            );
        }
        Op::Linear { x, w, b } => {
            let wv = tape.value(*w);
            let (d_in, d_out) = (wv.shape()[0], wv.shape()[1]);
            let rows = g.len() / d_out.max(1);
            if let Some(dx) = sink.buf(*x) {
                T::gemm(rows, d_out, d_in, g, (d_out as isize, 1), wv.data(), (1, d_out as isize), dx, T::one());
            }
            if let Some(dw) = sink.buf(*w) {
                T::gemm(d_in, rows, d_out, val(*x), (1, d_in as isize), g, (d_out as isize, 1), dw, T::one());
            }
            if let Some(b) = b {
                if let Some(db) = sink.buf(*b) {
                    for row in g.chunks(d_out) {
                        for (acc, &d) in db.iter_mut().zip(row) {
                            *acc = *acc + d;
                        }
                    }
                }
            }
        }
        Op::MaxOverSet { x, argmax } => {
            let shape = tape.shape(*x);
            let (s, d) = (shape[shape.len() - 2], shape[shape.len() - 1]);
            if let Some(dx) = sink.buf(*x) {
                for (grp, (gs, args)) in g.chunks(d.max(1)).zip(argmax.chunks(d.max(1))).enumerate() {
                    let block = &mut dx[grp * s * d..(grp + 1) * s * d];
                    for (c, (&dg, &i)) in gs.iter().zip(args).enumerate() {
                        block[i as usize * d + c] = block[i as usize * d + c] + dg;
                    }
                }
            }
        }
        Op::RepeatOverSet { x, set } => {
            let d = tape.value(*x).last_dim();
            if let Some(dx) = sink.buf(*x) {
                for (r, block) in g.chunks(set * d).enumerate() {
                    for row in block.chunks(d) {
                        for c in 0..d {
                            dx[r * d + c] = dx[r * d + c] + row[c];
                        }
                    }
                }
            }
        }
        Op::ConcatLast(parts) => {
            let widths: Vec<usize> = parts.iter().map(|&p| tape.value(p).last_dim()).collect();
            let total: usize = widths.iter().sum();
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                if let Some(dp) = sink.buf(p) {
                    for (acc, row) in dp.chunks_mut(w.max(1)).zip(g.chunks(total)) {
                        for (a, &d) in acc.iter_mut().zip(&row[offset..offset + w]) {
                            *a = *a + d;
                        }
                    }
                }
                offset += w;
            }
        }
        Op::SwapAxes { x, axis } => {
            let shape = tape.shape(*x);
            let pre: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 2..].iter().product();
            // g is laid out with the two axes already exchanged.
            let back = swap_blocks(g, pre, shape[axis + 1], shape[*axis], inner);
            sink.add(*x, back);
        }
        Op::Cat0(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = tape.value(p).numel();
                sink.add(p, g[offset..offset + n].iter().copied());
                offset += n;
            }
        }
        Op::Narrow0 { x, start } => {
            let shape = tape.shape(*x);
            let row: usize = shape[1..].iter().product();
            if let Some(dx) = sink.buf(*x) {
                for (acc, &d) in dx[start * row..].iter_mut().zip(g) {
                    *acc = *acc + d;
                }
            }
        }
        Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
            let c = inv_std.len();
            let rows = g.len() / c;
            let gam = val(*gamma);
            let mut sum_dy = vec![T::zero(); c];
            let mut sum_dy_xhat = vec![T::zero(); c];
            for (grow, hrow) in g.chunks(c).zip(xhat.chunks(c)) {
                for j in 0..c {
                    sum_dy[j] = sum_dy[j] + grow[j];
                    sum_dy_xhat[j] = sum_dy_xhat[j] + grow[j] * hrow[j];
                }
            }
            if let Some(dx) = sink.buf(*x) {
                let n = T::of(rows as f64);
                let scale: Vec<T> = (0..c).map(|j| gam[j] * inv_std[j]).collect();
                for ((acc, grow), hrow) in dx.chunks_mut(c).zip(g.chunks(c)).zip(xhat.chunks(c)) {
                    for j in 0..c {
                        let d = if *train {
                            scale[j] / n * (n * grow[j] - sum_dy[j] - hrow[j] * sum_dy_xhat[j])
                        } else {
                            scale[j] * grow[j]
                        };
                        acc[j] = acc[j] + d;
                    }
                }
            }
            sink.add(*gamma, sum_dy_xhat);
            sink.add(*beta, sum_dy);
        }
        Op::Prelu { x, alpha } => {
            let src = val(*x);
            let a = tape.value(*alpha).item();
            sink.add(*x, g.iter().zip(src).map(|(&d, &v)| if v > T::zero() { d } else { a * d }));
            if sink.wants(*alpha) {
                let da: T = g.iter().zip(src).filter(|(_, &v)| v <= T::zero()).map(|(&d, &v)| d * v).sum();
                sink.add(*alpha, [da]);
            }
        }
        Op::SoftmaxLast(x) => {
            let kk = node.value.last_dim();
            let y = node.value.data();
            let mut contribution = Vec::with_capacity(y.len());
            for (grow, yrow) in g.chunks(kk).zip(y.chunks(kk)) {
                let inner: T = grow.iter().zip(yrow).map(|(&d, &p)| d * p).sum();
                contribution.extend(grow.iter().zip(yrow).map(|(&d, &p)| p * (d - inner)));
            }
            sink.add(*x, contribution);
        }
        Op::Bmm(a, b) => {
            let (sa, sb) = (tape.shape(*a), tape.shape(*b));
            let (p, q, r) = (sa[sa.len() - 2], sa[sa.len() - 1], sb[sb.len() - 1]);
            let batch = g.len() / (p * r).max(1);
            let (av, bv) = (val(*a), val(*b));
            if let Some(da) = sink.buf(*a) {
                for t in 0..batch {
                    T::gemm(
                        p,
                        r,
                        q,
                        &g[t * p * r..(t + 1) * p * r],
                        (r as isize, 1),
                        &bv[t * q * r..(t + 1) * q * r],
                        (1, r as isize),
                        &mut da[t * p * q..(t + 1) * p * q],
                        T::one(),
                    );
                }
            }
            if let Some(db) = sink.buf(*b) {
                for t in 0..batch {
                    T::gemm(
                        q,
                        p,
                        r,
                        &av[t * p * q..(t + 1) * p * q],
                        (1, q as isize),
                        &g[t * p * r..(t + 1) * p * r],
                        (r as isize, 1),
                        &mut db[t * q * r..(t + 1) * q * r],
                        T::one(),
                    );
                }
            }
        }
    }
}
