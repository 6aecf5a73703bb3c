//! The autodiff tape. Forward ops run eagerly and append nodes; backward
//! walks nodes in reverse. Accumulation orders are fixed (ascending row and
//! node indices), so whole runs are bit-for-bit reproducible.

use super::params::{ParamId, ParamSet};
use super::{Elem, Tensor};
use crate::error::{Error, Result};

/// Handle to a tape node. Inputs always have smaller indices than the nodes
/// consuming them, which is what lets backward split the gradient buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    Relu(Var),
    Abs(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    IndexRows { x: Var, idx: Vec<u32> },
    ScatterSum { x: Var, idx: Vec<u32> },
    MeanOver(Vec<Var>),
    MeanRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var },
    Softmax(Var),
    Sum(Var),
    BceWithLogits { logits: Var, targets: Var },
    CrossEntropy { logits: Var, targets: Vec<u32> },
}

#[derive(Debug, Clone)]
struct Node<E> {
    op: Op,
    value: Tensor<E>,
}

#[derive(Debug)]
pub struct Tape<E> {
    nodes: Vec<Node<E>>,
}

/// Epsilon inside the layer-norm denominator; public so reference
/// implementations in tests can match it exactly.
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn shape_err<E: Elem>(op: &'static str, lhs: &Tensor<E>, rhs: &Tensor<E>) -> Error {
    Error::shape(op, lhs.shape_string(), rhs.shape_string())
}

/// Sigmoid that never overflows: branches on the sign of the logit.
pub fn stable_sigmoid<E: Elem>(z: E) -> E {
    if z >= E::zero() {
        E::one() / (E::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (E::one() + e)
    }
}

/// (n,k) x (k,m) -> (n,m)
fn matmul<E: Elem>(a: &Tensor<E>, b: &Tensor<E>) -> Tensor<E> {
    let (n, k) = a.shape();
    let m = b.cols();
    let mut out = Tensor::zeros(n, m);
    for i in 0..n {
        for p in 0..k {
            let a_ip = a.get(i, p);
            if a_ip == E::zero() {
                continue;
            }
            let brow = b.row(p);
            let orow = out.row_mut(i);
            for j in 0..m {
                orow[j] += a_ip * brow[j];
            }
        }
    }
    out
}

/// a^T x b: (k,n) x (k,m) -> (n,m)
fn matmul_at_b<E: Elem>(a: &Tensor<E>, b: &Tensor<E>) -> Tensor<E> {
    let (k, n) = a.shape();
    let m = b.cols();
    let mut out = Tensor::zeros(n, m);
    for p in 0..k {
        let arow = a.row(p);
        let brow = b.row(p);
        for i in 0..n {
            let a_pi = arow[i];
            if a_pi == E::zero() {
                continue;
            }
            let orow = out.row_mut(i);
            for j in 0..m {
                orow[j] += a_pi * brow[j];
            }
        }
    }
    out
}

/// a x b^T: (n,k) x (m,k) -> (n,m)
fn matmul_a_bt<E: Elem>(a: &Tensor<E>, b: &Tensor<E>) -> Tensor<E> {
    let (n, k) = a.shape();
    let m = b.rows();
    let mut out = Tensor::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        for j in 0..m {
            let brow = b.row(j);
            let mut acc = E::zero();
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            out.set(i, j, acc);
        }
    }
    out
}

fn add_into<E: Elem>(dst: &mut Tensor<E>, src: &Tensor<E>) {
    debug_assert_eq!(dst.shape(), src.shape());
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += *s;
    }
}

impl<E: Elem> Tape<E> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor<E>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<E>) -> Var {
        self.push(Op::Const, value)
    }

    /// Copies a parameter onto the tape; its gradient is recoverable through
    /// [`Tape::param_grads`]. The same id may be inserted more than once
    /// (shared weights); gradients sum.
    pub fn param(&mut self, params: &ParamSet<E>, id: ParamId) -> Var {
        self.push(Op::Param(id), params.get(id).clone())
    }

    /// y = x w (+ b broadcast over rows); w is (fan_in, fan_out), b (1, fan_out).
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.rows() {
            return Err(shape_err("linear", xv, wv));
        }
        let mut y = matmul(xv, wv);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != (1, wv.cols()) {
                return Err(shape_err("linear bias", wv, bv));
            }
            for i in 0..y.rows() {
                let brow: Vec<E> = bv.row(0).to_vec();
                for (yj, bj) in y.row_mut(i).iter_mut().zip(brow) {
                    *yj += bj;
                }
            }
        }
        Ok(self.push(Op::Linear { x, w, b }, y))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        for v in y.data_mut() {
            if *v < E::zero() {
                *v = E::zero();
            }
        }
        self.push(Op::Relu(x), y)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        for v in y.data_mut() {
            *v = v.abs();
        }
        self.push(Op::Abs(x), y)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        for v in y.data_mut() {
            *v = stable_sigmoid(*v);
        }
        self.push(Op::Sigmoid(x), y)
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: fn(E, E) -> E,
    ) -> Result<Tensor<E>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av, bv));
        }
        let mut y = av.clone();
        for (yv, bv) in y.data_mut().iter_mut().zip(bv.data()) {
            *yv = f(*yv, *bv);
        }
        Ok(y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.elementwise("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.elementwise("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.elementwise("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), y))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let c = E::from_f64(factor);
        let mut y = self.value(x).clone();
        for v in y.data_mut() {
            *v = *v * c;
        }
        self.push(Op::Scale(x, factor), y)
    }

    /// Concatenate along columns; all parts must share a row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "0 parts", "at least 1"));
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(shape_err("concat", self.value(parts[0]), pv));
            }
            cols += pv.cols();
        }
        let mut y = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let mut at = 0;
            for &p in parts {
                let prow = self.value(p).row(i);
                y.row_mut(i)[at..at + prow.len()].copy_from_slice(prow);
                at += prow.len();
            }
        }
        Ok(self.push(Op::Concat(parts.to_vec()), y))
    }

    /// y[r] = x[idx[r]]; rows may repeat.
    pub fn index_rows(&mut self, x: Var, idx: &[u32]) -> Result<Var> {
        let xv = self.value(x);
        for (r, &i) in idx.iter().enumerate() {
            if i as usize >= xv.rows() {
                return Err(Error::shape(
                    "index_rows",
                    xv.shape_string(),
                    format!("idx[{r}]={i}"),
                ));
            }
        }
        let mut y = Tensor::zeros(idx.len(), xv.cols());
        for (r, &i) in idx.iter().enumerate() {
            let row: Vec<E> = xv.row(i as usize).to_vec();
            y.row_mut(r).copy_from_slice(&row);
        }
        Ok(self.push(
            Op::IndexRows {
                x,
                idx: idx.to_vec(),
            },
            y,
        ))
    }

    /// y[idx[r]] += x[r], accumulated in ascending r so duplicate targets sum
    /// in a fixed order.
    pub fn scatter_sum(&mut self, x: Var, idx: &[u32], out_rows: usize) -> Result<Var> {
        let xv = self.value(x);
        if idx.len() != xv.rows() {
            return Err(Error::shape(
                "scatter_sum",
                xv.shape_string(),
                format!("{} indices", idx.len()),
            ));
        }
        for (r, &i) in idx.iter().enumerate() {
            if i as usize >= out_rows {
                return Err(Error::shape(
                    "scatter_sum",
                    format!("{out_rows} rows"),
                    format!("idx[{r}]={i}"),
                ));
            }
        }
        let mut y = Tensor::zeros(out_rows, xv.cols());
        for (r, &i) in idx.iter().enumerate() {
            let row: Vec<E> = xv.row(r).to_vec();
            for (yv, xv) in y.row_mut(i as usize).iter_mut().zip(row) {
                *yv += xv;
            }
        }
        Ok(self.push(
            Op::ScatterSum {
                x,
                idx: idx.to_vec(),
            },
            y,
        ))
    }

    /// Elementwise mean of same-shaped tensors.
    pub fn mean_over(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("mean_over", "0 parts", "at least 1"));
        }
        let shape = self.value(parts[0]).shape();
        let mut y = Tensor::zeros(shape.0, shape.1);
        for &p in parts {
            let pv = self.value(p);
            if pv.shape() != shape {
                return Err(shape_err("mean_over", self.value(parts[0]), pv));
            }
        }
        for &p in parts {
            let pv = self.value(p).clone();
            add_into(&mut y, &pv);
        }
        let inv = E::one() / E::from_f64(parts.len() as f64);
        for v in y.data_mut() {
            *v = *v * inv;
        }
        Ok(self.push(Op::MeanOver(parts.to_vec()), y))
    }

    /// Column means over all rows -> (1, cols).
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() == 0 {
            return Err(Error::shape("mean_rows", xv.shape_string(), "at least 1 row"));
        }
        let mut y = Tensor::zeros(1, xv.cols());
        for i in 0..xv.rows() {
            let row: Vec<E> = xv.row(i).to_vec();
            for (yv, rv) in y.row_mut(0).iter_mut().zip(row) {
                *yv += rv;
            }
        }
        let inv = E::one() / E::from_f64(xv.rows() as f64);
        for v in y.data_mut() {
            *v = *v * inv;
        }
        Ok(self.push(Op::MeanRows(x), y))
    }

    /// Row-wise normalization with learned gain and bias, both (1, cols).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        if gv.shape() != (1, xv.cols()) {
            return Err(shape_err("layer_norm gain", xv, gv));
        }
        if bv.shape() != (1, xv.cols()) {
            return Err(shape_err("layer_norm bias", xv, bv));
        }
        let (xhat, _) = layer_norm_xhat(xv);
        let mut y = xhat;
        for i in 0..y.rows() {
            let grow: Vec<E> = gv.row(0).to_vec();
            let brow: Vec<E> = bv.row(0).to_vec();
            for ((yv, g), b) in y.row_mut(i).iter_mut().zip(grow).zip(brow) {
                *yv = *yv * g + b;
            }
        }
        Ok(self.push(Op::LayerNorm { x, gain, bias }, y))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut y = xv.clone();
        for i in 0..y.rows() {
            let row = y.row_mut(i);
            let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
            let mut total = E::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        self.push(Op::Softmax(x), y)
    }

    /// Sum of all elements -> scalar (1,1).
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self
            .value(x)
            .data()
            .iter()
            .fold(E::zero(), |acc, &v| acc + v);
        self.push(Op::Sum(x), Tensor::from_vec(1, 1, vec![total]).unwrap())
    }

    /// Mean binary cross-entropy over all elements, computed from logits with
    /// the usual max/log1p stabilization. Targets carry no gradient.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Var) -> Result<Var> {
        let (zv, tv) = (self.value(logits), self.value(targets));
        if zv.shape() != tv.shape() {
            return Err(shape_err("bce_with_logits", zv, tv));
        }
        if zv.numel() == 0 {
            return Err(Error::shape("bce_with_logits", "0 elements", "at least 1"));
        }
        let mut total = E::zero();
        for (&z, &t) in zv.data().iter().zip(tv.data()) {
            total += z.max(E::zero()) - z * t + (-z.abs()).exp().ln_1p();
        }
        let mean = total / E::from_f64(zv.numel() as f64);
        Ok(self.push(
            Op::BceWithLogits { logits, targets },
            Tensor::from_vec(1, 1, vec![mean]).unwrap(),
        ))
    }

    /// Mean negative log-likelihood of target classes under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32]) -> Result<Var> {
        let zv = self.value(logits);
        if zv.rows() == 0 {
            return Err(Error::shape("cross_entropy", "0 rows", "at least 1"));
        }
        if targets.len() != zv.rows() {
            return Err(Error::shape(
                "cross_entropy",
                zv.shape_string(),
                format!("{} targets", targets.len()),
            ));
        }
        for (i, &t) in targets.iter().enumerate() {
            if t as usize >= zv.cols() {
                return Err(Error::shape(
                    "cross_entropy",
                    zv.shape_string(),
                    format!("targets[{i}]={t}"),
                ));
            }
        }
        let mut total = E::zero();
        for (i, &t) in targets.iter().enumerate() {
            let row = zv.row(i);
            let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
            let mut lse = E::zero();
            for &v in row {
                lse += (v - max).exp();
            }
            let lse = lse.ln() + max;
            total += lse - row[t as usize];
        }
        let mean = total / E::from_f64(targets.len() as f64);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            Tensor::from_vec(1, 1, vec![mean]).unwrap(),
        ))
    }

    /// Gradients of a scalar loss with respect to every tape node.
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor<E>>> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::shape("backward", lv.shape_string(), "1x1"));
        }
        let mut grads: Vec<Tensor<E>> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.0].set(0, 0, E::one());

        for i in (0..=loss.0).rev() {
            let (before, rest) = grads.split_at_mut(i);
            let g = &rest[0];
            let node = &self.nodes[i];
            match &node.op {
                Op::Const | Op::Param(_) => {}
                Op::Linear { x, w, b } => {
                    let dx = matmul_a_bt(g, self.value(*w));
                    add_into(&mut before[x.0], &dx);
                    let dw = matmul_at_b(self.value(*x), g);
                    add_into(&mut before[w.0], &dw);
                    if let Some(b) = b {
                        let db = before[b.0].row_mut(0);
                        for r in 0..g.rows() {
                            for (dbj, gj) in db.iter_mut().zip(g.row(r)) {
                                *dbj += *gj;
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let dx = before[x.0].data_mut();
                    for (k, (&xk, &gk)) in xv.data().iter().zip(g.data()).enumerate() {
                        if xk > E::zero() {
                            dx[k] += gk;
                        }
                    }
                }
                Op::Abs(x) => {
                    let xv = self.value(*x);
                    let dx = before[x.0].data_mut();
                    for (k, (&xk, &gk)) in xv.data().iter().zip(g.data()).enumerate() {
                        if xk > E::zero() {
                            dx[k] += gk;
                        } else if xk < E::zero() {
                            dx[k] -= gk;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let sv = &node.value;
                    let dx = before[x.0].data_mut();
                    for (k, (&s, &gk)) in sv.data().iter().zip(g.data()).enumerate() {
                        dx[k] += gk * s * (E::one() - s);
                    }
                }
                Op::Add(a, b) => {
                    add_into(&mut before[a.0], g);
                    add_into(&mut before[b.0], g);
                }
                Op::Sub(a, b) => {
                    add_into(&mut before[a.0], g);
                    for (d, &gk) in before[b.0].data_mut().iter_mut().zip(g.data()) {
                        *d -= gk;
                    }
                }
                Op::Mul(a, b) => {
                    let bv = self.value(*b).clone();
                    for ((d, &gk), &bk) in
                        before[a.0].data_mut().iter_mut().zip(g.data()).zip(bv.data())
                    {
                        *d += gk * bk;
                    }
                    let av = self.value(*a).clone();
                    for ((d, &gk), &ak) in
                        before[b.0].data_mut().iter_mut().zip(g.data()).zip(av.data())
                    {
                        *d += gk * ak;
                    }
                }
                Op::Scale(x, c) => {
                    let c = E::from_f64(*c);
                    for (d, &gk) in before[x.0].data_mut().iter_mut().zip(g.data()) {
                        *d += gk * c;
                    }
                }
                Op::Concat(parts) => {
                    for r in 0..g.rows() {
                        let mut at = 0;
                        for &p in parts {
                            let w = before[p.0].cols();
                            let dst = before[p.0].row_mut(r);
                            for (d, &gk) in dst.iter_mut().zip(&g.row(r)[at..at + w]) {
                                *d += gk;
                            }
                            at += w;
                        }
                    }
                }
                Op::IndexRows { x, idx } => {
                    for (r, &i) in idx.iter().enumerate() {
                        let dst = before[x.0].row_mut(i as usize);
                        for (d, &gk) in dst.iter_mut().zip(g.row(r)) {
                            *d += gk;
                        }
                    }
                }
                Op::ScatterSum { x, idx } => {
                    for (r, &i) in idx.iter().enumerate() {
                        let dst = before[x.0].row_mut(r);
                        for (d, &gk) in dst.iter_mut().zip(g.row(i as usize)) {
                            *d += gk;
                        }
                    }
                }
                Op::MeanOver(parts) => {
                    let inv = E::one() / E::from_f64(parts.len() as f64);
                    for &p in parts {
                        for (d, &gk) in before[p.0].data_mut().iter_mut().zip(g.data()) {
                            *d += gk * inv;
                        }
                    }
                }
                Op::MeanRows(x) => {
                    let n = before[x.0].rows();
                    let inv = E::one() / E::from_f64(n as f64);
                    for r in 0..n {
                        let dst = before[x.0].row_mut(r);
                        for (d, &gk) in dst.iter_mut().zip(g.row(0)) {
                            *d += gk * inv;
                        }
                    }
                }
                Op::LayerNorm { x, gain, bias } => {
                    let xv = self.value(*x);
                    let gv = self.value(*gain).clone();
                    let (xhat, std) = layer_norm_xhat(xv);
                    let cols = xv.cols();
                    let inv_c = E::one() / E::from_f64(cols as f64);
                    {
                        let db = before[bias.0].row_mut(0);
                        for r in 0..g.rows() {
                            for (d, &gk) in db.iter_mut().zip(g.row(r)) {
                                *d += gk;
                            }
                        }
                    }
                    {
                        let dg = before[gain.0].row_mut(0);
                        for r in 0..g.rows() {
                            for ((d, &gk), &xh) in
                                dg.iter_mut().zip(g.row(r)).zip(xhat.row(r))
                            {
                                *d += gk * xh;
                            }
                        }
                    }
                    for r in 0..g.rows() {
                        let grow = g.row(r);
                        let xrow = xhat.row(r);
                        let mut m1 = E::zero();
                        let mut m2 = E::zero();
                        for j in 0..cols {
                            let dxh = grow[j] * gv.get(0, j);
                            m1 += dxh;
                            m2 += dxh * xrow[j];
                        }
                        m1 = m1 * inv_c;
                        m2 = m2 * inv_c;
                        let inv_std = E::one() / std[r];
                        let dst = before[x.0].row_mut(r);
                        for j in 0..cols {
                            let dxh = grow[j] * gv.get(0, j);
                            dst[j] += (dxh - m1 - xrow[j] * m2) * inv_std;
                        }
                    }
                }
                Op::Softmax(x) => {
                    let sv = &node.value;
                    for r in 0..g.rows() {
                        let srow = sv.row(r);
                        let grow = g.row(r);
                        let mut dot = E::zero();
                        for (s, gk) in srow.iter().zip(grow) {
                            dot += *s * *gk;
                        }
                        let dst = before[x.0].row_mut(r);
                        for (d, (&s, &gk)) in dst.iter_mut().zip(srow.iter().zip(grow)) {
                            *d += s * (gk - dot);
                        }
                    }
                }
                Op::Sum(x) => {
                    let gk = g.scalar();
                    for d in before[x.0].data_mut() {
                        *d += gk;
                    }
                }
                Op::BceWithLogits { logits, targets } => {
                    let gk = g.scalar();
                    let zv = self.value(*logits);
                    let tv = self.value(*targets).clone();
                    let inv = E::one() / E::from_f64(zv.numel() as f64);
                    let dz: Vec<E> = zv
                        .data()
                        .iter()
                        .zip(tv.data())
                        .map(|(&z, &t)| gk * (stable_sigmoid(z) - t) * inv)
                        .collect();
                    for (d, v) in before[logits.0].data_mut().iter_mut().zip(dz) {
                        *d += v;
                    }
                }
                Op::CrossEntropy { logits, targets } => {
                    let gk = g.scalar();
                    let zv = self.value(*logits);
                    let inv = E::one() / E::from_f64(targets.len() as f64);
                    let n = zv.rows();
                    let mut dz = Tensor::zeros(n, zv.cols());
                    for (i, &t) in targets.iter().enumerate() {
                        let row = zv.row(i);
                        let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
                        let mut total = E::zero();
                        for &v in row {
                            total += (v - max).exp();
                        }
                        let dst = dz.row_mut(i);
                        for (j, &v) in row.iter().enumerate() {
                            let p = (v - max).exp() / total;
                            let ind = if j == t as usize { E::one() } else { E::zero() };
                            dst[j] = gk * (p - ind) * inv;
                        }
                    }
                    add_into(&mut before[logits.0], &dz);
                }
            }
        }
        Ok(grads)
    }

    /// Per-parameter gradients, summing over repeated tape insertions of the
    /// same id in ascending node order.
    pub fn param_grads(
        &self,
        grads: &[Tensor<E>],
        n_params: usize,
    ) -> Vec<Option<Tensor<E>>> {
        let mut out: Vec<Option<Tensor<E>>> = (0..n_params).map(|_| None).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                match &mut out[id.index()] {
                    Some(acc) => add_into(acc, &grads[i]),
                    slot @ None => *slot = Some(grads[i].clone()),
                }
            }
        }
        out
    }

    /// Backward pass into parameter gradients in one call.
    pub fn backward_params(&self, loss: Var, n_params: usize) -> Result<Vec<Option<Tensor<E>>>> {
        let grads = self.backward(loss)?;
        Ok(self.param_grads(&grads, n_params))
    }
}

impl<E: Elem> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-row normalized values and standard deviations (with epsilon).
fn layer_norm_xhat<E: Elem>(x: &Tensor<E>) -> (Tensor<E>, Vec<E>) {
    let (n, c) = x.shape();
    let mut xhat = x.clone();
    let mut stds = Vec::with_capacity(n);
    let inv_c = E::one() / E::from_f64(c as f64);
    let eps = E::from_f64(LAYER_NORM_EPS);
    for i in 0..n {
        let row = xhat.row_mut(i);
        let mut mean = E::zero();
        for &v in row.iter() {
            mean += v;
        }
        mean = mean * inv_c;
        let mut var = E::zero();
        for &v in row.iter() {
            let d = v - mean;
            var += d * d;
        }
        var = var * inv_c;
        let std = (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) / std;
        }
        stds.push(std);
    }
    (xhat, stds)
}
