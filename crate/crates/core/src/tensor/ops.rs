//! Elementwise, reduction, and shape ops. Broadcasting is deliberately
//! absent: shapes must match exactly, with explicit `repeat_rows` where a
//! value has to be tiled. Reductions sum strictly left-to-right so results
//! are bitwise reproducible.

use super::graph::{BackFn, Graph, VarId};
use super::{Result, Scalar, TensorError};

impl<S: Scalar> Graph<S> {
    fn binary_same_shape(
        &mut self,
        op: &'static str,
        a: VarId,
        b: VarId,
    ) -> Result<(Vec<usize>, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok((sa.to_vec(), self.data(a).len()))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (shape, n) = self.binary_same_shape("add", a, b)?;
        let data: Vec<S> = (0..n).map(|i| self.data(a)[i] + self.data(b)[i]).collect();
        let needs = self.needs[a.0] || self.needs[b.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(a) {
                let ga = ctx.grad_mut(a);
                for (g, gyv) in ga.iter_mut().zip(gy) {
                    *g += *gyv;
                }
            }
            if ctx.needs(b) {
                let gb = ctx.grad_mut(b);
                for (g, gyv) in gb.iter_mut().zip(gy) {
                    *g += *gyv;
                }
            }
        });
        self.push("add", shape, data, needs, Some(back))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (shape, n) = self.binary_same_shape("mul", a, b)?;
        let data: Vec<S> = (0..n).map(|i| self.data(a)[i] * self.data(b)[i]).collect();
        let needs = self.needs[a.0] || self.needs[b.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            let vals = ctx.vals;
            if ctx.needs(a) {
                let bv = &vals[b.0].data;
                let ga = ctx.grad_mut(a);
                for i in 0..gy.len() {
                    ga[i] += gy[i] * bv[i];
                }
            }
            if ctx.needs(b) {
                let av = &vals[a.0].data;
                let gb = ctx.grad_mut(b);
                for i in 0..gy.len() {
                    gb[i] += gy[i] * av[i];
                }
            }
        });
        self.push("mul", shape, data, needs, Some(back))
    }

    /// Elementwise `scale * x + offset` with constant coefficients.
    pub fn affine(&mut self, x: VarId, scale: f64, offset: f64) -> Result<VarId> {
        let s = S::from_f64(scale);
        let o = S::from_f64(offset);
        let shape = self.shape(x).to_vec();
        let data: Vec<S> = self.data(x).iter().map(|v| s * *v + o).collect();
        let needs = self.needs[x.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(x) {
                let gx = ctx.grad_mut(x);
                for i in 0..gy.len() {
                    gx[i] += gy[i] * s;
                }
            }
        });
        self.push("affine", shape, data, needs, Some(back))
    }

    pub fn scale(&mut self, x: VarId, factor: f64) -> Result<VarId> {
        self.affine(x, factor, 0.0)
    }

    pub fn relu(&mut self, x: VarId) -> Result<VarId> {
        let shape = self.shape(x).to_vec();
        let data: Vec<S> = self.data(x).iter().map(|v| v.max(S::ZERO)).collect();
        let needs = self.needs[x.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            let vals = ctx.vals;
            if ctx.needs(x) {
                let xv = &vals[x.0].data;
                let gx = ctx.grad_mut(x);
                for i in 0..gy.len() {
                    if xv[i] > S::ZERO {
                        gx[i] += gy[i];
                    }
                }
            }
        });
        self.push("relu", shape, data, needs, Some(back))
    }

    pub fn sigmoid(&mut self, x: VarId) -> Result<VarId> {
        let shape = self.shape(x).to_vec();
        let data: Vec<S> = self.data(x).iter().map(|v| v.sigmoid()).collect();
        let needs = self.needs[x.0];
        let out_data = data.clone();
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(x) {
                let gx = ctx.grad_mut(x);
                for i in 0..gy.len() {
                    let y = out_data[i];
                    gx[i] += gy[i] * y * (S::ONE - y);
                }
            }
        });
        self.push("sigmoid", shape, data, needs, Some(back))
    }

    pub fn tanh(&mut self, x: VarId) -> Result<VarId> {
        let shape = self.shape(x).to_vec();
        let data: Vec<S> = self.data(x).iter().map(|v| v.tanh()).collect();
        let needs = self.needs[x.0];
        let out_data = data.clone();
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(x) {
                let gx = ctx.grad_mut(x);
                for i in 0..gy.len() {
                    let y = out_data[i];
                    gx[i] += gy[i] * (S::ONE - y * y);
                }
            }
        });
        self.push("tanh", shape, data, needs, Some(back))
    }

    /// Concatenation of 1-D vectors into one 1-D vector.
    pub fn concat(&mut self, parts: &[VarId]) -> Result<VarId> {
        let mut data = Vec::new();
        let mut spans = Vec::with_capacity(parts.len());
        let mut needs = false;
        for &p in parts {
            let shape = self.shape(p);
            if shape.len() != 1 {
                return Err(TensorError::BadShape {
                    op: "concat",
                    shape: shape.to_vec(),
                    reason: "concat expects 1-D inputs".into(),
                });
            }
            spans.push((p, data.len(), shape[0]));
            data.extend_from_slice(self.data(p));
            needs |= self.needs[p.0];
        }
        let len = data.len();
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            for (p, start, n) in &spans {
                if ctx.needs(*p) {
                    let gp = ctx.grad_mut(*p);
                    for i in 0..*n {
                        gp[i] += gy[start + i];
                    }
                }
            }
        });
        self.push("concat", vec![len], data, needs, Some(back))
    }

    /// Stacks equal-length 1-D vectors as the rows of an `[n, d]` matrix.
    pub fn stack_rows(&mut self, rows: &[VarId]) -> Result<VarId> {
        assert!(!rows.is_empty(), "stack_rows needs at least one row");
        let d = self.shape(rows[0])[0];
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut needs = false;
        for &r in rows {
            let shape = self.shape(r);
            if shape.len() != 1 || shape[0] != d {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_rows",
                    lhs: vec![d],
                    rhs: shape.to_vec(),
                });
            }
            data.extend_from_slice(self.data(r));
            needs |= self.needs[r.0];
        }
        let rows_owned = rows.to_vec();
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            for (ri, r) in rows_owned.iter().enumerate() {
                if ctx.needs(*r) {
                    let gr = ctx.grad_mut(*r);
                    for i in 0..d {
                        gr[i] += gy[ri * d + i];
                    }
                }
            }
        });
        self.push("stack_rows", vec![rows.len(), d], data, needs, Some(back))
    }

    /// Explicit expand: tiles a 1-D vector as `n` identical rows.
    pub fn repeat_rows(&mut self, x: VarId, n: usize) -> Result<VarId> {
        let shape = self.shape(x);
        if shape.len() != 1 {
            return Err(TensorError::BadShape {
                op: "repeat_rows",
                shape: shape.to_vec(),
                reason: "expects a 1-D input".into(),
            });
        }
        let d = shape[0];
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(self.data(x));
        }
        let needs = self.needs[x.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(x) {
                let gx = ctx.grad_mut(x);
                for r in 0..n {
                    for i in 0..d {
                        gx[i] += gy[r * d + i];
                    }
                }
            }
        });
        self.push("repeat_rows", vec![n, d], data, needs, Some(back))
    }

    pub fn reshape(&mut self, x: VarId, new_shape: &[usize]) -> Result<VarId> {
        let numel: usize = new_shape.iter().product();
        if numel != self.data(x).len() {
            return Err(TensorError::BadShape {
                op: "reshape",
                shape: new_shape.to_vec(),
                reason: format!("incompatible with {} elements", self.data(x).len()),
            });
        }
        let data = self.data(x).to_vec();
        let needs = self.needs[x.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(x) {
                let gx = ctx.grad_mut(x);
                for i in 0..gy.len() {
                    gx[i] += gy[i];
                }
            }
        });
        self.push("reshape", new_shape.to_vec(), data, needs, Some(back))
    }

    fn reduce_axis(
        &mut self,
        op: &'static str,
        x: VarId,
        axis: usize,
        mean: bool,
    ) -> Result<VarId> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange {
                op,
                axis,
                shape,
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let xd = self.data(x);
        let mut data = vec![S::ZERO; outer * inner];
        // Left-to-right over the reduced axis for fixed summation order.
        for o in 0..outer {
            for k in 0..len {
                let base = (o * len + k) * inner;
                for i in 0..inner {
                    data[o * inner + i] += xd[base + i];
                }
            }
        }
        let denom = S::from_f64(len as f64);
        if mean {
            for v in data.iter_mut() {
                *v = *v / denom;
            }
        }
        let needs = self.needs[x.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(x) {
                let gx = ctx.grad_mut(x);
                for o in 0..outer {
                    for k in 0..len {
                        let base = (o * len + k) * inner;
                        for i in 0..inner {
                            let g = gy[o * inner + i];
                            gx[base + i] += if mean { g / denom } else { g };
                        }
                    }
                }
            }
        });
        self.push(op, out_shape, data, needs, Some(back))
    }

    pub fn sum_axis(&mut self, x: VarId, axis: usize) -> Result<VarId> {
        self.reduce_axis("sum_axis", x, axis, false)
    }

    pub fn mean_axis(&mut self, x: VarId, axis: usize) -> Result<VarId> {
        self.reduce_axis("mean_axis", x, axis, true)
    }

    /// Selects frame `t` of a `[C, T, H, W]` tensor as `[C, H, W]`.
    pub fn frame(&mut self, x: VarId, t: usize) -> Result<VarId> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(TensorError::BadShape {
                op: "frame",
                shape,
                reason: "expects a [C, T, H, W] input".into(),
            });
        }
        let (c, tn, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if t >= tn {
            return Err(TensorError::BadShape {
                op: "frame",
                shape,
                reason: format!("frame index {t} out of range"),
            });
        }
        let hw = h * w;
        let xd = self.data(x);
        let mut data = Vec::with_capacity(c * hw);
        for ci in 0..c {
            let base = (ci * tn + t) * hw;
            data.extend_from_slice(&xd[base..base + hw]);
        }
        let needs = self.needs[x.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(x) {
                let gx = ctx.grad_mut(x);
                for ci in 0..c {
                    let base = (ci * tn + t) * hw;
                    for i in 0..hw {
                        gx[base + i] += gy[ci * hw + i];
                    }
                }
            }
        });
        self.push("frame", vec![c, h, w], data, needs, Some(back))
    }
}
