//! Spatio-temporal convolutions over `[C, T, H, W]` blocks.
//!
//! `conv2d` applies the same 2-D kernel to every frame; `conv3d` convolves
//! over time as well; `conv2p1d` is the separable form, a 2-D spatial
//! kernel followed by a 1-D temporal kernel. Spatial padding is zero
//! padding; temporal padding is `(k_t - 1) / 2` on both sides so the
//! temporal length never changes.

use super::graph::{BackFn, Graph, VarId};
use super::{Result, Scalar, TensorError};

pub(crate) fn conv_out_dim(input: usize, kernel: usize, pad: usize, stride: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct Conv2dDims {
    ci: usize,
    co: usize,
    t: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    pad: usize,
    stride: usize,
}

fn conv2d_forward<S: Scalar>(x: &[S], w: &[S], b: &[S], d: &Conv2dDims) -> Vec<S> {
    let mut out = vec![S::ZERO; d.co * d.t * d.ho * d.wo];
    for co in 0..d.co {
        for t in 0..d.t {
            let obase = (co * d.t + t) * d.ho * d.wo;
            for oy in 0..d.ho {
                for ox in 0..d.wo {
                    let mut acc = b[co];
                    let iy0 = (oy * d.stride) as isize - d.pad as isize;
                    let ix0 = (ox * d.stride) as isize - d.pad as isize;
                    for ci in 0..d.ci {
                        let xbase = (ci * d.t + t) * d.h * d.w;
                        let wbase = (co * d.ci + ci) * d.kh * d.kw;
                        for ky in 0..d.kh {
                            let iy = iy0 + ky as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            let xrow = xbase + iy as usize * d.w;
                            let wrow = wbase + ky * d.kw;
                            for kx in 0..d.kw {
                                let ix = ix0 + kx as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                acc += x[xrow + ix as usize] * w[wrow + kx as usize];
                            }
                        }
                    }
                    out[obase + oy * d.wo + ox] = acc;
                }
            }
        }
    }
    out
}

impl<S: Scalar> Graph<S> {
    /// Per-frame spatial convolution.
    /// `x: [C_in, T, H, W]`, `w: [C_out, C_in, kh, kw]`, `b: [C_out]`.
    pub fn conv2d(
        &mut self,
        x: VarId,
        w: VarId,
        b: VarId,
        stride: usize,
        pad: usize,
    ) -> Result<VarId> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 4 || sw.len() != 4 || sx[0] != sw[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: sx,
                rhs: sw,
            });
        }
        let (ci, t, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (co, kh, kw) = (sw[0], sw[2], sw[3]);
        let ho = conv_out_dim(h, kh, pad, stride).ok_or_else(|| TensorError::BadShape {
            op: "conv2d",
            shape: sx.clone(),
            reason: format!("kernel {kh}x{kw} larger than padded input"),
        })?;
        let wo = conv_out_dim(wd, kw, pad, stride).ok_or_else(|| TensorError::BadShape {
            op: "conv2d",
            shape: sx.clone(),
            reason: format!("kernel {kh}x{kw} larger than padded input"),
        })?;
        if self.shape(b) != [co] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: vec![co],
                rhs: self.shape(b).to_vec(),
            });
        }
        let dims = Conv2dDims {
            ci,
            co,
            t,
            h,
            w: wd,
            kh,
            kw,
            ho,
            wo,
            pad,
            stride,
        };
        let data = conv2d_forward(self.data(x), self.data(w), self.data(b), &dims);
        let needs = self.needs[x.0] || self.needs[w.0] || self.needs[b.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            let vals = ctx.vals;
            let d = &dims;
            if ctx.needs(x) {
                let wv = &vals[w.0].data;
                let gx = ctx.grad_mut(x);
                for co in 0..d.co {
                    for t in 0..d.t {
                        let obase = (co * d.t + t) * d.ho * d.wo;
                        for oy in 0..d.ho {
                            for ox in 0..d.wo {
                                let g = gy[obase + oy * d.wo + ox];
                                let iy0 = (oy * d.stride) as isize - d.pad as isize;
                                let ix0 = (ox * d.stride) as isize - d.pad as isize;
                                for ci in 0..d.ci {
                                    let xbase = (ci * d.t + t) * d.h * d.w;
                                    let wbase = (co * d.ci + ci) * d.kh * d.kw;
                                    for ky in 0..d.kh {
                                        let iy = iy0 + ky as isize;
                                        if iy < 0 || iy >= d.h as isize {
                                            continue;
                                        }
                                        let xrow = xbase + iy as usize * d.w;
                                        let wrow = wbase + ky * d.kw;
                                        for kx in 0..d.kw {
                                            let ix = ix0 + kx as isize;
                                            if ix < 0 || ix >= d.w as isize {
                                                continue;
                                            }
                                            gx[xrow + ix as usize] += g * wv[wrow + kx as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if ctx.needs(w) {
                let xv = &vals[x.0].data;
                let gw = ctx.grad_mut(w);
                for co in 0..d.co {
                    for t in 0..d.t {
                        let obase = (co * d.t + t) * d.ho * d.wo;
                        for oy in 0..d.ho {
                            for ox in 0..d.wo {
                                let g = gy[obase + oy * d.wo + ox];
                                let iy0 = (oy * d.stride) as isize - d.pad as isize;
                                let ix0 = (ox * d.stride) as isize - d.pad as isize;
                                for ci in 0..d.ci {
                                    let xbase = (ci * d.t + t) * d.h * d.w;
                                    let wbase = (co * d.ci + ci) * d.kh * d.kw;
                                    for ky in 0..d.kh {
                                        let iy = iy0 + ky as isize;
                                        if iy < 0 || iy >= d.h as isize {
                                            continue;
                                        }
                                        let xrow = xbase + iy as usize * d.w;
                                        let wrow = wbase + ky * d.kw;
                                        for kx in 0..d.kw {
                                            let ix = ix0 + kx as isize;
                                            if ix < 0 || ix >= d.w as isize {
                                                continue;
                                            }
                                            gw[wrow + kx as usize] += g * xv[xrow + ix as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if ctx.needs(b) {
                let gb = ctx.grad_mut(b);
                for co in 0..d.co {
                    let mut acc = S::ZERO;
                    let cbase = co * d.t * d.ho * d.wo;
                    for i in 0..d.t * d.ho * d.wo {
                        acc += gy[cbase + i];
                    }
                    gb[co] += acc;
                }
            }
        });
        self.push("conv2d", vec![co, t, ho, wo], data, needs, Some(back))
    }

    /// Full 3-D convolution. `w: [C_out, C_in, kt, kh, kw]`; temporal
    /// stride is 1 and temporal padding `(kt - 1) / 2` preserves `T`.
    pub fn conv3d(
        &mut self,
        x: VarId,
        w: VarId,
        b: VarId,
        stride: usize,
        pad: usize,
    ) -> Result<VarId> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 4 || sw.len() != 5 || sx[0] != sw[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv3d",
                lhs: sx,
                rhs: sw,
            });
        }
        let (ci, t, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (co, kt, kh, kw) = (sw[0], sw[2], sw[3], sw[4]);
        let tpad = (kt - 1) / 2;
        if kt > t + 2 * tpad {
            return Err(TensorError::BadShape {
                op: "conv3d",
                shape: sx,
                reason: format!("temporal kernel {kt} larger than padded input"),
            });
        }
        let ho = conv_out_dim(h, kh, pad, stride).ok_or_else(|| TensorError::BadShape {
            op: "conv3d",
            shape: sx.clone(),
            reason: format!("kernel {kh}x{kw} larger than padded input"),
        })?;
        let wo = conv_out_dim(wd, kw, pad, stride).ok_or_else(|| TensorError::BadShape {
            op: "conv3d",
            shape: sx.clone(),
            reason: format!("kernel {kh}x{kw} larger than padded input"),
        })?;
        if self.shape(b) != [co] {
            return Err(TensorError::ShapeMismatch {
                op: "conv3d",
                lhs: vec![co],
                rhs: self.shape(b).to_vec(),
            });
        }
        let to = t; // temporal dimension preserved by construction
        let xd = self.data(x);
        let wv = self.data(w);
        let bd = self.data(b);
        let mut data = vec![S::ZERO; co * to * ho * wo];
        for oc in 0..co {
            for ot in 0..to {
                let obase = (oc * to + ot) * ho * wo;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = bd[oc];
                        let iy0 = (oy * stride) as isize - pad as isize;
                        let ix0 = (ox * stride) as isize - pad as isize;
                        for ic in 0..ci {
                            for dt in 0..kt {
                                let it = ot as isize + dt as isize - tpad as isize;
                                if it < 0 || it >= t as isize {
                                    continue;
                                }
                                let xbase = (ic * t + it as usize) * h * wd;
                                let wbase = ((oc * ci + ic) * kt + dt) * kh * kw;
                                for ky in 0..kh {
                                    let iy = iy0 + ky as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    let xrow = xbase + iy as usize * wd;
                                    let wrow = wbase + ky * kw;
                                    for kx in 0..kw {
                                        let ix = ix0 + kx as isize;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        acc += xd[xrow + ix as usize] * wv[wrow + kx as usize];
                                    }
                                }
                            }
                        }
                        data[obase + oy * wo + ox] = acc;
                    }
                }
            }
        }
        let needs = self.needs[x.0] || self.needs[w.0] || self.needs[b.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            let vals = ctx.vals;
            if ctx.needs(x) {
                let wvv = &vals[w.0].data;
                let gx = ctx.grad_mut(x);
                for oc in 0..co {
                    for ot in 0..to {
                        let obase = (oc * to + ot) * ho * wo;
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let g = gy[obase + oy * wo + ox];
                                let iy0 = (oy * stride) as isize - pad as isize;
                                let ix0 = (ox * stride) as isize - pad as isize;
                                for ic in 0..ci {
                                    for dt in 0..kt {
                                        let it = ot as isize + dt as isize - tpad as isize;
                                        if it < 0 || it >= t as isize {
                                            continue;
                                        }
                                        let xbase = (ic * t + it as usize) * h * wd;
                                        let wbase = ((oc * ci + ic) * kt + dt) * kh * kw;
                                        for ky in 0..kh {
                                            let iy = iy0 + ky as isize;
                                            if iy < 0 || iy >= h as isize {
                                                continue;
                                            }
                                            let xrow = xbase + iy as usize * wd;
                                            let wrow = wbase + ky * kw;
                                            for kx in 0..kw {
                                                let ix = ix0 + kx as isize;
                                                if ix < 0 || ix >= wd as isize {
                                                    continue;
                                                }
                                                gx[xrow + ix as usize] += g * wvv[wrow + kx as usize];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if ctx.needs(w) {
                let xvv = &vals[x.0].data;
                let gw = ctx.grad_mut(w);
                for oc in 0..co {
                    for ot in 0..to {
                        let obase = (oc * to + ot) * ho * wo;
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let g = gy[obase + oy * wo + ox];
                                let iy0 = (oy * stride) as isize - pad as isize;
                                let ix0 = (ox * stride) as isize - pad as isize;
                                for ic in 0..ci {
                                    for dt in 0..kt {
                                        let it = ot as isize + dt as isize - tpad as isize;
                                        if it < 0 || it >= t as isize {
                                            continue;
                                        }
                                        let xbase = (ic * t + it as usize) * h * wd;
                                        let wbase = ((oc * ci + ic) * kt + dt) * kh * kw;
                                        for ky in 0..kh {
                                            let iy = iy0 + ky as isize;
                                            if iy < 0 || iy >= h as isize {
                                                continue;
                                            }
                                            let xrow = xbase + iy as usize * wd;
                                            let wrow = wbase + ky * kw;
                                            for kx in 0..kw {
                                                let ix = ix0 + kx as isize;
                                                if ix < 0 || ix >= wd as isize {
                                                    continue;
                                                }
                                                gw[wrow + kx as usize] += g * xvv[xrow + ix as usize];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if ctx.needs(b) {
                let gb = ctx.grad_mut(b);
                for oc in 0..co {
                    let mut acc = S::ZERO;
                    let cbase = oc * to * ho * wo;
                    for i in 0..to * ho * wo {
                        acc += gy[cbase + i];
                    }
                    gb[oc] += acc;
                }
            }
        });
        self.push("conv3d", vec![co, to, ho, wo], data, needs, Some(back))
    }

    /// Temporal 1-D convolution across frames at fixed spatial positions.
    /// `x: [C_in, T, H, W]`, `w: [C_out, C_in, kt]`, padding `(kt - 1) / 2`.
    pub fn conv_temporal(&mut self, x: VarId, w: VarId, b: VarId) -> Result<VarId> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 4 || sw.len() != 3 || sx[0] != sw[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv_temporal",
                lhs: sx,
                rhs: sw,
            });
        }
        let (ci, t, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (co, kt) = (sw[0], sw[2]);
        let tpad = (kt - 1) / 2;
        if kt > t + 2 * tpad {
            return Err(TensorError::BadShape {
                op: "conv_temporal",
                shape: sx,
                reason: format!("temporal kernel {kt} larger than padded input"),
            });
        }
        if self.shape(b) != [co] {
            return Err(TensorError::ShapeMismatch {
                op: "conv_temporal",
                lhs: vec![co],
                rhs: self.shape(b).to_vec(),
            });
        }
        let hw = h * wd;
        let xd = self.data(x);
        let wv = self.data(w);
        let bd = self.data(b);
        let mut data = vec![S::ZERO; co * t * hw];
        for oc in 0..co {
            for ot in 0..t {
                let obase = (oc * t + ot) * hw;
                for i in 0..hw {
                    data[obase + i] = bd[oc];
                }
                for ic in 0..ci {
                    for dt in 0..kt {
                        let it = ot as isize + dt as isize - tpad as isize;
                        if it < 0 || it >= t as isize {
                            continue;
                        }
                        let kv = wv[(oc * ci + ic) * kt + dt];
                        let xbase = (ic * t + it as usize) * hw;
                        for i in 0..hw {
                            data[obase + i] += kv * xd[xbase + i];
                        }
                    }
                }
            }
        }
        let needs = self.needs[x.0] || self.needs[w.0] || self.needs[b.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            let vals = ctx.vals;
            if ctx.needs(x) {
                let wvv = &vals[w.0].data;
                let gx = ctx.grad_mut(x);
                for oc in 0..co {
                    for ot in 0..t {
                        let obase = (oc * t + ot) * hw;
                        for ic in 0..ci {
                            for dt in 0..kt {
                                let it = ot as isize + dt as isize - tpad as isize;
                                if it < 0 || it >= t as isize {
                                    continue;
                                }
                                let kv = wvv[(oc * ci + ic) * kt + dt];
                                let xbase = (ic * t + it as usize) * hw;
                                for i in 0..hw {
                                    gx[xbase + i] += kv * gy[obase + i];
                                }
                            }
                        }
                    }
                }
            }
            if ctx.needs(w) {
                let xv = &vals[x.0].data;
                let gw = ctx.grad_mut(w);
                for oc in 0..co {
                    for ot in 0..t {
                        let obase = (oc * t + ot) * hw;
                        for ic in 0..ci {
                            for dt in 0..kt {
                                let it = ot as isize + dt as isize - tpad as isize;
                                if it < 0 || it >= t as isize {
                                    continue;
                                }
                                let xbase = (ic * t + it as usize) * hw;
                                let mut acc = S::ZERO;
                                for i in 0..hw {
                                    acc += xv[xbase + i] * gy[obase + i];
                                }
                                gw[(oc * ci + ic) * kt + dt] += acc;
                            }
                        }
                    }
                }
            }
            if ctx.needs(b) {
                let gb = ctx.grad_mut(b);
                for oc in 0..co {
                    let mut acc = S::ZERO;
                    let cbase = oc * t * hw;
                    for i in 0..t * hw {
                        acc += gy[cbase + i];
                    }
                    gb[oc] += acc;
                }
            }
        });
        self.push("conv_temporal", vec![co, t, h, wd], data, needs, Some(back))
    }

    /// Separable 2.5-D convolution: spatial `kh×kw` then temporal `kt`.
    #[allow(clippy::too_many_arguments)]
    pub fn conv2p1d(
        &mut self,
        x: VarId,
        w_spatial: VarId,
        b_spatial: VarId,
        w_temporal: VarId,
        b_temporal: VarId,
        stride: usize,
        pad: usize,
    ) -> Result<VarId> {
        let mid = self.conv2d(x, w_spatial, b_spatial, stride, pad)?;
        self.conv_temporal(mid, w_temporal, b_temporal)
    }
}
