//! Pooling ops: mask-driven feature pooling and block-grid average pooling.

use super::graph::{BackFn, Graph, VarId};
use super::{Result, Scalar, TensorError};

impl<S: Scalar> Graph<S> {
    /// Mean of the feature columns of `x: [C, H, W]` over the given
    /// `(row, col)` cells. The cell list must be non-empty; callers derive
    /// it from a downsampled instance mask.
    pub fn masked_cell_mean(&mut self, x: VarId, cells: &[(usize, usize)]) -> Result<VarId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(TensorError::BadShape {
                op: "masked_cell_mean",
                shape: sx,
                reason: "expects a [C, H, W] input".into(),
            });
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        if cells.is_empty() {
            return Err(TensorError::BadShape {
                op: "masked_cell_mean",
                shape: sx,
                reason: "empty cell list".into(),
            });
        }
        for &(r, cl) in cells {
            if r >= h || cl >= w {
                return Err(TensorError::BadShape {
                    op: "masked_cell_mean",
                    shape: sx,
                    reason: format!("cell ({r},{cl}) out of bounds"),
                });
            }
        }
        let xd = self.data(x);
        let denom = S::from_f64(cells.len() as f64);
        let mut data = vec![S::ZERO; c];
        for ci in 0..c {
            let base = ci * h * w;
            for &(r, cl) in cells {
                data[ci] += xd[base + r * w + cl];
            }
            data[ci] = data[ci] / denom;
        }
        let needs = self.needs[x.0];
        let cells_owned = cells.to_vec();
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(x) {
                let gx = ctx.grad_mut(x);
                for ci in 0..c {
                    let g = gy[ci] / denom;
                    let base = ci * h * w;
                    for &(r, cl) in &cells_owned {
                        gx[base + r * w + cl] += g;
                    }
                }
            }
        });
        self.push("masked_cell_mean", vec![c], data, needs, Some(back))
    }

    /// Average-pools `x: [C, H, W]` onto a `ph × pw` grid of equal-ish
    /// blocks (block boundaries at `round(i * H / ph)`).
    pub fn grid_mean_pool(&mut self, x: VarId, ph: usize, pw: usize) -> Result<VarId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(TensorError::BadShape {
                op: "grid_mean_pool",
                shape: sx,
                reason: "expects a [C, H, W] input".into(),
            });
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        if ph == 0 || pw == 0 || ph > h || pw > w {
            return Err(TensorError::BadShape {
                op: "grid_mean_pool",
                shape: sx,
                reason: format!("invalid grid {ph}x{pw}"),
            });
        }
        let bounds = |n: usize, parts: usize, i: usize| -> (usize, usize) {
            (i * n / parts, (i + 1) * n / parts)
        };
        let xd = self.data(x);
        let mut data = vec![S::ZERO; c * ph * pw];
        for ci in 0..c {
            for gy_ in 0..ph {
                let (y0, y1) = bounds(h, ph, gy_);
                for gx_ in 0..pw {
                    let (x0, x1) = bounds(w, pw, gx_);
                    let mut acc = S::ZERO;
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            acc += xd[(ci * h + yy) * w + xx];
                        }
                    }
                    let n = S::from_f64(((y1 - y0) * (x1 - x0)) as f64);
                    data[(ci * ph + gy_) * pw + gx_] = acc / n;
                }
            }
        }
        let needs = self.needs[x.0];
        let back: BackFn<S> = Box::new(move |gout, ctx| {
            if ctx.needs(x) {
                let gx = ctx.grad_mut(x);
                for ci in 0..c {
                    for gy_ in 0..ph {
                        let (y0, y1) = bounds(h, ph, gy_);
                        for gx_ in 0..pw {
                            let (x0, x1) = bounds(w, pw, gx_);
                            let n = S::from_f64(((y1 - y0) * (x1 - x0)) as f64);
                            let g = gout[(ci * ph + gy_) * pw + gx_] / n;
                            for yy in y0..y1 {
                                for xx in x0..x1 {
                                    gx[(ci * h + yy) * w + xx] += g;
                                }
                            }
                        }
                    }
                }
            }
        });
        self.push("grid_mean_pool", vec![c, ph, pw], data, needs, Some(back))
    }
}
