//! Matrix products and the fused linear layers used by every perceptron in
//! the model.

use super::graph::{BackFn, Graph, VarId};
use super::{Result, Scalar, TensorError};

fn matmul_raw<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::ZERO; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let row = p * n;
            let out = i * n;
            for j in 0..n {
                c[out + j] += av * b[row + j];
            }
        }
    }
    c
}

impl<S: Scalar> Graph<S> {
    /// `[m, k] · [k, n] -> [m, n]`. Backward: `dA = dC·Bᵀ`, `dB = Aᵀ·dC`.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(self.data(a), self.data(b), m, k, n);
        let needs = self.needs[a.0] || self.needs[b.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            let vals = ctx.vals;
            if ctx.needs(a) {
                let bv = &vals[b.0].data;
                let ga = ctx.grad_mut(a);
                // dA[i,p] += sum_j gy[i,j] * B[p,j]
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = S::ZERO;
                        for j in 0..n {
                            acc += gy[i * n + j] * bv[p * n + j];
                        }
                        ga[i * k + p] += acc;
                    }
                }
            }
            if ctx.needs(b) {
                let av = &vals[a.0].data;
                let gb = ctx.grad_mut(b);
                // dB[p,j] += sum_i A[i,p] * gy[i,j]
                for i in 0..m {
                    for p in 0..k {
                        let apv = av[i * k + p];
                        for j in 0..n {
                            gb[p * n + j] += apv * gy[i * n + j];
                        }
                    }
                }
            }
        });
        self.push("matmul", vec![m, n], data, needs, Some(back))
    }

    /// `W[out, in] · x[in] + b[out] -> [out]`.
    pub fn linear(&mut self, w: VarId, x: VarId, b: VarId) -> Result<VarId> {
        let sw = self.shape(w).to_vec();
        let sx = self.shape(x).to_vec();
        if sw.len() != 2 || sx.len() != 1 || sw[1] != sx[0] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: sw,
                rhs: sx,
            });
        }
        let (out, inp) = (sw[0], sw[1]);
        let sb = self.shape(b).to_vec();
        if sb != [out] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: vec![out],
                rhs: sb,
            });
        }
        let wd = self.data(w);
        let xd = self.data(x);
        let bd = self.data(b);
        let mut data = Vec::with_capacity(out);
        for o in 0..out {
            let mut acc = bd[o];
            let row = o * inp;
            for i in 0..inp {
                acc += wd[row + i] * xd[i];
            }
            data.push(acc);
        }
        let needs = self.needs[w.0] || self.needs[x.0] || self.needs[b.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            let vals = ctx.vals;
            if ctx.needs(w) {
                let xv = &vals[x.0].data;
                let gw = ctx.grad_mut(w);
                for o in 0..out {
                    let g = gy[o];
                    let row = o * inp;
                    for i in 0..inp {
                        gw[row + i] += g * xv[i];
                    }
                }
            }
            if ctx.needs(x) {
                let wv = &vals[w.0].data;
                let gx = ctx.grad_mut(x);
                for o in 0..out {
                    let g = gy[o];
                    let row = o * inp;
                    for i in 0..inp {
                        gx[i] += g * wv[row + i];
                    }
                }
            }
            if ctx.needs(b) {
                let gb = ctx.grad_mut(b);
                for o in 0..out {
                    gb[o] += gy[o];
                }
            }
        });
        self.push("linear", vec![out], data, needs, Some(back))
    }

    /// Row-wise linear layer: `x[n, in] · W[out, in]ᵀ + b[out] -> [n, out]`.
    pub fn linear_rows(&mut self, x: VarId, w: VarId, b: VarId) -> Result<VarId> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(TensorError::ShapeMismatch {
                op: "linear_rows",
                lhs: sx,
                rhs: sw,
            });
        }
        let (n, inp, out) = (sx[0], sx[1], sw[0]);
        let sb = self.shape(b).to_vec();
        if sb != [out] {
            return Err(TensorError::ShapeMismatch {
                op: "linear_rows",
                lhs: vec![out],
                rhs: sb,
            });
        }
        let xd = self.data(x);
        let wd = self.data(w);
        let bd = self.data(b);
        let mut data = vec![S::ZERO; n * out];
        for r in 0..n {
            for o in 0..out {
                let mut acc = bd[o];
                let xrow = r * inp;
                let wrow = o * inp;
                for i in 0..inp {
                    acc += xd[xrow + i] * wd[wrow + i];
                }
                data[r * out + o] = acc;
            }
        }
        let needs = self.needs[x.0] || self.needs[w.0] || self.needs[b.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            let vals = ctx.vals;
            if ctx.needs(x) {
                let wv = &vals[w.0].data;
                let gx = ctx.grad_mut(x);
                for r in 0..n {
                    for o in 0..out {
                        let g = gy[r * out + o];
                        let xrow = r * inp;
                        let wrow = o * inp;
                        for i in 0..inp {
                            gx[xrow + i] += g * wv[wrow + i];
                        }
                    }
                }
            }
            if ctx.needs(w) {
                let xv = &vals[x.0].data;
                let gw = ctx.grad_mut(w);
                for r in 0..n {
                    for o in 0..out {
                        let g = gy[r * out + o];
                        let xrow = r * inp;
                        let wrow = o * inp;
                        for i in 0..inp {
                            gw[wrow + i] += g * xv[xrow + i];
                        }
                    }
                }
            }
            if ctx.needs(b) {
                let gb = ctx.grad_mut(b);
                for r in 0..n {
                    for o in 0..out {
                        gb[o] += gy[r * out + o];
                    }
                }
            }
        });
        self.push("linear_rows", vec![n, out], data, needs, Some(back))
    }
}
