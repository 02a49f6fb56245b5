//! Classification losses, fused with their activations for numerical
//! stability: softmax cross-entropy from logits and mean binary
//! cross-entropy from logits.

use super::graph::{BackFn, Graph, VarId};
use super::{Result, Scalar, TensorError};

pub fn softmax_stable<S: Scalar>(z: &[S]) -> Vec<S> {
    let mut m = z[0];
    for v in z.iter().skip(1) {
        m = m.max(*v);
    }
    let exps: Vec<S> = z.iter().map(|v| (*v - m).exp()).collect();
    let sum: S = exps.iter().copied().fold(S::ZERO, |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

impl<S: Scalar> Graph<S> {
    /// `-log softmax(z)[target]` for a 1-D logit vector.
    /// Backward: `dz = softmax(z) - e_target`.
    pub fn cross_entropy_logits(&mut self, z: VarId, target: usize) -> Result<VarId> {
        let sz = self.shape(z).to_vec();
        if sz.len() != 1 || target >= sz[0] {
            return Err(TensorError::BadShape {
                op: "cross_entropy_logits",
                shape: sz,
                reason: format!("target index {target} invalid"),
            });
        }
        let probs = softmax_stable(self.data(z));
        let loss = -(probs[target].ln());
        let needs = self.needs[z.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(z) {
                let g = gy[0];
                let gz = ctx.grad_mut(z);
                for (i, p) in probs.iter().enumerate() {
                    let delta = if i == target { S::ONE } else { S::ZERO };
                    gz[i] += g * (*p - delta);
                }
            }
        });
        self.push("cross_entropy_logits", vec![], vec![loss], needs, Some(back))
    }

    /// Mean over classes of the binary cross-entropy between
    /// `sigmoid(z[i])` and `targets[i]`, computed from logits.
    pub fn bce_with_logits_mean(&mut self, z: VarId, targets: &[f64]) -> Result<VarId> {
        let sz = self.shape(z).to_vec();
        if sz.len() != 1 || sz[0] != targets.len() {
            return Err(TensorError::BadShape {
                op: "bce_with_logits_mean",
                shape: sz,
                reason: format!("expected {} targets", targets.len()),
            });
        }
        let n = targets.len();
        let zd = self.data(z);
        // log(1 + e^z) computed as max(z,0) + log(1 + e^-|z|)
        let mut loss = S::ZERO;
        for i in 0..n {
            let zi = zd[i];
            let t = S::from_f64(targets[i]);
            let softplus = zi.max(S::ZERO) + (S::ONE + (-zi.abs()).exp()).ln();
            loss += softplus - zi * t;
        }
        let denom = S::from_f64(n as f64);
        loss = loss / denom;
        let probs: Vec<S> = zd.iter().map(|v| v.sigmoid()).collect();
        let tvec: Vec<S> = targets.iter().map(|t| S::from_f64(*t)).collect();
        let needs = self.needs[z.0];
        let back: BackFn<S> = Box::new(move |gy, ctx| {
            if ctx.needs(z) {
                let g = gy[0] / denom;
                let gz = ctx.grad_mut(z);
                for i in 0..probs.len() {
                    gz[i] += g * (probs[i] - tvec[i]);
                }
            }
        });
        self.push("bce_with_logits_mean", vec![], vec![loss], needs, Some(back))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prediction_costs_ln_n() {
        for n in [2usize, 5, 7] {
            let mut g = Graph::<f64>::new();
            let z = g.constant(&[n], 0.0);
            let l = g.cross_entropy_logits(z, n - 1).unwrap();
            assert!((g.scalar(l) - (n as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn ce_gradient_is_softmax_minus_onehot() {
        let mut g = Graph::<f64>::new();
        let z = g.from_vec(&[3], vec![0.3, -1.2, 2.0]).unwrap();
        g.needs[z.0] = true;
        let l = g.cross_entropy_logits(z, 1).unwrap();
        g.backward(l).unwrap();
        let p = softmax_stable(g.data(z));
        let got = g.grad(z).unwrap();
        for i in 0..3 {
            let want = p[i] - if i == 1 { 1.0 } else { 0.0 };
            assert!((got[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ce_nonnegative_and_zero_only_at_onehot() {
        let mut g = Graph::<f64>::new();
        // Strongly peaked logits: loss approaches 0 from above.
        let z = g.from_vec(&[3], vec![50.0, 0.0, 0.0]).unwrap();
        let l = g.cross_entropy_logits(z, 0).unwrap();
        let v = g.scalar(l);
        assert!(v >= 0.0 && v < 1e-12);
    }

    #[test]
    fn bce_matches_direct_formula() {
        let mut g = Graph::<f64>::new();
        let z = g.from_vec(&[2], vec![0.7, -0.4]).unwrap();
        let l = g.bce_with_logits_mean(z, &[1.0, 0.0]).unwrap();
        let p0 = 1.0 / (1.0 + (-0.7f64).exp());
        let p1 = 1.0 / (1.0 + (0.4f64).exp());
        let want = (-(p0.ln()) - (1.0 - p1).ln()) / 2.0;
        assert!((g.scalar(l) - want).abs() < 1e-12);
    }
}
