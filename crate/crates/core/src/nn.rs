//! Small trainable building blocks: linear layers, multi-layer
//! perceptrons, and a gated recurrent unit. Modules own their parameter
//! tensors and expose them through a named visitor, which is what the
//! optimizer, checkpointing, and gradient accumulation key on.

use crate::tensor::{Graph, Result, Scalar, Tensor, VarId};
use rand::Rng;

/// Named access to every parameter tensor of a module, in a fixed order.
pub trait Parameters<S: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<S>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<S>));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.numel());
        n
    }

    fn named_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name.to_string(), t.shape.clone())));
        out
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[derive(Debug, Clone)]
pub struct Linear<S: Scalar> {
    pub w: Tensor<S>,
    pub b: Tensor<S>,
    name: String,
}

impl<S: Scalar> Linear<S> {
    pub fn new(name: &str, out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: Tensor::glorot_uniform(&[out_dim, in_dim], in_dim, out_dim, rng),
            b: Tensor::zeros_param(&[out_dim]),
            name: name.to_string(),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn bind(&self, g: &mut Graph<S>) -> LinearVars {
        LinearVars {
            w: g.param(&join(&self.name, "w"), &self.w),
            b: g.param(&join(&self.name, "b"), &self.b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: VarId,
    pub b: VarId,
}

impl LinearVars {
    pub fn apply<S: Scalar>(&self, g: &mut Graph<S>, x: VarId) -> Result<VarId> {
        g.linear(self.w, x, self.b)
    }

    pub fn apply_rows<S: Scalar>(&self, g: &mut Graph<S>, x: VarId) -> Result<VarId> {
        g.linear_rows(x, self.w, self.b)
    }
}

impl<S: Scalar> Parameters<S> for Linear<S> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        f(&join(&self.name, "w"), &self.w);
        f(&join(&self.name, "b"), &self.b);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        let wn = join(&self.name, "w");
        let bn = join(&self.name, "b");
        f(&wn, &mut self.w);
        f(&bn, &mut self.b);
    }
}

/// Perceptron with ReLU after every layer, including the output layer.
#[derive(Debug, Clone)]
pub struct Mlp<S: Scalar> {
    pub layers: Vec<Linear<S>>,
}

impl<S: Scalar> Mlp<S> {
    /// `dims = [in, hidden..., out]`.
    pub fn new(name: &str, dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least in/out dims");
        let layers = (0..dims.len() - 1)
            .map(|i| Linear::new(&format!("{name}.l{i}"), dims[i + 1], dims[i], rng))
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn bind(&self, g: &mut Graph<S>) -> MlpVars {
        MlpVars {
            layers: self.layers.iter().map(|l| l.bind(g)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<LinearVars>,
}

impl MlpVars {
    pub fn apply<S: Scalar>(&self, g: &mut Graph<S>, x: VarId) -> Result<VarId> {
        let mut h = x;
        for l in &self.layers {
            h = l.apply(g, h)?;
            h = g.relu(h)?;
        }
        Ok(h)
    }

    /// Row-wise application over an `[n, in]` matrix.
    pub fn apply_rows<S: Scalar>(&self, g: &mut Graph<S>, x: VarId) -> Result<VarId> {
        let mut h = x;
        for l in &self.layers {
            h = l.apply_rows(g, h)?;
            h = g.relu(h)?;
        }
        Ok(h)
    }
}

impl<S: Scalar> Parameters<S> for Mlp<S> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        for l in &self.layers {
            l.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
    }
}

/// Gated recurrent unit.
///
/// Convention: the update gate selects the candidate,
/// `h' = z ⊙ n + (1 - z) ⊙ h`, with `n = tanh(Wn x + Un (r ⊙ h) + bn)`.
/// Driving the update-gate bias to +inf therefore yields the candidate and
/// to -inf freezes the previous state.
#[derive(Debug, Clone)]
pub struct Gru<S: Scalar> {
    pub wz: Linear<S>,
    pub uz: Linear<S>,
    pub wr: Linear<S>,
    pub ur: Linear<S>,
    pub wn: Linear<S>,
    pub un: Linear<S>,
    pub hidden: usize,
}

impl<S: Scalar> Gru<S> {
    pub fn new(name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Gru {
            wz: Linear::new(&format!("{name}.wz"), hidden, in_dim, rng),
            uz: Linear::new(&format!("{name}.uz"), hidden, hidden, rng),
            wr: Linear::new(&format!("{name}.wr"), hidden, in_dim, rng),
            ur: Linear::new(&format!("{name}.ur"), hidden, hidden, rng),
            wn: Linear::new(&format!("{name}.wn"), hidden, in_dim, rng),
            un: Linear::new(&format!("{name}.un"), hidden, hidden, rng),
            hidden,
        }
    }

    pub fn bind(&self, g: &mut Graph<S>) -> GruVars {
        GruVars {
            wz: self.wz.bind(g),
            uz: self.uz.bind(g),
            wr: self.wr.bind(g),
            ur: self.ur.bind(g),
            wn: self.wn.bind(g),
            un: self.un.bind(g),
            hidden: self.hidden,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GruVars {
    pub wz: LinearVars,
    pub uz: LinearVars,
    pub wr: LinearVars,
    pub ur: LinearVars,
    pub wn: LinearVars,
    pub un: LinearVars,
    pub hidden: usize,
}

impl GruVars {
    pub fn step<S: Scalar>(&self, g: &mut Graph<S>, x: VarId, h_prev: VarId) -> Result<VarId> {
        let zx = self.wz.apply(g, x)?;
        let zh = self.uz.apply(g, h_prev)?;
        let zs = g.add(zx, zh)?;
        let z = g.sigmoid(zs)?;

        let rx = self.wr.apply(g, x)?;
        let rh = self.ur.apply(g, h_prev)?;
        let rs = g.add(rx, rh)?;
        let r = g.sigmoid(rs)?;

        let rh_gated = g.mul(r, h_prev)?;
        let nx = self.wn.apply(g, x)?;
        let nh = self.un.apply(g, rh_gated)?;
        let ns = g.add(nx, nh)?;
        let n = g.tanh(ns)?;

        let zn = g.mul(z, n)?;
        let one_minus_z = g.affine(z, -1.0, 1.0)?;
        let zh_keep = g.mul(one_minus_z, h_prev)?;
        g.add(zn, zh_keep)
    }

    pub fn zero_state<S: Scalar>(&self, g: &mut Graph<S>) -> VarId {
        g.constant(&[self.hidden], S::ZERO)
    }
}

impl<S: Scalar> Parameters<S> for Gru<S> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        for l in [&self.wz, &self.uz, &self.wr, &self.ur, &self.wn, &self.un] {
            l.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        for l in [
            &mut self.wz,
            &mut self.uz,
            &mut self.wr,
            &mut self.ur,
            &mut self.wn,
            &mut self.un,
        ] {
            l.visit_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn zeroed_gru(dim: usize) -> Gru<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gru = Gru::<f64>::new("gru", dim, dim, &mut rng);
        gru.visit_mut(&mut |_, t| t.data.iter_mut().for_each(|v| *v = 0.0));
        gru
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        // z = sigmoid(0) = 0.5, candidate tanh(0) = 0, so h' = 0.
        let gru = zeroed_gru(3);
        let mut g = Graph::<f64>::new();
        let vars = gru.bind(&mut g);
        let x = g.constant(&[3], 0.0);
        let h0 = vars.zero_state(&mut g);
        let h1 = vars.step(&mut g, x, h0).unwrap();
        assert_eq!(g.data(h1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn update_gate_saturation_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = 4;
        let mut gru = Gru::<f64>::new("gru", dim, dim, &mut rng);

        let x_data: Vec<f64> = (0..dim).map(|i| 0.3 * (i as f64) - 0.5).collect();
        let h_data: Vec<f64> = (0..dim).map(|i| 0.1 * (i as f64 + 1.0)).collect();

        let run = |gru: &Gru<f64>| -> (Vec<f64>, Vec<f64>) {
            let mut g = Graph::<f64>::new();
            let vars = gru.bind(&mut g);
            let x = g.from_vec(&[dim], x_data.clone()).unwrap();
            let h = g.from_vec(&[dim], h_data.clone()).unwrap();
            let out = vars.step(&mut g, x, h).unwrap();

            // candidate with the same parameters and state
            let rx = vars.wr.apply(&mut g, x).unwrap();
            let rh = vars.ur.apply(&mut g, h).unwrap();
            let rs = g.add(rx, rh).unwrap();
            let r = g.sigmoid(rs).unwrap();
            let rh_gated = g.mul(r, h).unwrap();
            let nx = vars.wn.apply(&mut g, x).unwrap();
            let nh = vars.un.apply(&mut g, rh_gated).unwrap();
            let ns = g.add(nx, nh).unwrap();
            let n = g.tanh(ns).unwrap();
            (g.data(out).to_vec(), g.data(n).to_vec())
        };

        // Update-gate bias +50: output == candidate.
        gru.wz.b.data.iter_mut().for_each(|v| *v = 50.0);
        let (out, cand) = run(&gru);
        for i in 0..dim {
            assert!((out[i] - cand[i]).abs() < 1e-9);
        }

        // Update-gate bias -50: output == previous state.
        gru.wz.b.data.iter_mut().for_each(|v| *v = -50.0);
        let (out, _) = run(&gru);
        for i in 0..dim {
            assert!((out[i] - h_data[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn gru_sequence_gradients_pass_finite_difference_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gru = Gru::<f64>::new("gru", 3, 4, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();

        let mut params = BTreeMap::new();
        gru.visit(&mut |name, t| {
            params.insert(name.to_string(), t.clone());
        });

        let report = check_gradients(&mut params, 1e-5, |g, p| {
            // Rebuild a GRU forward over 5 steps from the probed params.
            let var = |g: &mut Graph<f64>, n: &str| g.param(n, &p[n]);
            let names = [
                "gru.wz", "gru.uz", "gru.wr", "gru.ur", "gru.wn", "gru.un",
            ];
            let mut lv = Vec::new();
            for n in names {
                lv.push(LinearVars {
                    w: var(g, &format!("{n}.w")),
                    b: var(g, &format!("{n}.b")),
                });
            }
            let vars = GruVars {
                wz: lv[0],
                uz: lv[1],
                wr: lv[2],
                ur: lv[3],
                wn: lv[4],
                un: lv[5],
                hidden: 4,
            };
            let mut h = vars.zero_state(g);
            let mut acc = vars.zero_state(g);
            for x in &inputs {
                let xv = g.from_vec(&[3], x.clone())?;
                h = vars.step(g, xv, h)?;
                acc = g.add(acc, h)?;
            }
            let sq = g.mul(acc, acc)?;
            g.sum_axis(sq, 0)
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn mlp_relu_applies_after_every_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::<f64>::new("m", &[2, 3, 2], &mut rng);
        let mut g = Graph::<f64>::new();
        let vars = mlp.bind(&mut g);
        let x = g.from_vec(&[2], vec![0.5, -0.2]).unwrap();
        let y = vars.apply(&mut g, x).unwrap();
        assert!(g.data(y).iter().all(|v| *v >= 0.0));
    }
}
