//! Adam optimizer over named parameters.

use crate::config::AdamConfig;
use crate::nn::Parameters;
use crate::tensor::Scalar;
use std::collections::BTreeMap;

pub struct Adam<S: Scalar> {
    pub cfg: AdamConfig,
    step_count: u64,
    moments: BTreeMap<String, (Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            step_count: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step_count
    }

    /// One update from accumulated gradients keyed by parameter name.
    /// Parameters without a gradient entry are left untouched (that is how
    /// frozen phases work: their parameters simply receive no gradient).
    pub fn step(&mut self, model: &mut dyn Parameters<S>, grads: &BTreeMap<String, Vec<S>>) {
        self.step_count += 1;
        let t = self.step_count as f64;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bias1 = 1.0 - b1.powf(t);
        let bias2 = 1.0 - b2.powf(t);
        let lr = S::from_f64(self.cfg.lr);
        let eps = S::from_f64(self.cfg.eps);
        let b1s = S::from_f64(b1);
        let b2s = S::from_f64(b2);
        let one_m_b1 = S::from_f64(1.0 - b1);
        let one_m_b2 = S::from_f64(1.0 - b2);
        let inv_bias1 = S::from_f64(1.0 / bias1);
        let inv_bias2 = S::from_f64(1.0 / bias2);

        model.visit_mut(&mut |name, tensor| {
            let Some(g) = grads.get(name) else { return };
            debug_assert_eq!(g.len(), tensor.data.len(), "grad size for {name}");
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![S::ZERO; g.len()], vec![S::ZERO; g.len()]));
            for i in 0..g.len() {
                m[i] = b1s * m[i] + one_m_b1 * g[i];
                v[i] = b2s * v[i] + one_m_b2 * g[i] * g[i];
                let m_hat = m[i] * inv_bias1;
                let v_hat = v[i] * inv_bias2;
                tensor.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_lr_leaves_parameters_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = Linear::<f32>::new("l", 3, 4, &mut rng);
        let before: Vec<f32> = layer.w.data.clone();
        let mut adam = Adam::new(AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        });
        let mut grads = BTreeMap::new();
        grads.insert("l.w".to_string(), vec![0.5f32; 12]);
        grads.insert("l.b".to_string(), vec![0.1f32; 3]);
        adam.step(&mut layer, &grads);
        assert_eq!(layer.w.data, before);
    }

    #[test]
    fn single_step_matches_closed_form() {
        // With fresh moments, m_hat = g and v_hat = g^2, so the first step
        // moves every coordinate by lr * sign(g) (up to eps).
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Linear::<f64>::new("l", 2, 2, &mut rng);
        let before = layer.w.data.clone();
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg);
        let g = vec![0.3f64, -0.7, 0.0001, -2.0];
        let mut grads = BTreeMap::new();
        grads.insert("l.w".to_string(), g.clone());
        adam.step(&mut layer, &grads);
        for i in 0..4 {
            let delta = layer.w.data[i] - before[i];
            let want = -0.01 * g[i] / (g[i].abs() + 1e-8);
            assert!(
                (delta - want).abs() < 1e-9,
                "coord {i}: delta {delta}, want {want}"
            );
        }
    }

    #[test]
    fn missing_grads_freeze_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = Linear::<f32>::new("l", 2, 2, &mut rng);
        let before_w = layer.w.data.clone();
        let mut adam = Adam::new(AdamConfig::default());
        let mut grads = BTreeMap::new();
        grads.insert("l.b".to_string(), vec![1.0f32, 1.0]);
        adam.step(&mut layer, &grads);
        assert_eq!(layer.w.data, before_w);
        assert_ne!(layer.b.data, vec![0.0, 0.0]);
    }
}
