//! Final classification: one linear head per stream, logit averaging, and
//! the two-term training loss with the auxiliary per-object classifier.

use crate::nn::{Linear, LinearVars, Parameters};
use crate::tensor::loss::softmax_stable;
use crate::tensor::{Graph, Result as TResult, Scalar, Tensor, VarId};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    SingleLabel,
    MultiLabel,
}

/// W (activity head), Z (object head), R (auxiliary object classifier).
#[derive(Debug, Clone)]
pub struct HeadParams<S: Scalar> {
    pub w: Linear<S>,
    pub z: Linear<S>,
    pub r: Linear<S>,
}

impl<S: Scalar> HeadParams<S> {
    pub fn new(
        num_activities: usize,
        d_s: usize,
        d_r: usize,
        num_object_classes: usize,
        d_u: usize,
        rng: &mut impl Rng,
    ) -> Self {
        HeadParams {
            w: Linear::new("heads.w", num_activities, d_s, rng),
            z: Linear::new("heads.z", num_activities, d_r, rng),
            r: Linear::new("heads.r", num_object_classes, d_u, rng),
        }
    }

    pub fn bind(&self, g: &mut Graph<S>) -> HeadVars {
        HeadVars {
            w: self.w.bind(g),
            z: self.z.bind(g),
            r: self.r.bind(g),
        }
    }
}

impl<S: Scalar> Parameters<S> for HeadParams<S> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.w.visit(f);
        self.z.visit(f);
        self.r.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.w.visit_mut(f);
        self.z.visit_mut(f);
        self.r.visit_mut(f);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub w: LinearVars,
    pub z: LinearVars,
    pub r: LinearVars,
}

/// Per-stream logits and their average, kept on-graph for the loss.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub y1: VarId,
    pub y2: VarId,
    pub averaged: VarId,
}

impl HeadVars {
    /// `y1 = W h`, `y2 = Z r`, averaged logits `(y1 + y2) / 2`.
    pub fn predict<S: Scalar>(&self, g: &mut Graph<S>, h: VarId, r: VarId) -> TResult<Prediction> {
        let y1 = self.w.apply(g, h)?;
        let y2 = self.z.apply(g, r)?;
        let sum = g.add(y1, y2)?;
        let averaged = g.scale(sum, 0.5)?;
        Ok(Prediction { y1, y2, averaged })
    }

    /// Auxiliary object-class logits from a pooled appearance vector.
    pub fn classify_object<S: Scalar>(&self, g: &mut Graph<S>, u: VarId) -> TResult<VarId> {
        self.r.apply(g, u)
    }
}

/// Final probability vector from averaged logits (inference side).
pub fn final_probabilities<S: Scalar>(logits: &[S], mode: LabelMode) -> Vec<S> {
    match mode {
        LabelMode::SingleLabel => softmax_stable(logits),
        LabelMode::MultiLabel => logits.iter().map(|z| z.sigmoid()).collect(),
    }
}

/// Clip-level target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActivityTarget {
    Single(usize),
    /// One 0/1 entry per activity class.
    Multi(Vec<f32>),
}

/// Total training loss: activity term on the averaged logits plus the sum
/// of auxiliary cross-entropies over all (frame, object) pairs. Auxiliary
/// targets are hard labels unless `soft_aux` distributions are supplied.
pub fn total_loss<S: Scalar>(
    g: &mut Graph<S>,
    prediction: &Prediction,
    target: &ActivityTarget,
    aux_logits: &[VarId],
    aux_targets: &[usize],
) -> TResult<VarId> {
    assert_eq!(aux_logits.len(), aux_targets.len());
    let mut loss = activity_loss(g, prediction.averaged, target)?;
    for (&logits, &t) in aux_logits.iter().zip(aux_targets) {
        let aux = g.cross_entropy_logits(logits, t)?;
        loss = g.add(loss, aux)?;
    }
    Ok(loss)
}

/// Soft-target variant of the auxiliary term: cross-entropy against a full
/// distribution, `-sum_c q_c log softmax(z)_c`.
pub fn total_loss_soft_aux<S: Scalar>(
    g: &mut Graph<S>,
    prediction: &Prediction,
    target: &ActivityTarget,
    aux_logits: &[VarId],
    aux_distributions: &[Vec<f32>],
) -> TResult<VarId> {
    assert_eq!(aux_logits.len(), aux_distributions.len());
    let mut loss = activity_loss(g, prediction.averaged, target)?;
    for (&logits, dist) in aux_logits.iter().zip(aux_distributions) {
        let mut term: Option<VarId> = None;
        for (c, q) in dist.iter().enumerate() {
            if *q == 0.0 {
                continue;
            }
            let ce = g.cross_entropy_logits(logits, c)?;
            let weighted = g.scale(ce, *q as f64)?;
            term = Some(match term {
                None => weighted,
                Some(t) => g.add(t, weighted)?,
            });
        }
        if let Some(t) = term {
            loss = g.add(loss, t)?;
        }
    }
    Ok(loss)
}

pub fn activity_loss<S: Scalar>(
    g: &mut Graph<S>,
    averaged_logits: VarId,
    target: &ActivityTarget,
) -> TResult<VarId> {
    match target {
        ActivityTarget::Single(t) => g.cross_entropy_logits(averaged_logits, *t),
        ActivityTarget::Multi(bits) => {
            let targets: Vec<f64> = bits.iter().map(|b| *b as f64).collect();
            g.bce_with_logits_mean(averaged_logits, &targets)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn heads(rng: &mut ChaCha8Rng) -> HeadParams<f64> {
        HeadParams::new(5, 4, 3, 6, 7, rng)
    }

    #[test]
    fn equal_streams_average_to_themselves() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hp = heads(&mut rng);
        // make the two heads identical mappings over inputs chosen equal
        hp.z = hp.w.clone();
        let mut g = Graph::<f64>::new();
        // z head expects d_r=4 now (cloned w), so feed the same vector
        let hv = HeadVars {
            w: hp.w.bind(&mut g),
            z: hp.z.bind(&mut g),
            r: hp.r.bind(&mut g),
        };
        let h = g.from_vec(&[4], vec![0.1, -0.4, 0.9, 0.0]).unwrap();
        let p = hv.predict(&mut g, h, h).unwrap();
        assert_eq!(g.data(p.y1), g.data(p.y2));
        let probs = final_probabilities(g.data(p.averaged), LabelMode::SingleLabel);
        let direct = final_probabilities(g.data(p.y1), LabelMode::SingleLabel);
        for (a, b) in probs.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_heads_give_uniform_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hp = heads(&mut rng);
        hp.visit_mut(&mut |_, t| t.data.iter_mut().for_each(|v| *v = 0.0));
        let mut g = Graph::<f64>::new();
        let hv = hp.bind(&mut g);
        let h = g.from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = g.from_vec(&[3], vec![-1.0, 0.5, 2.0]).unwrap();
        let p = hv.predict(&mut g, h, r).unwrap();
        let probs = final_probabilities(g.data(p.averaged), LabelMode::SingleLabel);
        for v in probs {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_invariant_under_common_logit_shift() {
        let mut g = Graph::<f64>::new();
        let y = g.from_vec(&[4], vec![0.3, 1.2, -0.5, 0.9]).unwrap();
        let shifted = g.affine(y, 1.0, 7.5).unwrap();
        let p1 = final_probabilities(g.data(y), LabelMode::SingleLabel);
        let p2 = final_probabilities(g.data(shifted), LabelMode::SingleLabel);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&p1), argmax(&p2));
    }

    #[test]
    fn uniform_prediction_first_term_is_ln_n() {
        let mut g = Graph::<f64>::new();
        let y1 = g.constant(&[5], 0.0);
        let y2 = g.constant(&[5], 0.0);
        let avg = g.constant(&[5], 0.0);
        let pred = Prediction {
            y1,
            y2,
            averaged: avg,
        };
        let loss = total_loss(&mut g, &pred, &ActivityTarget::Single(3), &[], &[]).unwrap();
        assert!((g.scalar(loss) - 5.0f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn no_objects_means_first_term_alone() {
        let mut g = Graph::<f64>::new();
        let avg = g.from_vec(&[3], vec![0.2, -0.1, 0.4]).unwrap();
        let pred = Prediction {
            y1: avg,
            y2: avg,
            averaged: avg,
        };
        let with_aux = total_loss(&mut g, &pred, &ActivityTarget::Single(1), &[], &[]).unwrap();
        let first = activity_loss(&mut g, avg, &ActivityTarget::Single(1)).unwrap();
        assert_eq!(g.scalar(with_aux), g.scalar(first));
    }

    #[test]
    fn total_loss_equals_recomputed_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let hp = heads(&mut rng);
        let mut g = Graph::<f64>::new();
        let hv = hp.bind(&mut g);
        use rand::Rng;
        let hdata: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rdata: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = g.from_vec(&[4], hdata).unwrap();
        let r = g.from_vec(&[3], rdata).unwrap();
        let pred = hv.predict(&mut g, h, r).unwrap();

        let us: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut aux_logits = Vec::new();
        for u in &us {
            let uv = g.from_vec(&[7], u.clone()).unwrap();
            aux_logits.push(hv.classify_object(&mut g, uv).unwrap());
        }
        let aux_targets = vec![0usize, 2, 5];
        let total = total_loss(
            &mut g,
            &pred,
            &ActivityTarget::Single(4),
            &aux_logits,
            &aux_targets,
        )
        .unwrap();

        // recompute the two terms independently
        let term1 = {
            let l = g
                .cross_entropy_logits(pred.averaged, 4)
                .unwrap();
            g.scalar(l)
        };
        let mut term2 = 0.0;
        for (lg, t) in aux_logits.iter().zip(&aux_targets) {
            let l = g.cross_entropy_logits(*lg, *t).unwrap();
            term2 += g.scalar(l);
        }
        assert!((g.scalar(total) - (term1 + term2)).abs() <= 1e-7);
    }

    #[test]
    fn aux_classifier_uniform_and_identity_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut hp = HeadParams::<f64>::new(2, 3, 3, 4, 4, &mut rng);
        hp.r.w.data.iter_mut().for_each(|v| *v = 0.0);
        hp.r.b.data.iter_mut().for_each(|v| *v = 0.0);
        // identity rows: class c responds to coordinate c
        for c in 0..4 {
            hp.r.w.data[c * 4 + c] = 1.0;
        }
        let mut g = Graph::<f64>::new();
        let hv = hp.bind(&mut g);

        let zero_u = g.constant(&[4], 0.0);
        let logits = hv.classify_object(&mut g, zero_u).unwrap();
        let probs = final_probabilities(g.data(logits), LabelMode::SingleLabel);
        for p in probs {
            assert!((p - 0.25).abs() < 1e-12);
        }

        let hot = g.from_vec(&[4], vec![0.0, 0.0, 5.0, 0.0]).unwrap();
        let logits = hv.classify_object(&mut g, hot).unwrap();
        let p = g.data(logits);
        let argmax = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 2);
    }

    #[test]
    fn multi_label_uses_mean_bce() {
        let mut g = Graph::<f64>::new();
        let avg = g.constant(&[4], 0.0);
        let pred = Prediction {
            y1: avg,
            y2: avg,
            averaged: avg,
        };
        let target = ActivityTarget::Multi(vec![1.0, 0.0, 1.0, 0.0]);
        let loss = total_loss(&mut g, &pred, &target, &[], &[]).unwrap();
        // sigmoid(0) = 0.5 for every class: mean BCE = ln 2
        assert!((g.scalar(loss) - 2.0f64.ln()).abs() < 1e-12);
    }
}
