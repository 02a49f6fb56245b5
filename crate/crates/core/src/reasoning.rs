//! Object relation reasoning over frame pairs.
//!
//! For each time step t a past frame t' < t is sampled (arrow of time),
//! cliques are enumerated across the two frames' object sets, a learned
//! mapping h_theta scores every clique, the scores are summed into a
//! single interaction vector g_t, and a recurrent unit f_phi integrates
//! the sequence of g_t into the object reasoning state. Frames are
//! 0-indexed here; frame 0 has no admissible past, contributes g = 0, and
//! still advances the recurrence.

use crate::descriptors::Descriptor;
use crate::nn::{GruVars, MlpVars};
use crate::tensor::{Graph, Result as TResult, Scalar, TensorError, VarId};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    InterFrame,
    IntraFrame,
    PixelCells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TPrimePolicy {
    UniformPast,
    PreviousFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FPhiKind {
    Recurrent,
    Mlp,
}

/// How clique contributions are ordered before summation. `Sorted`
/// canonicalizes each frame's descriptor list by value, which makes the
/// result exactly invariant to within-frame permutations; `AsGiven` keeps
/// input order (invariant only up to float reassociation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionOrder {
    Sorted,
    AsGiven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingConfig {
    pub mode: PairingMode,
    pub clique_size: usize,
    pub t_prime_policy: TPrimePolicy,
    pub f_phi_kind: FPhiKind,
    #[serde(default = "default_reduction")]
    pub reduction: ReductionOrder,
    /// Clique-1 draws singletons from both frames by default; set false to
    /// restrict to the current frame.
    #[serde(default = "default_true")]
    pub clique1_both_frames: bool,
}

fn default_reduction() -> ReductionOrder {
    ReductionOrder::Sorted
}
fn default_true() -> bool {
    true
}

impl Default for PairingConfig {
    /// The proposed model: inter-frame pairwise cliques with recurrent
    /// integration.
    fn default() -> Self {
        PairingConfig {
            mode: PairingMode::InterFrame,
            clique_size: 2,
            t_prime_policy: TPrimePolicy::UniformPast,
            f_phi_kind: FPhiKind::Recurrent,
            reduction: ReductionOrder::Sorted,
            clique1_both_frames: true,
        }
    }
}

/// Samples the past frame index for step `t` (0-indexed). Returns `None`
/// for `t = 0`, where no past exists.
pub fn sample_t_prime(t: usize, policy: TPrimePolicy, rng: &mut impl Rng) -> Option<usize> {
    if t == 0 {
        return None;
    }
    Some(match policy {
        TPrimePolicy::PreviousFrame => t - 1,
        TPrimePolicy::UniformPast => rng.random_range(0..t),
    })
}

/// Clique member: (side, index) with side 0 = past frame t', 1 = frame t.
pub type Clique = Vec<(usize, usize)>;

/// Enumerates cliques over the two object sets. Members within a clique
/// are ordered by (frame, then instance position).
pub fn enumerate_cliques(k_prime: usize, k: usize, cfg: &PairingConfig) -> Vec<Clique> {
    let mut out = Vec::new();
    match (cfg.mode, cfg.clique_size) {
        (PairingMode::IntraFrame, 1) => {
            for i in 0..k {
                out.push(vec![(1, i)]);
            }
        }
        (PairingMode::IntraFrame, 2) => {
            for i in 0..k {
                for j in i + 1..k {
                    out.push(vec![(1, i), (1, j)]);
                }
            }
        }
        (PairingMode::IntraFrame, 3) => {
            for i in 0..k {
                for j in i + 1..k {
                    for l in j + 1..k {
                        out.push(vec![(1, i), (1, j), (1, l)]);
                    }
                }
            }
        }
        (_, 1) => {
            if cfg.clique1_both_frames {
                for i in 0..k_prime {
                    out.push(vec![(0, i)]);
                }
            }
            for i in 0..k {
                out.push(vec![(1, i)]);
            }
        }
        (_, 2) => {
            // all ordered (past, current) pairs
            for j in 0..k_prime {
                for i in 0..k {
                    out.push(vec![(0, j), (1, i)]);
                }
            }
        }
        (_, 3) => {
            // unordered triples over the union with >= 1 member per frame
            let union: Vec<(usize, usize)> = (0..k_prime)
                .map(|i| (0, i))
                .chain((0..k).map(|i| (1, i)))
                .collect();
            let n = union.len();
            for a in 0..n {
                for b in a + 1..n {
                    for c in b + 1..n {
                        let tri = [union[a], union[b], union[c]];
                        let sides: Vec<usize> = tri.iter().map(|m| m.0).collect();
                        if sides.contains(&0) && sides.contains(&1) {
                            out.push(tri.to_vec());
                        }
                    }
                }
            }
        }
        (_, s) => panic!("unsupported clique size {s}"),
    }
    out
}

/// Interaction vector plus optional per-clique trace for visualization.
pub struct RelateOutput {
    pub g_t: VarId,
    /// `[n_cliques, H]` rows of h_theta output, present when traced.
    pub rows: Option<VarId>,
    /// (class of past member, class of current member) per pair clique;
    /// only filled for traced size-2 inter-frame enumeration.
    pub pair_classes: Vec<(usize, usize)>,
}

fn sort_by_value<S: Scalar>(g: &Graph<S>, descs: &[Descriptor]) -> Vec<Descriptor> {
    let mut sorted = descs.to_vec();
    sorted.sort_by(|a, b| {
        let da = g.data(a.o);
        let db = g.data(b.o);
        for (x, y) in da.iter().zip(db) {
            match x.partial_cmp(y) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(ord) => return ord,
            }
        }
        std::cmp::Ordering::Equal
    });
    sorted
}

/// Sums h_theta over all enumerated cliques of the two descriptor sets.
/// Empty enumeration yields the zero vector of dimension H.
#[allow(clippy::too_many_arguments)]
pub fn relate<S: Scalar>(
    g: &mut Graph<S>,
    descs_past: &[Descriptor],
    descs_cur: &[Descriptor],
    cfg: &PairingConfig,
    h_theta: &MlpVars,
    relation_dim: usize,
    trace: bool,
) -> TResult<RelateOutput> {
    let (past, cur);
    let (descs_past, descs_cur) = match cfg.reduction {
        ReductionOrder::Sorted => {
            past = sort_by_value(g, descs_past);
            cur = sort_by_value(g, descs_cur);
            (&past[..], &cur[..])
        }
        ReductionOrder::AsGiven => (descs_past, descs_cur),
    };

    let cliques = enumerate_cliques(descs_past.len(), descs_cur.len(), cfg);
    if cliques.is_empty() {
        return Ok(RelateOutput {
            g_t: g.constant(&[relation_dim], S::ZERO),
            rows: None,
            pair_classes: Vec::new(),
        });
    }

    let side = |s: usize, i: usize| -> &Descriptor {
        if s == 0 {
            &descs_past[i]
        } else {
            &descs_cur[i]
        }
    };

    let mut inputs = Vec::with_capacity(cliques.len());
    let mut pair_classes = Vec::new();
    for clique in &cliques {
        let members: Vec<VarId> = clique.iter().map(|&(s, i)| side(s, i).o).collect();
        let joined = g.concat(&members)?;
        let expected = g.shape(joined)[0];
        let h_in = h_theta.layers[0].w;
        let h_in_dim = g.shape(h_in)[1];
        if expected != h_in_dim {
            return Err(TensorError::ShapeMismatch {
                op: "relate",
                lhs: vec![expected],
                rhs: vec![h_in_dim],
            });
        }
        inputs.push(joined);
        if trace && clique.len() == 2 {
            pair_classes.push((
                side(clique[0].0, clique[0].1).class_index,
                side(clique[1].0, clique[1].1).class_index,
            ));
        }
    }
    let x = g.stack_rows(&inputs)?;
    let rows = h_theta.apply_rows(g, x)?;
    let g_t = g.sum_axis(rows, 0)?;
    Ok(RelateOutput {
        g_t,
        rows: trace.then_some(rows),
        pair_classes,
    })
}

/// One integration step of f_phi: gated recurrent update, or the ablated
/// feed-forward form that ignores the previous state.
pub enum FPhiVars {
    Recurrent(GruVars),
    Mlp(MlpVars),
}

impl FPhiVars {
    pub fn step<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        g_t: VarId,
        r_prev: VarId,
    ) -> TResult<VarId> {
        match self {
            FPhiVars::Recurrent(gru) => gru.step(g, g_t, r_prev),
            FPhiVars::Mlp(mlp) => mlp.apply(g, g_t),
        }
    }

    pub fn state_dim<S: Scalar>(&self, g: &Graph<S>) -> usize {
        match self {
            FPhiVars::Recurrent(gru) => gru.hidden,
            FPhiVars::Mlp(mlp) => {
                let w = mlp.layers.last().unwrap().w;
                g.shape(w)[0]
            }
        }
    }
}

/// Runs the reasoning process over a clip: for each t, relate the sampled
/// past frame's objects to the current frame's and advance f_phi. Returns
/// the accumulated state sum_t r_t.
#[allow(clippy::too_many_arguments)]
pub fn run_clip<S: Scalar>(
    g: &mut Graph<S>,
    per_frame: &[Vec<Descriptor>],
    t_primes: &[Option<usize>],
    cfg: &PairingConfig,
    h_theta: &MlpVars,
    relation_dim: usize,
    f_phi: &FPhiVars,
) -> TResult<VarId> {
    assert_eq!(per_frame.len(), t_primes.len());
    assert!(!per_frame.is_empty(), "clip must have at least one frame");
    let d_r = f_phi.state_dim(g);
    let mut r = g.constant(&[d_r], S::ZERO);
    let mut acc = g.constant(&[d_r], S::ZERO);
    let empty: Vec<Descriptor> = Vec::new();
    for (t, descs_t) in per_frame.iter().enumerate() {
        let g_t = if cfg.mode == PairingMode::IntraFrame {
            // within-frame relations exist at every step, no past needed
            relate(g, &empty, descs_t, cfg, h_theta, relation_dim, false)?.g_t
        } else {
            match t_primes[t] {
                None => g.constant(&[relation_dim], S::ZERO),
                Some(tp) => {
                    assert!(tp < t, "t' must precede t");
                    relate(g, &per_frame[tp], descs_t, cfg, h_theta, relation_dim, false)?.g_t
                }
            }
        };
        r = f_phi.step(g, g_t, r)?;
        acc = g.add(acc, r)?;
    }
    Ok(acc)
}
