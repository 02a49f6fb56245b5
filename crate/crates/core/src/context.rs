//! Global motion/context stream: spatial global average pooling of the
//! activity-head features followed by recurrent integration over time.

use crate::nn::GruVars;
use crate::tensor::{Graph, Result as TResult, Scalar, VarId};
use serde::{Deserialize, Serialize};

/// How per-step context states are aggregated into the clip-level vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextAggregation {
    /// Sum of the hidden states over time.
    SumStates,
    /// The final hidden state alone.
    LastState,
    /// No recurrence at all: mean of the pooled per-frame vectors (the
    /// GAP-over-space-and-time baseline).
    MeanPool,
}

/// Per-channel mean over the spatial cells of `[D, H, W]`.
pub fn gap<S: Scalar>(g: &mut Graph<S>, v_frame: VarId) -> TResult<VarId> {
    let m = g.mean_axis(v_frame, 2)?;
    g.mean_axis(m, 1)
}

/// Integrates per-frame context vectors. `v_frames` are the GAP outputs
/// in time order.
pub fn run_context<S: Scalar>(
    g: &mut Graph<S>,
    v_frames: &[VarId],
    f_gamma: &GruVars,
    aggregation: ContextAggregation,
) -> TResult<VarId> {
    assert!(!v_frames.is_empty(), "clip must have at least one frame");
    if aggregation == ContextAggregation::MeanPool {
        let mut acc = v_frames[0];
        for &v in &v_frames[1..] {
            acc = g.add(acc, v)?;
        }
        return g.scale(acc, 1.0 / v_frames.len() as f64);
    }
    let mut s = f_gamma.zero_state(g);
    let mut acc = f_gamma.zero_state(g);
    for &v in v_frames {
        s = f_gamma.step(g, v, s)?;
        acc = g.add(acc, s)?;
    }
    Ok(match aggregation {
        ContextAggregation::SumStates => acc,
        ContextAggregation::LastState => s,
        ContextAggregation::MeanPool => unreachable!(),
    })
}
