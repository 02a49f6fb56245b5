//! Clip construction: a video of T frames is split into L contiguous
//! near-equal sub-sequences and one frame is sampled per sub-sequence.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClipError {
    #[error("clip length must be positive")]
    ZeroLength,
}

/// Sub-sequence boundaries: `[floor(i*T/L), floor((i+1)*T/L))`.
fn bounds(total: usize, l: usize, i: usize) -> (usize, usize) {
    (i * total / l, (i + 1) * total / l)
}

/// Samples L frame indices, one uniform per sub-sequence. When T < L some
/// sub-sequences are empty; those repeat the last frame of their
/// predecessor.
pub fn sample_clip(
    total_frames: usize,
    l: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, ClipError> {
    if l == 0 {
        return Err(ClipError::ZeroLength);
    }
    assert!(total_frames >= 1, "video must have at least one frame");
    let mut out = Vec::with_capacity(l);
    for i in 0..l {
        let (lo, hi) = bounds(total_frames, l, i);
        if hi > lo {
            out.push(rng.random_range(lo..hi));
        } else {
            out.push(lo.saturating_sub(1));
        }
    }
    out
        .iter()
        .zip(out.iter().skip(1))
        .for_each(|(a, b)| debug_assert!(a <= b));
    Ok(out)
}
