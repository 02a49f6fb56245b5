//! Run-length encoding of binary masks, COCO convention: column-major
//! pixel order with runs alternating background/foreground, starting with
//! background.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RleError {
    #[error("rle counts sum to {got}, expected {expected} for a {height}x{width} mask")]
    CountSum {
        got: usize,
        expected: usize,
        height: usize,
        width: usize,
    },
}

/// Binary mask stored row-major at frame resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.width + col] = v;
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    /// Centroid of foreground pixels as (row, col); `None` if empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let mut sr = 0.0f64;
        let mut sc = 0.0f64;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    n += 1;
                    sr += r as f64;
                    sc += c as f64;
                }
            }
        }
        if n == 0 {
            None
        } else {
            Some((sr / n as f64, sc / n as f64))
        }
    }

    /// Area-max downsample onto an `out_h × out_w` grid: an output cell is
    /// foreground iff any pixel of its block is.
    pub fn downsample_max(&self, out_h: usize, out_w: usize) -> Mask {
        let mut out = Mask::zeros(out_h, out_w);
        for gy in 0..out_h {
            let y0 = gy * self.height / out_h;
            let y1 = ((gy + 1) * self.height / out_h).max(y0 + 1).min(self.height);
            for gx in 0..out_w {
                let x0 = gx * self.width / out_w;
                let x1 = ((gx + 1) * self.width / out_w).max(x0 + 1).min(self.width);
                'block: for yy in y0..y1 {
                    for xx in x0..x1 {
                        if self.get(yy, xx) {
                            out.set(gy, gx, true);
                            break 'block;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Decodes COCO-style counts into a mask. Runs are column-major and start
/// with background.
pub fn rle_decode(counts: &[usize], height: usize, width: usize) -> Result<Mask, RleError> {
    let total: usize = counts.iter().sum();
    if total != height * width {
        return Err(RleError::CountSum {
            got: total,
            expected: height * width,
            height,
            width,
        });
    }
    let mut mask = Mask::zeros(height, width);
    let mut pos = 0usize;
    let mut value = false;
    for &run in counts {
        for _ in 0..run {
            if value {
                // column-major: pos = col * height + row
                let col = pos / height;
                let row = pos % height;
                mask.set(row, col, true);
            }
            pos += 1;
        }
        value = !value;
    }
    Ok(mask)
}

/// Encodes a mask into COCO-style counts (column-major, background first).
pub fn rle_encode(mask: &Mask) -> Vec<usize> {
    let n = mask.height * mask.width;
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0usize;
    for pos in 0..n {
        let col = pos / mask.height;
        let row = pos % mask.height;
        let v = mask.get(row, col);
        if v == current {
            run += 1;
        } else {
            counts.push(run);
            current = v;
            run = 1;
        }
    }
    counts.push(run);
    counts
}
