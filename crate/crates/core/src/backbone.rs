//! Two-head spatio-temporal convolutional trunk.
//!
//! A stack of conv blocks shares features up to `split_at`, then forks
//! into an object branch (higher spatial resolution via a stride
//! override) and an activity branch. Each block is conv -> ReLU, where
//! the conv is 2-D, full 3-D, or separable 2.5-D per the inflation
//! setting; temporal length is preserved through every block.

use crate::nn::{join, Parameters};
use crate::tensor::{Graph, Result, Scalar, Tensor, TensorError, VarId};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inflation {
    #[serde(rename = "2d")]
    Plain2d,
    #[serde(rename = "3d")]
    Full3d,
    #[serde(rename = "2p5d")]
    Sep2p1d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub channels_out: usize,
    pub inflation: Inflation,
    pub spatial_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub blocks: Vec<BlockConfig>,
    /// Index of the first block that is branch-private; blocks before it
    /// are shared between the two heads.
    pub split_at: usize,
    /// Spatial stride used by the final block of the object branch in
    /// place of its configured stride.
    pub object_head_stride_override: usize,
    pub spatial_kernel: usize,
    pub temporal_kernel: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        // Desk-scale default: 4 blocks, fork before the last one, 2.5-D
        // inflation on the first and last blocks. On 3x4x64x64 input this
        // yields U: 64x4x16x16 and V: 64x4x8x8.
        BackboneConfig {
            blocks: vec![
                BlockConfig {
                    channels_out: 16,
                    inflation: Inflation::Sep2p1d,
                    spatial_stride: 1,
                },
                BlockConfig {
                    channels_out: 32,
                    inflation: Inflation::Plain2d,
                    spatial_stride: 2,
                },
                BlockConfig {
                    channels_out: 64,
                    inflation: Inflation::Plain2d,
                    spatial_stride: 2,
                },
                BlockConfig {
                    channels_out: 64,
                    inflation: Inflation::Sep2p1d,
                    spatial_stride: 2,
                },
            ],
            split_at: 3,
            object_head_stride_override: 1,
            spatial_kernel: 3,
            temporal_kernel: 3,
        }
    }
}

impl BackboneConfig {
    /// Returns a copy with the given block switched to a 3-D or 2.5-D
    /// kernel.
    pub fn inflate(&self, block_index: usize, mode: Inflation) -> Result<BackboneConfig> {
        if block_index >= self.blocks.len() {
            return Err(TensorError::BadShape {
                op: "inflate",
                shape: vec![block_index],
                reason: format!("backbone has {} blocks", self.blocks.len()),
            });
        }
        let mut cfg = self.clone();
        cfg.blocks[block_index].inflation = mode;
        Ok(cfg)
    }

    /// Construction-time validation: the fork must leave at least one
    /// branch-private block and every stride must divide the spatial dims
    /// exactly.
    pub fn validate(&self, input_h: usize, input_w: usize) -> Result<()> {
        if self.blocks.is_empty() || self.split_at >= self.blocks.len() {
            return Err(TensorError::BadShape {
                op: "backbone_config",
                shape: vec![self.split_at],
                reason: format!(
                    "split_at must be < number of blocks ({})",
                    self.blocks.len()
                ),
            });
        }
        if self.object_head_stride_override == 0 {
            return Err(TensorError::BadShape {
                op: "backbone_config",
                shape: vec![],
                reason: "zero object-head stride override".into(),
            });
        }
        let mut h = input_h;
        let mut w = input_w;
        let last = self.blocks.len() - 1;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.spatial_stride == 0 {
                return Err(TensorError::BadShape {
                    op: "backbone_config",
                    shape: vec![i],
                    reason: "zero stride".into(),
                });
            }
            let strides: &[usize] = if i == last {
                &[b.spatial_stride, self.object_head_stride_override]
            } else {
                &[b.spatial_stride]
            };
            for &s in strides {
                if h % s != 0 || w % s != 0 {
                    return Err(TensorError::BadShape {
                        op: "backbone_config",
                        shape: vec![h, w],
                        reason: format!("spatial dims not divisible by stride {s} at block {i}"),
                    });
                }
            }
            h /= b.spatial_stride;
            w /= b.spatial_stride;
        }
        Ok(())
    }

    pub fn object_channels(&self) -> usize {
        self.blocks.last().unwrap().channels_out
    }

    pub fn activity_channels(&self) -> usize {
        self.blocks.last().unwrap().channels_out
    }

    /// Spatial output dims of (object head, activity head).
    pub fn output_dims(&self, input_h: usize, input_w: usize) -> ((usize, usize), (usize, usize)) {
        let mut h = input_h;
        let mut w = input_w;
        for b in &self.blocks[..self.split_at] {
            h /= b.spatial_stride;
            w /= b.spatial_stride;
        }
        let (mut hu, mut wu, mut hv, mut wv) = (h, w, h, w);
        let last = self.blocks.len() - 1;
        for (i, b) in self.blocks.iter().enumerate().skip(self.split_at) {
            let obj_stride = if i == last {
                self.object_head_stride_override
            } else {
                b.spatial_stride
            };
            hu /= obj_stride;
            wu /= obj_stride;
            hv /= b.spatial_stride;
            wv /= b.spatial_stride;
        }
        ((hu, wu), (hv, wv))
    }
}

/// One conv block's parameters.
#[derive(Debug, Clone)]
pub enum BlockParams<S: Scalar> {
    Plain2d {
        w: Tensor<S>,
        b: Tensor<S>,
    },
    Full3d {
        w: Tensor<S>,
        b: Tensor<S>,
    },
    Sep2p1d {
        ws: Tensor<S>,
        bs: Tensor<S>,
        wt: Tensor<S>,
        bt: Tensor<S>,
    },
}

#[derive(Debug, Clone)]
pub struct ConvBlock<S: Scalar> {
    pub name: String,
    pub params: BlockParams<S>,
    pub stride: usize,
    pub pad: usize,
}

impl<S: Scalar> ConvBlock<S> {
    fn new(
        name: String,
        c_in: usize,
        cfg: &BlockConfig,
        stride: usize,
        k: usize,
        kt: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let c_out = cfg.channels_out;
        let fan_in_2d = c_in * k * k;
        let fan_out_2d = c_out * k * k;
        let params = match cfg.inflation {
            Inflation::Plain2d => BlockParams::Plain2d {
                w: Tensor::glorot_uniform(&[c_out, c_in, k, k], fan_in_2d, fan_out_2d, rng),
                b: Tensor::zeros_param(&[c_out]),
            },
            Inflation::Full3d => BlockParams::Full3d {
                w: Tensor::glorot_uniform(
                    &[c_out, c_in, kt, k, k],
                    c_in * kt * k * k,
                    c_out * kt * k * k,
                    rng,
                ),
                b: Tensor::zeros_param(&[c_out]),
            },
            Inflation::Sep2p1d => BlockParams::Sep2p1d {
                ws: Tensor::glorot_uniform(&[c_out, c_in, k, k], fan_in_2d, fan_out_2d, rng),
                bs: Tensor::zeros_param(&[c_out]),
                wt: Tensor::glorot_uniform(&[c_out, c_out, kt], c_out * kt, c_out * kt, rng),
                bt: Tensor::zeros_param(&[c_out]),
            },
        };
        ConvBlock {
            name,
            params,
            stride,
            pad: k / 2,
        }
    }

    /// conv(+bias) -> ReLU; separable blocks run their temporal conv and a
    /// second ReLU.
    pub fn forward(&self, g: &mut Graph<S>, x: VarId) -> Result<VarId> {
        let t_in = g.shape(x)[1];
        let y = match &self.params {
            BlockParams::Plain2d { w, b } => {
                let wv = g.param(&join(&self.name, "w"), w);
                let bv = g.param(&join(&self.name, "b"), b);
                let c = g.conv2d(x, wv, bv, self.stride, self.pad)?;
                g.relu(c)?
            }
            BlockParams::Full3d { w, b } => {
                let wv = g.param(&join(&self.name, "w"), w);
                let bv = g.param(&join(&self.name, "b"), b);
                let c = g.conv3d(x, wv, bv, self.stride, self.pad)?;
                g.relu(c)?
            }
            BlockParams::Sep2p1d { ws, bs, wt, bt } => {
                let wsv = g.param(&join(&self.name, "ws"), ws);
                let bsv = g.param(&join(&self.name, "bs"), bs);
                let wtv = g.param(&join(&self.name, "wt"), wt);
                let btv = g.param(&join(&self.name, "bt"), bt);
                let c = g.conv2d(x, wsv, bsv, self.stride, self.pad)?;
                let c = g.relu(c)?;
                let c = g.conv_temporal(c, wtv, btv)?;
                g.relu(c)?
            }
        };
        assert_eq!(g.shape(y)[1], t_in, "temporal dimension must be preserved");
        Ok(y)
    }

    /// Converts a 2-D block in place so it initially computes the same
    /// per-frame function: 2.5-D gets the old spatial kernel plus a
    /// centered-identity temporal kernel; 3-D embeds the old kernel in the
    /// center temporal tap with zeros elsewhere.
    pub fn inflate_preserving(&mut self, mode: Inflation, kt: usize) -> Result<()> {
        let (w2, b2) = match &self.params {
            BlockParams::Plain2d { w, b } => (w.clone(), b.clone()),
            _ => {
                return Err(TensorError::BadShape {
                    op: "inflate",
                    shape: vec![],
                    reason: "only 2-D blocks can be inflated with weight transfer".into(),
                })
            }
        };
        let (co, ci, kh, kw) = (w2.shape[0], w2.shape[1], w2.shape[2], w2.shape[3]);
        self.params = match mode {
            Inflation::Sep2p1d => {
                let mut wt = Tensor::zeros_param(&[co, co, kt]);
                let center = (kt - 1) / 2;
                for i in 0..co {
                    wt.data[(i * co + i) * kt + center] = S::ONE;
                }
                BlockParams::Sep2p1d {
                    ws: w2,
                    bs: b2,
                    wt,
                    bt: Tensor::zeros_param(&[co]),
                }
            }
            Inflation::Full3d => {
                let mut w3 = Tensor::zeros_param(&[co, ci, kt, kh, kw]);
                let center = (kt - 1) / 2;
                for oc in 0..co {
                    for ic in 0..ci {
                        for y in 0..kh {
                            for x in 0..kw {
                                let src = ((oc * ci + ic) * kh + y) * kw + x;
                                let dst = (((oc * ci + ic) * kt + center) * kh + y) * kw + x;
                                w3.data[dst] = w2.data[src];
                            }
                        }
                    }
                }
                BlockParams::Full3d { w: w3, b: b2 }
            }
            Inflation::Plain2d => BlockParams::Plain2d { w: w2, b: b2 },
        };
        Ok(())
    }
}

impl<S: Scalar> Parameters<S> for ConvBlock<S> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        match &self.params {
            BlockParams::Plain2d { w, b } | BlockParams::Full3d { w, b } => {
                f(&join(&self.name, "w"), w);
                f(&join(&self.name, "b"), b);
            }
            BlockParams::Sep2p1d { ws, bs, wt, bt } => {
                f(&join(&self.name, "ws"), ws);
                f(&join(&self.name, "bs"), bs);
                f(&join(&self.name, "wt"), wt);
                f(&join(&self.name, "bt"), bt);
            }
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        let name = self.name.clone();
        match &mut self.params {
            BlockParams::Plain2d { w, b } | BlockParams::Full3d { w, b } => {
                f(&join(&name, "w"), w);
                f(&join(&name, "b"), b);
            }
            BlockParams::Sep2p1d { ws, bs, wt, bt } => {
                f(&join(&name, "ws"), ws);
                f(&join(&name, "bs"), bs);
                f(&join(&name, "wt"), wt);
                f(&join(&name, "bt"), bt);
            }
        }
    }
}

/// Object-head and activity-head feature maps, `[D, T, H, W]` each.
#[derive(Debug, Clone, Copy)]
pub struct FeatureMaps {
    pub u: VarId,
    pub v: VarId,
}

#[derive(Debug, Clone)]
pub struct Backbone<S: Scalar> {
    pub cfg: BackboneConfig,
    pub shared: Vec<ConvBlock<S>>,
    pub object_branch: Vec<ConvBlock<S>>,
    pub activity_branch: Vec<ConvBlock<S>>,
}

impl<S: Scalar> Backbone<S> {
    pub fn new(cfg: &BackboneConfig, input_channels: usize, rng: &mut impl Rng) -> Result<Self> {
        if cfg.blocks.is_empty() || cfg.split_at >= cfg.blocks.len() {
            return Err(TensorError::BadShape {
                op: "backbone",
                shape: vec![cfg.split_at],
                reason: "split_at must leave at least one branch block".into(),
            });
        }
        let k = cfg.spatial_kernel;
        let kt = cfg.temporal_kernel;
        let mut shared = Vec::new();
        let mut c_in = input_channels;
        for (i, b) in cfg.blocks[..cfg.split_at].iter().enumerate() {
            shared.push(ConvBlock::new(
                format!("backbone.shared{i}"),
                c_in,
                b,
                b.spatial_stride,
                k,
                kt,
                rng,
            ));
            c_in = b.channels_out;
        }
        let branch_in = c_in;
        let last = cfg.blocks.len() - 1;
        let mut object_branch = Vec::new();
        let mut activity_branch = Vec::new();
        let mut c_obj = branch_in;
        let mut c_act = branch_in;
        for (i, b) in cfg.blocks.iter().enumerate().skip(cfg.split_at) {
            let obj_stride = if i == last {
                cfg.object_head_stride_override
            } else {
                b.spatial_stride
            };
            object_branch.push(ConvBlock::new(
                format!("backbone.object{i}"),
                c_obj,
                b,
                obj_stride,
                k,
                kt,
                rng,
            ));
            activity_branch.push(ConvBlock::new(
                format!("backbone.activity{i}"),
                c_act,
                b,
                b.spatial_stride,
                k,
                kt,
                rng,
            ));
            c_obj = b.channels_out;
            c_act = b.channels_out;
        }
        Ok(Backbone {
            cfg: cfg.clone(),
            shared,
            object_branch,
            activity_branch,
        })
    }

    pub fn forward(&self, g: &mut Graph<S>, clip: VarId) -> Result<FeatureMaps> {
        let t_in = g.shape(clip)[1];
        let mut x = clip;
        for b in &self.shared {
            x = b.forward(g, x)?;
        }
        let mut u = x;
        for b in &self.object_branch {
            u = b.forward(g, u)?;
        }
        let mut v = x;
        for b in &self.activity_branch {
            v = b.forward(g, v)?;
        }
        assert_eq!(g.shape(u)[1], t_in);
        assert_eq!(g.shape(v)[1], t_in);
        Ok(FeatureMaps { u, v })
    }

    /// Weight-preserving inflation of one block, applied to every copy of
    /// it (shared, or both branch instances).
    pub fn inflate_block(&mut self, block_index: usize, mode: Inflation) -> Result<()> {
        let kt = self.cfg.temporal_kernel;
        if block_index < self.cfg.split_at {
            self.shared[block_index].inflate_preserving(mode, kt)?;
        } else {
            let i = block_index - self.cfg.split_at;
            self.object_branch[i].inflate_preserving(mode, kt)?;
            self.activity_branch[i].inflate_preserving(mode, kt)?;
        }
        self.cfg.blocks[block_index].inflation = mode;
        Ok(())
    }
}

impl<S: Scalar> Parameters<S> for Backbone<S> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        for b in self
            .shared
            .iter()
            .chain(&self.object_branch)
            .chain(&self.activity_branch)
        {
            b.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        for b in self
            .shared
            .iter_mut()
            .chain(self.object_branch.iter_mut())
            .chain(self.activity_branch.iter_mut())
        {
            b.visit_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_config_output_dims() {
        let cfg = BackboneConfig::default();
        cfg.validate(64, 64).unwrap();
        let ((hu, wu), (hv, wv)) = cfg.output_dims(64, 64);
        assert_eq!((hu, wu), (16, 16));
        assert_eq!((hv, wv), (8, 8));

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bb = Backbone::<f32>::new(&cfg, 3, &mut rng).unwrap();
        let mut g = Graph::<f32>::new();
        let x = g.constant(&[3, 4, 64, 64], 0.1);
        let maps = bb.forward(&mut g, x).unwrap();
        assert_eq!(g.shape(maps.u), &[64, 4, 16, 16]);
        assert_eq!(g.shape(maps.v), &[64, 4, 8, 8]);
    }

    #[test]
    fn indivisible_dims_rejected_at_construction() {
        let cfg = BackboneConfig::default();
        assert!(cfg.validate(60, 64).is_err());
        assert!(cfg.validate(64, 64).is_ok());
    }

    #[test]
    fn split_must_leave_branch_blocks() {
        let mut cfg = BackboneConfig::default();
        cfg.split_at = cfg.blocks.len();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Backbone::<f32>::new(&cfg, 3, &mut rng).is_err());
    }

    fn tiny_2d_cfg() -> BackboneConfig {
        BackboneConfig {
            blocks: vec![
                BlockConfig {
                    channels_out: 4,
                    inflation: Inflation::Plain2d,
                    spatial_stride: 2,
                },
                BlockConfig {
                    channels_out: 5,
                    inflation: Inflation::Plain2d,
                    spatial_stride: 2,
                },
            ],
            split_at: 1,
            object_head_stride_override: 1,
            spatial_kernel: 3,
            temporal_kernel: 3,
        }
    }

    #[test]
    fn inflation_preserves_function_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bb2d = Backbone::<f64>::new(&tiny_2d_cfg(), 3, &mut rng).unwrap();
        let x_data: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(8);
            (0..3 * 2 * 8 * 8).map(|_| r.random_range(-1.0..1.0)).collect()
        };

        let run = |bb: &Backbone<f64>| -> (Vec<f64>, Vec<f64>) {
            let mut g = Graph::<f64>::new();
            let x = g.from_vec(&[3, 2, 8, 8], x_data.clone()).unwrap();
            let m = bb.forward(&mut g, x).unwrap();
            (g.data(m.u).to_vec(), g.data(m.v).to_vec())
        };
        let (u0, v0) = run(&bb2d);

        for mode in [Inflation::Sep2p1d, Inflation::Full3d] {
            for block in [0usize, 1] {
                let mut bb = bb2d.clone();
                bb.inflate_block(block, mode).unwrap();
                let (u1, v1) = run(&bb);
                assert_eq!(u0, u1, "object head changed after inflation {mode:?} of block {block}");
                assert_eq!(v0, v1, "activity head changed after inflation {mode:?} of block {block}");
            }
        }
    }

    #[test]
    fn sep2p1d_adds_kt_c_c_parameters_over_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg2d = tiny_2d_cfg();
        let cfg2p5 = cfg2d.inflate(1, Inflation::Sep2p1d).unwrap();
        let p2d = Backbone::<f32>::new(&cfg2d, 3, &mut rng).unwrap().param_count();
        let p2p5 = Backbone::<f32>::new(&cfg2p5, 3, &mut rng).unwrap().param_count();
        // block 1 (both branch copies) gains kt*C*C weights + C temporal biases
        let c = 5;
        assert_eq!(p2p5 - p2d, 2 * (3 * c * c + c));
    }

    #[test]
    fn constant_input_all_2d_gives_constant_interior_channels() {
        // one block, no stride: conv of a constant with any kernel is
        // constant in the interior.
        let cfg = BackboneConfig {
            blocks: vec![
                BlockConfig {
                    channels_out: 3,
                    inflation: Inflation::Plain2d,
                    spatial_stride: 1,
                },
                BlockConfig {
                    channels_out: 2,
                    inflation: Inflation::Plain2d,
                    spatial_stride: 1,
                },
            ],
            split_at: 1,
            object_head_stride_override: 1,
            spatial_kernel: 3,
            temporal_kernel: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bb = Backbone::<f64>::new(&cfg, 3, &mut rng).unwrap();
        let mut g = Graph::<f64>::new();
        let x = g.constant(&[3, 1, 9, 9], 0.7);
        let m = bb.forward(&mut g, x).unwrap();
        let d = g.data(m.u);
        // channel 0, interior rows/cols 2..7 (two conv layers deep)
        let (h, w) = (9, 9);
        let reference = d[2 * w + 2];
        for y in 2..h - 2 {
            for x in 2..w - 2 {
                assert!((d[y * w + x] - reference).abs() < 1e-12);
            }
        }
    }
}
