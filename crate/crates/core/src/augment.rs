//! Differentiable image augmentations with one sampled parameter set shared by
//! every image of a batch.
//!
//! Every op is linear in the pixels, so the backward pass is the adjoint.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAX_SHIFT: i64 = 2;
pub const BRIGHTNESS_RANGE: (f64, f64) = (0.8, 1.2);
pub const MAX_CUTOUT: usize = 4;

/// Which ops are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSet {
    pub flip: bool,
    pub shift: bool,
    pub brightness: bool,
    pub cutout: bool,
}

impl Default for AugmentSet {
    fn default() -> Self {
        AugmentSet {
            flip: true,
            shift: true,
            brightness: true,
            cutout: true,
        }
    }
}

impl AugmentSet {
    pub const NONE: AugmentSet = AugmentSet {
        flip: false,
        shift: false,
        brightness: false,
        cutout: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugOp {
    /// Mirror along the width axis.
    Flip,
    /// Translate by `(dy, dx)` with zero fill.
    Shift { dy: i64, dx: i64 },
    Brightness { scale: f64 },
    /// Zero the box `[y, y + h) x [x, x + w)`.
    Cutout { y: usize, x: usize, h: usize, w: usize },
}

/// A sampled op sequence (the omega of one matching step).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationParams {
    pub ops: Vec<AugOp>,
}

impl AugmentationParams {
    pub fn identity() -> Self {
        AugmentationParams::default()
    }

    /// Draws one op per enabled kind, in the order flip, shift, brightness,
    /// cutout. A disabled kind consumes no randomness.
    pub fn sample(set: AugmentSet, shape: [usize; 3], rng: &mut impl Rng) -> Self {
        let [_, h, w] = shape;
        let mut ops = Vec::new();
        if set.flip && rng.gen_bool(0.5) {
            ops.push(AugOp::Flip);
        }
        if set.shift {
            ops.push(AugOp::Shift {
                dy: rng.gen_range(-MAX_SHIFT..=MAX_SHIFT),
                dx: rng.gen_range(-MAX_SHIFT..=MAX_SHIFT),
            });
        }
        if set.brightness {
            ops.push(AugOp::Brightness {
                scale: rng.gen_range(BRIGHTNESS_RANGE.0..=BRIGHTNESS_RANGE.1),
            });
        }
        if set.cutout {
            let ch = rng.gen_range(1..=MAX_CUTOUT.min(h));
            let cw = rng.gen_range(1..=MAX_CUTOUT.min(w));
            ops.push(AugOp::Cutout {
                y: rng.gen_range(0..=h - ch),
                x: rng.gen_range(0..=w - cw),
                h: ch,
                w: cw,
            });
        }
        AugmentationParams { ops }
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    /// Applies the ops to every image of an `(N, C, H, W)` batch.
    pub fn apply(&self, batch: &Tensor) -> Result<Tensor> {
        self.run(batch, false)
    }

    /// Pulls a gradient with respect to the augmented batch back to the
    /// original pixels.
    pub fn adjoint(&self, grad: &Tensor) -> Result<Tensor> {
        self.run(grad, true)
    }

    fn run(&self, batch: &Tensor, adjoint: bool) -> Result<Tensor> {
        let &[n, c, h, w] = batch.shape() else {
            return Err(Error::Shape(format!(
                "augmentation expects an (N, C, H, W) batch, got {:?}",
                batch.shape()
            )));
        };
        let mut cur = batch.data().to_vec();
        if self.ops.is_empty() {
            return Tensor::new(batch.shape().to_vec(), cur);
        }
        let mut scratch = vec![0.0; cur.len()];
        let mut apply = |op: &AugOp, cur: &mut Vec<f64>| {
            match *op {
                AugOp::Flip => {
                    for plane in cur.chunks_exact_mut(w) {
                        plane.reverse();
                    }
                }
                AugOp::Shift { dy, dx } => {
                    let (dy, dx) = if adjoint { (-dy, -dx) } else { (dy, dx) };
                    scratch.fill(0.0);
                    for p in 0..n * c {
                        let src = &cur[p * h * w..(p + 1) * h * w];
                        let dst = &mut scratch[p * h * w..(p + 1) * h * w];
                        for y in 0..h as i64 {
                            let sy = y - dy;
                            if sy < 0 || sy >= h as i64 {
                                continue;
                            }
                            for x in 0..w as i64 {
                                let sx = x - dx;
                                if sx >= 0 && sx < w as i64 {
                                    dst[(y * w as i64 + x) as usize] = src[(sy * w as i64 + sx) as usize];
                                }
                            }
                        }
                    }
                    std::mem::swap(cur, &mut scratch);
                }
                AugOp::Brightness { scale } => cur.iter_mut().for_each(|v| *v *= scale),
                AugOp::Cutout { y, x, h: bh, w: bw } => {
                    for plane in cur.chunks_exact_mut(h * w) {
                        for row in y..(y + bh).min(h) {
                            plane[row * w + x..row * w + (x + bw).min(w)].fill(0.0);
                        }
                    }
                }
            }
        };
        if adjoint {
            for op in self.ops.iter().rev() {
                apply(op, &mut cur);
            }
        } else {
            for op in &self.ops {
                apply(op, &mut cur);
            }
        }
        Tensor::new(batch.shape().to_vec(), cur)
    }
}
