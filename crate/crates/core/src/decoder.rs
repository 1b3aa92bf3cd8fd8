//! Top-down decoder and the auxiliary single-level heads.
//!
//! Starting from level 5, each step upsamples the running features ×2
//! (bilinear), concatenates the next shallower fused level and applies
//! 3×3 conv → BN → ReLU with that level's width. A final 1×1 conv yields one
//! logit channel at level-1 resolution, which is upsampled ×2 to the input size.

use rand::Rng;

use rgbt_tensor::nn::{BatchNorm2d, Conv2d, Init};
use rgbt_tensor::{Graph, ParamStore, Scalar, Var};

use crate::encoder::{BackboneConfig, NUM_LEVELS};
use crate::{CoreError, Result};

#[derive(Clone, Debug)]
struct Block {
    conv: Conv2d,
    bn: BatchNorm2d,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    config: BackboneConfig,
    /// Blocks for levels 4, 3, 2, 1 in that order.
    blocks: Vec<Block>,
    head: Conv2d,
}

impl Decoder {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        config: &BackboneConfig,
        store: &mut ParamStore<T>,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let c = config.reduced_channels;
        let mut blocks = Vec::new();
        let mut running = c[NUM_LEVELS - 1];
        for level in (1..NUM_LEVELS).rev() {
            let out = c[level - 1];
            let name = format!("decoder.block{level}");
            blocks.push(Block {
                conv: Conv2d::new(store, &format!("{name}.conv"), running + out, out, 3, false, init, rng),
                bn: BatchNorm2d::new(store, &format!("{name}.bn"), out),
            });
            running = out;
        }
        let head_init = if init == Init::Zeros { Init::Zeros } else { Init::UniformFanIn };
        let head = Conv2d::new(store, "decoder.head", running, 1, 1, true, head_init, rng);
        Ok(Self {
            config: config.clone(),
            blocks,
            head,
        })
    }

    /// Logits `B×1×S×S` from the five fused levels (shallow to deep).
    pub fn decode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        levels: &[Var],
        training: bool,
    ) -> Result<Var> {
        if levels.len() != NUM_LEVELS {
            return Err(CoreError::Input(format!("decoder needs {NUM_LEVELS} levels, got {}", levels.len())));
        }
        let batch = g.shape(levels[0])[0];
        for (i, &v) in levels.iter().enumerate() {
            let side = self.config.level_side(i + 1);
            let want = [batch, self.config.reduced_channels[i], side, side];
            if g.shape(v) != want {
                return Err(CoreError::Input(format!(
                    "fused level {} has shape {:?}, expected {want:?}",
                    i + 1,
                    g.shape(v)
                )));
            }
        }
        let mut x = levels[NUM_LEVELS - 1];
        for (block, level) in self.blocks.iter().zip((1..NUM_LEVELS).rev()) {
            let side = self.config.level_side(level);
            let up = g.resize_bilinear(x, side, side);
            let cat = g.concat_channels(&[up, levels[level - 1]]);
            let y = block.conv.forward(g, store, cat);
            let y = block.bn.forward(g, store, y, training);
            x = g.relu(y);
        }
        let logits = self.head.forward(g, store, x);
        let s = self.config.input_size;
        Ok(g.resize_bilinear(logits, s, s))
    }
}

/// Single 1×1 convolution decoding a level-5 tensor to one logit channel.
#[derive(Clone, Debug)]
pub struct AuxHead {
    pub conv: Conv2d,
}

impl AuxHead {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        Self {
            conv: Conv2d::new(store, name, channels, 1, 1, true, init, rng),
        }
    }

    /// Logits at the input's resolution.
    pub fn decode<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, top: Var) -> Result<Var> {
        let shape = g.shape(top);
        if shape.len() != 4 || shape[1] != self.conv.in_channels {
            return Err(CoreError::Input(format!(
                "aux head expects B×{}×H×W, got {shape:?}",
                self.conv.in_channels
            )));
        }
        Ok(self.conv.forward(g, store, top))
    }
}

/// Bilinear resize of logits to `side × side`.
pub fn upsample_to<T: Scalar>(g: &mut Graph<T>, x: Var, side: usize) -> Var {
    let s = g.shape(x);
    if s[2] == side && s[3] == side {
        return x;
    }
    g.resize_bilinear(x, side, side)
}
