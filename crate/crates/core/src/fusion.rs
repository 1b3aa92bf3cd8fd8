//! Channel-gated fusion of RGB and thermal features.
//!
//! For level features `R` (RGB) and `T` (thermal) with `C` channels:
//!
//! ```text
//! p = GAP(R)                          (B×C)
//! r = σ(fc₂(ReLU(fc₁(p))))            (B×C), fc₁: C → C/ratio, fc₂: C/ratio → C
//! stage 1: Y = r·R + R
//! stage 2: Y = r·T + R
//! ```
//!
//! The gate is always computed from the RGB features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use rgbt_tensor::nn::{Init, Linear};
use rgbt_tensor::{Graph, ParamStore, Scalar, Var};

use crate::{CoreError, Result};

/// How the two streams are combined at each level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    /// Gated fusion module.
    Hfm,
    /// Plain element-wise sum `R + T` (stage 1: `R`).
    Add,
}

/// Per-channel spatial mean of a `B×C×H×W` tensor.
pub fn squeeze<T: Scalar>(g: &mut Graph<T>, features: Var) -> Result<Var> {
    let shape = g.shape(features);
    if shape.len() != 4 || shape[2] == 0 || shape[3] == 0 {
        return Err(CoreError::Input(format!("squeeze expects B×C×H×W with H,W ≥ 1, got {shape:?}")));
    }
    Ok(g.global_avg_pool(features))
}

/// Bottleneck gate of one pyramid level.
#[derive(Clone, Debug)]
pub struct HfmParams {
    pub fc1: Linear,
    pub fc2: Linear,
    pub channels: usize,
    pub ratio: usize,
    pub level: usize,
}

impl HfmParams {
    /// Registers `hfm.<level>.fc1` and `hfm.<level>.fc2`.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        level: usize,
        channels: usize,
        ratio: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        if ratio == 0 || channels / ratio == 0 {
            return Err(CoreError::Config(format!(
                "gate ratio {ratio} leaves no hidden units for {channels} channels"
            )));
        }
        if !(1..=5).contains(&level) {
            return Err(CoreError::Config(format!("level {level} outside 1..=5")));
        }
        let hidden = channels / ratio;
        Ok(Self {
            fc1: Linear::new(store, &format!("hfm.{level}.fc1"), channels, hidden, init, rng),
            fc2: Linear::new(store, &format!("hfm.{level}.fc2"), hidden, channels, init, rng),
            channels,
            ratio,
            level,
        })
    }

    /// Channel weights `σ(fc₂(ReLU(fc₁(p))))`, each in (0, 1).
    pub fn gate<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, descriptor: Var) -> Result<Var> {
        let shape = g.shape(descriptor);
        if shape.len() != 2 || shape[1] != self.channels {
            return Err(CoreError::Config(format!(
                "level {} gate expects B×{} descriptors, got {shape:?}",
                self.level, self.channels
            )));
        }
        let h = self.fc1.forward(g, store, descriptor);
        let h = g.relu(h);
        let o = self.fc2.forward(g, store, h);
        Ok(g.sigmoid(o))
    }
}

fn check_weights<T: Scalar>(g: &Graph<T>, features: Var, weights: Var) -> Result<()> {
    let fs = g.shape(features);
    if fs.len() != 4 || g.shape(weights) != [fs[0], fs[1]] {
        return Err(CoreError::Input(format!(
            "channel weights {:?} do not broadcast over features {fs:?}",
            g.shape(weights)
        )));
    }
    Ok(())
}

/// `Y = w·R + R`.
pub fn fuse_stage1<T: Scalar>(g: &mut Graph<T>, rgb: Var, weights: Var) -> Result<Var> {
    check_weights(g, rgb, weights)?;
    let scaled = g.scale_channels(rgb, weights);
    Ok(g.add(scaled, rgb))
}

/// `Y = w·T + R`.
pub fn fuse_stage2<T: Scalar>(g: &mut Graph<T>, rgb: Var, thermal: Var, weights: Var) -> Result<Var> {
    if g.shape(rgb) != g.shape(thermal) {
        return Err(CoreError::Input(format!(
            "rgb {:?} and thermal {:?} differ in shape",
            g.shape(rgb),
            g.shape(thermal)
        )));
    }
    check_weights(g, thermal, weights)?;
    let scaled = g.scale_channels(thermal, weights);
    Ok(g.add(scaled, rgb))
}
