//! Five-level feature extractor shared by the RGB and thermal streams.

use rand::Rng;
use serde::{Deserialize, Serialize};

use rgbt_tensor::nn::{BatchNorm2d, Conv2d, Init};
use rgbt_tensor::{Graph, ParamStore, Scalar, Var};

use crate::{CoreError, Result};

pub const NUM_LEVELS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// One 3×3 conv → BN → ReLU → 2×2 average pool per stage.
    Tiny,
    /// Multi-scale residual stage: the stage width is split into four groups
    /// processed by a cascade of 3×3 convolutions.
    Res2netLike,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub variant: Variant,
    pub stage_channels: [usize; NUM_LEVELS],
    pub reduced_channels: [usize; NUM_LEVELS],
    pub input_size: usize,
}

impl BackboneConfig {
    pub fn tiny(input_size: usize) -> Self {
        Self {
            variant: Variant::Tiny,
            stage_channels: [16, 32, 64, 128, 256],
            reduced_channels: [16, 16, 32, 32, 64],
            input_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return Err(CoreError::Config(format!(
                "input_size {} must be a positive multiple of 32",
                self.input_size
            )));
        }
        for i in 0..NUM_LEVELS {
            let (s, r) = (self.stage_channels[i], self.reduced_channels[i]);
            if s == 0 || r == 0 {
                return Err(CoreError::Config(format!("level {} has zero channels", i + 1)));
            }
            if r > s {
                return Err(CoreError::Config(format!(
                    "level {}: reduced channels {r} exceed stage channels {s}",
                    i + 1
                )));
            }
            if self.variant == Variant::Res2netLike && s % 4 != 0 {
                return Err(CoreError::Config(format!(
                    "level {}: res2net-like stages need channels divisible by 4, got {s}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Spatial side of level `i` (1-based): `input_size / 2^i`.
    pub fn level_side(&self, level: usize) -> usize {
        self.input_size >> level
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Thermal,
}

/// Reduced features of one modality, shallow to deep.
#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    pub levels: Vec<Var>,
    pub modality: Modality,
}

impl FeaturePyramid {
    pub fn level(&self, level: usize) -> Var {
        self.levels[level - 1]
    }

    pub fn top(&self) -> Var {
        self.levels[NUM_LEVELS - 1]
    }
}

#[derive(Clone, Debug)]
struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl ConvBn {
    fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            conv: Conv2d::new(store, &format!("{name}.conv"), cin, cout, k, false, Init::KaimingFanOut, rng),
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), cout),
        }
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var, training: bool) -> Var {
        let y = self.conv.forward(g, store, x);
        self.bn.forward(g, store, y, training)
    }
}

#[derive(Clone, Debug)]
enum Stage {
    Tiny(ConvBn),
    Res2net {
        entry: ConvBn,
        branches: Vec<ConvBn>,
        exit: ConvBn,
        shortcut: ConvBn,
        width: usize,
    },
}

impl Stage {
    fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &mut ParamStore<T>, x: Var, training: bool) -> Var {
        let y = match self {
            Stage::Tiny(block) => {
                let y = block.forward(g, store, x, training);
                g.relu(y)
            }
            Stage::Res2net {
                entry,
                branches,
                exit,
                shortcut,
                width,
            } => {
                let h = entry.forward(g, store, x, training);
                let h = g.relu(h);
                let mut outs = vec![g.slice_channels(h, 0, *width)];
                let mut prev: Option<Var> = None;
                for (k, branch) in branches.iter().enumerate() {
                    let part = g.slice_channels(h, (k + 1) * width, *width);
                    let inp = match prev {
                        Some(p) => g.add(part, p),
                        None => part,
                    };
                    let o = branch.forward(g, store, inp, training);
                    let o = g.relu(o);
                    outs.push(o);
                    prev = Some(o);
                }
                let cat = g.concat_channels(&outs);
                let y = exit.forward(g, store, cat, training);
                let s = shortcut.forward(g, store, x, training);
                let sum = g.add(y, s);
                g.relu(sum)
            }
        };
        g.avg_pool2(y)
    }
}

/// One parameter set serving both modalities.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: BackboneConfig,
    stages: Vec<Stage>,
    reduce: Vec<ConvBn>,
}

impl Encoder {
    /// Registers the backbone parameters under `encoder.*`.
    pub fn new<T: Scalar, R: Rng + ?Sized>(config: &BackboneConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        Self::with_reduction_init(config, store, Init::KaimingFanOut, rng)
    }

    /// As [`Encoder::new`] with a chosen initialisation for the 1×1 reductions.
    pub fn with_reduction_init<T: Scalar, R: Rng + ?Sized>(
        config: &BackboneConfig,
        store: &mut ParamStore<T>,
        reduction_init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut stages = Vec::new();
        let mut reduce = Vec::new();
        let mut cin = 3;
        for i in 0..NUM_LEVELS {
            let cout = config.stage_channels[i];
            let name = format!("encoder.stage{}", i + 1);
            let stage = match config.variant {
                Variant::Tiny => Stage::Tiny(ConvBn::new(store, &name, cin, cout, 3, rng)),
                Variant::Res2netLike => {
                    let width = cout / 4;
                    Stage::Res2net {
                        entry: ConvBn::new(store, &format!("{name}.entry"), cin, cout, 1, rng),
                        branches: (1..4)
                            .map(|k| ConvBn::new(store, &format!("{name}.branch{k}"), width, width, 3, rng))
                            .collect(),
                        exit: ConvBn::new(store, &format!("{name}.exit"), cout, cout, 1, rng),
                        shortcut: ConvBn::new(store, &format!("{name}.shortcut"), cin, cout, 1, rng),
                        width,
                    }
                }
            };
            stages.push(stage);
            let name = format!("encoder.reduce{}", i + 1);
            reduce.push(ConvBn {
                conv: Conv2d::new(
                    store,
                    &format!("{name}.conv"),
                    cout,
                    config.reduced_channels[i],
                    1,
                    false,
                    reduction_init,
                    rng,
                ),
                bn: BatchNorm2d::new(store, &format!("{name}.bn"), config.reduced_channels[i]),
            });
            cin = cout;
        }
        Ok(Self {
            config: config.clone(),
            stages,
            reduce,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    /// Runs the backbone on a `B×3×S×S` image batch.
    pub fn encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        image: Var,
        modality: Modality,
        training: bool,
    ) -> Result<FeaturePyramid> {
        let s = self.config.input_size;
        let shape = g.shape(image).to_vec();
        if shape.len() != 4 || shape[1] != 3 || shape[2] != s || shape[3] != s || shape[0] == 0 {
            return Err(CoreError::Input(format!("encoder expects B×3×{s}×{s}, got {shape:?}")));
        }
        let mut x = image;
        let mut levels = Vec::with_capacity(NUM_LEVELS);
        for (stage, reduce) in self.stages.iter().zip(&self.reduce) {
            x = stage.forward(g, store, x, training);
            levels.push(reduce.forward(g, store, x, training));
        }
        let pyramid = FeaturePyramid { levels, modality };
        debug_assert!(self.check_pyramid(g, &pyramid, shape[0]).is_ok());
        Ok(pyramid)
    }

    /// Verifies the per-level shape contract.
    pub fn check_pyramid<T: Scalar>(&self, g: &Graph<T>, pyramid: &FeaturePyramid, batch: usize) -> Result<()> {
        if pyramid.levels.len() != NUM_LEVELS {
            return Err(CoreError::Input(format!("expected {NUM_LEVELS} levels, got {}", pyramid.levels.len())));
        }
        for (i, &v) in pyramid.levels.iter().enumerate() {
            let side = self.config.level_side(i + 1);
            let want = [batch, self.config.reduced_channels[i], side, side];
            if g.shape(v) != want {
                return Err(CoreError::Input(format!(
                    "level {} has shape {:?}, expected {want:?}",
                    i + 1,
                    g.shape(v)
                )));
            }
        }
        Ok(())
    }
}
