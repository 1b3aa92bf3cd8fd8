//! The assembled network: shared encoder, per-level fusion, decoder and
//! auxiliary heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rgbt_tensor::nn::Init;
use rgbt_tensor::{Graph, ParamStore, Scalar, Tensor, Var};

use crate::decoder::{upsample_to, AuxHead, Decoder};
use crate::encoder::{BackboneConfig, Encoder, FeaturePyramid, Modality, NUM_LEVELS};
use crate::fusion::{fuse_stage1, fuse_stage2, squeeze, FusionKind, HfmParams};
use crate::losses::{modality_summary, LossInputs, Stage};
use crate::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub fusion: FusionKind,
    pub hfm_ratio: usize,
    /// When false the thermal stream is never run and the model always uses
    /// the stage-1 wiring.
    pub use_thermal: bool,
}

impl ModelConfig {
    pub fn new(input_size: usize) -> Self {
        Self {
            backbone: BackboneConfig::tiny(input_size),
            fusion: FusionKind::Hfm,
            hfm_ratio: 4,
            use_thermal: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.fusion == FusionKind::Hfm {
            for &c in &self.backbone.reduced_channels {
                if self.hfm_ratio == 0 || c / self.hfm_ratio == 0 {
                    return Err(CoreError::Config(format!(
                        "hfm_ratio {} leaves no hidden units for {c} channels",
                        self.hfm_ratio
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameter-name prefixes of the RGB path: encoder, decoder and the RGB head.
pub const RGB_PATH_PREFIXES: [&str; 3] = ["encoder.", "decoder.", "aux_rgb."];

pub fn is_rgb_path(name: &str) -> bool {
    RGB_PATH_PREFIXES.iter().any(|p| name.starts_with(p))
}

/// One training or evaluation batch, NCHW. Thermal is replicated to three channels.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub rgb: Tensor<T>,
    pub thermal: Tensor<T>,
    pub gt: Tensor<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.rgb.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Graph handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Outputs {
    pub final_logits: Var,
    /// Auxiliary logits upsampled to the input resolution.
    pub aux_rgb: Var,
    pub aux_thermal: Option<Var>,
    pub s_rgb: Var,
    pub s_thermal: Option<Var>,
    pub rgb: FeaturePyramid,
    pub thermal: Option<FeaturePyramid>,
    pub fused: Vec<Var>,
}

impl Outputs {
    pub fn loss_inputs(&self) -> LossInputs {
        LossInputs {
            final_logits: self.final_logits,
            aux_rgb: Some(self.aux_rgb),
            aux_thermal: self.aux_thermal,
            s_rgb: Some(self.s_rgb),
            s_thermal: self.s_thermal,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    config: ModelConfig,
    pub store: ParamStore<T>,
    encoder: Encoder,
    hfm: Vec<HfmParams>,
    decoder: Decoder,
    aux_rgb: AuxHead,
    aux_thermal: AuxHead,
}

impl<T: Scalar> Model<T> {
    /// Builds and initialises a model from a seed.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_init(config, Init::KaimingFanOut, &mut rng)
    }

    /// `init` applies to the decoder blocks; gates and one-channel heads use
    /// fan-in uniform unless `init` is [`Init::Zeros`].
    pub fn with_init(config: &ModelConfig, init: Init, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&config.backbone, &mut store, rng)?;
        let fc_init = if init == Init::Zeros { Init::Zeros } else { Init::UniformFanIn };
        let hfm = match config.fusion {
            FusionKind::Hfm => (1..=NUM_LEVELS)
                .map(|l| {
                    let c = config.backbone.reduced_channels[l - 1];
                    HfmParams::new(&mut store, l, c, config.hfm_ratio, fc_init, rng)
                })
                .collect::<Result<Vec<_>>>()?,
            FusionKind::Add => Vec::new(),
        };
        let decoder = Decoder::new(&config.backbone, &mut store, init, rng)?;
        let top = config.backbone.reduced_channels[NUM_LEVELS - 1];
        let aux_rgb = AuxHead::new(&mut store, "aux_rgb", top, fc_init, rng);
        let aux_thermal = AuxHead::new(&mut store, "aux_thermal", top, fc_init, rng);
        Ok(Self {
            config: config.clone(),
            store,
            encoder,
            hfm,
            decoder,
            aux_rgb,
            aux_thermal,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_size(&self) -> usize {
        self.config.backbone.input_size
    }

    /// Wiring used at inference time.
    pub fn inference_stage(&self) -> Stage {
        if self.config.use_thermal {
            Stage::Stage2
        } else {
            Stage::Stage1
        }
    }

    fn gate(&self, g: &mut Graph<T>, level: usize, rgb: Var) -> Result<Var> {
        let p = squeeze(g, rgb)?;
        self.hfm[level].gate(g, &self.store, p)
    }

    /// Forward pass. Stage 1 runs the RGB stream only; stage 2 runs both
    /// streams through the shared encoder as one concatenated batch.
    pub fn forward(
        &mut self,
        g: &mut Graph<T>,
        rgb: &Tensor<T>,
        thermal: Option<&Tensor<T>>,
        stage: Stage,
        training: bool,
    ) -> Result<Outputs> {
        let stage = if self.config.use_thermal { stage } else { Stage::Stage1 };
        let size = self.input_size();
        let (rgb_p, thermal_p) = match stage {
            Stage::Stage1 => {
                let x = g.input(rgb.clone());
                (self.encoder.encode(g, &mut self.store, x, Modality::Rgb, training)?, None)
            }
            Stage::Stage2 => {
                let thermal = thermal.ok_or_else(|| CoreError::Config("stage 2 needs a thermal batch".into()))?;
                if thermal.shape() != rgb.shape() {
                    return Err(CoreError::Input(format!(
                        "rgb {:?} and thermal {:?} differ in shape",
                        rgb.shape(),
                        thermal.shape()
                    )));
                }
                let b = rgb.shape()[0];
                let r = g.input(rgb.clone());
                let t = g.input(thermal.clone());
                let x = g.concat_batch(&[r, t]);
                let both = self.encoder.encode(g, &mut self.store, x, Modality::Rgb, training)?;
                let split = |g: &mut Graph<T>, start: usize, modality: Modality| FeaturePyramid {
                    levels: both.levels.iter().map(|&v| g.slice_batch(v, start, b)).collect(),
                    modality,
                };
                let rp = split(g, 0, Modality::Rgb);
                let tp = split(g, b, Modality::Thermal);
                (rp, Some(tp))
            }
        };
        let mut fused = Vec::with_capacity(NUM_LEVELS);
        for level in 0..NUM_LEVELS {
            let r = rgb_p.levels[level];
            let y = match (self.config.fusion, &thermal_p) {
                (FusionKind::Hfm, None) => {
                    let w = self.gate(g, level, r)?;
                    fuse_stage1(g, r, w)?
                }
                (FusionKind::Hfm, Some(tp)) => {
                    let w = self.gate(g, level, r)?;
                    fuse_stage2(g, r, tp.levels[level], w)?
                }
                (FusionKind::Add, None) => r,
                (FusionKind::Add, Some(tp)) => g.add(r, tp.levels[level]),
            };
            fused.push(y);
        }
        let final_logits = self.decoder.decode(g, &mut self.store, &fused, training)?;
        let aux_r = self.aux_rgb.decode(g, &self.store, rgb_p.top())?;
        let aux_rgb = upsample_to(g, aux_r, size);
        let s_rgb = modality_summary(g, rgb_p.top())?;
        let (aux_thermal, s_thermal) = match &thermal_p {
            Some(tp) => {
                let a = self.aux_thermal.decode(g, &self.store, tp.top())?;
                (Some(upsample_to(g, a, size)), Some(modality_summary(g, tp.top())?))
            }
            None => (None, None),
        };
        Ok(Outputs {
            final_logits,
            aux_rgb,
            aux_thermal,
            s_rgb,
            s_thermal,
            rgb: rgb_p,
            thermal: thermal_p,
            fused,
        })
    }

    /// Saliency probabilities `B×1×S×S` in evaluation mode.
    pub fn predict(&mut self, rgb: &Tensor<T>, thermal: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let stage = self.inference_stage();
        let out = self.forward(&mut g, rgb, Some(thermal), stage, false)?;
        let p = g.sigmoid(out.final_logits);
        Ok(g.value(p).clone())
    }

    /// Restricts gradient updates to the parameters selected for `stage` of a
    /// partially sequential run; `all` re-enables every weight.
    pub fn set_trainable(&mut self, rgb_path_only: bool) {
        if rgb_path_only {
            self.store.set_trainable_where(is_rgb_path);
        } else {
            self.store.set_all_trainable();
        }
    }

    /// Precision change preserving parameter values (rounded to `U`).
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            store: self.store.cast(),
            encoder: self.encoder.clone(),
            hfm: self.hfm.clone(),
            decoder: self.decoder.clone(),
            aux_rgb: self.aux_rgb.clone(),
            aux_thermal: self.aux_thermal.clone(),
        }
    }
}
