use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{BackboneConfig, Variant};
use crate::fusion::FusionKind;
use crate::losses::{LossConfig, Objective};
use crate::model::ModelConfig;
use crate::{CoreError, Result};

/// Prefix of environment variables overriding config keys, e.g. `RGBT_ALPHA=5`.
pub const ENV_PREFIX: &str = "RGBT_";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Joint,
    PartialSequential,
    FullSequential,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Joint => "joint",
            Strategy::PartialSequential => "partial_sequential",
            Strategy::FullSequential => "full_sequential",
        }
    }

    pub fn is_sequential(self) -> bool {
        self != Strategy::Joint
    }
}

impl FromStr for Strategy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Strategy::Joint),
            "partial_sequential" => Ok(Strategy::PartialSequential),
            "full_sequential" => Ok(Strategy::FullSequential),
            other => Err(CoreError::Usage(format!(
                "unknown strategy {other:?} (expected joint, partial_sequential or full_sequential)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Training hyperparameters. Field names double as config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub image_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    /// Exponent of the polynomial decay `lr·(1 − t/T)^lr_power`.
    pub lr_power: f64,
    pub epochs_per_stage: usize,
    pub seed: u64,
    pub alpha: f64,
    pub final_weight: f64,
    pub epsilon: f64,
    pub strategy: Strategy,
    pub objective: Objective,
    pub fusion: FusionKind,
    pub use_thermal: bool,
    pub hfm_ratio: usize,
    pub backbone: Variant,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            image_size: 64,
            momentum: 0.9,
            weight_decay: 0.0005,
            learning_rate: 0.02,
            lr_power: 0.9,
            epochs_per_stage: 20,
            seed: 0,
            alpha: 10.0,
            final_weight: 1.0,
            epsilon: 1e-6,
            strategy: Strategy::FullSequential,
            objective: Objective::Hybrid,
            fusion: FusionKind::Hfm,
            use_thermal: true,
            hfm_ratio: 4,
            backbone: Variant::Tiny,
            precision: Precision::F32,
        }
    }
}

pub const KEYS: [&str; 18] = [
    "batch_size",
    "image_size",
    "momentum",
    "weight_decay",
    "learning_rate",
    "lr_power",
    "epochs_per_stage",
    "seed",
    "alpha",
    "final_weight",
    "epsilon",
    "strategy",
    "objective",
    "fusion",
    "use_thermal",
    "hfm_ratio",
    "backbone",
    "precision",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| CoreError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_enum<V: serde::de::DeserializeOwned>(key: &str, value: &str) -> Result<V> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| CoreError::Config(format!("invalid value {value:?} for {key}")))
}

fn enum_name<V: Serialize>(v: &V) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enums serialize to strings"),
    }
}

impl TrainConfig {
    /// Sets one key. Unknown keys are usage errors; bad values are config errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "batch_size" => self.batch_size = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "lr_power" => self.lr_power = parse(key, value)?,
            "epochs_per_stage" => self.epochs_per_stage = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "final_weight" => self.final_weight = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "strategy" => {
                self.strategy = value
                    .parse()
                    .map_err(|_| CoreError::Config(format!("invalid value {value:?} for strategy")))?
            }
            "objective" => self.objective = parse_enum(key, value)?,
            "fusion" => self.fusion = parse_enum(key, value)?,
            "use_thermal" => self.use_thermal = parse(key, value)?,
            "hfm_ratio" => self.hfm_ratio = parse(key, value)?,
            "backbone" => self.backbone = parse_enum(key, value)?,
            "precision" => self.precision = parse_enum(key, value)?,
            other => return Err(CoreError::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "batch_size" => self.batch_size.to_string(),
            "image_size" => self.image_size.to_string(),
            "momentum" => self.momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "lr_power" => self.lr_power.to_string(),
            "epochs_per_stage" => self.epochs_per_stage.to_string(),
            "seed" => self.seed.to_string(),
            "alpha" => self.alpha.to_string(),
            "final_weight" => self.final_weight.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "strategy" => self.strategy.to_string(),
            "objective" => enum_name(&self.objective),
            "fusion" => enum_name(&self.fusion),
            "use_thermal" => self.use_thermal.to_string(),
            "hfm_ratio" => self.hfm_ratio.to_string(),
            "backbone" => enum_name(&self.backbone),
            "precision" => enum_name(&self.precision),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CoreError::Usage(format!("line {}: expected key=value, got {raw:?}", i + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path)?)
    }

    /// Applies `RGBT_<KEY>` overrides from `vars` (typically `std::env::vars()`).
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_ascii_lowercase(), v)))
            .collect();
        found.sort();
        for (key, value) in found {
            self.set(&key, &value)
                .map_err(|e| match e {
                    CoreError::Usage(_) => CoreError::Usage(format!(
                        "unknown config key {key:?} in environment variable {ENV_PREFIX}{}",
                        key.to_ascii_uppercase()
                    )),
                    other => other,
                })?;
        }
        Ok(())
    }

    /// Serializes every key in canonical order.
    pub fn to_kv(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.image_size == 0 || self.image_size % 32 != 0 {
            return bad(format!("image_size must be a positive multiple of 32, got {}", self.image_size));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        for (k, v) in [
            ("weight_decay", self.weight_decay),
            ("learning_rate", self.learning_rate),
            ("lr_power", self.lr_power),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{k} must be nonnegative, got {v}"));
            }
        }
        self.loss_config().validate()?;
        self.model_config().validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            final_weight: self.final_weight,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut backbone = BackboneConfig::tiny(self.image_size);
        backbone.variant = self.backbone;
        ModelConfig {
            backbone,
            fusion: self.fusion,
            hfm_ratio: self.hfm_ratio,
            use_thermal: self.use_thermal,
        }
    }

    /// SHA-256 over the optimisation hyperparameters shared by both stages.
    /// Seed, strategy and model layout are excluded.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        for key in [
            "batch_size",
            "image_size",
            "momentum",
            "weight_decay",
            "learning_rate",
            "lr_power",
            "epochs_per_stage",
            "alpha",
            "final_weight",
            "epsilon",
            "objective",
        ] {
            h.update(format!("{key}={}\n", self.get(key).expect("known key")).as_bytes());
        }
        hex::encode(h.finalize())
    }
}
