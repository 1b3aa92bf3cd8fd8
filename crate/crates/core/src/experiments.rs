//! Ablation and α-sweep harnesses on in-memory datasets.
//!
//! Ablation configurations, each built on top of the previous:
//!
//! | variant         | thermal | fusion | objective  | strategy        |
//! |-----------------|---------|--------|------------|-----------------|
//! | `rgb_only`      | no      | add    | final only | joint           |
//! | `rgbt_baseline` | yes     | add    | final only | joint           |
//! | `mmhl_hfm`      | yes     | hfm    | hybrid     | joint           |
//! | `full`          | yes     | hfm    | hybrid     | full sequential |

use std::path::Path;

use serde::{Deserialize, Serialize};

use rgbt_tensor::Scalar;

use crate::data::ImagePair;
use crate::fusion::FusionKind;
use crate::inference::evaluate_model;
use crate::losses::Objective;
use crate::trainer::{run_strategy, Strategy, TrainConfig};
use crate::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    RgbOnly,
    RgbtBaseline,
    MmhlHfm,
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::RgbOnly,
        AblationVariant::RgbtBaseline,
        AblationVariant::MmhlHfm,
        AblationVariant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::RgbOnly => "rgb_only",
            AblationVariant::RgbtBaseline => "rgbt_baseline",
            AblationVariant::MmhlHfm => "mmhl_hfm",
            AblationVariant::Full => "full",
        }
    }

    /// Training configuration of this variant; all other fields come from `base`.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        let (thermal, fusion, objective, strategy) = match self {
            AblationVariant::RgbOnly => (false, FusionKind::Add, Objective::FinalOnly, Strategy::Joint),
            AblationVariant::RgbtBaseline => (true, FusionKind::Add, Objective::FinalOnly, Strategy::Joint),
            AblationVariant::MmhlHfm => (true, FusionKind::Hfm, Objective::Hybrid, Strategy::Joint),
            AblationVariant::Full => (true, FusionKind::Hfm, Objective::Hybrid, Strategy::FullSequential),
        };
        c.use_thermal = thermal;
        c.fusion = fusion;
        c.objective = objective;
        c.strategy = strategy;
        c
    }
}

/// Scores of one trained model on the held-out split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    pub alpha: f64,
    pub mae: f64,
    pub s: f64,
    pub e_max: f64,
    pub f_max: Option<f64>,
    pub f_adaptive: Option<f64>,
    /// Mean total loss over the first epoch of the last phase (stage 2 for
    /// sequential runs, the single phase for joint runs).
    pub first_epoch_loss: f64,
    pub final_epoch_loss: f64,
}

/// Trains with `config` on `train` and scores on `test`.
pub fn train_and_evaluate<T: Scalar>(
    label: &str,
    config: &TrainConfig,
    train: &[ImagePair],
    test: &[ImagePair],
) -> Result<RunSummary> {
    let mut run = run_strategy::<T>(config, train, None)?;
    let report = evaluate_model(&mut run.model, test)?;
    let means = &run.last.epoch_means;
    Ok(RunSummary {
        label: label.to_string(),
        seed: config.seed,
        alpha: config.alpha,
        mae: report.mae,
        s: report.s,
        e_max: report.e_max,
        f_max: report.f_max,
        f_adaptive: report.f_adaptive,
        first_epoch_loss: means.first().copied().unwrap_or(f64::NAN),
        final_epoch_loss: means.last().copied().unwrap_or(f64::NAN),
    })
}

/// Median of a nonempty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub runs: Vec<RunSummary>,
}

impl AblationResult {
    pub fn runs_of(&self, variant: AblationVariant) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter(move |r| r.label == variant.name())
    }

    pub fn median_mae(&self, variant: AblationVariant) -> f64 {
        median(&self.runs_of(variant).map(|r| r.mae).collect::<Vec<_>>())
    }

    pub fn median_first_epoch_loss(&self, variant: AblationVariant) -> f64 {
        median(&self.runs_of(variant).map(|r| r.first_epoch_loss).collect::<Vec<_>>())
    }

    /// Variant with the lowest median MAE.
    pub fn best(&self) -> AblationVariant {
        AblationVariant::ALL
            .into_iter()
            .min_by(|a, b| self.median_mae(*a).total_cmp(&self.median_mae(*b)))
            .expect("four variants")
    }
}

/// Trains every variant for every seed.
pub fn run_ablation<T: Scalar>(
    base: &TrainConfig,
    variants: &[AblationVariant],
    seeds: &[u64],
    train: &[ImagePair],
    test: &[ImagePair],
) -> Result<AblationResult> {
    if seeds.is_empty() || variants.is_empty() {
        return Err(CoreError::Config("ablation needs at least one seed and one variant".into()));
    }
    let mut runs = Vec::new();
    for &seed in seeds {
        for &v in variants {
            let config = TrainConfig { seed, ..v.configure(base) };
            let run = train_and_evaluate::<T>(v.name(), &config, train, test)?;
            log::info!("{} seed {seed}: mae {:.4}", v.name(), run.mae);
            runs.push(run);
        }
    }
    Ok(AblationResult { runs })
}

/// Trains `base` once per α value.
pub fn run_alpha_sweep<T: Scalar>(
    base: &TrainConfig,
    alphas: &[f64],
    train: &[ImagePair],
    test: &[ImagePair],
) -> Result<Vec<RunSummary>> {
    if alphas.is_empty() {
        return Err(CoreError::Config("alpha sweep needs at least one value".into()));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let config = TrainConfig { alpha, ..base.clone() };
            train_and_evaluate::<T>(&format!("alpha={alpha}"), &config, train, test)
        })
        .collect()
}

/// One row per run: `label,seed,alpha,mae,s,e_max,f_max,f_adaptive,first_epoch_loss,final_epoch_loss`.
pub fn write_runs_csv(path: &Path, runs: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in runs {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunSummary>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<RunSummary>, _>>()?)
}
