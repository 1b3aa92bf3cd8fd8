//! Joint, partially sequential and fully sequential training.
//!
//! - Joint: one phase with stage-2 wiring for `2 × epochs_per_stage` epochs.
//! - Sequential stage 1: RGB batches only, stage-1 wiring, final-map loss.
//!   Partial mode updates only encoder, decoder and RGB head; full mode
//!   updates every parameter reached by the stage-1 graph, including the gates.
//! - Sequential stage 2: restores stage 1 and trains everything with the
//!   hybrid objective for `epochs_per_stage` epochs.
//!
//! Each phase uses a fresh optimizer and its own polynomial schedule. Batches
//! are drawn from a seeded shuffle; the incomplete final batch is dropped.

mod checkpoint;
mod config;
mod optim;

pub use checkpoint::{checkpoint_dtype, CheckpointStage, RngState, StageCheckpoint};
pub use config::{Precision, Strategy, TrainConfig, ENV_PREFIX, KEYS};
pub use optim::{poly_lr, Sgd};

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rgbt_tensor::{Graph, Scalar};

use crate::data::{make_batch, ImagePair};
use crate::losses::{total_loss, LossReport, Stage};
use crate::model::{is_rgb_path, Model};
use crate::{CoreError, Result};

/// Stream of the data-order generator; model initialisation uses stream 0.
pub const DATA_STREAM: u64 = 1;

/// One row of the loss log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub stage: u8,
    pub self_sup: f64,
    pub sup_rgb: f64,
    pub sup_thermal: f64,
    pub sup_final: f64,
    pub total: f64,
}

impl LossRow {
    fn new(step: usize, stage: Stage, r: &LossReport) -> Self {
        Self {
            step,
            stage: stage.number(),
            self_sup: r.self_sup,
            sup_rgb: r.sup_rgb,
            sup_thermal: r.sup_thermal,
            sup_final: r.sup_final,
            total: r.total,
        }
    }
}

/// Result of one training call.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub checkpoint: StageCheckpoint<T>,
    pub rows: Vec<LossRow>,
    /// Mean total loss of each epoch.
    pub epoch_means: Vec<f64>,
}

fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM);
    rng
}

fn rng_state(rng: &ChaCha8Rng, seed: u64) -> RngState {
    RngState {
        seed,
        stream: rng.get_stream(),
        word_pos: rng.get_word_pos(),
    }
}

fn rng_from_state(state: &RngState) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(state.seed);
    rng.set_stream(state.stream);
    rng.set_word_pos(state.word_pos);
    rng
}

fn check_data(data: &[ImagePair], config: &TrainConfig) -> Result<()> {
    if data.is_empty() {
        return Err(CoreError::Data("training set is empty".into()));
    }
    if config.batch_size > data.len() {
        return Err(CoreError::Data(format!(
            "batch_size {} exceeds the {} training pairs",
            config.batch_size,
            data.len()
        )));
    }
    let s = config.image_size as u32;
    if let Some(p) = data.iter().find(|p| p.dimensions() != (s, s)) {
        return Err(CoreError::Data(format!(
            "{} is {:?}, expected {s}×{s}",
            p.name,
            p.dimensions()
        )));
    }
    Ok(())
}

/// Optimizer steps in one epoch.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n / batch_size
}

struct Phase {
    stage: Stage,
    epochs: usize,
    step0: usize,
}

fn run_phase<T: Scalar>(
    model: &mut Model<T>,
    data: &[ImagePair],
    config: &TrainConfig,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<LossRow>, Vec<f64>)> {
    let stage = if model.config().use_thermal { phase.stage } else { Stage::Stage1 };
    let loss_config = config.loss_config();
    let per_epoch = steps_per_epoch(data.len(), config.batch_size);
    let total = per_epoch * phase.epochs;
    let mut sgd = Sgd::new(config.momentum, config.weight_decay);
    let mut rows = Vec::with_capacity(total);
    let mut means = Vec::with_capacity(phase.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut t = 0;
    for epoch in 0..phase.epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        for chunk in order.chunks_exact(config.batch_size) {
            let pairs: Vec<&ImagePair> = chunk.iter().map(|&i| &data[i]).collect();
            let batch = make_batch::<T>(&pairs)?;
            let mut g = Graph::new();
            let out = model.forward(&mut g, &batch.rgb, Some(&batch.thermal), stage, true)?;
            let (loss, report) = total_loss(&mut g, &out.loss_inputs(), &batch.gt, stage, config.objective, &loss_config)?;
            if !report.total.is_finite() {
                return Err(CoreError::Data(format!("non-finite loss at step {}", phase.step0 + t)));
            }
            let grads = g.backward(loss);
            sgd.step(&mut model.store, &grads, poly_lr(config.learning_rate, config.lr_power, t, total));
            rows.push(LossRow::new(phase.step0 + t, stage, &report));
            sum += report.total;
            t += 1;
        }
        let mean = sum / per_epoch as f64;
        log::info!("stage {} epoch {}/{}: mean loss {mean:.5}", stage.number(), epoch + 1, phase.epochs);
        means.push(mean);
    }
    Ok((rows, means))
}

fn require_sequential(config: &TrainConfig) -> Result<()> {
    if !config.strategy.is_sequential() {
        return Err(CoreError::Config(format!(
            "strategy {} has no separate stages",
            config.strategy
        )));
    }
    Ok(())
}

/// Stage 1 of sequential training.
pub fn train_stage1<T: Scalar>(model: &mut Model<T>, data: &[ImagePair], config: &TrainConfig) -> Result<TrainOutcome<T>> {
    config.validate()?;
    require_sequential(config)?;
    check_data(data, config)?;
    model.set_trainable(config.strategy == Strategy::PartialSequential);
    let mut rng = data_rng(config.seed);
    let phase = Phase {
        stage: Stage::Stage1,
        epochs: config.epochs_per_stage,
        step0: 0,
    };
    let result = run_phase(model, data, config, phase, &mut rng);
    model.set_trainable(false);
    let (rows, epoch_means) = result?;
    let checkpoint = StageCheckpoint::capture(
        model,
        CheckpointStage::Stage1,
        config.config_hash(),
        rng_state(&rng, config.seed),
        rows.len(),
    );
    Ok(TrainOutcome {
        checkpoint,
        rows,
        epoch_means,
    })
}

/// Stage 2 of sequential training, starting from a stage-1 checkpoint.
pub fn train_stage2<T: Scalar>(
    model: &mut Model<T>,
    checkpoint: &StageCheckpoint<T>,
    data: &[ImagePair],
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    require_sequential(config)?;
    check_data(data, config)?;
    if checkpoint.config_hash != config.config_hash() {
        return Err(CoreError::Config(
            "stage-2 hyperparameters differ from those of the stage-1 checkpoint".into(),
        ));
    }
    if checkpoint.stage != CheckpointStage::Stage1 {
        return Err(CoreError::Checkpoint(format!("expected a stage-1 checkpoint, got {:?}", checkpoint.stage)));
    }
    if config.strategy == Strategy::PartialSequential {
        checkpoint.restore_into(model, is_rgb_path)?;
    } else {
        checkpoint.restore_into(model, |_| true)?;
    }
    model.set_trainable(false);
    let mut rng = rng_from_state(&checkpoint.rng_state);
    let phase = Phase {
        stage: Stage::Stage2,
        epochs: config.epochs_per_stage,
        step0: checkpoint.step,
    };
    let (rows, epoch_means) = run_phase(model, data, config, phase, &mut rng)?;
    let checkpoint = StageCheckpoint::capture(
        model,
        CheckpointStage::Stage2,
        config.config_hash(),
        rng_state(&rng, config.seed),
        checkpoint.step + rows.len(),
    );
    Ok(TrainOutcome {
        checkpoint,
        rows,
        epoch_means,
    })
}

/// Single-phase training with stage-2 wiring for `2 × epochs_per_stage` epochs.
pub fn train_joint<T: Scalar>(model: &mut Model<T>, data: &[ImagePair], config: &TrainConfig) -> Result<TrainOutcome<T>> {
    config.validate()?;
    check_data(data, config)?;
    model.set_trainable(false);
    let mut rng = data_rng(config.seed);
    let phase = Phase {
        stage: Stage::Stage2,
        epochs: 2 * config.epochs_per_stage,
        step0: 0,
    };
    let (rows, epoch_means) = run_phase(model, data, config, phase, &mut rng)?;
    let checkpoint = StageCheckpoint::capture(
        model,
        CheckpointStage::Joint,
        config.config_hash(),
        rng_state(&rng, config.seed),
        rows.len(),
    );
    Ok(TrainOutcome {
        checkpoint,
        rows,
        epoch_means,
    })
}

/// Everything produced by [`run_strategy`].
#[derive(Clone, Debug)]
pub struct RunResult<T: Scalar> {
    pub model: Model<T>,
    pub stage1: Option<TrainOutcome<T>>,
    pub last: TrainOutcome<T>,
    pub rows: Vec<LossRow>,
}

impl<T: Scalar> RunResult<T> {
    pub fn final_checkpoint(&self) -> &StageCheckpoint<T> {
        &self.last.checkpoint
    }
}

pub const LOSS_CSV: &str = "loss.csv";
pub const STAGE1_CKPT: &str = "stage1.ckpt";
pub const STAGE2_CKPT: &str = "stage2.ckpt";
pub const JOINT_CKPT: &str = "joint.ckpt";

/// Checkpoint holding the final weights of a run directory.
pub fn final_checkpoint_path(run_dir: &Path, strategy: Strategy) -> PathBuf {
    match strategy {
        Strategy::Joint => run_dir.join(JOINT_CKPT),
        _ => run_dir.join(STAGE2_CKPT),
    }
}

/// Trains a freshly initialised model with the configured strategy. When
/// `out_dir` is given, checkpoints and the loss log are written there.
pub fn run_strategy<T: Scalar>(config: &TrainConfig, data: &[ImagePair], out_dir: Option<&Path>) -> Result<RunResult<T>> {
    config.validate()?;
    let mut model = Model::<T>::new(&config.model_config(), config.seed)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let (stage1, last) = match config.strategy {
        Strategy::Joint => {
            let out = train_joint(&mut model, data, config)?;
            if let Some(dir) = out_dir {
                out.checkpoint.save(&dir.join(JOINT_CKPT))?;
            }
            (None, out)
        }
        Strategy::PartialSequential | Strategy::FullSequential => {
            let s1 = train_stage1(&mut model, data, config)?;
            if let Some(dir) = out_dir {
                s1.checkpoint.save(&dir.join(STAGE1_CKPT))?;
            }
            let s2 = train_stage2(&mut model, &s1.checkpoint, data, config)?;
            if let Some(dir) = out_dir {
                s2.checkpoint.save(&dir.join(STAGE2_CKPT))?;
            }
            (Some(s1), s2)
        }
    };
    let rows: Vec<LossRow> = stage1.iter().flat_map(|s| s.rows.iter().copied()).chain(last.rows.iter().copied()).collect();
    if let Some(dir) = out_dir {
        write_loss_csv(&dir.join(LOSS_CSV), &rows)?;
    }
    Ok(RunResult {
        model,
        stage1,
        last,
        rows,
    })
}

/// Writes the loss log with header `step,stage,self_sup,sup_rgb,sup_thermal,sup_final,total`.
pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<LossRow>, _>>()?)
}
