use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rgbt_core::data::{generate_synthetic, load_pairs, Affine, ImagePair, MisalignConfig, Shape, SynthConfig};
use rgbt_core::experiments::{median, run_ablation, run_alpha_sweep, write_runs_csv, AblationVariant};
use rgbt_core::inference::{evaluate_predictions, misalign_dataset, predict, write_predictions};
use rgbt_core::model::ModelConfig;
use rgbt_core::tensor::Scalar;
use rgbt_core::trainer::{
    checkpoint_dtype, run_strategy, Precision, StageCheckpoint, TrainConfig, JOINT_CKPT, LOSS_CSV, STAGE1_CKPT,
    STAGE2_CKPT,
};
use rgbt_core::{CoreError, Result};
use rgbt_metrics::{evaluate_dataset, MetricReport};

use crate::manifest::{now, RunManifest};
use crate::{AblateArgs, ConfigArgs, EvalArgs, Outcome, ReportArgs, SweepArgs, SynthArgs, TrainArgs};

pub const REPORT_JSON: &str = "report.json";
pub const PR_CSV: &str = "pr.csv";
pub const MAPS_DIR: &str = "maps";
pub const TRANSFORMS_JSON: &str = "transforms.json";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_SUMMARY_CSV: &str = "ablation_summary.csv";
pub const SWEEP_CSV: &str = "sweep.csv";

fn usage(msg: impl Into<String>) -> CoreError {
    CoreError::Usage(msg.into())
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>> {
    let items = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| usage(format!("{flag}: cannot parse {s:?}"))))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(usage(format!("{flag}: empty list")));
    }
    Ok(items)
}

fn resolve_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CoreError::Config(format!("cannot read {}: {e}", path.display())))?;
            TrainConfig::from_kv(&text)?
        }
        None => TrainConfig::default(),
    };
    config.apply_env(std::env::vars())?;
    for item in &args.set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        config.set(key.trim(), value)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn synth(args: SynthArgs) -> Result<Outcome> {
    let config = SynthConfig {
        n_samples: args.n_samples,
        n_test: args.n_test,
        size: args.size,
        noise_rgb: args.noise,
        darkness: args.darkness,
        seed: args.seed,
        shapes: parse_list::<Shape>("--shapes", &args.shapes)?,
    };
    let manifest = generate_synthetic(&config, &args.out)?;
    log::info!(
        "wrote {} train and {} test pairs to {}",
        manifest.train.len(),
        manifest.test.len(),
        args.out.display()
    );
    Ok(Outcome::Done)
}

pub fn train(args: TrainArgs) -> Result<Outcome> {
    let started = now();
    let mut config = resolve_config(&args.config)?;
    if let Some(s) = &args.strategy {
        config.strategy = s.parse()?;
    }
    let data = load_pairs(&args.data, Some(config.image_size))?;
    log::info!("training {} on {} pairs", config.strategy, data.len());
    match config.precision {
        Precision::F32 => run_strategy::<f32>(&config, &data, Some(&args.out)).map(drop)?,
        Precision::F64 => run_strategy::<f64>(&config, &data, Some(&args.out)).map(drop)?,
    }
    let outputs: &[&str] = if config.strategy.is_sequential() {
        &[STAGE1_CKPT, STAGE2_CKPT, LOSS_CSV]
    } else {
        &[JOINT_CKPT, LOSS_CSV]
    };
    RunManifest::new("train", &config, started, &[&args.data]).finish(&args.out, outputs)?;
    Ok(Outcome::Done)
}

pub fn eval(args: EvalArgs) -> Result<Outcome> {
    match (&args.ckpt, &args.pred) {
        (Some(ckpt), None) => {
            let data = args.data.as_deref().ok_or_else(|| usage("--ckpt requires --data"))?;
            eval_checkpoint(ckpt, data, &args)
        }
        (None, Some(pred)) => {
            let gt = args.gt.as_deref().ok_or_else(|| usage("--pred requires --gt"))?;
            eval_maps(pred, gt, &args.out, args.csv.as_deref())
        }
        _ => Err(usage("eval needs either --ckpt with --data, or --pred with --gt")),
    }
}

fn eval_checkpoint(ckpt: &Path, data: &Path, args: &EvalArgs) -> Result<Outcome> {
    let bytes = fs::read(ckpt).map_err(|e| CoreError::Checkpoint(format!("{}: {e}", ckpt.display())))?;
    let expected = args
        .config
        .as_deref()
        .map(|p| resolve_config(&ConfigArgs { config: Some(p.to_path_buf()), set: Vec::new() }))
        .transpose()?
        .map(|c| c.model_config());
    match checkpoint_dtype(&bytes)?.as_str() {
        "f64" => eval_with::<f64>(&bytes, expected.as_ref(), data, args),
        _ => eval_with::<f32>(&bytes, expected.as_ref(), data, args),
    }
}

#[derive(Serialize)]
struct NamedAffine<'a> {
    name: &'a str,
    #[serde(flatten)]
    affine: Affine,
}

fn eval_with<T: Scalar>(bytes: &[u8], expected: Option<&ModelConfig>, data: &Path, args: &EvalArgs) -> Result<Outcome> {
    let ckpt = StageCheckpoint::<T>::from_bytes(bytes)?;
    if let Some(want) = expected {
        if want != &ckpt.model {
            return Err(CoreError::Checkpoint(format!(
                "checkpoint model {} does not match configured model {}",
                serde_json::to_string(&ckpt.model)?,
                serde_json::to_string(want)?
            )));
        }
    }
    let mut model = ckpt.to_model()?;
    let mut pairs = load_pairs(data, Some(model.input_size()))?;
    fs::create_dir_all(&args.out)?;
    if let Some(seed) = args.misalign {
        let warped = misalign_dataset(&pairs, seed, &MisalignConfig::default());
        let transforms: Vec<NamedAffine> = warped
            .iter()
            .map(|(p, a)| NamedAffine { name: &p.name, affine: *a })
            .collect();
        fs::write(args.out.join(TRANSFORMS_JSON), serde_json::to_string_pretty(&transforms)?)?;
        pairs = warped.into_iter().map(|(p, _)| p).collect::<Vec<ImagePair>>();
    }
    let preds = predict(&mut model, &pairs)?;
    write_predictions(&args.out.join(MAPS_DIR), &preds)?;
    let report = evaluate_predictions(&preds, &pairs)?;
    report.write_json(&args.out.join(REPORT_JSON))?;
    fs::write(args.out.join(PR_CSV), report.pr_csv())?;
    log::info!("{} images: mae {:.4}, s {:.4}", report.n_images, report.mae, report.s);
    Ok(Outcome::Done)
}

fn eval_maps(pred: &Path, gt: &Path, out: &Path, csv: Option<&Path>) -> Result<Outcome> {
    let eval = evaluate_dataset(pred, gt)?;
    eval.report.write_json(out)?;
    if let Some(csv) = csv {
        fs::write(csv, eval.report.pr_csv())?;
    }
    if eval.missing.is_empty() {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::Partial(format!(
            "skipped {} unpaired images: {}",
            eval.missing.len(),
            eval.missing.join(", ")
        )))
    }
}

#[derive(Serialize)]
struct ReportRow<'a> {
    run: &'a str,
    n_images: usize,
    f_max: Option<f64>,
    f_adaptive: Option<f64>,
    s: f64,
    e_max: f64,
    mae: f64,
}

/// Directory name for run directories and `<dir>/report.json`, file stem otherwise.
fn run_label(path: &Path) -> String {
    let named = if path.is_dir() || path.file_name().is_some_and(|n| n == REPORT_JSON) {
        let dir = if path.is_dir() { path } else { path.parent().unwrap_or(path) };
        dir.canonicalize().ok().and_then(|d| d.file_name().map(|n| n.to_os_string()))
    } else {
        path.file_stem().map(|n| n.to_os_string())
    };
    named.map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

pub fn report(args: ReportArgs) -> Result<Outcome> {
    if args.runs.is_empty() {
        return Err(usage("report needs at least one run directory"));
    }
    let mut reports: Vec<(String, MetricReport)> = Vec::new();
    for run in &args.runs {
        let path: PathBuf = if run.is_dir() { run.join(REPORT_JSON) } else { run.clone() };
        if !path.is_file() {
            return Err(CoreError::Data(format!("no report at {}", path.display())));
        }
        let report = MetricReport::read_json(&path)
            .map_err(|e| CoreError::Data(format!("{}: {e}", path.display())))?;
        let mut label = run_label(run);
        let taken = reports.iter().filter(|(l, _)| l == &label || l.starts_with(&format!("{label}_"))).count();
        if taken > 0 {
            label = format!("{label}_{}", taken + 1);
        }
        reports.push((label, report));
    }
    let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(&args.out)?;
    for (label, r) in &reports {
        w.serialize(ReportRow {
            run: label,
            n_images: r.n_images,
            f_max: r.f_max,
            f_adaptive: r.f_adaptive,
            s: r.s,
            e_max: r.e_max,
            mae: r.mae,
        })?;
        fs::write(dir.join(format!("{label}_pr.csv")), r.pr_csv())?;
    }
    w.flush()?;
    Ok(Outcome::Done)
}

fn load_splits(config: &TrainConfig, train: &Path, test: &Path) -> Result<(Vec<ImagePair>, Vec<ImagePair>)> {
    Ok((
        load_pairs(train, Some(config.image_size))?,
        load_pairs(test, Some(config.image_size))?,
    ))
}

#[derive(Serialize)]
struct VariantSummary {
    variant: &'static str,
    n_seeds: usize,
    median_mae: f64,
    median_s: f64,
    median_first_epoch_loss: f64,
}

pub fn ablate(args: AblateArgs) -> Result<Outcome> {
    let started = now();
    let config = resolve_config(&args.config)?;
    let seeds = parse_list::<u64>("--seeds", &args.seeds)?;
    let (train, test) = load_splits(&config, &args.train, &args.test)?;
    let variants = AblationVariant::ALL;
    let result = match config.precision {
        Precision::F32 => run_ablation::<f32>(&config, &variants, &seeds, &train, &test)?,
        Precision::F64 => run_ablation::<f64>(&config, &variants, &seeds, &train, &test)?,
    };
    fs::create_dir_all(&args.out)?;
    write_runs_csv(&args.out.join(ABLATION_CSV), &result.runs)?;
    let mut w = csv::Writer::from_path(args.out.join(ABLATION_SUMMARY_CSV))?;
    for v in variants {
        let s: Vec<f64> = result.runs_of(v).map(|r| r.s).collect();
        w.serialize(VariantSummary {
            variant: v.name(),
            n_seeds: s.len(),
            median_mae: result.median_mae(v),
            median_s: median(&s),
            median_first_epoch_loss: result.median_first_epoch_loss(v),
        })?;
    }
    w.flush()?;
    log::info!("lowest median MAE: {}", result.best().name());
    RunManifest::new("ablate", &config, started, &[&args.train, &args.test])
        .finish(&args.out, &[ABLATION_CSV, ABLATION_SUMMARY_CSV])?;
    Ok(Outcome::Done)
}

pub fn sweep(args: SweepArgs) -> Result<Outcome> {
    let started = now();
    let config = resolve_config(&args.config)?;
    let alphas = parse_list::<f64>("--alphas", &args.alphas)?;
    let (train, test) = load_splits(&config, &args.train, &args.test)?;
    let runs = match config.precision {
        Precision::F32 => run_alpha_sweep::<f32>(&config, &alphas, &train, &test)?,
        Precision::F64 => run_alpha_sweep::<f64>(&config, &alphas, &train, &test)?,
    };
    fs::create_dir_all(&args.out)?;
    write_runs_csv(&args.out.join(SWEEP_CSV), &runs)?;
    RunManifest::new("sweep", &config, started, &[&args.train, &args.test]).finish(&args.out, &[SWEEP_CSV])?;
    Ok(Outcome::Done)
}
