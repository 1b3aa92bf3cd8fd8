//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion outside `KNOWN_RED` fails.
//!
//! Non-flag arguments select criteria by substring.

#[path = "../../../core/tests/support/gradcheck.rs"]
mod gradcheck;
#[path = "../../../core/tests/support/invariants.rs"]
mod invariants;
#[path = "../../../metrics/tests/support/oracle.rs"]
mod oracles;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rgbt_core::data::{load_pairs, load_vt_dataset, write_pairs, ImagePair};
use rgbt_core::experiments::{read_runs_csv, run_ablation, write_runs_csv, AblationResult, AblationVariant};
use rgbt_core::losses::Stage;
use rgbt_core::model::{Model, ModelConfig};
use rgbt_core::tensor::{Graph, Tensor};
use rgbt_core::trainer::TrainConfig;
use rgbt_metrics::MetricReport;

/// Criteria that fail on the toy problem; see README "Known results".
const KNOWN_RED: &[&str] = &["ablation_full_model_best"];

const SEEDS: [u64; 3] = [0, 1, 2];
const TOY_PAIRS: usize = 200;
const TOY_TEST: usize = 50;
const TOY_SIZE: usize = 64;
const TOY_DARKNESS: f64 = 0.5;
const TOY_EPOCHS: usize = 20;
const SHORT_EPOCHS: usize = 2;

type Outcome = Result<String, String>;

struct Suite {
    filters: Vec<String>,
    results: Vec<(String, bool)>,
}

impl Suite {
    fn selected(&self, name: &str) -> bool {
        self.filters.is_empty() || self.filters.iter().any(|f| name.contains(f.as_str()))
    }

    fn record(&mut self, name: &str, started: Instant, outcome: Outcome) {
        let secs = started.elapsed().as_secs_f64();
        let known = KNOWN_RED.contains(&name);
        let (tag, detail, ok) = match outcome {
            Ok(d) => ("PASS", d, true),
            Err(d) => ("FAIL", if known { format!("{d} (known)") } else { d }, false),
        };
        println!("{tag} {name}: {detail} [{secs:.1}s]");
        self.results.push((name.to_string(), ok));
    }

    fn run(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        if self.selected(name) {
            let t = Instant::now();
            let outcome = f();
            self.record(name, t, outcome);
        }
    }
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rgbt-sod"));
    c.env("RUST_LOG", "warn");
    c
}

fn run_cli(args: &[&str]) -> Result<i32, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    let code = out.status.code().unwrap_or(-1);
    if code != 0 {
        return Err(format!(
            "`rgbt-sod {}` exited {code}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(code)
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn metric_oracles() -> Outcome {
    let cases = oracles::cases();
    oracles::check_mae_and_f(&cases)?;
    oracles::check_s(&cases)?;
    oracles::check_e(&cases)?;
    oracles::check_degenerate()?;
    Ok(format!("{} random 16×16 pairs plus all-zero/all-one masks", cases.len()))
}

fn loss_identities() -> Outcome {
    invariants::check_loss_identities(200, 17)?;
    Ok("0/2/4 to 1e-12 and scale invariance to 1e-9 on 200 random cases".into())
}

fn gradient_check() -> Outcome {
    let s = gradcheck::run(5);
    s.verdict()?;
    Ok(format!(
        "{} parameters, worst relative error {:.1e}, {} kink coordinates excluded",
        s.checked, s.worst, s.kinks
    ))
}

fn fusion_consistency() -> Outcome {
    invariants::check_fusion(100, 23)?;
    Ok("bitwise stage consistency in f32 and f64, gates in (0, 1), zero gate gives 1.5·R".into())
}

fn shape_suite() -> Outcome {
    for side in [64usize, 96, 224] {
        let mut model = Model::<f32>::new(&ModelConfig::new(side), 0).map_err(|e| e.to_string())?;
        let x = Tensor::from_fn(&[1, 3, side, side], |i| ((i * 37) % 101) as f32 / 100.0);
        let mut g = Graph::new();
        let out = model
            .forward(&mut g, &x, Some(&x), Stage::Stage2, false)
            .map_err(|e| e.to_string())?;
        for (i, &level) in out.rgb.levels.iter().enumerate() {
            let want = side >> (i + 1);
            check(g.shape(level)[2..] == [want, want], || {
                format!("{side}: level {} is {:?}, expected side {want}", i + 1, g.shape(level))
            })?;
        }
        check(g.shape(out.final_logits) == [1, 1, side, side], || {
            format!("{side}: final map {:?}", g.shape(out.final_logits))
        })?;
    }
    Ok("64, 96, 224".into())
}

struct Toy {
    root: PathBuf,
    train: Vec<ImagePair>,
    test: Vec<ImagePair>,
}

fn toy_data(work: &Path) -> Result<Toy, String> {
    let root = work.join("toy");
    if !root.join("manifest.json").is_file() {
        run_cli(&[
            "synth",
            "--out",
            s(&root),
            "--n-samples",
            &TOY_PAIRS.to_string(),
            "--n-test",
            &TOY_TEST.to_string(),
            "--size",
            &TOY_SIZE.to_string(),
            "--darkness",
            &TOY_DARKNESS.to_string(),
        ])?;
    }
    let load = |split: &str| load_pairs(&root.join(split), Some(TOY_SIZE)).map_err(|e| e.to_string());
    Ok(Toy {
        train: load("train")?,
        test: load("test")?,
        root,
    })
}

fn toy_config() -> TrainConfig {
    TrainConfig {
        image_size: TOY_SIZE,
        epochs_per_stage: TOY_EPOCHS,
        ..TrainConfig::default()
    }
}

fn ablation(toy: &Toy, work: &Path) -> Result<AblationResult, String> {
    let t = Instant::now();
    let result = run_ablation::<f32>(&toy_config(), &AblationVariant::ALL, &SEEDS, &toy.train, &toy.test)
        .map_err(|e| e.to_string())?;
    let csv = work.join("ablation.csv");
    write_runs_csv(&csv, &result.runs).map_err(|e| e.to_string())?;
    println!(
        "     ablation: {} runs in {:.0}s, per-run scores in {}",
        result.runs.len(),
        t.elapsed().as_secs_f64(),
        csv.display()
    );
    for v in AblationVariant::ALL {
        let maes: Vec<String> = result.runs_of(v).map(|r| format!("{:.4}", r.mae)).collect();
        println!("     {:<14} median MAE {:.4} (seeds: {})", v.name(), result.median_mae(v), maes.join(", "));
    }
    Ok(result)
}

fn sequential_property(result: &AblationResult) -> Outcome {
    let staged = result.median_first_epoch_loss(AblationVariant::Full);
    let joint = result.median_first_epoch_loss(AblationVariant::MmhlHfm);
    check(staged < joint, || {
        format!("stage-2 first epoch {staged:.4} is not below joint first epoch {joint:.4}")
    })?;
    Ok(format!(
        "median first-epoch loss: stage 2 after stage 1 {staged:.4} < joint from scratch {joint:.4}"
    ))
}

fn baseline_vs_rgb_only(result: &AblationResult) -> Outcome {
    let rgb = result.median_mae(AblationVariant::RgbOnly);
    let base = result.median_mae(AblationVariant::RgbtBaseline);
    check(base <= rgb, || format!("RGB-T baseline {base:.4} > RGB-only {rgb:.4}"))?;
    Ok(format!("median MAE RGB-T baseline {base:.4} ≤ RGB-only {rgb:.4}"))
}

fn full_model_best(result: &AblationResult) -> Outcome {
    let best = result.best();
    let full = result.median_mae(AblationVariant::Full);
    check(best == AblationVariant::Full, || {
        format!(
            "lowest median MAE is {} ({:.4}); full model {full:.4}",
            best.name(),
            result.median_mae(best)
        )
    })?;
    Ok(format!("full model has the lowest median MAE {full:.4}"))
}

fn full_model_mae(result: &AblationResult) -> Outcome {
    let full = result.median_mae(AblationVariant::Full);
    check(full < 0.1, || format!("full model median MAE {full:.4} ≥ 0.1"))?;
    Ok(format!("full model median MAE {full:.4} < 0.1"))
}

fn short_run_args<'a>(data: &'a str, out: &'a str, epochs: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--strategy",
        "full_sequential",
        "--data",
        data,
        "--out",
        out,
        "--set",
        "seed=7",
        "--set",
        epochs,
    ]
}

fn determinism(toy: &Toy, work: &Path) -> Outcome {
    let data = toy.root.join("train");
    let epochs = format!("epochs_per_stage={SHORT_EPOCHS}");
    let (a, b) = (work.join("det_a"), work.join("det_b"));
    for dir in [&a, &b] {
        let _ = fs::remove_dir_all(dir);
        run_cli(&short_run_args(s(&data), s(dir), &epochs))?;
    }
    let read = |d: &Path| fs::read(d.join("loss.csv")).map_err(|e| e.to_string());
    let (la, lb) = (read(&a)?, read(&b)?);
    check(!la.is_empty() && la == lb, || "loss CSVs differ".into())?;
    Ok(format!("two seeded full_sequential runs wrote identical {}-byte loss CSVs", la.len()))
}

fn alpha_sweep(toy: &Toy, work: &Path) -> Outcome {
    let out = work.join("sweep");
    let epochs = format!("epochs_per_stage={SHORT_EPOCHS}");
    run_cli(&[
        "sweep",
        "--alphas",
        "5,10,15",
        "--train",
        s(&toy.root.join("train")),
        "--test",
        s(&toy.root.join("test")),
        "--out",
        s(&out),
        "--set",
        &epochs,
    ])?;
    let runs = read_runs_csv(&out.join("sweep.csv")).map_err(|e| e.to_string())?;
    let alphas: Vec<f64> = runs.iter().map(|r| r.alpha).collect();
    check(alphas == [5.0, 10.0, 15.0], || format!("sweep rows have α {alphas:?}"))?;
    let maes: Vec<String> = runs.iter().map(|r| format!("α={} MAE {:.4}", r.alpha, r.mae)).collect();
    Ok(format!("one CSV with three runs: {}", maes.join(", ")))
}

/// VT layout `root/{RGB,T,GT}`, maps from a trained checkpoint, then map-mode evaluation.
fn vt_evaluation(toy: &Toy, work: &Path) -> Outcome {
    let vt = work.join("vt");
    let _ = fs::remove_dir_all(&vt);
    write_pairs(&vt, &toy.test[..10]).map_err(|e| e.to_string())?;
    let loaded = load_vt_dataset(&vt, "", TOY_SIZE).map_err(|e| e.to_string())?;
    check(loaded.len() == 10, || format!("VT loader found {} pairs", loaded.len()))?;
    let ckpt = work.join("det_a").join("stage2.ckpt");
    if !ckpt.is_file() {
        run_cli(&short_run_args(
            s(&toy.root.join("train")),
            s(&work.join("det_a")),
            &format!("epochs_per_stage={SHORT_EPOCHS}"),
        ))?;
    }
    let pred = work.join("vt_pred");
    run_cli(&["eval", "--ckpt", s(&ckpt), "--data", s(&vt), "--out", s(&pred)])?;
    let report_path = work.join("vt_report.json");
    run_cli(&[
        "eval",
        "--pred",
        s(&pred.join("maps")),
        "--gt",
        s(&vt.join("GT")),
        "--out",
        s(&report_path),
    ])?;
    let r = MetricReport::read_json(&report_path).map_err(|e| e.to_string())?;
    let f_max = r.f_max.ok_or("F-measure missing")?;
    check(r.n_images == 10, || format!("{} images scored", r.n_images))?;
    check([f_max, r.s, r.e_max, r.mae].iter().all(|v| v.is_finite()), || "non-finite metric".into())?;
    check(r.pr.len() == 256, || format!("PR curve has {} points", r.pr.len()))?;
    Ok(format!(
        "10 images: F_max {f_max:.3}, S {:.3}, E_max {:.3}, MAE {:.4}",
        r.s, r.e_max, r.mae
    ))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut suite = Suite {
        filters,
        results: Vec::new(),
    };
    let work = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&work).expect("work directory");

    suite.run("metric_oracles", metric_oracles);
    suite.run("loss_identities", loss_identities);
    suite.run("gradient_check", gradient_check);
    suite.run("fusion_consistency", fusion_consistency);
    suite.run("shape_suite", shape_suite);

    let data_names = [
        "vt_format_evaluation",
        "determinism",
        "alpha_sweep_csv",
        "sequential_training_property",
        "ablation_rgbt_baseline_not_worse",
        "ablation_full_model_best",
        "ablation_full_model_mae",
    ];
    if data_names.iter().any(|n| suite.selected(n)) {
        let t = Instant::now();
        match toy_data(&work) {
            Ok(toy) => {
                suite.run("determinism", || determinism(&toy, &work));
                suite.run("vt_format_evaluation", || vt_evaluation(&toy, &work));
                suite.run("alpha_sweep_csv", || alpha_sweep(&toy, &work));
                let ablation_names = &data_names[3..];
                if ablation_names.iter().any(|n| suite.selected(n)) {
                    let t = Instant::now();
                    match ablation(&toy, &work) {
                        Ok(result) => {
                            let runs: Vec<(&str, fn(&AblationResult) -> Outcome)> = vec![
                                ("sequential_training_property", sequential_property),
                                ("ablation_rgbt_baseline_not_worse", baseline_vs_rgb_only),
                                ("ablation_full_model_best", full_model_best),
                                ("ablation_full_model_mae", full_model_mae),
                            ];
                            for (name, f) in runs {
                                if suite.selected(name) {
                                    suite.record(name, t, f(&result));
                                }
                            }
                        }
                        Err(e) => {
                            for name in ablation_names {
                                suite.run(name, || Err(format!("training failed: {e}")));
                            }
                        }
                    }
                }
            }
            Err(e) => {
                for name in data_names {
                    suite.record(name, t, Err(format!("synthetic data: {e}")));
                }
            }
        }
    }

    let unexpected: Vec<&str> = suite
        .results
        .iter()
        .filter(|(n, ok)| !ok && !KNOWN_RED.contains(&n.as_str()))
        .map(|(n, _)| n.as_str())
        .collect();
    let passed = suite.results.iter().filter(|(_, ok)| *ok).count();
    println!("acceptance: {passed}/{} criteria pass", suite.results.len());
    if !unexpected.is_empty() {
        println!("acceptance: unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
