use std::path::Path;

use image::GrayImage;
use rgbt_metrics::{evaluate_dataset, read_mask, read_prediction, MetricError};

fn save(dir: &Path, name: &str, w: u32, h: u32, f: impl Fn(u32, u32) -> u8) {
    std::fs::create_dir_all(dir).unwrap();
    GrayImage::from_fn(w, h, |x, y| image::Luma([f(x, y)])).save(dir.join(name)).unwrap();
}

fn square(x: u32, y: u32) -> u8 {
    if (4..12).contains(&x) && (2..10).contains(&y) {
        255
    } else {
        0
    }
}

#[test]
fn perfect_predictions_score_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    save(&pred, "a.png", 16, 16, square);
    save(&gt, "a.png", 16, 16, square);
    let eval = evaluate_dataset(&pred, &gt).unwrap();
    let r = eval.report;
    assert!(eval.missing.is_empty());
    assert_eq!(r.n_images, 1);
    assert_eq!(r.mae, 0.0);
    assert_eq!(r.f_max, Some(1.0));
    assert!((r.s - 1.0).abs() < 1e-9);
    assert!((r.e_max - 1.0).abs() < 1e-9);
}

#[test]
fn missing_pairs_are_listed_and_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    save(&pred, "a.png", 16, 16, square);
    save(&pred, "only_pred.png", 16, 16, square);
    save(&gt, "a.png", 16, 16, square);
    save(&gt, "only_gt.png", 16, 16, square);
    let eval = evaluate_dataset(&pred, &gt).unwrap();
    assert_eq!(eval.report.n_images, 1);
    assert_eq!(eval.missing, vec!["only_gt".to_string(), "only_pred".to_string()]);
}

#[test]
fn duplicate_pair_reproduces_single_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    let noisy = |x: u32, y: u32| ((x * 37 + y * 11) % 256) as u8;
    save(&pred, "a.png", 16, 16, noisy);
    save(&gt, "a.png", 16, 16, square);
    let single = evaluate_dataset(&pred, &gt).unwrap().report;
    save(&pred, "b.png", 16, 16, noisy);
    save(&gt, "b.png", 16, 16, square);
    let double = evaluate_dataset(&pred, &gt).unwrap().report;
    assert_eq!(single.mae, double.mae);
    assert_eq!(single.s, double.s);
    assert_eq!(single.e_max, double.e_max);
    assert_eq!(single.f_max, double.f_max);
    assert_eq!(single.pr, double.pr);
}

#[test]
fn empty_directory_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    save(&gt, "a.png", 4, 4, square);
    assert!(matches!(evaluate_dataset(&pred, &gt), Err(MetricError::Usage(_))));
}

#[test]
fn foreground_free_masks_are_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred"), tmp.path().join("gt"));
    save(&pred, "a.png", 8, 8, |_, _| 0);
    save(&gt, "a.png", 8, 8, |_, _| 0);
    let r = evaluate_dataset(&pred, &gt).unwrap().report;
    assert_eq!(r.flagged, vec!["a".to_string()]);
    assert_eq!(r.f_max, None);
    assert_eq!(r.s, 1.0);
}

#[test]
fn readers_scale_and_binarise() {
    let tmp = tempfile::tempdir().unwrap();
    save(tmp.path(), "p.png", 3, 1, |x, _| [0, 51, 255][x as usize]);
    let map = read_prediction(&tmp.path().join("p.png")).unwrap();
    assert_eq!(map.data(), &[0.0, 0.2, 1.0]);
    save(tmp.path(), "m.png", 3, 1, |x, _| [127, 128, 255][x as usize]);
    let mask = read_mask(&tmp.path().join("m.png")).unwrap();
    assert_eq!(mask.data(), &[false, true, true]);
}
