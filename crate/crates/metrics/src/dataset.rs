use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::map::{Map, Mask};
use crate::report::{ImageMetrics, MetricReport};
use crate::{MetricError, Result};

const EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Result of evaluating a prediction directory against a ground-truth directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEvaluation {
    pub report: MetricReport,
    /// Stems present in only one of the two directories; these were skipped.
    pub missing: Vec<String>,
}

/// Image files in `dir` keyed by file stem, in sorted order.
pub fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

fn read_luma(path: &Path) -> Result<image::GrayImage> {
    let img = image::open(path).map_err(|source| MetricError::Image {
        path: path.display().to_string(),
        source,
    })?;
    Ok(img.into_luma8())
}

/// Reads an 8-bit grayscale prediction and scales it to `[0, 1]`.
pub fn read_prediction(path: &Path) -> Result<Map> {
    let img = read_luma(path)?;
    Map::from_u8(img.width() as usize, img.height() as usize, img.as_raw())
}

/// Reads a ground-truth mask; pixels `>= 128` are foreground.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = read_luma(path)?;
    let gray = img.as_raw().iter().filter(|&&v| v != 0 && v != 255).count();
    if gray > 0 {
        log::warn!("{}: {gray} non-binary pixels binarised at 128", path.display());
    }
    Mask::new(
        img.width() as usize,
        img.height() as usize,
        img.as_raw().iter().map(|&v| v >= 128).collect(),
    )
}

/// Computes per-image metrics for named pairs and aggregates them.
pub fn evaluate_maps<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a Map, &'a Mask)>) -> Result<MetricReport> {
    let images = pairs
        .into_iter()
        .map(|(name, pred, gt)| ImageMetrics::compute(name, pred, gt))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::aggregate(&images)
}

/// Pairs images by stem and evaluates every matched pair. Unmatched stems are
/// returned in [`DatasetEvaluation::missing`].
pub fn evaluate_dataset(pred_dir: &Path, gt_dir: &Path) -> Result<DatasetEvaluation> {
    let preds = list_images(pred_dir)?;
    let gts = list_images(gt_dir)?;
    if preds.is_empty() {
        return Err(MetricError::Usage(format!("no images in {}", pred_dir.display())));
    }
    if gts.is_empty() {
        return Err(MetricError::Usage(format!("no images in {}", gt_dir.display())));
    }
    let mut missing: Vec<String> = preds
        .keys()
        .filter(|k| !gts.contains_key(*k))
        .chain(gts.keys().filter(|k| !preds.contains_key(*k)))
        .cloned()
        .collect();
    missing.sort();
    for stem in &missing {
        log::warn!("skipping unpaired image {stem}");
    }
    let mut images = Vec::new();
    for (stem, pred_path) in &preds {
        let Some(gt_path) = gts.get(stem) else { continue };
        let pred = read_prediction(pred_path)?;
        let gt = read_mask(gt_path)?;
        images.push(ImageMetrics::compute(stem.clone(), &pred, &gt)?);
    }
    if images.is_empty() {
        return Err(MetricError::Usage("no prediction/ground-truth pairs share a file stem".into()));
    }
    Ok(DatasetEvaluation {
        report: MetricReport::aggregate(&images)?,
        missing,
    })
}
