//! Salient-object-detection evaluation.
//!
//! Per-image metrics operate on a real-valued prediction [`Map`] in `[0, 1]`
//! and a binary ground-truth [`Mask`]:
//!
//! - [`mae`]: mean absolute error.
//! - [`pr_curve`] / [`f_measure`]: precision and recall at the 256 thresholds
//!   `t/255`, F-measure with β² = 0.3, maximum and adaptive variants.
//! - [`s_measure`]: structure measure (object-aware + region-aware terms).
//! - [`e_measure_curve`]: enhanced-alignment measure of the binarised map at
//!   each threshold; the reported value is the maximum of the mean curve.
//!
//! [`evaluate_dataset`] pairs prediction and ground-truth images by file stem
//! and aggregates a [`MetricReport`].

mod dataset;
mod emeasure;
mod fmeasure;
mod map;
mod report;
mod smeasure;

pub use dataset::{evaluate_dataset, evaluate_maps, list_images, read_mask, read_prediction, DatasetEvaluation};
pub use emeasure::{e_measure, e_measure_curve};
pub use fmeasure::{adaptive_f_measure, f_measure, f_measure_curve, pr_curve, PrPoint, BETA_SQUARED};
pub use map::{Map, Mask};
pub use report::{ImageMetrics, MetricReport, PrEntry};
pub use smeasure::{s_measure, S_ALPHA};

use thiserror::Error;

/// Number of binarisation thresholds (`t/255`, `t = 0..=255`).
pub const NUM_THRESHOLDS: usize = 256;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: prediction {pred:?} vs ground truth {gt:?}")]
    Shape { pred: (usize, usize), gt: (usize, usize) },
    #[error("empty map")]
    Empty,
    #[error("prediction value {0} outside [0, 1]")]
    Range(f64),
    #[error("ground truth has no foreground pixels; recall is undefined")]
    NoForeground,
    #[error("usage: {0}")]
    Usage(String),
    #[error("failed to read {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Mean absolute error `1/(W·H) Σ |S − G|`.
pub fn mae(pred: &Map, gt: &Mask) -> Result<f64> {
    map::check_pair(pred, gt)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (p - if g { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// MAE between two real-valued maps; symmetric in its arguments.
pub fn mae_maps(a: &Map, b: &Map) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(MetricError::Shape {
            pred: a.dims(),
            gt: b.dims(),
        });
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> Mask {
        Mask::from_fn(w, h, f)
    }

    #[test]
    fn mae_examples() {
        let gt = mask(4, 4, |x, y| x < 2 && y < 3);
        let exact = Map::from_mask(&gt);
        assert_eq!(mae(&exact, &gt).unwrap(), 0.0);
        let zeros = mask(4, 4, |_, _| false);
        assert_eq!(mae(&Map::filled(4, 4, 1.0), &zeros).unwrap(), 1.0);
        assert_eq!(mae(&Map::filled(4, 4, 0.5), &gt).unwrap(), 0.5);
    }

    #[test]
    fn mae_rejects_shape_mismatch() {
        let gt = mask(4, 4, |_, _| true);
        assert!(matches!(mae(&Map::filled(4, 3, 0.0), &gt), Err(MetricError::Shape { .. })));
    }

    #[test]
    fn mae_maps_is_symmetric() {
        let a = Map::from_fn(3, 3, |x, y| (x * y) as f64 / 9.0);
        let b = Map::from_fn(3, 3, |x, y| (x + y) as f64 / 6.0);
        assert_eq!(mae_maps(&a, &b).unwrap(), mae_maps(&b, &a).unwrap());
    }
}
