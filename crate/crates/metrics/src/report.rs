use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emeasure::e_measure_curve;
use crate::fmeasure::{adaptive_f_measure, f_measure_curve, pr_curve, PrPoint};
use crate::map::{Map, Mask};
use crate::smeasure::s_measure;
use crate::{mae, MetricError, Result, NUM_THRESHOLDS};

/// Metrics of a single prediction/ground-truth pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub name: String,
    pub mae: f64,
    pub s: f64,
    /// E-measure at each of the 256 thresholds.
    pub e_curve: Vec<f64>,
    /// `None` when the mask has no foreground (recall undefined).
    pub pr: Option<Vec<PrPoint>>,
    pub f_adaptive: Option<f64>,
}

impl ImageMetrics {
    pub fn compute(name: impl Into<String>, pred: &Map, gt: &Mask) -> Result<Self> {
        let (pr, f_adaptive) = match pr_curve(pred, gt) {
            Ok(curve) => (Some(curve), Some(adaptive_f_measure(pred, gt)?)),
            Err(MetricError::NoForeground) => (None, None),
            Err(e) => return Err(e),
        };
        Ok(Self {
            name: name.into(),
            mae: mae(pred, gt)?,
            s: s_measure(pred, gt)?,
            e_curve: e_measure_curve(pred, gt)?,
            pr,
            f_adaptive,
        })
    }

    pub fn flagged(&self) -> bool {
        self.pr.is_none()
    }

    pub fn e_max(&self) -> f64 {
        self.e_curve.iter().copied().fold(0.0, f64::max)
    }

    pub fn f_max(&self) -> Option<f64> {
        self.pr
            .as_ref()
            .map(|c| f_measure_curve(c).into_iter().fold(0.0, f64::max))
    }
}

/// One point of the dataset PR curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrEntry {
    pub t: u8,
    pub p: f64,
    pub r: f64,
}

/// Dataset-level metrics.
///
/// Scalars are means over images. `f_max` and `e_max` are maxima over
/// thresholds of the mean per-threshold F and E curves. Images whose mask has
/// no foreground are listed in `flagged` and left out of `f_max`, `f_adaptive`
/// and `pr`; the F fields are `None` when every image is flagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_images: usize,
    pub f_max: Option<f64>,
    pub f_adaptive: Option<f64>,
    pub s: f64,
    pub e_max: f64,
    pub mae: f64,
    pub pr: Vec<PrEntry>,
    pub flagged: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

impl MetricReport {
    /// Aggregates per-image metrics. Images are sorted by name first, so the
    /// result does not depend on input order.
    pub fn aggregate(images: &[ImageMetrics]) -> Result<Self> {
        if images.is_empty() {
            return Err(MetricError::Usage("no images to evaluate".into()));
        }
        let mut sorted: Vec<&ImageMetrics> = images.iter().collect();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        let scored: Vec<&ImageMetrics> = sorted.iter().copied().filter(|m| !m.flagged()).collect();

        let e_max = (0..NUM_THRESHOLDS)
            .map(|t| mean(sorted.iter().map(|m| m.e_curve[t])))
            .fold(0.0, f64::max);
        let (f_max, f_adaptive, pr) = if scored.is_empty() {
            (None, None, Vec::new())
        } else {
            let curves: Vec<&Vec<PrPoint>> = scored.iter().map(|m| m.pr.as_ref().unwrap()).collect();
            let f_curves: Vec<Vec<f64>> = curves.iter().map(|c| f_measure_curve(c)).collect();
            let f_max = (0..NUM_THRESHOLDS)
                .map(|t| mean(f_curves.iter().map(|f| f[t])))
                .fold(0.0, f64::max);
            let pr = (0..NUM_THRESHOLDS)
                .map(|t| PrEntry {
                    t: t as u8,
                    p: mean(curves.iter().map(|c| c[t].precision)),
                    r: mean(curves.iter().map(|c| c[t].recall)),
                })
                .collect();
            let f_adaptive = mean(scored.iter().map(|m| m.f_adaptive.unwrap()));
            (Some(f_max), Some(f_adaptive), pr)
        };
        Ok(Self {
            n_images: sorted.len(),
            f_max,
            f_adaptive,
            s: mean(sorted.iter().map(|m| m.s)),
            e_max,
            mae: mean(sorted.iter().map(|m| m.mae)),
            pr,
            flagged: sorted.iter().filter(|m| m.flagged()).map(|m| m.name.clone()).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// PR curve as CSV with header `t,precision,recall,f`.
    pub fn pr_csv(&self) -> String {
        let mut out = String::from("t,precision,recall,f\n");
        for e in &self.pr {
            let f = crate::f_measure(e.p, e.r);
            out.push_str(&format!("{},{},{},{}\n", e.t, e.p, e.r, f));
        }
        out
    }
}
