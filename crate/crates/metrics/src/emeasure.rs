use crate::fmeasure::positive_counts;
use crate::map::{check_pair, Map, Mask};
use crate::{Result, NUM_THRESHOLDS};

/// Enhanced-alignment score of the map binarised at `t/255`, for every `t`.
///
/// For a binary foreground map `F` and mask `G`, with `φ_X = X − mean(X)`:
///
/// ```text
/// ξ = 2·φ_G∘φ_F / (φ_G∘φ_G + φ_F∘φ_F + eps)
/// E = mean over pixels of (ξ + 1)² / 4
/// ```
///
/// When `G` is entirely background the per-pixel score is `1 − F`; when it is
/// entirely foreground it is `F`. `eps` is machine epsilon. The mean divides by
/// the pixel count, so a perfect prediction scores exactly 1.
///
/// Because `F` is binary only four `(F, G)` combinations exist, so each
/// threshold is evaluated from pixel counts.
pub fn e_measure_curve(pred: &Map, gt: &Mask) -> Result<Vec<f64>> {
    check_pair(pred, gt)?;
    let n = gt.len();
    let nf = n as f64;
    let fg = gt.foreground();
    let (tp, fp) = positive_counts(pred, gt);
    let curve = (0..NUM_THRESHOLDS)
        .map(|t| {
            let positives = tp[t] + fp[t];
            if fg == 0 {
                return (n - positives) as f64 / nf;
            }
            if fg == n {
                return positives as f64 / nf;
            }
            let mu_f = positives as f64 / nf;
            let mu_g = fg as f64 / nf;
            let counts = [
                (1.0, 1.0, tp[t]),
                (1.0, 0.0, fp[t]),
                (0.0, 1.0, fg - tp[t]),
                (0.0, 0.0, n - fg - fp[t]),
            ];
            counts
                .iter()
                .filter(|c| c.2 > 0)
                .map(|&(f, g, count)| count as f64 * enhanced(f - mu_f, g - mu_g))
                .sum::<f64>()
                / nf
        })
        .collect();
    Ok(curve)
}

fn enhanced(phi_f: f64, phi_g: f64) -> f64 {
    let align = 2.0 * phi_g * phi_f / (phi_g * phi_g + phi_f * phi_f + f64::EPSILON);
    (align + 1.0) * (align + 1.0) / 4.0
}

/// Maximum of [`e_measure_curve`] over thresholds.
pub fn e_measure(pred: &Map, gt: &Mask) -> Result<f64> {
    Ok(e_measure_curve(pred, gt)?.into_iter().fold(0.0, f64::max))
}
