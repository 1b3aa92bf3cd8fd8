use crate::map::{check_pair, Map, Mask};
use crate::{MetricError, Result, NUM_THRESHOLDS};

/// Precision weight in the F-measure.
pub const BETA_SQUARED: f64 = 0.3;

/// Precision/recall of the map binarised at `threshold / 255`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub threshold: u8,
    pub precision: f64,
    pub recall: f64,
}

/// `(1 + β²)·P·R / (β²·P + R)`, or 0 when the denominator vanishes.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    let denom = BETA_SQUARED * precision + recall;
    if denom <= 0.0 {
        0.0
    } else {
        (1.0 + BETA_SQUARED) * precision * recall / denom
    }
}

/// Largest threshold index `t` with `value >= t/255`, using exactly that comparison.
pub(crate) fn threshold_bin(value: f64) -> usize {
    let mut c = ((value * 255.0).floor().max(0.0) as usize).min(NUM_THRESHOLDS - 1);
    while c + 1 < NUM_THRESHOLDS && value >= (c + 1) as f64 / 255.0 {
        c += 1;
    }
    while c > 0 && value < c as f64 / 255.0 {
        c -= 1;
    }
    c
}

/// Per-threshold counts of predicted positives that are foreground / background.
pub(crate) fn positive_counts(pred: &Map, gt: &Mask) -> (Vec<usize>, Vec<usize>) {
    let mut fg_hist = vec![0usize; NUM_THRESHOLDS];
    let mut bg_hist = vec![0usize; NUM_THRESHOLDS];
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let bin = threshold_bin(p);
        if g {
            fg_hist[bin] += 1;
        } else {
            bg_hist[bin] += 1;
        }
    }
    // Pixel is positive at threshold t iff its bin >= t: suffix sums.
    let mut tp = vec![0usize; NUM_THRESHOLDS];
    let mut fp = vec![0usize; NUM_THRESHOLDS];
    let (mut a, mut b) = (0, 0);
    for t in (0..NUM_THRESHOLDS).rev() {
        a += fg_hist[t];
        b += bg_hist[t];
        tp[t] = a;
        fp[t] = b;
    }
    (tp, fp)
}

/// PR curve over the 256 thresholds. A threshold with no predicted positives
/// has precision 1 by convention. Fails when the mask has no foreground.
pub fn pr_curve(pred: &Map, gt: &Mask) -> Result<Vec<PrPoint>> {
    check_pair(pred, gt)?;
    let fg = gt.foreground();
    if fg == 0 {
        return Err(MetricError::NoForeground);
    }
    let (tp, fp) = positive_counts(pred, gt);
    Ok((0..NUM_THRESHOLDS)
        .map(|t| {
            let positives = tp[t] + fp[t];
            PrPoint {
                threshold: t as u8,
                precision: if positives == 0 {
                    1.0
                } else {
                    tp[t] as f64 / positives as f64
                },
                recall: tp[t] as f64 / fg as f64,
            }
        })
        .collect())
}

/// F-measure at each point of a PR curve.
pub fn f_measure_curve(curve: &[PrPoint]) -> Vec<f64> {
    curve.iter().map(|p| f_measure(p.precision, p.recall)).collect()
}

/// F-measure at the adaptive threshold `min(2·mean(pred), 1)`.
pub fn adaptive_f_measure(pred: &Map, gt: &Mask) -> Result<f64> {
    check_pair(pred, gt)?;
    let fg = gt.foreground();
    if fg == 0 {
        return Err(MetricError::NoForeground);
    }
    let threshold = (2.0 * pred.mean()).min(1.0);
    let (mut tp, mut positives) = (0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if p >= threshold {
            positives += 1;
            if g {
                tp += 1;
            }
        }
    }
    let precision = if positives == 0 {
        1.0
    } else {
        tp as f64 / positives as f64
    };
    Ok(f_measure(precision, tp as f64 / fg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_measure_examples() {
        assert_eq!(f_measure(1.0, 1.0), 1.0);
        assert!((f_measure(0.5, 1.0) - 0.65 / 1.15).abs() < 1e-15);
        assert!((f_measure(0.5, 1.0) - 0.5652).abs() < 1e-4);
        assert_eq!(f_measure(0.7, 0.0), 0.0);
        assert_eq!(f_measure(0.0, 0.0), 0.0);
    }

    #[test]
    fn threshold_bin_agrees_with_direct_comparison() {
        for i in 0..=10_000 {
            let v = i as f64 / 10_000.0;
            let direct = (0..NUM_THRESHOLDS).filter(|&t| v >= t as f64 / 255.0).max().unwrap();
            assert_eq!(threshold_bin(v), direct, "v={v}");
        }
        for t in 0..NUM_THRESHOLDS {
            assert_eq!(threshold_bin(t as f64 / 255.0), t);
        }
    }

    #[test]
    fn recall_never_increases_with_threshold() {
        let gt = Mask::from_fn(8, 8, |x, y| (x + y) % 3 == 0);
        let pred = Map::from_fn(8, 8, |x, y| ((x * 31 + y * 17) % 97) as f64 / 96.0);
        let curve = pr_curve(&pred, &gt).unwrap();
        assert_eq!(curve.len(), NUM_THRESHOLDS);
        assert!(curve.windows(2).all(|w| w[1].recall <= w[0].recall));
        assert_eq!(curve[0].recall, 1.0);
    }

    #[test]
    fn no_foreground_is_reported() {
        let gt = Mask::from_fn(4, 4, |_, _| false);
        assert!(matches!(
            pr_curve(&Map::filled(4, 4, 0.3), &gt),
            Err(MetricError::NoForeground)
        ));
    }

    #[test]
    fn perfect_binary_prediction_has_unit_max_f() {
        let gt = Mask::from_fn(6, 6, |x, _| x < 2);
        let curve = pr_curve(&Map::from_mask(&gt), &gt).unwrap();
        let best = f_measure_curve(&curve).into_iter().fold(0.0, f64::max);
        assert_eq!(best, 1.0);
        assert_eq!(adaptive_f_measure(&Map::from_mask(&gt), &gt).unwrap(), 1.0);
    }
}
