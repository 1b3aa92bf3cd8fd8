use crate::map::{check_pair, Map, Mask};
use crate::Result;

/// Blend between the object-aware and region-aware terms.
pub const S_ALPHA: f64 = 0.5;

const EPS: f64 = f64::EPSILON;

/// Structure measure `α·S_o + (1 − α)·S_r`, clamped at 0.
///
/// A mask without foreground scores `1 − mean(pred)`; an all-foreground mask
/// scores `mean(pred)`.
pub fn s_measure(pred: &Map, gt: &Mask) -> Result<f64> {
    check_pair(pred, gt)?;
    let fg = gt.foreground();
    if fg == 0 {
        return Ok(1.0 - pred.mean());
    }
    if fg == gt.len() {
        return Ok(pred.mean());
    }
    let q = S_ALPHA * object_score(pred, gt) + (1.0 - S_ALPHA) * region_score(pred, gt);
    Ok(q.max(0.0))
}

fn object_score(pred: &Map, gt: &Mask) -> f64 {
    let fg: Vec<f64> = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(_, &g)| g)
        .map(|(&p, _)| p)
        .collect();
    let bg: Vec<f64> = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(_, &g)| !g)
        .map(|(&p, _)| 1.0 - p)
        .collect();
    let u = fg.len() as f64 / gt.len() as f64;
    u * object(&fg) + (1.0 - u) * object(&bg)
}

fn object(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let x = values.iter().sum::<f64>() / n;
    let sigma = if values.len() > 1 {
        (values.iter().map(|v| (v - x) * (v - x)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * x / (x * x + 1.0 + sigma + EPS)
}

/// Foreground centroid as 1-based rounded column and row indices.
fn centroid(gt: &Mask) -> (usize, usize) {
    let (w, h) = gt.dims();
    let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if gt.get(x, y) {
                sx += (x + 1) as f64;
                sy += (y + 1) as f64;
                total += 1.0;
            }
        }
    }
    ((sx / total).round() as usize, (sy / total).round() as usize)
}

fn region_score(pred: &Map, gt: &Mask) -> f64 {
    let (w, h) = gt.dims();
    let (cx, cy) = centroid(gt);
    let area = (w * h) as f64;
    let w1 = (cx * cy) as f64 / area;
    let w2 = ((w - cx) * cy) as f64 / area;
    let w3 = (cx * (h - cy)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let quadrants = [
        (0..cx, 0..cy, w1),
        (cx..w, 0..cy, w2),
        (0..cx, cy..h, w3),
        (cx..w, cy..h, w4),
    ];
    quadrants
        .into_iter()
        .map(|(xs, ys, weight)| {
            if xs.is_empty() || ys.is_empty() {
                return 0.0;
            }
            let mut p = Vec::new();
            let mut g = Vec::new();
            for y in ys {
                for x in xs.clone() {
                    p.push(pred.get(x, y));
                    g.push(if gt.get(x, y) { 1.0 } else { 0.0 });
                }
            }
            weight * ssim(&p, &g)
        })
        .sum()
}

fn ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let x = pred.iter().sum::<f64>() / n;
    let y = gt.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gt) {
        sxx += (p - x) * (p - x);
        syy += (g - y) * (g - y);
        sxy += (p - x) * (g - y);
    }
    let denom = n - 1.0 + EPS;
    let (sxx, syy, sxy) = (sxx / denom, syy / denom, sxy / denom);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sxx + syy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}
