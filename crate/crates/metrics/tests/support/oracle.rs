//! Brute-force transcriptions of the metric definitions and the checks that
//! compare the library against them. Shared with the workspace acceptance target.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgbt_metrics::{
    adaptive_f_measure, e_measure, e_measure_curve, f_measure_curve, mae, pr_curve, s_measure, Map, Mask,
};

/// Row-major matrix helpers over plain vectors, indexed `[row][col]`.
pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(map: &Map) -> Mat {
    (0..map.height()).map(|y| (0..map.width()).map(|x| map.get(x, y)).collect()).collect()
}

pub fn mask_mat(mask: &Mask) -> Mat {
    (0..mask.height())
        .map(|y| (0..mask.width()).map(|x| if mask.get(x, y) { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mean2(m: &Mat) -> f64 {
    let n: usize = m.iter().map(Vec::len).sum();
    m.iter().flatten().sum::<f64>() / n as f64
}

fn sub(m: &Mat, r0: usize, r1: usize, c0: usize, c1: usize) -> Mat {
    m[r0..r1].iter().map(|row| row[c0..c1].to_vec()).collect()
}

pub mod oracle {
    use super::*;

    const EPS: f64 = f64::EPSILON;

    pub fn mae(pred: &Mat, gt: &Mat) -> f64 {
        let mut s = 0.0;
        let mut n = 0.0;
        for (pr, gr) in pred.iter().zip(gt) {
            for (p, g) in pr.iter().zip(gr) {
                s += (p - g).abs();
                n += 1.0;
            }
        }
        s / n
    }

    /// Precision and recall at threshold `t/255` by direct pixel counting.
    pub fn pr_at(pred: &Mat, gt: &Mat, t: usize) -> (f64, f64) {
        let thr = t as f64 / 255.0;
        let (mut tp, mut pos, mut fg) = (0.0, 0.0, 0.0);
        for (pr, gr) in pred.iter().zip(gt) {
            for (&p, &g) in pr.iter().zip(gr) {
                let hit = p >= thr;
                if hit {
                    pos += 1.0;
                }
                if g > 0.5 {
                    fg += 1.0;
                    if hit {
                        tp += 1.0;
                    }
                }
            }
        }
        let precision = if pos == 0.0 { 1.0 } else { tp / pos };
        (precision, tp / fg)
    }

    pub fn f(p: f64, r: f64) -> f64 {
        let num = 1.3 * p * r;
        let den = 0.3 * p + r;
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn f_max(pred: &Mat, gt: &Mat) -> f64 {
        (0..256)
            .map(|t| {
                let (p, r) = pr_at(pred, gt, t);
                f(p, r)
            })
            .fold(f64::MIN, f64::max)
    }

    pub fn f_adaptive(pred: &Mat, gt: &Mat) -> f64 {
        let thr = (2.0 * mean2(pred)).min(1.0);
        let (mut tp, mut pos, mut fg) = (0.0, 0.0, 0.0);
        for (pr, gr) in pred.iter().zip(gt) {
            for (&p, &g) in pr.iter().zip(gr) {
                if p >= thr {
                    pos += 1.0;
                    tp += g;
                }
                fg += g;
            }
        }
        let precision = if pos == 0.0 { 1.0 } else { tp / pos };
        f(precision, tp / fg)
    }

    // Structure measure, transcribed from the reference toolkit with 1-based
    // row/column arithmetic.

    fn std1(values: &[f64]) -> f64 {
        let n = values.len();
        if n <= 1 {
            return 0.0;
        }
        let m = values.iter().sum::<f64>() / n as f64;
        (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    }

    fn object(values: &[f64]) -> f64 {
        let x = values.iter().sum::<f64>() / values.len() as f64;
        2.0 * x / (x * x + 1.0 + std1(values) + EPS)
    }

    fn s_object(pred: &Mat, gt: &Mat) -> f64 {
        let mut fg = Vec::new();
        let mut bg = Vec::new();
        for (pr, gr) in pred.iter().zip(gt) {
            for (&p, &g) in pr.iter().zip(gr) {
                if g == 1.0 {
                    fg.push(p);
                } else {
                    bg.push(1.0 - p);
                }
            }
        }
        let u = mean2(gt);
        u * object(&fg) + (1.0 - u) * object(&bg)
    }

    fn centroid(gt: &Mat) -> (usize, usize) {
        let rows = gt.len();
        let cols = gt[0].len();
        let total: f64 = gt.iter().flatten().sum();
        let mut xs = 0.0;
        for j in 1..=cols {
            let col_sum: f64 = (0..rows).map(|i| gt[i][j - 1]).sum();
            xs += col_sum * j as f64;
        }
        let mut ys = 0.0;
        for i in 1..=rows {
            ys += gt[i - 1].iter().sum::<f64>() * i as f64;
        }
        // Round half away from zero.
        ((xs / total + 0.5).floor() as usize, (ys / total + 0.5).floor() as usize)
    }

    fn ssim(pred: &Mat, gt: &Mat) -> f64 {
        let n: f64 = pred.iter().map(Vec::len).sum::<usize>() as f64;
        let x = mean2(pred);
        let y = mean2(gt);
        let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
        for (pr, gr) in pred.iter().zip(gt) {
            for (&p, &g) in pr.iter().zip(gr) {
                sx += (p - x).powi(2);
                sy += (g - y).powi(2);
                sxy += (p - x) * (g - y);
            }
        }
        sx /= n - 1.0 + EPS;
        sy /= n - 1.0 + EPS;
        sxy /= n - 1.0 + EPS;
        let alpha = 4.0 * x * y * sxy;
        let beta = (x * x + y * y) * (sx + sy);
        if alpha != 0.0 {
            alpha / (beta + EPS)
        } else if alpha == 0.0 && beta == 0.0 {
            1.0
        } else {
            0.0
        }
    }

    fn s_region(pred: &Mat, gt: &Mat) -> f64 {
        let hei = gt.len();
        let wid = gt[0].len();
        let (x, y) = centroid(gt);
        let area = (wid * hei) as f64;
        let w = [
            (x * y) as f64 / area,
            ((wid - x) * y) as f64 / area,
            (x * (hei - y)) as f64 / area,
        ];
        let w4 = 1.0 - w[0] - w[1] - w[2];
        let blocks = [(0, y, 0, x, w[0]), (0, y, x, wid, w[1]), (y, hei, 0, x, w[2]), (y, hei, x, wid, w4)];
        let mut q = 0.0;
        for (r0, r1, c0, c1, weight) in blocks {
            if r1 > r0 && c1 > c0 {
                q += weight * ssim(&sub(pred, r0, r1, c0, c1), &sub(gt, r0, r1, c0, c1));
            }
        }
        q
    }

    pub fn s_measure(pred: &Mat, gt: &Mat) -> f64 {
        let y = mean2(gt);
        if y == 0.0 {
            1.0 - mean2(pred)
        } else if y == 1.0 {
            mean2(pred)
        } else {
            let q = 0.5 * s_object(pred, gt) + 0.5 * s_region(pred, gt);
            q.max(0.0)
        }
    }

    /// Enhanced-alignment score of a binary map, evaluated pixel by pixel.
    pub fn e_binary(fm: &Mat, gt: &Mat) -> f64 {
        let n: f64 = gt.iter().map(Vec::len).sum::<usize>() as f64;
        let gt_sum: f64 = gt.iter().flatten().sum();
        let mut total = 0.0;
        if gt_sum == 0.0 {
            for row in fm {
                for &f in row {
                    total += 1.0 - f;
                }
            }
        } else if gt_sum == n {
            total = fm.iter().flatten().sum();
        } else {
            let mu_f = mean2(fm);
            let mu_g = mean2(gt);
            for (fr, gr) in fm.iter().zip(gt) {
                for (&f, &g) in fr.iter().zip(gr) {
                    let a = f - mu_f;
                    let b = g - mu_g;
                    let align = 2.0 * a * b / (a * a + b * b + EPS);
                    total += (align + 1.0).powi(2) / 4.0;
                }
            }
        }
        total / n
    }

    pub fn e_curve(pred: &Mat, gt: &Mat) -> Vec<f64> {
        (0..256)
            .map(|t| {
                let thr = t as f64 / 255.0;
                let fm: Mat = pred
                    .iter()
                    .map(|r| r.iter().map(|&p| if p >= thr { 1.0 } else { 0.0 }).collect())
                    .collect();
                e_binary(&fm, gt)
            })
            .collect()
    }
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Mask {
    match rng.random_range(0..4) {
        0 => Mask::new(w, h, (0..w * h).map(|_| rng.random_bool(0.3)).collect()).unwrap(),
        _ => {
            let cx = rng.random_range(0.0..w as f64);
            let cy = rng.random_range(0.0..h as f64);
            let r = rng.random_range(1.0..w as f64 / 2.0);
            Mask::from_fn(w, h, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
        }
    }
}

pub fn random_pred(rng: &mut ChaCha8Rng, gt: &Mask) -> Map {
    let (w, h) = gt.dims();
    let kind = rng.random_range(0..3);
    let values: Vec<f64> = (0..w * h)
        .map(|i| {
            let g = if gt.data()[i] { 1.0 } else { 0.0 };
            match kind {
                0 => rng.random_range(0.0..=1.0),
                // Quantised to the 8-bit grid so threshold ties are exercised.
                1 => rng.random_range(0..=255u8) as f64 / 255.0,
                _ => (0.6 * g + 0.4 * rng.random_range(0.0..1.0f64)).clamp(0.0, 1.0),
            }
        })
        .collect();
    Map::new(w, h, values).unwrap()
}

pub fn cases() -> Vec<(Map, Mask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();
    while out.len() < 120 {
        let gt = random_mask(&mut rng, 16, 16);
        if gt.foreground() == 0 {
            continue;
        }
        let pred = random_pred(&mut rng, &gt);
        out.push((pred, gt));
    }
    out
}

pub type Check = Result<(), String>;

fn close(got: f64, want: f64, tol: f64, what: impl FnOnce() -> String) -> Check {
    if (got - want).abs() < tol {
        Ok(())
    } else {
        Err(format!("{}: library {got}, oracle {want}", what()))
    }
}

/// MAE, PR points, max-F and adaptive F against direct summation to 1e-9.
pub fn check_mae_and_f(cases: &[(Map, Mask)]) -> Check {
    for (i, (pred, gt)) in cases.iter().enumerate() {
        let (p, g) = (to_mat(pred), mask_mat(gt));
        close(mae(pred, gt).unwrap(), oracle::mae(&p, &g), 1e-9, || format!("case {i} mae"))?;
        let curve = pr_curve(pred, gt).unwrap();
        for (t, point) in curve.iter().enumerate() {
            let (op, or) = oracle::pr_at(&p, &g, t);
            close(point.precision, op, 1e-9, || format!("case {i} t {t} precision"))?;
            close(point.recall, or, 1e-9, || format!("case {i} t {t} recall"))?;
        }
        let fmax = f_measure_curve(&curve).into_iter().fold(f64::MIN, f64::max);
        close(fmax, oracle::f_max(&p, &g), 1e-9, || format!("case {i} f_max"))?;
        let fa = adaptive_f_measure(pred, gt).unwrap();
        close(fa, oracle::f_adaptive(&p, &g), 1e-9, || format!("case {i} f_adaptive"))?;
    }
    Ok(())
}

pub fn check_s(cases: &[(Map, Mask)]) -> Check {
    for (i, (pred, gt)) in cases.iter().enumerate() {
        let want = oracle::s_measure(&to_mat(pred), &mask_mat(gt));
        close(s_measure(pred, gt).unwrap(), want, 1e-6, || format!("case {i} s"))?;
    }
    Ok(())
}

pub fn check_e(cases: &[(Map, Mask)]) -> Check {
    for (i, (pred, gt)) in cases.iter().enumerate() {
        let got = e_measure_curve(pred, gt).unwrap();
        let want = oracle::e_curve(&to_mat(pred), &mask_mat(gt));
        for t in 0..256 {
            close(got[t], want[t], 1e-6, || format!("case {i} t {t} e"))?;
        }
    }
    Ok(())
}

/// All-background and all-foreground ground truth.
pub fn check_degenerate() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for fill in [false, true] {
        let gt = Mask::from_fn(16, 16, |_, _| fill);
        for k in 0..10 {
            let pred = random_pred(&mut rng, &gt);
            let (p, g) = (to_mat(&pred), mask_mat(&gt));
            let label = |m: &str| format!("fill {fill} case {k} {m}");
            close(s_measure(&pred, &gt).unwrap(), oracle::s_measure(&p, &g), 1e-12, || label("s"))?;
            let want = oracle::e_curve(&p, &g).into_iter().fold(f64::MIN, f64::max);
            close(e_measure(&pred, &gt).unwrap(), want, 1e-12, || label("e"))?;
            close(mae(&pred, &gt).unwrap(), oracle::mae(&p, &g), 1e-12, || label("mae"))?;
        }
    }
    Ok(())
}
