use crate::scalar::Scalar;

/// Per-channel batch statistics of an NCHW buffer: (mean, biased variance).
pub(crate) fn channel_stats<T: Scalar>(x: &[T], b: usize, c: usize, plane: usize) -> (Vec<T>, Vec<T>) {
    let n = T::of((b * plane) as f64);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for bi in 0..b {
            let off = (bi * c + ch) * plane;
            s += x[off..off + plane].iter().copied().sum::<T>();
        }
        let m = s / n;
        let mut v = T::zero();
        for bi in 0..b {
            let off = (bi * c + ch) * plane;
            v += x[off..off + plane].iter().map(|&t| (t - m) * (t - m)).sum::<T>();
        }
        mean[ch] = m;
        var[ch] = v / n;
    }
    (mean, var)
}

/// `y = gamma * (x - mean) * inv_std + beta`; returns `(y, xhat)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn normalize<T: Scalar>(
    x: &[T],
    b: usize,
    c: usize,
    plane: usize,
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
    beta: &[T],
) -> (Vec<T>, Vec<T>) {
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * plane;
            let (m, s, g, bt) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for i in off..off + plane {
                let h = (x[i] - m) * s;
                xhat[i] = h;
                y[i] = g * h + bt;
            }
        }
    }
    (y, xhat)
}

pub(crate) struct NormGrads<'a, T> {
    pub input: Option<&'a mut [T]>,
    pub gamma: Option<&'a mut [T]>,
    pub beta: Option<&'a mut [T]>,
}

/// Backward through batch normalisation. With `batch_stats` the statistics
/// are functions of the input (training mode); otherwise they are constants.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Scalar>(
    dy: &[T],
    xhat: &[T],
    b: usize,
    c: usize,
    plane: usize,
    inv_std: &[T],
    gamma: &[T],
    batch_stats: bool,
    grads: NormGrads<'_, T>,
) {
    let NormGrads {
        input: mut gin,
        gamma: mut gg,
        beta: mut gb,
    } = grads;
    let n = T::of((b * plane) as f64);
    for ch in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for bi in 0..b {
            let off = (bi * c + ch) * plane;
            for i in off..off + plane {
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * xhat[i];
            }
        }
        if let Some(gg) = gg.as_deref_mut() {
            gg[ch] += sum_dy_xhat;
        }
        if let Some(gb) = gb.as_deref_mut() {
            gb[ch] += sum_dy;
        }
        if let Some(gin) = gin.as_deref_mut() {
            let scale = gamma[ch] * inv_std[ch];
            for bi in 0..b {
                let off = (bi * c + ch) * plane;
                for i in off..off + plane {
                    gin[i] += if batch_stats {
                        scale * (dy[i] - sum_dy / n - xhat[i] * sum_dy_xhat / n)
                    } else {
                        scale * dy[i]
                    };
                }
            }
        }
    }
}
