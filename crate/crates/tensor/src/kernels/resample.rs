use crate::scalar::Scalar;

/// Source taps for one output coordinate of a bilinear resize.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub w1: f64,
}

/// Half-pixel-centre (`align_corners = false`) sampling table.
pub(crate) fn bilinear_taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            Tap {
                i0,
                i1,
                w1: s - i0 as f64,
            }
        })
        .collect()
}

pub(crate) fn resize_plane<T: Scalar>(src: &[T], sw: usize, rows: &[Tap], cols: &[Tap], dst: &mut [T]) {
    let dw = cols.len();
    for (y, r) in rows.iter().enumerate() {
        let (wy1, wy0) = (T::of(r.w1), T::of(1.0 - r.w1));
        let line0 = &src[r.i0 * sw..(r.i0 + 1) * sw];
        let line1 = &src[r.i1 * sw..(r.i1 + 1) * sw];
        for (x, c) in cols.iter().enumerate() {
            let (wx1, wx0) = (T::of(c.w1), T::of(1.0 - c.w1));
            let top = line0[c.i0] * wx0 + line0[c.i1] * wx1;
            let bot = line1[c.i0] * wx0 + line1[c.i1] * wx1;
            dst[y * dw + x] = top * wy0 + bot * wy1;
        }
    }
}

pub(crate) fn resize_plane_backward<T: Scalar>(dy: &[T], sw: usize, rows: &[Tap], cols: &[Tap], dx: &mut [T]) {
    let dw = cols.len();
    for (y, r) in rows.iter().enumerate() {
        let (wy1, wy0) = (T::of(r.w1), T::of(1.0 - r.w1));
        for (x, c) in cols.iter().enumerate() {
            let (wx1, wx0) = (T::of(c.w1), T::of(1.0 - c.w1));
            let g = dy[y * dw + x];
            dx[r.i0 * sw + c.i0] += g * wy0 * wx0;
            dx[r.i0 * sw + c.i1] += g * wy0 * wx1;
            dx[r.i1 * sw + c.i0] += g * wy1 * wx0;
            dx[r.i1 * sw + c.i1] += g * wy1 * wx1;
        }
    }
}
