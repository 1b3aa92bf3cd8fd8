use crate::scalar::{matmul, Scalar};

/// Geometry of a stride-1 square-kernel convolution over one image.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.k
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.k
    }

    pub fn rows(&self) -> usize {
        self.in_c * self.k * self.k
    }

    /// 1×1 unpadded convolutions use the input directly as the column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.k == 1 && self.pad == 0
    }

    /// Valid output-column range for kernel offset `kx`.
    fn span(&self, kx: usize) -> (usize, usize) {
        let ow = self.out_w();
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(ow);
        (lo, hi.max(lo))
    }
}

pub(crate) fn im2col<T: Scalar>(g: &ConvGeom, input: &[T], cols: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    for ci in 0..g.in_c {
        let src = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (lo, hi) = g.span(kx);
                for oy in 0..oh {
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    let iy = oy + ky;
                    if iy < g.pad || iy - g.pad >= g.h {
                        line.fill(T::zero());
                        continue;
                    }
                    let iy = iy - g.pad;
                    line[..lo].fill(T::zero());
                    line[hi..].fill(T::zero());
                    if hi > lo {
                        let ix0 = lo + kx - g.pad;
                        line[lo..hi].copy_from_slice(&src[iy * g.w + ix0..iy * g.w + ix0 + (hi - lo)]);
                    }
                }
            }
        }
    }
}

pub(crate) fn col2im_add<T: Scalar>(g: &ConvGeom, cols: &[T], out: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    for ci in 0..g.in_c {
        let dst = &mut out[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let (lo, hi) = g.span(kx);
                if hi <= lo {
                    continue;
                }
                for oy in 0..oh {
                    let iy = oy + ky;
                    if iy < g.pad || iy - g.pad >= g.h {
                        continue;
                    }
                    let iy = iy - g.pad;
                    let ix0 = lo + kx - g.pad;
                    let d = &mut dst[iy * g.w + ix0..iy * g.w + ix0 + (hi - lo)];
                    for (a, &b) in d.iter_mut().zip(&src[oy * ow + lo..oy * ow + hi]) {
                        *a += b;
                    }
                }
            }
        }
    }
}

/// Forward pass for a batch. Returns the output and, for non-pointwise
/// kernels, the per-image column matrices needed by the backward pass.
pub(crate) fn forward<T: Scalar>(
    g: &ConvGeom,
    batch: usize,
    out_c: usize,
    input: &[T],
    weight: &[T],
    bias: Option<&[T]>,
) -> (Vec<T>, Vec<T>) {
    let plane = g.out_h() * g.out_w();
    let in_per = g.in_c * g.h * g.w;
    let rows = g.rows();
    let mut out = vec![T::zero(); batch * out_c * plane];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); batch * rows * plane]
    };
    for b in 0..batch {
        let x = &input[b * in_per..(b + 1) * in_per];
        let y = &mut out[b * out_c * plane..(b + 1) * out_c * plane];
        if let Some(bias) = bias {
            for (co, chunk) in y.chunks_mut(plane).enumerate() {
                chunk.fill(bias[co]);
            }
        }
        let c: &[T] = if g.is_pointwise() {
            x
        } else {
            let c = &mut cols[b * rows * plane..(b + 1) * rows * plane];
            im2col(g, x, c);
            c
        };
        matmul(out_c, rows, plane, weight, false, c, false, y, bias.is_some());
    }
    (out, cols)
}

pub(crate) struct ConvGrads<'a, T> {
    pub input: Option<&'a mut [T]>,
    pub weight: Option<&'a mut [T]>,
    pub bias: Option<&'a mut [T]>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Scalar>(
    g: &ConvGeom,
    batch: usize,
    out_c: usize,
    input: &[T],
    weight: &[T],
    cols: &[T],
    grad_out: &[T],
    grads: ConvGrads<'_, T>,
) {
    let plane = g.out_h() * g.out_w();
    let in_per = g.in_c * g.h * g.w;
    let rows = g.rows();
    let ConvGrads {
        input: mut gin,
        weight: mut gw,
        bias: mut gb,
    } = grads;
    let mut dcols = if gin.is_some() && !g.is_pointwise() {
        vec![T::zero(); rows * plane]
    } else {
        Vec::new()
    };
    for b in 0..batch {
        let dy = &grad_out[b * out_c * plane..(b + 1) * out_c * plane];
        if let Some(gb) = gb.as_deref_mut() {
            for (co, chunk) in dy.chunks(plane).enumerate() {
                gb[co] += chunk.iter().copied().sum::<T>();
            }
        }
        if let Some(gw) = gw.as_deref_mut() {
            let c: &[T] = if g.is_pointwise() {
                &input[b * in_per..(b + 1) * in_per]
            } else {
                &cols[b * rows * plane..(b + 1) * rows * plane]
            };
            matmul(out_c, plane, rows, dy, false, c, true, gw, true);
        }
        if let Some(gin) = gin.as_deref_mut() {
            let dx = &mut gin[b * in_per..(b + 1) * in_per];
            if g.is_pointwise() {
                matmul(rows, out_c, plane, weight, true, dy, false, dx, true);
            } else {
                matmul(rows, out_c, plane, weight, true, dy, false, &mut dcols, false);
                col2im_add(g, &dcols, dx);
            }
        }
    }
}
