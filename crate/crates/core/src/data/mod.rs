//! RGB-T datasets: directory I/O, a synthetic generator and thermal misalignment.
//!
//! Layout: `root/{RGB,T,GT}/<stem>.{jpg,png,bmp}`. Pixel values are kept as
//! 8-bit images in memory and scaled to `[0, 1]` when batched.

mod io;
mod misalign;
mod synth;

pub use io::{load_pairs, load_vt_dataset, write_pairs, GT_DIR, RGB_DIR, THERMAL_DIR};
pub use misalign::{misalign_thermal, warp_thermal, Affine, MisalignConfig};
pub use synth::{generate_pairs, generate_synthetic, Manifest, ManifestEntry, Shape, SynthConfig, NOISE_STD};

use image::{GrayImage, RgbImage};

use rgbt_tensor::{Scalar, Tensor};

use crate::model::Batch;
use crate::{CoreError, Result};

/// One aligned RGB-T sample. `gt` holds 0 or 1 in every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub name: String,
    pub rgb: RgbImage,
    pub thermal: GrayImage,
    pub gt: GrayImage,
}

impl ImagePair {
    pub fn dimensions(&self) -> (u32, u32) {
        self.rgb.dimensions()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.rgb.dimensions();
        if self.thermal.dimensions() != d || self.gt.dimensions() != d {
            return Err(CoreError::Data(format!(
                "{}: rgb {:?}, thermal {:?} and gt {:?} differ in size",
                self.name,
                d,
                self.thermal.dimensions(),
                self.gt.dimensions()
            )));
        }
        if self.gt.pixels().any(|p| p[0] > 1) {
            return Err(CoreError::Data(format!("{}: gt is not binary", self.name)));
        }
        Ok(())
    }
}

/// Stacks samples into an NCHW batch; thermal is replicated to three channels.
pub fn make_batch<T: Scalar>(pairs: &[&ImagePair]) -> Result<Batch<T>> {
    let first = pairs.first().ok_or_else(|| CoreError::Data("empty batch".into()))?;
    let (w, h) = first.dimensions();
    let (w, h) = (w as usize, h as usize);
    let n = pairs.len();
    let plane = w * h;
    let mut rgb = vec![T::of(0.0); n * 3 * plane];
    let mut thermal = vec![T::of(0.0); n * 3 * plane];
    let mut gt = vec![T::of(0.0); n * plane];
    for (b, pair) in pairs.iter().enumerate() {
        pair.validate()?;
        if pair.dimensions() != (w as u32, h as u32) {
            return Err(CoreError::Data(format!("{} differs in size from {}", pair.name, first.name)));
        }
        for (i, p) in pair.rgb.pixels().enumerate() {
            for c in 0..3 {
                rgb[(b * 3 + c) * plane + i] = T::of(f64::from(p[c]) / 255.0);
            }
        }
        for (i, p) in pair.thermal.pixels().enumerate() {
            let v = T::of(f64::from(p[0]) / 255.0);
            for c in 0..3 {
                thermal[(b * 3 + c) * plane + i] = v;
            }
        }
        for (i, p) in pair.gt.pixels().enumerate() {
            gt[b * plane + i] = T::of(f64::from(p[0]));
        }
    }
    let tensor = |c: usize, data| Tensor::from_vec(&[n, c, h, w], data).map_err(|e| CoreError::Data(e.to_string()));
    Ok(Batch {
        rgb: tensor(3, rgb)?,
        thermal: tensor(3, thermal)?,
        gt: tensor(1, gt)?,
    })
}
