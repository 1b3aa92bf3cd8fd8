use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ImagePair;

/// Ranges of the random thermal transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisalignConfig {
    pub max_rotation_deg: f64,
    /// Largest translation per axis as a fraction of the side.
    pub max_translation: f64,
    pub min_scale: f64,
    pub max_scale: f64,
}

impl Default for MisalignConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 10.0,
            max_translation: 0.05,
            min_scale: 0.9,
            max_scale: 1.1,
        }
    }
}

/// Similarity transform about the image centre: `p' = s·R(θ)·(p − c) + c + t`.
/// Translations are fractions of width and height, rounded to whole pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub rotation_deg: f64,
    pub translate_x: f64,
    pub translate_y: f64,
    pub scale: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        rotation_deg: 0.0,
        translate_x: 0.0,
        translate_y: 0.0,
        scale: 1.0,
    };

    pub fn sample<R: Rng + ?Sized>(config: &MisalignConfig, rng: &mut R) -> Self {
        let sym = |rng: &mut R, m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        let rotation_deg = sym(rng, config.max_rotation_deg);
        let translate_x = sym(rng, config.max_translation);
        let translate_y = sym(rng, config.max_translation);
        let scale = if config.max_scale > config.min_scale {
            rng.random_range(config.min_scale..=config.max_scale)
        } else {
            config.min_scale
        };
        Self {
            rotation_deg,
            translate_x,
            translate_y,
            scale,
        }
    }

    /// Pixel offsets for an image of the given size.
    pub fn shift_pixels(&self, width: u32, height: u32) -> (f64, f64) {
        (
            (self.translate_x * f64::from(width)).round(),
            (self.translate_y * f64::from(height)).round(),
        )
    }
}

/// Applies `affine` by inverse mapping with bilinear sampling; coordinates
/// outside the image are clamped, which replicates the border.
pub fn warp_thermal(image: &GrayImage, affine: &Affine) -> GrayImage {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return image.clone();
    }
    let cx = (f64::from(w) - 1.0) / 2.0;
    let cy = (f64::from(h) - 1.0) / 2.0;
    let (tx, ty) = affine.shift_pixels(w, h);
    let (sin, cos) = affine.rotation_deg.to_radians().sin_cos();
    let max_x = f64::from(w - 1);
    let max_y = f64::from(h - 1);
    let at = |x: u32, y: u32| f64::from(image.get_pixel(x, y)[0]);
    GrayImage::from_fn(w, h, |x, y| {
        let dx = f64::from(x) - cx - tx;
        let dy = f64::from(y) - cy - ty;
        let sx = ((cos * dx + sin * dy) / affine.scale + cx).clamp(0.0, max_x);
        let sy = ((-sin * dx + cos * dy) / affine.scale + cy).clamp(0.0, max_y);
        let x0 = sx.floor();
        let y0 = sy.floor();
        let fx = sx - x0;
        let fy = sy - y0;
        let (x0, y0) = (x0 as u32, y0 as u32);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
        let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
        let v = top * (1.0 - fy) + bottom * fy;
        Luma([v.round().clamp(0.0, 255.0) as u8])
    })
}

/// Warps the thermal image by a transform drawn from `seed`; RGB and GT are untouched.
pub fn misalign_thermal(pair: &ImagePair, seed: u64, config: &MisalignConfig) -> (ImagePair, Affine) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let affine = Affine::sample(config, &mut rng);
    let out = ImagePair {
        thermal: warp_thermal(&pair.thermal, &affine),
        ..pair.clone()
    };
    (out, affine)
}
