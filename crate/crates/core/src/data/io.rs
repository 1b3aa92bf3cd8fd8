use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{GrayImage, Luma};

use super::ImagePair;
use crate::{CoreError, Result};

pub const RGB_DIR: &str = "RGB";
pub const THERMAL_DIR: &str = "T";
pub const GT_DIR: &str = "GT";

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| CoreError::Image {
        path: path.display().to_string(),
        source,
    })
}

fn listing(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        return Err(CoreError::Data(format!("missing directory {}", dir.display())));
    }
    Ok(rgbt_metrics::list_images(dir)?)
}

/// Binarizes a mask at 128, warning when intermediate values are present.
fn binarize(name: &str, mask: &GrayImage) -> GrayImage {
    let gray = mask.pixels().filter(|p| p[0] != 0 && p[0] != 255).count();
    if gray > 0 {
        log::warn!("{name}: {gray} gt pixels are neither 0 nor 255, thresholding at 128");
    }
    GrayImage::from_fn(mask.width(), mask.height(), |x, y| Luma([u8::from(mask.get_pixel(x, y)[0] >= 128)]))
}

/// Loads every pair in `dir/{RGB,T,GT}`, resizing to `size × size` when given
/// (bilinear for images, nearest for masks). Pairs are ordered by stem.
pub fn load_pairs(dir: &Path, size: Option<usize>) -> Result<Vec<ImagePair>> {
    let rgb = listing(&dir.join(RGB_DIR))?;
    let thermal = listing(&dir.join(THERMAL_DIR))?;
    let gt = listing(&dir.join(GT_DIR))?;
    let mut offenders = Vec::new();
    for stem in rgb.keys().chain(thermal.keys()).chain(gt.keys()) {
        let complete = rgb.contains_key(stem) && thermal.contains_key(stem) && gt.contains_key(stem);
        if !complete && !offenders.contains(stem) {
            offenders.push(stem.clone());
        }
    }
    if !offenders.is_empty() {
        return Err(CoreError::Data(format!(
            "unmatched stems in {}: {}",
            dir.display(),
            offenders.join(", ")
        )));
    }
    let mut pairs = Vec::with_capacity(rgb.len());
    for (stem, rgb_path) in &rgb {
        let mut r = open(rgb_path)?.to_rgb8();
        let mut t = open(&thermal[stem])?.to_luma8();
        let mut g = binarize(stem, &open(&gt[stem])?.to_luma8());
        if let Some(s) = size {
            let s = s as u32;
            if r.dimensions() != (s, s) {
                r = imageops::resize(&r, s, s, FilterType::Triangle);
            }
            if t.dimensions() != (s, s) {
                t = imageops::resize(&t, s, s, FilterType::Triangle);
            }
            if g.dimensions() != (s, s) {
                g = imageops::resize(&g, s, s, FilterType::Nearest);
            }
        }
        let pair = ImagePair {
            name: stem.clone(),
            rgb: r,
            thermal: t,
            gt: g,
        };
        pair.validate()?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Loads `root/<split>` (or `root` itself when `split` is empty).
pub fn load_vt_dataset(root: &Path, split: &str, size: usize) -> Result<Vec<ImagePair>> {
    let dir = if split.is_empty() { root.to_path_buf() } else { root.join(split) };
    load_pairs(&dir, Some(size))
}

/// Writes pairs as PNG files; masks are stored as 0/255.
pub fn write_pairs(dir: &Path, pairs: &[ImagePair]) -> Result<()> {
    for sub in [RGB_DIR, THERMAL_DIR, GT_DIR] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let save = |img: &dyn Fn(&Path) -> image::ImageResult<()>, path: PathBuf| {
        img(&path).map_err(|source| CoreError::Image {
            path: path.display().to_string(),
            source,
        })
    };
    for p in pairs {
        let file = format!("{}.png", p.name);
        save(&|path| p.rgb.save(path), dir.join(RGB_DIR).join(&file))?;
        save(&|path| p.thermal.save(path), dir.join(THERMAL_DIR).join(&file))?;
        let gt = GrayImage::from_fn(p.gt.width(), p.gt.height(), |x, y| Luma([p.gt.get_pixel(x, y)[0] * 255]));
        save(&|path| gt.save(path), dir.join(GT_DIR).join(&file))?;
    }
    Ok(())
}
