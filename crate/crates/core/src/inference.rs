//! Prediction, saliency-map export and evaluation of a trained model.
//!
//! Maps are quantized to 8 bits before evaluation so in-memory scores match
//! those recomputed from the written PNG files.

use std::fs;
use std::path::Path;

use image::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rgbt_metrics::{evaluate_maps, Map, Mask, MetricReport};
use rgbt_tensor::Scalar;

use crate::data::{make_batch, warp_thermal, Affine, ImagePair, MisalignConfig};
use crate::model::Model;
use crate::{CoreError, Result};

/// Images per forward pass during inference.
pub const INFERENCE_BATCH: usize = 16;

/// A predicted saliency map as an 8-bit image.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub name: String,
    pub map: GrayImage,
}

impl Prediction {
    pub fn to_map(&self) -> Result<Map> {
        let (w, h) = self.map.dimensions();
        Ok(Map::from_u8(w as usize, h as usize, self.map.as_raw())?)
    }
}

pub fn mask_of(pair: &ImagePair) -> Result<Mask> {
    let (w, h) = pair.gt.dimensions();
    Ok(Mask::new(w as usize, h as usize, pair.gt.pixels().map(|p| p[0] == 1).collect())?)
}

/// Runs the model in evaluation mode over `pairs`.
pub fn predict<T: Scalar>(model: &mut Model<T>, pairs: &[ImagePair]) -> Result<Vec<Prediction>> {
    let size = model.input_size() as u32;
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(INFERENCE_BATCH) {
        if let Some(p) = chunk.iter().find(|p| p.dimensions() != (size, size)) {
            return Err(CoreError::Data(format!("{} is {:?}, model expects {size}×{size}", p.name, p.dimensions())));
        }
        let refs: Vec<&ImagePair> = chunk.iter().collect();
        let batch = make_batch::<T>(&refs)?;
        let probs = model.predict(&batch.rgb, &batch.thermal)?;
        for (b, pair) in chunk.iter().enumerate() {
            let px: Vec<u8> = probs
                .sample(b)
                .iter()
                .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            let map = GrayImage::from_raw(size, size, px).expect("buffer matches dimensions");
            out.push(Prediction {
                name: pair.name.clone(),
                map,
            });
        }
    }
    Ok(out)
}

/// Scores predictions against the ground truth of `pairs` (matched by position).
pub fn evaluate_predictions(preds: &[Prediction], pairs: &[ImagePair]) -> Result<MetricReport> {
    if preds.len() != pairs.len() {
        return Err(CoreError::Input(format!("{} predictions for {} pairs", preds.len(), pairs.len())));
    }
    let maps = preds.iter().map(Prediction::to_map).collect::<Result<Vec<_>>>()?;
    let masks = pairs.iter().map(mask_of).collect::<Result<Vec<_>>>()?;
    let items = pairs
        .iter()
        .zip(maps.iter().zip(&masks))
        .map(|(p, (m, g))| (p.name.as_str(), m, g));
    Ok(evaluate_maps(items)?)
}

pub fn evaluate_model<T: Scalar>(model: &mut Model<T>, pairs: &[ImagePair]) -> Result<MetricReport> {
    let preds = predict(model, pairs)?;
    evaluate_predictions(&preds, pairs)
}

/// Writes `<dir>/<name>.png` for every prediction.
pub fn write_predictions(dir: &Path, preds: &[Prediction]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for p in preds {
        let path = dir.join(format!("{}.png", p.name));
        p.map.save(&path).map_err(|source| CoreError::Image {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

/// Warps every thermal image by its own transform drawn in order from one
/// generator seeded with `seed`.
pub fn misalign_dataset(pairs: &[ImagePair], seed: u64, config: &MisalignConfig) -> Vec<(ImagePair, Affine)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs
        .iter()
        .map(|p| {
            let a = Affine::sample(config, &mut rng);
            let warped = ImagePair {
                thermal: warp_thermal(&p.thermal, &a),
                ..p.clone()
            };
            (warped, a)
        })
        .collect()
}
