use std::fs;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_pairs, ImagePair};
use crate::{CoreError, Result};

/// Standard deviation of the additive RGB noise on flagged images.
pub const NOISE_STD: f64 = 0.15;
const THERMAL_NOISE_STD: f64 = 0.03;
const TEXTURE_AMPLITUDE: f64 = 0.04;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Ellipse,
    Rectangle,
    Blob,
}

impl std::str::FromStr for Shape {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipse" => Ok(Shape::Ellipse),
            "rectangle" => Ok(Shape::Rectangle),
            "blob" => Ok(Shape::Blob),
            other => Err(CoreError::Config(format!("unknown shape {other:?}"))),
        }
    }
}

/// Synthetic RGB-T dataset parameters. `darkness` and `noise_rgb` are the
/// fractions of images whose RGB channel is darkened or noised; the counts
/// are exact (`round(fraction · n)` per split).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_test: usize,
    pub size: usize,
    pub noise_rgb: f64,
    pub darkness: f64,
    pub seed: u64,
    pub shapes: Vec<Shape>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            n_test: 50,
            size: 64,
            noise_rgb: 0.2,
            darkness: 0.5,
            seed: 0,
            shapes: vec![Shape::Ellipse, Shape::Rectangle, Shape::Blob],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 8 {
            return Err(CoreError::Config(format!("size must be at least 8, got {}", self.size)));
        }
        for (name, v) in [("noise_rgb", self.noise_rgb), ("darkness", self.darkness)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.shapes.is_empty() {
            return Err(CoreError::Config("shapes must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Shape,
    pub dark: bool,
    pub noise: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub dark_train: usize,
    pub dark_test: usize,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

struct Region {
    shape: Shape,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    angle: f64,
    lobes: [(f64, f64, f64); 3],
}

impl Region {
    fn random<R: Rng>(rng: &mut R, shape: Shape, size: f64, centre: (f64, f64), radius: (f64, f64)) -> Self {
        let r = rng.random_range(radius.0..radius.1) * size;
        let mut lobes = [(0.0, 0.0, 0.0); 3];
        for l in &mut lobes {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let d = rng.random_range(0.2..0.6) * r;
            *l = (a.cos() * d, a.sin() * d, rng.random_range(0.45..0.7) * r);
        }
        Self {
            shape,
            cx: rng.random_range(centre.0..centre.1) * size,
            cy: rng.random_range(centre.0..centre.1) * size,
            rx: r * rng.random_range(0.7..1.3),
            ry: r * rng.random_range(0.7..1.3),
            angle: rng.random_range(0.0..std::f64::consts::PI),
            lobes,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.angle.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        match self.shape {
            Shape::Ellipse => (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0,
            Shape::Rectangle => u.abs() <= self.rx * 0.85 && v.abs() <= self.ry * 0.85,
            Shape::Blob => self
                .lobes
                .iter()
                .any(|&(ox, oy, r)| (dx - ox).powi(2) + (dy - oy).powi(2) <= r * r),
        }
    }
}

fn colour<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn render<R: Rng>(rng: &mut R, config: &SynthConfig, name: String, dark: bool, noise: bool) -> (ImagePair, ManifestEntry) {
    let n = config.size as u32;
    let size = config.size as f64;
    let shape = config.shapes[rng.random_range(0..config.shapes.len())];
    let object = Region::random(rng, shape, size, (0.3, 0.7), (0.14, 0.26));
    let n_distractors = rng.random_range(2..=3);
    let distractors: Vec<(Region, [f64; 3], f64)> = (0..n_distractors)
        .map(|_| {
            let s = config.shapes[rng.random_range(0..config.shapes.len())];
            let region = Region::random(rng, s, size, (0.05, 0.95), (0.05, 0.11));
            (region, colour(rng), rng.random_range(0.3..0.5))
        })
        .collect();
    let bg_a = colour(rng);
    let bg_b = colour(rng);
    let bg_mean = [0, 1, 2].map(|c| (bg_a[c] + bg_b[c]) / 2.0);
    let mut fg = colour(rng);
    while distance(fg, bg_mean) < 0.6 {
        fg = colour(rng);
    }
    let gradient_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (gs, gc) = gradient_angle.sin_cos();
    let t_bg = rng.random_range(0.15..0.3);
    let t_fg = rng.random_range(0.7..0.95);
    let dim = rng.random_range(0.03..0.08);
    let texture = Normal::new(0.0, TEXTURE_AMPLITUDE).expect("finite std");
    let rgb_noise = Normal::new(0.0, NOISE_STD).expect("finite std");
    let t_noise = Normal::new(0.0, THERMAL_NOISE_STD).expect("finite std");

    let mut rgb = RgbImage::new(n, n);
    let mut thermal = GrayImage::new(n, n);
    let mut gt = GrayImage::new(n, n);
    for y in 0..n {
        for x in 0..n {
            let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            let ramp = ((px - size / 2.0) * gc + (py - size / 2.0) * gs) / size + 0.5;
            let mut c = [0, 1, 2].map(|k| bg_a[k] * (1.0 - ramp) + bg_b[k] * ramp);
            let mut t = t_bg + 0.1 * ramp;
            for (region, col, heat) in &distractors {
                if region.contains(px, py) {
                    c = *col;
                    t = *heat;
                }
            }
            let inside = object.contains(px, py);
            if inside {
                c = fg;
                t = t_fg;
            }
            let mut out = [0u8; 3];
            for k in 0..3 {
                let mut v = c[k] + texture.sample(rng);
                if dark {
                    v *= dim;
                }
                if noise {
                    v += rgb_noise.sample(rng);
                }
                out[k] = to_u8(v);
            }
            rgb.put_pixel(x, y, Rgb(out));
            thermal.put_pixel(x, y, Luma([to_u8(t + t_noise.sample(rng))]));
            gt.put_pixel(x, y, Luma([u8::from(inside)]));
        }
    }
    let entry = ManifestEntry {
        name: name.clone(),
        shape,
        dark,
        noise,
    };
    (ImagePair { name, rgb, thermal, gt }, entry)
}

fn flags<R: Rng>(rng: &mut R, n: usize, fraction: f64) -> Vec<bool> {
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut out = vec![false; n];
    for i in sample(rng, n, k) {
        out[i] = true;
    }
    out
}

fn split<R: Rng>(rng: &mut R, config: &SynthConfig, n: usize, offset: usize) -> (Vec<ImagePair>, Vec<ManifestEntry>) {
    let dark = flags(rng, n, config.darkness);
    let noise = flags(rng, n, config.noise_rgb);
    (0..n)
        .map(|i| render(rng, config, format!("{:05}", offset + i), dark[i], noise[i]))
        .unzip()
}

/// Generates train and test splits in memory.
pub fn generate_pairs(config: &SynthConfig) -> Result<(Vec<ImagePair>, Vec<ImagePair>, Manifest)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train, train_entries) = split(&mut rng, config, config.n_samples, 0);
    let (test, test_entries) = split(&mut rng, config, config.n_test, config.n_samples);
    let manifest = Manifest {
        seed: config.seed,
        config: config.clone(),
        dark_train: train_entries.iter().filter(|e| e.dark).count(),
        dark_test: test_entries.iter().filter(|e| e.dark).count(),
        train: train_entries,
        test: test_entries,
    };
    Ok((train, test, manifest))
}

/// Writes `out_dir/{train,test}/{RGB,T,GT}` and `out_dir/manifest.json`.
pub fn generate_synthetic(config: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    let (train, test, manifest) = generate_pairs(config)?;
    fs::create_dir_all(out_dir)?;
    write_pairs(&out_dir.join("train"), &train)?;
    write_pairs(&out_dir.join("test"), &test)?;
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
