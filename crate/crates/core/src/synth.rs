//! Seeded synthetic volumes (smooth gradient plus drifting blobs plus noise)
//! for tests, demos and benchmarks.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::embeddings::{EmbeddingError, EmbeddingTable};
use crate::ingest::manifest_line;
use crate::model::{slice_key, SliceRef};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Encode { path: PathBuf, message: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid synth settings: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub volumes: usize,
    /// Slices per volume, or the upper bound when `min_slices` is set.
    pub slices: usize,
    pub min_slices: Option<usize>,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// 16-bit output stores HU-like values with intercept -1024.
    pub bit_depth: u8,
    /// Chance that a slice repeats its predecessor exactly.
    pub duplicate_rate: f64,
    /// Also write `embeddings.sseb` with this many dimensions.
    pub embedding_dim: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            volumes: 2,
            slices: 8,
            min_slices: None,
            width: 64,
            height: 64,
            seed: 0,
            bit_depth: 8,
            duplicate_rate: 0.1,
            embedding_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub manifest: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub slices: usize,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const EMBEDDINGS_NAME: &str = "embeddings.sseb";

struct Blob {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    radius: f64,
    amp: f64,
    damp: f64,
}

struct VolumeModel {
    base: f64,
    gx: f64,
    gy: f64,
    noise: f64,
    blobs: Vec<Blob>,
}

impl VolumeModel {
    fn random(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Self {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let strength = rng.random_range(20.0..90.0);
        let speed = rng.random_range(0.2..3.0);
        let size = w.min(h) as f64;
        let blobs = (0..rng.random_range(3..7))
            .map(|_| {
                let heading = rng.random_range(0.0..std::f64::consts::TAU);
                let v = speed * rng.random_range(0.5..1.5);
                Blob {
                    x: rng.random_range(0.0..w as f64),
                    y: rng.random_range(0.0..h as f64),
                    vx: v * heading.cos(),
                    vy: v * heading.sin(),
                    radius: size * rng.random_range(0.06..0.25),
                    amp: rng.random_range(-90.0..110.0),
                    damp: rng.random_range(-4.0..4.0),
                }
            })
            .collect();
        VolumeModel {
            base: rng.random_range(60.0..140.0),
            gx: strength * angle.cos() / w as f64,
            gy: strength * angle.sin() / h as f64,
            noise: rng.random_range(1.0..6.0),
            blobs,
        }
    }

    fn render(&self, z: usize, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let z = z as f64;
        let blobs: Vec<(f64, f64, f64, f64)> = self
            .blobs
            .iter()
            .map(|b| (b.x + b.vx * z, b.y + b.vy * z, -0.5 / (b.radius * b.radius), b.amp + b.damp * z))
            .collect();
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let yf = y as f64;
            for x in 0..w {
                let xf = x as f64;
                let mut v = self.base + self.gx * xf + self.gy * yf;
                for &(cx, cy, k, amp) in &blobs {
                    let (dx, dy) = (xf - cx, yf - cy);
                    v += amp * ((dx * dx + dy * dy) * k).exp();
                }
                let n: f64 = rng.random::<f64>() + rng.random::<f64>() - 1.0;
                v += n * self.noise;
                out.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic pseudo-embedding: 8x8 block means projected to `dim`.
fn embed(pixels: &[u8], w: usize, h: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut blocks = [0.0f64; 64];
    let mut counts = [0usize; 64];
    for y in 0..h {
        for x in 0..w {
            let b = (y * 8 / h) * 8 + x * 8 / w;
            blocks[b] += f64::from(pixels[y * w + x]);
            counts[b] += 1;
        }
    }
    for (b, c) in blocks.iter_mut().zip(counts) {
        *b = if c > 0 { *b / c as f64 / 255.0 - 0.5 } else { 0.0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xE5B, 0));
    let mut v: Vec<f32> = (0..dim)
        .map(|_| {
            let s: f64 = blocks.iter().map(|b| b * rng.random_range(-1.0..1.0)).sum();
            s as f32
        })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    v
}

/// Writes `manifest.jsonl`, PNGs under `images/` and optionally an SSEB file.
pub fn generate(out_dir: &Path, config: &SynthConfig) -> Result<SynthSummary, SynthError> {
    let min = config.min_slices.unwrap_or(config.slices);
    if config.volumes == 0 || config.slices == 0 || min == 0 || min > config.slices {
        return Err(SynthError::Invalid("need at least one volume and 1 <= min-slices <= slices".into()));
    }
    if config.width == 0 || config.height == 0 {
        return Err(SynthError::Invalid("image size must be positive".into()));
    }
    if config.bit_depth != 8 && config.bit_depth != 16 {
        return Err(SynthError::Invalid(format!("bit depth {} (use 8 or 16)", config.bit_depth)));
    }
    let (w, h) = (config.width, config.height);
    let io_err = |path: &Path| {
        let path = path.to_owned();
        move |source| SynthError::Io { path, source }
    };

    struct Planned {
        volume: usize,
        z: usize,
        /// index of the slice whose pixels this one reuses
        source: usize,
    }
    let mut planned = Vec::new();
    let mut models = Vec::new();
    for v in 0..config.volumes {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, v as u64, 1));
        let m = if min == config.slices { min } else { rng.random_range(min..=config.slices) };
        models.push(VolumeModel::random(&mut rng, w, h));
        for z in 0..m {
            let dup = z > 0 && rng.random_bool(config.duplicate_rate.clamp(0.0, 1.0));
            let source = if dup { planned.last().map(|p: &Planned| p.source).unwrap() } else { z };
            planned.push(Planned { volume: v, z, source });
        }
    }

    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir).map_err(io_err(&images_dir))?;
    for v in 0..config.volumes {
        let d = images_dir.join(format!("vol{v:03}"));
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }

    let rendered: Vec<(SliceRef, Option<Vec<f32>>)> = planned
        .par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, p.volume as u64, 2 + p.source as u64));
            let pixels = models[p.volume].render(p.source, w, h, &mut rng);
            let rel = PathBuf::from("images").join(format!("vol{:03}", p.volume)).join(format!("slice{:03}.png", p.z));
            let path = out_dir.join(&rel);
            let encode_err = |e: image::ImageError| SynthError::Encode { path: path.clone(), message: e.to_string() };
            let mut slice = SliceRef::new(format!("vol{:03}", p.volume), p.z, rel);
            if config.bit_depth == 16 {
                let stored: Vec<u16> = pixels.iter().map(|&g| u16::from(g) * 4 + 24).collect();
                ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, stored)
                    .expect("buffer size")
                    .save(&path)
                    .map_err(encode_err)?;
                slice.rescale_intercept = -1024.0;
            } else {
                GrayImage::from_raw(w as u32, h as u32, pixels.clone())
                    .expect("buffer size")
                    .save(&path)
                    .map_err(encode_err)?;
            }
            let vector = config.embedding_dim.map(|dim| embed(&pixels, w, h, dim, config.seed));
            Ok((slice, vector))
        })
        .collect::<Result<_, SynthError>>()?;

    let mut manifest = String::new();
    for (slice, _) in &rendered {
        manifest.push_str(&manifest_line(slice));
        manifest.push('\n');
    }
    let manifest_path = out_dir.join(MANIFEST_NAME);
    fs::write(&manifest_path, manifest).map_err(io_err(&manifest_path))?;

    let embeddings = match config.embedding_dim {
        Some(dim) => {
            let mut table = EmbeddingTable::new(dim)?;
            for (slice, vector) in rendered.iter() {
                table.insert(slice_key(&slice.volume_id, slice.slice_index), vector.clone().expect("dim set"))?;
            }
            let path = out_dir.join(EMBEDDINGS_NAME);
            table.write(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(SynthSummary { manifest: manifest_path, embeddings, slices: rendered.len() })
}
