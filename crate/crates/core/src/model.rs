//! Domain types shared across the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("manifest contains no slices")]
    EmptyManifest,
    #[error("volume {volume:?} lists slice index {index} more than once")]
    DuplicateIndex { volume: String, index: usize },
    #[error("volume {volume:?} slice indices are not contiguous from 0")]
    NonContiguousIndices { volume: String },
    #[error("slice {index} of volume {volume:?} has an empty path")]
    EmptyPath { volume: String, index: usize },
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("pixel buffer has {actual} values, expected {expected}")]
    PixelCount { expected: usize, actual: usize },
}

fn default_slope() -> f64 {
    1.0
}

/// One slice entry of the dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRef {
    pub volume_id: String,
    pub slice_index: usize,
    pub path: PathBuf,
    #[serde(default = "default_slope")]
    pub rescale_slope: f64,
    #[serde(default)]
    pub rescale_intercept: f64,
}

impl SliceRef {
    pub fn new(volume_id: impl Into<String>, slice_index: usize, path: impl Into<PathBuf>) -> Self {
        SliceRef {
            volume_id: volume_id.into(),
            slice_index,
            path: path.into(),
            rescale_slope: 1.0,
            rescale_intercept: 0.0,
        }
    }

    /// Join key used by the embedding table: `volume_id/slice_index`.
    pub fn key(&self) -> String {
        slice_key(&self.volume_id, self.slice_index)
    }
}

pub fn slice_key(volume_id: &str, slice_index: usize) -> String {
    format!("{volume_id}/{slice_index}")
}

/// The slices of one scan, ordered by `slice_index` (always `0..len`).
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSeries {
    volume_id: String,
    slices: Vec<SliceRef>,
}

impl VolumeSeries {
    /// Builds a volume from refs in any order, enforcing the index invariants.
    pub fn new(volume_id: impl Into<String>, mut slices: Vec<SliceRef>) -> Result<Self, ModelError> {
        let volume_id = volume_id.into();
        if slices.is_empty() {
            return Err(ModelError::EmptyManifest);
        }
        slices.sort_by_key(|s| s.slice_index);
        for pair in slices.windows(2) {
            if pair[0].slice_index == pair[1].slice_index {
                return Err(ModelError::DuplicateIndex { volume: volume_id, index: pair[0].slice_index });
            }
        }
        if slices.iter().enumerate().any(|(i, s)| s.slice_index != i) {
            return Err(ModelError::NonContiguousIndices { volume: volume_id });
        }
        if let Some(s) = slices.iter().find(|s| s.path.as_os_str().is_empty()) {
            return Err(ModelError::EmptyPath { volume: volume_id, index: s.slice_index });
        }
        Ok(VolumeSeries { volume_id, slices })
    }

    pub fn volume_id(&self) -> &str {
        &self.volume_id
    }

    pub fn slices(&self) -> &[SliceRef] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Number of unordered intra-volume pairs, m(m-1)/2.
    pub fn pair_count(&self) -> usize {
        let m = self.len();
        m * m.saturating_sub(1) / 2
    }
}

/// Groups manifest entries into volumes, ordered by `volume_id`.
pub fn validate_manifest(entries: &[SliceRef]) -> Result<Vec<VolumeSeries>, ModelError> {
    if entries.is_empty() {
        return Err(ModelError::EmptyManifest);
    }
    let mut groups: BTreeMap<&str, Vec<SliceRef>> = BTreeMap::new();
    for entry in entries {
        groups.entry(&entry.volume_id).or_default().push(entry.clone());
    }
    groups.into_iter().map(|(id, slices)| VolumeSeries::new(id, slices)).collect()
}

/// Decoded, windowed 8-bit grayscale raster in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    source_bit_depth: u8,
}

impl SliceImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ModelError> {
        Self::with_bit_depth(width, height, pixels, 8)
    }

    pub fn with_bit_depth(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        source_bit_depth: u8,
    ) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(ModelError::PixelCount { expected: width * height, actual: pixels.len() });
        }
        Ok(SliceImage { width, height, pixels, source_bit_depth })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self, ModelError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ModelError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn source_bit_depth(&self) -> u8 {
        self.source_bit_depth
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn is_constant(&self) -> bool {
        self.pixels.iter().all(|&p| p == self.pixels[0])
    }
}

/// Similarity of one intra-volume pair, `a < b`.
///
/// For hash scores the value is a Hamming distance (smaller is more similar);
/// for every other metric larger is more similar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a: usize,
    pub b: usize,
    pub score: f64,
}

/// Reduction method together with the parameters it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricKind {
    /// Keep every n-th slice. `n` is `None` when it is derived per volume from a count target.
    EveryN {
        n: Option<usize>,
    },
    Ssim,
    Mi {
        bins: usize,
    },
    DeepNet {
        embeddings: PathBuf,
    },
    Hash,
}

impl MetricKind {
    /// Method name as used on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::EveryN { .. } => "every-n",
            MetricKind::Ssim => "ssim",
            MetricKind::Mi { .. } => "mi",
            MetricKind::DeepNet { .. } => "deepnet",
            MetricKind::Hash => "hash",
        }
    }

    /// Whether a larger score means more similar.
    pub fn higher_is_more_similar(&self) -> bool {
        !matches!(self, MetricKind::Hash)
    }
}

/// Stopping rule for a reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum Mode {
    Fraction(f64),
    Count(usize),
    Threshold(f64),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Fraction(_) => "fraction",
            Mode::Count(_) => "count",
            Mode::Threshold(_) => "threshold",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Mode::Fraction(f) => f,
            Mode::Count(k) => k as f64,
            Mode::Threshold(t) => t,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Fraction(v) => write!(f, "fraction={v}"),
            Mode::Count(k) => write!(f, "count={k}"),
            Mode::Threshold(t) => write!(f, "threshold={t}"),
        }
    }
}

/// Keep/remove decision for one volume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeSelection {
    pub kept: BTreeSet<usize>,
    pub removed: BTreeSet<usize>,
}

impl VolumeSelection {
    pub fn keep_all(m: usize) -> Self {
        VolumeSelection { kept: (0..m).collect(), removed: BTreeSet::new() }
    }

    pub fn total(&self) -> usize {
        self.kept.len() + self.removed.len()
    }
}

/// Busy time per pipeline phase, summed over worker threads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub decode: f64,
    pub features: f64,
    pub pairs: f64,
    pub select: f64,
}

impl PhaseTimings {
    pub fn scoring(&self) -> f64 {
        self.decode + self.features + self.pairs
    }

    pub fn add(&mut self, other: &PhaseTimings) {
        self.decode += other.decode;
        self.features += other.features;
        self.pairs += other.pairs;
        self.select += other.select;
    }
}

/// Result of reducing a whole manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionPlan {
    pub method: MetricKind,
    pub mode: Mode,
    pub volumes: BTreeMap<String, VolumeSelection>,
    pub timings: PhaseTimings,
    pub wall_seconds: f64,
    pub tool_version: String,
}

impl ReductionPlan {
    pub fn kept_count(&self) -> usize {
        self.volumes.values().map(|v| v.kept.len()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.volumes.values().map(VolumeSelection::total).sum()
    }

    /// SHA-256 over method, mode and the per-volume kept sets. Timings are excluded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("{}\t{}\n", self.method.name(), self.mode).as_bytes());
        for (volume, sel) in &self.volumes {
            let kept: Vec<String> = sel.kept.iter().map(usize::to_string).collect();
            hasher.update(format!("{volume}\t{}\t{}\n", sel.total(), kept.join(",")).as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Checks the partition invariants of every volume.
    pub fn is_consistent(&self) -> bool {
        self.volumes.values().all(|sel| {
            !sel.kept.is_empty()
                && sel.kept.is_disjoint(&sel.removed)
                && sel.kept.iter().chain(&sel.removed).all(|&i| i < sel.total())
        })
    }
}
