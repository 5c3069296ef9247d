//! Manifest loading, PNG decoding and intensity windowing.

use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ModelError, SliceImage, SliceRef};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest line {line}: missing field {field:?}")]
    MissingField { line: usize, field: &'static str },
    #[error("manifest contains no slices")]
    EmptyManifest,
    #[error("{path}: unsupported image ({reason})")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

const REQUIRED_FIELDS: [&str; 3] = ["volume_id", "slice_index", "path"];

/// A parsed manifest that remembers its source lines and content digest.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<SliceRef>,
    /// Original text of each entry line, parallel to `entries`.
    pub lines: Vec<String>,
    /// SHA-256 of the raw file bytes.
    pub digest: String,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Resolves relative slice paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for entry in &mut self.entries {
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
        }
    }
}

/// Reads a JSON-Lines manifest. Relative image paths are resolved against the
/// manifest's directory; `lines` keeps the text exactly as written.
pub fn read_manifest(path: &Path) -> Result<Manifest, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io { path: path.to_owned(), source })?;
    let mut manifest = parse_manifest(&bytes)?;
    if let Some(dir) = path.parent() {
        manifest.resolve_paths(dir);
    }
    Ok(manifest)
}

/// Loads a manifest file, returning one ref per line in file order.
pub fn load_manifest(path: &Path) -> Result<Vec<SliceRef>, IngestError> {
    read_manifest(path).map(|m| m.entries)
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest, IngestError> {
    let mut entries = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(bytes).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IngestError::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(parse_line(&line, line_no)?);
        lines.push(line);
    }
    if entries.is_empty() {
        return Err(IngestError::EmptyManifest);
    }
    Ok(Manifest { entries, lines, digest: hex::encode(Sha256::digest(bytes)) })
}

fn parse_line(line: &str, line_no: usize) -> Result<SliceRef, IngestError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| IngestError::Parse { line: line_no, message: e.to_string() })?;
    let object = value
        .as_object()
        .ok_or_else(|| IngestError::Parse { line: line_no, message: "expected a JSON object".into() })?;
    if let Some(field) = REQUIRED_FIELDS.iter().find(|f| !object.contains_key(**f)) {
        return Err(IngestError::MissingField { line: line_no, field });
    }
    serde_json::from_value(value).map_err(|e| IngestError::Parse { line: line_no, message: e.to_string() })
}

/// Serializes refs as manifest lines.
pub fn manifest_line(entry: &SliceRef) -> String {
    serde_json::to_string(entry).expect("slice refs always serialize")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

/// Stored values of a decoded slice plus the affine map to physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRaster {
    pub width: usize,
    pub height: usize,
    pub samples: Samples,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
}

impl RawRaster {
    pub fn bit_depth(&self) -> u8 {
        match self.samples {
            Samples::U8(_) => 8,
            Samples::U16(_) => 16,
        }
    }

    fn stored(&self, i: usize) -> f64 {
        match &self.samples {
            Samples::U8(s) => f64::from(s[i]),
            Samples::U16(s) => f64::from(s[i]),
        }
    }

    pub fn physical(&self, i: usize) -> f64 {
        self.stored(i) * self.rescale_slope + self.rescale_intercept
    }

    pub fn physical_values(&self) -> Vec<f64> {
        (0..self.width * self.height).map(|i| self.physical(i)).collect()
    }
}

/// Decodes a single-channel 8- or 16-bit PNG.
pub fn decode_slice(slice: &SliceRef) -> Result<RawRaster, IngestError> {
    let path = &slice.path;
    let bytes = fs::read(path).map_err(|source| IngestError::Io { path: path.clone(), source })?;
    if !bytes.starts_with(PNG_SIGNATURE) {
        return Err(IngestError::UnsupportedFormat { path: path.clone(), reason: "not a PNG file".into() });
    }
    let image = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| IngestError::Decode { path: path.clone(), message: e.to_string() })?;
    let (width, height) = (image.width() as usize, image.height() as usize);
    let samples = match image {
        DynamicImage::ImageLuma8(buf) => Samples::U8(buf.into_raw()),
        DynamicImage::ImageLuma16(buf) => Samples::U16(buf.into_raw()),
        other => {
            return Err(IngestError::UnsupportedFormat {
                path: path.clone(),
                reason: format!("{:?} is not single-channel grayscale", other.color()),
            })
        }
    };
    Ok(RawRaster {
        width,
        height,
        samples,
        rescale_slope: slice.rescale_slope,
        rescale_intercept: slice.rescale_intercept,
    })
}

/// Display window in physical units (HU for CT).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    center: f64,
    width: f64,
}

impl WindowSpec {
    /// Soft-tissue window used for the CT corpora, center 35 HU / width 700 HU.
    pub const SOFT_TISSUE: WindowSpec = WindowSpec { center: 35.0, width: 700.0 };

    pub fn new(center: f64, width: f64) -> Option<Self> {
        (width > 0.0 && width.is_finite() && center.is_finite()).then_some(WindowSpec { center, width })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn lower(&self) -> f64 {
        self.center - self.width / 2.0
    }

    pub fn upper(&self) -> f64 {
        self.center + self.width / 2.0
    }
}

fn to_gray(v: f64, lo: f64, span: f64) -> u8 {
    let scaled = (v - lo) / span * 255.0;
    (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Maps one physical value through a window to a gray level.
pub fn window_value(v: f64, w: &WindowSpec) -> u8 {
    let clamped = v.clamp(w.lower(), w.upper());
    to_gray(clamped, w.lower(), w.width)
}

/// Converts a raster to 8-bit, either through a window or by per-slice
/// min-max stretching when `window` is `None`.
pub fn apply_window(raster: &RawRaster, window: Option<&WindowSpec>) -> SliceImage {
    let pixels = match &raster.samples {
        Samples::U8(s) => window_samples(s, raster, window),
        Samples::U16(s) => window_samples(s, raster, window),
    };
    SliceImage::with_bit_depth(raster.width, raster.height, pixels, raster.bit_depth())
        .expect("decoded rasters have consistent dimensions")
}

fn window_samples<T: Copy + Into<u16>>(samples: &[T], raster: &RawRaster, window: Option<&WindowSpec>) -> Vec<u8> {
    if samples.is_empty() {
        return Vec::new();
    }
    let (mut smin, mut smax) = (u16::MAX, u16::MIN);
    for &v in samples {
        let v: u16 = v.into();
        smin = smin.min(v);
        smax = smax.max(v);
    }
    let physical = |s: u16| f64::from(s) * raster.rescale_slope + raster.rescale_intercept;
    // The rescale is monotone, so the stored extremes give the physical
    // extremes, and each stored value maps to a single gray level. The table
    // is indexed by the stored value itself.
    let size = if std::mem::size_of::<T>() == 1 { 256 } else { usize::from(smax) + 1 };
    let mut lut = vec![0u8; size];
    match window {
        Some(w) => {
            for s in smin..=smax {
                lut[usize::from(s)] = window_value(physical(s), w);
            }
        }
        None => {
            let (a, b) = (physical(smin), physical(smax));
            let (min, max) = (a.min(b), a.max(b));
            if max > min {
                for s in smin..=smax {
                    lut[usize::from(s)] = to_gray(physical(s), min, max - min);
                }
            }
        }
    }
    if let Ok(table) = <&[u8; 256]>::try_from(&lut[..]) {
        // 8-bit input: a fixed-size table lets the lookup skip bounds checks
        return samples.iter().map(|&v| table[usize::from(v.into()) & 0xff]).collect();
    }
    samples.iter().map(|&v| lut[usize::from(v.into())]).collect()
}

/// Decodes and windows one slice.
pub fn load_slice(slice: &SliceRef, window: Option<&WindowSpec>) -> Result<SliceImage, IngestError> {
    Ok(apply_window(&decode_slice(slice)?, window))
}
