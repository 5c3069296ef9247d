//! Pairwise similarity measures over slices and embedding vectors.

mod cosine;
mod dhash;
mod nmi;
pub mod resample;
mod ssim;

pub use cosine::cosine;
pub use dhash::{dhash, hamming, hamming_fraction, DHash64, HASH_BITS, HASH_HEIGHT, HASH_WIDTH};
pub use nmi::{nmi, DEFAULT_BINS};
pub use ssim::{gaussian_kernel, ssim, SsimParams};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: String, right: String },
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall { width: usize, height: usize, window: usize },
    #[error("joint histogram has zero entropy (both images constant)")]
    DegenerateHistogram,
    #[error("histogram needs at least 2 bins, got {0}")]
    InvalidBins(usize),
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("vectors are empty")]
    EmptyVector,
    #[error("invalid SSIM parameters: {0}")]
    InvalidParams(&'static str),
}

fn check_same_size(x: &crate::SliceImage, y: &crate::SliceImage) -> Result<(), MetricError> {
    if x.width() != y.width() || x.height() != y.height() {
        return Err(MetricError::DimensionMismatch {
            left: format!("{}x{}", x.width(), x.height()),
            right: format!("{}x{}", y.width(), y.height()),
        });
    }
    Ok(())
}
