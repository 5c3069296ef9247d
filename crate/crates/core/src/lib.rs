//! Near-duplicate slice removal for volumetric pre-training datasets.
//!
//! Slices of each volume are compared pairwise with one of four similarity
//! measures (SSIM, normalized mutual information, cosine similarity of
//! precomputed embeddings, or the Hamming distance between 64-bit difference
//! hashes). Pairs are walked from most to least similar and one slice of each
//! still-intact pair is dropped until a threshold or a target size is reached.
//! An every-n-th-slice baseline is provided for comparison.
//!
//! The metric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! reduction pipeline uses the `f64` aliases defined here.

pub mod analysis;
pub mod embeddings;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod provenance;
pub mod reducer;
pub mod scalar;
pub mod synth;

pub use analysis::{bench, overlap, stats, OverlapReport, PlanStats, TimingRow};
pub use embeddings::{load_embeddings, EmbeddingError, EmbeddingTable};
pub use ingest::{
    apply_window, decode_slice, load_manifest, load_slice, read_manifest, IngestError, Manifest, WindowSpec,
};
pub use metrics::{cosine, dhash, hamming, nmi, ssim, DHash64, MetricError, SsimParams};
pub use model::{
    validate_manifest, MetricKind, Mode, ModelError, PairScore, ReductionPlan, SliceImage, SliceRef, VolumeSelection,
    VolumeSeries,
};
pub use provenance::{apply_plan, load_reduction, write_reduction, Provenance};
pub use reducer::{greedy_reduce, pairwise_scores, reduce_every_n, ReduceConfig, ReduceError, Reducer, SortedPairList};
pub use scalar::Scalar;

/// Scalar used by the reduction pipeline.
pub type Real = f64;
pub type SsimParamsF64 = SsimParams<f64>;
pub type SsimParamsF32 = SsimParams<f32>;
