//! Comparing reductions: retained-set overlap, summary statistics and the
//! timing harness.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingTable;
use crate::model::{MetricKind, PhaseTimings, ReductionPlan, SliceRef, VolumeSeries};
use crate::reducer::{PairMetric, ReduceConfig, ReduceError, Reducer, SliceFeatures};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("plans cover different manifests: {0}")]
    ManifestMismatch(String),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
}

/// Short identifier such as `hash:threshold=6`.
pub fn plan_label(plan: &ReductionPlan) -> String {
    format!("{}:{}", plan.method.name(), plan.mode)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeOverlap {
    pub volume_id: String,
    pub kept_a: usize,
    pub kept_b: usize,
    pub intersection: usize,
    pub jaccard: f64,
    pub containment_a: f64,
    pub containment_b: f64,
}

/// Agreement between the kept sets of two plans over the same manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub method_a: String,
    pub method_b: String,
    pub kept_a: usize,
    pub kept_b: usize,
    pub intersection: usize,
    pub union: usize,
    /// |A ∩ B| / |A ∪ B|
    pub jaccard: f64,
    /// |A ∩ B| / |A|
    pub containment_a: f64,
    /// |A ∩ B| / |B|
    pub containment_b: f64,
    pub volumes: Vec<VolumeOverlap>,
}

pub fn overlap(a: &ReductionPlan, b: &ReductionPlan) -> Result<OverlapReport, AnalysisError> {
    let ids_a: Vec<&String> = a.volumes.keys().collect();
    let ids_b: Vec<&String> = b.volumes.keys().collect();
    if ids_a != ids_b {
        return Err(AnalysisError::ManifestMismatch("volume sets differ".into()));
    }
    let volumes = a
        .volumes
        .par_iter()
        .map(|(id, sa)| {
            let sb = &b.volumes[id];
            if sa.total() != sb.total() {
                return Err(AnalysisError::ManifestMismatch(format!(
                    "volume {id:?} has {} slices in one plan and {} in the other",
                    sa.total(),
                    sb.total()
                )));
            }
            let inter = sa.kept.intersection(&sb.kept).count();
            let union = sa.kept.len() + sb.kept.len() - inter;
            Ok(VolumeOverlap {
                volume_id: id.clone(),
                kept_a: sa.kept.len(),
                kept_b: sb.kept.len(),
                intersection: inter,
                jaccard: ratio(inter, union),
                containment_a: ratio(inter, sa.kept.len()),
                containment_b: ratio(inter, sb.kept.len()),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let kept_a: usize = volumes.iter().map(|v| v.kept_a).sum();
    let kept_b: usize = volumes.iter().map(|v| v.kept_b).sum();
    let intersection: usize = volumes.iter().map(|v| v.intersection).sum();
    let union = kept_a + kept_b - intersection;
    Ok(OverlapReport {
        method_a: plan_label(a),
        method_b: plan_label(b),
        kept_a,
        kept_b,
        intersection,
        union,
        jaccard: ratio(intersection, union),
        containment_a: ratio(intersection, kept_a),
        containment_b: ratio(intersection, kept_b),
        volumes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeStats {
    pub volume_id: String,
    pub total: usize,
    pub kept: usize,
    pub removed: usize,
    pub kept_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Distribution of pair scores among the kept slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub metric: String,
    pub pairs: usize,
    pub bins: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub method: String,
    pub total: usize,
    pub kept: usize,
    pub removed: usize,
    pub kept_fraction: f64,
    pub removed_fraction: f64,
    pub volumes: Vec<VolumeStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<ScoreHistogram>,
}

pub fn stats(plan: &ReductionPlan) -> PlanStats {
    let volumes: Vec<VolumeStats> = plan
        .volumes
        .iter()
        .map(|(id, sel)| VolumeStats {
            volume_id: id.clone(),
            total: sel.total(),
            kept: sel.kept.len(),
            removed: sel.removed.len(),
            kept_fraction: ratio(sel.kept.len(), sel.total()),
        })
        .collect();
    let total = plan.total_count();
    let kept = plan.kept_count();
    PlanStats {
        method: plan_label(plan),
        total,
        kept,
        removed: total - kept,
        kept_fraction: ratio(kept, total),
        removed_fraction: 1.0 - ratio(kept, total),
        volumes,
        histogram: None,
    }
}

fn histogram_layout(metric: &PairMetric) -> (f64, f64, usize) {
    match metric {
        PairMetric::Hamming => (-0.5, 64.5, 65),
        PairMetric::Mi { .. } => (1.0, 2.0, 20),
        PairMetric::Ssim(_) | PairMetric::Cosine => (-1.0, 1.0, 20),
    }
}

/// Scores every pair of kept slices. `kept_volumes` holds only the kept
/// slices of each volume (as in a reduced manifest).
pub fn kept_score_histogram(
    config: &ReduceConfig,
    embeddings: Option<&EmbeddingTable>,
    kept_volumes: &[Vec<SliceRef>],
) -> Result<Option<ScoreHistogram>, AnalysisError> {
    let Some(metric) = PairMetric::for_method(&config.method, config.ssim) else {
        return Ok(None);
    };
    let reducer = Reducer::new(config, embeddings)?;
    let scores: Vec<Vec<f64>> = kept_volumes
        .par_iter()
        .map(|slices| {
            let id = slices.first().map(|s| s.volume_id.clone()).unwrap_or_default();
            let features = match &config.method {
                // embeddings are keyed by the original slice index
                MetricKind::DeepNet { .. } => {
                    let table = embeddings.ok_or(ReduceError::MissingEmbeddings)?;
                    SliceFeatures::Vectors(
                        slices
                            .iter()
                            .map(|s| Ok(table.lookup(s)?.iter().map(|&v| f64::from(v)).collect()))
                            .collect::<Result<_, ReduceError>>()?,
                    )
                }
                _ => {
                    // a kept subset need not have contiguous indices; renumber for loading
                    let renumbered =
                        slices.iter().enumerate().map(|(i, s)| SliceRef { slice_index: i, ..s.clone() }).collect();
                    let volume = VolumeSeries::new(id.clone(), renumbered)
                        .map_err(|e| ReduceError::InvalidTarget(e.to_string()))?;
                    let mut t = PhaseTimings::default();
                    reducer.features(&volume, &mut t)?.expect("similarity metric")
                }
            };
            let mut out = Vec::new();
            for a in 0..features.len() {
                for b in a + 1..features.len() {
                    out.push(metric.score(&features, a, b).map_err(|source| ReduceError::Metric {
                        volume: id.clone(),
                        a: slices[a].slice_index,
                        b: slices[b].slice_index,
                        source,
                    })?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_, AnalysisError>>()?;
    let (lo, hi, n) = histogram_layout(&metric);
    let width = (hi - lo) / n as f64;
    let mut bins: Vec<HistogramBin> =
        (0..n).map(|i| HistogramBin { lo: lo + i as f64 * width, hi: lo + (i + 1) as f64 * width, count: 0 }).collect();
    let mut pairs = 0;
    for s in scores.iter().flatten() {
        let i = (((s - lo) / width).floor().max(0.0) as usize).min(n - 1);
        bins[i].count += 1;
        pairs += 1;
    }
    Ok(Some(ScoreHistogram { metric: config.method.name().to_owned(), pairs, bins }))
}

/// One CSV row of the timing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub phase: String,
    pub wall_seconds: f64,
    pub slices_per_second: f64,
    /// Repetition number, or `min` / `median` for the summary rows.
    pub repetition: String,
    /// Intra-volume pairs in the manifest, m(m-1)/2 summed over volumes.
    pub pairs: usize,
    pub seconds_per_pair: f64,
}

pub const PHASES: [&str; 5] = ["decode", "features", "pairs", "select", "total"];

fn phase_seconds(t: &PhaseTimings, wall: f64, phase: &str) -> f64 {
    match phase {
        "decode" => t.decode,
        "features" => t.features,
        "pairs" => t.pairs,
        "select" => t.select,
        _ => wall,
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn row(method: &str, phase: &str, secs: f64, slices: usize, pairs: usize, repetition: String) -> TimingRow {
    TimingRow {
        method: method.to_owned(),
        phase: phase.to_owned(),
        wall_seconds: secs,
        slices_per_second: if secs > 0.0 { slices as f64 / secs } else { f64::INFINITY },
        repetition,
        pairs,
        seconds_per_pair: if pairs > 0 { secs / pairs as f64 } else { 0.0 },
    }
}

/// Times each configured method `repetitions` times on the given volumes.
///
/// Phase rows are thread-busy seconds; the `total` row is wall-clock. Manifest
/// parsing is excluded, image decoding is included.
pub fn bench(
    volumes: &[VolumeSeries],
    methods: &[ReduceConfig],
    embeddings: Option<&EmbeddingTable>,
    repetitions: usize,
) -> Result<Vec<TimingRow>, AnalysisError> {
    if repetitions == 0 {
        return Err(AnalysisError::NoRepetitions);
    }
    let slices: usize = volumes.iter().map(VolumeSeries::len).sum();
    let pairs: usize = volumes.iter().map(VolumeSeries::pair_count).sum();
    let mut rows = Vec::new();
    for config in methods {
        let reducer = Reducer::new(config, embeddings)?;
        let name = config.method.name();
        let mut per_phase: Vec<Vec<f64>> = vec![Vec::new(); PHASES.len()];
        for rep in 1..=repetitions {
            let plan = reducer.reduce_dataset(volumes)?;
            for (i, phase) in PHASES.iter().enumerate() {
                let secs = phase_seconds(&plan.timings, plan.wall_seconds, phase);
                per_phase[i].push(secs);
                rows.push(row(name, phase, secs, slices, pairs, rep.to_string()));
            }
        }
        for (i, phase) in PHASES.iter().enumerate() {
            let min = per_phase[i].iter().copied().fold(f64::INFINITY, f64::min);
            rows.push(row(name, phase, min, slices, pairs, "min".into()));
            rows.push(row(name, phase, median(&mut per_phase[i]), slices, pairs, "median".into()));
        }
    }
    Ok(rows)
}

pub fn write_timing_csv<W: io::Write>(rows: &[TimingRow], out: W) -> Result<(), AnalysisError> {
    let mut writer = csv::Writer::from_writer(out);
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_timing_csv<R: io::Read>(input: R) -> Result<Vec<TimingRow>, AnalysisError> {
    csv::Reader::from_reader(input).deserialize().collect::<Result<_, _>>().map_err(AnalysisError::from)
}
