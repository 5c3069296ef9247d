//! Slice selection: the EveryN baseline and greedy removal over sorted
//! intra-volume pair scores.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::embeddings::{EmbeddingError, EmbeddingTable};
use crate::ingest::{load_slice, IngestError, WindowSpec};
use crate::metrics::{cosine, dhash, hamming, nmi, ssim, DHash64, MetricError, SsimParams};
use crate::model::{
    MetricKind, Mode, PairScore, PhaseTimings, ReductionPlan, SliceImage, VolumeSelection, VolumeSeries,
};

pub const TOOL_VERSION: &str = concat!("slicethin ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("volume {volume:?} slice {slice}: {source}")]
    Ingest {
        volume: String,
        slice: usize,
        #[source]
        source: IngestError,
    },
    #[error("volume {volume:?} pair ({a}, {b}): {source}")]
    Metric {
        volume: String,
        a: usize,
        b: usize,
        #[source]
        source: MetricError,
    },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("the deepnet method needs an embedding table")]
    MissingEmbeddings,
    #[error("plan does not match manifest: {0}")]
    PlanManifestMismatch(String),
}

/// Pair scores ordered most-similar first, ties broken by ascending (a, b).
#[derive(Debug, Clone, PartialEq)]
pub struct SortedPairList {
    pairs: Vec<PairScore>,
    higher_is_more_similar: bool,
}

impl SortedPairList {
    pub fn new(mut pairs: Vec<PairScore>, higher_is_more_similar: bool) -> Self {
        pairs.sort_by(|x, y| {
            let by_score =
                if higher_is_more_similar { y.score.total_cmp(&x.score) } else { x.score.total_cmp(&y.score) };
            by_score.then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b))
        });
        SortedPairList { pairs, higher_is_more_similar }
    }

    pub fn pairs(&self) -> &[PairScore] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn higher_is_more_similar(&self) -> bool {
        self.higher_is_more_similar
    }

    /// Strictly more similar than `threshold`.
    pub fn exceeds(&self, score: f64, threshold: f64) -> bool {
        match self.higher_is_more_similar {
            true => score > threshold,
            false => score < threshold,
        }
    }
}

fn round_half_up(v: f64) -> usize {
    (v + 0.5).floor().max(0.0) as usize
}

/// Number of slices a count or fraction target leaves in an `m`-slice volume.
pub fn target_count(mode: Mode, m: usize) -> Result<Option<usize>, ReduceError> {
    match mode {
        Mode::Fraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ReduceError::InvalidTarget(format!("fraction {f} outside (0, 1]")));
            }
            Ok(Some(round_half_up(f * m as f64).max(1)))
        }
        Mode::Count(k) => {
            if k < 1 {
                return Err(ReduceError::InvalidTarget("count must be at least 1".into()));
            }
            if k > m {
                return Err(ReduceError::InvalidTarget(format!("count {k} exceeds volume size {m}")));
            }
            Ok(Some(k))
        }
        Mode::Threshold(t) if t.is_nan() => Err(ReduceError::InvalidTarget("threshold is NaN".into())),
        Mode::Threshold(_) => Ok(None),
    }
}

/// Stride for the EveryN baseline under a fraction or count target.
pub fn every_n_stride(mode: Mode, m: usize) -> Result<usize, ReduceError> {
    match mode {
        Mode::Fraction(f) => {
            target_count(mode, m)?;
            Ok(round_half_up(1.0 / f).max(1))
        }
        Mode::Count(k) => {
            target_count(mode, m)?;
            Ok(m.div_ceil(k))
        }
        Mode::Threshold(_) => {
            Err(ReduceError::InvalidTarget("every-n has no similarity threshold; use fraction or count".into()))
        }
    }
}

/// Keeps slices whose index is a multiple of `n`.
pub fn reduce_every_n(m: usize, n: usize) -> VolumeSelection {
    let n = n.max(1);
    let (kept, removed) = (0..m).partition(|i| i % n == 0);
    VolumeSelection { kept, removed }
}

/// Walks pairs most-similar first, dropping the higher-indexed slice of each
/// pair whose endpoints are both still kept.
pub fn greedy_reduce(pairs: &SortedPairList, m: usize, mode: Mode) -> Result<VolumeSelection, ReduceError> {
    if m == 0 {
        return Err(ReduceError::InvalidTarget("empty volume".into()));
    }
    let target = target_count(mode, m)?;
    let mut alive = vec![true; m];
    let mut remaining = m;
    for p in pairs.pairs() {
        match (mode, target) {
            (Mode::Threshold(t), _) if !pairs.exceeds(p.score, t) => break,
            (_, Some(k)) if remaining <= k => break,
            _ => {}
        }
        if remaining == 1 {
            break;
        }
        if alive[p.a] && alive[p.b] {
            alive[p.b] = false;
            remaining -= 1;
        }
    }
    let (kept, removed): (BTreeSet<usize>, BTreeSet<usize>) = (0..m).partition(|&i| alive[i]);
    Ok(VolumeSelection { kept, removed })
}

/// Per-slice inputs to a pairwise metric.
#[derive(Debug, Clone)]
pub enum SliceFeatures {
    Images(Vec<SliceImage>),
    Hashes(Vec<DHash64>),
    Vectors(Vec<Vec<f64>>),
}

impl SliceFeatures {
    pub fn len(&self) -> usize {
        match self {
            SliceFeatures::Images(v) => v.len(),
            SliceFeatures::Hashes(v) => v.len(),
            SliceFeatures::Vectors(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pairwise metric over prepared features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairMetric {
    Ssim(SsimParams<f64>),
    Mi { bins: usize },
    Cosine,
    Hamming,
}

impl PairMetric {
    pub fn for_method(method: &MetricKind, ssim_params: SsimParams<f64>) -> Option<PairMetric> {
        match method {
            MetricKind::EveryN { .. } => None,
            MetricKind::Ssim => Some(PairMetric::Ssim(ssim_params)),
            MetricKind::Mi { bins } => Some(PairMetric::Mi { bins: *bins }),
            MetricKind::DeepNet { .. } => Some(PairMetric::Cosine),
            MetricKind::Hash => Some(PairMetric::Hamming),
        }
    }

    pub fn higher_is_more_similar(&self) -> bool {
        !matches!(self, PairMetric::Hamming)
    }

    pub fn score(&self, features: &SliceFeatures, a: usize, b: usize) -> Result<f64, MetricError> {
        match (self, features) {
            (PairMetric::Ssim(p), SliceFeatures::Images(imgs)) => ssim(&imgs[a], &imgs[b], p),
            (PairMetric::Mi { bins }, SliceFeatures::Images(imgs)) => nmi(&imgs[a], &imgs[b], *bins),
            (PairMetric::Cosine, SliceFeatures::Vectors(v)) => cosine(&v[a], &v[b]),
            (PairMetric::Hamming, SliceFeatures::Hashes(h)) => Ok(f64::from(hamming(h[a], h[b]))),
            _ => panic!("{self:?} cannot score these features"),
        }
    }
}

/// Scores every intra-volume pair and sorts the result. Rows are scored in
/// parallel; the output does not depend on scheduling.
pub fn pairwise_scores(
    volume_id: &str,
    features: &SliceFeatures,
    metric: &PairMetric,
) -> Result<SortedPairList, ReduceError> {
    let m = features.len();
    let rows: Vec<Vec<PairScore>> = (0..m)
        .into_par_iter()
        .map(|a| {
            (a + 1..m)
                .map(|b| {
                    metric
                        .score(features, a, b)
                        .map(|score| PairScore { a, b, score })
                        .map_err(|source| ReduceError::Metric { volume: volume_id.to_owned(), a, b, source })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(SortedPairList::new(rows.concat(), metric.higher_is_more_similar()))
}

/// Settings for a full reduction run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceConfig {
    pub method: MetricKind,
    pub mode: Mode,
    pub window: Option<WindowSpec>,
    pub ssim: SsimParams<f64>,
}

impl ReduceConfig {
    pub fn new(method: MetricKind, mode: Mode) -> Self {
        ReduceConfig { method, mode, window: None, ssim: SsimParams::default() }
    }

    pub fn with_window(mut self, window: Option<WindowSpec>) -> Self {
        self.window = window;
        self
    }

    /// Checks settings that do not depend on volume sizes.
    pub fn validate(&self) -> Result<(), ReduceError> {
        match (&self.method, self.mode) {
            (MetricKind::EveryN { .. }, Mode::Threshold(_)) => {
                every_n_stride(self.mode, 1)?;
            }
            (_, Mode::Fraction(_)) => {
                target_count(self.mode, 1)?;
            }
            (_, Mode::Count(0)) => {
                return Err(ReduceError::InvalidTarget("count must be at least 1".into()));
            }
            (_, Mode::Threshold(t)) if t.is_nan() => {
                return Err(ReduceError::InvalidTarget("threshold is NaN".into()));
            }
            _ => {}
        }
        if let MetricKind::Mi { bins } = self.method {
            if bins < 2 {
                return Err(ReduceError::InvalidTarget(format!("MI needs at least 2 bins, got {bins}")));
            }
        }
        Ok(())
    }
}

/// Selection for one volume plus where the time went.
#[derive(Debug, Clone)]
pub struct VolumeOutcome {
    pub selection: VolumeSelection,
    pub timings: PhaseTimings,
    pub pairs_scored: usize,
}

/// Runs decode → features → pair scoring → greedy selection.
#[derive(Debug, Clone, Copy)]
pub struct Reducer<'a> {
    config: &'a ReduceConfig,
    embeddings: Option<&'a EmbeddingTable>,
}

impl<'a> Reducer<'a> {
    pub fn new(config: &'a ReduceConfig, embeddings: Option<&'a EmbeddingTable>) -> Result<Self, ReduceError> {
        config.validate()?;
        if matches!(config.method, MetricKind::DeepNet { .. }) && embeddings.is_none() {
            return Err(ReduceError::MissingEmbeddings);
        }
        Ok(Reducer { config, embeddings })
    }

    fn load_images(&self, volume: &VolumeSeries, timings: &mut PhaseTimings) -> Result<Vec<SliceImage>, ReduceError> {
        let loaded: Vec<(SliceImage, f64)> = volume
            .slices()
            .par_iter()
            .map(|s| {
                let start = Instant::now();
                let img = load_slice(s, self.config.window.as_ref()).map_err(|source| ReduceError::Ingest {
                    volume: volume.volume_id().to_owned(),
                    slice: s.slice_index,
                    source,
                })?;
                Ok((img, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<_, ReduceError>>()?;
        timings.decode += loaded.iter().map(|(_, t)| t).sum::<f64>();
        Ok(loaded.into_iter().map(|(img, _)| img).collect())
    }

    /// Loads the per-slice inputs the configured metric needs.
    pub fn features(
        &self,
        volume: &VolumeSeries,
        timings: &mut PhaseTimings,
    ) -> Result<Option<SliceFeatures>, ReduceError> {
        match &self.config.method {
            MetricKind::EveryN { .. } => Ok(None),
            MetricKind::Ssim | MetricKind::Mi { .. } => {
                Ok(Some(SliceFeatures::Images(self.load_images(volume, timings)?)))
            }
            MetricKind::Hash => {
                let hashed: Vec<(DHash64, f64, f64)> = volume
                    .slices()
                    .par_iter()
                    .map(|s| {
                        let start = Instant::now();
                        let img = load_slice(s, self.config.window.as_ref()).map_err(|source| ReduceError::Ingest {
                            volume: volume.volume_id().to_owned(),
                            slice: s.slice_index,
                            source,
                        })?;
                        let decoded = Instant::now();
                        let h = dhash(&img);
                        Ok((h, (decoded - start).as_secs_f64(), decoded.elapsed().as_secs_f64()))
                    })
                    .collect::<Result<_, ReduceError>>()?;
                timings.decode += hashed.iter().map(|h| h.1).sum::<f64>();
                timings.features += hashed.iter().map(|h| h.2).sum::<f64>();
                Ok(Some(SliceFeatures::Hashes(hashed.into_iter().map(|h| h.0).collect())))
            }
            MetricKind::DeepNet { .. } => {
                let table = self.embeddings.ok_or(ReduceError::MissingEmbeddings)?;
                let start = Instant::now();
                let vectors = volume
                    .slices()
                    .iter()
                    .map(|s| Ok(table.lookup(s)?.iter().map(|&v| f64::from(v)).collect()))
                    .collect::<Result<Vec<Vec<f64>>, ReduceError>>()?;
                timings.features += start.elapsed().as_secs_f64();
                Ok(Some(SliceFeatures::Vectors(vectors)))
            }
        }
    }

    pub fn reduce_volume(&self, volume: &VolumeSeries) -> Result<VolumeOutcome, ReduceError> {
        let m = volume.len();
        let mut timings = PhaseTimings::default();
        if let MetricKind::EveryN { n } = self.config.method {
            let start = Instant::now();
            let stride = match n {
                Some(n) => {
                    target_count(self.config.mode, m)?;
                    n
                }
                None => every_n_stride(self.config.mode, m)?,
            };
            let selection = reduce_every_n(m, stride);
            timings.select = start.elapsed().as_secs_f64();
            return Ok(VolumeOutcome { selection, timings, pairs_scored: 0 });
        }
        // fail on a bad target before paying for decoding
        target_count(self.config.mode, m)?;
        let features = self.features(volume, &mut timings)?.expect("similarity methods produce features");
        let metric = PairMetric::for_method(&self.config.method, self.config.ssim).expect("similarity method");
        let start = Instant::now();
        let pairs = pairwise_scores(volume.volume_id(), &features, &metric)?;
        timings.pairs = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let selection = greedy_reduce(&pairs, m, self.config.mode)?;
        timings.select = start.elapsed().as_secs_f64();
        Ok(VolumeOutcome { selection, timings, pairs_scored: pairs.len() })
    }

    /// Reduces every volume; volumes run in parallel on the current rayon pool.
    pub fn reduce_dataset(&self, volumes: &[VolumeSeries]) -> Result<ReductionPlan, ReduceError> {
        let start = Instant::now();
        let outcomes: Vec<VolumeOutcome> =
            volumes.par_iter().map(|v| self.reduce_volume(v)).collect::<Result<_, _>>()?;
        let mut timings = PhaseTimings::default();
        let mut selections = BTreeMap::new();
        for (v, outcome) in volumes.iter().zip(outcomes) {
            timings.add(&outcome.timings);
            selections.insert(v.volume_id().to_owned(), outcome.selection);
        }
        let method = match &self.config.method {
            MetricKind::EveryN { n: None } => match self.config.mode {
                Mode::Fraction(_) => MetricKind::EveryN { n: Some(every_n_stride(self.config.mode, 1)?) },
                _ => MetricKind::EveryN { n: None },
            },
            other => other.clone(),
        };
        Ok(ReductionPlan {
            method,
            mode: self.config.mode,
            volumes: selections,
            timings,
            wall_seconds: start.elapsed().as_secs_f64(),
            tool_version: TOOL_VERSION.to_owned(),
        })
    }
}
