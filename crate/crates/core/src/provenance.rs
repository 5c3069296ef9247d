//! Reduced manifests and their provenance sidecars.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{parse_manifest, IngestError, Manifest, WindowSpec};
use crate::model::{MetricKind, Mode, PhaseTimings, ReductionPlan, VolumeSelection};
use crate::reducer::ReduceError;

pub const REDUCED_MANIFEST: &str = "reduced.jsonl";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Error)]
pub enum PlanIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

/// Line indices of `manifest` that the plan keeps, in file order.
pub fn apply_plan(plan: &ReductionPlan, manifest: &Manifest) -> Result<Vec<usize>, ReduceError> {
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &manifest.entries {
        *sizes.entry(e.volume_id.as_str()).or_default() += 1;
    }
    for (volume, m) in &sizes {
        let sel = plan
            .volumes
            .get(*volume)
            .ok_or_else(|| ReduceError::PlanManifestMismatch(format!("no selection for volume {volume:?}")))?;
        if sel.total() != *m || sel.kept.is_empty() {
            return Err(ReduceError::PlanManifestMismatch(format!(
                "volume {volume:?} has {m} slices but the plan covers {} ({} kept)",
                sel.total(),
                sel.kept.len()
            )));
        }
    }
    if let Some(extra) = plan.volumes.keys().find(|v| !sizes.contains_key(v.as_str())) {
        return Err(ReduceError::PlanManifestMismatch(format!("plan volume {extra:?} is not in the manifest")));
    }
    Ok(manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| plan.volumes[&e.volume_id].kept.contains(&e.slice_index))
        .map(|(i, _)| i)
        .collect())
}

/// Reduced manifest text: the kept lines exactly as they appeared in the input.
pub fn reduced_manifest_text(plan: &ReductionPlan, manifest: &Manifest) -> Result<String, ReduceError> {
    let mut out = String::new();
    for i in apply_plan(plan, manifest)? {
        out.push_str(&manifest.lines[i]);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeCounts {
    pub volume_id: String,
    pub total: usize,
    pub kept: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub decode_seconds: f64,
    pub feature_seconds: f64,
    pub pair_seconds: f64,
    pub scoring_seconds: f64,
    pub selection_seconds: f64,
    pub wall_seconds: f64,
    pub threads: usize,
}

/// JSON sidecar written next to every reduced manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub method: MetricKind,
    pub mode: String,
    pub value: f64,
    pub window: Option<WindowSpec>,
    /// Which slice of a similar pair is dropped.
    pub removal_policy: String,
    pub tie_break: String,
    pub input_manifest: String,
    pub input_manifest_digest: String,
    pub plan_digest: String,
    pub total_slices: usize,
    pub kept_slices: usize,
    pub removed_slices: usize,
    pub volumes: Vec<VolumeCounts>,
    pub timing: TimingRecord,
}

impl Provenance {
    pub fn new(
        plan: &ReductionPlan,
        manifest: &Manifest,
        manifest_path: &Path,
        window: Option<WindowSpec>,
        threads: usize,
    ) -> Self {
        let t = &plan.timings;
        Provenance {
            tool_version: plan.tool_version.clone(),
            method: plan.method.clone(),
            mode: plan.mode.name().to_owned(),
            value: plan.mode.value(),
            window,
            removal_policy: "drop-higher-index".to_owned(),
            tie_break: "ascending (a, b)".to_owned(),
            input_manifest: manifest_path.display().to_string(),
            input_manifest_digest: manifest.digest.clone(),
            plan_digest: plan.digest(),
            total_slices: plan.total_count(),
            kept_slices: plan.kept_count(),
            removed_slices: plan.total_count() - plan.kept_count(),
            volumes: plan
                .volumes
                .iter()
                .map(|(id, sel)| VolumeCounts {
                    volume_id: id.clone(),
                    total: sel.total(),
                    kept: sel.kept.len(),
                    removed: sel.removed.len(),
                })
                .collect(),
            timing: TimingRecord {
                decode_seconds: t.decode,
                feature_seconds: t.features,
                pair_seconds: t.pairs,
                scoring_seconds: t.scoring(),
                selection_seconds: t.select,
                wall_seconds: plan.wall_seconds,
                threads,
            },
        }
    }

    pub fn parsed_mode(&self) -> Mode {
        match self.mode.as_str() {
            "fraction" => Mode::Fraction(self.value),
            "count" => Mode::Count(self.value as usize),
            _ => Mode::Threshold(self.value),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PlanIoError + '_ {
    move |source| PlanIoError::Io { path: path.to_owned(), source }
}

/// Writes `reduced.jsonl` and `provenance.json` into `out_dir`.
pub fn write_reduction(
    out_dir: &Path,
    plan: &ReductionPlan,
    manifest: &Manifest,
    provenance: &Provenance,
) -> Result<(), PlanIoError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let reduced = reduced_manifest_text(plan, manifest)?;
    let path = out_dir.join(REDUCED_MANIFEST);
    fs::write(&path, reduced).map_err(io_err(&path))?;
    let path = out_dir.join(PROVENANCE_FILE);
    let json =
        serde_json::to_string_pretty(provenance).map_err(|source| PlanIoError::Json { path: path.clone(), source })?;
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(())
}

/// A reduction read back from disk.
#[derive(Debug, Clone)]
pub struct StoredReduction {
    pub provenance: Provenance,
    pub plan: ReductionPlan,
    pub reduced: Manifest,
}

/// Rebuilds a plan from an output directory's reduced manifest and sidecar.
pub fn load_reduction(dir: &Path) -> Result<StoredReduction, PlanIoError> {
    let path = dir.join(PROVENANCE_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let provenance: Provenance =
        serde_json::from_str(&text).map_err(|source| PlanIoError::Json { path: path.clone(), source })?;
    let path = dir.join(REDUCED_MANIFEST);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let reduced = parse_manifest(&bytes)?;

    let mut kept: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for e in &reduced.entries {
        kept.entry(e.volume_id.as_str()).or_default().insert(e.slice_index);
    }
    let mut volumes = BTreeMap::new();
    for counts in &provenance.volumes {
        let k = kept.remove(counts.volume_id.as_str()).unwrap_or_default();
        if k.len() != counts.kept || k.iter().any(|&i| i >= counts.total) {
            return Err(ReduceError::PlanManifestMismatch(format!(
                "volume {:?}: sidecar says {} kept of {}, reduced manifest lists {}",
                counts.volume_id,
                counts.kept,
                counts.total,
                k.len()
            ))
            .into());
        }
        let removed = (0..counts.total).filter(|i| !k.contains(i)).collect();
        volumes.insert(counts.volume_id.clone(), VolumeSelection { kept: k, removed });
    }
    if let Some((v, _)) = kept.into_iter().next() {
        return Err(ReduceError::PlanManifestMismatch(format!("reduced manifest has unknown volume {v:?}")).into());
    }
    let plan = ReductionPlan {
        method: provenance.method.clone(),
        mode: provenance.parsed_mode(),
        volumes,
        timings: PhaseTimings {
            decode: provenance.timing.decode_seconds,
            features: provenance.timing.feature_seconds,
            pairs: provenance.timing.pair_seconds,
            select: provenance.timing.selection_seconds,
        },
        wall_seconds: provenance.timing.wall_seconds,
        tool_version: provenance.tool_version.clone(),
    };
    Ok(StoredReduction { provenance, plan, reduced })
}
