use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use slicethin::analysis::{self, kept_score_histogram, plan_label, write_timing_csv};
use slicethin::synth::{self, SynthConfig};
use slicethin::{
    dhash, load_embeddings, load_reduction, load_slice, overlap, read_manifest, validate_manifest, write_reduction,
    EmbeddingTable, MetricKind, Mode, Provenance, ReduceConfig, Reducer, SliceRef,
};

use crate::args::{
    build_method, build_mode, require, resolve_window, BenchArgs, CompareArgs, HashDumpArgs, Method, ModeName,
    ReduceArgs, StatsArgs, SynthArgs,
};
use crate::CliError;

fn data<E: std::error::Error + Send + Sync + 'static>(e: E) -> CliError {
    CliError::Data(e.into())
}

/// Runs `f` on a dedicated pool; `None` means the available parallelism.
fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<(T, usize), CliError> {
    if threads == Some(0) {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build().map_err(data)?;
    let n = pool.current_num_threads();
    Ok((pool.install(f), n))
}

fn load_table(method: &MetricKind) -> Result<Option<EmbeddingTable>, CliError> {
    match method {
        MetricKind::DeepNet { embeddings } => Ok(Some(load_embeddings(embeddings).map_err(data)?)),
        _ => Ok(None),
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(data)? + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(data),
        None => io::stdout().write_all(text.as_bytes()).map_err(data),
    }
}

pub fn reduce(args: ReduceArgs) -> Result<(), CliError> {
    let a = args.merged()?;
    let manifest_path = require(a.manifest, "manifest")?;
    let method = require(a.method, "method")?;
    let mode = build_mode(require(a.mode, "mode")?, require(a.value, "value")?)?;
    let out = require(a.out, "out")?;
    if a.embeddings.is_some() && method != Method::Deepnet {
        return Err(CliError::usage("--embeddings only applies to --method deepnet"));
    }
    let kind = build_method(method, a.bins, a.embeddings.as_deref())?;
    let window = resolve_window(a.window_center, a.window_width)?;
    let config = ReduceConfig::new(kind, mode).with_window(window);
    config.validate()?;

    let manifest = read_manifest(&manifest_path).map_err(data)?;
    let volumes = validate_manifest(&manifest.entries).map_err(data)?;
    let table = load_table(&config.method)?;
    let (plan, threads) = with_pool(a.threads, || Reducer::new(&config, table.as_ref())?.reduce_dataset(&volumes))?;
    let plan = plan?;

    let recorded = fs::canonicalize(&manifest_path).unwrap_or(manifest_path);
    let provenance = Provenance::new(&plan, &manifest, &recorded, window, threads);
    write_reduction(&out, &plan, &manifest, &provenance).map_err(data)?;
    println!("{}", provenance.plan_digest);
    eprintln!(
        "{}: kept {} of {} slices ({:.2}%) in {:.2}s",
        plan_label(&plan),
        plan.kept_count(),
        plan.total_count(),
        100.0 * plan.kept_count() as f64 / plan.total_count() as f64,
        plan.wall_seconds
    );
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<(), CliError> {
    let stored = args.dirs.iter().map(|d| load_reduction(d).map_err(data)).collect::<Result<Vec<_>, _>>()?;
    let mut reports = Vec::new();
    for i in 0..stored.len() {
        for j in i + 1..stored.len() {
            let (a, b) = (&stored[i], &stored[j]);
            if a.provenance.input_manifest_digest != b.provenance.input_manifest_digest {
                return Err(CliError::Data(anyhow::anyhow!(
                    "{} and {} were reduced from different manifests",
                    args.dirs[i].display(),
                    args.dirs[j].display()
                )));
            }
            reports.push(overlap(&a.plan, &b.plan)?);
        }
    }
    write_json(&reports, args.out.as_deref())
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    let a = args.merged()?;
    let manifest_path = require(a.manifest, "manifest")?;
    let methods = require(a.methods, "methods")?;
    if methods.is_empty() {
        return Err(CliError::usage("--methods needs at least one method"));
    }
    let mode = build_mode(a.mode.unwrap_or(ModeName::Fraction), a.value.unwrap_or(0.1))?;
    let window = resolve_window(a.window_center, a.window_width)?;
    let configs = methods
        .iter()
        .map(|&m| {
            let bins = if m == Method::Mi { a.bins } else { None };
            Ok(ReduceConfig::new(build_method(m, bins, a.embeddings.as_deref())?, mode).with_window(window))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for c in &configs {
        c.validate()?;
    }
    let table = match (methods.contains(&Method::Deepnet), &a.embeddings) {
        (true, Some(path)) => Some(load_embeddings(path).map_err(data)?),
        _ => None,
    };

    let manifest = read_manifest(&manifest_path).map_err(data)?;
    let volumes = validate_manifest(&manifest.entries).map_err(data)?;
    let repetitions = a.repetitions.unwrap_or(3);
    let (rows, _) =
        with_pool(Some(a.threads.unwrap_or(1)), || analysis::bench(&volumes, &configs, table.as_ref(), repetitions))?;
    let rows = rows?;

    match &a.out {
        Some(path) => write_timing_csv(&rows, fs::File::create(path).map_err(data)?)?,
        None => write_timing_csv(&rows, io::stdout().lock())?,
    }
    for r in rows.iter().filter(|r| r.repetition == "median") {
        if r.phase == "total" {
            eprintln!("{}: {:.1} slices/s (median of {repetitions})", r.method, r.slices_per_second);
        }
        if r.phase == "pairs" && r.pairs > 0 {
            eprintln!("{}: {:.3e} s per scored pair", r.method, r.seconds_per_pair);
        }
    }
    Ok(())
}

pub fn stats(args: StatsArgs) -> Result<(), CliError> {
    let stored = load_reduction(&args.dir).map_err(data)?;
    let mut report = analysis::stats(&stored.plan);
    if args.histogram {
        let prov = &stored.provenance;
        let method = match (&prov.method, &args.embeddings) {
            (MetricKind::DeepNet { .. }, Some(path)) => MetricKind::DeepNet { embeddings: path.clone() },
            (m, _) => m.clone(),
        };
        let mode: Mode = prov.parsed_mode();
        let config = ReduceConfig::new(method, mode).with_window(prov.window);
        let table = load_table(&config.method)?;

        // reduced lines keep the original paths, relative to the input manifest
        let mut reduced = stored.reduced.clone();
        if let Some(base) = Path::new(&prov.input_manifest).parent() {
            reduced.resolve_paths(base);
        }
        let mut grouped: BTreeMap<String, Vec<SliceRef>> = BTreeMap::new();
        for e in reduced.entries {
            grouped.entry(e.volume_id.clone()).or_default().push(e);
        }
        let mut kept: Vec<Vec<SliceRef>> = grouped.into_values().collect();
        for v in &mut kept {
            v.sort_by_key(|s| s.slice_index);
        }
        let (hist, _) = with_pool(args.threads, || kept_score_histogram(&config, table.as_ref(), &kept))?;
        report.histogram = hist?;
    }
    write_json(&report, None)
}

pub fn hash_dump(args: HashDumpArgs) -> Result<(), CliError> {
    let window = resolve_window(args.window_center, args.window_width)?;
    let lines = if let Some(path) = &args.manifest {
        let manifest = read_manifest(path).map_err(data)?;
        let mut entries = manifest.entries;
        entries.sort_by(|a, b| (&a.volume_id, a.slice_index).cmp(&(&b.volume_id, b.slice_index)));
        let (hashed, _) = with_pool(args.threads, || {
            entries
                .par_iter()
                .map(|s| {
                    let img = load_slice(s, window.as_ref()).map_err(data)?;
                    Ok(format!("{}\t{}\t{}", s.volume_id, s.slice_index, dhash(&img)))
                })
                .collect::<Result<Vec<_>, CliError>>()
        })?;
        hashed?
    } else {
        let single = args.image.len() == 1;
        args.image
            .iter()
            .map(|p| {
                let img = load_slice(&SliceRef::new("", 0, p), window.as_ref()).map_err(data)?;
                let hash = dhash(&img);
                Ok(if single { hash.to_string() } else { format!("{}\t{hash}", p.display()) })
            })
            .collect::<Result<Vec<_>, CliError>>()?
    };
    let mut out = io::stdout().lock();
    for l in lines {
        writeln!(out, "{l}").map_err(data)?;
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let a = args.merged()?;
    let out = require(a.out, "out")?;
    let d = SynthConfig::default();
    let config = SynthConfig {
        volumes: a.volumes.unwrap_or(d.volumes),
        slices: a.slices.unwrap_or(d.slices),
        min_slices: a.min_slices,
        width: a.width.unwrap_or(d.width),
        height: a.height.unwrap_or(d.height),
        seed: a.seed.unwrap_or(d.seed),
        bit_depth: a.bit_depth.unwrap_or(d.bit_depth),
        duplicate_rate: a.duplicate_rate.unwrap_or(d.duplicate_rate),
        embedding_dim: a.embedding_dim,
    };
    let summary = synth::generate(&out, &config)?;
    println!("{}", summary.manifest.display());
    if let Some(e) = &summary.embeddings {
        println!("{}", e.display());
    }
    eprintln!("wrote {} slices", summary.slices);
    Ok(())
}
