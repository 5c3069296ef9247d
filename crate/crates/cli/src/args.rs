use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use slicethin::{MetricKind, Mode, WindowSpec};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "slicethin", version, about = "Remove near-duplicate slices from volumetric image datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce a manifest and write reduced.jsonl plus provenance.json.
    Reduce(ReduceArgs),
    /// Overlap between reductions of the same manifest.
    Compare(CompareArgs),
    /// Time methods on a manifest and emit a CSV table.
    Bench(BenchArgs),
    /// Summarize a reduction directory.
    Stats(StatsArgs),
    /// Print 64-bit difference hashes as hex.
    HashDump(HashDumpArgs),
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    EveryN,
    Ssim,
    Mi,
    Deepnet,
    Hash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Fraction,
    Count,
    Threshold,
}

/// Copies every field that is unset on the command line from the config file.
macro_rules! fill_from {
    ($dst:expr, $src:expr; $($field:ident),+ $(,)?) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field.take(); } )+
    };
}

pub fn resolve_window(center: Option<f64>, width: Option<f64>) -> Result<Option<WindowSpec>, CliError> {
    match (center, width) {
        (None, None) => Ok(None),
        (Some(c), Some(w)) => WindowSpec::new(c, w)
            .map(Some)
            .ok_or_else(|| CliError::usage(format!("invalid window: center {c}, width {w}"))),
        _ => Err(CliError::usage("--window-center and --window-width must be given together")),
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ReduceArgs {
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    /// Fraction in (0, 1], slice count per volume, or similarity threshold.
    #[arg(long, allow_negative_numbers = true)]
    pub value: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Window center in physical units (HU for CT); requires --window-width.
    #[arg(long, allow_negative_numbers = true)]
    pub window_center: Option<f64>,
    /// Window width; without a window each slice is min-max scaled.
    #[arg(long)]
    pub window_width: Option<f64>,
    /// Histogram bins for --method mi.
    #[arg(long)]
    pub bins: Option<usize>,
    /// SSEB file, required for --method deepnet.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl ReduceArgs {
    pub fn merged(mut self) -> Result<Self, CliError> {
        if let Some(path) = self.config.clone() {
            let mut file: ReduceArgs = read_config(&path)?;
            fill_from!(self, file; manifest, method, mode, value, out, window_center, window_width, bins, embeddings, threads);
        }
        Ok(self)
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reduction directories (each holding reduced.jsonl and provenance.json).
    #[arg(required = true, num_args = 2..)]
    pub dirs: Vec<PathBuf>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct BenchArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated methods, e.g. hash,every-n.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Defaults to fraction 0.1, which every method accepts.
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    #[arg(long, allow_negative_numbers = true)]
    pub value: Option<f64>,
    /// Window center in physical units (HU for CT); requires --window-width.
    #[arg(long, allow_negative_numbers = true)]
    pub window_center: Option<f64>,
    /// Window width; without a window each slice is min-max scaled.
    #[arg(long)]
    pub window_width: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Worker threads; defaults to 1 so timings are per core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// CSV output path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl BenchArgs {
    pub fn merged(mut self) -> Result<Self, CliError> {
        if let Some(path) = self.config.clone() {
            let mut file: BenchArgs = read_config(&path)?;
            fill_from!(self, file; manifest, methods, repetitions, mode, value, window_center, window_width, bins, embeddings, threads, out);
        }
        Ok(self)
    }
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub dir: PathBuf,
    /// Also score all kept pairs and bin them.
    #[arg(long)]
    pub histogram: bool,
    /// Override the embeddings path recorded in the provenance.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HashDumpArgs {
    /// PNG files to hash.
    #[arg(long, num_args = 1.., conflicts_with = "manifest", required_unless_present = "manifest")]
    pub image: Vec<PathBuf>,
    /// Hash every slice of a manifest; prints volume, index and hash per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Window center in physical units (HU for CT); requires --window-width.
    #[arg(long, allow_negative_numbers = true)]
    pub window_center: Option<f64>,
    /// Window width; without a window each slice is min-max scaled.
    #[arg(long)]
    pub window_width: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SynthArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub volumes: Option<usize>,
    /// Slices per volume; the upper bound when --min-slices is given.
    #[arg(long)]
    pub slices: Option<usize>,
    #[arg(long)]
    pub min_slices: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// 8 or 16.
    #[arg(long)]
    pub bit_depth: Option<u8>,
    #[arg(long)]
    pub duplicate_rate: Option<f64>,
    /// Also write embeddings.sseb with this many dimensions.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
}

impl SynthArgs {
    pub fn merged(mut self) -> Result<Self, CliError> {
        if let Some(path) = self.config.clone() {
            let mut file: SynthArgs = read_config(&path)?;
            fill_from!(self, file; out, volumes, slices, min_slices, width, height, seed, bit_depth, duplicate_rate, embedding_dim);
        }
        Ok(self)
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("missing required --{flag}")))
}

pub fn build_mode(mode: ModeName, value: f64) -> Result<Mode, CliError> {
    match mode {
        ModeName::Fraction => Ok(Mode::Fraction(value)),
        ModeName::Threshold => Ok(Mode::Threshold(value)),
        ModeName::Count => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(CliError::usage(format!("count must be a positive integer, got {value}")));
            }
            Ok(Mode::Count(value as usize))
        }
    }
}

pub fn build_method(method: Method, bins: Option<usize>, embeddings: Option<&Path>) -> Result<MetricKind, CliError> {
    if bins.is_some() && method != Method::Mi {
        return Err(CliError::usage("--bins only applies to --method mi"));
    }
    Ok(match method {
        Method::EveryN => MetricKind::EveryN { n: None },
        Method::Ssim => MetricKind::Ssim,
        Method::Mi => MetricKind::Mi { bins: bins.unwrap_or(slicethin::metrics::DEFAULT_BINS) },
        Method::Hash => MetricKind::Hash,
        Method::Deepnet => MetricKind::DeepNet {
            embeddings: embeddings
                .ok_or_else(|| CliError::usage("--method deepnet requires --embeddings <file.sseb>"))?
                .to_owned(),
        },
    })
}
