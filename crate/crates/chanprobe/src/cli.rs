//! Command-line driver.
//!
//! `run` returns a [`CliError`] instead of exiting so that the exit-code
//! policy lives in one place: usage and input problems exit with 2, analysis
//! and output failures with 1.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use chanprobe_core::{
    boundary_coverage, build_delta, greedy_select, layer_correlations, rank_channels,
    slice_by_class, topk_pairs, ActivationTrace, Aggregate, Basis, ChannelRef, CorrMode,
    LayerInfo, Policy,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ctrc::{read_trace, CtrcError};
use crate::ingest::ingest_csv;
use crate::report::{CorrReport, CoverageJson, Format, ScoreReport, SelectionReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Analysis(String),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::Analysis(_) | CliError::Output { .. } => 1,
        }
    }
}

fn analysis<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Analysis(e.to_string())
}

/// Channel-level test analytics for convolutional networks.
///
/// Traces are CTRC v1 files, or CSV files when `--csv-layers` describes the
/// column layout. Intensity sweeps that produce test traces conventionally
/// span 0.33x to 3x of the seed intensity.
#[derive(Debug, Parser)]
#[command(name = "chanprobe", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "CHANPROBE_THREADS",
          value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    /// Report destination; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Layer layout for CSV inputs, e.g. `conv1:16,conv2:32`.
    #[arg(long, global = true, value_parser = parse_layer_spec)]
    pub csv_layers: Option<LayerLayout>,
}

/// Ordered `(name, channels)` list describing CSV columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLayout(pub Vec<LayerInfo>);

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Within-layer pair correlations and their top-k subset.
    Corr(CorrArgs),
    /// Representative channel selection (greedy hitting set).
    Select(SelectArgs),
    /// Rank generated test data by unexpectedness.
    Score(ScoreArgs),
    /// Channel boundary coverage of a test suite.
    Coverage(CoverageArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Signed,
    Absolute,
}

impl From<ModeArg> for CorrMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Signed => CorrMode::Signed,
            ModeArg::Absolute => CorrMode::Absolute,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    GreedyMax,
    GreedyMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Raw,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateArg {
    Max,
    Mean,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub layer: String,
    /// Restrict to one class, by name or numeric id.
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, default_value_t = 0.05, value_parser = parse_fraction)]
    pub top_frac: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Signed)]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Trace the correlations are computed on (normally the training set).
    #[arg(long)]
    pub trace: PathBuf,
    /// Minimum correlation for one channel to stand in for another.
    #[arg(long, value_parser = parse_fraction)]
    pub theta: f64,
    /// Comma-separated layer names; all layers when omitted.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Absolute)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = PolicyArg::GreedyMax)]
    pub policy: PolicyArg,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Test trace generated for one channel: `[LAYER:]INDEX=PATH`, or a bare
    /// PATH (bare paths are numbered 0, 1, … within `--layer`).
    #[arg(long, required = true)]
    pub test: Vec<String>,
    /// Layer of tests given without an explicit layer.
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long, default_value_t = 0.05, value_parser = parse_fraction)]
    pub k_frac: f64,
    #[arg(long, value_enum, default_value_t = BasisArg::Raw)]
    pub basis: BasisArg,
    /// Per-channel fold over classes.
    #[arg(long, value_enum, default_value_t = AggregateArg::Max)]
    pub aggregate: AggregateArg,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Test suite; several files are pooled.
    #[arg(long, required = true)]
    pub test: Vec<PathBuf>,
    /// Comma-separated layer names; all layers when omitted.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<String>,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn parse_layer_spec(s: &str) -> Result<LayerLayout, String> {
    s.split(',')
        .map(|part| {
            let (name, count) = part
                .rsplit_once(':')
                .ok_or_else(|| format!("{part:?} is not NAME:CHANNELS"))?;
            let count = count
                .parse()
                .map_err(|_| format!("{count:?} is not a channel count"))?;
            Ok(LayerInfo::new(name, count))
        })
        .collect::<Result<_, _>>()
        .map(LayerLayout)
}

struct Loader<'a> {
    csv_layers: Option<&'a [LayerInfo]>,
}

impl Loader<'_> {
    fn load(&self, path: &Path) -> Result<ActivationTrace, CliError> {
        let input = |message: String| CliError::Input {
            path: path.to_path_buf(),
            message,
        };
        let file = fs::File::open(path).map_err(|e| input(e.to_string()))?;
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let layers = self
                .csv_layers
                .ok_or_else(|| CliError::Usage("CSV input needs --csv-layers".into()))?;
            ingest_csv(BufReader::new(file), layers).map_err(|e| input(e.to_string()))
        } else {
            read_trace(BufReader::new(file)).map_err(|e: CtrcError| input(e.to_string()))
        }
    }
}

fn layer_index(trace: &ActivationTrace, name: &str) -> Result<usize, CliError> {
    trace
        .layer_by_name(name)
        .ok_or_else(|| CliError::Analysis(format!("unknown layer {name:?}")))
}

fn layer_indices(trace: &ActivationTrace, names: &[String]) -> Result<Vec<usize>, CliError> {
    if names.is_empty() {
        return Ok((0..trace.layers().len()).collect());
    }
    names.iter().map(|n| layer_index(trace, n)).collect()
}

fn class_id(trace: &ActivationTrace, class: &str) -> Result<u32, CliError> {
    let names = trace.class_names().unwrap_or(&[]);
    if let Some(pos) = names.iter().position(|n| n == class) {
        return Ok(pos as u32);
    }
    class
        .parse()
        .map_err(|_| CliError::Analysis(format!("unknown class {class:?}")))
}

/// A rendered report ready to be written.
pub struct Rendered(pub Vec<u8>);

fn render<T: serde::Serialize>(
    format: Format,
    value: &T,
    csv: impl FnOnce(&T) -> csv::Result<Vec<u8>>,
) -> Result<Rendered, CliError> {
    let mut bytes = match format {
        Format::Json => serde_json::to_vec(value).map_err(analysis)?,
        Format::Csv => csv(value).map_err(analysis)?,
    };
    if format == Format::Json {
        bytes.push(b'\n');
    }
    Ok(Rendered(bytes))
}

fn cmd_corr(args: &CorrArgs, loader: &Loader, format: Format) -> Result<Rendered, CliError> {
    let trace = loader.load(&args.trace)?;
    let layer = layer_index(&trace, &args.layer)?;
    let mode = args.mode.into();
    let (pc, class) = match &args.class {
        Some(c) => {
            let id = class_id(&trace, c)?;
            let slice = slice_by_class(&trace, id).map_err(analysis)?;
            let name = trace.class_names().and_then(|n| n.get(id as usize)).cloned();
            (layer_correlations(&slice, layer, mode).map_err(analysis)?, name)
        }
        None => (layer_correlations(&trace, layer, mode).map_err(analysis)?, None),
    };
    let topk = topk_pairs(&pc, args.top_frac).map_err(analysis)?;
    render(format, &CorrReport::new(&pc, &topk, class), CorrReport::to_csv)
}

fn cmd_select(args: &SelectArgs, loader: &Loader, format: Format) -> Result<Rendered, CliError> {
    let trace = loader.load(&args.trace)?;
    let layers = layer_indices(&trace, &args.layers)?;
    let problem = build_delta(&trace, &layers, args.theta, args.mode.into()).map_err(analysis)?;
    let policy = match args.policy {
        PolicyArg::GreedyMax => Policy::GreedyMax,
        PolicyArg::GreedyMin => Policy::GreedyMin,
    };
    let result = greedy_select(&problem, policy);
    render(format, &SelectionReport::new(&problem, &result), SelectionReport::to_csv)
}

/// Splits `[LAYER:]INDEX=PATH`; anything else is a bare path.
fn parse_test_spec(spec: &str) -> (Option<(Option<&str>, usize)>, &str) {
    if let Some((channel, path)) = spec.split_once('=') {
        let (layer, index) = match channel.rsplit_once(':') {
            Some((l, i)) => (Some(l), i),
            None => (None, channel),
        };
        if let Ok(index) = index.parse() {
            return (Some((layer, index)), path);
        }
    }
    (None, spec)
}

fn cmd_score(args: &ScoreArgs, loader: &Loader, format: Format) -> Result<Rendered, CliError> {
    let train = loader.load(&args.train)?;
    let mut tests = BTreeMap::new();
    let mut bare = 0;
    for spec in &args.test {
        let (channel, path) = parse_test_spec(spec);
        let (layer, index) = match channel {
            Some((layer, index)) => (layer.map(str::to_string), index),
            None => {
                bare += 1;
                (None, bare - 1)
            }
        };
        let layer = layer.or_else(|| args.layer.clone()).ok_or_else(|| {
            CliError::Usage(format!("test {spec:?} names no layer; pass --layer"))
        })?;
        let layer_idx = layer_index(&train, &layer)?;
        let channel = train.channel(layer_idx, index).ok_or_else(|| {
            CliError::Analysis(format!("layer {layer:?} has no channel {index}"))
        })?;
        let trace = loader.load(Path::new(path))?;
        if tests.insert(channel.clone(), trace).is_some() {
            return Err(CliError::Usage(format!("channel {channel} given twice")));
        }
    }
    let basis = match args.basis {
        BasisArg::Raw => Basis::Raw,
        BasisArg::Normalized => Basis::Normalized,
    };
    let aggregate = match args.aggregate {
        AggregateArg::Max => Aggregate::Max,
        AggregateArg::Mean => Aggregate::Mean,
    };
    let report = rank_channels(&tests, &train, args.k_frac, basis, aggregate).map_err(analysis)?;
    let names = train.class_names().unwrap_or(&[]);
    render(format, &ScoreReport::new(&report, names), ScoreReport::to_csv)
}

/// Stacks traces with a shared schema into one; labels are dropped.
fn pool(traces: &[ActivationTrace]) -> Result<ActivationTrace, CliError> {
    let first = &traces[0];
    let mut values = Vec::new();
    let mut rows = 0;
    for t in traces {
        if !t.same_schema(first) {
            return Err(CliError::Analysis(
                "test traces have different layer schemas".into(),
            ));
        }
        values.extend_from_slice(t.intensities());
        rows += t.num_samples();
    }
    ActivationTrace::new(first.layers().to_vec(), rows, values, None, None).map_err(analysis)
}

fn cmd_coverage(args: &CoverageArgs, loader: &Loader, format: Format) -> Result<Rendered, CliError> {
    let train = loader.load(&args.train)?;
    let tests = args
        .test
        .iter()
        .map(|p| loader.load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let test = pool(&tests)?;
    let layers = layer_indices(&train, &args.layers)?;
    let universe: Vec<ChannelRef> = train
        .channels()
        .into_iter()
        .filter(|c| layers.contains(&c.layer_index))
        .collect();
    let report = boundary_coverage(&train, &test, &universe).map_err(analysis)?;
    render(format, &CoverageJson::new(&report), CoverageJson::to_csv)
}

fn dispatch(cli: &Cli) -> Result<Rendered, CliError> {
    let loader = Loader {
        csv_layers: cli.csv_layers.as_ref().map(|l| l.0.as_slice()),
    };
    match &cli.command {
        Command::Corr(a) => cmd_corr(a, &loader, cli.format),
        Command::Select(a) => cmd_select(a, &loader, cli.format),
        Command::Score(a) => cmd_score(a, &loader, cli.format),
        Command::Coverage(a) => cmd_coverage(a, &loader, cli.format),
    }
}

fn write_output(out: Option<&Path>, rendered: &Rendered) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let err = |source| CliError::Output {
                path: path.display().to_string(),
                source,
            };
            // write beside the target and rename, so a failed run leaves no
            // partial report behind
            let mut tmp = path.as_os_str().to_owned();
            tmp.push(".partial");
            let tmp = PathBuf::from(tmp);
            fs::write(&tmp, &rendered.0).map_err(err)?;
            fs::rename(&tmp, path).map_err(err)
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(&rendered.0)
                .and_then(|()| stdout.flush())
                .map_err(|source| CliError::Output {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

/// Runs one parsed command line to completion.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let rendered = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(n))
            .build()
            .map_err(analysis)?
            .install(|| dispatch(cli))?,
        None => dispatch(cli)?,
    };
    write_output(cli.out.as_deref(), &rendered)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions() {
        assert_eq!(parse_fraction("0.05"), Ok(0.05));
        assert_eq!(parse_fraction("1"), Ok(1.0));
        assert!(parse_fraction("0").is_err());
        assert!(parse_fraction("1.01").is_err());
        assert!(parse_fraction("x").is_err());
    }

    #[test]
    fn layer_specs() {
        let spec = parse_layer_spec("conv1:16,block2:conv:8").unwrap();
        assert_eq!(spec.0, vec![LayerInfo::new("conv1", 16), LayerInfo::new("block2:conv", 8)]);
        assert!(parse_layer_spec("conv1").is_err());
    }

    #[test]
    fn test_specs() {
        assert_eq!(parse_test_spec("conv4:17=gen.ctrc"), (Some((Some("conv4"), 17)), "gen.ctrc"));
        assert_eq!(parse_test_spec("3=gen.ctrc"), (Some((None, 3)), "gen.ctrc"));
        assert_eq!(parse_test_spec("gen_ch17.ctrc"), (None, "gen_ch17.ctrc"));
        assert_eq!(parse_test_spec("dir=x/gen.ctrc"), (None, "dir=x/gen.ctrc"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
