//! `detangle`: synthesize representations, score them, align factors to
//! neurons, run novel-combination probes and correlate the results.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use detangle_core::align::{align, hinton_svg, hinton_text, AlignMode};
use detangle_core::analysis::{
    correlate_metrics_with_cg, render_report, BaselineAggregation, CorrelationOptions, CorrelationTable,
};
use detangle_core::cgtask::{run_cg_suite, run_cg_suite_presplit, CgConfig, CgPair, CgSuiteResult};
use detangle_core::classify::ProbeKind;
use detangle_core::dataset::{load_representation_set, write_atomic, write_representation_set};
use detangle_core::infotheory::importance_matrix;
use detangle_core::metrics::{evaluate, Aggregation, MetricConfig, MetricReport};
use detangle_core::synth::{generate, GeneratorKind, GeneratorSpec};
use detangle_core::{BinConfig, BinStrategy, FactorSchema, RepresentationSet};

#[derive(Parser, Debug)]
#[command(name = "detangle", version, about = "Disentanglement metrics and compositional-generalization probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic representation (data.csv + schema.json)
    Synth(SynthArgs),
    /// Importance, injective alignment, SNC/NK/MIG/SAP/DCI
    Metrics(MetricsArgs),
    /// Hinton diagram of the importance matrix with the chosen alignment
    Align(AlignArgs),
    /// Novel-combination probes with a normal-test-set control
    Cg(CgArgs),
    /// Pearson correlation of metric reports with CG results
    Correlate(CorrelateArgs),
    /// Markdown summary of metric, CG and correlation JSON files
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    #[value(name = "table1_a")]
    ColourShapeA,
    #[value(name = "table1_b")]
    ColourShapeB,
    Xor,
    RedundantXor,
    Ideal,
    Rotated,
    JointCode,
    Noise,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Exact population instead of sampled draws
    #[arg(long)]
    exact: bool,
    /// Multiplicity of the exact population
    #[arg(long, default_value_t = 1)]
    copies: usize,
    /// Draws per factor combination when sampling
    #[arg(long, default_value_t = 50)]
    samples_per_cell: usize,
    /// Gaussian noise σ added to the latents
    #[arg(long)]
    noise: Option<f64>,
    /// Rotation angle in radians (rotated only)
    #[arg(long)]
    angle: Option<f64>,
    /// Factor schema JSON replacing the kind's default
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Directory holding data.csv + schema.json, or a data CSV
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON (default: schema.json next to the data)
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AlignArg {
    Greedy,
    Injective,
}

impl From<AlignArg> for AlignMode {
    fn from(a: AlignArg) -> Self {
        match a {
            AlignArg::Greedy => AlignMode::Greedy,
            AlignArg::Injective => AlignMode::Injective,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Quantile,
    EqualWidth,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AggregateArg {
    Mean,
    Product,
}

#[derive(Args, Debug)]
struct BinArgs {
    /// Bins per neuron for mutual information
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, value_enum, default_value_t = StrategyArg::Quantile)]
    bin_strategy: StrategyArg,
}

impl BinArgs {
    fn config(&self) -> BinConfig {
        BinConfig {
            bins: self.bins,
            strategy: match self.bin_strategy {
                StrategyArg::Quantile => BinStrategy::Quantile,
                StrategyArg::EqualWidth => BinStrategy::EqualWidth,
            },
        }
    }
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Report JSON
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = AlignArg::Injective)]
    align: AlignArg,
    #[command(flatten)]
    bins: BinArgs,
    /// Seed for probe initialization and the held-out split
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Factors for the extra subset aggregate, e.g. shape,size
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<String>>,
    /// How the subset is aggregated
    #[arg(long, value_enum, default_value_t = AggregateArg::Product)]
    aggregate: AggregateArg,
    /// Skip the linear probe row
    #[arg(long)]
    no_linear: bool,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[command(flatten)]
    data: DataArgs,
    /// SVG output
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = AlignArg::Injective)]
    align: AlignArg,
    #[command(flatten)]
    bins: BinArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ProbeArg {
    Linear,
    Mlp,
    Both,
}

#[derive(Args, Debug)]
struct CgArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Separately encoded test set (directory or CSV); `--data` is then
    /// the training set
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Excluded combinations, e.g. "shape:0,size:1;shape:2,size:3"
    #[arg(long)]
    pairs: String,
    #[arg(long, value_enum, default_value_t = ProbeArg::Mlp)]
    probe: ProbeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum TargetProbeArg {
    Linear,
    Mlp,
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    /// Metric report JSON files, one per run
    #[arg(long, value_delimiter = ',', required = true)]
    reports: Vec<PathBuf>,
    /// CG result JSON files, in the same run order
    #[arg(long, value_delimiter = ',', required = true)]
    cg: Vec<PathBuf>,
    /// Factors SNC/NK are multiplied over (default: each run's CG pair)
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<String>>,
    /// Baseline aggregation: mean over all factors (or the subset, when
    /// given) or product over the subset
    #[arg(long, value_enum, default_value_t = AggregateArg::Mean)]
    aggregate: AggregateArg,
    /// Probe whose joint CG accuracy is the target
    #[arg(long, value_enum, default_value_t = TargetProbeArg::Mlp)]
    probe: TargetProbeArg,
    /// Metric columns to correlate (default: all available)
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    cg: Vec<PathBuf>,
    #[arg(long)]
    correlation: Option<PathBuf>,
    /// Markdown output (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<detangle_core::Error> for Failure {
    fn from(e: detangle_core::Error) -> Self {
        Failure {
            code: if e.is_io() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| invalid(e.to_string()))?;
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

fn resolve_data(data: &Path, schema: Option<&Path>) -> (PathBuf, PathBuf) {
    let csv = if data.is_dir() { data.join("data.csv") } else { data.to_path_buf() };
    let schema = schema
        .map(Path::to_path_buf)
        .unwrap_or_else(|| csv.parent().unwrap_or(Path::new(".")).join("schema.json"));
    (csv, schema)
}

fn load(args: &DataArgs) -> CliResult<RepresentationSet> {
    let (csv, schema) = resolve_data(&args.data, args.schema.as_deref());
    load_pair(&csv, &schema)
}

fn load_pair(csv: &Path, schema: &Path) -> CliResult<RepresentationSet> {
    if !csv.is_file() {
        return Err(Failure {
            code: 2,
            message: format!("{}: no such data file", csv.display()),
        });
    }
    Ok(load_representation_set(csv, schema)?)
}

fn factor_indices(schema: &FactorSchema, names: &[String]) -> CliResult<Vec<usize>> {
    names
        .iter()
        .map(|n| schema.index_of(n).ok_or_else(|| invalid(format!("unknown factor `{n}`"))))
        .collect()
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let kind = match args.kind {
        KindArg::ColourShapeA => GeneratorKind::ColourShapeA,
        KindArg::ColourShapeB => GeneratorKind::ColourShapeB,
        KindArg::Xor => GeneratorKind::Xor,
        KindArg::RedundantXor => GeneratorKind::RedundantXor,
        KindArg::Ideal => GeneratorKind::Ideal,
        KindArg::Rotated => GeneratorKind::Rotated {
            angle: args.angle.unwrap_or(std::f64::consts::FRAC_PI_4),
        },
        KindArg::JointCode => GeneratorKind::JointCode,
        KindArg::Noise => GeneratorKind::Noise,
    };
    if args.angle.is_some() && args.kind != KindArg::Rotated {
        return Err(invalid("--angle only applies to --kind rotated"));
    }
    let mut spec = GeneratorSpec::new(kind).with_seed(args.seed);
    if args.exact {
        spec = spec.exact(args.copies).with_noise(args.noise.unwrap_or(0.0));
    } else {
        spec = spec.sampled(args.samples_per_cell);
        if let Some(sigma) = args.noise {
            spec = spec.with_noise(sigma);
        }
    }
    if let Some(path) = &args.schema {
        spec = spec.with_schema(FactorSchema::from_json(&read_text(path)?)?);
    }
    let set = generate(&spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", args.out.display()),
    })?;
    write_representation_set(&set, &args.out.join("data.csv"), &args.out.join("schema.json"))?;
    write_json(&args.out.join("generator.json"), &spec)?;
    eprintln!(
        "wrote {} rows × {} neurons to {}",
        set.len(),
        set.num_neurons(),
        args.out.display()
    );
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> CliResult<()> {
    let set = load(&args.data)?;
    let mut config = MetricConfig {
        bins: args.bins.config(),
        align: args.align.into(),
        linear_probe: !args.no_linear,
        ..MetricConfig::default()
    };
    config.nk.train.seed = args.seed;
    config.nk.split_seed = args.seed;
    if let Some(names) = &args.subset {
        let idx = factor_indices(set.schema(), names)?;
        config.subset = Some(match args.aggregate {
            AggregateArg::Mean => Aggregation::MeanOver(idx),
            AggregateArg::Product => Aggregation::ProductOver(idx),
        });
    }
    let report = evaluate(&set, &config)?;
    write_json(&args.out, &report)?;
    print!("{}", report.text_table());
    Ok(())
}

fn cmd_align(args: AlignArgs) -> CliResult<()> {
    let set = load(&args.data)?;
    let imp = importance_matrix(&set, args.bins.config())?;
    let alignment = align(&imp, args.align.into())?;
    let names: Vec<String> = set.schema().factors().iter().map(|f| f.name.clone()).collect();
    write_atomic(&args.out, hinton_svg(&imp, &alignment, Some(&names)).as_bytes())?;
    print!("{}", hinton_text(&imp, &alignment, Some(&names)));
    Ok(())
}

fn cmd_cg(args: CgArgs) -> CliResult<()> {
    let train = load(&args.data)?;
    let pairs = CgPair::parse_list(&args.pairs, train.schema())?;
    if pairs.is_empty() {
        return Err(invalid("--pairs is empty"));
    }
    let kinds: Vec<ProbeKind> = match args.probe {
        ProbeArg::Linear => vec![ProbeKind::Linear],
        ProbeArg::Mlp => vec![ProbeKind::Mlp],
        ProbeArg::Both => vec![ProbeKind::Mlp, ProbeKind::Linear],
    };
    let mut config = CgConfig::default();
    config.train.seed = args.seed;
    config.control_seed = args.seed;
    let suite = match &args.test_data {
        None => run_cg_suite(&train, &pairs, &kinds, &config)?,
        Some(test_path) => {
            let (csv, schema) = resolve_data(test_path, args.data.schema.as_deref());
            let test = load_pair(&csv, &schema)?;
            run_cg_suite_presplit(&train, &test, &pairs, &kinds, &config)?
        }
    };
    write_json(&args.out, &suite)?;
    print!("{}", suite.text_table());
    Ok(())
}

fn cmd_correlate(args: CorrelateArgs) -> CliResult<()> {
    let reports: Vec<MetricReport> = args.reports.iter().map(|p| read_json(p)).collect::<CliResult<_>>()?;
    let cg: Vec<CgSuiteResult> = args.cg.iter().map(|p| read_json(p)).collect::<CliResult<_>>()?;
    let baseline = match (args.aggregate, args.subset.is_some()) {
        (AggregateArg::Mean, false) => BaselineAggregation::MeanAll,
        (AggregateArg::Mean, true) => BaselineAggregation::MeanSubset,
        (AggregateArg::Product, _) => BaselineAggregation::ProductSubset,
    };
    let options = CorrelationOptions {
        subset: args.subset,
        baseline,
        probe: match args.probe {
            TargetProbeArg::Linear => ProbeKind::Linear,
            TargetProbeArg::Mlp => ProbeKind::Mlp,
        },
        columns: args.columns,
    };
    let table = correlate_metrics_with_cg(&reports, &cg, &options)?;
    write_json(&args.out, &table)?;
    print!("{}", table.text_table());
    Ok(())
}

fn label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_report(args: ReportArgs) -> CliResult<()> {
    if args.metrics.is_empty() && args.cg.is_empty() && args.correlation.is_none() {
        return Err(invalid("nothing to report: pass --metrics, --cg or --correlation"));
    }
    let metrics: Vec<(String, MetricReport)> = args
        .metrics
        .iter()
        .map(|p| Ok((label(p), read_json(p)?)))
        .collect::<CliResult<_>>()?;
    let cg: Vec<(String, CgSuiteResult)> = args
        .cg
        .iter()
        .map(|p| Ok((label(p), read_json(p)?)))
        .collect::<CliResult<_>>()?;
    let correlation: Option<CorrelationTable> = args.correlation.as_deref().map(read_json).transpose()?;
    let text = render_report(&metrics, &cg, correlation.as_ref());
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    if let Ok(value) = std::env::var("DETANGLE_THREADS") {
        let threads: usize = value
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| invalid(format!("DETANGLE_THREADS must be a positive integer, got `{value}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| invalid(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Align(a) => cmd_align(a),
        Command::Cg(a) => cmd_cg(a),
        Command::Correlate(a) => cmd_correlate(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
