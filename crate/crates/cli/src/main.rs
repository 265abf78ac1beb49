//! `deepfa` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 component failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use deepfa_core::data::{load_dataset, load_features, stratified_split, write_split, DataError, DatasetFormat};
use deepfa_core::driver::{run_grid, write_grid, write_embedding_csv, write_loss_trace_csv, RunError};
use deepfa_core::extractor::{ExtractorError, ExtractorKind};
use deepfa_core::report::plot::{render_plot, ColorMode, PlotSpec, PlotStyle};
use deepfa_core::report::report_from_dirs;
use deepfa_core::tsne::{tsne_embed_traced, TsneError};
use deepfa_core::{Dataset, ExperimentConfig, Mode};

#[derive(Parser, Debug)]
#[command(name = "deepfa", version, about = "Semi-supervised annotation by feature-space projection and label propagation")]
struct Cli {
    /// Seed for splits, projection and extractor training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file whose keys mirror the experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stratified S/U/T split of a dataset.
    Split(SplitArgs),
    /// Run baseline, deepfa or deepfa-loop over one or more supervised fractions.
    Run(RunArgs),
    /// Project a feature file to 2-D with t-SNE.
    Project(ProjectArgs),
    /// Render an embedding as an SVG scatter plot.
    Plot(PlotArgs),
    /// Summarize run directories into one CSV table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Dataset file (`.csv`, or `.dfa` with a `.labels.csv` sidecar).
    #[arg(long)]
    input: PathBuf,
    /// Override format detection: csv or dfa.
    #[arg(long)]
    format: Option<DatasetFormat>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Supervised fraction.
    #[arg(long)]
    x: Option<f64>,
    /// Test fraction.
    #[arg(long)]
    test: Option<f64>,
    /// Output directory; receives split.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// baseline, deepfa, deepfa-loop or all.
    #[arg(long, default_value = "all")]
    mode: String,
    /// Comma-separated supervised fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.03,0.04,0.05")]
    x: Vec<f64>,
    #[arg(long)]
    test: Option<f64>,
    /// Rounds for deepfa-loop.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    partitions: Option<usize>,
    /// `builtin` or `cmd:<program> [args...]`.
    #[arg(long)]
    extractor: Option<String>,
    /// Training epochs per extractor fit.
    #[arg(long)]
    epochs: Option<usize>,
    /// Scratch directory for external extractors.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    /// Name recorded in the summary (default: input file stem).
    #[arg(long)]
    dataset_name: Option<String>,
    /// Skip SVG plots.
    #[arg(long)]
    no_plots: bool,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    /// Feature file: `.dfa`, or CSV with an `id` column followed by features.
    #[arg(long)]
    input: PathBuf,
    /// Embedding CSV (`id,y0,y1`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Also write the KL trace (`iteration,kl`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    embedding: PathBuf,
    /// labels.csv from a propagation round.
    #[arg(long)]
    labels: PathBuf,
    /// Optional `id,confidence` file.
    #[arg(long)]
    confidence: Option<PathBuf>,
    /// label or confidence.
    #[arg(long, default_value = "label")]
    color: ColorMode,
    #[arg(long, default_value_t = 800)]
    width: u32,
    #[arg(long, default_value_t = 800)]
    height: u32,
    #[arg(long, default_value_t = 3.0)]
    radius: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directories, each holding a summary.json.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Component(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Component(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Component(e) => e,
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Spec(_) => Failure::Usage(e.into()),
            _ => Failure::Data(e.into()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Data(d) => d.into(),
            RunError::Config(_) => Failure::Usage(e.into()),
            RunError::Tsne(TsneError::InvalidParams(_)) => Failure::Usage(e.into()),
            RunError::Extractor(ExtractorError::Config(_)) => Failure::Usage(e.into()),
            RunError::Io { .. } | RunError::Output { .. } => Failure::Data(e.into()),
            _ => Failure::Component(e.into()),
        }
    }
}

impl From<TsneError> for Failure {
    fn from(e: TsneError) -> Self {
        RunError::from(e).into()
    }
}

type Outcome = Result<(), Failure>;

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::Data)?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::Usage)
}

fn apply_seed(cfg: &mut ExperimentConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.split.seed = s;
        cfg.base_seed = s;
        cfg.tsne.seed = s;
        cfg.extractor.seed = s;
    }
}

fn load(input: &InputArgs) -> Result<Dataset, Failure> {
    let format = input
        .format
        .unwrap_or_else(|| DatasetFormat::from_path(&input.input));
    Ok(load_dataset(&input.input, format)?)
}

fn cmd_split(cli: &Cli, args: &SplitArgs) -> Outcome {
    let mut cfg = load_config(cli.config.as_deref())?;
    apply_seed(&mut cfg, cli.seed);
    if let Some(x) = args.x {
        cfg.split.x = x;
    }
    if let Some(t) = args.test {
        cfg.split.test_frac = t;
    }
    let ds = load(&args.input)?;
    let split = stratified_split(&ds, &cfg.split)?;
    let path = args.out.join("split.csv");
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(Failure::Data)?;
    write_split(&path, &ds, &split)?;
    let (s, u, t) = split.counts();
    println!("S={s} U={u} T={t}");
    Ok(())
}

fn parse_modes(mode: &str) -> Result<Vec<Mode>, Failure> {
    if mode == "all" {
        return Ok(Mode::ALL.to_vec());
    }
    mode.split(',')
        .map(|m| m.trim().parse::<Mode>().map_err(|e| Failure::Usage(anyhow!(e))))
        .collect()
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> Outcome {
    let mut cfg = load_config(cli.config.as_deref())?;
    apply_seed(&mut cfg, cli.seed);
    if let Some(t) = args.test {
        cfg.split.test_frac = t;
    }
    if let Some(i) = args.iterations {
        cfg.iterations = i;
    }
    if let Some(p) = args.partitions {
        cfg.partitions = p;
    }
    if let Some(e) = args.epochs {
        cfg.extractor.epochs = e;
    }
    match args.extractor.as_deref() {
        None => {}
        Some("builtin") => {
            cfg.extractor.kind = ExtractorKind::BuiltinMlp;
            cfg.extractor.external_command = None;
        }
        Some(cmd) if cmd.starts_with("cmd:") => {
            cfg.extractor.kind = ExtractorKind::External;
            cfg.extractor.external_command = Some(cmd.to_string());
        }
        Some(other) => {
            return Err(Failure::Usage(anyhow!(
                "--extractor must be `builtin` or `cmd:<command>`, got {other:?}"
            )))
        }
    }
    if args.work_dir.is_some() {
        cfg.extractor.work_dir = args.work_dir.clone();
    }
    let modes = parse_modes(&args.mode)?;
    let ds = load(&args.input)?;
    let name = args.dataset_name.clone().unwrap_or_else(|| {
        args.input
            .input
            .file_stem()
            .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned())
    });

    let results = run_grid(&ds, &args.x, &modes, &cfg)?;
    write_grid(&args.out, &name, &ds, &results, !args.no_plots)?;
    let mut failed = None;
    for r in &results {
        match r.final_aggregate() {
            Some(a) => println!(
                "{} x={}: accuracy {:.4}±{:.4} kappa {:.4}±{:.4}",
                r.mode, r.x, a.accuracy.mean, a.accuracy.std, a.kappa.mean, a.kappa.std
            ),
            None => println!("{} x={}: no partition completed", r.mode, r.x),
        }
        for p in &r.partitions {
            if let Some(e) = &p.error {
                eprintln!("{} x={} partition {}: {e}", r.mode, r.x, p.partition);
                failed.get_or_insert_with(|| e.clone());
            }
        }
    }
    match failed {
        Some(e) => Err(Failure::Component(anyhow!(e))),
        None => Ok(()),
    }
}

fn cmd_project(cli: &Cli, args: &ProjectArgs) -> Outcome {
    let mut cfg = load_config(cli.config.as_deref())?;
    apply_seed(&mut cfg, cli.seed);
    let mut params = cfg.tsne;
    if let Some(p) = args.perplexity {
        params.perplexity = p;
    }
    if let Some(i) = args.iterations {
        params.iterations = i;
    }
    let (ids, features) = load_features(&args.input)?;
    let out = tsne_embed_traced(&features, &params)?;
    let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
    write_embedding_csv(&args.out, &ids, &out.embedding)?;
    if let Some(trace) = &args.trace {
        write_loss_trace_csv(trace, &out.trace)?;
    }
    if !out.unconverged_rows.is_empty() {
        eprintln!(
            "warning: perplexity search did not converge for {} rows",
            out.unconverged_rows.len()
        );
    }
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Outcome {
    let spec = PlotSpec {
        embedding: args.embedding.clone(),
        labels: args.labels.clone(),
        confidence: args.confidence.clone(),
        style: PlotStyle {
            color_mode: args.color,
            width: args.width,
            height: args.height,
            radius: args.radius,
        },
    };
    let svg = render_plot(&spec).map_err(|e| Failure::Data(e.into()))?;
    std::fs::write(&args.out, svg)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(Failure::Data)
}

fn cmd_report(args: &ReportArgs) -> Outcome {
    let table = report_from_dirs(&args.runs).map_err(|e| Failure::Data(e.into()))?;
    match &args.out {
        Some(path) => std::fs::write(path, table)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Data),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Outcome {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.into()))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(_threads: Option<usize>) -> Outcome {
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Split(a) => cmd_split(cli, a),
        Command::Run(a) => cmd_run(cli, a),
        Command::Project(a) => cmd_project(cli, a),
        Command::Plot(a) => cmd_plot(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
