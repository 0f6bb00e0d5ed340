//! Command-line front end for the consumption-pattern simulator.
//!
//! Subcommands cover the full pipeline: `simulate` turns an initial pattern
//! into a generated trace, `cluster` groups image embeddings by visual
//! similarity, `sample` attaches concrete images to a trace, `evaluate`
//! scores two patterns against each other, and `experiment` runs the whole
//! seeded evaluation grid and writes summary reports.
//!
//! Exit codes: 0 on success, 2 for input problems (bad flags, unreadable or
//! malformed files), 1 for internal failures.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pattern_sim::clustering::{
    build_knn_graph, parse_assignments, parse_embeddings, pic_cluster, ClassClusters,
    ClusterAssignment, DEFAULT_ALPHA, DEFAULT_K, DEFAULT_MAX_ITERS, DEFAULT_SIGMA, DEFAULT_TOL,
};
use pattern_sim::config::{Method, SimulationConfig};
use pattern_sim::experiment::{run_experiment, ExperimentError, ExperimentSpec};
use pattern_sim::markov::{
    parse_trace_jsonl, simulate, simulate_random_baseline, StepTag, TraceRecord,
};
use pattern_sim::metrics::{dtw_distance, empirical_distribution, kl_divergence, union_support};
use pattern_sim::pattern::{parse_pattern, ClassAlphabet};
use pattern_sim::rng::RandomSource;
use pattern_sim::sampler::{fit_preference, sample_images, DatasetManifest};
use pattern_sim::synthetic;

/// Environment variable consulted for the seed when `--seed` is absent.
const SEED_ENV: &str = "PATTERN_SIM_SEED";

#[derive(Parser)]
#[command(
    name = "pattern-sim",
    version,
    about = "Simulate food consumption patterns and sample matching images"
)]
struct Cli {
    /// Base random seed; falls back to PATTERN_SIM_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a consumption pattern from an initial pattern file.
    Simulate(SimulateArgs),
    /// Cluster per-class image embeddings by visual similarity.
    Cluster(ClusterArgs),
    /// Attach concrete images to a simulated trace.
    Sample(SampleArgs),
    /// Score two pattern files against each other.
    Evaluate(EvaluateArgs),
    /// Run the seeded evaluation grid and write summary reports.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Initial pattern file: class names separated by commas or newlines.
    #[arg(long)]
    initial: PathBuf,
    /// Simulation method.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Number of generated events appended after the initial pattern.
    #[arg(long, default_value_t = SimulationConfig::DEFAULT_GENERATED_LENGTH)]
    length: usize,
    /// Allow classes never seen in the initial pattern to be introduced.
    #[arg(long)]
    novelty: bool,
    /// Write the final transition matrix as CSV to this path.
    #[arg(long)]
    matrix_out: Option<PathBuf>,
    /// Write the trace here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Original,
    Modified,
    #[value(name = "random_baseline")]
    RandomBaseline,
}

impl From<MethodArg> for Method {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Original => Method::Original,
            MethodArg::Modified => Method::Modified,
            MethodArg::RandomBaseline => Method::RandomBaseline,
        }
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// Embedding file(s), one per class: header `id dim <d>`, then
    /// `<id> <v1> ... <vd>` per line. Repeat the flag for several classes.
    #[arg(long, required = true)]
    embeddings: Vec<PathBuf>,
    /// Class name override; only valid with a single embedding file
    /// (defaults to each file's stem).
    #[arg(long)]
    class: Option<String>,
    /// Neighbors per image in the affinity graph.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Gaussian kernel bandwidth for affinity weights.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Write the assignment CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Trace file in the JSONL format written by `simulate`.
    #[arg(long)]
    trace: PathBuf,
    /// Dataset manifest: a `class,image_id` CSV file, or a directory whose
    /// subdirectories are classes holding one file per image.
    #[arg(long)]
    manifest: PathBuf,
    /// Cluster assignment CSV as written by `cluster`.
    #[arg(long)]
    assignments: PathBuf,
    /// Optional `class,image_id` CSV naming the images behind the initial
    /// pattern; classes listed here get their preference fitted from it.
    #[arg(long)]
    initial_images: Option<PathBuf>,
    /// Write the timeline CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// First pattern file (the reference distribution for divergence).
    #[arg(long)]
    a: PathBuf,
    /// Second pattern file (the candidate being scored).
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON file with grid settings; omitted fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest (CSV file or class directory); a built-in synthetic
    /// 20-class manifest is used when absent.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory receiving report.csv and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which report to print on stdout.
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    format: ReportFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

/// Failures split by who must act: `Input` is the caller's data or flags
/// (exit 2), `Internal` is this program or its environment (exit 1).
enum CliError {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl CliError {
    fn input(err: impl Into<anyhow::Error>) -> Self {
        CliError::Input(err.into())
    }

    fn internal(err: impl Into<anyhow::Error>) -> Self {
        CliError::Internal(err.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => run_simulate(args, cli.seed),
        Command::Cluster(args) => run_cluster(args),
        Command::Sample(args) => run_sample(args, cli.seed),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Experiment(args) => run_experiment_command(args, cli.seed),
    }
}

/// Explicit flag first, then the environment variable, then zero.
fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text.trim().parse().map_err(|_| {
            CliError::Input(anyhow!("{SEED_ENV} is not an unsigned integer: {text:?}"))
        }),
        Err(_) => Ok(0),
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(CliError::Input)
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Internal)
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_output(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn run_simulate(args: SimulateArgs, seed: Option<u64>) -> Result<(), CliError> {
    let seed = resolve_seed(seed)?;
    let text = read_input(&args.initial)?;
    let mut alphabet = ClassAlphabet::new();
    let initial = parse_pattern(&text, &mut alphabet)
        .with_context(|| format!("invalid pattern in {}", args.initial.display()))
        .map_err(CliError::Input)?;

    let method = Method::from(args.method);
    if method == Method::RandomBaseline {
        if args.novelty {
            return Err(CliError::Input(anyhow!(
                "--novelty is not available for random_baseline: the baseline draws \
                 uniformly and has no transition matrix to grow"
            )));
        }
        if args.matrix_out.is_some() {
            return Err(CliError::Input(anyhow!(
                "--matrix-out is not available for random_baseline: the baseline \
                 does not build a transition matrix"
            )));
        }
        let mut rng = RandomSource::new(seed);
        let pattern = simulate_random_baseline(alphabet.len(), args.length, &mut rng);
        let mut jsonl = String::new();
        for (t, &event) in pattern.events.iter().enumerate() {
            let record = TraceRecord {
                t,
                class_name: alphabet.name(event).to_string(),
                tag: StepTag::Baseline,
            };
            jsonl.push_str(&serde_json::to_string(&record).expect("trace records serialize"));
            jsonl.push('\n');
        }
        return emit(args.out.as_deref(), &jsonl);
    }

    let config = SimulationConfig::new(method, seed)
        .with_length(args.length)
        .with_new_classes(args.novelty);
    let trace = simulate(&initial, &alphabet, &config, None)
        .context("simulation rejected the initial pattern")
        .map_err(CliError::Input)?;

    if let Some(matrix_path) = &args.matrix_out {
        let csv = trace
            .final_matrix()
            .to_csv(&trace.alphabet)
            .context("final transition matrix cannot be serialized")
            .map_err(CliError::Internal)?;
        write_output(matrix_path, &csv)?;
    }
    emit(args.out.as_deref(), &trace.to_jsonl())
}

fn run_cluster(args: ClusterArgs) -> Result<(), CliError> {
    if args.class.is_some() && args.embeddings.len() > 1 {
        return Err(CliError::Input(anyhow!(
            "--class names a single class; with several embedding files the \
             class is taken from each file's name"
        )));
    }
    let mut csv = String::from("image_id,class,cluster\n");
    for path in &args.embeddings {
        let class = match &args.class {
            Some(name) => name.clone(),
            None => path
                .file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_string)
                .ok_or_else(|| {
                    CliError::Input(anyhow!(
                        "cannot derive a class name from {}; pass --class",
                        path.display()
                    ))
                })?,
        };
        let text = read_input(path)?;
        let embeddings = parse_embeddings(&text, class.clone())
            .with_context(|| format!("invalid embeddings in {}", path.display()))
            .map_err(CliError::Input)?;
        let ids = embeddings.ids().to_vec();
        let assignment = if ids.len() == 1 {
            ClusterAssignment::from_components(vec![0])
        } else {
            let graph = build_knn_graph(&embeddings, args.k, args.sigma)
                .with_context(|| format!("cannot build the affinity graph for {class}"))
                .map_err(CliError::Input)?;
            pic_cluster(&graph, DEFAULT_ALPHA, DEFAULT_MAX_ITERS, DEFAULT_TOL)
        };
        let clusters = ClassClusters {
            class,
            ids,
            assignment,
        };
        // Drop the header each per-class block repeats.
        for line in clusters.to_csv().lines().skip(1) {
            csv.push_str(line);
            csv.push('\n');
        }
    }
    emit(args.out.as_deref(), &csv)
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    if path.is_dir() {
        DatasetManifest::from_directory(path)
            .with_context(|| format!("invalid dataset directory {}", path.display()))
            .map_err(CliError::Input)
    } else {
        let text = read_input(path)?;
        DatasetManifest::from_csv(&text)
            .with_context(|| format!("invalid manifest CSV {}", path.display()))
            .map_err(CliError::Input)
    }
}

/// Parse a `class,image_id` CSV into per-class image lists, keeping row order.
fn parse_class_images(text: &str, path: &Path) -> Result<HashMap<String, Vec<String>>, CliError> {
    let mut map: HashMap<String, Vec<String>> = HashMap::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == "class,image_id" {
            continue;
        }
        let (class, id) = line.split_once(',').ok_or_else(|| {
            CliError::Input(anyhow!(
                "{} line {}: expected `class,image_id`, found {line:?}",
                path.display(),
                number + 1
            ))
        })?;
        map.entry(class.trim().to_string())
            .or_default()
            .push(id.trim().to_string());
    }
    Ok(map)
}

fn run_sample(args: SampleArgs, seed: Option<u64>) -> Result<(), CliError> {
    let seed = resolve_seed(seed)?;
    let trace_text = read_input(&args.trace)?;
    let (pattern, alphabet, _tags) = parse_trace_jsonl(&trace_text)
        .with_context(|| format!("invalid trace in {}", args.trace.display()))
        .map_err(CliError::Input)?;
    let manifest = load_manifest(&args.manifest)?;
    let assignment_text = read_input(&args.assignments)?;
    let assignments = parse_assignments(&assignment_text)
        .with_context(|| format!("invalid assignments in {}", args.assignments.display()))
        .map_err(CliError::Input)?;
    let initial_images = match &args.initial_images {
        Some(path) => Some(parse_class_images(&read_input(path)?, path)?),
        None => None,
    };

    let mut rng = RandomSource::new(seed);
    let profile = fit_preference(initial_images.as_ref(), &assignments, &mut rng)
        .context("cannot fit the preference profile")
        .map_err(CliError::Input)?;
    let timeline = sample_images(
        &pattern,
        &alphabet,
        &manifest,
        &assignments,
        &profile,
        &mut rng,
    )
    .context("cannot sample images for the trace")
    .map_err(CliError::Input)?;
    emit(args.out.as_deref(), &timeline.to_csv())
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    // One shared alphabet so the two patterns' classes line up by name.
    let mut alphabet = ClassAlphabet::new();
    let text_a = read_input(&args.a)?;
    let pattern_a = parse_pattern(&text_a, &mut alphabet)
        .with_context(|| format!("invalid pattern in {}", args.a.display()))
        .map_err(CliError::Input)?;
    let text_b = read_input(&args.b)?;
    let pattern_b = parse_pattern(&text_b, &mut alphabet)
        .with_context(|| format!("invalid pattern in {}", args.b.display()))
        .map_err(CliError::Input)?;

    let dtw = dtw_distance(&pattern_a.events, &pattern_b.events)
        .context("cannot align the patterns")
        .map_err(CliError::Input)?
        .distance;
    let support = union_support(&pattern_a, &pattern_b);
    let p = empirical_distribution(&pattern_b, &support)
        .context("cannot build the candidate distribution")
        .map_err(CliError::Internal)?;
    let q = empirical_distribution(&pattern_a, &support)
        .context("cannot build the reference distribution")
        .map_err(CliError::Internal)?;
    let kl = kl_divergence(&p, &q)
        .context("cannot compare the distributions")
        .map_err(CliError::Internal)?;

    println!("{}", serde_json::json!({ "dtw": dtw, "kl": kl }));
    Ok(())
}

fn run_experiment_command(args: ExperimentArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = read_input(path)?;
            serde_json::from_str::<ExperimentSpec>(&text)
                .with_context(|| format!("invalid experiment config {}", path.display()))
                .map_err(CliError::Input)?
        }
        None => ExperimentSpec::default(),
    };
    // The flag (or its environment fallback) overrides the config file.
    if let Some(explicit) = seed {
        spec.seed = explicit;
    } else if std::env::var(SEED_ENV).is_ok() {
        spec.seed = resolve_seed(None)?;
    }

    let manifest = match &args.manifest {
        Some(path) => load_manifest(path)?,
        None => synthetic::manifest(20, 5),
    };

    let report = run_experiment(&spec, &manifest).map_err(|err| match err {
        ExperimentError::InvalidSpec(_) | ExperimentError::ManifestTooSmall { .. } => {
            CliError::input(err)
        }
        other => CliError::internal(other),
    })?;

    let csv = report.to_csv();
    let json = report.to_json();
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(CliError::Internal)?;
        write_output(&dir.join("report.csv"), &csv)?;
        write_output(&dir.join("report.json"), &json)?;
    }
    match args.format {
        ReportFormat::Csv => print!("{csv}"),
        ReportFormat::Json => print!("{json}"),
    }
    Ok(())
}
