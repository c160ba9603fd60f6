//! Command-line pipeline for error-type based GEC system combination:
//! learn a selection matrix from training M2 files, apply it to system
//! outputs, score the result, and run the split-half analysis protocol.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 solver
//! error. All file outputs are written atomically (temp file + rename).
//! Set `GEC_COMBINE_LOG=debug` (or any `env_logger` filter) for verbosity.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use gec_combine::combiner::{
    combine_corpus, CombineOutput, ConflictMode, ConflictPolicy, UnknownTypePolicy,
};
use gec_combine::counting::{build_count_matrix, AnnotatorPolicy, CountMatrix};
use gec_combine::evaluation::{evaluate, split_half_analysis, EvalReport};
use gec_combine::m2::{parse_m2, serialize_m2, CorpusEdits};
use gec_combine::solver::{solve, Backend, SelectionMatrix, SolveResult, SolverConfig};

#[derive(Parser)]
#[command(
    name = "gec-combine",
    version,
    about = "Combine grammatical-error-correction systems by selecting the best system per error type"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a selection matrix from training M2 files
    Optimize(OptimizeArgs),
    /// Apply a selection matrix to system M2 files
    Apply(ApplyArgs),
    /// Score a hypothesis M2 file against a reference M2 file
    Score(ScoreArgs),
    /// Train on the first half of a corpus, combine and classify the second
    Analyze(AnalyzeArgs),
    /// Optimize, apply, and score in one run
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct InputArgs {
    /// System output files in M2 format (labels are the file stems)
    #[arg(long = "systems", num_args = 1.., required = true, value_name = "M2")]
    systems: Vec<PathBuf>,
    /// Reference (gold) file in M2 format
    #[arg(long = "ref", value_name = "M2")]
    reference: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    /// F-score weight; 0.5 weights precision twice as much as recall
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = BackendArg::Dinkelbach)]
    backend: BackendArg,
    /// Reference annotator policy: "best" per sentence, or a fixed id
    #[arg(long, default_value = "best", value_parser = parse_annotator)]
    annotator: AnnotatorArg,
    /// Let the solver leave an error type uncorrected (virtual system)
    #[arg(long)]
    allow_abstain: bool,
}

#[derive(Args)]
struct ConflictArgs {
    /// How to resolve overlapping candidate edits
    #[arg(long, value_enum, default_value_t = ConflictArg::Random)]
    conflict: ConflictArg,
    /// Seed for the random conflict mode
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Handling of edit types the selection has never seen
    #[arg(long, value_enum, default_value_t = UnknownArg::Drop)]
    unknown_types: UnknownArg,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Directory for selection.json, counts.json/tsv, solve.json
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ApplyArgs {
    /// System output files in M2 format (labels are the file stems)
    #[arg(long = "systems", num_args = 1.., required = true, value_name = "M2")]
    systems: Vec<PathBuf>,
    /// Selection matrix produced by `optimize`
    #[arg(long, value_name = "JSON")]
    selection: PathBuf,
    #[command(flatten)]
    conflict: ConflictArgs,
    /// Directory for combined.m2, corrected.txt, manifest.json
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Hypothesis file in M2 format
    #[arg(long, value_name = "M2")]
    hyp: PathBuf,
    /// Reference (gold) file in M2 format
    #[arg(long = "ref", value_name = "M2")]
    reference: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value = "best", value_parser = parse_annotator)]
    annotator: AnnotatorArg,
    /// Also print the per-type breakdown
    #[arg(long)]
    per_type: bool,
    /// Optional directory for report.json
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    conflict: ConflictArgs,
    /// Split protocol (training half first)
    #[arg(long, value_enum, default_value_t = SplitArg::FirstHalfTrain)]
    split: SplitArg,
    /// Directory for the training artifacts, combined outputs, analysis.json
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    conflict: ConflictArgs,
    /// Test-time system files (defaults to the training systems)
    #[arg(long = "test-systems", num_args = 1.., value_name = "M2")]
    test_systems: Vec<PathBuf>,
    /// Test-time reference (defaults to the training reference)
    #[arg(long = "test-ref", value_name = "M2")]
    test_reference: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(ValueEnum, Clone, Copy)]
enum BackendArg {
    Exhaustive,
    Dinkelbach,
}

impl From<BackendArg> for Backend {
    fn from(arg: BackendArg) -> Backend {
        match arg {
            BackendArg::Exhaustive => Backend::Exhaustive,
            BackendArg::Dinkelbach => Backend::Dinkelbach,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum ConflictArg {
    Random,
    Lowest,
    Skip,
}

impl From<ConflictArg> for ConflictMode {
    fn from(arg: ConflictArg) -> ConflictMode {
        match arg {
            ConflictArg::Random => ConflictMode::Random,
            ConflictArg::Lowest => ConflictMode::LowestSystemIndex,
            ConflictArg::Skip => ConflictMode::SkipAll,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum UnknownArg {
    Drop,
    Error,
}

impl From<UnknownArg> for UnknownTypePolicy {
    fn from(arg: UnknownArg) -> UnknownTypePolicy {
        match arg {
            UnknownArg::Drop => UnknownTypePolicy::Drop,
            UnknownArg::Error => UnknownTypePolicy::Error,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum SplitArg {
    FirstHalfTrain,
}

#[derive(Clone, Copy)]
struct AnnotatorArg(AnnotatorPolicy);

fn parse_annotator(value: &str) -> Result<AnnotatorArg, String> {
    if value == "best" {
        return Ok(AnnotatorArg(AnnotatorPolicy::Best));
    }
    value
        .parse::<u32>()
        .map(|id| AnnotatorArg(AnnotatorPolicy::Fixed(id)))
        .map_err(|_| format!("expected \"best\" or an annotator id, got {value:?}"))
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Core(gec_combine::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(err) => write!(f, "{err}"),
        }
    }
}

impl From<gec_combine::Error> for CliError {
    fn from(err: gec_combine::Error) -> Self {
        CliError::Core(err)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use gec_combine::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Core(err) => match err {
                E::Parse { .. }
                | E::Alignment(_)
                | E::Contract(_)
                | E::Dimension(_)
                | E::UnknownErrorType { .. }
                | E::UnknownSystem(_)
                | E::Artifact(_) => 2,
                E::EnumerationCap { .. } | E::NonConvergence { .. } => 3,
                E::Config(_) => 1,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter("GEC_COMBINE_LOG")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Apply(args) => cmd_apply(args),
        Command::Score(args) => cmd_score(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    }
}

// ---------------------------------------------------------------------------
// File plumbing
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes via a temp file in the target directory plus rename, so an
/// interrupted run never leaves a truncated artifact.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io_err = |source: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents.as_bytes()).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// System label: the file stem (`outputs/kakao.m2` -> `kakao`).
fn system_label(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| CliError::Usage(format!("cannot derive a system label from {}", path.display())))
}

fn load_corpus(path: &Path, label: &str) -> Result<CorpusEdits, CliError> {
    let text = read_file(path)?;
    Ok(parse_m2(&text, label)?)
}

fn load_systems(paths: &[PathBuf]) -> Result<Vec<CorpusEdits>, CliError> {
    let mut corpora = Vec::with_capacity(paths.len());
    let mut labels: Vec<String> = Vec::new();
    for path in paths {
        let label = system_label(path)?;
        if labels.contains(&label) {
            return Err(CliError::Usage(format!(
                "two system files share the label {label:?}; rename one of them"
            )));
        }
        corpora.push(load_corpus(path, &label)?);
        labels.push(label);
    }
    Ok(corpora)
}

fn load_reference(path: &Path) -> Result<CorpusEdits, CliError> {
    load_corpus(path, "reference")
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveSummary<'a> {
    objective: f64,
    alpha: f64,
    backend: Backend,
    iterations: usize,
    degenerate: bool,
    lambda_trace: &'a [f64],
}

fn run_optimize(
    systems: &[CorpusEdits],
    reference: &CorpusEdits,
    solver: &SolverArgs,
    out_dir: &Path,
) -> Result<(CountMatrix, SolveResult), CliError> {
    let counts = build_count_matrix(systems, reference, solver.alpha, solver.annotator.0)?;
    let config = SolverConfig {
        alpha: solver.alpha,
        backend: solver.backend.into(),
        allow_abstain: solver.allow_abstain,
        ..SolverConfig::default()
    };
    let result = solve(&counts, &config)?;
    write_atomic(&out_dir.join("selection.json"), &result.selection.to_json())?;
    write_atomic(&out_dir.join("counts.json"), &counts.to_json())?;
    write_atomic(&out_dir.join("counts.tsv"), &counts.to_tsv())?;
    write_atomic(&out_dir.join("selection.tsv"), &result.selection.to_tsv(&counts)?)?;
    let summary = SolveSummary {
        objective: result.objective,
        alpha: solver.alpha,
        backend: result.backend_used,
        iterations: result.iterations,
        degenerate: result.degenerate,
        lambda_trace: &result.lambda_trace,
    };
    write_atomic(
        &out_dir.join("solve.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok((counts, result))
}

fn print_optimize_summary(counts: &CountMatrix, result: &SolveResult, alpha: f64) {
    println!(
        "{} systems, {} error types; backend {} ({} iterations){}",
        counts.systems(),
        counts.types(),
        result.backend_used,
        result.iterations,
        if result.degenerate { "; all counts zero" } else { "" }
    );
    println!("training objective F_{alpha} = {:.6}", result.objective);
    let width = counts
        .type_index()
        .types()
        .iter()
        .map(|t| t.len())
        .max()
        .unwrap_or(4);
    for (j, ty) in counts.type_index().types().iter().enumerate() {
        let label = &result.selection.system_ids()[result.selection.assignment()[j]];
        let row = counts.system_ids().iter().position(|s| s == label);
        match row {
            Some(i) => println!(
                "  {ty:<width$} -> {label}  (tp {}, fp {}, fn {})",
                counts.tp(i, j),
                counts.fp(i, j),
                counts.fn_(i, j)
            ),
            None => println!("  {ty:<width$} -> {label}"),
        }
    }
}

fn cmd_optimize(args: OptimizeArgs) -> Result<(), CliError> {
    let systems = load_systems(&args.input.systems)?;
    let reference = load_reference(&args.input.reference)?;
    let (counts, result) = run_optimize(&systems, &reference, &args.solver, &args.out_dir)?;
    print_optimize_summary(&counts, &result, args.solver.alpha);
    println!("artifacts written to {}", args.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    selection_file: String,
    selection_sha256: String,
    policy: &'a ConflictPolicy,
    unknown_types: UnknownTypePolicy,
    stats: gec_combine::combiner::CombineStats,
}

fn run_apply(
    systems: &[CorpusEdits],
    selection_path: &Path,
    conflict: &ConflictArgs,
    out_dir: &Path,
) -> Result<CombineOutput, CliError> {
    let selection_bytes = read_file(selection_path)?;
    let selection = SelectionMatrix::from_json(&selection_bytes)?;
    let policy = ConflictPolicy {
        mode: conflict.conflict.into(),
        seed: conflict.seed,
    };
    let output = combine_corpus(systems, &selection, &policy, conflict.unknown_types.into())?;
    write_atomic(&out_dir.join("combined.m2"), &serialize_m2(&output.combined))?;
    write_atomic(&out_dir.join("corrected.txt"), &output.corrected_text())?;
    let manifest = Manifest {
        selection_file: selection_path.display().to_string(),
        selection_sha256: hex::encode(Sha256::digest(selection_bytes.as_bytes())),
        policy: &policy,
        unknown_types: conflict.unknown_types.into(),
        stats: output.stats,
    };
    write_atomic(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(output)
}

fn cmd_apply(args: ApplyArgs) -> Result<(), CliError> {
    let systems = load_systems(&args.systems)?;
    let output = run_apply(&systems, &args.selection, &args.conflict, &args.out_dir)?;
    println!(
        "combined {} sentences: kept {} edits, resolved {} conflict clusters, dropped {} edits",
        output.stats.sentences,
        output.stats.kept_edits,
        output.stats.conflict_clusters,
        output.stats.edits_dropped_in_conflicts
    );
    println!("outputs written to {}", args.out_dir.display());
    Ok(())
}

fn write_report(report: &EvalReport, out_dir: Option<&Path>, per_type: bool) -> Result<(), CliError> {
    if let Some(dir) = out_dir {
        write_atomic(&dir.join("report.json"), &report.to_json())?;
    }
    print!("{}", report.to_text_table(per_type));
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    let hyp = load_corpus(&args.hyp, &system_label(&args.hyp)?)?;
    let reference = load_reference(&args.reference)?;
    let report = evaluate(&hyp, &reference, args.alpha, args.annotator.0)?;
    write_report(&report, args.out_dir.as_deref(), args.per_type)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let SplitArg::FirstHalfTrain = args.split;
    let systems = load_systems(&args.input.systems)?;
    if systems.len() != 2 {
        return Err(CliError::Usage(format!(
            "analyze compares exactly two systems, got {}",
            systems.len()
        )));
    }
    let reference = load_reference(&args.input.reference)?;
    let total = reference.len();
    if total < 2 {
        return Err(CliError::Core(gec_combine::Error::Alignment(format!(
            "cannot split a corpus of {total} sentence(s) into two halves"
        ))));
    }
    let mid = total / 2;
    let train: Vec<CorpusEdits> = systems.iter().map(|s| s.slice(0..mid)).collect();
    let test: Vec<CorpusEdits> = systems.iter().map(|s| s.slice(mid..total)).collect();
    let train_ref = reference.slice(0..mid);
    let test_ref = reference.slice(mid..total);

    let (counts, result) = run_optimize(&train, &train_ref, &args.solver, &args.out_dir)?;
    print_optimize_summary(&counts, &result, args.solver.alpha);
    let output = run_apply(
        &test,
        &args.out_dir.join("selection.json"),
        &args.conflict,
        &args.out_dir,
    )?;
    let report = evaluate(&output.combined, &test_ref, args.solver.alpha, args.solver.annotator.0)?;
    write_atomic(&args.out_dir.join("report.json"), &report.to_json())?;
    let analysis = split_half_analysis(
        &test[0],
        &test[1],
        &test_ref,
        &output.combined,
        args.solver.alpha,
        args.solver.annotator.0,
    )?;
    write_atomic(&args.out_dir.join("analysis.json"), &analysis.to_json())?;
    println!(
        "\ntrained on {mid} sentences, tested on {}; combined test F_{} = {:.4}",
        total - mid,
        args.solver.alpha,
        report.f_alpha
    );
    print!("{}", analysis.to_text());
    println!("artifacts written to {}", args.out_dir.display());
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> Result<(), CliError> {
    let systems = load_systems(&args.input.systems)?;
    let reference = load_reference(&args.input.reference)?;
    let (counts, result) = run_optimize(&systems, &reference, &args.solver, &args.out_dir)?;
    print_optimize_summary(&counts, &result, args.solver.alpha);

    let test_systems = if args.test_systems.is_empty() {
        systems
    } else {
        load_systems(&args.test_systems)?
    };
    let test_reference = match &args.test_reference {
        Some(path) => load_reference(path)?,
        None => reference,
    };
    let output = run_apply(
        &test_systems,
        &args.out_dir.join("selection.json"),
        &args.conflict,
        &args.out_dir,
    )?;
    let report = evaluate(
        &output.combined,
        &test_reference,
        args.solver.alpha,
        args.solver.annotator.0,
    )?;
    write_atomic(&args.out_dir.join("report.json"), &report.to_json())?;
    println!();
    print!("{}", report.to_text_table(false));
    println!("artifacts written to {}", args.out_dir.display());
    Ok(())
}
