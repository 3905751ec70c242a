//! The `flowstep` command line.
//!
//! Exit codes: 0 success, 1 verification found a divergence, 2 usage or
//! input/output error, 3 the analysis did not converge within the cap.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::cfg::{diff_graphs, ChangeBatch, ChangeError, ParseError, SuperGraph};
use crate::clients::{with_client, ClientSpec, MustCache};
use crate::engine::{run, Algorithm, EngineConfig, EngineError, RunReport};
use crate::incremental::{result_batch, run_incremental, ImpactReport, IncrementalError, Mode};
use crate::lattice::Analysis;
use crate::store::{FactStore, StoreError, StoreKey};
use crate::verify::verify;

#[derive(Debug, Parser)]
#[command(
    name = "flowstep",
    version,
    about = "Partitioned monotone dataflow analysis with incremental updates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze a whole CFG and write the converged facts to a store.
    Analyze(AnalyzeArgs),
    /// Compute the change file turning one CFG into another.
    Diff(DiffArgs),
    /// Update a store after a batch of CFG changes.
    Incremental(IncrementalArgs),
    /// Solve a CFG four ways and check that all agree.
    Verify(VerifyArgs),
    /// Print the facts held in a store.
    Show(ShowArgs),
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    /// rd, cp or cache.
    #[arg(long)]
    analysis: String,
    /// Number of cache sets (cache analysis only).
    #[arg(long, default_value_t = MustCache::DEFAULT_SETS)]
    sets: usize,
    /// Cache associativity (cache analysis only).
    #[arg(long, default_value_t = MustCache::DEFAULT_ASSOC)]
    assoc: u32,
}

#[derive(Debug, Args)]
struct EngineArgs {
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Superstep limit; defaults to ten per vertex.
    #[arg(long)]
    max_supersteps: Option<usize>,
    /// Test hook: the optimized engine drops one incoming message.
    #[cfg(feature = "fault-injection")]
    #[arg(long)]
    inject_fault: bool,
}

impl EngineArgs {
    fn config(&self, algorithm: Algorithm) -> Result<EngineConfig, CliError> {
        if self.workers == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        Ok(EngineConfig {
            workers: self.workers,
            algorithm,
            superstep_cap: self.max_supersteps,
            trace: false,
            #[cfg(feature = "fault-injection")]
            drop_last_message: self.inject_fault,
        })
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    cfg: PathBuf,
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// classic or opt.
    #[arg(long, default_value = "opt")]
    algo: Algorithm,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    store: PathBuf,
    /// Where to write the JSON run report; defaults to `<store>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiffArgs {
    #[arg(long)]
    old: PathBuf,
    #[arg(long)]
    new: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IncrementalArgs {
    /// The updated CFG.
    #[arg(long)]
    cfg: PathBuf,
    #[arg(long)]
    changes: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// naive or opt.
    #[arg(long, default_value = "opt")]
    mode: Mode,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    cfg: PathBuf,
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Seed of the random worklist order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ShowArgs {
    #[arg(long)]
    store: PathBuf,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Changes { path: PathBuf, source: ChangeError },
    #[error("{path}: {source}")]
    Store { path: PathBuf, source: StoreError },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Incremental(IncrementalError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Engine(EngineError::NonConvergence { .. })
            | CliError::Incremental(IncrementalError::Engine(EngineError::NonConvergence {
                ..
            })) => 3,
            _ => 2,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_graph(path: &Path) -> Result<SuperGraph, CliError> {
    SuperGraph::parse(&read(path)?).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn store_err(path: &Path) -> impl FnOnce(StoreError) -> CliError + '_ {
    move |source| CliError::Store {
        path: path.to_path_buf(),
        source,
    }
}

fn report_path(explicit: &Option<PathBuf>, store: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut name = store.as_os_str().to_os_string();
        name.push(".report.json");
        PathBuf::from(name)
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write(path, &text)
}

fn client(args: &AnalysisArgs) -> Result<ClientSpec, CliError> {
    ClientSpec::from_name(&args.analysis, args.sets, args.assoc).map_err(CliError::Usage)
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    command: &'static str,
    analysis: String,
    run: &'a RunReport,
}

#[derive(Serialize)]
struct IncrementalJson<'a> {
    command: &'static str,
    analysis: String,
    impact: &'a ImpactReport,
    run: &'a Option<RunReport>,
}

fn analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let graph = load_graph(&args.cfg)?;
    let spec = client(&args.analysis)?;
    let config = args.engine.config(args.algo)?;
    let report = with_client!(spec, |a| analyze_with(&graph, a, &config, &args.store)?);
    write_json(
        &report_path(&args.report, &args.store),
        &AnalyzeReport {
            command: "analyze",
            analysis: spec.to_string(),
            run: &report,
        },
    )?;
    let _ = writeln!(
        out,
        "{}: {} vertices, {} supersteps, {} messages, {} OUT updates",
        spec.fingerprint().analysis,
        report.vertices,
        report.supersteps,
        report.messages_sent,
        report.out_updates
    );
    Ok(0)
}

fn analyze_with<A: Analysis>(
    graph: &SuperGraph,
    analysis: &A,
    config: &EngineConfig,
    store: &Path,
) -> Result<RunReport, CliError> {
    let result = run(graph, analysis, config)?;
    FactStore::create_with(store, analysis.fingerprint(), result_batch::<A>(&result))
        .map_err(store_err(store))?;
    Ok(RunReport::new(graph, config, &result.stats))
}

fn diff(args: &DiffArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let old = load_graph(&args.old)?;
    let new = load_graph(&args.new)?;
    let batch = diff_graphs(&old, &new);
    write(&args.out, &batch.render())?;
    let _ = writeln!(out, "{} atomic changes", batch.len());
    Ok(0)
}

fn incremental(args: &IncrementalArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let graph = load_graph(&args.cfg)?;
    let batch =
        ChangeBatch::parse(&read(&args.changes)?, &graph).map_err(|source| CliError::Changes {
            path: args.changes.clone(),
            source,
        })?;
    let mut store = FactStore::open(&args.store).map_err(store_err(&args.store))?;
    let spec = ClientSpec::from_fingerprint(store.fingerprint()).map_err(CliError::Usage)?;
    let config = args.engine.config(Algorithm::Optimized)?;
    let report = with_client!(spec, |a| {
        run_incremental(&graph, &batch, &mut store, a, args.mode, &config)
            .map_err(|e| match e {
                IncrementalError::Store(source) => CliError::Store {
                    path: args.store.clone(),
                    source,
                },
                other => CliError::Incremental(other),
            })?
            .report
    });
    write_json(
        &report_path(&args.report, &args.store),
        &IncrementalJson {
            command: "incremental",
            analysis: spec.to_string(),
            impact: &report.impact,
            run: &report.run,
        },
    )?;
    let i = &report.impact;
    let _ = write!(
        out,
        "{} mode: {} changes, {} affected of {} vertices ({}%), {} reused",
        i.mode, i.changes, i.affected, i.graph_vertices, i.sub_vertex_pct, i.reused
    );
    match &report.run {
        Some(r) => {
            let _ = writeln!(
                out,
                ", {} supersteps, {} OUT updates",
                r.supersteps, r.out_updates
            );
        }
        None => {
            let _ = writeln!(out);
        }
    }
    Ok(0)
}

fn verify_cmd(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let graph = load_graph(&args.cfg)?;
    let spec = client(&args.analysis)?;
    let config = args.engine.config(Algorithm::Optimized)?;
    let divergence = with_client!(spec, |a| verify(&graph, a, &config, args.seed)?);
    match divergence {
        None => {
            let _ = writeln!(
                out,
                "ok: classic, opt, sequential and chaotic agree on {} vertices",
                graph.len()
            );
            Ok(0)
        }
        Some(d) => {
            let _ = writeln!(out, "{d}");
            Ok(1)
        }
    }
}

fn show(args: &ShowArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let store = FactStore::open(&args.store).map_err(store_err(&args.store))?;
    let spec = ClientSpec::from_fingerprint(store.fingerprint()).map_err(CliError::Usage)?;
    let _ = writeln!(out, "# {}", store.fingerprint());
    let keys: Vec<StoreKey> = store.keys().collect();
    with_client!(spec, |a| {
        let facts = store.batch_get(a, &keys).map_err(store_err(&args.store))?;
        for (k, f) in keys.iter().zip(facts) {
            if let Some(f) = f {
                let _ = writeln!(out, "{k} {f}");
            }
        }
    });
    Ok(0)
}

/// Run the command line `args` (including the program name), writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                2
            } else {
                let _ = write!(out, "{}", e.render());
                0
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a, out),
        Command::Diff(a) => diff(a, out),
        Command::Incremental(a) => incremental(a, out),
        Command::Verify(a) => verify_cmd(a, out),
        Command::Show(a) => show(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
