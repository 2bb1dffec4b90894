//! Command-line front end: validate scenarios, run them, compare the two
//! integration models, and inspect trace files.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use qsdn_core::scenario::{self, ModelKind, ScenarioFile};
use qsdn_core::{read_jsonl, run_scenario, summarize, write_jsonl, RequestId, RunOutput};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qsdn", version, about = "Simulator for SDN-managed QKD networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Hierarchical,
    Distributed,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Hierarchical => ModelKind::Hierarchical,
            ModelArg::Distributed => ModelKind::Distributed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and report topology violations.
    Validate { scenario: PathBuf },
    /// Run a scenario and summarize the outcome.
    Run {
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the integration model.
        #[arg(long)]
        model: Option<ModelArg>,
        /// Write the message trace (JSON lines).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the run report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a scenario under several models and compare the reports.
    Compare {
        scenario: PathBuf,
        /// Comma-separated list, e.g. hierarchical,distributed.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<String>,
    },
    /// Show the records of one request from a trace file.
    Trace {
        file: PathBuf,
        /// Request id (e.g. 0 or r0).
        #[arg(long)]
        request: String,
    },
}

/// An error tagged with the process exit code it should produce: 1 for
/// operational failures, 2 for unusable input (unreadable or invalid
/// scenario, malformed arguments).
struct CliError {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(err: E) -> Self {
        CliError { code: 1, err: err.into() }
    }
}

/// Mark an error as an input problem (exit code 2).
fn input_error(err: anyhow::Error) -> CliError {
    CliError { code: 2, err }
}

type CmdResult = std::result::Result<(), CliError>;

fn load(path: &Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(scenario::parse_str(&text)?)
}

/// Re-target a scenario file at another integration model.
fn with_model(mut file: ScenarioFile, model: ModelKind) -> ScenarioFile {
    file.model = model;
    if model == ModelKind::Distributed {
        file.hierarchy = None;
    }
    file
}

fn run_file(file: &ScenarioFile) -> Result<RunOutput> {
    let sc = scenario::resolve(file)?;
    Ok(run_scenario(sc))
}

fn cmd_validate(path: &Path) -> Result<()> {
    let file = load(path)?;
    let sc = scenario::resolve(&file)?;
    println!(
        "ok: {} ({} domains, {} nodes, {} links, {} requests)",
        path.display(),
        sc.topology.domains.len(),
        sc.topology.nodes.len(),
        sc.topology.links.len(),
        sc.arrivals.len()
    );
    Ok(())
}

fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    model: Option<ModelArg>,
    trace: Option<&Path>,
    report: Option<&Path>,
) -> CmdResult {
    let mut file = load(path).map_err(input_error)?;
    if let Some(s) = seed {
        file.seed = s;
    }
    if let Some(m) = model {
        file = with_model(file, m.into());
    }
    let out = run_file(&file).map_err(input_error)?;
    if let Some(p) = trace {
        let f = File::create(p).with_context(|| format!("cannot write {}", p.display()))?;
        write_jsonl(f, &out.trace)?;
    }
    let summary = summarize(&out.trace);
    if let Some(p) = report {
        let f = File::create(p).with_context(|| format!("cannot write {}", p.display()))?;
        serde_json::to_writer_pretty(f, &summary)?;
    }
    println!(
        "{} model={} requests={} delivered={} key_bits={} messages={}",
        path.display(),
        out.model,
        summary.total_requests,
        summary.delivered_requests,
        summary.delivered_key_bits,
        out.delivered_messages,
    );
    Ok(())
}

fn cmd_compare(path: &Path, models: &[String]) -> CmdResult {
    let mut parsed = Vec::new();
    for m in models {
        match m.as_str() {
            "hierarchical" => parsed.push(ModelKind::Hierarchical),
            "distributed" => parsed.push(ModelKind::Distributed),
            other => {
                return Err(input_error(anyhow::anyhow!(
                    "unknown model {other:?} (expected hierarchical or distributed)"
                )))
            }
        }
    }
    if parsed != [ModelKind::Hierarchical, ModelKind::Distributed] {
        return Err(input_error(anyhow::anyhow!(
            "--models must be hierarchical,distributed"
        )));
    }
    let file = load(path).map_err(input_error)?;
    let hier = run_file(&with_model(file.clone(), ModelKind::Hierarchical)).map_err(input_error)?;
    let dist = run_file(&with_model(file, ModelKind::Distributed)).map_err(input_error)?;
    let hr = summarize(&hier.trace);
    let dr = summarize(&dist.trace);
    let cmp = qsdn_core::compare((&hr, &hier.fingerprint), (&dr, &dist.fingerprint))?;
    serde_json::to_writer_pretty(std::io::stdout().lock(), &cmp)?;
    println!();
    Ok(())
}

fn cmd_trace(path: &Path, request: &str) -> CmdResult {
    let id: u64 = request
        .strip_prefix('r')
        .unwrap_or(request)
        .parse()
        .with_context(|| format!("invalid request id {request:?}"))
        .map_err(input_error)?;
    let f = File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(input_error)?;
    let records = read_jsonl(BufReader::new(f)).map_err(|e| input_error(e.into()))?;
    let mut shown = 0;
    for r in records
        .iter()
        .filter(|r| r.req == Some(RequestId(id)))
    {
        println!(
            "{:>10.3}s {:?} {} -> {} {} {}",
            r.t, r.plane, r.sender, r.receiver, r.msg, r.detail
        );
        shown += 1;
    }
    if shown == 0 {
        return Err(anyhow::anyhow!(
            "no records for request {id} in {}",
            path.display()
        )
        .into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { scenario } => cmd_validate(scenario).map_err(CliError::from),
        Command::Run {
            scenario,
            seed,
            model,
            trace,
            report,
        } => cmd_run(scenario, *seed, *model, trace.as_deref(), report.as_deref()),
        Command::Compare { scenario, models } => cmd_compare(scenario, models),
        Command::Trace { file, request } => cmd_trace(file, request),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.err);
            ExitCode::from(e.code)
        }
    }
}
