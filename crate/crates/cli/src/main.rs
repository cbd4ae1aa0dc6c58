//! `examlab`: operator tool over the same core calls as the HTTP service.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O or configuration
//! error. Data goes to standard output, everything else to standard error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use examlab_core::assessment::Language;
use examlab_core::dataset::ExportFilter;
use examlab_core::gateway::ProviderRegistry;
use examlab_core::harness::{ConsensusPolicy, EvalRequest, ReportFormat};
use examlab_core::{Error, Platform, PlatformConfig, Principal};

const DEFAULT_STORE: &str = "examlab-data";

#[derive(Parser)]
#[command(
    name = "examlab",
    version,
    about = "Exam corpus, dataset and offline evaluation tool"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Store directory [default: examlab-data]
    #[arg(long, global = true, env = "EXAMLAB_STORE")]
    store: Option<PathBuf>,
    /// Provider registry (TOML)
    #[arg(long, global = true, env = "EXAMLAB_PROVIDERS")]
    registry: Option<PathBuf>,
    /// Deployment salt for student keys
    #[arg(long, global = true, env = "EXAMLAB_SALT", hide_env_values = true)]
    salt: Option<String>,
    /// Optional TOML file with `store`, `registry` and `salt`; flags and
    /// environment variables take precedence
    #[arg(long, global = true, env = "EXAMLAB_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and store exam documents; prints each exam id
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Write the anonymized dataset as NDJSON
    Export {
        #[arg(long)]
        exam: Option<String>,
        #[arg(long)]
        subject: Option<String>,
        /// RFC 3339 lower bound on submission time
        #[arg(long)]
        from: Option<String>,
        /// RFC 3339 exclusive upper bound on submission time
        #[arg(long)]
        until: Option<String>,
        /// Output file; standard output when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load an NDJSON dataset; its exams must already be ingested
    Import { path: PathBuf },
    /// Re-check every stored exam
    Validate,
    #[command(subcommand)]
    Eval(EvalCommand),
    #[command(subcommand)]
    Grades(GradesCommand),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Run or resume an offline evaluation
    Run {
        /// Comma-separated provider ids
        #[arg(long, required = true, value_delimiter = ',')]
        providers: Vec<String>,
        /// File with one submission id per line
        #[arg(long)]
        submissions: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        #[arg(long, default_value = "ro")]
        language: Language,
    },
    /// Agreement report against expert grades
    Report {
        #[arg(long)]
        run: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
        #[arg(long, default_value = "median")]
        policy: ConsensusPolicy,
        /// Largest disagreements listed
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// List stored runs
    List,
}

#[derive(Subcommand)]
enum GradesCommand {
    /// Load expert grades (CSV); all rows or none
    Ingest { path: PathBuf },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    store: Option<PathBuf>,
    registry: Option<PathBuf>,
    salt: Option<String>,
}

struct Failure {
    code: u8,
    message: String,
    details: Vec<String>,
}

impl Failure {
    fn io(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
            details: Vec::new(),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            ..Self::io(message)
        }
    }
}

/// Configuration, store and lookup problems exit 2; rejected input exits 1.
fn exit_code(tag: &str) -> u8 {
    match tag {
        "store_error" | "invalid_config" | "unknown_provider" | "duplicate_provider"
        | "not_found" | "forbidden" => 2,
        _ => 1,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(e.tag()),
            message: format!("{}: {e}", e.tag()),
            details: e.details(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn core<T, E: Into<Error>>(r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| Failure::from(e.into()))
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult {
    match out {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::io(format!("stdout: {e}")))
        }
    }
}

fn parse_time(flag: &str, value: Option<&String>) -> CliResult<Option<DateTime<Utc>>> {
    value
        .map(|v| {
            DateTime::parse_from_rfc3339(v)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| Failure::invalid(format!("--{flag} {v:?}: {e}")))
        })
        .transpose()
}

fn open(global: &Global) -> CliResult<Platform> {
    let file: FileConfig = match &global.config {
        Some(path) => {
            let text = String::from_utf8(read(path)?)
                .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let store = global
        .store
        .clone()
        .or(file.store)
        .unwrap_or_else(|| DEFAULT_STORE.into());
    let mut config = PlatformConfig::default();
    if let Some(salt) = global.salt.clone().or(file.salt) {
        config.salt = salt.into_bytes();
    }
    let platform = core(Platform::open_dir(&store, config))?;
    if let Some(path) = global.registry.clone().or(file.registry) {
        let registry = core(ProviderRegistry::load(&path))?;
        core(platform.register_providers(&registry))?;
    }
    Ok(platform)
}

fn ingest(p: &Platform, paths: &[PathBuf]) -> CliResult {
    let mut worst = 0u8;
    for path in paths {
        let outcome = read(path).and_then(|bytes| core(p.corpus.ingest_exam(&bytes)));
        match outcome {
            Ok(out) => {
                println!("{}", out.exam_id);
                let verb = if out.created { "ingested" } else { "unchanged" };
                eprintln!("{}: {verb} {}", path.display(), out.exam_id);
            }
            Err(f) => {
                eprintln!("{}: {}", path.display(), f.message);
                for d in &f.details {
                    eprintln!("  {d}");
                }
                worst = worst.max(f.code);
            }
        }
    }
    if worst == 0 {
        return Ok(());
    }
    // Already reported per file.
    Err(Failure {
        code: worst,
        message: String::new(),
        details: Vec::new(),
    })
}

fn validate(p: &Platform) -> CliResult {
    let violations = core(p.corpus.validate_corpus(Default::default()))?;
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        eprintln!("corpus valid");
        Ok(())
    } else {
        Err(Failure::invalid(format!(
            "{} violation(s)",
            violations.len()
        )))
    }
}

fn submission_ids(path: &Path) -> CliResult<Vec<String>> {
    let text = String::from_utf8(read(path)?)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn eval(p: &Platform, cmd: EvalCommand) -> CliResult {
    let h = &p.harness;
    match cmd {
        EvalCommand::Run {
            providers,
            submissions,
            run_id,
            concurrency,
            language,
        } => {
            let req = EvalRequest {
                run_id,
                submission_ids: submission_ids(&submissions)?,
                providers,
                concurrency,
                language,
            };
            let s = core(h.run_offline_eval(&req, &AtomicBool::new(false)))?;
            eprintln!(
                "run {}: {} pairs, {} ok, {} failed, {} excluded, {} skipped (already settled)",
                s.run_id, s.n_pairs, s.n_ok, s.n_failed, s.n_excluded, s.n_skipped
            );
            if s.n_failed > 0 {
                eprintln!("re-run the same command to retry failed pairs");
            }
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
            Ok(())
        }
        EvalCommand::Report {
            run,
            out,
            format,
            policy,
            top,
        } => {
            core(h.get_run(&run))?;
            let truth = core(h.build_ground_truth(policy))?;
            let report = core(h.compute_agreement(&run, &truth, top))?;
            emit(out.as_deref(), report.render(format).as_bytes())?;
            if let Some(path) = out {
                eprintln!("report written to {}", path.display());
            }
            Ok(())
        }
        EvalCommand::List => {
            for run in core(h.list_runs())? {
                println!("{}", serde_json::to_string(&run).expect("run serializes"));
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let p = open(&cli.global)?;
    match cli.command {
        Command::Ingest { paths } => ingest(&p, &paths),
        Command::Export {
            exam,
            subject,
            from,
            until,
            out,
        } => {
            let filter = ExportFilter {
                exam_id: exam,
                subject,
                from: parse_time("from", from.as_ref())?,
                until: parse_time("until", until.as_ref())?,
            };
            let bytes = core(p.export_dataset(Principal::Admin, &filter))?;
            emit(out.as_deref(), &bytes)?;
            eprintln!(
                "{} record(s) exported",
                bytes.iter().filter(|&&b| b == b'\n').count()
            );
            Ok(())
        }
        Command::Import { path } => {
            let n = core(p.dataset.import(&read(&path)?))?;
            eprintln!("{n} record(s) imported");
            Ok(())
        }
        Command::Validate => validate(&p),
        Command::Eval(cmd) => eval(&p, cmd),
        Command::Grades(GradesCommand::Ingest { path }) => {
            let n = core(p.harness.ingest_expert_grades(&read(&path)?))?;
            eprintln!("{n} grade(s) ingested");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
                for d in &f.details {
                    eprintln!("  {d}");
                }
            }
            ExitCode::from(f.code)
        }
    }
}
