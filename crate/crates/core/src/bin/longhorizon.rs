use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use longhorizon::bench::{
    ablation_suite, render_table, replay_trace, report_dir, run_benchmark, AblationKind, BenchError, RunConfig, TraceError,
};

#[derive(Parser)]
#[command(name = "longhorizon", version, about = "Seeded long-horizon tabletop benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded episodes and write traces plus a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Task names, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        tasks: Option<Vec<String>>,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the four-row memory or recovery ablation.
    Ablate {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a recorded episode and compare signals.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Summarize the traces of a previous run or ablation.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

const CONFIG_ERROR: u8 = 1;
const TRACE_CORRUPT: u8 = 2;
const REPLAY_MISMATCH: u8 = 3;
const RUNTIME_ERROR: u8 = 4;

fn fail(e: BenchError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e {
        BenchError::Config(_) => CONFIG_ERROR,
        BenchError::Trace(TraceError::Io(_) | TraceError::Replay(_)) => RUNTIME_ERROR,
        BenchError::Trace(_) => TRACE_CORRUPT,
        _ => RUNTIME_ERROR,
    })
}

/// Write to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn load(path: &std::path::Path) -> Result<RunConfig, BenchError> {
    Ok(RunConfig::load(path)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { CONFIG_ERROR } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Run { config, tasks, episodes, seed, out } => load(&config).and_then(|mut cfg| {
            if let Some(t) = tasks {
                cfg.run.tasks = t;
            }
            if let Some(n) = episodes {
                cfg.run.episodes_per_task = n;
            }
            if let Some(s) = seed {
                cfg.run.seed_base = s;
            }
            if let Some(o) = out {
                cfg.run.output_dir = o;
            }
            cfg.validate()?;
            let report = run_benchmark(&cfg)?;
            emit(&render_table("run", &[report]));
            emit(&format!("output: {}\n", cfg.run.output_dir.display()));
            Ok(ExitCode::SUCCESS)
        }),
        Command::Ablate { kind, config, out } => load(&config).and_then(|cfg| {
            let Some(k) = AblationKind::parse(&kind) else {
                eprintln!("error: --kind must be memory or recovery, got {kind}");
                return Ok(ExitCode::from(CONFIG_ERROR));
            };
            let dir = out.unwrap_or_else(|| cfg.run.output_dir.join(format!("ablate_{kind}")));
            let rows = ablation_suite(k, &cfg, Some(&dir))?;
            emit(&render_table(&format!("{kind} ablation"), &rows));
            emit(&format!("output: {}\n", dir.display()));
            Ok(ExitCode::SUCCESS)
        }),
        Command::Replay { trace } => replay_trace(&trace).map_err(BenchError::from).map(|r| {
            emit(&format!(
                "recorded success={} replayed success={} signals={} events_identical={}\n",
                r.recorded.success,
                r.replayed.success,
                r.recorded.subtask_signals.len(),
                r.events_identical()
            ));
            if r.matches() {
                ExitCode::SUCCESS
            } else {
                eprintln!("replay diverged from the recorded trace");
                ExitCode::from(REPLAY_MISMATCH)
            }
        }),
        Command::Report { input } => report_dir(&input).map(|rows| {
            emit(&render_table(&input.display().to_string(), &rows));
            ExitCode::SUCCESS
        }),
    };
    outcome.unwrap_or_else(fail)
}
