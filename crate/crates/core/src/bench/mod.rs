//! Seeded batch runs, ablation suites, traces and reports.

mod config;
mod metrics;
mod trace;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{run_episode, AblationFlags, EpisodeResult};
use crate::world::{write_ppm, Env, TaskId};

pub use config::{BackendKind, ConfigError, ParamsSection, RunConfig, RunSection, ENV_PREFIX};
pub use metrics::{aggregate, render_table, AggregateError, MetricsReport, TaskMetrics};
pub use trace::{read_trace, replay_trace, write_trace, EpisodeEnd, Replay, TraceError, TraceFile, TraceHeader, TRACE_SCHEMA};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("episode {task:?}/{seed}: {reason}")]
    Episode { task: TaskId, seed: u64, reason: String },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

/// Fault probabilities used by the recovery suite.
pub const STRESS_PRESS_FAULT: f64 = 0.95;
pub const STRESS_POLARITY_REVERSED: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    Memory,
    Recovery,
}

impl AblationKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "memory" => Some(Self::Memory),
            "recovery" => Some(Self::Recovery),
            _ => None,
        }
    }

    pub fn tasks(self) -> Vec<TaskId> {
        match self {
            Self::Memory => vec![TaskId::ObservePickUp, TaskId::RearrangeBlocks, TaskId::BlocksRankingTry],
            Self::Recovery => vec![TaskId::BatteryTry, TaskId::PressButton],
        }
    }

    /// Row labels and flags, in table order.
    pub fn rows(self) -> Vec<(&'static str, AblationFlags)> {
        let f = |h, w, e, v, r| AblationFlags {
            enable_history: h,
            enable_working: w,
            enable_error_register: e,
            enable_verification: v,
            enable_reflection: r,
        };
        match self {
            Self::Memory => vec![
                ("Base", f(false, false, false, true, true)),
                ("+history", f(true, false, false, true, true)),
                ("+history+working", f(true, true, false, true, true)),
                ("Full", f(true, true, true, true, true)),
            ],
            Self::Recovery => vec![
                ("Base", f(true, true, false, false, false)),
                ("+verify", f(true, true, false, true, false)),
                ("+verify+reflect", f(true, true, false, true, true)),
                ("Full", f(true, true, true, true, true)),
            ],
        }
    }
}

/// Results of one batch, with traces written under `dir` when given.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub report: MetricsReport,
    pub results: Vec<EpisodeResult>,
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool starts")
}

fn run_one(cfg: &RunConfig, task: TaskId, i: u64, traces: Option<&Path>) -> Result<EpisodeResult, BenchError> {
    let spec = crate::world::TaskSpec::with_params(task, cfg.scenario.clone());
    let seed = cfg.episode_seed(i);
    let episode = cfg.episode_config();
    let mut env = Env::new(spec.clone(), seed);
    let backend = cfg.backend(seed);
    let mut result = run_episode(&spec, &mut env, backend.as_ref(), &episode)
        .map_err(|e| BenchError::Episode { task, seed, reason: e.to_string() })?;
    if let Some(dir) = traces {
        let stem = format!("{}_{:04}", task.name(), i);
        let image = if cfg.run.sidecar_images {
            let name = format!("{stem}.final.ppm");
            write_ppm(&env.observation().image, fs::File::create(dir.join(&name))?)?;
            Some(name)
        } else {
            None
        };
        let path = dir.join(format!("{stem}.jsonl"));
        let header = TraceHeader::new(&spec, seed, &episode, cfg.run.backend, cfg.params.p_verify);
        write_trace(&result, &header, &path, image)?;
        result.trace_path = Some(path.to_string_lossy().into_owned());
    }
    Ok(result)
}

/// Run every configured task for `episodes_per_task` seeds in parallel.
/// With `out` set, per-episode traces, a manifest and report files are
/// written there.
pub fn run_batch(cfg: &RunConfig, label: &str, out: Option<&Path>) -> Result<BatchOutcome, BenchError> {
    cfg.validate()?;
    let traces = match out {
        Some(d) => {
            let t = d.join("traces");
            fs::create_dir_all(&t)?;
            Some(t)
        }
        None => None,
    };
    let jobs: Vec<(TaskId, u64)> =
        cfg.task_ids().into_iter().flat_map(|t| (0..cfg.run.episodes_per_task).map(move |i| (t, i))).collect();
    let results: Vec<EpisodeResult> = pool(cfg.run.threads).install(|| {
        jobs.par_iter().map(|&(t, i)| run_one(cfg, t, i, traces.as_deref())).collect::<Result<_, _>>()
    })?;
    let report = MetricsReport::from_results(label, &results)?;
    if let Some(d) = out {
        let manifest: Vec<&str> = results.iter().filter_map(|r| r.trace_path.as_deref()).collect();
        fs::write(d.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("paths serialize"))?;
        write_reports(d, "report", std::slice::from_ref(&report))?;
    }
    Ok(BatchOutcome { report, results })
}

/// `run` entry point: one batch into the configured output directory.
pub fn run_benchmark(cfg: &RunConfig) -> Result<MetricsReport, BenchError> {
    let out = cfg.run.output_dir.clone();
    Ok(run_batch(cfg, "run", Some(&out))?.report)
}

/// The four flag rows of `kind` over identical seed sets. The recovery
/// suite raises fault probabilities to the stress profile.
pub fn ablation_suite(kind: AblationKind, cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<MetricsReport>, BenchError> {
    let mut base = cfg.clone();
    base.run.tasks = kind.tasks().iter().map(|t| t.name().to_string()).collect();
    if kind == AblationKind::Recovery {
        base.scenario.press_fault_prob = STRESS_PRESS_FAULT;
        base.scenario.polarity_reversed_prob = STRESS_POLARITY_REVERSED;
    }
    let mut rows = Vec::new();
    for (i, (label, flags)) in kind.rows().into_iter().enumerate() {
        let mut c = base.clone();
        c.ablation = flags;
        let slug = label.trim_start_matches('+').replace('+', "_");
        let dir = out.map(|d| d.join(format!("{i}_{slug}")));
        rows.push(run_batch(&c, label, dir.as_deref())?.report);
    }
    if let Some(d) = out {
        write_reports(d, "ablation", &rows)?;
    }
    Ok(rows)
}

fn write_reports(dir: &Path, stem: &str, rows: &[MetricsReport]) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(rows).expect("reports serialize"))?;
    fs::write(dir.join(format!("{stem}.txt")), render_table(stem, rows))?;
    Ok(())
}

fn trace_files(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            out.extend(trace_files(&p)?);
        } else if p.extension().is_some_and(|e| e == "jsonl") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Rebuild a report from every trace under `dir`.
pub fn report_from_traces(dir: &Path, label: &str) -> Result<MetricsReport, BenchError> {
    let mut results = Vec::new();
    for p in trace_files(dir)? {
        results.push(read_trace(&p)?.recorded());
    }
    Ok(MetricsReport::from_results(label, &results)?)
}

/// One report per run directory found at `dir` (a `run` output) or directly
/// below it (an `ablate` output).
pub fn report_dir(dir: &Path) -> Result<Vec<MetricsReport>, BenchError> {
    if dir.join("traces").is_dir() {
        return Ok(vec![report_from_traces(&dir.join("traces"), "run")?]);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("traces").is_dir())
        .collect();
    subdirs.sort();
    let mut rows = Vec::new();
    for d in subdirs {
        let label = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        rows.push(report_from_traces(&d.join("traces"), &label)?);
    }
    if rows.is_empty() {
        return Err(BenchError::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "no traces found")));
    }
    Ok(rows)
}
