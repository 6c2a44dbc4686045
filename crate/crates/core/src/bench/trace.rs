use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::MemoryState;
use crate::planner::{run_episode, EpisodeConfig, EpisodeResult, NoisyBackend, OracleBackend, PlannerBackend, SubtaskSignal, TraceEvent};
use crate::world::{Env, ScenarioParams, TaskId, TaskSpec};

use super::BackendKind;

pub const TRACE_SCHEMA: &str = "longhorizon-trace/1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace schema {found} is not {TRACE_SCHEMA}")]
    SchemaMismatch { found: String },
    #[error("corrupt trace at line {line}: {reason}")]
    CorruptTrace { line: usize, reason: String },
    #[error("planner error during replay: {0}")]
    Replay(String),
}

/// First line of every trace: enough to re-run the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub crate_version: String,
    pub task: TaskId,
    pub seed: u64,
    pub scenario: ScenarioParams,
    pub config: EpisodeConfig,
    pub backend: BackendKind,
    pub p_verify: f64,
    /// SHA-256 of the serialized `config` and `scenario`.
    pub config_sha256: String,
}

impl TraceHeader {
    pub fn new(task: &TaskSpec, seed: u64, config: &EpisodeConfig, backend: BackendKind, p_verify: f64) -> Self {
        let body = serde_json::to_string(&(config, &task.scenario)).expect("config serializes");
        Self {
            schema: TRACE_SCHEMA.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            task: task.task_id,
            seed,
            scenario: task.scenario.clone(),
            config: config.clone(),
            backend,
            p_verify,
            config_sha256: crate::memory::text_digest(&body),
        }
    }

    fn backend_impl(&self) -> Box<dyn PlannerBackend> {
        match self.backend {
            BackendKind::Oracle => Box::new(OracleBackend),
            BackendKind::OracleNoisy => Box::new(NoisyBackend { p_verify: self.p_verify, seed: self.seed }),
        }
    }
}

/// Last line of every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub event: String,
    pub success: bool,
    pub steps: u32,
    pub revisions: u32,
    pub plan_completed: bool,
    pub signals: Vec<SubtaskSignal>,
    pub final_memory: MemoryState,
    /// Sidecar PPM of the final frame, relative to the trace.
    pub final_image: Option<String>,
}

const END_EVENT: &str = "episode_end";

pub fn write_trace(result: &EpisodeResult, header: &TraceHeader, path: &Path, final_image: Option<String>) -> Result<(), TraceError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", line(header))?;
    for e in &result.trace {
        writeln!(out, "{}", line(e))?;
    }
    let end = EpisodeEnd {
        event: END_EVENT.to_string(),
        success: result.success,
        steps: result.steps,
        revisions: result.revisions,
        plan_completed: result.plan_completed,
        signals: result.subtask_signals.clone(),
        final_memory: result.final_memory.clone(),
        final_image,
    };
    writeln!(out, "{}", line(&end))?;
    out.flush()?;
    Ok(())
}

fn line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("trace records serialize")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
    pub end: EpisodeEnd,
}

impl TraceFile {
    pub fn recorded(&self) -> EpisodeResult {
        EpisodeResult {
            task_id: self.header.task,
            seed: self.header.seed,
            success: self.end.success,
            subtask_signals: self.end.signals.clone(),
            revisions: self.end.revisions,
            steps: self.end.steps,
            plan_completed: self.end.plan_completed,
            trace: self.events.clone(),
            final_memory: self.end.final_memory.clone(),
            trace_path: None,
        }
    }
}

fn corrupt(line: usize, reason: impl ToString) -> TraceError {
    TraceError::CorruptTrace { line, reason: reason.to_string() }
}

pub fn read_trace(path: &Path) -> Result<TraceFile, TraceError> {
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<Result<_, _>>()?;
    let first = lines.first().ok_or_else(|| corrupt(1, "empty file"))?;
    let raw: serde_json::Value = serde_json::from_str(first).map_err(|e| corrupt(1, e))?;
    let schema = raw.get("schema").and_then(|s| s.as_str()).ok_or_else(|| corrupt(1, "header has no schema"))?;
    if schema != TRACE_SCHEMA {
        return Err(TraceError::SchemaMismatch { found: schema.to_string() });
    }
    let header: TraceHeader = serde_json::from_value(raw).map_err(|e| corrupt(1, e))?;
    let mut events = Vec::new();
    for (i, text) in lines.iter().enumerate().skip(1) {
        let n = i + 1;
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(n, e))?;
        if v.get("event").and_then(|e| e.as_str()) == Some(END_EVENT) {
            if n != lines.len() {
                return Err(corrupt(n + 1, "records after episode_end"));
            }
            let end: EpisodeEnd = serde_json::from_value(v).map_err(|e| corrupt(n, e))?;
            return Ok(TraceFile { header, events, end });
        }
        events.push(serde_json::from_value(v).map_err(|e| corrupt(n, e))?);
    }
    Err(corrupt(lines.len() + 1, "missing episode_end record"))
}

/// A recorded episode next to its deterministic re-run.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub recorded: EpisodeResult,
    pub replayed: EpisodeResult,
}

impl Replay {
    /// Same success flag and the same signal for every sub-task.
    pub fn matches(&self) -> bool {
        self.recorded.success == self.replayed.success && self.recorded.subtask_signals == self.replayed.subtask_signals
    }

    /// Every recorded event is reproduced verbatim.
    pub fn events_identical(&self) -> bool {
        self.recorded.trace == self.replayed.trace
    }
}

pub fn replay_trace(path: &Path) -> Result<Replay, TraceError> {
    let file = read_trace(path)?;
    let goal = TaskSpec::with_params(file.header.task, file.header.scenario.clone());
    let mut env = Env::new(goal.clone(), file.header.seed);
    let backend = file.header.backend_impl();
    let replayed =
        run_episode(&goal, &mut env, backend.as_ref(), &file.header.config).map_err(|e| TraceError::Replay(e.to_string()))?;
    Ok(Replay { recorded: file.recorded(), replayed })
}
