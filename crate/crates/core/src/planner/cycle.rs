use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::executor::{execute_subtask, ChunkRecord, CheckpointReason, ExecutorConfig};
use crate::mask::segment_init;
use crate::memory::{ActionSummary, EpisodeEntry, ErrorRecord, MemoryState, DEFAULT_WINDOW};
use crate::percept::{extract, PerceptSummary};
use crate::world::{Env, TaskId, TaskSpec};

use super::templates::resume_index;
use super::{
    adjust_params, check_precondition, recover, BBox, CompletionSignal, FailureContext, ParamPatch, PlannerBackend,
    PlannerError, Recommendation, RecoveryAction, ReflectionOutcome, SubTask, SubTaskParams,
};

/// Which parts of the system the planner may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub enable_history: bool,
    pub enable_working: bool,
    pub enable_reflection: bool,
    pub enable_verification: bool,
    pub enable_error_register: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            enable_history: true,
            enable_working: true,
            enable_reflection: true,
            enable_verification: true,
            enable_error_register: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub n_max: u32,
    pub n_h: usize,
    pub global_budget: u32,
    pub replan_limit: u32,
    pub flags: AblationFlags,
    pub executor: ExecutorConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            n_max: 3,
            n_h: DEFAULT_WINDOW,
            global_budget: 600,
            replan_limit: 3,
            flags: AblationFlags::default(),
            executor: ExecutorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSignal {
    pub id: String,
    pub signal: CompletionSignal,
    /// Failures recorded for this sub-task before this attempt.
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    PlanIssued {
        revision: u32,
        subtasks: Vec<String>,
        resume_at: usize,
    },
    SubtaskStart {
        id: String,
        step: u64,
        attempt: u32,
        bindings: BTreeMap<String, String>,
        distractor_boxes: Vec<BBox>,
        params: SubTaskParams,
    },
    GroundingFailed {
        id: String,
        reason: String,
    },
    PreconditionFailed {
        id: String,
    },
    Chunk(ChunkRecord),
    Checkpoint {
        id: String,
        steps_used: u32,
        reason: CheckpointReason,
        target_not_visible: bool,
    },
    Verify {
        id: String,
        step: u64,
        signal: CompletionSignal,
    },
    Reflection {
        id: String,
        diagnosis: String,
        recommendation: Recommendation,
        param_patch: Option<ParamPatch>,
    },
    Recovery {
        id: String,
        action: RecoveryAction,
    },
    Memory {
        step: u64,
        working_sha256: String,
        history_len: usize,
        summarized_count: usize,
        errors: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: TaskId,
    pub seed: u64,
    pub success: bool,
    pub subtask_signals: Vec<SubtaskSignal>,
    pub revisions: u32,
    pub steps: u32,
    /// Every sub-task of the last plan revision reported SUCCESS.
    pub plan_completed: bool,
    pub trace: Vec<TraceEvent>,
    pub final_memory: MemoryState,
    /// Where the trace was written, if it was.
    #[serde(default)]
    pub trace_path: Option<String>,
}

struct Cycle<'a> {
    goal: &'a TaskSpec,
    backend: &'a dyn PlannerBackend,
    cfg: &'a EpisodeConfig,
    memory: MemoryState,
    trace: Vec<TraceEvent>,
}

impl Cycle<'_> {
    fn view(&self) -> MemoryState {
        let f = &self.cfg.flags;
        self.memory.view(f.enable_history, f.enable_working, f.enable_error_register)
    }

    fn snapshot(&mut self, step: u64) {
        self.trace.push(TraceEvent::Memory {
            step,
            working_sha256: crate::memory::text_digest(self.memory.working.rendered()),
            history_len: self.memory.history.len(),
            summarized_count: self.memory.summarized_count,
            errors: self.memory.errors.len(),
        });
    }

    fn replan(&mut self, percept: &PerceptSummary, revision: u32) -> Result<(super::Plan, usize), PlannerError> {
        let view = self.view();
        let plan = self.backend.plan(self.goal, percept, &view)?.with_revision(revision);
        let resume_at = resume_index(self.goal, &plan, percept, &view);
        self.trace.push(TraceEvent::PlanIssued {
            revision,
            subtasks: plan.subtasks.iter().map(|t| t.id.clone()).collect(),
            resume_at,
        });
        Ok((plan, resume_at))
    }
}

fn history_entries(chunks: &[ChunkRecord], t: &SubTask) -> Vec<EpisodeEntry> {
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| EpisodeEntry {
            step_index: c.end_step,
            observation_digest: c.end_observation.clone(),
            subtask_id: t.id.clone(),
            action_summary: ActionSummary { chunks: i as u32 + 1, end_effectors: c.end_effectors },
            completion: None,
            bindings: t.bindings.clone(),
        })
        .collect()
}

/// Run one episode of the planner decision cycle on a freshly reset `env`.
pub fn run_episode(
    goal: &TaskSpec,
    env: &mut Env,
    backend: &dyn PlannerBackend,
    cfg: &EpisodeConfig,
) -> Result<EpisodeResult, PlannerError> {
    let flags = cfg.flags;
    let world_cfg = env.config().clone();
    let mut cy = Cycle { goal, backend, cfg, memory: MemoryState::new(), trace: Vec::new() };

    let mut percept = extract(env.observation(), &world_cfg);
    let (mut plan, mut k) = cy.replan(&percept, 0)?;
    let mut revision = 0;
    let mut steps_total: u32 = 0;
    let mut signals = Vec::new();
    let mut pending: Option<SubTask> = None;
    let mut issued: u64 = 0;
    let mut completed = false;

    loop {
        if k >= plan.len() {
            completed = true;
            break;
        }
        if steps_total >= cfg.global_budget {
            break;
        }
        let template = pending.take().unwrap_or_else(|| plan.subtasks[k].clone());
        let view = cy.view();
        let retries = cy.memory.retry_count(&template.id);

        let (t, signal, chunks) = match backend.ground(goal, &template, &percept, &view) {
            Err(e) => {
                cy.trace.push(TraceEvent::GroundingFailed { id: template.id.clone(), reason: e.to_string() });
                (template, CompletionSignal::Fail, Vec::new())
            }
            Ok(t) => {
                let obs = env.observation();
                cy.trace.push(TraceEvent::SubtaskStart {
                    id: t.id.clone(),
                    step: obs.time_step,
                    attempt: retries,
                    bindings: t.bindings.iter().map(|(r, o)| (r.clone(), o.to_string())).collect(),
                    distractor_boxes: t.distractor_boxes.clone(),
                    params: t.params.clone(),
                });
                if flags.enable_verification && !check_precondition(&t.pre, &t.bindings, &percept) {
                    cy.trace.push(TraceEvent::PreconditionFailed { id: t.id.clone() });
                    (t, CompletionSignal::Fail, Vec::new())
                } else {
                    let mask = segment_init(&obs.image, &t.distractor_boxes, obs.time_step)
                        .expect("grounded boxes lie inside the image");
                    let budget = t.max_steps.min(cfg.global_budget - steps_total);
                    let seed = crate::derive_seed(&[&env.seed.to_le_bytes(), &issued.to_le_bytes()]);
                    issued += 1;
                    let report = execute_subtask(env, &t, mask, budget, seed, &cfg.executor);
                    steps_total += report.steps_used;
                    cy.trace.extend(report.chunks.iter().cloned().map(TraceEvent::Chunk));
                    cy.trace.push(TraceEvent::Checkpoint {
                        id: t.id.clone(),
                        steps_used: report.steps_used,
                        reason: report.checkpoint_reason,
                        target_not_visible: report.target_not_visible,
                    });
                    percept = extract(&report.final_observation, &world_cfg);
                    let c = if flags.enable_verification {
                        backend.verify(&percept, &t.post, &t.bindings, &view.working, report.steps_used, t.max_steps)
                    } else {
                        CompletionSignal::Success
                    };
                    (t, c, report.chunks)
                }
            }
        };
        cy.trace.push(TraceEvent::Verify { id: t.id.clone(), step: percept.step, signal });
        signals.push(SubtaskSignal { id: t.id.clone(), signal, retries });

        let mut memory = backend.mem_update(std::mem::take(&mut cy.memory), &percept, &t, signal);
        if flags.enable_history {
            let mut entries = history_entries(&chunks, &t);
            if let Some(last) = entries.last_mut() {
                last.completion = Some(signal);
            }
            for e in entries {
                memory = memory.append_history(e).expect("chunk boundaries advance time");
            }
            memory = memory.compress_history(cfg.n_h);
        }
        cy.memory = memory;
        cy.snapshot(percept.step);

        if signal == CompletionSignal::Success {
            k += 1;
            continue;
        }

        let view = cy.view();
        let outcome = if flags.enable_reflection {
            let ctx = FailureContext {
                final_percept: percept.clone(),
                subtask: t.clone(),
                signal,
                working_snapshot: view.working.clone(),
            };
            backend.reflect(&ctx, &view.errors)
        } else {
            ReflectionOutcome::new("unanalyzed failure", Recommendation::Retry)
        };
        cy.trace.push(TraceEvent::Reflection {
            id: t.id.clone(),
            diagnosis: outcome.diagnosis.clone(),
            recommendation: outcome.recommendation,
            param_patch: outcome.param_patch.clone(),
        });
        cy.memory = std::mem::take(&mut cy.memory).record_error(ErrorRecord {
            subtask_id: t.id.clone(),
            diagnosis: outcome.diagnosis.clone(),
            recommendation: outcome.recommendation,
            attempt_index: retries,
        });

        let action = recover(signal, outcome.recommendation, retries, cfg.n_max);
        cy.trace.push(TraceEvent::Recovery { id: t.id.clone(), action });
        match action {
            RecoveryAction::ReExecute => {
                let (w, h) = (world_cfg.image_width, world_cfg.image_height);
                let next = match &outcome.param_patch {
                    Some(p) => adjust_params(&t, p, w, h).unwrap_or(t),
                    None => t,
                };
                pending = Some(next);
            }
            RecoveryAction::Replan => {
                if revision >= cfg.replan_limit {
                    break;
                }
                revision += 1;
                let (p, resume) = cy.replan(&percept, revision)?;
                plan = p;
                k = resume;
            }
        }
    }

    Ok(EpisodeResult {
        task_id: goal.task_id,
        seed: env.seed,
        success: env.success(),
        subtask_signals: signals,
        revisions: revision,
        steps: steps_total,
        plan_completed: completed,
        trace: cy.trace,
        final_memory: cy.memory,
        trace_path: None,
    })
}
