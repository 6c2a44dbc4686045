//! Low-level skill execution: nominal controllers, chunked diffusion-style
//! sampling and masked observation filtering.

mod control;
mod diffusion;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{apply_filter, propagate, Mask};
use crate::memory::{image_digest, ObservationDigest};
use crate::percept::extract;
use crate::planner::{SkillKind, SubTask};
use crate::world::{forward_kinematics, ActionCommand, Env, Observation, PROPRIO_DIM};

pub use control::{ik_step, nominal_chunk, NominalChunk, Setpoint, SkillProgress, STANDOFF};
pub use diffusion::{
    denoise_step, initial_chunk, quantize, reverse_process, sample_chunk, DiffusionSchedule, ACTUATOR_QUANTUM,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecutorError {
    #[error("target of {0} is not visible")]
    TargetNotVisible(String),
    #[error("destination of {0} is not visible")]
    DestinationNotVisible(String),
    #[error("no skill at index {0}")]
    UnknownSkill(usize),
}

/// Indexed set of skills available to sub-tasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillLibrary {
    skills: Vec<SkillKind>,
}

impl SkillLibrary {
    pub fn standard() -> Self {
        use SkillKind::*;
        Self { skills: vec![Reach, Grasp, Place, Flip, Press, Retreat, Insert] }
    }

    pub fn kind(&self, index: usize) -> Option<SkillKind> {
        self.skills.get(index).copied()
    }

    pub fn index_of(&self, kind: SkillKind) -> Option<usize> {
        self.skills.iter().position(|k| *k == kind)
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub actions: Vec<ActionCommand>,
    pub start_step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutorConfig {
    /// Chunks hold `horizon + 1` actions.
    pub horizon: usize,
    pub schedule: DiffusionSchedule,
    pub settle_tolerance: f64,
    pub grip_tolerance: f64,
    /// Execute nominal chunks directly, skipping the sampler.
    pub bypass_sampler: bool,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            horizon: 7,
            schedule: DiffusionSchedule::default(),
            settle_tolerance: 1.0,
            grip_tolerance: 0.05,
            bypass_sampler: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointReason {
    ChunkBoundary,
    BudgetExhausted,
    SkillSettled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub subtask_id: String,
    pub index: u32,
    pub start_step: u64,
    pub end_step: u64,
    pub nominal: Vec<[f64; PROPRIO_DIM]>,
    pub executed: Vec<[f64; PROPRIO_DIM]>,
    /// Image digest after each executed action.
    pub step_digests: Vec<String>,
    pub end_observation: ObservationDigest,
    pub end_effectors: [(f64, f64, f64); 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutorReport {
    pub chunks_executed: u32,
    pub steps_used: u32,
    pub final_observation: Observation,
    pub checkpoint_reason: CheckpointReason,
    pub target_not_visible: bool,
    pub chunks: Vec<ChunkRecord>,
}

/// Run the sub-task's skill until it settles, its target disappears or
/// `budget` steps are spent. The mask follows the scene every step.
pub fn execute_subtask(
    env: &mut Env,
    t: &SubTask,
    mask: Mask,
    budget: u32,
    seed: u64,
    cfg: &ExecutorConfig,
) -> ExecutorReport {
    let world = env.config().clone();
    let mut mask = mask;
    let mut progress = SkillProgress::default();
    let mut steps_used: u32 = 0;
    let mut chunks = Vec::new();
    let mut reason = CheckpointReason::BudgetExhausted;
    let mut not_visible = false;

    while steps_used < budget {
        let obs = env.observation().clone();
        let filtered = apply_filter(&obs.image, &mask).expect("mask matches the rendered image");
        let nominal = match nominal_chunk(t, &filtered, &obs.proprio, obs.time_step, &world, cfg, &mut progress) {
            Ok(n) => n,
            Err(e) => {
                log::debug!("{e}");
                not_visible = matches!(e, ExecutorError::TargetNotVisible(_));
                reason = CheckpointReason::ChunkBoundary;
                break;
            }
        };
        if nominal.settled {
            reason = CheckpointReason::SkillSettled;
            break;
        }
        let index = chunks.len() as u32;
        let executed: Vec<ActionCommand> = if cfg.bypass_sampler {
            nominal.chunk.actions.clone()
        } else {
            let s = crate::derive_seed(&[&seed.to_le_bytes(), &index.to_le_bytes()]);
            let sampled = sample_chunk(&nominal.chunk, &cfg.schedule, s, world.joint_delta_max);
            sampled.actions.iter().map(quantize).collect()
        };
        let take = executed.len().min((budget - steps_used) as usize);
        let mut digests = Vec::with_capacity(take);
        for a in &executed[..take] {
            let o = env.step(a);
            digests.push(image_digest(&o.image));
            mask = propagate(&o.image, &mask, o.time_step);
        }
        steps_used += take as u32;
        let end = env.observation();
        let state = env.state();
        chunks.push(ChunkRecord {
            subtask_id: t.id.clone(),
            index,
            start_step: obs.time_step,
            end_step: end.time_step,
            nominal: nominal.chunk.actions[..take].iter().map(|a| a.values).collect(),
            executed: executed[..take].iter().map(|a| a.values).collect(),
            step_digests: digests,
            end_observation: ObservationDigest { image_sha256: image_digest(&end.image), percept: extract(end, &world) },
            end_effectors: [0, 1].map(|arm| forward_kinematics(&world, arm, &state.arms[arm].joints)),
        });
    }

    ExecutorReport {
        chunks_executed: chunks.len() as u32,
        steps_used,
        final_observation: env.observation().clone(),
        checkpoint_reason: reason,
        target_not_visible: not_visible,
        chunks,
    }
}
