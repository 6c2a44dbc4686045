use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::memory::{ErrorRecord, MemoryState, WorkingMemory};
use crate::percept::PerceptSummary;
use crate::world::TaskSpec;

use super::{
    instantiate, plan, post_satisfied, reflect, signal_for, CompletionSignal, FailureContext, ObjRef, Plan,
    PlannerError, Predicate, ReflectionOutcome, SubTask,
};

/// The planner's reasoning slots. Implementations must be stateless between
/// calls; everything they remember arrives through `MemoryState`.
pub trait PlannerBackend: Send + Sync {
    fn plan(&self, goal: &TaskSpec, percept: &PerceptSummary, memory: &MemoryState) -> Result<Plan, PlannerError>;

    /// Resolve role bindings and distractor boxes right before issuing `t`.
    fn ground(
        &self,
        goal: &TaskSpec,
        t: &SubTask,
        percept: &PerceptSummary,
        memory: &MemoryState,
    ) -> Result<SubTask, PlannerError>;

    fn verify(
        &self,
        percept: &PerceptSummary,
        post: &[Predicate],
        bindings: &BTreeMap<String, ObjRef>,
        working: &WorkingMemory,
        steps_used: u32,
        max_steps: u32,
    ) -> CompletionSignal;

    fn reflect(&self, ctx: &FailureContext, errors: &[ErrorRecord]) -> ReflectionOutcome;

    fn mem_update(&self, m: MemoryState, percept: &PerceptSummary, t: &SubTask, c: CompletionSignal) -> MemoryState {
        m.update_working_memory(percept, t, c)
    }
}

/// Deterministic rule-based backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleBackend;

impl PlannerBackend for OracleBackend {
    fn plan(&self, goal: &TaskSpec, percept: &PerceptSummary, memory: &MemoryState) -> Result<Plan, PlannerError> {
        plan(goal, percept, memory)
    }

    fn ground(
        &self,
        goal: &TaskSpec,
        t: &SubTask,
        percept: &PerceptSummary,
        memory: &MemoryState,
    ) -> Result<SubTask, PlannerError> {
        instantiate(goal, t, percept, memory)
    }

    fn verify(
        &self,
        percept: &PerceptSummary,
        post: &[Predicate],
        bindings: &BTreeMap<String, ObjRef>,
        working: &WorkingMemory,
        steps_used: u32,
        max_steps: u32,
    ) -> CompletionSignal {
        super::verify(percept, post, bindings, working, steps_used, max_steps)
    }

    fn reflect(&self, ctx: &FailureContext, errors: &[ErrorRecord]) -> ReflectionOutcome {
        reflect(ctx, errors)
    }
}

/// Oracle whose verifier reports the wrong post-condition outcome with
/// probability `p_verify`. Each call draws from a generator keyed by
/// `(seed, percept step, post-condition text)`.
#[derive(Debug, Clone, Copy)]
pub struct NoisyBackend {
    pub p_verify: f64,
    pub seed: u64,
}

impl NoisyBackend {
    fn flip(&self, step: u64, post: &[Predicate]) -> bool {
        if self.p_verify <= 0.0 {
            return false;
        }
        let text: String = post.iter().map(|p| p.to_string()).collect();
        let key = crate::derive_seed(&[&self.seed.to_le_bytes(), &step.to_le_bytes(), text.as_bytes()]);
        ChaCha8Rng::seed_from_u64(key).random_bool(self.p_verify.min(1.0))
    }
}

impl PlannerBackend for NoisyBackend {
    fn plan(&self, goal: &TaskSpec, percept: &PerceptSummary, memory: &MemoryState) -> Result<Plan, PlannerError> {
        OracleBackend.plan(goal, percept, memory)
    }

    fn ground(
        &self,
        goal: &TaskSpec,
        t: &SubTask,
        percept: &PerceptSummary,
        memory: &MemoryState,
    ) -> Result<SubTask, PlannerError> {
        OracleBackend.ground(goal, t, percept, memory)
    }

    fn verify(
        &self,
        percept: &PerceptSummary,
        post: &[Predicate],
        bindings: &BTreeMap<String, ObjRef>,
        working: &WorkingMemory,
        steps_used: u32,
        max_steps: u32,
    ) -> CompletionSignal {
        let truth = post_satisfied(percept, post, bindings, working);
        let seen = truth != self.flip(percept.step, post);
        signal_for(seen, steps_used, max_steps)
    }

    fn reflect(&self, ctx: &FailureContext, errors: &[ErrorRecord]) -> ReflectionOutcome {
        OracleBackend.reflect(ctx, errors)
    }
}
