//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::sync::OnceLock;

use longhorizon::memory::{ActionSummary, EpisodeEntry, ObservationDigest};
use longhorizon::percept::extract;
use longhorizon::planner::{run_episode, BBox, EpisodeConfig, EpisodeResult, NoisyBackend, OracleBackend, PlannerBackend, TraceEvent};
use longhorizon::world::{palette, reset, Env, Image, ObjectKind, TaskId, TaskSpec, BACKGROUND};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// PressButton seed whose first press is lost.
pub const GOLDEN_PRESS_SEED: u64 = 7;

pub const GOLDEN_PATTERN: [&str; 5] = ["press", "verify FAIL", "reflect RETRY", "press", "verify SUCCESS"];

pub fn episode(task: TaskId, seed: u64, backend: &dyn PlannerBackend, cfg: &EpisodeConfig) -> EpisodeResult {
    let goal = TaskSpec::new(task);
    let mut env = Env::new(goal.clone(), seed);
    run_episode(&goal, &mut env, backend, cfg).expect("every task has a plan template")
}

pub fn oracle_episode(task: TaskId, seed: u64, cfg: &EpisodeConfig) -> EpisodeResult {
    episode(task, seed, &OracleBackend, cfg)
}

pub fn noisy_episode(task: TaskId, seed: u64, p_verify: f64, cfg: &EpisodeConfig) -> EpisodeResult {
    episode(task, seed, &NoisyBackend { p_verify, seed }, cfg)
}

/// Start, verify and reflect events of the first sub-task, up to its first success.
pub fn first_subtask_pattern(r: &EpisodeResult) -> Vec<String> {
    let first = r.trace.iter().find_map(|e| match e {
        TraceEvent::SubtaskStart { id, .. } => Some(id.clone()),
        _ => None,
    });
    let Some(first) = first else { return Vec::new() };
    let skill = first.split(['_', '@']).next().unwrap_or_default().to_string();
    let mut out = Vec::new();
    for e in &r.trace {
        match e {
            TraceEvent::SubtaskStart { id, .. } if *id == first => out.push(skill.clone()),
            TraceEvent::Verify { id, signal, .. } if *id == first => {
                out.push(format!("verify {signal}"));
                if signal.to_string() == "SUCCESS" {
                    break;
                }
            }
            TraceEvent::Reflection { id, recommendation, .. } if *id == first => out.push(format!("reflect {recommendation}")),
            _ => {}
        }
    }
    out
}

/// Retry bound, one terminal signal per issued sub-task, global budget.
pub fn check_episode_bounds(r: &EpisodeResult, cfg: &EpisodeConfig) -> Result<(), String> {
    if let Some(s) = r.subtask_signals.iter().find(|s| s.retries > cfg.n_max) {
        return Err(format!("{} ran with {} prior failures", s.id, s.retries));
    }
    if r.steps > cfg.global_budget {
        return Err(format!("{} steps exceed the budget of {}", r.steps, cfg.global_budget));
    }
    let mut open: Option<&str> = None;
    let mut verified = 0;
    for e in &r.trace {
        match e {
            TraceEvent::SubtaskStart { id, .. } | TraceEvent::GroundingFailed { id, .. } => {
                if let Some(prev) = open {
                    return Err(format!("{prev} never received a signal"));
                }
                open = Some(id);
            }
            TraceEvent::Verify { id, .. } => {
                if open != Some(id.as_str()) {
                    return Err(format!("signal for {id} without a start"));
                }
                open = None;
                verified += 1;
            }
            _ => {}
        }
    }
    if let Some(prev) = open {
        return Err(format!("{prev} never received a signal"));
    }
    if verified != r.subtask_signals.len() {
        return Err(format!("{verified} signals in the trace, {} recorded", r.subtask_signals.len()));
    }
    Ok(())
}

/// Background with overlapping rectangles in a few sprite colors, plus
/// distractor boxes anywhere in the frame.
pub fn synthetic_scene(seed: u64) -> (Image, Vec<BBox>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (rng.random_range(8..40), rng.random_range(8..40));
    let mut img = Image::filled(w, h, BACKGROUND);
    let colors = [palette(ObjectKind::Block, 0), palette(ObjectKind::Can, 1), palette(ObjectKind::Button, 2), [200, 10, 10]];
    for _ in 0..rng.random_range(0..8) {
        let (u0, v0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (u1, v1) = ((u0 + rng.random_range(1..10)).min(w), (v0 + rng.random_range(1..10)).min(h));
        let c = colors[rng.random_range(0..colors.len())];
        for v in v0..v1 {
            for u in u0..u1 {
                img.set(u, v, c);
            }
        }
    }
    let boxes = (0..rng.random_range(0..4))
        .map(|_| {
            let (x0, y0) = (rng.random_range(0..w as i32), rng.random_range(0..h as i32));
            BBox::new(x0, y0, rng.random_range(x0 + 1..=w as i32), rng.random_range(y0 + 1..=h as i32))
        })
        .collect();
    (img, boxes)
}

/// History entry with a real percept, for memory tests.
pub fn template_entry() -> &'static EpisodeEntry {
    static ENTRY: OnceLock<EpisodeEntry> = OnceLock::new();
    ENTRY.get_or_init(|| {
        let (state, obs) = reset(&TaskSpec::new(TaskId::PressButton), 0);
        EpisodeEntry {
            step_index: 0,
            observation_digest: ObservationDigest::new(&obs.image, extract(&obs, &state.config)),
            subtask_id: "press_a@0".into(),
            action_summary: ActionSummary { chunks: 1, end_effectors: [(0.0, 0.0, 0.0); 2] },
            completion: None,
            bindings: Default::default(),
        }
    })
}

