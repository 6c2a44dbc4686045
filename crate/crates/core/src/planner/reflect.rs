use crate::memory::ErrorRecord;
use crate::percept::LampState;

use super::{
    check_precondition, locate, CompletionSignal, FailureContext, ParamPatch, ParamValue, Recommendation,
    ReflectionOutcome, SkillKind,
};

/// Rule-table failure analysis.
pub fn reflect(ctx: &FailureContext, errors: &[ErrorRecord]) -> ReflectionOutcome {
    if ctx.signal == CompletionSignal::Timeout {
        return ReflectionOutcome::new("budget exhausted", Recommendation::Replan);
    }
    let outcome = analyse(ctx);
    let repeats = errors
        .iter()
        .filter(|e| e.subtask_id == ctx.subtask.id && e.diagnosis == outcome.diagnosis)
        .count();
    if repeats >= 2 {
        return ReflectionOutcome::new(&outcome.diagnosis, Recommendation::Replan);
    }
    outcome
}

fn analyse(ctx: &FailureContext) -> ReflectionOutcome {
    let t = &ctx.subtask;
    let p = &ctx.final_percept;
    let b = &t.bindings;

    let roles = t
        .pre
        .iter()
        .chain(&t.post)
        .map(|q| q.subject.as_str())
        .chain(t.params.target.as_deref());
    if roles.into_iter().any(|r| !b.contains_key(r)) {
        return ReflectionOutcome::new("target not identified", Recommendation::Replan);
    }
    if !check_precondition(&t.pre, b, p) {
        return ReflectionOutcome::new("precondition unmet", Recommendation::Replan);
    }

    let target = t.params.target.as_deref().and_then(|r| locate(r, b, p).ok());
    let Some(skill) = t.skill() else {
        return ReflectionOutcome::new("unexplained failure", Recommendation::Retry);
    };
    match skill {
        SkillKind::Press => {
            if target.map(|o| o.lamp != Some(LampState::On)).unwrap_or(false) {
                return ReflectionOutcome::new("press not registered", Recommendation::Retry);
            }
        }
        SkillKind::Insert => match target {
            Some(o) if o.held => return ReflectionOutcome::new("release incomplete", Recommendation::Retry),
            Some(o) if near_destination(o.center, ctx) => {
                let mut patch = ParamPatch::new();
                let hint = t.params.orientation_hint.toggled();
                patch.insert("orientation_hint".into(), ParamValue::Text(hint_name(hint).into()));
                return ReflectionOutcome::adjust("polarity mismatch suspected", patch);
            }
            _ => return grasp_missed(ctx),
        },
        SkillKind::Grasp | SkillKind::Place | SkillKind::Flip => match target {
            Some(o) if o.held && skill != SkillKind::Grasp => {
                return ReflectionOutcome::new("release incomplete", Recommendation::Retry)
            }
            Some(o) if !o.held => return grasp_missed(ctx),
            _ => {}
        },
        SkillKind::Reach | SkillKind::Retreat => {}
    }
    ReflectionOutcome::new("unexplained failure", Recommendation::Retry)
}

/// The object came to rest within a rejection distance of its receptacle.
fn near_destination(center: (f64, f64), ctx: &FailureContext) -> bool {
    let t = &ctx.subtask;
    let Some(super::Destination::Role(slot)) = &t.params.destination else {
        return false;
    };
    locate(slot, &t.bindings, &ctx.final_percept)
        .map(|s| (center.0 - s.center.0).hypot(center.1 - s.center.1) <= 8.0)
        .unwrap_or(false)
}

fn grasp_missed(ctx: &FailureContext) -> ReflectionOutcome {
    let mut patch = ParamPatch::new();
    let dir = (ctx.subtask.params.approach_direction + 90.0).rem_euclid(360.0);
    patch.insert("approach_direction".into(), ParamValue::Number(dir));
    ReflectionOutcome::adjust("grasp missed", patch)
}

fn hint_name(h: super::OrientationHint) -> &'static str {
    match h {
        super::OrientationHint::Keep => "keep",
        super::OrientationHint::Flip => "flip",
    }
}
