//! High-level decision cycle: templated plans, predicate checks, verification,
//! reflection and recovery over a pluggable backend.

mod backend;
mod cycle;
mod reflect;
mod templates;
mod types;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::memory::WorkingMemory;
use crate::percept::{DetectedObject, LampState, PerceptSummary};
use crate::world::ObjectKind;

pub use backend::{NoisyBackend, OracleBackend, PlannerBackend};
pub use cycle::{run_episode, AblationFlags, EpisodeConfig, EpisodeResult, SubtaskSignal, TraceEvent};
pub use reflect::reflect;
pub use templates::{instantiate, plan, template_for, PAD_OFFSET, PARK_POINTS};
pub use types::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("no plan template for task {0}")]
    NoApplicableTemplate(String),
    #[error("predicate subject {0} is not detected")]
    UnknownSubject(String),
    #[error("unknown parameter key {0}")]
    UnknownParamKey(String),
    #[error("invalid parameter value: {0}")]
    InvalidParam(String),
    #[error("cannot ground role {0}")]
    UnboundRole(String),
}

/// Choose between re-running the same sub-task and replanning.
pub fn recover(c: CompletionSignal, rho: Recommendation, n: u32, n_max: u32) -> RecoveryAction {
    let retryable = matches!(rho, Recommendation::Retry | Recommendation::AdjustParam);
    if c == CompletionSignal::Fail && retryable && n < n_max {
        RecoveryAction::ReExecute
    } else {
        RecoveryAction::Replan
    }
}

/// Locate the single visible object bound to `role`.
pub fn locate<'a>(
    role: &str,
    bindings: &BTreeMap<String, ObjRef>,
    percept: &'a PerceptSummary,
) -> Result<&'a DetectedObject, PlannerError> {
    let r = bindings.get(role).ok_or_else(|| PlannerError::UnknownSubject(role.to_string()))?;
    percept.unique(r.kind, r.color_tag).ok_or_else(|| PlannerError::UnknownSubject(role.to_string()))
}

fn inside_fixture(o: &DetectedObject, fixture: &DetectedObject) -> bool {
    !o.held && fixture.contains(o.center.0, o.center.1)
}

/// Evaluate one predicate against the percept.
pub fn eval_predicate(
    p: &Predicate,
    bindings: &BTreeMap<String, ObjRef>,
    percept: &PerceptSummary,
) -> Result<bool, PlannerError> {
    if p.relation == Relation::Visible {
        let seen = locate(&p.subject, bindings, percept).is_ok();
        return Ok(Literal::Bool(seen) == p.value);
    }
    let o = locate(&p.subject, bindings, percept)?;
    let other = |name: &str| locate(name, bindings, percept);
    Ok(match (p.relation, &p.value) {
        (Relation::Held, Literal::Bool(b)) => o.held == *b,
        (Relation::InZone, Literal::Name(zone)) => inside_fixture(o, other(zone)?),
        (Relation::InZone, Literal::Bool(b)) => {
            let in_any = percept
                .objects
                .iter()
                .filter(|f| matches!(f.kind, ObjectKind::Slot | ObjectKind::Scanner))
                .any(|f| inside_fixture(o, f));
            in_any == *b
        }
        (Relation::Inserted, Literal::Name(slot)) => {
            let s = other(slot)?;
            inside_fixture(o, s) && s.lamp == Some(LampState::On)
        }
        (Relation::LampOn, Literal::Bool(b)) => (o.lamp == Some(LampState::On)) == *b,
        (Relation::Adjacent, Literal::Name(n)) => {
            let q = other(n)?;
            (o.center.0 - q.center.0).abs().max((o.center.1 - q.center.1).abs()) <= 6.0
        }
        (Relation::OrderedBefore, Literal::Name(n)) => o.center.0 < other(n)?.center.0,
        _ => false,
    })
}

/// Conjunction of `pre`; undetected subjects count as false and are logged.
pub fn check_precondition(pre: &[Predicate], bindings: &BTreeMap<String, ObjRef>, percept: &PerceptSummary) -> bool {
    pre.iter().all(|p| match eval_predicate(p, bindings, percept) {
        Ok(v) => v,
        Err(e) => {
            log::debug!("{e}");
            false
        }
    })
}

/// Deterministic verifier. Subjects missing from the percept fall back to
/// working-memory facts.
pub fn verify(
    percept: &PerceptSummary,
    post: &[Predicate],
    bindings: &BTreeMap<String, ObjRef>,
    working: &WorkingMemory,
    steps_used: u32,
    max_steps: u32,
) -> CompletionSignal {
    let satisfied = post_satisfied(percept, post, bindings, working);
    signal_for(satisfied, steps_used, max_steps)
}

pub(crate) fn post_satisfied(
    percept: &PerceptSummary,
    post: &[Predicate],
    bindings: &BTreeMap<String, ObjRef>,
    working: &WorkingMemory,
) -> bool {
    post.iter().all(|p| match eval_predicate(p, bindings, percept) {
        Ok(v) => v,
        Err(_) => crate::memory::holds(working, &p.subject, p.relation.name(), &p.value),
    })
}

pub(crate) fn signal_for(satisfied: bool, steps_used: u32, max_steps: u32) -> CompletionSignal {
    if satisfied {
        CompletionSignal::Success
    } else if steps_used >= max_steps {
        CompletionSignal::Timeout
    } else {
        CompletionSignal::Fail
    }
}

/// Scanner reading as (smaller, larger) when one loose block sits on each pad.
pub fn scanner_comparison(percept: &PerceptSummary) -> Option<(ObjRef, ObjRef)> {
    let scanner = percept.of_kind(ObjectKind::Scanner).next()?;
    let larger_left = match scanner.lamp? {
        LampState::CompareLeft => true,
        LampState::CompareRight => false,
        _ => return None,
    };
    let on_pad = |left: bool| -> Vec<ObjRef> {
        percept
            .of_kind(ObjectKind::Block)
            .filter(|b| inside_fixture(b, scanner) && (b.center.0 < scanner.center.0) == left)
            .map(|b| ObjRef { kind: b.kind, color_tag: b.color_tag })
            .collect()
    };
    let (l, r) = (on_pad(true), on_pad(false));
    if l.len() != 1 || r.len() != 1 {
        return None;
    }
    Some(if larger_left { (r[0], l[0]) } else { (l[0], r[0]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recover_examples() {
        use CompletionSignal::*;
        assert_eq!(recover(Fail, Recommendation::Retry, 0, 3), RecoveryAction::ReExecute);
        assert_eq!(recover(Timeout, Recommendation::Retry, 0, 3), RecoveryAction::Replan);
        assert_eq!(recover(Fail, Recommendation::Replan, 0, 3), RecoveryAction::Replan);
        assert_eq!(recover(Fail, Recommendation::AdjustParam, 3, 3), RecoveryAction::Replan);
    }

    #[test]
    fn timeout_only_at_budget() {
        assert_eq!(signal_for(false, 10, 10), CompletionSignal::Timeout);
        assert_eq!(signal_for(false, 9, 10), CompletionSignal::Fail);
        assert_eq!(signal_for(true, 10, 10), CompletionSignal::Success);
    }
}
