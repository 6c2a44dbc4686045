//! Episode memory: verbatim history window, working-memory assertions and the
//! error register. Every operation consumes a state and returns the next one.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::percept::{LampState, PerceptSummary};
use crate::planner::{scanner_comparison, CompletionSignal, Literal, ObjRef, Recommendation, SkillKind, SubTask};
use crate::world::Image;

pub const DEFAULT_WINDOW: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("history entry at step {got} does not follow step {last}")]
    OutOfOrderEntry { last: u64, got: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationDigest {
    /// SHA-256 of the raw raster, hex encoded.
    pub image_sha256: String,
    pub percept: PerceptSummary,
}

impl ObservationDigest {
    pub fn new(image: &Image, percept: PerceptSummary) -> Self {
        Self { image_sha256: image_digest(image), percept }
    }
}

pub fn image_digest(image: &Image) -> String {
    let mut h = Sha256::new();
    h.update((image.width as u32).to_le_bytes());
    h.update((image.height as u32).to_le_bytes());
    h.update(&image.data);
    hex::encode(h.finalize())
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub chunks: u32,
    /// Final (x, y, theta) of both end-effectors.
    pub end_effectors: [(f64, f64, f64); 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub step_index: u64,
    pub observation_digest: ObservationDigest,
    pub subtask_id: String,
    pub action_summary: ActionSummary,
    pub completion: Option<CompletionSignal>,
    /// Role bindings the sub-task was issued with.
    pub bindings: BTreeMap<String, ObjRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub subject: String,
    pub predicate: String,
    pub value: String,
    pub source_step: u64,
}

/// Ordered fact store with at most one value per (subject, predicate).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingMemory {
    assertions: Vec<Assertion>,
    rendered: String,
}

impl WorkingMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assertions(&self) -> &[Assertion] {
        &self.assertions
    }

    pub fn len(&self) -> usize {
        self.assertions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assertions.is_empty()
    }

    /// Canonical text form, one `subject predicate value @step` line per fact.
    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    fn position(&self, subject: &str, predicate: &str) -> Result<usize, usize> {
        self.assertions
            .binary_search_by(|a| (a.subject.as_str(), a.predicate.as_str()).cmp(&(subject, predicate)))
    }

    pub fn get(&self, subject: &str, predicate: &str) -> Option<&Assertion> {
        self.position(subject, predicate).ok().map(|i| &self.assertions[i])
    }

    pub fn value(&self, subject: &str, predicate: &str) -> Option<&str> {
        self.get(subject, predicate).map(|a| a.value.as_str())
    }

    /// Insert or overwrite. An older `source_step` never replaces a newer one.
    pub fn assert_fact(&mut self, subject: &str, predicate: &str, value: &str, source_step: u64) {
        let fact = Assertion {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            value: value.to_string(),
            source_step,
        };
        match self.position(subject, predicate) {
            Ok(i) if self.assertions[i].source_step > source_step => return,
            Ok(i) => self.assertions[i] = fact,
            Err(i) => self.assertions.insert(i, fact),
        }
        self.render();
    }

    pub fn retract(&mut self, subject: &str, predicate: &str) {
        if let Ok(i) = self.position(subject, predicate) {
            self.assertions.remove(i);
            self.render();
        }
    }

    fn render(&mut self) {
        self.rendered.clear();
        for a in &self.assertions {
            let _ = writeln!(self.rendered, "{} {} {} @{}", a.subject, a.predicate, a.value, a.source_step);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub subtask_id: String,
    pub diagnosis: String,
    pub recommendation: Recommendation,
    /// Failures already recorded for this sub-task when this one was added.
    pub attempt_index: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryState {
    pub history: Vec<EpisodeEntry>,
    pub working: WorkingMemory,
    pub errors: Vec<ErrorRecord>,
    pub summarized_count: usize,
}

impl MemoryState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total_appended(&self) -> usize {
        self.summarized_count + self.history.len()
    }

    pub fn last_step(&self) -> Option<u64> {
        self.history.last().map(|e| e.step_index)
    }

    pub fn append_history(mut self, e: EpisodeEntry) -> Result<Self, MemoryError> {
        if let Some(last) = self.last_step() {
            if e.step_index <= last {
                return Err(MemoryError::OutOfOrderEntry { last, got: e.step_index });
            }
        }
        self.history.push(e);
        Ok(self)
    }

    /// Fold all but the newest `n_h` entries into working memory.
    pub fn compress_history(mut self, n_h: usize) -> Self {
        if self.history.len() <= n_h {
            return self;
        }
        let excess = self.history.len() - n_h;
        for e in self.history.drain(..excess) {
            if let Some(c) = e.completion {
                self.working.assert_fact(&e.subtask_id, "outcome", &c.to_string(), e.step_index);
            }
        }
        self.summarized_count += excess;
        self
    }

    pub fn update_working_memory(mut self, percept: &PerceptSummary, t: &SubTask, c: CompletionSignal) -> Self {
        let step = percept.step;
        let w = &mut self.working;

        match c {
            CompletionSignal::Success => {
                for p in &t.post {
                    w.assert_fact(&p.subject, p.relation.name(), &p.value.to_string(), step);
                }
            }
            _ => w.assert_fact(&t.id, "outcome", &c.to_string(), step),
        }

        for (role, obj) in &t.bindings {
            w.assert_fact(role, "is", &obj.to_string(), step);
        }
        for o in &percept.objects {
            let subject = ObjRef { kind: o.kind, color_tag: o.color_tag }.to_string();
            w.assert_fact(&subject, "cell", &format!("{},{}", o.cell.0, o.cell.1), step);
            if let Some(l) = o.lamp {
                let v = match l {
                    LampState::Off => "off",
                    LampState::On => "on",
                    LampState::CompareLeft => "left",
                    LampState::CompareRight => "right",
                };
                w.assert_fact(&subject, "lamp", v, step);
            }
        }
        if let Some((smaller, larger)) = scanner_comparison(percept) {
            w.assert_fact(&pair_subject(smaller, larger), "larger", &larger.to_string(), step);
        }

        match t.skill() {
            Some(SkillKind::Insert) => {
                let current = battery_orientation(w);
                let tried = if t.params.orientation_hint == crate::planner::OrientationHint::Flip {
                    -current
                } else {
                    current
                };
                if c != CompletionSignal::Success {
                    w.assert_fact("battery", "polarity_tried", &format_sign(tried), step);
                }
                w.assert_fact("battery", "orientation", &format_sign(tried), step);
            }
            Some(SkillKind::Flip) if c == CompletionSignal::Success => {
                let current = battery_orientation(w);
                w.assert_fact("battery", "orientation", &format_sign(-current), step);
            }
            _ => {}
        }
        self
    }

    pub fn record_error(mut self, r: ErrorRecord) -> Self {
        self.errors.push(r);
        self
    }

    pub fn retry_count(&self, subtask_id: &str) -> u32 {
        self.errors.iter().filter(|e| e.subtask_id == subtask_id).count() as u32
    }

    /// The slice of memory a consumer is allowed to read.
    pub fn view(&self, history: bool, working: bool, errors: bool) -> MemoryState {
        MemoryState {
            history: if history { self.history.clone() } else { Vec::new() },
            working: if working { self.working.clone() } else { WorkingMemory::new() },
            errors: if errors { self.errors.clone() } else { Vec::new() },
            summarized_count: self.summarized_count,
        }
    }
}

/// Subject under which a pairwise comparison is stored; order independent.
pub fn pair_subject(a: ObjRef, b: ObjRef) -> String {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    format!("pair:{lo}|{hi}")
}

/// Believed battery orientation sign, +1 until a flip is recorded.
pub fn battery_orientation(w: &WorkingMemory) -> i8 {
    match w.value("battery", "orientation") {
        Some("-1") => -1,
        _ => 1,
    }
}

fn format_sign(s: i8) -> String {
    if s < 0 { "-1".into() } else { "+1".into() }
}

/// True when `w` holds `(subject, relation, value)` literally.
pub fn holds(w: &WorkingMemory, subject: &str, relation: &str, value: &Literal) -> bool {
    w.value(subject, relation) == Some(value.to_string().as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percept::EffectorPose;

    fn percept(step: u64) -> PerceptSummary {
        let ee = EffectorPose { x: 0.0, y: 0.0, theta: 0.0, cell: (0, 0) };
        PerceptSummary { step, objects: vec![], end_effectors: [ee; 2], grippers: [1.0; 2] }
    }

    fn entry(step: u64) -> EpisodeEntry {
        EpisodeEntry {
            step_index: step,
            observation_digest: ObservationDigest { image_sha256: String::new(), percept: percept(step) },
            subtask_id: format!("t{step}@0"),
            action_summary: ActionSummary { chunks: 1, end_effectors: [(0.0, 0.0, 0.0); 2] },
            completion: Some(CompletionSignal::Success),
            bindings: BTreeMap::new(),
        }
    }

    fn error(id: &str, n: u32) -> ErrorRecord {
        ErrorRecord { subtask_id: id.into(), diagnosis: "x".into(), recommendation: Recommendation::Retry, attempt_index: n }
    }

    #[test]
    fn append_keeps_order() {
        let mut m = MemoryState::new();
        for s in [3, 5, 9] {
            m = m.append_history(entry(s)).unwrap();
        }
        let steps: Vec<_> = m.history.iter().map(|e| e.step_index).collect();
        assert_eq!(steps, vec![3, 5, 9]);
        assert_eq!(
            m.append_history(entry(4)).unwrap_err(),
            MemoryError::OutOfOrderEntry { last: 9, got: 4 }
        );
    }

    #[test]
    fn compress_window() {
        let mut m = MemoryState::new();
        for s in 1..=5 {
            m = m.append_history(entry(s)).unwrap();
        }
        let m = m.compress_history(3);
        assert_eq!(m.history.len(), 3);
        assert_eq!(m.summarized_count, 2);
        assert_eq!(m.working.value("t1@0", "outcome"), Some("SUCCESS"));
        assert_eq!(m.clone().compress_history(3), m);

        let small = MemoryState::new().append_history(entry(1)).unwrap();
        assert_eq!(small.clone().compress_history(3), small);
    }

    #[test]
    fn overwrite_keeps_newest() {
        let mut w = WorkingMemory::new();
        w.assert_fact("block2", "zone", "A", 3);
        w.assert_fact("block2", "zone", "B", 7);
        assert_eq!(w.len(), 1);
        assert_eq!(w.get("block2", "zone").unwrap().source_step, 7);
        w.assert_fact("block2", "zone", "C", 5);
        assert_eq!(w.value("block2", "zone"), Some("B"));
    }

    #[test]
    fn rendering_is_order_independent() {
        let mut a = WorkingMemory::new();
        a.assert_fact("x", "p", "1", 0);
        a.assert_fact("a", "q", "2", 0);
        let mut b = WorkingMemory::new();
        b.assert_fact("a", "q", "2", 0);
        b.assert_fact("x", "p", "1", 0);
        assert_eq!(a.rendered(), b.rendered());
        assert_eq!(a.rendered(), "a q 2 @0\nx p 1 @0\n");
    }

    #[test]
    fn retry_counts() {
        let m = MemoryState::new().record_error(error("t1", 0)).record_error(error("t2", 0)).record_error(error("t1", 1));
        assert_eq!(m.retry_count("t1"), 2);
        assert_eq!(m.retry_count("t2"), 1);
        assert_eq!(m.retry_count("t3"), 0);
    }

    #[test]
    fn view_hides_disabled_parts() {
        let m = MemoryState::new().append_history(entry(1)).unwrap().record_error(error("t", 0));
        let v = m.view(false, true, false);
        assert!(v.history.is_empty() && v.errors.is_empty());
        assert_eq!(m.view(true, true, true), m);
    }
}
