use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::memory::WorkingMemory;
use crate::percept::PerceptSummary;
use crate::world::ObjectKind;

use super::PlannerError;

/// Axis-aligned pixel box, half-open: `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: i32,
    pub y_min: i32,
    pub x_max: i32,
    pub y_max: i32,
}

impl BBox {
    pub fn new(x_min: i32, y_min: i32, x_max: i32, y_max: i32) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn is_valid(&self, width: usize, height: usize) -> bool {
        self.x_min < self.x_max
            && self.y_min < self.y_max
            && self.x_min >= 0
            && self.y_min >= 0
            && self.x_max <= width as i32
            && self.y_max <= height as i32
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        let (u, v) = (u as i32, v as i32);
        u >= self.x_min && u < self.x_max && v >= self.y_min && v < self.y_max
    }

    pub fn center(&self) -> (usize, usize) {
        (((self.x_min + self.x_max - 1) / 2) as usize, ((self.y_min + self.y_max - 1) / 2) as usize)
    }
}

/// Concrete identity of a scene object: rendered kind plus color tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjRef {
    pub kind: ObjectKind,
    pub color_tag: u8,
}

impl fmt::Display for ObjRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}:{}", self.kind, self.color_tag)
    }
}

impl std::str::FromStr for ObjRef {
    type Err = PlannerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PlannerError::UnknownSubject(s.to_string());
        let (kind, tag) = s.split_once(':').ok_or_else(bad)?;
        let kind = ObjectKind::ALL.into_iter().find(|k| format!("{k:?}") == kind).ok_or_else(bad)?;
        Ok(ObjRef { kind, color_tag: tag.parse().map_err(|_| bad())? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    InZone,
    Held,
    Inserted,
    LampOn,
    Adjacent,
    OrderedBefore,
    Visible,
}

impl Relation {
    pub fn name(self) -> &'static str {
        match self {
            Relation::InZone => "in_zone",
            Relation::Held => "held",
            Relation::Inserted => "inserted",
            Relation::LampOn => "lamp_on",
            Relation::Adjacent => "adjacent",
            Relation::OrderedBefore => "ordered_before",
            Relation::Visible => "visible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Name(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Name(n) => f.write_str(n),
        }
    }
}

/// Symbolic fact over a role name (`"battery"`, `"button_a"`), bound to a
/// concrete object when the sub-task is issued.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub subject: String,
    pub relation: Relation,
    pub value: Literal,
}

impl Predicate {
    pub fn is(subject: &str, relation: Relation, value: bool) -> Self {
        Self { subject: subject.to_string(), relation, value: Literal::Bool(value) }
    }

    pub fn rel(subject: &str, relation: Relation, other: &str) -> Self {
        Self { subject: subject.to_string(), relation, value: Literal::Name(other.to_string()) }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation.name(), self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CompletionSignal {
    Success,
    Fail,
    Timeout,
}

impl fmt::Display for CompletionSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompletionSignal::Success => "SUCCESS",
            CompletionSignal::Fail => "FAIL",
            CompletionSignal::Timeout => "TIMEOUT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Recommendation {
    Retry,
    AdjustParam,
    Replan,
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recommendation::Retry => "RETRY",
            Recommendation::AdjustParam => "ADJUST_PARAM",
            Recommendation::Replan => "REPLAN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecoveryAction {
    ReExecute,
    Replan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkillKind {
    Reach,
    Grasp,
    Place,
    Flip,
    Press,
    Retreat,
    Insert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationHint {
    #[default]
    Keep,
    Flip,
}

impl OrientationHint {
    pub fn toggled(self) -> Self {
        match self {
            OrientationHint::Keep => OrientationHint::Flip,
            OrientationHint::Flip => OrientationHint::Keep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadSide {
    Left,
    Right,
}

/// Where a carried object should be released.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    /// Center of the fixture bound to this role.
    Role(String),
    /// One half of the scanner bound to this role.
    Pad(String, PadSide),
    /// A fixed table point.
    Point(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubTaskParams {
    /// Role the skill acts on.
    pub target: Option<String>,
    pub destination: Option<Destination>,
    /// Direction (degrees) of the pre-grasp waypoint relative to the target.
    pub approach_direction: f64,
    /// Extra standoff (world units) of the pre-grasp waypoint.
    pub grasp_offset: f64,
    pub orientation_hint: OrientationHint,
    /// Roles bound for context without being acted on.
    pub extra_roles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
    Boxes(Vec<BBox>),
}

pub type ParamPatch = BTreeMap<String, ParamValue>;

/// One unit of delegation from the planner to the executor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTask {
    /// Unique within a plan revision, e.g. `press_a@0`.
    pub id: String,
    pub instruction: String,
    pub pre: Vec<Predicate>,
    pub post: Vec<Predicate>,
    /// Executor step budget.
    pub max_steps: u32,
    pub distractor_boxes: Vec<BBox>,
    pub skill_index: usize,
    pub params: SubTaskParams,
    /// Role -> object bindings resolved when the sub-task is issued.
    pub bindings: BTreeMap<String, ObjRef>,
}

impl SubTask {
    /// Template name without the revision suffix.
    pub fn name(&self) -> &str {
        self.id.split('@').next().unwrap_or(&self.id)
    }

    pub fn skill(&self) -> Option<SkillKind> {
        crate::executor::SkillLibrary::standard().kind(self.skill_index)
    }
}

/// Apply a reflection patch. Only the four adjustment slots may change.
pub fn adjust_params(t: &SubTask, patch: &ParamPatch, width: usize, height: usize) -> Result<SubTask, PlannerError> {
    let mut out = t.clone();
    for (key, value) in patch {
        match (key.as_str(), value) {
            ("approach_direction", ParamValue::Number(d)) => out.params.approach_direction = d.rem_euclid(360.0),
            ("grasp_offset", ParamValue::Number(g)) => out.params.grasp_offset = *g,
            ("orientation_hint", ParamValue::Text(s)) => {
                out.params.orientation_hint = match s.as_str() {
                    "keep" => OrientationHint::Keep,
                    "flip" => OrientationHint::Flip,
                    other => return Err(PlannerError::InvalidParam(format!("orientation_hint={other}"))),
                }
            }
            ("distractor_boxes", ParamValue::Boxes(b)) => {
                if let Some(bad) = b.iter().find(|b| !b.is_valid(width, height)) {
                    return Err(PlannerError::InvalidParam(format!("box out of bounds: {bad:?}")));
                }
                out.distractor_boxes = b.clone();
            }
            ("approach_direction" | "grasp_offset" | "orientation_hint" | "distractor_boxes", _) => {
                return Err(PlannerError::InvalidParam(key.clone()))
            }
            _ => return Err(PlannerError::UnknownParamKey(key.clone())),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub subtasks: Vec<SubTask>,
    pub revision: u32,
}

impl Plan {
    /// Same sub-tasks under revision `r`; ids become `name@r`.
    pub fn with_revision(mut self, r: u32) -> Self {
        self.revision = r;
        for t in &mut self.subtasks {
            t.id = format!("{}@{r}", t.name());
        }
        self
    }

    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureContext {
    pub final_percept: PerceptSummary,
    pub subtask: SubTask,
    pub signal: CompletionSignal,
    pub working_snapshot: WorkingMemory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionOutcome {
    pub diagnosis: String,
    pub recommendation: Recommendation,
    pub param_patch: Option<ParamPatch>,
}

impl ReflectionOutcome {
    pub fn new(diagnosis: &str, recommendation: Recommendation) -> Self {
        debug_assert!(recommendation != Recommendation::AdjustParam);
        Self { diagnosis: diagnosis.to_string(), recommendation, param_patch: None }
    }

    pub fn adjust(diagnosis: &str, patch: ParamPatch) -> Self {
        Self { diagnosis: diagnosis.to_string(), recommendation: Recommendation::AdjustParam, param_patch: Some(patch) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SubTask {
        SubTask {
            id: "pick_target@0".into(),
            instruction: "pick".into(),
            pre: vec![],
            post: vec![Predicate::is("target", Relation::Held, true)],
            max_steps: 40,
            distractor_boxes: vec![],
            skill_index: 1,
            params: SubTaskParams::default(),
            bindings: BTreeMap::new(),
        }
    }

    #[test]
    fn empty_patch_is_identity() {
        let t = sample();
        assert_eq!(adjust_params(&t, &ParamPatch::new(), 64, 64).unwrap(), t);
    }

    #[test]
    fn approach_patch_only_changes_params() {
        let t = sample();
        let mut p = ParamPatch::new();
        p.insert("approach_direction".into(), ParamValue::Number(90.0));
        let out = adjust_params(&t, &p, 64, 64).unwrap();
        assert_eq!(out.params.approach_direction, 90.0);
        assert_eq!((out.id.as_str(), &out.instruction, &out.post), (t.id.as_str(), &t.instruction, &t.post));
        assert_eq!(out.distractor_boxes, t.distractor_boxes);
    }

    #[test]
    fn box_patch_is_bounds_checked() {
        let t = sample();
        let mut p = ParamPatch::new();
        p.insert("distractor_boxes".into(), ParamValue::Boxes(vec![BBox::new(2, 2, 8, 8)]));
        assert_eq!(adjust_params(&t, &p, 64, 64).unwrap().distractor_boxes, vec![BBox::new(2, 2, 8, 8)]);
        p.insert("distractor_boxes".into(), ParamValue::Boxes(vec![BBox::new(60, 2, 70, 8)]));
        assert!(matches!(adjust_params(&t, &p, 64, 64), Err(PlannerError::InvalidParam(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        let mut p = ParamPatch::new();
        p.insert("speed".into(), ParamValue::Number(1.0));
        assert!(matches!(adjust_params(&sample(), &p, 64, 64), Err(PlannerError::UnknownParamKey(k)) if k == "speed"));
    }
}
