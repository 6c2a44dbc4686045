//! Per-task plan templates and issue-time grounding of roles.
//!
//! Templates speak about roles (`target`, `battery`, `button_a`, `rank0`).
//! A role is bound to a concrete object only when its sub-task is issued:
//! by visible identity when the goal names it, otherwise from working memory,
//! otherwise from the bindings of recent history entries. The planner never
//! guesses a binding.

use std::collections::BTreeMap;

use crate::executor::SkillLibrary;
use crate::memory::{battery_orientation, MemoryState};
use crate::percept::PerceptSummary;
use crate::world::{tags, ObjectKind, TaskId, TaskSpec};

use super::{
    check_precondition, post_satisfied, scanner_comparison, BBox, Destination, ObjRef, PadSide, Plan, PlannerError,
    Predicate, Relation, SkillKind, SubTask, SubTaskParams,
};

/// Parking spots beside the scanner used while comparing blocks.
pub const PARK_POINTS: [(f64, f64); 2] = [(10.5, 14.5), (53.5, 14.5)];
/// Horizontal offset of each scanner pad from the scanner center.
pub const PAD_OFFSET: f64 = 3.5;

fn budget(skill: SkillKind) -> u32 {
    match skill {
        SkillKind::Reach => 40,
        SkillKind::Grasp => 56,
        SkillKind::Place => 112,
        SkillKind::Flip => 80,
        SkillKind::Press => 56,
        SkillKind::Retreat => 32,
        SkillKind::Insert => 128,
    }
}

enum Selector {
    /// The goal names the object directly.
    Fixed(ObjRef),
    /// The only visible object of this kind, if unique right now.
    UniqueKind(ObjectKind),
    /// The ranking block of this size rank, from scanner comparisons.
    Rank(u8),
}

fn obj(kind: ObjectKind, color_tag: u8) -> ObjRef {
    ObjRef { kind, color_tag }
}

fn selector(task: TaskId, role: &str) -> Option<Selector> {
    use ObjectKind::*;
    use Selector::*;
    let indexed = |prefix: &str| role.strip_prefix(prefix).and_then(|s| s.parse::<u8>().ok());
    Some(match (task, role) {
        (TaskId::ObservePickUp, "target") => UniqueKind(Can),
        (TaskId::ObservePickUp, "goal") => Fixed(obj(Slot, tags::GOAL_ZONE)),
        (TaskId::RearrangeBlocks, _) if indexed("block_").is_some() => Fixed(obj(Block, indexed("block_")?)),
        (TaskId::RearrangeBlocks, _) if indexed("zone_").is_some() => Fixed(obj(Slot, indexed("zone_")?)),
        (TaskId::BatteryTry, "battery") => UniqueKind(Battery),
        (TaskId::BatteryTry, "slot") => Fixed(obj(Slot, tags::BATTERY_SLOT)),
        (TaskId::BlocksRankingTry, "scanner") => Fixed(obj(Scanner, 0)),
        (TaskId::BlocksRankingTry, "block_a") => Fixed(obj(Block, 0)),
        (TaskId::BlocksRankingTry, "block_b") => Fixed(obj(Block, 1)),
        (TaskId::BlocksRankingTry, "block_c") => Fixed(obj(Block, 2)),
        (TaskId::BlocksRankingTry, _) if indexed("slot_").is_some() => {
            Fixed(obj(Slot, tags::RANK_BASE + indexed("slot_")?))
        }
        (TaskId::BlocksRankingTry, _) if indexed("rank").is_some() => Rank(indexed("rank")?),
        (TaskId::PressButton, "button_a") => Fixed(obj(Button, 0)),
        (TaskId::PressButton, "button_b") => Fixed(obj(Button, 1)),
        _ => return None,
    })
}

struct Step {
    name: String,
    instruction: String,
    skill: SkillKind,
    target: &'static str,
    destination: Option<Destination>,
    pre: Vec<Predicate>,
    post: Vec<Predicate>,
    /// Extra roles bound alongside the ones the predicates mention.
    also: Vec<&'static str>,
}

impl Step {
    fn new(name: &str, instruction: &str, skill: SkillKind, target: &'static str) -> Self {
        Step {
            name: name.into(),
            instruction: instruction.into(),
            skill,
            target,
            destination: None,
            pre: vec![],
            post: vec![],
            also: vec![],
        }
    }

    fn to(mut self, d: Destination) -> Self {
        self.destination = Some(d);
        self
    }

    fn pre(mut self, p: Predicate) -> Self {
        self.pre.push(p);
        self
    }

    fn post(mut self, p: Predicate) -> Self {
        self.post.push(p);
        self
    }

    fn build(self, library: &SkillLibrary) -> SubTask {
        let skill_index = library.index_of(self.skill).expect("standard library has every skill");
        SubTask {
            id: format!("{}@0", self.name),
            instruction: self.instruction,
            pre: self.pre,
            post: self.post,
            max_steps: budget(self.skill),
            distractor_boxes: vec![],
            skill_index,
            params: SubTaskParams {
                target: Some(self.target.to_string()),
                destination: self.destination,
                extra_roles: self.also.iter().map(|s| s.to_string()).collect(),
                ..Default::default()
            },
            bindings: BTreeMap::new(),
        }
    }
}

fn role(name: &str) -> Destination {
    Destination::Role(name.into())
}

fn observe_pick_up() -> Vec<Step> {
    vec![
        Step::new("observe_target", "look at the can that is shown", SkillKind::Reach, "target")
            .post(Predicate::is("target", Relation::Visible, true)),
        Step::new("pick_target", "pick up the remembered can", SkillKind::Grasp, "target")
            .post(Predicate::is("target", Relation::Held, true)),
        Step::new("place_target", "put the can in the goal zone", SkillKind::Place, "target")
            .to(role("goal"))
            .post(Predicate::rel("target", Relation::InZone, "goal")),
    ]
}

fn rearrange_blocks() -> Vec<Step> {
    const BLOCKS: [&str; 3] = ["block_0", "block_1", "block_2"];
    (0..3)
        .map(|i| {
            let zone = format!("zone_{i}");
            Step::new(&format!("place_block_{i}"), &format!("move block {i} into zone {i}"), SkillKind::Place, BLOCKS[i])
                .to(Destination::Role(zone.clone()))
                .post(Predicate::rel(BLOCKS[i], Relation::InZone, &zone))
        })
        .collect()
}

fn battery_try(memory: &MemoryState) -> Vec<Step> {
    let insert = Step::new("insert_battery", "insert the battery into the receptacle", SkillKind::Insert, "battery")
        .to(role("slot"))
        .post(Predicate::rel("battery", Relation::Inserted, "slot"));
    let w = &memory.working;
    let current = battery_orientation(w);
    let failed_here = match w.value("battery", "polarity_tried") {
        Some("+1") => current == 1,
        Some("-1") => current == -1,
        _ => false,
    };
    if failed_here {
        let flip = Step::new("flip_battery", "turn the battery around", SkillKind::Flip, "battery")
            .post(Predicate::is("battery", Relation::Held, false));
        vec![flip, insert]
    } else {
        vec![insert]
    }
}

const RANK_BLOCKS: [&str; 3] = ["block_a", "block_b", "block_c"];

fn ranking_placements() -> Vec<Step> {
    const RANKS: [&str; 3] = ["rank0", "rank1", "rank2"];
    (0..3)
        .map(|r| {
            let slot = format!("slot_{r}");
            Step::new(&format!("place_rank{r}"), &format!("put the rank {r} block in slot {r}"), SkillKind::Place, RANKS[r])
                .to(Destination::Role(slot.clone()))
                .post(Predicate::rel(RANKS[r], Relation::InZone, &slot))
        })
        .collect()
}

fn ranking_comparisons() -> Vec<Step> {
    let pad = |who: &'static str, side: PadSide, name: &str| {
        Step::new(name, "put the block on the scanner", SkillKind::Place, who)
            .to(Destination::Pad("scanner".into(), side))
            .post(Predicate::rel(who, Relation::InZone, "scanner"))
    };
    let park = |who: &'static str, spot: usize, name: &str| {
        let (x, y) = PARK_POINTS[spot];
        Step::new(name, "move the block off the scanner", SkillKind::Place, who)
            .to(Destination::Point(x, y))
            .post(Predicate::is(who, Relation::InZone, false))
    };
    let mut steps = vec![
        pad("block_a", PadSide::Left, "a_to_left"),
        pad("block_b", PadSide::Right, "b_to_right"),
        park("block_b", 1, "b_to_park"),
        pad("block_c", PadSide::Right, "c_to_right"),
        park("block_a", 0, "a_to_park"),
        pad("block_b", PadSide::Left, "b_to_left"),
    ];
    for s in &mut steps {
        s.also = RANK_BLOCKS.iter().copied().chain(["scanner"]).collect();
    }
    steps
}

fn press_button() -> Vec<Step> {
    vec![
        Step::new("press_a", "press the first button", SkillKind::Press, "button_a")
            .post(Predicate::is("button_a", Relation::LampOn, true)),
        Step::new("press_b", "press the second button", SkillKind::Press, "button_b")
            .pre(Predicate::is("button_a", Relation::LampOn, true))
            .post(Predicate::is("button_b", Relation::LampOn, true)),
    ]
}

/// Template lookup by task name.
pub fn template_for(task_name: &str) -> Result<TaskId, PlannerError> {
    TaskId::parse(task_name).ok_or_else(|| PlannerError::NoApplicableTemplate(task_name.to_string()))
}

fn memory_is_blank(m: &MemoryState) -> bool {
    m.history.is_empty() && m.working.is_empty() && m.errors.is_empty() && m.summarized_count == 0
}

/// Build a plan for `goal`. With blank memory this is the template's full
/// sequence; otherwise sub-tasks whose post-conditions already hold are
/// dropped.
pub fn plan(goal: &TaskSpec, percept: &PerceptSummary, memory: &MemoryState) -> Result<Plan, PlannerError> {
    let library = SkillLibrary::standard();
    let (steps, independent) = match goal.task_id {
        TaskId::ObservePickUp => (observe_pick_up(), false),
        TaskId::RearrangeBlocks => (rearrange_blocks(), true),
        TaskId::BatteryTry => (battery_try(memory), false),
        TaskId::BlocksRankingTry => {
            if ranking(percept, memory).is_some() {
                (ranking_placements(), true)
            } else {
                let mut s = ranking_comparisons();
                s.extend(ranking_placements());
                (s, false)
            }
        }
        TaskId::PressButton => (press_button(), false),
    };
    let mut subtasks: Vec<SubTask> = steps.into_iter().map(|s| s.build(&library)).collect();

    if !memory_is_blank(memory) {
        // A flip leaves no visible trace, so its post-condition cannot show it already happened.
        let done = |t: &SubTask| {
            t.skill() != Some(SkillKind::Flip)
                && instantiate(goal, t, percept, memory)
                .map(|g| post_satisfied(percept, &g.post, &g.bindings, &crate::memory::WorkingMemory::new()))
                .unwrap_or(false)
        };
        if independent {
            subtasks.retain(|t| !done(t));
        } else {
            let skip = subtasks.iter().take_while(|t| done(t)).count();
            subtasks.drain(..skip);
        }
    }
    Ok(Plan { subtasks, revision: 0 })
}

/// Index at which a revised plan resumes: the first sub-task whose
/// pre-conditions hold, else the start.
pub(crate) fn resume_index(goal: &TaskSpec, plan: &Plan, percept: &PerceptSummary, memory: &MemoryState) -> usize {
    plan.subtasks
        .iter()
        .position(|t| {
            instantiate(goal, t, percept, memory)
                .map(|g| check_precondition(&g.pre, &g.bindings, percept))
                .unwrap_or(false)
        })
        .unwrap_or(0)
}

/// Roles a sub-task refers to.
pub(crate) fn roles_of(t: &SubTask) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |r: &str| {
        if !out.iter().any(|o| o == r) {
            out.push(r.to_string());
        }
    };
    for p in t.pre.iter().chain(&t.post) {
        push(&p.subject);
        if let super::Literal::Name(n) = &p.value {
            push(n);
        }
    }
    if let Some(r) = &t.params.target {
        push(r);
    }
    match &t.params.destination {
        Some(Destination::Role(r)) | Some(Destination::Pad(r, _)) => push(r),
        _ => {}
    }
    for r in &t.params.extra_roles {
        push(r);
    }
    out
}

/// Bind every role of `t` and compute its distractor boxes from `percept`.
pub fn instantiate(
    goal: &TaskSpec,
    t: &SubTask,
    percept: &PerceptSummary,
    memory: &MemoryState,
) -> Result<SubTask, PlannerError> {
    let mut out = t.clone();
    out.bindings.clear();
    let mut ranks: Option<Option<[ObjRef; 3]>> = None;
    for r in roles_of(t) {
        let bound = match selector(goal.task_id, &r).ok_or_else(|| PlannerError::UnboundRole(r.clone()))? {
            Selector::Fixed(o) => Some(o),
            Selector::UniqueKind(kind) => {
                let mut visible = percept.of_kind(kind);
                match (visible.next(), visible.next()) {
                    (Some(o), None) => Some(ObjRef { kind, color_tag: o.color_tag }),
                    _ => remembered(&r, memory),
                }
            }
            Selector::Rank(k) => ranks
                .get_or_insert_with(|| ranking(percept, memory))
                .map(|order| order[k as usize])
                .or_else(|| remembered(&r, memory)),
        };
        let bound = bound.ok_or_else(|| PlannerError::UnboundRole(r.clone()))?;
        out.bindings.insert(r, bound);
    }

    let target = t.params.target.as_ref().and_then(|r| out.bindings.get(r)).copied();
    let (w, h) = (crate::world::WorldConfig::default().image_width, crate::world::WorldConfig::default().image_height);
    out.distractor_boxes = percept
        .objects
        .iter()
        .filter(|o| !o.held && (o.kind.graspable() || o.kind == ObjectKind::Button))
        .filter(|o| Some(ObjRef { kind: o.kind, color_tag: o.color_tag }) != target)
        .map(|o| {
            BBox::new(
                o.bounds[0].saturating_sub(1) as i32,
                o.bounds[1].saturating_sub(1) as i32,
                (o.bounds[2] + 2).min(w) as i32,
                (o.bounds[3] + 2).min(h) as i32,
            )
        })
        .collect();
    Ok(out)
}

fn remembered(role: &str, memory: &MemoryState) -> Option<ObjRef> {
    if let Some(v) = memory.working.value(role, "is") {
        if let Ok(o) = v.parse() {
            return Some(o);
        }
    }
    memory.history.iter().rev().find_map(|e| e.bindings.get(role).copied())
}

/// Size order (smallest first) of the three ranking blocks, if the known
/// comparisons determine it.
pub(crate) fn ranking(percept: &PerceptSummary, memory: &MemoryState) -> Option<[ObjRef; 3]> {
    let blocks: Vec<ObjRef> = (0..3).map(|i| obj(ObjectKind::Block, i)).collect();
    let mut larger = [[false; 3]; 3];
    let mut note = |(small, big): (ObjRef, ObjRef)| {
        let i = blocks.iter().position(|b| *b == small);
        let j = blocks.iter().position(|b| *b == big);
        if let (Some(i), Some(j)) = (i, j) {
            larger[j][i] = true;
        }
    };
    if let Some(c) = scanner_comparison(percept) {
        note(c);
    }
    for a in memory.working.assertions() {
        if a.predicate != "larger" {
            continue;
        }
        let Some(pair) = a.subject.strip_prefix("pair:") else { continue };
        let Some((x, y)) = pair.split_once('|') else { continue };
        let (Ok(x), Ok(y), Ok(big)) = (x.parse::<ObjRef>(), y.parse::<ObjRef>(), a.value.parse::<ObjRef>()) else {
            continue;
        };
        let small = if big == x { y } else { x };
        note((small, big));
    }
    for e in &memory.history {
        if let Some(c) = scanner_comparison(&e.observation_digest.percept) {
            note(c);
        }
    }
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                if larger[i][k] && larger[k][j] {
                    larger[i][j] = true;
                }
            }
        }
    }
    let wins: Vec<usize> = (0..3).map(|i| larger[i].iter().filter(|&&b| b).count()).collect();
    let mut order = [blocks[0]; 3];
    for (i, &w) in wins.iter().enumerate() {
        if wins.iter().filter(|&&x| x == w).count() != 1 {
            return None;
        }
        order[w] = blocks[i];
    }
    Some(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percept::extract;
    use crate::world::reset;

    #[test]
    fn observe_pick_up_plan_shape() {
        let goal = TaskSpec::new(TaskId::ObservePickUp);
        let (s, o) = reset(&goal, 1);
        let p = plan(&goal, &extract(&o, &s.config), &MemoryState::new()).unwrap();
        let ids: Vec<_> = p.subtasks.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, ["observe_target@0", "pick_target@0", "place_target@0"]);
        assert_eq!(p.revision, 0);
    }

    #[test]
    fn battery_replan_flips_first() {
        let goal = TaskSpec::new(TaskId::BatteryTry);
        let (s, o) = reset(&goal, 1);
        let percept = extract(&o, &s.config);
        let mut m = MemoryState::new();
        m.working.assert_fact("battery", "polarity_tried", "+1", 5);
        let p = plan(&goal, &percept, &m).unwrap();
        assert_eq!(p.subtasks[0].name(), "flip_battery");
        assert_eq!(p.subtasks[1].name(), "insert_battery");
    }

    #[test]
    fn unique_can_binds_at_start_only() {
        let goal = TaskSpec::new(TaskId::ObservePickUp);
        let (s, o) = reset(&goal, 3);
        let percept = extract(&o, &s.config);
        let p = plan(&goal, &percept, &MemoryState::new()).unwrap();
        let g = instantiate(&goal, &p.subtasks[0], &percept, &MemoryState::new()).unwrap();
        assert_eq!(g.bindings["target"].kind, ObjectKind::Can);

        let mut late = s.clone();
        late.time_step = 50;
        let lp = extract(&late.observe(), &late.config);
        assert_eq!(
            instantiate(&goal, &p.subtasks[1], &lp, &MemoryState::new()).unwrap_err(),
            PlannerError::UnboundRole("target".into())
        );
        let mut m = MemoryState::new();
        m.working.assert_fact("target", "is", &g.bindings["target"].to_string(), 3);
        let g2 = instantiate(&goal, &p.subtasks[1], &lp, &m).unwrap();
        assert_eq!(g2.bindings["target"], g.bindings["target"]);
        assert_eq!(g2.distractor_boxes.len(), 5);
    }

    #[test]
    fn ranking_from_two_comparisons() {
        let mut m = MemoryState::new();
        let b = |i| obj(ObjectKind::Block, i);
        m.working.assert_fact(&crate::memory::pair_subject(b(0), b(1)), "larger", &b(1).to_string(), 1);
        m.working.assert_fact(&crate::memory::pair_subject(b(1), b(2)), "larger", &b(2).to_string(), 2);
        let goal = TaskSpec::new(TaskId::BlocksRankingTry);
        let (s, o) = reset(&goal, 0);
        let percept = extract(&o, &s.config);
        assert_eq!(ranking(&percept, &m), Some([b(0), b(1), b(2)]));
        let mut partial = MemoryState::new();
        partial.working.assert_fact(&crate::memory::pair_subject(b(0), b(1)), "larger", &b(0).to_string(), 1);
        assert_eq!(ranking(&percept, &partial), None);
    }

    #[test]
    fn unknown_task_has_no_template() {
        assert_eq!(template_for("StackCups"), Err(PlannerError::NoApplicableTemplate("StackCups".into())));
        assert_eq!(template_for("pressbutton"), Ok(TaskId::PressButton));
        assert!(selector(TaskId::PressButton, "target").is_none());
    }
}
