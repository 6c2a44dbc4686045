//! Seeded planar tabletop simulator.
//!
//! A 64 x 64 table viewed from above, two planar 6-joint arms (arm 0 works the
//! table from below, arm 1 is parked above it) and a handful of typed objects.
//! Everything here is a pure function of `(TaskSpec, seed, actions)`.

mod kinematics;
mod render;
mod scenario;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kinematics::{forward_kinematics, jacobian, link_points, wrap_angle};
pub use render::{palette, render, write_ppm, Rgb, BACKGROUND, LAMP_COMPARE_LEFT, LAMP_COMPARE_RIGHT, LAMP_OFF, LAMP_ON};
pub use scenario::{reset, task_success};

/// Number of revolute joints per arm.
pub const JOINTS: usize = 6;
/// Proprioceptive vector length: per arm 6 joints + 1 gripper aperture.
pub const PROPRIO_DIM: usize = 14;

/// Fixed color tags with a special meaning.
pub mod tags {
    /// Goal zone used by ObservePickUp.
    pub const GOAL_ZONE: u8 = 7;
    /// Battery receptacle.
    pub const BATTERY_SLOT: u8 = 6;
    /// Ranking slots use tags `RANK_BASE + i`.
    pub const RANK_BASE: u8 = 3;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub table_size: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub link_lengths: [f64; JOINTS],
    pub arm_bases: [(f64, f64); 2],
    pub home_joints: [[f64; JOINTS]; 2],
    /// Maximum joint delta per step, radians.
    pub joint_delta_max: f64,
    pub grasp_radius: f64,
    /// Aperture below which the gripper counts as closed.
    pub grip_threshold: f64,
    /// Step at which ObservePickUp distractors become visible.
    pub reveal_step: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            table_size: 64.0,
            image_width: 64,
            image_height: 64,
            link_lengths: [16.0, 14.0, 12.0, 8.0, 6.0, 4.0],
            arm_bases: [(32.0, -4.0), (32.0, 68.0)],
            home_joints: [
                [2.0, -1.0, -1.0, -1.0, -0.8, -0.4],
                [1.2, 0.3, 0.0, 0.0, 0.0, 0.0],
            ],
            joint_delta_max: 0.1,
            grasp_radius: 2.0,
            grip_threshold: 0.3,
            reveal_step: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    ObservePickUp,
    RearrangeBlocks,
    BatteryTry,
    BlocksRankingTry,
    PressButton,
}

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::ObservePickUp,
        TaskId::RearrangeBlocks,
        TaskId::BatteryTry,
        TaskId::BlocksRankingTry,
        TaskId::PressButton,
    ];

    pub fn memory_class(self) -> MemoryClass {
        match self {
            TaskId::ObservePickUp | TaskId::RearrangeBlocks => MemoryClass::M1,
            _ => MemoryClass::Mn,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::ObservePickUp => "ObservePickUp",
            TaskId::RearrangeBlocks => "RearrangeBlocks",
            TaskId::BatteryTry => "BatteryTry",
            TaskId::BlocksRankingTry => "BlocksRankingTry",
            TaskId::PressButton => "PressButton",
        }
    }

    pub fn parse(s: &str) -> Option<TaskId> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryClass {
    M1,
    Mn,
}

/// Seeded randomization knobs for the task analogs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    /// Identical-shape cans revealed after `reveal_step` (ObservePickUp).
    pub distractor_cans: usize,
    /// Task-irrelevant blocks (RearrangeBlocks).
    pub distractor_blocks: usize,
    /// Probability that the battery must be flipped before it fits.
    pub polarity_reversed_prob: f64,
    /// Probability that the first press of the first button is silently lost.
    pub press_fault_prob: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            distractor_cans: 5,
            distractor_blocks: 2,
            polarity_reversed_prob: 0.5,
            press_fault_prob: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub goal_text: String,
    pub memory_class: MemoryClass,
    pub scenario: ScenarioParams,
}

impl TaskSpec {
    pub fn new(task_id: TaskId) -> Self {
        Self::with_params(task_id, ScenarioParams::default())
    }

    pub fn with_params(task_id: TaskId, scenario: ScenarioParams) -> Self {
        let goal_text = match task_id {
            TaskId::ObservePickUp => "observe which can is shown first, then pick it up and put it in the goal zone",
            TaskId::RearrangeBlocks => "move each colored block into the zone of the same color",
            TaskId::BatteryTry => "insert the battery into the receptacle with the correct polarity",
            TaskId::BlocksRankingTry => "rank the three blocks by size into the ranking slots, smallest first",
            TaskId::PressButton => "press the first button, then the second button",
        };
        Self {
            task_id,
            goal_text: goal_text.to_string(),
            memory_class: task_id.memory_class(),
            scenario,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectKind {
    Block,
    Can,
    Battery,
    Scanner,
    Button,
    Slot,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 6] = [
        ObjectKind::Block,
        ObjectKind::Can,
        ObjectKind::Battery,
        ObjectKind::Scanner,
        ObjectKind::Button,
        ObjectKind::Slot,
    ];

    pub fn graspable(self) -> bool {
        matches!(self, ObjectKind::Block | ObjectKind::Can | ObjectKind::Battery)
    }

    /// Fixtures carry a status lamp.
    pub fn has_lamp(self, color_tag: u8) -> bool {
        match self {
            ObjectKind::Button | ObjectKind::Scanner => true,
            ObjectKind::Slot => color_tag == tags::BATTERY_SLOT,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub object_id: u32,
    pub kind: ObjectKind,
    pub pose: Pose,
    /// Footprint (w, h) in world units.
    pub size: (f64, f64),
    pub color_tag: u8,
    pub held_by: Option<usize>,
    /// Rendered only from this step on.
    pub visible_from: u64,
}

impl ObjectSpec {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.pose.x).abs() <= self.size.0 / 2.0 && (y - self.pose.y).abs() <= self.size.1 / 2.0
    }
}

/// Ground-truth attributes that never reach an [`Observation`] directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HiddenAttr {
    /// +1 or -1; the battery fits when polarity times orientation sign is +1.
    Polarity(i8),
    /// Size rank among the ranking blocks, 0 = smallest.
    SizeRank(u8),
    /// The first press on this button will be lost.
    PressFault(bool),
    /// This can is the ObservePickUp target.
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub joints: [f64; JOINTS],
    pub gripper: f64,
    /// (object id, theta offset between object and end-effector).
    pub holding: Option<(u32, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Latch {
    pub object_id: u32,
    pub latched_at: Option<u64>,
    /// End-effector was in contact (inside footprint, gripper closed) last step.
    pub contact: bool,
    pub presses: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time_step: u64,
    pub arms: [ArmState; 2],
    pub objects: Vec<ObjectSpec>,
    pub hidden_attrs: Vec<(u32, HiddenAttr)>,
    pub latches: Vec<Latch>,
    /// Seed of the episode generator; the generator itself is only used in `reset`.
    pub rng_seed: u64,
    pub config: WorldConfig,
}

impl WorldState {
    pub fn object(&self, id: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    pub fn hidden(&self, id: u32) -> impl Iterator<Item = &HiddenAttr> {
        self.hidden_attrs.iter().filter(move |(oid, _)| *oid == id).map(|(_, a)| a)
    }

    pub fn latch(&self, id: u32) -> Option<&Latch> {
        self.latches.iter().find(|l| l.object_id == id)
    }

    pub fn end_effector(&self, arm: usize) -> Pose {
        let (x, y, theta) = forward_kinematics(&self.config, arm, &self.arms[arm].joints);
        Pose { x, y, theta }
    }

    pub fn proprio(&self) -> [f64; PROPRIO_DIM] {
        let mut p = [0.0; PROPRIO_DIM];
        for (a, arm) in self.arms.iter().enumerate() {
            p[a * 7..a * 7 + JOINTS].copy_from_slice(&arm.joints);
            p[a * 7 + JOINTS] = arm.gripper;
        }
        p
    }

    pub fn observe(&self) -> Observation {
        Observation {
            time_step: self.time_step,
            image: render(self),
            proprio: self.proprio().to_vec(),
        }
    }
}

/// Row-major `height x width x 3` raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self { width, height, data }
    }

    pub fn get(&self, u: usize, v: usize) -> Rgb {
        let i = (v * self.width + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, u: usize, v: usize, c: Rgb) {
        let i = (v * self.width + u) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time_step: u64,
    pub image: Image,
    pub proprio: Vec<f64>,
}

/// Per arm: 6 joint deltas (rad/step) + 1 gripper target aperture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub values: [f64; PROPRIO_DIM],
}

impl ActionCommand {
    pub fn zero() -> Self {
        Self { values: [0.0; PROPRIO_DIM] }
    }

    /// Zero joint motion, grippers held at their current apertures.
    pub fn hold(state: &WorldState) -> Self {
        let mut a = Self::zero();
        a.values[JOINTS] = state.arms[0].gripper;
        a.values[7 + JOINTS] = state.arms[1].gripper;
        a
    }

    pub fn clamped(&self, joint_delta_max: f64) -> Self {
        let mut out = self.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            let v0 = if v.is_finite() { *v } else { 0.0 };
            *v = if i % 7 == JOINTS {
                v0.clamp(0.0, 1.0)
            } else {
                v0.clamp(-joint_delta_max, joint_delta_max)
            };
        }
        out
    }
}

/// Advance the world by one step.
pub fn step(state: &WorldState, action: &ActionCommand) -> (WorldState, Observation) {
    let mut next = state.clone();
    let cfg = next.config.clone();
    let a = action.clamped(cfg.joint_delta_max);

    let mut previous_aperture = [0.0; 2];
    for arm in 0..2 {
        let st = &mut next.arms[arm];
        for j in 0..JOINTS {
            st.joints[j] = (st.joints[j] + a.values[arm * 7 + j]).clamp(-std::f64::consts::PI, std::f64::consts::PI);
        }
        previous_aperture[arm] = st.gripper;
        st.gripper = a.values[arm * 7 + JOINTS];
    }

    for arm in 0..2 {
        let ee = next.end_effector(arm);
        if let Some((id, offset)) = next.arms[arm].holding {
            move_held(&mut next, id, ee, offset);
        }
        let closed_now = next.arms[arm].gripper < cfg.grip_threshold;
        let closed_before = previous_aperture[arm] < cfg.grip_threshold;
        if closed_now && !closed_before && next.arms[arm].holding.is_none() {
            try_grasp(&mut next, arm, ee);
        } else if !closed_now && closed_before {
            if let Some((id, _)) = next.arms[arm].holding.take() {
                release(&mut next, id);
            }
        }
    }

    update_latches(&mut next);
    next.time_step += 1;
    let obs = next.observe();
    (next, obs)
}

fn clamp_to_table(cfg: &WorldConfig, v: f64) -> f64 {
    v.clamp(0.0, cfg.table_size - 1e-6)
}

fn move_held(state: &mut WorldState, id: u32, ee: Pose, offset: f64) {
    let size = state.config.table_size;
    if let Some(o) = state.objects.iter_mut().find(|o| o.object_id == id) {
        o.pose = Pose {
            x: ee.x.clamp(0.0, size - 1e-6),
            y: ee.y.clamp(0.0, size - 1e-6),
            theta: wrap_angle(ee.theta + offset),
        };
    }
}

fn try_grasp(state: &mut WorldState, arm: usize, ee: Pose) {
    let radius = state.config.grasp_radius;
    let t = state.time_step;
    let inserted: Vec<u32> = state.latches.iter().filter(|l| l.latched_at.is_some()).map(|l| l.object_id).collect();
    let best = state
        .objects
        .iter()
        .filter(|o| o.kind.graspable() && o.held_by.is_none() && o.visible_from <= t && !inserted.contains(&o.object_id))
        .map(|o| (o.object_id, (o.pose.x - ee.x).hypot(o.pose.y - ee.y), o.pose.theta))
        .filter(|(_, d, _)| *d <= radius)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    if let Some((id, _, theta)) = best {
        let offset = wrap_angle(theta - ee.theta);
        state.arms[arm].holding = Some((id, offset));
        if let Some(o) = state.objects.iter_mut().find(|o| o.object_id == id) {
            o.held_by = Some(arm);
        }
        move_held(state, id, ee, offset);
    }
}

fn release(state: &mut WorldState, id: u32) {
    let cfg = state.config.clone();
    let t = state.time_step;
    let Some(idx) = state.objects.iter().position(|o| o.object_id == id) else {
        return;
    };
    state.objects[idx].held_by = None;
    if state.objects[idx].kind != ObjectKind::Battery {
        return;
    }
    let (bx, by) = (state.objects[idx].pose.x, state.objects[idx].pose.y);
    let slot = state
        .objects
        .iter()
        .find(|o| o.kind == ObjectKind::Slot && o.color_tag == tags::BATTERY_SLOT && o.contains(bx, by))
        .map(|o| (o.object_id, o.pose, o.size));
    let Some((slot_id, slot_pose, slot_size)) = slot else {
        return;
    };
    let polarity = state
        .hidden(id)
        .find_map(|a| if let HiddenAttr::Polarity(p) = a { Some(*p) } else { None })
        .unwrap_or(1);
    let orientation = if state.objects[idx].pose.theta.cos() >= 0.0 { 1 } else { -1 };
    if polarity * orientation == 1 {
        let o = &mut state.objects[idx];
        o.pose.x = slot_pose.x;
        o.pose.y = slot_pose.y;
        if let Some(l) = state.latches.iter_mut().find(|l| l.object_id == slot_id) {
            l.latched_at.get_or_insert(t);
            l.presses += 1;
        }
        // the battery itself is marked inserted so it can no longer be grasped
        if !state.latches.iter().any(|l| l.object_id == id) {
            state.latches.push(Latch { object_id: id, latched_at: Some(t), contact: false, presses: 0 });
        }
    } else {
        // rejected: the battery pops out to the right of the receptacle
        let o = &mut state.objects[idx];
        o.pose.x = clamp_to_table(&cfg, slot_pose.x + slot_size.0 / 2.0 + 3.0);
        o.pose.y = clamp_to_table(&cfg, slot_pose.y);
    }
}

fn update_latches(state: &mut WorldState) {
    let t = state.time_step;
    let ee = state.end_effector(0);
    let closed = state.arms[0].gripper < state.config.grip_threshold;
    let buttons: Vec<(u32, bool)> = state
        .objects
        .iter()
        .filter(|o| o.kind == ObjectKind::Button)
        .map(|o| (o.object_id, o.contains(ee.x, ee.y)))
        .collect();
    for (id, inside) in buttons {
        let fault = state.hidden(id).any(|a| matches!(a, HiddenAttr::PressFault(true)));
        let Some(latch) = state.latches.iter_mut().find(|l| l.object_id == id) else {
            continue;
        };
        let contact = inside && closed;
        if contact && !latch.contact {
            latch.presses += 1;
            let lost = fault && latch.presses == 1;
            if !lost {
                latch.latched_at.get_or_insert(t);
            }
        }
        latch.contact = contact;
    }
}

/// Owning wrapper used by the executor and the decision cycle.
#[derive(Debug, Clone)]
pub struct Env {
    pub task: TaskSpec,
    pub seed: u64,
    state: WorldState,
    obs: Observation,
}

impl Env {
    pub fn new(task: TaskSpec, seed: u64) -> Self {
        Self::with_config(task, seed, WorldConfig::default())
    }

    pub fn with_config(task: TaskSpec, seed: u64, config: WorldConfig) -> Self {
        let (state, obs) = scenario::reset_with_config(&task, seed, config);
        Self { task, seed, state, obs }
    }

    pub fn from_state(task: TaskSpec, seed: u64, state: WorldState) -> Self {
        let obs = state.observe();
        Self { task, seed, state, obs }
    }

    pub fn step(&mut self, action: &ActionCommand) -> &Observation {
        let (s, o) = step(&self.state, action);
        self.state = s;
        self.obs = o;
        &self.obs
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn config(&self) -> &WorldConfig {
        &self.state.config
    }

    pub fn success(&self) -> bool {
        task_success(&self.state, &self.task)
    }
}

pub(crate) fn episode_rng(seed: u64, task: TaskId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ((task as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_forces_delta_max() {
        let mut a = ActionCommand::zero();
        a.values[0] = 5.0;
        a.values[1] = -7.0;
        a.values[6] = 3.0;
        let c = a.clamped(0.1);
        assert_eq!(c.values[0], 0.1);
        assert_eq!(c.values[1], -0.1);
        assert_eq!(c.values[6], 1.0);
    }

    #[test]
    fn step_applies_exactly_delta_max() {
        let task = TaskSpec::new(TaskId::PressButton);
        let (s, _) = reset(&task, 3);
        let mut a = ActionCommand::hold(&s);
        a.values[2] = 5.0;
        let (s2, _) = step(&s, &a);
        assert_eq!(s2.arms[0].joints[2], s.arms[0].joints[2] + s.config.joint_delta_max);
    }

    #[test]
    fn identity_action_keeps_objects() {
        let task = TaskSpec::new(TaskId::RearrangeBlocks);
        let (s, _) = reset(&task, 11);
        let (s2, _) = step(&s, &ActionCommand::hold(&s));
        assert_eq!(s.objects, s2.objects);
        assert_eq!(s2.time_step, s.time_step + 1);
    }

    #[test]
    fn clamp_idempotence() {
        let task = TaskSpec::new(TaskId::BatteryTry);
        let (s, _) = reset(&task, 5);
        let mut a = ActionCommand::zero();
        for (i, v) in a.values.iter_mut().enumerate() {
            *v = (i as f64 - 6.0) * 0.7;
        }
        let c = a.clamped(s.config.joint_delta_max);
        assert_eq!(step(&s, &a), step(&s, &c));
    }

    #[test]
    fn task_names_round_trip() {
        for t in TaskId::ALL {
            assert_eq!(TaskId::parse(t.name()), Some(t));
        }
        assert_eq!(TaskId::parse("nope"), None);
    }
}
