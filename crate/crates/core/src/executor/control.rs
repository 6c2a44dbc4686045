use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector};

use crate::mask::FilteredObservation;
use crate::percept::{extract_from, PerceptSummary};
use crate::planner::{Destination, OrientationHint, PadSide, SubTask, PAD_OFFSET};
use crate::world::{forward_kinematics, jacobian, wrap_angle, ActionCommand, ObjectKind, WorldConfig, JOINTS};

use super::diffusion::quantize;
use super::{ActionChunk, ExecutorConfig, ExecutorError};

/// Distance from the target of the pre-grasp waypoint, before `grasp_offset`.
pub const STANDOFF: f64 = 3.0;
/// Position error at which a waypoint counts as reached.
const REACHED: f64 = 0.4;
const WAYPOINT_REACHED: f64 = 1.0;
/// Heading error at which a rotated release may happen.
const HEADING_REACHED: f64 = 0.05;
/// Errors below these produce no joint motion.
const DEADBAND: f64 = 0.05;
const HEADING_DEADBAND: f64 = 0.01;
const DAMPING: f64 = 1.5;
const HEADING_WEIGHT: f64 = 8.0;
const POSTURE_GAIN: f64 = 0.1;
/// Joints closer than this to their stops are slowed.
const LIMIT_MARGIN: f64 = 0.6;
/// A locked target may drift this far between chunks and still match.
const LOCK_RADIUS: f64 = 6.0;

/// Per-call skill state carried across chunks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkillProgress {
    pub lock: Option<(f64, f64)>,
    pub approached: bool,
    pub closed: bool,
    pub pick_point: Option<(f64, f64)>,
    pub grasp_theta: Option<f64>,
    pub armed: bool,
    pub released: bool,
}

/// Where the controller is steering the end effector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub position: (f64, f64),
    pub heading: Option<f64>,
    pub grip: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Goals {
    target: Option<(f64, f64)>,
    destination: Option<(f64, f64)>,
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn union_center(objs: &[&crate::percept::DetectedObject]) -> Option<(f64, f64)> {
    let first = objs.first()?;
    let b = objs.iter().fold(first.bounds, |b, o| {
        [b[0].min(o.bounds[0]), b[1].min(o.bounds[1]), b[2].max(o.bounds[2]), b[3].max(o.bounds[3])]
    });
    Some(((b[0] + b[2] + 1) as f64 / 2.0, (b[1] + b[3] + 1) as f64 / 2.0))
}

/// Visible objects of `kind`, one center per color tag.
fn candidates(percept: &PerceptSummary, kind: ObjectKind) -> Vec<(f64, f64)> {
    let mut tags: Vec<u8> = percept.of_kind(kind).map(|o| o.color_tag).collect();
    tags.sort_unstable();
    tags.dedup();
    tags.iter()
        .filter_map(|&t| union_center(&percept.matching(kind, t).collect::<Vec<_>>()))
        .collect()
}

enum TargetLookup {
    Found((f64, f64)),
    Ambiguous,
    Missing,
}

fn find_target(percept: &PerceptSummary, kind: ObjectKind, lock: Option<(f64, f64)>) -> TargetLookup {
    let cands = candidates(percept, kind);
    if let Some(l) = lock {
        let nearest = cands.iter().copied().min_by(|a, b| dist(*a, l).total_cmp(&dist(*b, l)));
        if let Some(n) = nearest.filter(|n| dist(*n, l) <= LOCK_RADIUS) {
            return TargetLookup::Found(n);
        }
    }
    match cands.len() {
        0 => TargetLookup::Missing,
        1 => TargetLookup::Found(cands[0]),
        _ => TargetLookup::Ambiguous,
    }
}

fn destination_point(t: &SubTask, percept: &PerceptSummary) -> Option<(f64, f64)> {
    let fixture = |role: &str| {
        let r = t.bindings.get(role)?;
        union_center(&percept.matching(r.kind, r.color_tag).collect::<Vec<_>>())
    };
    match t.params.destination.as_ref()? {
        Destination::Role(r) => fixture(r),
        Destination::Pad(r, side) => {
            let (x, y) = fixture(r)?;
            Some(match side {
                PadSide::Left => (x - PAD_OFFSET, y),
                PadSide::Right => (x + PAD_OFFSET, y),
            })
        }
        Destination::Point(x, y) => Some((*x, *y)),
    }
}

fn standoff(t: &SubTask, target: (f64, f64)) -> (f64, f64) {
    let a = t.params.approach_direction.to_radians();
    let d = STANDOFF + t.params.grasp_offset.max(0.0);
    (target.0 + d * a.cos(), target.1 + d * a.sin())
}

/// Pick phases shared by every carrying skill. `None` once the gripper has
/// closed on the pick point.
fn pick(t: &SubTask, goals: &Goals, p: &mut SkillProgress, ee: (f64, f64, f64)) -> Option<Setpoint> {
    if p.closed {
        if p.grasp_theta.is_none() {
            p.grasp_theta = Some(ee.2);
        }
        return None;
    }
    let target = goals.target?;
    if !p.approached && dist((ee.0, ee.1), standoff(t, target)) <= WAYPOINT_REACHED {
        p.approached = true;
    }
    if !p.approached {
        return Some(Setpoint { position: standoff(t, target), heading: None, grip: 1.0, terminal: false });
    }
    if dist((ee.0, ee.1), target) <= REACHED {
        p.closed = true;
        p.pick_point = Some(target);
        return Some(Setpoint { position: target, heading: None, grip: 0.0, terminal: false });
    }
    Some(Setpoint { position: target, heading: None, grip: 1.0, terminal: false })
}

/// Carry to `goal` at `heading` and open there.
fn carry(goal: (f64, f64), heading: Option<f64>, p: &mut SkillProgress, ee: (f64, f64, f64)) -> Setpoint {
    if !p.released {
        let heading_ok = heading.is_none_or(|h| wrap_angle(h - ee.2).abs() <= HEADING_REACHED);
        if dist((ee.0, ee.1), goal) <= REACHED && heading_ok {
            p.released = true;
        } else {
            return Setpoint { position: goal, heading, grip: 0.0, terminal: false };
        }
    }
    Setpoint { position: goal, heading: None, grip: 1.0, terminal: true }
}

fn decide(
    t: &SubTask,
    world: &WorldConfig,
    goals: &Goals,
    p: &mut SkillProgress,
    ee: (f64, f64, f64),
) -> Result<Setpoint, ExecutorError> {
    use crate::planner::SkillKind::*;
    let skill = t.skill().ok_or(ExecutorError::UnknownSkill(t.skill_index))?;
    let need_target = || goals.target.ok_or_else(|| ExecutorError::TargetNotVisible(t.id.clone()));
    let need_destination = || goals.destination.ok_or_else(|| ExecutorError::DestinationNotVisible(t.id.clone()));
    Ok(match skill {
        Reach => Setpoint { position: need_target()?, heading: None, grip: 1.0, terminal: true },
        Retreat => {
            let (x, y, _) = forward_kinematics(world, 0, &world.home_joints[0]);
            Setpoint { position: (x, y), heading: None, grip: 1.0, terminal: true }
        }
        Grasp => match pick(t, goals, p, ee) {
            Some(s) => s,
            None => {
                let at = p.pick_point.unwrap_or((ee.0, ee.1));
                Setpoint { position: at, heading: None, grip: 0.0, terminal: true }
            }
        },
        Place => match pick(t, goals, p, ee) {
            Some(s) => s,
            None => carry(need_destination()?, None, p, ee),
        },
        Insert => match pick(t, goals, p, ee) {
            Some(s) => s,
            None => {
                let base = p.grasp_theta.unwrap_or(ee.2);
                let turn = if t.params.orientation_hint == OrientationHint::Flip { PI } else { 0.0 };
                carry(need_destination()?, Some(wrap_angle(base + turn)), p, ee)
            }
        },
        Flip => match pick(t, goals, p, ee) {
            Some(s) => s,
            None => {
                let at = p.pick_point.unwrap_or((ee.0, ee.1));
                let h = wrap_angle(p.grasp_theta.unwrap_or(ee.2) + PI);
                carry(at, Some(h), p, ee)
            }
        },
        Press => {
            let target = match p.pick_point {
                Some(at) => at,
                None => need_target()?,
            };
            if p.armed {
                p.released = true;
                Setpoint { position: target, heading: None, grip: 1.0, terminal: true }
            } else if dist((ee.0, ee.1), target) <= REACHED {
                p.armed = true;
                p.pick_point = Some(target);
                Setpoint { position: target, heading: None, grip: 0.0, terminal: false }
            } else {
                Setpoint { position: target, heading: None, grip: 1.0, terminal: false }
            }
        }
    })
}

/// Damped least-squares joint step toward `sp`, limited to `max_delta` per joint.
pub fn ik_step(world: &WorldConfig, q: &[f64; JOINTS], sp: &Setpoint, max_delta: f64) -> [f64; JOINTS] {
    let (x, y, th) = forward_kinematics(world, 0, q);
    let (ex, ey) = (sp.position.0 - x, sp.position.1 - y);
    let eh = sp.heading.map(|h| wrap_angle(h - th));
    if ex.hypot(ey) < DEADBAND && eh.is_none_or(|e| e.abs() < HEADING_DEADBAND) {
        return [0.0; JOINTS];
    }
    let jac = jacobian(&world.link_lengths, q);
    let qv = SVector::<f64, JOINTS>::from_column_slice(q);
    let home = SVector::<f64, JOINTS>::from_column_slice(&world.home_joints[0]);
    let weights = SVector::<f64, JOINTS>::from_fn(|i, _| ((PI - q[i].abs()) / LIMIT_MARGIN).clamp(0.02, 1.0));
    let w = SMatrix::<f64, JOINTS, JOINTS>::from_diagonal(&weights);
    let mut dq = match eh {
        None => {
            let j = SMatrix::<f64, 2, JOINTS>::from_fn(|r, c| jac[r][c]) * w;
            let inv = (j * j.transpose() + SMatrix::<f64, 2, 2>::identity() * DAMPING * DAMPING)
                .try_inverse()
                .expect("damped matrix is invertible");
            let pinv = j.transpose() * inv;
            let null = SMatrix::<f64, JOINTS, JOINTS>::identity() - pinv * j;
            w * (pinv * SVector::<f64, 2>::new(ex, ey) + null * (home - qv) * POSTURE_GAIN)
        }
        Some(e) => {
            let j = SMatrix::<f64, 3, JOINTS>::from_fn(|r, c| if r == 2 { HEADING_WEIGHT } else { jac[r][c] }) * w;
            let inv = (j * j.transpose() + SMatrix::<f64, 3, 3>::identity() * DAMPING * DAMPING)
                .try_inverse()
                .expect("damped matrix is invertible");
            w * j.transpose() * inv * SVector::<f64, 3>::new(ex, ey, e * HEADING_WEIGHT)
        }
    };
    let peak = dq.amax();
    if peak > max_delta {
        dq *= max_delta / peak;
    }
    let mut out = [0.0; JOINTS];
    out.copy_from_slice(dq.as_slice());
    out
}

/// Targets for this chunk, read from the filtered observation.
fn goals_for(
    t: &SubTask,
    percept: &PerceptSummary,
    p: &mut SkillProgress,
) -> Result<Goals, ExecutorError> {
    let mut goals = Goals { target: None, destination: destination_point(t, percept) };
    if p.closed || p.armed {
        return Ok(goals);
    }
    let kind = t
        .params
        .target
        .as_ref()
        .and_then(|r| t.bindings.get(r))
        .map(|o| o.kind)
        .ok_or_else(|| ExecutorError::TargetNotVisible(t.id.clone()))?;
    match find_target(percept, kind, p.lock) {
        TargetLookup::Found(at) => {
            p.lock = Some(at);
            goals.target = Some(at);
        }
        TargetLookup::Ambiguous => {}
        TargetLookup::Missing => return Err(ExecutorError::TargetNotVisible(t.id.clone())),
    }
    Ok(goals)
}

/// Result of one controller rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalChunk {
    pub chunk: ActionChunk,
    /// The skill had already settled before this chunk.
    pub settled: bool,
}

/// Roll the skill controller forward `horizon + 1` steps from `proprio`,
/// reading targets from `filtered`. Arm 1 holds still.
pub fn nominal_chunk(
    t: &SubTask,
    filtered: &FilteredObservation,
    proprio: &[f64],
    step: u64,
    world: &WorldConfig,
    cfg: &ExecutorConfig,
    progress: &mut SkillProgress,
) -> Result<NominalChunk, ExecutorError> {
    let percept = extract_from(&filtered.image, proprio, step, world);
    let goals = goals_for(t, &percept, progress)?;
    let mut q = [0.0; JOINTS];
    q.copy_from_slice(&proprio[..JOINTS]);
    let mut grip = proprio[JOINTS];
    let parked_grip = proprio[7 + JOINTS];
    let mut settled = false;
    let mut actions = Vec::with_capacity(cfg.horizon + 1);
    for i in 0..=cfg.horizon {
        let ee = forward_kinematics(world, 0, &q);
        let sp = if goals.target.is_none() && !progress.closed && !progress.armed && needs_target(t) {
            Setpoint { position: (ee.0, ee.1), heading: None, grip, terminal: false }
        } else {
            decide(t, world, &goals, progress, ee)?
        };
        if i == 0 {
            settled = sp.terminal
                && dist((ee.0, ee.1), sp.position) <= cfg.settle_tolerance
                && (grip - sp.grip).abs() <= cfg.grip_tolerance;
        }
        let dq = ik_step(world, &q, &sp, world.joint_delta_max);
        let mut a = ActionCommand::zero();
        a.values[..JOINTS].copy_from_slice(&dq);
        a.values[JOINTS] = sp.grip;
        a.values[7 + JOINTS] = parked_grip;
        let a = quantize(&a.clamped(world.joint_delta_max));
        for j in 0..JOINTS {
            q[j] = (q[j] + a.values[j]).clamp(-PI, PI);
        }
        grip = a.values[JOINTS];
        actions.push(a);
    }
    Ok(NominalChunk { chunk: ActionChunk { actions, start_step: step }, settled })
}

fn needs_target(t: &SubTask) -> bool {
    !matches!(t.skill(), Some(crate::planner::SkillKind::Retreat))
}
