//! Seeded layouts and ground-truth success predicates for the five task analogs.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    episode_rng, tags, ArmState, HiddenAttr, Latch, ObjectKind, ObjectSpec, Observation, Pose, TaskId, TaskSpec,
    WorldConfig, WorldState,
};

const LATTICE_X: [f64; 6] = [10.5, 18.5, 26.5, 34.5, 42.5, 50.5];

struct Builder {
    objects: Vec<ObjectSpec>,
    hidden: Vec<(u32, HiddenAttr)>,
    latches: Vec<Latch>,
}

impl Builder {
    fn add(&mut self, kind: ObjectKind, tag: u8, (x, y): (f64, f64), size: (f64, f64)) -> u32 {
        let id = self.objects.len() as u32;
        self.objects.push(ObjectSpec {
            object_id: id,
            kind,
            pose: Pose { x, y, theta: 0.0 },
            size,
            color_tag: tag,
            held_by: None,
            visible_from: 0,
        });
        if kind.has_lamp(tag) {
            self.latches.push(Latch { object_id: id, ..Default::default() });
        }
        id
    }
}

fn lattice(rng: &mut impl Rng, rows: &[f64], n: usize) -> Vec<(f64, f64)> {
    let mut cells: Vec<(f64, f64)> = rows.iter().flat_map(|&y| LATTICE_X.iter().map(move |&x| (x, y))).collect();
    cells.shuffle(rng);
    cells.truncate(n);
    cells
}

/// Initial state and first observation; bit-identical for equal `(task, seed)`.
pub fn reset(task: &TaskSpec, seed: u64) -> (WorldState, Observation) {
    reset_with_config(task, seed, WorldConfig::default())
}

pub(crate) fn reset_with_config(task: &TaskSpec, seed: u64, config: WorldConfig) -> (WorldState, Observation) {
    let mut rng = episode_rng(seed, task.task_id);
    let p = &task.scenario;
    let mut b = Builder { objects: vec![], hidden: vec![], latches: vec![] };
    let block = (3.0, 3.0);

    match task.task_id {
        TaskId::ObservePickUp => {
            b.add(ObjectKind::Slot, tags::GOAL_ZONE, (50.5, 42.5), (7.0, 7.0));
            let n = 1 + p.distractor_cans.min(5);
            let mut colors: Vec<u8> = (0..6).collect();
            colors.shuffle(&mut rng);
            let spots = lattice(&mut rng, &[14.5, 22.5, 30.5], n);
            for (i, spot) in spots.into_iter().enumerate() {
                let id = b.add(ObjectKind::Can, colors[i], spot, block);
                if i == 0 {
                    b.hidden.push((id, HiddenAttr::Target));
                } else {
                    b.objects[id as usize].visible_from = config.reveal_step;
                }
            }
        }
        TaskId::RearrangeBlocks => {
            let mut zone_x = [14.5, 32.5, 50.5];
            zone_x.shuffle(&mut rng);
            for (tag, x) in zone_x.into_iter().enumerate() {
                b.add(ObjectKind::Slot, tag as u8, (x, 42.5), (7.0, 7.0));
            }
            let n = 3 + p.distractor_blocks.min(4);
            let spots = lattice(&mut rng, &[14.5, 22.5, 30.5], n);
            for (i, spot) in spots.into_iter().enumerate() {
                b.add(ObjectKind::Block, i as u8, spot, block);
            }
        }
        TaskId::BatteryTry => {
            b.add(ObjectKind::Slot, tags::BATTERY_SLOT, (46.5, 40.5), (6.0, 6.0));
            let spots = lattice(&mut rng, &[14.5, 22.5, 30.5], 2);
            let battery = b.add(ObjectKind::Battery, 0, spots[0], (2.0, 4.0));
            b.add(ObjectKind::Can, 0, spots[1], block);
            let polarity = if rng.random_bool(p.polarity_reversed_prob.clamp(0.0, 1.0)) { -1 } else { 1 };
            b.hidden.push((battery, HiddenAttr::Polarity(polarity)));
        }
        TaskId::BlocksRankingTry => {
            b.add(ObjectKind::Scanner, 0, (32.0, 14.5), (12.0, 5.0));
            for i in 0..3u8 {
                b.add(ObjectKind::Slot, tags::RANK_BASE + i, (14.5 + 18.0 * i as f64, 42.5), (5.0, 5.0));
            }
            let mut ranks: Vec<u8> = vec![0, 1, 2];
            ranks.shuffle(&mut rng);
            let spots = lattice(&mut rng, &[24.5, 32.5], 3);
            for (i, spot) in spots.into_iter().enumerate() {
                let id = b.add(ObjectKind::Block, i as u8, spot, block);
                b.hidden.push((id, HiddenAttr::SizeRank(ranks[i])));
            }
        }
        TaskId::PressButton => {
            let spots = lattice(&mut rng, &[18.5, 30.5, 42.5], 3);
            let fault = rng.random_bool(p.press_fault_prob.clamp(0.0, 1.0));
            for (i, spot) in spots.into_iter().enumerate() {
                let id = b.add(ObjectKind::Button, i as u8, spot, (4.0, 4.0));
                if i == 0 {
                    b.hidden.push((id, HiddenAttr::PressFault(fault)));
                }
            }
        }
    }

    let arms = [0, 1].map(|a| ArmState { joints: config.home_joints[a], gripper: 1.0, holding: None });
    let state = WorldState {
        time_step: 0,
        arms,
        objects: b.objects,
        hidden_attrs: b.hidden,
        latches: b.latches,
        rng_seed: seed,
        config,
    };
    let obs = state.observe();
    (state, obs)
}

fn resting_in(state: &WorldState, o: &ObjectSpec, kind: ObjectKind, tag: u8) -> bool {
    o.held_by.is_none()
        && state
            .objects
            .iter()
            .any(|z| z.kind == kind && z.color_tag == tag && z.contains(o.pose.x, o.pose.y))
}

/// Ground-truth goal predicate. Only the benchmark harness calls this.
pub fn task_success(state: &WorldState, task: &TaskSpec) -> bool {
    let objs = &state.objects;
    match task.task_id {
        TaskId::ObservePickUp => objs.iter().any(|o| {
            state.hidden(o.object_id).any(|a| *a == HiddenAttr::Target)
                && resting_in(state, o, ObjectKind::Slot, tags::GOAL_ZONE)
        }),
        TaskId::RearrangeBlocks => (0..3u8).all(|tag| {
            objs.iter()
                .any(|o| o.kind == ObjectKind::Block && o.color_tag == tag && resting_in(state, o, ObjectKind::Slot, tag))
        }),
        TaskId::BatteryTry => objs.iter().filter(|o| o.kind == ObjectKind::Battery).any(|o| {
            let polarity = state
                .hidden(o.object_id)
                .find_map(|a| if let HiddenAttr::Polarity(p) = a { Some(*p) } else { None })
                .unwrap_or(1);
            let orientation = if o.pose.theta.cos() >= 0.0 { 1 } else { -1 };
            polarity * orientation == 1 && resting_in(state, o, ObjectKind::Slot, tags::BATTERY_SLOT)
        }),
        TaskId::BlocksRankingTry => {
            let ranked: Vec<_> = objs
                .iter()
                .filter_map(|o| {
                    state
                        .hidden(o.object_id)
                        .find_map(|a| if let HiddenAttr::SizeRank(r) = a { Some((o, *r)) } else { None })
                })
                .collect();
            !ranked.is_empty()
                && ranked
                    .iter()
                    .all(|(o, r)| resting_in(state, o, ObjectKind::Slot, tags::RANK_BASE + r))
        }
        TaskId::PressButton => {
            let latched = |tag: u8| {
                objs.iter()
                    .find(|o| o.kind == ObjectKind::Button && o.color_tag == tag)
                    .and_then(|o| state.latch(o.object_id))
                    .and_then(|l| l.latched_at)
            };
            matches!((latched(0), latched(1)), (Some(a), Some(b)) if a < b)
        }
    }
}
