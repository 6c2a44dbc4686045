//! Exact-color sprite matching over rendered (or filtered) observations.
//!
//! This is the stand-in for visual grounding shared by the planner and the
//! executor's controllers. It is a pure function of the observation.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::world::{
    forward_kinematics, palette, Image, ObjectKind, Observation, Rgb, WorldConfig, JOINTS, LAMP_COMPARE_LEFT,
    LAMP_COMPARE_RIGHT, LAMP_OFF, LAMP_ON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LampState {
    Off,
    On,
    /// Scanner: the block on the left pad is larger.
    CompareLeft,
    CompareRight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub kind: ObjectKind,
    pub color_tag: u8,
    /// Integer cell of the bounding-box center.
    pub cell: (i32, i32),
    pub center: (f64, f64),
    /// Inclusive pixel bounds `[u_min, v_min, u_max, v_max]`.
    pub bounds: [usize; 4],
    pub pixels: usize,
    pub held: bool,
    pub lamp: Option<LampState>,
}

impl DetectedObject {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.bounds[0] as f64
            && x < (self.bounds[2] + 1) as f64
            && y >= self.bounds[1] as f64
            && y < (self.bounds[3] + 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub cell: (i32, i32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptSummary {
    pub step: u64,
    pub objects: Vec<DetectedObject>,
    pub end_effectors: [EffectorPose; 2],
    pub grippers: [f64; 2],
}

impl PerceptSummary {
    pub fn matching(&self, kind: ObjectKind, color_tag: u8) -> impl Iterator<Item = &DetectedObject> {
        self.objects.iter().filter(move |o| o.kind == kind && o.color_tag == color_tag)
    }

    pub fn of_kind(&self, kind: ObjectKind) -> impl Iterator<Item = &DetectedObject> {
        self.objects.iter().filter(move |o| o.kind == kind)
    }

    /// The single visible object of this class, if exactly one is visible.
    pub fn unique(&self, kind: ObjectKind, color_tag: u8) -> Option<&DetectedObject> {
        let mut it = self.matching(kind, color_tag);
        let first = it.next()?;
        it.next().is_none().then_some(first)
    }

    pub fn held_object(&self) -> Option<&DetectedObject> {
        self.objects.iter().find(|o| o.held)
    }
}

fn decode_table() -> HashMap<Rgb, (ObjectKind, u8)> {
    let mut m = HashMap::new();
    for k in ObjectKind::ALL {
        for t in 0..8 {
            m.insert(palette(k, t), (k, t));
        }
    }
    m
}

fn lamp_of(c: Rgb) -> Option<LampState> {
    match c {
        LAMP_OFF => Some(LampState::Off),
        LAMP_ON => Some(LampState::On),
        LAMP_COMPARE_LEFT => Some(LampState::CompareLeft),
        LAMP_COMPARE_RIGHT => Some(LampState::CompareRight),
        _ => None,
    }
}

struct Component {
    color: Rgb,
    bounds: [usize; 4],
    pixels: usize,
}

/// 4-connected same-color components, in raster order of their first pixel.
fn components(img: &Image, mut keep: impl FnMut(Rgb) -> bool) -> Vec<Component> {
    let (w, h) = (img.width, img.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for v0 in 0..h {
        for u0 in 0..w {
            if seen[v0 * w + u0] {
                continue;
            }
            let color = img.get(u0, v0);
            seen[v0 * w + u0] = true;
            if !keep(color) {
                continue;
            }
            let mut c = Component { color, bounds: [u0, v0, u0, v0], pixels: 0 };
            queue.push_back((u0, v0));
            while let Some((u, v)) = queue.pop_front() {
                c.pixels += 1;
                c.bounds = [c.bounds[0].min(u), c.bounds[1].min(v), c.bounds[2].max(u), c.bounds[3].max(v)];
                let mut push = |uu: usize, vv: usize| {
                    let i = vv * w + uu;
                    if !seen[i] && img.get(uu, vv) == color {
                        seen[i] = true;
                        queue.push_back((uu, vv));
                    }
                };
                if u > 0 {
                    push(u - 1, v);
                }
                if u + 1 < w {
                    push(u + 1, v);
                }
                if v > 0 {
                    push(u, v - 1);
                }
                if v + 1 < h {
                    push(u, v + 1);
                }
            }
            out.push(c);
        }
    }
    out
}

fn effectors(cfg: &WorldConfig, proprio: &[f64]) -> ([EffectorPose; 2], [f64; 2]) {
    let mut poses = [EffectorPose { x: 0.0, y: 0.0, theta: 0.0, cell: (0, 0) }; 2];
    let mut grippers = [1.0; 2];
    for arm in 0..2 {
        let mut q = [0.0; JOINTS];
        q.copy_from_slice(&proprio[arm * 7..arm * 7 + JOINTS]);
        let (x, y, theta) = forward_kinematics(cfg, arm, &q);
        poses[arm] = EffectorPose { x, y, theta, cell: (x.floor() as i32, y.floor() as i32) };
        grippers[arm] = proprio[arm * 7 + JOINTS];
    }
    (poses, grippers)
}

/// Extract a [`PerceptSummary`] from an image plus proprioception.
pub fn extract_from(image: &Image, proprio: &[f64], step: u64, cfg: &WorldConfig) -> PerceptSummary {
    let table = decode_table();
    let comps = components(image, |c| table.contains_key(&c) || lamp_of(c).is_some());
    let (end_effectors, grippers) = effectors(cfg, proprio);

    let mut objects = Vec::new();
    let mut lamps = Vec::new();
    for c in comps {
        let center = ((c.bounds[0] + c.bounds[2] + 1) as f64 / 2.0, (c.bounds[1] + c.bounds[3] + 1) as f64 / 2.0);
        if let Some(state) = lamp_of(c.color) {
            lamps.push((center, state));
            continue;
        }
        let (kind, color_tag) = table[&c.color];
        objects.push(DetectedObject {
            kind,
            color_tag,
            cell: (center.0.floor() as i32, center.1.floor() as i32),
            center,
            bounds: c.bounds,
            pixels: c.pixels,
            held: false,
            lamp: None,
        });
    }

    for ((lx, ly), state) in lamps {
        let owner = objects
            .iter_mut()
            .filter(|o| o.kind.has_lamp(o.color_tag))
            .filter(|o| (o.center.0 - lx).abs() <= 1.5 && (o.bounds[1] as f64 - 2.0 - ly).abs() <= 1.5)
            .min_by(|a, b| (a.center.0 - lx).abs().total_cmp(&(b.center.0 - lx).abs()));
        if let Some(o) = owner {
            o.lamp = Some(state);
        }
    }

    if grippers[0] < cfg.grip_threshold {
        let ee = end_effectors[0];
        let reach = cfg.grasp_radius + 0.75;
        let held = objects
            .iter_mut()
            .filter(|o| o.kind.graspable())
            .map(|o| {
                let d = (o.center.0 - ee.x).hypot(o.center.1 - ee.y);
                (d, o)
            })
            .filter(|(d, _)| *d <= reach)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, o)) = held {
            o.held = true;
        }
    }

    PerceptSummary { step, objects, end_effectors, grippers }
}

pub fn extract(obs: &Observation, cfg: &WorldConfig) -> PerceptSummary {
    extract_from(&obs.image, &obs.proprio, obs.time_step, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{reset, TaskId, TaskSpec};

    #[test]
    fn detects_rearrange_layout() {
        let (s, o) = reset(&TaskSpec::new(TaskId::RearrangeBlocks), 4);
        let p = extract(&o, &s.config);
        assert_eq!(p.of_kind(ObjectKind::Slot).count(), 3);
        assert_eq!(p.of_kind(ObjectKind::Block).count(), 5);
        for obj in &s.objects {
            let d = p.unique(obj.kind, obj.color_tag).expect("visible");
            assert!((d.center.0 - obj.pose.x).abs() <= 0.5 && (d.center.1 - obj.pose.y).abs() <= 0.5);
        }
    }

    #[test]
    fn button_lamps_start_off() {
        let (s, o) = reset(&TaskSpec::new(TaskId::PressButton), 2);
        let p = extract(&o, &s.config);
        let buttons: Vec<_> = p.of_kind(ObjectKind::Button).collect();
        assert_eq!(buttons.len(), 3);
        assert!(buttons.iter().all(|b| b.lamp == Some(LampState::Off)));
    }

    #[test]
    fn hidden_distractors_not_detected_before_reveal() {
        let (s, o) = reset(&TaskSpec::new(TaskId::ObservePickUp), 9);
        let p = extract(&o, &s.config);
        assert_eq!(p.of_kind(ObjectKind::Can).count(), 1);
    }
}
