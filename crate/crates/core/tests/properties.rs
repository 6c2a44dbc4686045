//! Randomized invariants for masks, memory windows, the sampler and the world step.

mod common;

use common::{synthetic_scene, template_entry};
use longhorizon::executor::{initial_chunk, reverse_process, sample_chunk, ActionChunk, DiffusionSchedule};
use longhorizon::mask::{apply_filter, propagate, segment_init};
use longhorizon::memory::{ErrorRecord, MemoryError, MemoryState};
use longhorizon::planner::{CompletionSignal, Recommendation};
use longhorizon::world::{reset, step, ActionCommand, TaskId, TaskSpec, JOINTS, PROPRIO_DIM};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mask_stays_inside_boxes(seed in any::<u64>()) {
        let (img, boxes) = synthetic_scene(seed);
        let mask = segment_init(&img, &boxes, 0).unwrap();
        for v in 0..img.height {
            for u in 0..img.width {
                if mask.get(u, v) {
                    prop_assert!(boxes.iter().any(|b| b.contains(u, v)), "({u}, {v}) outside {boxes:?}");
                }
            }
        }
        for r in &mask.regions {
            if let Some(c) = r.color {
                prop_assert!(r.pixels.iter().all(|&(u, v)| img.get(u, v) == c));
            }
        }
    }

    #[test]
    fn filter_is_idempotent(seed in any::<u64>()) {
        let (img, boxes) = synthetic_scene(seed);
        let mask = segment_init(&img, &boxes, 0).unwrap();
        let once = apply_filter(&img, &mask).unwrap();
        let twice = apply_filter(&once.image, &mask).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn filter_preserves_unmasked_pixels(seed in any::<u64>()) {
        let (img, boxes) = synthetic_scene(seed);
        let mask = segment_init(&img, &boxes, 0).unwrap();
        let out = apply_filter(&img, &mask).unwrap().image;
        prop_assert_eq!((out.width, out.height), (img.width, img.height));
        for v in 0..img.height {
            for u in 0..img.width {
                let expect = if mask.get(u, v) { [0, 0, 0] } else { img.get(u, v) };
                prop_assert_eq!(out.get(u, v), expect);
            }
        }
    }

    #[test]
    fn propagate_is_fixed_on_static_scene(seed in any::<u64>()) {
        let (img, boxes) = synthetic_scene(seed);
        let mask = segment_init(&img, &boxes, 0).unwrap();
        let next = propagate(&img, &mask, 1);
        prop_assert_eq!(&next.grid, &mask.grid);
        prop_assert_eq!(&next.regions, &mask.regions);
        prop_assert_eq!(next.epoch, 1);
    }
}

#[derive(Debug, Clone)]
enum MemOp {
    /// Append `k` entries spaced `gap` steps apart, then compress.
    Checkpoint { k: usize, gap: u64, signal: Option<CompletionSignal> },
    RecordError,
}

fn mem_op() -> impl Strategy<Value = MemOp> {
    let signal = prop_oneof![
        Just(None),
        Just(Some(CompletionSignal::Success)),
        Just(Some(CompletionSignal::Fail)),
        Just(Some(CompletionSignal::Timeout)),
    ];
    prop_oneof![
        4 => (0usize..5, 1u64..20, signal).prop_map(|(k, gap, signal)| MemOp::Checkpoint { k, gap, signal }),
        1 => Just(MemOp::RecordError),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn sliding_window_law(n_h in 0usize..10, ops in prop::collection::vec(mem_op(), 0..24)) {
        let mut m = MemoryState::new();
        let mut appended = 0usize;
        let mut next_step = 1u64;
        for op in ops {
            match op {
                MemOp::Checkpoint { k, gap, signal } => {
                    for i in 0..k {
                        let mut e = template_entry().clone();
                        e.step_index = next_step;
                        e.subtask_id = format!("t{}@0", appended % 3);
                        e.completion = if i + 1 == k { signal } else { None };
                        next_step += gap;
                        m = m.append_history(e).unwrap();
                        appended += 1;
                    }
                    m = m.compress_history(n_h);
                }
                MemOp::RecordError => {
                    let errors = m.errors.len();
                    m = m.record_error(ErrorRecord {
                        subtask_id: "t0@0".into(),
                        diagnosis: "press not registered".into(),
                        recommendation: Recommendation::Retry,
                        attempt_index: errors as u32,
                    });
                    prop_assert_eq!(m.errors.len(), errors + 1);
                }
            }
            prop_assert!(m.history.len() <= n_h);
            prop_assert_eq!(m.summarized_count + m.history.len(), appended);
            prop_assert_eq!(m.total_appended(), appended);
            prop_assert!(m.history.windows(2).all(|p| p[0].step_index < p[1].step_index));
        }
    }

    #[test]
    fn out_of_order_append_is_rejected(first in 1u64..100, back in 0u64..100) {
        let mut e = template_entry().clone();
        e.step_index = first;
        let m = MemoryState::new().append_history(e.clone()).unwrap();
        e.step_index = first.saturating_sub(back);
        prop_assert_eq!(m.append_history(e).unwrap_err(), MemoryError::OutOfOrderEntry { last: first, got: first.saturating_sub(back) });
    }
}

fn random_chunk(rng: &mut ChaCha8Rng, len: usize) -> ActionChunk {
    let actions = (0..len)
        .map(|_| {
            let mut a = ActionCommand::zero();
            for v in &mut a.values {
                *v = rng.random_range(-0.1..0.1);
            }
            a
        })
        .collect();
    ActionChunk { actions, start_step: 0 }
}

fn sup_distance(a: &ActionChunk, b: &ActionChunk) -> f64 {
    a.actions
        .iter()
        .zip(&b.actions)
        .flat_map(|(x, y)| x.values.iter().zip(&y.values).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn noiseless_sampler_contracts(seed in any::<u64>(), len in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nominal = random_chunk(&mut rng, len);
        let schedule = DiffusionSchedule::noiseless(16, 0.5);
        let init = initial_chunk(&nominal, seed);
        let out = reverse_process(&init, &nominal, &schedule, seed);
        let bound = 0.5f64.powi(16) * sup_distance(&init, &nominal) + 1e-9;
        prop_assert!(sup_distance(&out, &nominal) <= bound);
    }

    #[test]
    fn sampler_is_seed_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nominal = random_chunk(&mut rng, 8);
        let schedule = DiffusionSchedule::default();
        prop_assert_eq!(sample_chunk(&nominal, &schedule, seed, 0.1), sample_chunk(&nominal, &schedule, seed, 0.1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn world_step_respects_actuator_limits(seed in any::<u64>(), task in 0usize..5, steps in 1usize..40) {
        let spec = TaskSpec::new(TaskId::ALL[task]);
        let (mut state, _) = reset(&spec, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..steps {
            let mut a = ActionCommand::zero();
            for v in &mut a.values {
                *v = rng.random_range(-1.0..1.0);
            }
            let before = state.clone();
            let (next, obs) = step(&state, &a);
            prop_assert_eq!(next.time_step, before.time_step + 1);
            prop_assert_eq!(obs.proprio.len(), PROPRIO_DIM);
            for arm in 0..2 {
                prop_assert!((0.0..=1.0).contains(&next.arms[arm].gripper));
                for j in 0..JOINTS {
                    let q = next.arms[arm].joints[j];
                    prop_assert!(q.abs() <= std::f64::consts::PI + 1e-12);
                    prop_assert!((q - before.arms[arm].joints[j]).abs() <= next.config.joint_delta_max + 1e-12);
                }
            }
            prop_assert_eq!(next.objects.len(), before.objects.len());
            state = next;
        }
    }
}
