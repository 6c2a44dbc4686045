use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::world::{ActionCommand, PROPRIO_DIM};

use super::ActionChunk;

/// Reverse-process schedule. Index `i` is used by denoise step `m = i + 1`;
/// the process runs from `m = M` down to `m = 1`, so `sigmas[0]` is the last
/// noise level applied and must be zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub steps: usize,
    pub gammas: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl DiffusionSchedule {
    /// Constant contraction, noise rising linearly from 0 at `m = 1` to
    /// `sigma_max` at `m = M`.
    pub fn linear(steps: usize, gamma: f64, sigma_max: f64) -> Self {
        let sigmas = (0..steps)
            .map(|i| if steps > 1 { sigma_max * i as f64 / (steps - 1) as f64 } else { 0.0 })
            .collect();
        Self { steps, gammas: vec![gamma; steps], sigmas }
    }

    pub fn noiseless(steps: usize, gamma: f64) -> Self {
        Self::linear(steps, gamma, 0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.steps >= 1
            && self.gammas.len() == self.steps
            && self.sigmas.len() == self.steps
            && self.gammas.iter().all(|g| *g > 0.0 && *g <= 1.0)
            && self.sigmas.iter().all(|s| *s >= 0.0)
            && self.sigmas[0] == 0.0
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear(16, 0.5, 0.02)
    }
}

/// One reverse step: contract toward `nominal` by `gamma_m`, add `sigma_m * noise`.
pub fn denoise_step(
    chunk: &ActionChunk,
    m: usize,
    nominal: &ActionChunk,
    schedule: &DiffusionSchedule,
    noise: &[[f64; PROPRIO_DIM]],
) -> ActionChunk {
    assert!(m >= 1 && m <= schedule.steps, "denoise index {m} outside 1..={}", schedule.steps);
    let (g, s) = (schedule.gammas[m - 1], schedule.sigmas[m - 1]);
    let actions = chunk
        .actions
        .iter()
        .zip(&nominal.actions)
        .zip(noise)
        .map(|((a, n), e)| {
            let mut values = [0.0; PROPRIO_DIM];
            for i in 0..PROPRIO_DIM {
                values[i] = a.values[i] + g * (n.values[i] - a.values[i]) + s * e[i];
            }
            ActionCommand { values }
        })
        .collect();
    ActionChunk { actions, start_step: chunk.start_step }
}

fn draws(rng: &mut ChaCha8Rng, len: usize) -> Vec<[f64; PROPRIO_DIM]> {
    (0..len)
        .map(|_| {
            let mut row = [0.0; PROPRIO_DIM];
            for v in &mut row {
                *v = StandardNormal.sample(rng);
            }
            row
        })
        .collect()
}

/// Standard-normal starting chunk shaped like `nominal`.
pub fn initial_chunk(nominal: &ActionChunk, seed: u64) -> ActionChunk {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions = draws(&mut rng, nominal.actions.len()).into_iter().map(|values| ActionCommand { values }).collect();
    ActionChunk { actions, start_step: nominal.start_step }
}

/// Apply denoise steps `M, M-1, ..., 1` to `init`. Noise for step `m` comes
/// from a generator keyed by `(seed, m)`.
pub fn reverse_process(init: &ActionChunk, nominal: &ActionChunk, schedule: &DiffusionSchedule, seed: u64) -> ActionChunk {
    let mut chunk = init.clone();
    for m in (1..=schedule.steps).rev() {
        let noise = if schedule.sigmas[m - 1] == 0.0 {
            vec![[0.0; PROPRIO_DIM]; chunk.actions.len()]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(&[&seed.to_le_bytes(), &(m as u64).to_le_bytes()]));
            draws(&mut rng, chunk.actions.len())
        };
        chunk = denoise_step(&chunk, m, nominal, schedule, &noise);
    }
    chunk
}

/// Draw, denoise and clamp a chunk; identical inputs give identical output.
pub fn sample_chunk(nominal: &ActionChunk, schedule: &DiffusionSchedule, seed: u64, joint_delta_max: f64) -> ActionChunk {
    let init = initial_chunk(nominal, seed);
    let mut out = reverse_process(&init, nominal, schedule, seed.wrapping_add(1));
    for a in &mut out.actions {
        *a = a.clamped(joint_delta_max);
    }
    out
}

/// Resolution of the actuator command grid.
pub const ACTUATOR_QUANTUM: f64 = 1.0 / 1024.0;

pub fn quantize(a: &ActionCommand) -> ActionCommand {
    let mut out = a.clone();
    for v in &mut out.values {
        *v = (*v / ACTUATOR_QUANTUM).round() * ACTUATOR_QUANTUM;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(v: f64) -> ActionChunk {
        ActionChunk { actions: vec![ActionCommand { values: [v; PROPRIO_DIM] }; 8], start_step: 0 }
    }

    #[test]
    fn fixed_point() {
        let s = DiffusionSchedule::noiseless(16, 0.5);
        let n = chunk(0.03);
        let zero = vec![[0.0; PROPRIO_DIM]; 8];
        assert_eq!(denoise_step(&n, 4, &n, &s, &zero), n);
    }

    #[test]
    fn full_contraction() {
        let s = DiffusionSchedule::noiseless(4, 1.0);
        let zero = vec![[0.0; PROPRIO_DIM]; 8];
        let out = denoise_step(&chunk(0.7), 2, &chunk(0.01), &s, &zero);
        assert!(out.actions.iter().flat_map(|a| a.values).all(|v| (v - 0.01).abs() < 1e-15));
    }

    #[test]
    fn schedule_shapes() {
        let s = DiffusionSchedule::default();
        assert!(s.is_valid());
        assert_eq!(s.sigmas[0], 0.0);
        assert!((s.sigmas[15] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_chunk() {
        let s = DiffusionSchedule::default();
        let n = chunk(0.02);
        assert_eq!(sample_chunk(&n, &s, 9, 0.1), sample_chunk(&n, &s, 9, 0.1));
    }
}
