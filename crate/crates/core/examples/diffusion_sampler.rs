//! The chunk sampler contracts a random start toward the controller's nominal
//! chunk. With no noise the residual shrinks by `(1 - gamma)` per step; with
//! the default schedule it stays within a few actuator quanta.

use longhorizon::executor::{initial_chunk, quantize, reverse_process, sample_chunk, ActionChunk, DiffusionSchedule, ACTUATOR_QUANTUM};
use longhorizon::world::ActionCommand;

fn max_gap(a: &ActionChunk, b: &ActionChunk) -> f64 {
    a.actions
        .iter()
        .zip(&b.actions)
        .flat_map(|(x, y)| x.values.iter().zip(&y.values).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn main() {
    let mut nominal = ActionChunk { actions: Vec::new(), start_step: 0 };
    for i in 0..8 {
        let mut a = ActionCommand::zero();
        a.values[0] = 0.05 - 0.01 * i as f64;
        a.values[3] = -0.08;
        a.values[6] = if i < 4 { 1.0 } else { 0.0 };
        nominal.actions.push(quantize(&a));
    }

    let init = initial_chunk(&nominal, 42);
    let start = max_gap(&init, &nominal);
    println!("initial gap {start:.4}");
    for m in [1, 4, 8, 16] {
        let s = DiffusionSchedule::noiseless(m, 0.5);
        let out = reverse_process(&init, &nominal, &s, 42);
        println!("  M={m:<2} sigma=0: gap {:.3e} (bound {:.3e})", max_gap(&out, &nominal), 0.5f64.powi(m as i32) * start);
    }

    let noisy = sample_chunk(&nominal, &DiffusionSchedule::default(), 42, 0.1);
    println!("default schedule: gap {:.3e} = {:.2} quanta", max_gap(&noisy, &nominal), max_gap(&noisy, &nominal) / ACTUATOR_QUANTUM);

    let quiet = sample_chunk(&nominal, &DiffusionSchedule::noiseless(16, 0.5), 42, 0.1);
    let executed: Vec<_> = quiet.actions.iter().map(quantize).collect();
    println!("sigma=0 after quantization equals nominal: {}", executed == nominal.actions);
}
