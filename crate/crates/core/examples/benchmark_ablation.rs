//! Small-scale versions of the memory and recovery ablation tables, plus the
//! average columns of the baseline comparison recomputed from task cells.
//!
//!     cargo run --release --example benchmark_ablation -- [episodes]

use longhorizon::bench::{ablation_suite, aggregate, render_table, AblationKind, RunConfig};

fn main() {
    let episodes: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut cfg = RunConfig::default();
    cfg.run.episodes_per_task = episodes;

    for kind in [AblationKind::Memory, AblationKind::Recovery] {
        let rows = ablation_suite(kind, &cfg, None).expect("default config is valid");
        println!("{}", render_table(&format!("{kind:?} ablation, {episodes} episodes per task"), &rows));
    }

    println!("baseline averages (M(1) = first two tasks, M(n) = last three):");
    let table: [(&str, [f64; 5]); 5] = [
        ("DP", [1.0, 0.0, 10.0, 10.0, 0.0]),
        ("ACT", [1.0, 29.0, 19.0, 0.0, 0.0]),
        ("Pi0.5", [9.0, 13.0, 16.0, 6.0, 0.0]),
        ("X-VLA", [9.0, 13.0, 26.0, 1.0, 0.0]),
        ("Ours", [8.0, 38.0, 46.0, 60.0, 10.0]),
    ];
    for (name, cells) in table {
        let m1 = aggregate(&cells[..2]).expect("non-empty");
        let mn = aggregate(&cells[2..]).expect("non-empty");
        let total = aggregate(&cells).expect("non-empty");
        println!("  {name:<6} {m1:>5.1} {mn:>5.1} {total:>5.1}");
    }
}
