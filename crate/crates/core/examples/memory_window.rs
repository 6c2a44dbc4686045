//! Episodic history, its sliding window and working memory on
//! BlocksRankingTry, where the size ranking is only ever observed a pair at a
//! time on the scanner and has to be remembered to place the blocks.

use longhorizon::planner::{run_episode, AblationFlags, EpisodeConfig, OracleBackend};
use longhorizon::world::{Env, TaskId, TaskSpec};

fn run(label: &str, flags: AblationFlags, n_h: usize) {
    let goal = TaskSpec::new(TaskId::BlocksRankingTry);
    let mut env = Env::new(goal.clone(), 5);
    let cfg = EpisodeConfig { flags, n_h, ..EpisodeConfig::default() };
    let r = run_episode(&goal, &mut env, &OracleBackend, &cfg).expect("plan exists");
    let m = &r.final_memory;
    println!(
        "{label:<22} success={:<5} history={} summarized={} appended={} facts={}",
        r.success,
        m.history.len(),
        m.summarized_count,
        m.total_appended(),
        m.working.len()
    );
}

fn main() {
    let full = AblationFlags::default();
    let history_only = AblationFlags { enable_working: false, enable_error_register: false, ..full };
    run("full, window 8", full, 8);
    run("full, window 2", full, 2);
    run("history only, window 8", history_only, 8);

    let goal = TaskSpec::new(TaskId::BlocksRankingTry);
    let mut env = Env::new(goal.clone(), 5);
    let r = run_episode(&goal, &mut env, &OracleBackend, &EpisodeConfig::default()).expect("plan exists");
    println!("\ncomparisons remembered at the end of the full run:");
    for line in r.final_memory.working.rendered().lines().filter(|l| l.starts_with("pair:")) {
        println!("  {line}");
    }
}
