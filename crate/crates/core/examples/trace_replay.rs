//! Write an episode trace as JSON Lines, replay it, then show what a
//! truncated file reports.

use std::fs;

use longhorizon::bench::{read_trace, replay_trace, write_trace, BackendKind, TraceError, TraceHeader};
use longhorizon::planner::{run_episode, EpisodeConfig, OracleBackend};
use longhorizon::world::{Env, TaskId, TaskSpec};

fn main() -> Result<(), TraceError> {
    let dir = std::env::temp_dir().join("longhorizon_trace_demo");
    fs::create_dir_all(&dir)?;
    let goal = TaskSpec::new(TaskId::BatteryTry);
    let cfg = EpisodeConfig::default();
    let seed = 12;
    let mut env = Env::new(goal.clone(), seed);
    let result = run_episode(&goal, &mut env, &OracleBackend, &cfg).expect("plan exists");

    let path = dir.join("battery.jsonl");
    let header = TraceHeader::new(&goal, seed, &cfg, BackendKind::Oracle, 0.0);
    write_trace(&result, &header, &path, None)?;
    let file = read_trace(&path)?;
    println!("{}: {} events, config {}", path.display(), file.events.len(), &file.header.config_sha256[..12]);

    let replay = replay_trace(&path)?;
    println!(
        "replay: success {} -> {}, signals match: {}, events identical: {}",
        replay.recorded.success,
        replay.replayed.success,
        replay.matches(),
        replay.events_identical()
    );

    let text = fs::read_to_string(&path)?;
    let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    let broken = dir.join("truncated.jsonl");
    fs::write(&broken, cut)?;
    match read_trace(&broken) {
        Err(e) => println!("truncated copy: {e}"),
        Ok(_) => println!("truncated copy unexpectedly parsed"),
    }
    Ok(())
}
