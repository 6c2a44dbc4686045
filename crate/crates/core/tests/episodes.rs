//! Whole-episode behavior: golden runs, determinism, sampler equivalence,
//! bounds under verifier noise, traces and batch runs.

mod common;

use std::fs;

use common::*;
use longhorizon::bench::{
    read_trace, replay_trace, report_from_traces, run_batch, write_trace, ConfigError, RunConfig, TraceError, TraceHeader,
};
use longhorizon::executor::DiffusionSchedule;
use longhorizon::planner::{EpisodeConfig, TraceEvent};
use longhorizon::world::{HiddenAttr, TaskId, TaskSpec};

#[test]
fn golden_press_retry() {
    let r = oracle_episode(TaskId::PressButton, GOLDEN_PRESS_SEED, &EpisodeConfig::default());
    assert_eq!(first_subtask_pattern(&r), GOLDEN_PATTERN);
    assert!(r.success);
    assert_eq!(r.revisions, 0);
    let diagnoses: Vec<&str> = r
        .trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Reflection { diagnosis, .. } => Some(diagnosis.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(diagnoses, ["press not registered"]);
}

#[test]
fn press_fault_always_costs_one_retry() {
    let cfg = EpisodeConfig::default();
    for seed in 0..40 {
        let env = longhorizon::world::Env::new(TaskSpec::new(TaskId::PressButton), seed);
        let faulted = env.state().hidden_attrs.iter().any(|(_, a)| *a == HiddenAttr::PressFault(true));
        let r = oracle_episode(TaskId::PressButton, seed, &cfg);
        assert!(r.success, "seed {seed}");
        let pattern = first_subtask_pattern(&r);
        if faulted {
            assert_eq!(pattern, GOLDEN_PATTERN, "seed {seed}");
        } else {
            assert_eq!(pattern, ["press", "verify SUCCESS"], "seed {seed}");
        }
    }
}

#[test]
fn only_reversed_batteries_are_diagnosed_as_polarity() {
    let cfg = EpisodeConfig::default();
    for seed in 0..30 {
        let env = longhorizon::world::Env::new(TaskSpec::new(TaskId::BatteryTry), seed);
        let reversed = env.state().hidden_attrs.iter().any(|(_, a)| *a == HiddenAttr::Polarity(-1));
        let r = oracle_episode(TaskId::BatteryTry, seed, &cfg);
        assert!(r.success, "seed {seed}");
        let polarity = r.trace.iter().any(|e| matches!(e, TraceEvent::Reflection { diagnosis, .. } if diagnosis.contains("polarity")));
        assert_eq!(polarity, reversed, "seed {seed}");
    }
}

#[test]
fn episodes_are_deterministic() {
    let cfg = EpisodeConfig::default();
    for task in TaskId::ALL {
        for seed in [0, 17] {
            assert_eq!(oracle_episode(task, seed, &cfg), oracle_episode(task, seed, &cfg), "{task:?}/{seed}");
            assert_eq!(noisy_episode(task, seed, 0.3, &cfg), noisy_episode(task, seed, 0.3, &cfg), "{task:?}/{seed}");
        }
    }
}

#[test]
fn noiseless_sampler_reproduces_nominal_execution() {
    let mut sampled = EpisodeConfig::default();
    sampled.executor.schedule = DiffusionSchedule::noiseless(16, 0.5);
    let mut nominal = sampled.clone();
    nominal.executor.bypass_sampler = true;
    for task in TaskId::ALL {
        for seed in 0..4 {
            let a = oracle_episode(task, seed, &sampled);
            let b = oracle_episode(task, seed, &nominal);
            assert_eq!(a.trace, b.trace, "{task:?}/{seed}");
            for e in &a.trace {
                if let TraceEvent::Chunk(c) = e {
                    assert!(c.executed.len() <= c.nominal.len());
                    for (x, n) in c.executed.iter().zip(&c.nominal) {
                        assert_eq!(x, n, "{task:?}/{seed} chunk {}", c.index);
                    }
                }
            }
        }
    }
}

#[test]
fn noisy_verifier_episodes_stay_bounded() {
    let cfg = EpisodeConfig::default();
    for p in [0.0, 0.1, 0.3] {
        for task in TaskId::ALL {
            for seed in 0..8 {
                let r = noisy_episode(task, seed, p, &cfg);
                check_episode_bounds(&r, &cfg).unwrap_or_else(|e| panic!("{task:?}/{seed} p={p}: {e}"));
            }
        }
    }
}

#[test]
fn tight_budgets_still_terminate() {
    let cfg = EpisodeConfig { global_budget: 90, n_max: 1, replan_limit: 1, ..EpisodeConfig::default() };
    for task in TaskId::ALL {
        for seed in 0..5 {
            let r = noisy_episode(task, seed, 0.3, &cfg);
            check_episode_bounds(&r, &cfg).unwrap_or_else(|e| panic!("{task:?}/{seed}: {e}"));
        }
    }
}

fn write_one(dir: &std::path::Path, task: TaskId, seed: u64) -> std::path::PathBuf {
    let cfg = EpisodeConfig::default();
    let r = oracle_episode(task, seed, &cfg);
    let header = TraceHeader::new(&TaskSpec::new(task), seed, &cfg, longhorizon::bench::BackendKind::Oracle, 0.0);
    let path = dir.join(format!("{}_{seed}.jsonl", task.name()));
    write_trace(&r, &header, &path, None).unwrap();
    path
}

#[test]
fn trace_round_trip_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    for task in TaskId::ALL {
        let path = write_one(dir.path(), task, 3);
        let file = read_trace(&path).unwrap();
        assert_eq!(file.recorded(), oracle_episode(task, 3, &EpisodeConfig::default()));
        let replay = replay_trace(&path).unwrap();
        assert!(replay.matches() && replay.events_identical(), "{task:?}");
    }
}

#[test]
fn corrupt_traces_are_reported_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_one(dir.path(), TaskId::PressButton, 1);
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    let truncated = dir.path().join("truncated.jsonl");
    fs::write(&truncated, lines[..5].join("\n")).unwrap();
    assert!(matches!(read_trace(&truncated), Err(TraceError::CorruptTrace { line: 6, .. })));

    let garbled = dir.path().join("garbled.jsonl");
    let mut g: Vec<&str> = lines.clone();
    g[3] = "{\"event\": \"chunk\", ";
    fs::write(&garbled, g.join("\n")).unwrap();
    assert!(matches!(read_trace(&garbled), Err(TraceError::CorruptTrace { line: 4, .. })));

    let schema = dir.path().join("schema.jsonl");
    fs::write(&schema, text.replacen("longhorizon-trace/1", "longhorizon-trace/0", 1)).unwrap();
    assert!(matches!(read_trace(&schema), Err(TraceError::SchemaMismatch { .. })));

    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert!(matches!(read_trace(&empty), Err(TraceError::CorruptTrace { line: 1, .. })));
}

#[test]
fn batches_ignore_thread_count_and_rebuild_from_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.run.episodes_per_task = 3;
    cfg.run.threads = 1;
    let serial = run_batch(&cfg, "serial", Some(dir.path())).unwrap();
    cfg.run.threads = 4;
    let parallel = run_batch(&cfg, "serial", None).unwrap();
    let strip = |rs: &[longhorizon::planner::EpisodeResult]| {
        rs.iter().cloned().map(|mut r| {
            r.trace_path = None;
            r
        }).collect::<Vec<_>>()
    };
    assert_eq!(strip(&serial.results), strip(&parallel.results));
    assert_eq!(serial.report, parallel.report);
    let rebuilt = report_from_traces(&dir.path().join("traces"), "serial").unwrap();
    assert_eq!(rebuilt, serial.report);
    assert!(dir.path().join("manifest.json").is_file());
    assert!(dir.path().join("report.txt").is_file());
}

fn config_file(name: &str) -> Result<RunConfig, ConfigError> {
    RunConfig::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name))
}

#[test]
fn shipped_configs_load() {
    let d = config_file("default.toml").unwrap();
    assert_eq!(d.run.episodes_per_task, 100);
    assert_eq!(d.params.n_max, 3);
    assert_eq!(config_file("smoke.toml").unwrap().run.episodes_per_task, 5);
    assert_eq!(config_file("noisy_verifier.toml").unwrap().params.p_verify, 0.1);
    assert!(matches!(config_file("bad_flags.toml"), Err(ConfigError::Invalid(_))));
    assert!(matches!(config_file("missing.toml"), Err(ConfigError::Io { .. })));
}

#[test]
fn config_rejects_bad_values() {
    for text in [
        "[run]\nepisodes_per_task = 0\n",
        "[run]\ntasks = [\"StackCups\"]\n",
        "[params]\np_verify = 1.5\n",
        "[params]\nhorizon = 0\n",
        "[params]\nsigmas = [0.1, 0.0]\ndiffusion_steps = 2\n",
        "[params]\ngamma = 0.0\n",
        "[scenario]\npress_fault_prob = -0.1\n",
    ] {
        assert!(matches!(RunConfig::from_toml_str(text), Err(ConfigError::Invalid(_))), "{text}");
    }
    assert!(matches!(RunConfig::from_toml_str("[run\n"), Err(ConfigError::Parse(_))));
    assert!(matches!(RunConfig::from_toml_str("[params]\nn_max = \"three\"\n"), Err(ConfigError::Parse(_))));
}

#[test]
fn environment_overrides_apply_before_validation() {
    let vars = |k: &str, v: &str| vec![(k.to_string(), v.to_string())];
    let c = RunConfig::from_toml_with_overrides("", vars("LONGHORIZON_PARAMS_P_VERIFY", "0.25")).unwrap();
    assert_eq!(c.params.p_verify, 0.25);
    let c = RunConfig::from_toml_with_overrides("", vars("LONGHORIZON_RUN_BACKEND", "oracle_noisy")).unwrap();
    assert_eq!(c.run.backend, longhorizon::bench::BackendKind::OracleNoisy);
    let c = RunConfig::from_toml_with_overrides("", vars("OTHER_RUN_SEED_BASE", "9")).unwrap();
    assert_eq!(c.run.seed_base, 0);
    let e = RunConfig::from_toml_with_overrides("", vars("LONGHORIZON_ABLATION_ENABLE_HISTORY", "false"));
    assert!(matches!(e, Err(ConfigError::Invalid(_))));
}
