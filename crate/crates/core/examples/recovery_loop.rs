//! Verification, reflection and recovery on PressButton when the first press
//! is lost: the cycle sees the lamp stay dark, diagnoses the press as not
//! registered and retries the same sub-task.

use longhorizon::planner::{recover, run_episode, CompletionSignal, EpisodeConfig, OracleBackend, Recommendation, TraceEvent};
use longhorizon::world::{Env, HiddenAttr, TaskId, TaskSpec};

fn faulted(env: &Env) -> bool {
    env.state().hidden_attrs.iter().any(|(_, a)| *a == HiddenAttr::PressFault(true))
}

fn main() {
    let goal = TaskSpec::new(TaskId::PressButton);
    let seed = (0..).find(|s| faulted(&Env::new(goal.clone(), *s))).expect("some seed draws a press fault");
    let mut env = Env::new(goal.clone(), seed);
    let result = run_episode(&goal, &mut env, &OracleBackend, &EpisodeConfig::default()).expect("plan exists");

    println!("PressButton seed {seed}, first press faulted");
    for e in &result.trace {
        match e {
            TraceEvent::SubtaskStart { id, step, attempt, .. } => println!("  t={step:<3} start   {id} (attempt {attempt})"),
            TraceEvent::Verify { id, signal, .. } => println!("        verify  {id} -> {signal:?}"),
            TraceEvent::Reflection { diagnosis, recommendation, .. } => {
                println!("        reflect \"{diagnosis}\" -> {recommendation:?}")
            }
            TraceEvent::Recovery { action, .. } => println!("        recover {action:?}"),
            _ => {}
        }
    }
    println!("  success={}\n", result.success);

    println!("recover(c, rho, n) with N_max = 3:");
    for c in [CompletionSignal::Fail, CompletionSignal::Timeout] {
        for rho in [Recommendation::Retry, Recommendation::AdjustParam, Recommendation::Replan] {
            let row: Vec<String> = (0..=3).map(|n| format!("{:?}", recover(c, rho, n, 3))).collect();
            println!("  {c:?}/{rho:?}: {}", row.join(" "));
        }
    }
}
