//! Distractor masking: the executor picks its target by kind among the
//! unmasked pixels, so the planner's distractor boxes decide which block the
//! arm goes for. Writes the mask (PBM) and filtered frame (PPM) to the temp dir.

use std::fs::File;

use longhorizon::executor::{execute_subtask, ExecutorConfig};
use longhorizon::mask::{apply_filter, propagate, segment_init};
use longhorizon::memory::MemoryState;
use longhorizon::percept::extract;
use longhorizon::planner::{OracleBackend, PlannerBackend, SubTask};
use longhorizon::world::{write_ppm, Env, TaskId, TaskSpec};

fn place_block(goal: &TaskSpec, env: &Env) -> SubTask {
    let percept = extract(env.observation(), env.config());
    let memory = MemoryState::new();
    let plan = OracleBackend.plan(goal, &percept, &memory).expect("template exists");
    OracleBackend.ground(goal, &plan.subtasks[0], &percept, &memory).expect("roles bind")
}

fn main() -> std::io::Result<()> {
    let goal = TaskSpec::new(TaskId::RearrangeBlocks);
    let seed = 3;
    let env = Env::new(goal.clone(), seed);
    let t = place_block(&goal, &env);
    let obs = env.observation().clone();

    let mask = segment_init(&obs.image, &t.distractor_boxes, obs.time_step).expect("boxes inside image");
    let filtered = apply_filter(&obs.image, &mask).expect("same size");
    let dir = std::env::temp_dir();
    mask.write_pbm(File::create(dir.join("distractor_mask.pbm"))?)?;
    write_ppm(&filtered.image, File::create(dir.join("filtered.ppm"))?)?;
    println!(
        "{}: {} distractor boxes, {} masked pixels (mask and filtered frame in {})",
        t.id,
        t.distractor_boxes.len(),
        mask.count(),
        dir.display()
    );
    println!("mask unchanged on a static frame: {}", propagate(&obs.image, &mask, 1).grid == mask.grid);

    let cfg = ExecutorConfig::default();
    for (label, boxes) in [("with boxes", t.distractor_boxes.clone()), ("no boxes", Vec::new())] {
        let mut env = Env::new(goal.clone(), seed);
        let mut task = t.clone();
        task.distractor_boxes = boxes;
        let mask = segment_init(&obs.image, &task.distractor_boxes, 0).expect("boxes inside image");
        let report = execute_subtask(&mut env, &task, mask, task.max_steps, 11, &cfg);
        println!(
            "{label:<10} -> {:?} after {} steps, task post-condition met: {}",
            report.checkpoint_reason,
            report.steps_used,
            longhorizon::planner::verify(
                &extract(&report.final_observation, env.config()),
                &task.post,
                &task.bindings,
                &Default::default(),
                report.steps_used,
                task.max_steps
            ) == longhorizon::planner::CompletionSignal::Success
        );
    }
    Ok(())
}
