use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::EpisodeResult;
use crate::world::{MemoryClass, TaskId};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum AggregateError {
    #[error("cannot average an empty list")]
    EmptyInput,
}

fn on_tenths(v: f64) -> bool {
    ((v * 10.0).round() - v * 10.0).abs() < 1e-9
}

/// Mean of percentages rounded to one decimal, half away from zero.
pub fn aggregate(srs: &[f64]) -> Result<f64, AggregateError> {
    if srs.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    let n = srs.len() as i64;
    if srs.iter().all(|v| on_tenths(*v)) {
        // Exact in integer tenths: round(sum / n) with ties away from zero.
        let sum: i64 = srs.iter().map(|v| (v * 10.0).round() as i64).sum();
        let q = (2 * sum.abs() + n) / (2 * n);
        return Ok(sum.signum() as f64 * q as f64 / 10.0);
    }
    let mean = srs.iter().sum::<f64>() / n as f64;
    Ok((mean * 10.0).round() / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub episodes: usize,
    pub successes: usize,
    pub sr: f64,
    pub mean_steps: f64,
    pub mean_revisions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub per_task: BTreeMap<TaskId, TaskMetrics>,
    pub m1_avg: Option<f64>,
    pub mn_avg: Option<f64>,
    pub total_avg: f64,
}

impl MetricsReport {
    /// Per-task success rates from finished episodes.
    pub fn from_results(label: &str, results: &[EpisodeResult]) -> Result<Self, AggregateError> {
        let mut per_task = BTreeMap::new();
        for task in TaskId::ALL {
            let rs: Vec<&EpisodeResult> = results.iter().filter(|r| r.task_id == task).collect();
            if rs.is_empty() {
                continue;
            }
            let n = rs.len();
            let successes = rs.iter().filter(|r| r.success).count();
            per_task.insert(
                task,
                TaskMetrics {
                    episodes: n,
                    successes,
                    sr: 100.0 * successes as f64 / n as f64,
                    mean_steps: rs.iter().map(|r| r.steps as f64).sum::<f64>() / n as f64,
                    mean_revisions: rs.iter().map(|r| r.revisions as f64).sum::<f64>() / n as f64,
                },
            );
        }
        Self::from_task_rates(label, per_task)
    }

    pub fn from_task_rates(label: &str, per_task: BTreeMap<TaskId, TaskMetrics>) -> Result<Self, AggregateError> {
        let class = |c: MemoryClass| -> Vec<f64> {
            per_task.iter().filter(|(t, _)| t.memory_class() == c).map(|(_, m)| m.sr).collect()
        };
        let all: Vec<f64> = per_task.values().map(|m| m.sr).collect();
        Ok(Self {
            label: label.to_string(),
            m1_avg: aggregate(&class(MemoryClass::M1)).ok(),
            mn_avg: aggregate(&class(MemoryClass::Mn)).ok(),
            total_avg: aggregate(&all)?,
            per_task,
        })
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |v| format!("{v:.1}"))
}

/// Plain-text table, one row per report, one column per task plus averages.
pub fn render_table(title: &str, rows: &[MetricsReport]) -> String {
    let tasks: Vec<TaskId> = TaskId::ALL.into_iter().filter(|t| rows.iter().any(|r| r.per_task.contains_key(t))).collect();
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<18}", "row");
    for t in &tasks {
        let _ = write!(out, " {:>17}", t.name());
    }
    let _ = writeln!(out, " {:>7} {:>7} {:>7}", "M(1)", "M(n)", "Total");
    for r in rows {
        let _ = write!(out, "{:<18}", r.label);
        for t in &tasks {
            let _ = write!(out, " {:>17}", cell(r.per_task.get(t).map(|m| m.sr)));
        }
        let _ = writeln!(out, " {:>7} {:>7} {:>7}", cell(r.m1_avg), cell(r.mn_avg), format!("{:.1}", r.total_avg));
    }
    out
}
