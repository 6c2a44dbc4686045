use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{DiffusionSchedule, ExecutorConfig};
use crate::planner::{AblationFlags, EpisodeConfig, NoisyBackend, OracleBackend, PlannerBackend};
use crate::world::{ScenarioParams, TaskId, TaskSpec};

/// Prefix of environment variables that override config keys, as
/// `LONGHORIZON_<SECTION>_<KEY>`.
pub const ENV_PREFIX: &str = "LONGHORIZON_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Oracle,
    OracleNoisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub tasks: Vec<String>,
    pub episodes_per_task: u64,
    pub seed_base: u64,
    pub output_dir: PathBuf,
    pub backend: BackendKind,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Write the final frame of each episode next to its trace.
    pub sidecar_images: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            tasks: TaskId::ALL.iter().map(|t| t.name().to_string()).collect(),
            episodes_per_task: 100,
            seed_base: 0,
            output_dir: PathBuf::from("runs/latest"),
            backend: BackendKind::Oracle,
            threads: 0,
            sidecar_images: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub n_h: usize,
    pub n_max: u32,
    pub horizon: usize,
    pub diffusion_steps: usize,
    pub gamma: f64,
    pub sigma_max: f64,
    /// Explicit per-step schedules; override `gamma` / `sigma_max` when set.
    pub gammas: Option<Vec<f64>>,
    pub sigmas: Option<Vec<f64>>,
    pub p_verify: f64,
    pub global_budget: u32,
    pub replan_limit: u32,
    pub bypass_sampler: bool,
}

impl Default for ParamsSection {
    fn default() -> Self {
        let e = EpisodeConfig::default();
        Self {
            n_h: e.n_h,
            n_max: e.n_max,
            horizon: e.executor.horizon,
            diffusion_steps: 16,
            gamma: 0.5,
            sigma_max: 0.02,
            gammas: None,
            sigmas: None,
            p_verify: 0.0,
            global_budget: e.global_budget,
            replan_limit: e.replan_limit,
            bypass_sampler: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub ablation: AblationFlags,
    pub params: ParamsSection,
    pub scenario: ScenarioParams,
}

fn override_value(raw: &str) -> toml::Value {
    // Parse as a TOML value when possible so numbers and booleans keep their type.
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_overrides(text, std::iter::empty())
    }

    /// Parse `text`, then apply `(VARIABLE, value)` overrides whose names
    /// start with [`ENV_PREFIX`].
    pub fn from_toml_with_overrides<I>(text: &str, vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (name, raw) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
            let Some((section, key)) = rest.split_once('_') else {
                return Err(ConfigError::Invalid(format!("override {name} names no key")));
            };
            let section = section.to_ascii_lowercase();
            let entry = table.entry(section.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(t) = entry else {
                return Err(ConfigError::Invalid(format!("{section} is not a section")));
            };
            t.insert(key.to_ascii_lowercase(), override_value(&raw));
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and apply overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_with_overrides(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.run.episodes_per_task < 1 {
            return bad("episodes_per_task must be at least 1".into());
        }
        if self.run.tasks.is_empty() {
            return bad("no tasks selected".into());
        }
        if let Some(t) = self.run.tasks.iter().find(|t| TaskId::parse(t).is_none()) {
            return bad(format!("unknown task {t}"));
        }
        if self.ablation.enable_working && !self.ablation.enable_history {
            return bad("enable_working requires enable_history: working memory is summarized from the history".into());
        }
        if !(0.0..=1.0).contains(&self.params.p_verify) {
            return bad(format!("p_verify {} outside [0, 1]", self.params.p_verify));
        }
        if self.params.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !self.schedule().is_valid() {
            return bad("diffusion schedule needs M >= 1 entries, gammas in (0, 1], sigmas >= 0 and sigmas[0] = 0".into());
        }
        let s = &self.scenario;
        if !(0.0..=1.0).contains(&s.press_fault_prob) || !(0.0..=1.0).contains(&s.polarity_reversed_prob) {
            return bad("scenario probabilities must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> DiffusionSchedule {
        let p = &self.params;
        let mut s = DiffusionSchedule::linear(p.diffusion_steps, p.gamma, p.sigma_max);
        if let Some(g) = &p.gammas {
            s.gammas = g.clone();
        }
        if let Some(sig) = &p.sigmas {
            s.sigmas = sig.clone();
        }
        s
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        let p = &self.params;
        EpisodeConfig {
            n_max: p.n_max,
            n_h: if self.ablation.enable_history { p.n_h } else { 0 },
            global_budget: p.global_budget,
            replan_limit: p.replan_limit,
            flags: self.ablation,
            executor: ExecutorConfig {
                horizon: p.horizon,
                schedule: self.schedule(),
                bypass_sampler: p.bypass_sampler,
                ..ExecutorConfig::default()
            },
        }
    }

    pub fn task_ids(&self) -> Vec<TaskId> {
        self.run.tasks.iter().filter_map(|t| TaskId::parse(t)).collect()
    }

    pub fn task_specs(&self) -> Vec<TaskSpec> {
        self.task_ids().into_iter().map(|t| TaskSpec::with_params(t, self.scenario.clone())).collect()
    }

    /// Seed of episode `i`, shared by every ablation row.
    pub fn episode_seed(&self, i: u64) -> u64 {
        self.run.seed_base.wrapping_add(i)
    }

    pub fn backend(&self, episode_seed: u64) -> Box<dyn PlannerBackend> {
        match self.run.backend {
            BackendKind::Oracle => Box::new(OracleBackend),
            BackendKind::OracleNoisy => Box::new(NoisyBackend { p_verify: self.params.p_verify, seed: episode_seed }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn override_keeps_type() {
        let vars = [("LONGHORIZON_RUN_EPISODES_PER_TASK".to_string(), "7".to_string())];
        let c = RunConfig::from_toml_with_overrides("[run]\nepisodes_per_task = 3\n", vars).unwrap();
        assert_eq!(c.run.episodes_per_task, 7);
    }

    #[test]
    fn working_needs_history() {
        let e = RunConfig::from_toml_str("[ablation]\nenable_history = false\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid(_)));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(RunConfig::from_toml_str("[run]\nepisodes = 3\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn history_off_zeroes_window() {
        let c = RunConfig::from_toml_str("[ablation]\nenable_history = false\nenable_working = false\n").unwrap();
        assert_eq!(c.episode_config().n_h, 0);
    }
}
