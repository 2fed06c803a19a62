//! Episodes, experiments and sweeps.
//!
//! An experiment runs `trials` independent episodes, trial `i` seeded with
//! `master_seed + i`. Each episode samples a hidden ground truth from the
//! prior, then alternates planning, acting and filtering until the drone
//! stands on the target or the step cap is hit. Results aggregate into one
//! CSV row per configuration.

use std::cmp::Ordering;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::belief::{
    regenerate_empty_target, regenerate_unexpected_responder, regenerate_uniform, Belief, InconsistentObservation,
};
use crate::error::{Error, Result};
use crate::grid_world::{make_environment, Action, EnvironmentFamily, GridMap};
use crate::model::{Model, ModelParams, Observation, TargetSet};
use crate::planner::{BeliefFilter, Planner, PlannerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub family: EnvironmentFamily,
    /// Only used by the `RANDOM` family.
    #[serde(default)]
    pub seed: u64,
    /// ASCII map to load instead of the family's built-in layout. The family
    /// still picks the default step cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_file: Option<PathBuf>,
}

impl EnvironmentConfig {
    pub fn new(family: EnvironmentFamily) -> Self {
        Self { family, seed: 0, map_file: None }
    }

    pub fn build(&self) -> Result<GridMap> {
        match &self.map_file {
            Some(path) => GridMap::parse(&std::fs::read_to_string(path)?),
            None => make_environment(self.family, self.seed),
        }
    }
}

fn default_trials() -> u32 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default = "default_trials")]
    pub trials: u32,
    /// Step cap per episode; the family default when absent.
    #[serde(default)]
    pub max_steps: Option<u32>,
    #[serde(default)]
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn new(family: EnvironmentFamily, planner: PlannerConfig) -> Self {
        Self {
            environment: EnvironmentConfig::new(family),
            model: ModelParams::default(),
            planner,
            trials: default_trials(),
            max_steps: None,
            master_seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        self.model.validate()?;
        self.planner.validate()
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps.unwrap_or(match self.environment.family {
            EnvironmentFamily::Small => 16,
            EnvironmentFamily::Large | EnvironmentFamily::Cross | EnvironmentFamily::Building => 40,
            EnvironmentFamily::Random => 150,
        })
    }

    pub fn build_model(&self) -> Result<Model> {
        self.validate()?;
        Model::new(self.environment.build()?, self.model)
    }

    pub fn trial_seed(&self, index: u32) -> u64 {
        self.master_seed.wrapping_add(u64::from(index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub success: bool,
    /// Steps taken; equals the cap on failure.
    pub steps: u32,
    pub responder_observations: u32,
    /// Extrinsic reward only.
    pub cumulative_reward: f64,
    /// Time spent inside the planner.
    pub wall_time_s: f64,
    pub regenerations: u32,
}

/// One real-world filter step. Falls back to regeneration when the
/// observation contradicts the belief, and to a uniform consistent belief
/// if even that fails.
pub fn filter_step(
    model: &Model,
    belief: &Belief,
    action: Action,
    obs: &Observation,
    visited: TargetSet,
    filter: BeliefFilter,
    truncation_size: usize,
) -> Result<(Belief, bool)> {
    let predicted = belief.predict(model, action);
    let (updated, regenerated) = match predicted.update(model, obs) {
        Ok(b) => (b, false),
        Err(kind) => (regenerate(model, belief, &predicted, obs, visited, kind)?, true),
    };
    let out = match filter {
        BeliefFilter::Complete => updated,
        BeliefFilter::Truncated => updated.truncate(truncation_size),
    };
    Ok((out, regenerated))
}

fn regenerate(
    model: &Model,
    previous: &Belief,
    predicted: &Belief,
    obs: &Observation,
    visited: TargetSet,
    kind: InconsistentObservation,
) -> Result<Belief> {
    let meta = predicted.meta();
    let rebuilt = match kind {
        InconsistentObservation::EmptyTarget => regenerate_empty_target(model, meta, obs.drone, visited),
        InconsistentObservation::UnexpectedResponder => {
            let l_old =
                meta.last_responder.map(|s| s.position).or_else(|| previous.likely_responder()).unwrap_or(obs.drone);
            regenerate_unexpected_responder(model, meta, obs.drone, l_old, visited)
        }
    };
    match rebuilt.ok().and_then(|b| b.update(model, obs).ok()) {
        Some(b) => Ok(b),
        None => regenerate_uniform(model, meta, obs, visited),
    }
}

/// Runs one seeded episode. Deterministic in `seed` apart from wall time.
pub fn run_trial(model: &Model, config: &ExperimentConfig, seed: u64) -> Result<TrialResult> {
    run_trial_inner(model, config, seed).map_err(|e| Error::Trial { seed, source: Box::new(e) })
}

fn run_trial_inner(model: &Model, config: &ExperimentConfig, seed: u64) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_steps = config.max_steps();
    let pc = &config.planner;
    let prior = model.initial_belief();
    let mut truth = prior.sample(&mut rng);
    let mut result = TrialResult {
        seed,
        success: false,
        steps: 0,
        responder_observations: 0,
        cumulative_reward: 0.0,
        wall_time_s: 0.0,
        regenerations: 0,
    };
    if model.is_terminal(&truth) {
        result.success = true;
        return Ok(result);
    }
    let first = model.observe(&truth);
    let mut belief =
        prior.update(model, &first).map_err(|e| Error::EpisodeLogic(format!("initial observation: {e}")))?;
    if pc.belief_filter == BeliefFilter::Truncated {
        belief = belief.truncate(pc.truncation_size);
    }
    let mut visited = TargetSet::default();
    let mut planner = Planner::new(model, pc.clone())?;

    while result.steps < max_steps {
        let started = Instant::now();
        let action = planner.plan(&belief, visited, &mut rng)?;
        result.wall_time_s += started.elapsed().as_secs_f64();

        let next = model.transition(truth, action, &mut rng);
        let obs = model.observe(&next);
        result.cumulative_reward += model.reward(&truth, action, &next);
        result.steps += 1;
        if obs.responder_seen {
            result.responder_observations += 1;
        }
        truth = next;
        if model.is_terminal(&truth) {
            result.success = true;
            return Ok(result);
        }
        if let Some(g) = model.target_slot(obs.drone) {
            visited.insert(g);
        }
        let (b, regenerated) =
            filter_step(model, &belief, action, &obs, visited, pc.belief_filter, pc.truncation_size)?;
        belief = b;
        result.regenerations += u32::from(regenerated);
    }
    Ok(result)
}

/// Aggregate metrics of one configuration, flattened for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub family: EnvironmentFamily,
    pub env_seed: u64,
    pub map_file: String,
    pub p_still: f64,
    pub toward_goal_factor: f64,
    pub goal_reward: f64,
    pub terminal_radius: u32,
    pub num_samples: u32,
    pub max_depth: u32,
    pub ucb_c: f64,
    pub gamma: f64,
    pub exploration_strategy: String,
    pub entropy_mode: String,
    pub entropy_coeff: f64,
    pub rr_bonus: f64,
    pub rollout_policy: String,
    pub rollout_action_mode: String,
    pub belief_filter: String,
    pub truncation_size: usize,
    pub trials: u32,
    pub max_steps: u32,
    pub master_seed: u64,
    pub completed_trials: u32,
    pub failed_trials: u32,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub total_steps: u64,
    pub total_robs: u64,
    pub total_reward: f64,
    pub total_time_s: f64,
    pub reward_per_time: f64,
    pub error: String,
}

impl Summary {
    fn empty(config: &ExperimentConfig) -> Self {
        let (m, p) = (&config.model, &config.planner);
        Summary {
            family: config.environment.family,
            env_seed: config.environment.seed,
            map_file: config.environment.map_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            p_still: m.p_still,
            toward_goal_factor: m.toward_goal_factor,
            goal_reward: m.goal_reward,
            terminal_radius: m.terminal_radius,
            num_samples: p.num_samples,
            max_depth: p.max_depth,
            ucb_c: p.ucb_c,
            gamma: p.gamma,
            exploration_strategy: p.exploration_strategy.to_string(),
            entropy_mode: p.entropy_mode.label().to_string(),
            entropy_coeff: p.entropy_coeff,
            rr_bonus: p.rr_bonus,
            rollout_policy: p.rollout_policy.to_string(),
            rollout_action_mode: p.rollout_action_mode.to_string(),
            belief_filter: p.belief_filter.to_string(),
            truncation_size: p.truncation_size,
            trials: config.trials,
            max_steps: config.max_steps(),
            master_seed: config.master_seed,
            completed_trials: 0,
            failed_trials: 0,
            success_rate: 0.0,
            mean_steps: 0.0,
            total_steps: 0,
            total_robs: 0,
            total_reward: 0.0,
            total_time_s: 0.0,
            reward_per_time: 0.0,
            error: String::new(),
        }
    }

    /// Folds trial outcomes in index order. Failed trials are counted and
    /// their first error kept; they do not enter the metrics.
    pub fn from_trials(config: &ExperimentConfig, trials: &[Result<TrialResult>]) -> Self {
        let mut s = Summary::empty(config);
        let mut successes = 0u32;
        for t in trials {
            match t {
                Ok(t) => {
                    s.completed_trials += 1;
                    successes += u32::from(t.success);
                    s.total_steps += u64::from(t.steps);
                    s.total_robs += u64::from(t.responder_observations);
                    s.total_reward += t.cumulative_reward;
                    s.total_time_s += t.wall_time_s;
                }
                Err(e) => {
                    s.failed_trials += 1;
                    if s.error.is_empty() {
                        s.error = e.to_string();
                    }
                }
            }
        }
        if s.completed_trials > 0 {
            let n = f64::from(s.completed_trials);
            s.success_rate = f64::from(successes) / n;
            s.mean_steps = s.total_steps as f64 / n;
        }
        if s.total_time_s > 0.0 {
            s.reward_per_time = s.total_reward / s.total_time_s;
        }
        s
    }

    fn failed(config: &ExperimentConfig, error: &Error) -> Self {
        let mut s = Summary::empty(config);
        s.failed_trials = config.trials;
        s.error = error.to_string();
        s
    }

    pub fn is_complete(&self) -> bool {
        self.failed_trials == 0 && self.completed_trials == self.trials
    }
}

#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub trials: Vec<Result<TrialResult>>,
    pub summary: Summary,
}

impl Experiment {
    pub fn successful_trials(&self) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter_map(|t| t.as_ref().ok())
    }
}

/// Runs every trial of `config` on a prebuilt model, in parallel.
pub fn run_experiment_with_model(model: &Model, config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let trials: Vec<Result<TrialResult>> =
        (0..config.trials).into_par_iter().map(|i| run_trial(model, config, config.trial_seed(i))).collect();
    let summary = Summary::from_trials(config, &trials);
    Ok(Experiment { config: config.clone(), trials, summary })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let model = config.build_model()?;
    run_experiment_with_model(&model, config)
}

/// Runs each configuration and returns the summaries sorted by
/// configuration. A configuration that cannot even start yields a row with
/// every trial failed and the error message.
pub fn sweep(configs: &[ExperimentConfig]) -> Vec<Summary> {
    let mut rows: Vec<(usize, Summary)> = configs
        .par_iter()
        .enumerate()
        .map(|(i, c)| match run_experiment(c) {
            Ok(e) => (i, e.summary),
            Err(e) => (i, Summary::failed(c, &e)),
        })
        .collect();
    rows.sort_by(|a, b| config_order(&configs[a.0], &configs[b.0]).then(a.0.cmp(&b.0)));
    rows.into_iter().map(|(_, s)| s).collect()
}

/// Lexicographic order over configuration fields, in CSV column order.
pub fn config_order(a: &ExperimentConfig, b: &ExperimentConfig) -> Ordering {
    let (ma, mb) = (&a.model, &b.model);
    let (pa, pb) = (&a.planner, &b.planner);
    a.environment
        .family
        .cmp(&b.environment.family)
        .then(a.environment.seed.cmp(&b.environment.seed))
        .then_with(|| a.environment.map_file.cmp(&b.environment.map_file))
        .then(ma.p_still.total_cmp(&mb.p_still))
        .then(ma.toward_goal_factor.total_cmp(&mb.toward_goal_factor))
        .then(ma.goal_reward.total_cmp(&mb.goal_reward))
        .then(ma.terminal_radius.cmp(&mb.terminal_radius))
        .then(pa.num_samples.cmp(&pb.num_samples))
        .then(pa.max_depth.cmp(&pb.max_depth))
        .then(pa.ucb_c.total_cmp(&pb.ucb_c))
        .then(pa.gamma.total_cmp(&pb.gamma))
        .then(pa.exploration_strategy.cmp(&pb.exploration_strategy))
        .then(pa.entropy_mode.cmp(&pb.entropy_mode))
        .then(pa.entropy_coeff.total_cmp(&pb.entropy_coeff))
        .then(pa.rr_bonus.total_cmp(&pb.rr_bonus))
        .then(pa.rollout_policy.cmp(&pb.rollout_policy))
        .then(pa.rollout_action_mode.cmp(&pb.rollout_action_mode))
        .then(pa.belief_filter.cmp(&pb.belief_filter))
        .then(pa.truncation_size.cmp(&pb.truncation_size))
        .then(a.trials.cmp(&b.trials))
        .then(a.max_steps().cmp(&b.max_steps()))
        .then(a.master_seed.cmp(&b.master_seed))
}

/// Parses a sweep grid: either a JSON array of configurations, or an object
/// `{"base": {...}, "axes": {"planner.gamma": [0.95, 1.0], ...}}` expanded
/// to the cartesian product of the axes. Axes are taken in alphabetical
/// order of their paths, the first varying slowest.
pub fn parse_grid(text: &str) -> Result<Vec<ExperimentConfig>> {
    let value: Value = serde_json::from_str(text)?;
    let raw = match value {
        Value::Array(items) => items,
        Value::Object(mut obj) => {
            let base = obj.remove("base").unwrap_or_else(|| Value::Object(Default::default()));
            let axes = match obj.remove("axes") {
                Some(Value::Object(axes)) => axes,
                None => Default::default(),
                Some(_) => return Err(Error::InvalidConfig("grid \"axes\" must be an object".into())),
            };
            if let Some(extra) = obj.keys().next() {
                return Err(Error::InvalidConfig(format!("unknown grid key {extra:?}")));
            }
            let mut configs = vec![base];
            for (path, values) in axes {
                let Value::Array(values) = values else {
                    return Err(Error::InvalidConfig(format!("axis {path:?} must be an array")));
                };
                if values.is_empty() {
                    return Err(Error::InvalidConfig(format!("axis {path:?} is empty")));
                }
                let mut next = Vec::with_capacity(configs.len() * values.len());
                for c in &configs {
                    for v in &values {
                        let mut c = c.clone();
                        set_path(&mut c, &path, v.clone())?;
                        next.push(c);
                    }
                }
                configs = next;
            }
            configs
        }
        _ => return Err(Error::InvalidConfig("grid must be an array or an object".into())),
    };
    if raw.is_empty() {
        return Err(Error::InvalidConfig("grid is empty".into()));
    }
    raw.into_iter()
        .map(|v| {
            let c: ExperimentConfig = serde_json::from_value(v)?;
            c.validate()?;
            Ok(c)
        })
        .collect()
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Vec<ExperimentConfig>> {
    parse_grid(&std::fs::read_to_string(path)?)
}

fn set_path(target: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = target;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        let Value::Object(obj) = cur else {
            return Err(Error::InvalidConfig(format!("axis {path:?} crosses a non-object")));
        };
        if parts.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::InvalidConfig("empty axis path".into()))
}

pub fn write_summaries<W: Write>(writer: W, rows: &[Summary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trials<W: Write>(writer: W, trials: &[Result<TrialResult>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in trials.iter().flatten() {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}
