//! POMCP-style planner.
//!
//! Each decision grows a fresh search tree over action/observation histories.
//! Every iteration samples a hidden state from the root belief, descends the
//! tree with UCB, expands one new history and estimates its value with a
//! rollout. Node beliefs are derived lazily from the parent belief with the
//! Bayes filter and cached together with their (pre-truncation) entropy.
//!
//! Intrinsic rewards are injected per [`ExplorationStrategy`]:
//!
//! | strategy | bonus                                                        |
//! |----------|--------------------------------------------------------------|
//! | dfES     | none                                                         |
//! | rrES     | `+rr_bonus` whenever the simulated drone meets the responder |
//! | chES     | `-entropy_coeff * H` on every tree and rollout step          |
//! | thES     | `-entropy_coeff * H` on every tree step                      |
//! | ehES     | `-entropy_coeff * H` on the last tree step of an iteration   |
//! | fhES     | `-entropy_coeff * H` on the first tree step of an iteration  |
//!
//! `H` is the entropy of the belief reached by the step.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{Belief, BeliefSampler, EntropyMode};
use crate::error::{Error, Result};
use crate::grid_world::{Action, Position, UNREACHABLE};
use crate::model::{Model, Observation, State, TargetSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExplorationStrategy {
    #[serde(rename = "dfES")]
    Default,
    #[serde(rename = "rrES")]
    ResponderReward,
    #[serde(rename = "chES")]
    CompleteEntropy,
    #[serde(rename = "thES")]
    TreeEntropy,
    #[serde(rename = "ehES")]
    EndTreeEntropy,
    #[serde(rename = "fhES")]
    FirstStepEntropy,
}

impl ExplorationStrategy {
    pub const ALL: [ExplorationStrategy; 6] = [
        ExplorationStrategy::Default,
        ExplorationStrategy::ResponderReward,
        ExplorationStrategy::CompleteEntropy,
        ExplorationStrategy::TreeEntropy,
        ExplorationStrategy::EndTreeEntropy,
        ExplorationStrategy::FirstStepEntropy,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExplorationStrategy::Default => "dfES",
            ExplorationStrategy::ResponderReward => "rrES",
            ExplorationStrategy::CompleteEntropy => "chES",
            ExplorationStrategy::TreeEntropy => "thES",
            ExplorationStrategy::EndTreeEntropy => "ehES",
            ExplorationStrategy::FirstStepEntropy => "fhES",
        }
    }

    pub fn uses_entropy(self) -> bool {
        !matches!(self, ExplorationStrategy::Default | ExplorationStrategy::ResponderReward)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RolloutPolicy {
    /// Uniformly random legal actions.
    #[serde(rename = "rRS")]
    Random,
    /// Head for the target of the sampled state.
    #[serde(rename = "stRS")]
    SampledTarget,
    /// Nearest unvisited target.
    #[serde(rename = "dnRS")]
    NearestTarget,
    /// Unvisited target drawn with probability proportional to `1 / (cost + 1)`.
    #[serde(rename = "snRS")]
    StochasticNearest,
    /// Unvisited target with the highest belief probability.
    #[serde(rename = "dpRS")]
    MostProbable,
    /// Unvisited target drawn from the belief's target marginal.
    #[serde(rename = "spRS")]
    StochasticProbable,
}

impl RolloutPolicy {
    pub fn label(self) -> &'static str {
        match self {
            RolloutPolicy::Random => "rRS",
            RolloutPolicy::SampledTarget => "stRS",
            RolloutPolicy::NearestTarget => "dnRS",
            RolloutPolicy::StochasticNearest => "snRS",
            RolloutPolicy::MostProbable => "dpRS",
            RolloutPolicy::StochasticProbable => "spRS",
        }
    }

    fn uses_belief(self) -> bool {
        matches!(self, RolloutPolicy::MostProbable | RolloutPolicy::StochasticProbable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RolloutAction {
    /// Precomputed shortest-path move.
    #[serde(rename = "bRA")]
    Best,
    /// Action drawn with probability proportional to `1 / (cost after move + 1)`.
    #[serde(rename = "sRA")]
    Stochastic,
}

impl RolloutAction {
    pub fn label(self) -> &'static str {
        match self {
            RolloutAction::Best => "bRA",
            RolloutAction::Stochastic => "sRA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BeliefFilter {
    /// Exact filter.
    #[serde(rename = "cF")]
    Complete,
    /// Keeps only the `truncation_size` most probable states after each update.
    #[serde(rename = "aF")]
    Truncated,
}

impl BeliefFilter {
    pub fn label(self) -> &'static str {
        match self {
            BeliefFilter::Complete => "cF",
            BeliefFilter::Truncated => "aF",
        }
    }
}

macro_rules! impl_display_label {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $t {
            type Err = Error;

            /// Parses the short label, e.g. `chES` or `aF`.
            fn from_str(s: &str) -> Result<Self> {
                serde_json::from_value(serde_json::Value::String(s.to_string()))
                    .map_err(|_| Error::InvalidConfig(format!("unknown {} {s:?}", stringify!($t))))
            }
        }
    )*};
}
impl_display_label!(ExplorationStrategy, RolloutPolicy, RolloutAction, BeliefFilter);

fn d_num_samples() -> u32 {
    1000
}
fn d_max_depth() -> u32 {
    14
}
fn d_ucb_c() -> f64 {
    1.0
}
fn d_gamma() -> f64 {
    0.95
}
fn d_exploration() -> ExplorationStrategy {
    ExplorationStrategy::Default
}
fn d_entropy_mode() -> EntropyMode {
    EntropyMode::Goal
}
fn d_entropy_coeff() -> f64 {
    0.2
}
fn d_rr_bonus() -> f64 {
    0.1
}
fn d_rollout_policy() -> RolloutPolicy {
    RolloutPolicy::NearestTarget
}
fn d_rollout_action() -> RolloutAction {
    RolloutAction::Best
}
fn d_filter() -> BeliefFilter {
    BeliefFilter::Complete
}
fn d_truncation() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    #[serde(default = "d_num_samples")]
    pub num_samples: u32,
    #[serde(default = "d_max_depth")]
    pub max_depth: u32,
    #[serde(default = "d_ucb_c")]
    pub ucb_c: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_exploration")]
    pub exploration_strategy: ExplorationStrategy,
    #[serde(default = "d_entropy_mode")]
    pub entropy_mode: EntropyMode,
    #[serde(default = "d_entropy_coeff")]
    pub entropy_coeff: f64,
    #[serde(default = "d_rr_bonus")]
    pub rr_bonus: f64,
    #[serde(default = "d_rollout_policy")]
    pub rollout_policy: RolloutPolicy,
    #[serde(default = "d_rollout_action")]
    pub rollout_action_mode: RolloutAction,
    #[serde(default = "d_filter")]
    pub belief_filter: BeliefFilter,
    #[serde(default = "d_truncation")]
    pub truncation_size: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            num_samples: d_num_samples(),
            max_depth: d_max_depth(),
            ucb_c: d_ucb_c(),
            gamma: d_gamma(),
            exploration_strategy: d_exploration(),
            entropy_mode: d_entropy_mode(),
            entropy_coeff: d_entropy_coeff(),
            rr_bonus: d_rr_bonus(),
            rollout_policy: d_rollout_policy(),
            rollout_action_mode: d_rollout_action(),
            belief_filter: d_filter(),
            truncation_size: d_truncation(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_samples == 0 {
            return bad("num_samples must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.entropy_coeff <= 0.0 {
            return bad("entropy_coeff must be positive");
        }
        if self.ucb_c < 0.0 {
            return bad("ucb_c must be non-negative");
        }
        if self.belief_filter == BeliefFilter::Truncated && self.truncation_size == 0 {
            return bad("truncation_size must be at least 1");
        }
        Ok(())
    }

    fn truncation(&self) -> Option<usize> {
        match self.belief_filter {
            BeliefFilter::Complete => None,
            BeliefFilter::Truncated => Some(self.truncation_size),
        }
    }

    fn tree_needs_beliefs(&self) -> bool {
        self.exploration_strategy.uses_entropy() || self.rollout_policy.uses_belief()
    }
}

/// Visit count and mean return of one action at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionStats {
    pub action: Action,
    pub visits: u32,
    pub value: f64,
}

/// UCB1 over `stats`, which must be in the fixed action order. Untried
/// actions come first; otherwise the highest `Q + c * sqrt(ln N / n)` wins,
/// ties going to the earlier action.
pub fn ucb_select(stats: &[ActionStats], c: f64) -> Action {
    if let Some(untried) = stats.iter().find(|s| s.visits == 0) {
        return untried.action;
    }
    let total: u32 = stats.iter().map(|s| s.visits).sum();
    let log_n = (total as f64).ln();
    let mut best = stats[0].action;
    let mut best_score = f64::NEG_INFINITY;
    for s in stats {
        let score = s.value + c * (log_n / s.visits as f64).sqrt();
        if score > best_score {
            best_score = score;
            best = s.action;
        }
    }
    best
}

/// Counters collected during one [`Planner::plan`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlanStats {
    pub iterations: u32,
    pub tree_steps: u64,
    pub rollout_steps: u64,
    pub tree_entropy_terms: u64,
    pub rollout_entropy_terms: u64,
    /// Simulations cut short by an observation the path belief ruled out.
    pub aborted: u32,
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub action: Action,
    pub root: Vec<ActionStats>,
    pub stats: PlanStats,
}

#[derive(Debug)]
enum BeliefSlot {
    Pending,
    Ready(Box<Belief>),
    Inconsistent,
}

const NO_CHILD: u32 = 0;

#[derive(Debug)]
struct Node {
    drone: Position,
    parent: u32,
    /// `action * 4 + observation flags` of the edge from the parent.
    edge: u8,
    stats: Vec<ActionStats>,
    children: [u32; 20],
    belief: BeliefSlot,
    entropy: f64,
}

impl Node {
    fn new(model: &Model, drone: Position, parent: u32, edge: u8) -> Self {
        let stats = model
            .map()
            .legal_actions(drone)
            .into_iter()
            .map(|action| ActionStats { action, visits: 0, value: 0.0 })
            .collect();
        Node { drone, parent, edge, stats, children: [NO_CHILD; 20], belief: BeliefSlot::Pending, entropy: f64::NAN }
    }
}

/// Picks the destination of a rollout among the unvisited target candidates.
/// Returns the candidate's index.
pub fn select_rollout_target<R: Rng + ?Sized>(
    policy: RolloutPolicy,
    model: &Model,
    sample: &State,
    belief: Option<&Belief>,
    visited: TargetSet,
    rng: &mut R,
) -> Result<usize> {
    let targets = model.map().target_candidates();
    let open: Vec<usize> = (0..targets.len()).filter(|&g| !visited.contains(g)).collect();
    if open.is_empty() {
        return Err(Error::EpisodeLogic("no unvisited target left for the rollout".into()));
    }
    if open.len() == 1 {
        return Ok(open[0]);
    }
    let cost = |g: usize| model.costs().cost(sample.drone, targets[g]);
    let marginal = || -> Vec<f64> { belief.map_or_else(|| vec![1.0; targets.len()], |b| b.target_marginal()) };
    Ok(match policy {
        RolloutPolicy::SampledTarget => {
            model.target_slot(sample.target).ok_or(Error::InvalidPosition(sample.target))?
        }
        RolloutPolicy::Random | RolloutPolicy::NearestTarget => {
            *open.iter().min_by_key(|&&g| cost(g)).expect("non-empty")
        }
        RolloutPolicy::StochasticNearest => {
            let w: Vec<f64> = open
                .iter()
                .map(|&g| match cost(g) {
                    UNREACHABLE => 0.0,
                    c => 1.0 / (c as f64 + 1.0),
                })
                .collect();
            open[weighted_index(&w, rng)]
        }
        RolloutPolicy::MostProbable => {
            let m = marginal();
            let mut best = open[0];
            for &g in &open[1..] {
                if m[g] > m[best] {
                    best = g;
                }
            }
            best
        }
        RolloutPolicy::StochasticProbable => {
            let m = marginal();
            let w: Vec<f64> = open.iter().map(|&g| m[g]).collect();
            open[weighted_index(&w, rng)]
        }
    })
}

/// Chooses the rollout move towards `target`.
pub fn select_rollout_action<R: Rng + ?Sized>(
    mode: RolloutAction,
    model: &Model,
    drone: Position,
    target: usize,
    rng: &mut R,
) -> Result<Action> {
    let goal = model.map().target_candidates()[target];
    match mode {
        RolloutAction::Best => model
            .costs()
            .best_action(drone, target)
            .ok_or_else(|| Error::EpisodeLogic(format!("target {goal} unreachable from {drone}"))),
        RolloutAction::Stochastic => {
            let weights = stochastic_action_weights(model, drone, goal);
            if weights.iter().all(|w| w.1 == 0.0) {
                return Err(Error::EpisodeLogic(format!("target {goal} unreachable from {drone}")));
            }
            let w: Vec<f64> = weights.iter().map(|x| x.1).collect();
            Ok(weights[weighted_index(&w, rng)].0)
        }
    }
}

/// Unnormalized `1 / (cost after move + 1)` weights over legal actions.
pub fn stochastic_action_weights(model: &Model, drone: Position, goal: Position) -> Vec<(Action, f64)> {
    model
        .map()
        .legal_actions(drone)
        .into_iter()
        .map(|a| {
            let c = model.costs().cost(model.map().apply(drone, a), goal);
            (a, if c == UNREACHABLE { 0.0 } else { 1.0 / (c as f64 + 1.0) })
        })
        .collect()
}

/// Index drawn with probability proportional to `weights`; uniform if they
/// are all zero.
fn weighted_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.gen_range(0..weights.len());
    }
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub struct Planner<'m> {
    model: &'m Model,
    config: PlannerConfig,
    nodes: Vec<Node>,
    stats: PlanStats,
}

impl<'m> Planner<'m> {
    pub fn new(model: &'m Model, config: PlannerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { model, config, nodes: Vec::new(), stats: PlanStats::default() })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    /// Runs `num_samples` simulations from `root` and returns the action with
    /// the highest value estimate.
    pub fn plan<R: Rng + ?Sized>(&mut self, root: &Belief, visited: TargetSet, rng: &mut R) -> Result<Action> {
        self.plan_detailed(root, visited, rng).map(|o| o.action)
    }

    pub fn plan_detailed<R: Rng + ?Sized>(
        &mut self,
        root: &Belief,
        visited: TargetSet,
        rng: &mut R,
    ) -> Result<PlanOutcome> {
        let sampler = BeliefSampler::new(root);
        if sampler.states().iter().all(|s| self.model.is_terminal(s)) {
            return Err(Error::EpisodeLogic("every state in the root belief is terminal".into()));
        }
        self.nodes.clear();
        self.stats = PlanStats::default();
        let mut root_node = Node::new(self.model, root.drone(), 0, 0);
        root_node.entropy = root.entropy(self.config.entropy_mode);
        root_node.belief = BeliefSlot::Ready(Box::new(root.clone()));
        self.nodes.push(root_node);

        for _ in 0..self.config.num_samples {
            let state = sampler.sample(rng);
            self.stats.iterations += 1;
            if self.model.is_terminal(&state) {
                continue;
            }
            self.simulate(state, 0, 0, visited, rng)?;
        }
        self.stats.nodes = self.nodes.len();

        let root_stats = self.nodes[0].stats.clone();
        let mut best: Option<&ActionStats> = None;
        for s in root_stats.iter().filter(|s| s.visits > 0) {
            if best.is_none_or(|b| s.value > b.value) {
                best = Some(s);
            }
        }
        let action = best.map_or(root_stats[0].action, |b| b.action);
        Ok(PlanOutcome { action, root: root_stats, stats: self.stats })
    }

    /// Makes sure `id` has a belief, deriving it from its ancestors.
    fn ensure_belief(&mut self, id: usize) {
        let mut chain = Vec::new();
        let mut cur = id;
        while matches!(self.nodes[cur].belief, BeliefSlot::Pending) {
            chain.push(cur);
            cur = self.nodes[cur].parent as usize;
        }
        for &n in chain.iter().rev() {
            let parent = self.nodes[n].parent as usize;
            let (slot, entropy) = match &self.nodes[parent].belief {
                BeliefSlot::Ready(b) => {
                    let edge = self.nodes[n].edge as usize;
                    let obs = Observation {
                        drone: self.nodes[n].drone,
                        responder_seen: edge & 1 == 1,
                        target_seen: edge & 2 == 2,
                    };
                    self.advance(b, Action::from_index(edge / 4), &obs)
                }
                _ => (BeliefSlot::Inconsistent, f64::NAN),
            };
            self.nodes[n].belief = slot;
            self.nodes[n].entropy = entropy;
        }
    }

    /// Filter step; the entropy is taken before truncation.
    fn advance(&self, belief: &Belief, action: Action, obs: &Observation) -> (BeliefSlot, f64) {
        match belief.filter(self.model, action, obs) {
            Ok(b) => {
                let h = b.entropy(self.config.entropy_mode);
                let b = match self.config.truncation() {
                    Some(n) => b.truncate(n),
                    None => b,
                };
                (BeliefSlot::Ready(Box::new(b)), h)
            }
            Err(_) => (BeliefSlot::Inconsistent, f64::NAN),
        }
    }

    fn node_belief(&self, id: usize) -> Option<&Belief> {
        match &self.nodes[id].belief {
            BeliefSlot::Ready(b) => Some(b),
            _ => None,
        }
    }

    /// One tree step from `node` at `depth`, recursing while the history
    /// stays inside the tree. Returns the discounted return from `node`.
    fn simulate<R: Rng + ?Sized>(
        &mut self,
        state: State,
        node: usize,
        depth: u32,
        visited: TargetSet,
        rng: &mut R,
    ) -> Result<f64> {
        if depth >= self.config.max_depth {
            return Ok(0.0);
        }
        let cfg = &self.config;
        let (gamma, max_depth, strategy) = (cfg.gamma, cfg.max_depth, cfg.exploration_strategy);
        let slot = {
            let action = ucb_select(&self.nodes[node].stats, cfg.ucb_c);
            self.nodes[node].stats.iter().position(|s| s.action == action).expect("selected action is legal")
        };
        let action = self.nodes[node].stats[slot].action;
        let (next, obs, extrinsic) = self.model.step(state, action, rng);
        self.stats.tree_steps += 1;

        let mut visited_next = visited;
        if let Some(g) = self.model.target_slot(next.drone) {
            if !obs.target_seen {
                visited_next.insert(g);
            }
        }
        let edge = action.index() * 4 + obs.flags();
        let existing = self.nodes[node].children[edge];
        let child = if existing == NO_CHILD {
            let id = self.nodes.len();
            let drone = next.drone;
            self.nodes.push(Node::new(self.model, drone, node as u32, edge as u8));
            self.nodes[node].children[edge] = id as u32;
            id
        } else {
            existing as usize
        };
        let terminal = self.model.is_terminal(&next);
        let last_tree_step = terminal || depth + 1 >= max_depth || existing == NO_CHILD;

        let mut reward = extrinsic;
        if strategy == ExplorationStrategy::ResponderReward && obs.responder_seen {
            reward += self.config.rr_bonus;
        }
        let entropy_here = match strategy {
            ExplorationStrategy::CompleteEntropy | ExplorationStrategy::TreeEntropy => true,
            ExplorationStrategy::EndTreeEntropy => last_tree_step,
            ExplorationStrategy::FirstStepEntropy => depth == 0,
            _ => false,
        };
        let needs_belief = entropy_here || (existing == NO_CHILD && !terminal && self.config.tree_needs_beliefs());
        let mut consistent = true;
        if needs_belief {
            self.ensure_belief(child);
            consistent = self.node_belief(child).is_some();
        }

        let total = if !consistent {
            self.stats.aborted += 1;
            reward
        } else {
            if entropy_here {
                reward -= self.config.entropy_coeff * self.nodes[child].entropy;
                self.stats.tree_entropy_terms += 1;
            }
            let future = if terminal || depth + 1 >= max_depth {
                0.0
            } else if existing == NO_CHILD {
                self.rollout(next, child, depth + 1, visited_next, rng)?
            } else {
                self.simulate(next, child, depth + 1, visited_next, rng)?
            };
            reward + gamma * future
        };

        let s = &mut self.nodes[node].stats[slot];
        s.visits += 1;
        s.value += (total - s.value) / s.visits as f64;
        Ok(total)
    }

    /// Default-policy simulation from a freshly expanded node up to the
    /// depth budget.
    fn rollout<R: Rng + ?Sized>(
        &mut self,
        mut state: State,
        leaf: usize,
        mut depth: u32,
        mut visited: TargetSet,
        rng: &mut R,
    ) -> Result<f64> {
        let cfg = self.config.clone();
        let model = self.model;
        let track_entropy = cfg.exploration_strategy == ExplorationStrategy::CompleteEntropy;
        let mut belief: Option<Belief> = if track_entropy || cfg.rollout_policy.uses_belief() {
            self.node_belief(leaf).cloned().or_else(|| self.node_belief(0).cloned())
        } else {
            None
        };
        let mut target: Option<usize> = None;
        let mut total = 0.0;
        let mut discount = 1.0;
        while depth < cfg.max_depth {
            let action = if cfg.rollout_policy == RolloutPolicy::Random {
                let legal = model.map().legal_actions(state.drone);
                legal[rng.gen_range(0..legal.len())]
            } else {
                let goal = match target {
                    Some(g) if model.map().target_candidates()[g] != state.drone => g,
                    _ => {
                        if let Some(g) = target {
                            visited.insert(g);
                        }
                        let chosen =
                            select_rollout_target(cfg.rollout_policy, model, &state, belief.as_ref(), visited, rng);
                        match chosen {
                            Ok(g) => g,
                            Err(_) => break,
                        }
                    }
                };
                target = Some(goal);
                select_rollout_action(cfg.rollout_action_mode, model, state.drone, goal, rng)?
            };
            let (next, obs, extrinsic) = model.step(state, action, rng);
            self.stats.rollout_steps += 1;
            if let Some(g) = model.target_slot(next.drone) {
                if !obs.target_seen {
                    visited.insert(g);
                }
            }
            let mut reward = extrinsic;
            if cfg.exploration_strategy == ExplorationStrategy::ResponderReward && obs.responder_seen {
                reward += cfg.rr_bonus;
            }
            if track_entropy {
                let current = belief.take().expect("rollout belief present for chES");
                match self.advance(&current, action, &obs) {
                    (BeliefSlot::Ready(b), h) => {
                        reward -= cfg.entropy_coeff * h;
                        self.stats.rollout_entropy_terms += 1;
                        belief = Some(*b);
                    }
                    _ => {
                        self.stats.aborted += 1;
                        total += discount * reward;
                        break;
                    }
                }
            }
            total += discount * reward;
            discount *= cfg.gamma;
            depth += 1;
            state = next;
            if model.is_terminal(&state) {
                break;
            }
        }
        Ok(total)
    }
}
