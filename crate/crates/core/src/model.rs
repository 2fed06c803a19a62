//! The search-and-rescue POMDP as a generative model.
//!
//! The hidden state is the drone, responder and target positions. The drone
//! moves deterministically; the responder stays still with probability
//! `p_still`, otherwise takes the first step of a shortest path to the target
//! with probability `toward_goal_factor` or a uniformly random step. The drone
//! always knows its own cell and sees the responder and the target only when
//! it shares their cell.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::grid_world::{Action, CostTable, GridMap, Position, MAX_TARGETS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub drone: Position,
    pub responder: Position,
    pub target: Position,
}

impl State {
    pub fn new(drone: Position, responder: Position, target: Position) -> Self {
        Self { drone, responder, target }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "drone {} responder {} target {}", self.drone, self.responder, self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    pub drone: Position,
    pub responder_seen: bool,
    pub target_seen: bool,
}

impl Observation {
    /// Two-bit code of the flags; the drone cell is implied by the history.
    pub fn flags(&self) -> usize {
        usize::from(self.responder_seen) | (usize::from(self.target_seen) << 1)
    }
}

fn default_p_still() -> f64 {
    0.5
}
fn default_toward_goal() -> f64 {
    0.95
}
fn default_goal_reward() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default = "default_p_still")]
    pub p_still: f64,
    #[serde(default = "default_toward_goal")]
    pub toward_goal_factor: f64,
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    /// Chebyshev radius around the target that ends the episode.
    #[serde(default)]
    pub terminal_radius: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            p_still: default_p_still(),
            toward_goal_factor: default_toward_goal(),
            goal_reward: default_goal_reward(),
            terminal_radius: 0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_still) {
            return Err(Error::InvalidConfig(format!("p_still {} outside [0, 1]", self.p_still)));
        }
        if !(0.0..=1.0).contains(&self.toward_goal_factor) {
            return Err(Error::InvalidConfig(format!("toward_goal_factor {} outside [0, 1]", self.toward_goal_factor)));
        }
        Ok(())
    }
}

/// Set of target candidates (by index) the drone has already inspected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TargetSet(u128);

impl TargetSet {
    pub fn contains(self, index: usize) -> bool {
        self.0 >> index & 1 == 1
    }

    pub fn insert(&mut self, index: usize) {
        self.0 |= 1 << index;
    }

    pub fn with(mut self, index: usize) -> Self {
        self.insert(index);
        self
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_TARGETS).filter(move |&i| self.contains(i))
    }
}

/// Map, cost table, parameters and the precomputed responder transition
/// distributions. Immutable; share it behind a reference or `Arc`.
#[derive(Debug, Clone)]
pub struct Model {
    map: Arc<GridMap>,
    costs: Arc<CostTable>,
    params: ModelParams,
    /// Cell index -> target candidate index + 1 (0 when not a candidate).
    target_slot: Vec<u8>,
    /// CSR offsets into `outcomes`, indexed by `cell * n_targets + target`.
    offsets: Vec<u32>,
    /// Responder successor cells with probabilities, sorted by cell.
    outcomes: Vec<(u32, f64)>,
}

impl Model {
    pub fn new(map: GridMap, params: ModelParams) -> Result<Self> {
        let costs = CostTable::compute(&map);
        Self::with_costs(Arc::new(map), Arc::new(costs), params)
    }

    pub fn with_costs(map: Arc<GridMap>, costs: Arc<CostTable>, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let mut target_slot = vec![0u8; map.cell_count()];
        for (i, &t) in map.target_candidates().iter().enumerate() {
            target_slot[map.index_of(t)] = (i + 1) as u8;
        }
        let mut model = Model { map, costs, params, target_slot, offsets: Vec::new(), outcomes: Vec::new() };
        model.build_outcomes()?;
        Ok(model)
    }

    fn build_outcomes(&mut self) -> Result<()> {
        let n_targets = self.map.target_candidates().len();
        let cells = self.map.cell_count();
        let mut offsets = Vec::with_capacity(cells * n_targets + 1);
        let mut outcomes = Vec::new();
        offsets.push(0u32);
        for cell in 0..cells {
            let r = self.map.position_of(cell);
            for g in 0..n_targets {
                if self.map.is_passable(r) {
                    let mut dist = self.responder_branches(r, g)?;
                    dist.sort_by_key(|&(p, _)| self.map.index_of(p));
                    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(dist.len());
                    for (p, q) in dist {
                        let c = self.map.index_of(p) as u32;
                        match merged.last_mut() {
                            Some(last) if last.0 == c => last.1 += q,
                            _ => merged.push((c, q)),
                        }
                    }
                    outcomes.extend(merged.into_iter().filter(|&(_, q)| q > 0.0));
                }
                offsets.push(outcomes.len() as u32);
            }
        }
        self.offsets = offsets;
        self.outcomes = outcomes;
        Ok(())
    }

    /// The unmerged three-branch mixture for a responder at `r` heading to
    /// target candidate `g`: stay, shortest-path step, random neighbour.
    fn responder_branches(&self, r: Position, g: usize) -> Result<Vec<(Position, f64)>> {
        let target = self.map.target_candidates()[g];
        if r == target {
            return Ok(vec![(r, 1.0)]);
        }
        let p_still = self.params.p_still;
        let moving = 1.0 - p_still;
        let toward = self.params.toward_goal_factor * moving;
        let random = moving - toward;
        let best = self
            .costs
            .best_action(r, g)
            .ok_or_else(|| Error::InvalidMap(format!("target {target} unreachable from {r}")))?;
        let mut out = vec![(r, p_still), (self.map.apply(r, best), toward)];
        let neighbors: Vec<Position> = self.map.neighbors_unchecked(r).collect();
        if neighbors.is_empty() {
            out.push((r, random));
        } else {
            let share = random / neighbors.len() as f64;
            out.extend(neighbors.into_iter().map(|n| (n, share)));
        }
        Ok(out)
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn map_arc(&self) -> &Arc<GridMap> {
        &self.map
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n_targets(&self) -> usize {
        self.map.target_candidates().len()
    }

    /// Index of the target candidate at `p`, if any.
    #[inline]
    pub fn target_slot(&self, p: Position) -> Option<usize> {
        if !self.map.in_bounds(p) {
            return None;
        }
        match self.target_slot[self.map.index_of(p)] {
            0 => None,
            s => Some(s as usize - 1),
        }
    }

    #[inline]
    pub(crate) fn outcomes_by_cell(&self, cell: usize, target: usize) -> &[(u32, f64)] {
        let k = cell * self.n_targets() + target;
        &self.outcomes[self.offsets[k] as usize..self.offsets[k + 1] as usize]
    }

    /// Distribution of the responder's next cell given its cell and the
    /// target candidate it walks to.
    pub fn responder_distribution(&self, responder: Position, target: usize) -> Vec<(Position, f64)> {
        self.outcomes_by_cell(self.map.index_of(responder), target)
            .iter()
            .map(|&(c, q)| (self.map.position_of(c as usize), q))
            .collect()
    }

    /// Samples the successor state. Blocked drone moves leave the drone in place.
    pub fn transition<R: Rng + ?Sized>(&self, state: State, action: Action, rng: &mut R) -> State {
        let drone = self.map.apply(state.drone, action);
        let g = self.target_slot(state.target).expect("state target must be a target candidate");
        let responder = self.sample_responder(state.responder, g, rng);
        State { drone, responder, target: state.target }
    }

    #[inline]
    pub(crate) fn sample_responder<R: Rng + ?Sized>(
        &self,
        responder: Position,
        target: usize,
        rng: &mut R,
    ) -> Position {
        let outcomes = self.outcomes_by_cell(self.map.index_of(responder), target);
        if outcomes.len() == 1 {
            return self.map.position_of(outcomes[0].0 as usize);
        }
        let mut u: f64 = rng.gen();
        for &(c, q) in outcomes {
            if u < q {
                return self.map.position_of(c as usize);
            }
            u -= q;
        }
        self.map.position_of(outcomes[outcomes.len() - 1].0 as usize)
    }

    pub fn observe(&self, state: &State) -> Observation {
        Observation {
            drone: state.drone,
            responder_seen: state.responder == state.drone,
            target_seen: state.target == state.drone,
        }
    }

    pub fn is_terminal(&self, state: &State) -> bool {
        state.drone.chebyshev(state.target) <= self.params.terminal_radius
    }

    /// Extrinsic reward: the goal reward on the transition that first brings
    /// the drone within the terminal radius, zero otherwise.
    pub fn reward(&self, prev: &State, _action: Action, next: &State) -> f64 {
        if self.is_terminal(next) && !self.is_terminal(prev) {
            self.params.goal_reward
        } else {
            0.0
        }
    }

    /// One generative-model call: successor, observation and reward.
    pub fn step<R: Rng + ?Sized>(&self, state: State, action: Action, rng: &mut R) -> (State, Observation, f64) {
        let next = self.transition(state, action, rng);
        let obs = self.observe(&next);
        let r = self.reward(&state, action, &next);
        (next, obs, r)
    }

    /// Uniform belief over every (responder start, target) pair with the
    /// drone at its start cell.
    pub fn initial_belief(&self) -> Belief {
        Belief::initial(self)
    }
}
