//! Exact discrete Bayes filtering over hidden states.
//!
//! After every update all support states share the drone cell, so a belief
//! stores the drone once and a sparse, key-sorted list of
//! `(responder cell, target index)` weights. The list order doubles as the
//! fixed total order used for tie-breaking in [`Belief::truncate`].
//!
//! The two regeneration procedures rebuild a belief when an observation has
//! zero probability under the current one, which happens once truncation has
//! discarded the true state.

use std::cell::RefCell;
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_world::{Position, UNREACHABLE};
use crate::model::{Model, Observation, State, TargetSet};

/// Which distribution the entropy bonus is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntropyMode {
    /// Marginal over the target location.
    #[serde(rename = "gH")]
    Goal,
    /// Full joint belief.
    #[serde(rename = "bH")]
    Full,
}

impl EntropyMode {
    pub fn label(self) -> &'static str {
        match self {
            EntropyMode::Goal => "gH",
            EntropyMode::Full => "bH",
        }
    }
}

/// An observation with zero probability under the belief, tagged with the
/// regeneration procedure that should handle it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InconsistentObservation {
    /// The target was not where the belief had put it (or the responder was
    /// not where it was expected).
    EmptyTarget,
    /// The responder showed up in a cell the belief ruled out.
    UnexpectedResponder,
}

impl fmt::Display for InconsistentObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InconsistentObservation::EmptyTarget => f.write_str("observation contradicts belief: target missing"),
            InconsistentObservation::UnexpectedResponder => {
                f.write_str("observation contradicts belief: responder in unexpected cell")
            }
        }
    }
}

impl std::error::Error for InconsistentObservation {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sighting {
    pub position: Position,
    pub time: u32,
}

/// Bookkeeping for regeneration: elapsed steps, the last responder sighting
/// and the target marginal recorded at that sighting (the prior if the
/// responder was never seen).
#[derive(Debug, Clone, PartialEq)]
pub struct SightingMeta {
    pub time: u32,
    pub last_responder: Option<Sighting>,
    pub goal_snapshot: Arc<[f64]>,
}

#[derive(Debug, Clone)]
pub struct Belief {
    drone: Position,
    width: i32,
    targets: Arc<[Position]>,
    entries: Vec<(u32, f64)>,
    meta: SightingMeta,
}

impl PartialEq for Belief {
    fn eq(&self, other: &Self) -> bool {
        self.drone == other.drone && self.targets == other.targets && self.entries == other.entries
    }
}

impl Belief {
    /// Uniform over responder starts x target candidates, drone at its start.
    pub fn initial(model: &Model) -> Belief {
        let map = model.map();
        let n_t = model.n_targets();
        let n = map.responder_start_candidates().len() * n_t;
        let w = 1.0 / n as f64;
        let mut entries: Vec<(u32, f64)> = map
            .responder_start_candidates()
            .iter()
            .flat_map(|&r| (0..n_t).map(move |t| (map.index_of(r) * n_t + t, w)))
            .map(|(k, w)| (k as u32, w))
            .collect();
        entries.sort_unstable_by_key(|e| e.0);
        let prior: Arc<[f64]> = vec![1.0 / n_t as f64; n_t].into();
        Belief {
            drone: map.drone_start(),
            width: map.width(),
            targets: map.target_candidates().into(),
            entries,
            meta: SightingMeta { time: 0, last_responder: None, goal_snapshot: prior },
        }
    }

    /// Builds a normalized belief from weighted states. All states must share
    /// the drone cell and carry a target candidate.
    pub fn from_states(
        model: &Model,
        states: impl IntoIterator<Item = (State, f64)>,
        meta: SightingMeta,
    ) -> Result<Belief> {
        let map = model.map();
        let n_t = model.n_targets();
        let mut drone = None;
        let mut raw = Vec::new();
        for (s, w) in states {
            if *drone.get_or_insert(s.drone) != s.drone {
                return Err(Error::InvalidConfig("belief states disagree on the drone cell".into()));
            }
            if w < 0.0 || !w.is_finite() {
                return Err(Error::InvalidConfig(format!("invalid weight {w}")));
            }
            if !map.is_passable(s.responder) {
                return Err(Error::InvalidPosition(s.responder));
            }
            let t = model.target_slot(s.target).ok_or(Error::InvalidPosition(s.target))?;
            raw.push(((map.index_of(s.responder) * n_t + t) as u32, w));
        }
        let drone = drone.ok_or_else(|| Error::InvalidConfig("empty belief".into()))?;
        let entries = merge_sorted(raw);
        Belief::normalized(model, drone, entries, meta)
    }

    fn normalized(model: &Model, drone: Position, mut entries: Vec<(u32, f64)>, meta: SightingMeta) -> Result<Belief> {
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if total <= 0.0 {
            return Err(Error::EpisodeLogic("belief has no probability mass".into()));
        }
        entries.retain(|e| e.1 > 0.0);
        for e in &mut entries {
            e.1 /= total;
        }
        Ok(Belief { drone, width: model.map().width(), targets: model.map().target_candidates().into(), entries, meta })
    }

    pub fn drone(&self) -> Position {
        self.drone
    }

    pub fn meta(&self) -> &SightingMeta {
        &self.meta
    }

    pub fn time(&self) -> u32 {
        self.meta.time
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    #[inline]
    fn decode(&self, key: u32) -> (Position, usize) {
        let n_t = self.targets.len() as u32;
        let cell = (key / n_t) as i32;
        (Position::new(cell % self.width, cell / self.width), (key % n_t) as usize)
    }

    fn state_of(&self, key: u32) -> State {
        let (responder, t) = self.decode(key);
        State::new(self.drone, responder, self.targets[t])
    }

    /// Support states with their probabilities, in the fixed state order.
    pub fn iter(&self) -> impl Iterator<Item = (State, f64)> + '_ {
        self.entries.iter().map(|&(k, p)| (self.state_of(k), p))
    }

    pub fn probability(&self, state: &State) -> f64 {
        self.iter().find(|(s, _)| s == state).map_or(0.0, |(_, p)| p)
    }

    /// Probability of each target candidate, indexed like the map's list.
    pub fn target_marginal(&self) -> Vec<f64> {
        let n_t = self.targets.len();
        let mut m = vec![0.0; n_t];
        for &(k, p) in &self.entries {
            m[k as usize % n_t] += p;
        }
        m
    }

    pub fn responder_marginal(&self) -> Vec<(Position, f64)> {
        let n_t = self.targets.len() as u32;
        let mut out: Vec<(Position, f64)> = Vec::new();
        for &(k, p) in &self.entries {
            let (r, _) = self.decode(k - k % n_t);
            match out.last_mut() {
                Some(last) if last.0 == r => last.1 += p,
                _ => out.push((r, p)),
            }
        }
        out
    }

    /// Most probable responder cell; ties go to the first cell in row-major order.
    pub fn likely_responder(&self) -> Option<Position> {
        self.responder_marginal()
            .into_iter()
            .fold(None, |best: Option<(Position, f64)>, (r, p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((r, p)),
            })
            .map(|(r, _)| r)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let mut u: f64 = rng.gen::<f64>() * self.total_mass();
        for &(k, p) in &self.entries {
            if u < p {
                return self.state_of(k);
            }
            u -= p;
        }
        self.state_of(self.entries[self.entries.len() - 1].0)
    }

    /// Pushes every support state through the transition model.
    pub fn predict(&self, model: &Model, action: crate::grid_world::Action) -> Belief {
        let (mut entries, total, _) = self.propagate(model, |_, _| true);
        for e in &mut entries {
            e.1 /= total;
        }
        Belief {
            drone: model.map().apply(self.drone, action),
            width: self.width,
            targets: Arc::clone(&self.targets),
            entries,
            meta: SightingMeta { time: self.meta.time + 1, ..self.meta.clone() },
        }
    }

    /// Unnormalized one-step propagation keeping only the successor
    /// `(responder cell, target)` pairs accepted by `keep`. Also reports whether any successor had the responder in
    /// `watch_cell` (always false for `u32::MAX`).
    fn propagate(&self, model: &Model, keep: impl Fn(u32, u32) -> bool) -> (Vec<(u32, f64)>, f64, bool) {
        self.propagate_watching(model, u32::MAX, keep)
    }

    fn propagate_watching(
        &self,
        model: &Model,
        watch_cell: u32,
        keep: impl Fn(u32, u32) -> bool,
    ) -> (Vec<(u32, f64)>, f64, bool) {
        let n_t = self.targets.len() as u32;
        let key_space = model.map().cell_count() * n_t as usize;
        SCRATCH.with(|scratch| {
            let mut dense = scratch.borrow_mut();
            if dense.len() < key_space {
                dense.resize(key_space, 0.0);
            }
            let (mut lo, mut hi) = (u32::MAX, 0u32);
            let mut watched = false;
            for &(k, p) in &self.entries {
                let cell = k / n_t;
                let t = k - cell * n_t;
                for &(c, q) in model.outcomes_by_cell(cell as usize, t as usize) {
                    watched |= c == watch_cell;
                    if keep(c, t) {
                        let key = c * n_t + t;
                        dense[key as usize] += p * q;
                        lo = lo.min(key);
                        hi = hi.max(key);
                    }
                }
            }
            let mut out = Vec::with_capacity(self.entries.len() * 2);
            let mut total = 0.0;
            if lo <= hi {
                for key in lo..=hi {
                    let v = std::mem::take(&mut dense[key as usize]);
                    if v > 0.0 {
                        out.push((key, v));
                        total += v;
                    }
                }
            }
            (out, total, watched)
        })
    }

    /// `predict` followed by `update` in one pass.
    pub fn filter(
        &self,
        model: &Model,
        action: crate::grid_world::Action,
        obs: &Observation,
    ) -> Result<Belief, InconsistentObservation> {
        let map = model.map();
        if obs.drone != map.apply(self.drone, action) {
            return Err(InconsistentObservation::EmptyTarget);
        }
        let d = map.index_of(obs.drone) as u32;
        let target_here = model.target_slot(obs.drone).map(|t| t as u32);
        let consistent = |c: u32, t: u32| (c == d) == obs.responder_seen && (Some(t) == target_here) == obs.target_seen;
        let (mut entries, total, responder_possible) = self.propagate_watching(model, d, consistent);
        if total <= 0.0 {
            return Err(if obs.responder_seen && !responder_possible {
                InconsistentObservation::UnexpectedResponder
            } else {
                InconsistentObservation::EmptyTarget
            });
        }
        for e in &mut entries {
            e.1 /= total;
        }
        let time = self.meta.time + 1;
        let mut out = Belief {
            drone: obs.drone,
            width: self.width,
            targets: Arc::clone(&self.targets),
            entries,
            meta: SightingMeta { time, ..self.meta.clone() },
        };
        if obs.responder_seen {
            out.meta.last_responder = Some(Sighting { position: obs.drone, time });
            out.meta.goal_snapshot = out.target_marginal().into();
        }
        Ok(out)
    }

    /// Conditions on a deterministic observation.
    pub fn update(&self, model: &Model, obs: &Observation) -> Result<Belief, InconsistentObservation> {
        let map = model.map();
        if obs.drone != self.drone {
            return Err(InconsistentObservation::EmptyTarget);
        }
        let n_t = self.targets.len() as u32;
        let d = map.index_of(obs.drone) as u32;
        let target_here = model.target_slot(obs.drone).map(|t| t as u32);
        let mut kept = Vec::with_capacity(self.entries.len());
        let mut responder_possible = false;
        let mut total = 0.0;
        for &(k, p) in &self.entries {
            let responder_here = k / n_t == d;
            responder_possible |= responder_here;
            let target_at_drone = Some(k % n_t) == target_here;
            if responder_here == obs.responder_seen && target_at_drone == obs.target_seen {
                kept.push((k, p));
                total += p;
            }
        }
        if total <= 0.0 {
            return Err(if obs.responder_seen && !responder_possible {
                InconsistentObservation::UnexpectedResponder
            } else {
                InconsistentObservation::EmptyTarget
            });
        }
        for e in &mut kept {
            e.1 /= total;
        }
        let mut out = Belief {
            drone: self.drone,
            width: self.width,
            targets: Arc::clone(&self.targets),
            entries: kept,
            meta: self.meta.clone(),
        };
        if obs.responder_seen {
            out.meta.last_responder = Some(Sighting { position: obs.drone, time: self.meta.time });
            out.meta.goal_snapshot = out.target_marginal().into();
        }
        Ok(out)
    }

    /// Keeps the `n` most probable states and renormalizes. Equal
    /// probabilities are broken by the fixed state order.
    pub fn truncate(&self, n: usize) -> Belief {
        if self.entries.len() <= n {
            return self.clone();
        }
        let mut ranked = self.entries.clone();
        let by_rank = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if n > 0 {
            ranked.select_nth_unstable_by(n - 1, by_rank);
        }
        ranked.truncate(n);
        ranked.sort_unstable_by_key(|e| e.0);
        let total: f64 = ranked.iter().map(|e| e.1).sum();
        for e in &mut ranked {
            e.1 /= total;
        }
        Belief { entries: ranked, ..self.clone_shell() }
    }

    fn clone_shell(&self) -> Belief {
        Belief {
            drone: self.drone,
            width: self.width,
            targets: Arc::clone(&self.targets),
            entries: Vec::new(),
            meta: self.meta.clone(),
        }
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self, mode: EntropyMode) -> f64 {
        match mode {
            EntropyMode::Full => shannon(self.entries.iter().map(|e| e.1)),
            EntropyMode::Goal => shannon(self.target_marginal().into_iter()),
        }
    }

    /// CSV dump, one `x_d,y_d,x_r,y_r,x_t,y_t,prob` line per support state.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_d,y_d,x_r,y_r,x_t,y_t,prob\n");
        for (s, p) in self.iter() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.drone.x, s.drone.y, s.responder.x, s.responder.y, s.target.x, s.target.y, p
            );
        }
        out
    }
}

fn shannon(probs: impl Iterator<Item = f64>) -> f64 {
    let h: f64 = probs.filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum();
    h.max(0.0)
}

thread_local! {
    /// Dense accumulator indexed by state key, all zeros between uses.
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

fn merge_sorted(mut raw: Vec<(u32, f64)>) -> Vec<(u32, f64)> {
    raw.sort_unstable_by_key(|e| e.0);
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(raw.len());
    for (k, p) in raw {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += p,
            _ => out.push((k, p)),
        }
    }
    out
}

/// Cumulative table for repeated sampling from a fixed belief.
#[derive(Debug, Clone)]
pub struct BeliefSampler {
    states: Vec<State>,
    cumulative: Vec<f64>,
}

impl BeliefSampler {
    pub fn new(belief: &Belief) -> Self {
        let mut acc = 0.0;
        let mut states = Vec::with_capacity(belief.len());
        let mut cumulative = Vec::with_capacity(belief.len());
        for (s, p) in belief.iter() {
            acc += p;
            states.push(s);
            cumulative.push(acc);
        }
        Self { states, cumulative }
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let total = *self.cumulative.last().expect("sampler over empty belief");
        let u = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.states[i.min(self.states.len() - 1)]
    }
}

fn non_visited_targets(model: &Model, visited: TargetSet) -> Result<Vec<usize>> {
    let remaining: Vec<usize> = (0..model.n_targets()).filter(|&g| !visited.contains(g)).collect();
    if remaining.is_empty() {
        return Err(Error::EpisodeLogic("every target candidate has been visited".into()));
    }
    Ok(remaining)
}

/// Snapshot weights restricted to `targets`; uniform when the snapshot puts
/// no mass on any of them.
fn snapshot_weights(meta: &SightingMeta, targets: &[usize]) -> Vec<f64> {
    let w: Vec<f64> = targets.iter().map(|&g| meta.goal_snapshot.get(g).copied().unwrap_or(0.0)).collect();
    if w.iter().sum::<f64>() > 0.0 {
        w
    } else {
        vec![1.0; targets.len()]
    }
}

/// Exact distribution of the responder after `steps` transitions from
/// `origin` while heading to target `g`, as `(cell, prob)` sorted by cell.
pub(crate) fn propagate_responder(model: &Model, origin: Position, g: usize, steps: u32) -> Vec<(u32, f64)> {
    let mut dist = vec![(model.map().index_of(origin) as u32, 1.0)];
    for _ in 0..steps {
        let mut next = Vec::with_capacity(dist.len() * 4);
        for &(c, p) in &dist {
            for &(c2, q) in model.outcomes_by_cell(c as usize, g) {
                next.push((c2, p * q));
            }
        }
        dist = merge_sorted(next);
    }
    dist
}

/// Rebuilds the belief after the drone reached the only target it believed
/// in and found nothing.
///
/// For every target not yet visited the responder's walk towards it is
/// propagated from its last sighting (or from every start candidate, from
/// time zero, if it was never seen) up to the current time. Each resulting
/// state gets the snapshot probability of its target; the set is then
/// normalized. The walk is propagated exactly rather than sampled.
pub fn regenerate_empty_target(
    model: &Model,
    meta: &SightingMeta,
    drone: Position,
    visited: TargetSet,
) -> Result<Belief> {
    let targets = non_visited_targets(model, visited)?;
    let weights = snapshot_weights(meta, &targets);
    let origins: Vec<(Position, u32)> = match meta.last_responder {
        Some(s) => vec![(s.position, meta.time.saturating_sub(s.time))],
        None => model.map().responder_start_candidates().iter().map(|&r| (r, meta.time)).collect(),
    };
    let origin_share = 1.0 / origins.len() as f64;
    let n_t = model.n_targets() as u32;
    let mut raw = Vec::new();
    for (&g, &w) in targets.iter().zip(&weights) {
        for &(origin, steps) in &origins {
            for (c, p) in propagate_responder(model, origin, g, steps) {
                raw.push((c * n_t + g as u32, w * origin_share * p));
            }
        }
    }
    Belief::normalized(model, drone, merge_sorted(raw), meta.clone())
}

/// Rebuilds the belief after the responder was seen at `l_star`, a cell the
/// belief ruled out. One state per non-visited target `g`, weighted by the
/// snapshot probability of `g` times the path efficiency
/// `c(l_old, g) / (c(l_old, l_star) + c(l_star, g))`.
pub fn regenerate_unexpected_responder(
    model: &Model,
    meta: &SightingMeta,
    l_star: Position,
    l_old: Position,
    visited: TargetSet,
) -> Result<Belief> {
    let targets = non_visited_targets(model, visited)?;
    let costs = model.costs();
    let efficiency = |g: usize| -> Result<f64> {
        let goal = model.map().target_candidates()[g];
        let direct = costs.cost(l_old, goal);
        let (via_a, via_b) = (costs.cost(l_old, l_star), costs.cost(l_star, goal));
        if direct == UNREACHABLE || via_a == UNREACHABLE || via_b == UNREACHABLE {
            return Ok(0.0);
        }
        let detour = via_a + via_b;
        if detour == 0 {
            return Err(Error::EpisodeLogic(format!("responder at {l_star} is not unexpected: zero detour to {goal}")));
        }
        Ok(direct as f64 / detour as f64)
    };
    let mut weights = snapshot_weights(meta, &targets);
    let eff = targets.iter().map(|&g| efficiency(g)).collect::<Result<Vec<_>>>()?;
    let mut w: Vec<f64> = weights.iter().zip(&eff).map(|(a, b)| a * b).collect();
    if w.iter().sum::<f64>() <= 0.0 {
        weights = vec![1.0; targets.len()];
        w = weights.iter().zip(&eff).map(|(a, b)| a * b).collect();
        if w.iter().sum::<f64>() <= 0.0 {
            w = weights;
        }
    }
    let n_t = model.n_targets();
    let cell = model.map().index_of(l_star);
    let raw: Vec<(u32, f64)> = targets.iter().zip(&w).map(|(&g, &w)| ((cell * n_t + g) as u32, w)).collect();
    let mut belief = Belief::normalized(model, l_star, raw, meta.clone())?;
    belief.meta.last_responder = Some(Sighting { position: l_star, time: meta.time });
    belief.meta.goal_snapshot = belief.target_marginal().into();
    Ok(belief)
}

/// Last-resort belief consistent with `obs`: responder uniform over the
/// cells the observation allows, targets weighted by the snapshot.
pub fn regenerate_uniform(model: &Model, meta: &SightingMeta, obs: &Observation, visited: TargetSet) -> Result<Belief> {
    let map = model.map();
    let targets: Vec<usize> = non_visited_targets(model, visited)?
        .into_iter()
        .filter(|&g| (map.target_candidates()[g] == obs.drone) == obs.target_seen)
        .collect();
    if targets.is_empty() {
        return Err(Error::EpisodeLogic("no target consistent with the observation".into()));
    }
    let weights = snapshot_weights(meta, &targets);
    let cells: Vec<Position> =
        if obs.responder_seen { vec![obs.drone] } else { map.passable_cells().filter(|&c| c != obs.drone).collect() };
    let n_t = model.n_targets();
    let raw: Vec<(u32, f64)> = cells
        .iter()
        .flat_map(|&c| targets.iter().zip(&weights).map(move |(&g, &w)| ((map.index_of(c) * n_t + g) as u32, w)))
        .collect();
    let mut belief = Belief::normalized(model, obs.drone, merge_sorted(raw), meta.clone())?;
    if obs.responder_seen {
        belief.meta.last_responder = Some(Sighting { position: obs.drone, time: meta.time });
        belief.meta.goal_snapshot = belief.target_marginal().into();
    }
    Ok(belief)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_world::{make_environment, Action, EnvironmentFamily, GridMap};
    use crate::model::ModelParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::btree_map::{BTreeMap, Entry};

    fn p(x: i32, y: i32) -> Position {
        Position::new(x, y)
    }

    fn model(family: EnvironmentFamily, p_still: f64) -> Model {
        Model::new(make_environment(family, 0).unwrap(), ModelParams { p_still, ..Default::default() }).unwrap()
    }

    fn meta0(model: &Model) -> SightingMeta {
        model.initial_belief().meta().clone()
    }

    /// Literal three-branch responder mixture, written independently of the
    /// model's precomputed table.
    fn branch_oracle(map: &GridMap, r: Position, t: Position, p_still: f64) -> BTreeMap<Position, f64> {
        let mut out = BTreeMap::new();
        if r == t {
            out.insert(r, 1.0);
            return out;
        }
        // shortest-path first move by brute-force BFS from the target
        let dist = |a: Position| -> u32 {
            let mut seen = BTreeMap::new();
            let mut frontier = vec![t];
            seen.insert(t, 0u32);
            let mut d = 0;
            while !frontier.is_empty() {
                if let Some(&v) = seen.get(&a) {
                    return v;
                }
                d += 1;
                let mut next = vec![];
                for q in frontier {
                    for n in map.neighbors(q).unwrap() {
                        if let Entry::Vacant(e) = seen.entry(n) {
                            e.insert(d);
                            next.push(n);
                        }
                    }
                }
                frontier = next;
            }
            *seen.get(&a).unwrap()
        };
        let here = dist(r);
        let nbrs = map.neighbors(r).unwrap();
        let best = *nbrs.iter().find(|&&n| dist(n) + 1 == here).unwrap();
        *out.entry(r).or_default() += p_still;
        *out.entry(best).or_default() += 0.95 * (1.0 - p_still);
        for n in &nbrs {
            *out.entry(*n).or_default() += 0.05 * (1.0 - p_still) / nbrs.len() as f64;
        }
        out.retain(|_, v| *v > 0.0);
        out
    }

    #[test]
    fn responder_table_matches_branch_oracle() {
        for fam in [EnvironmentFamily::Small, EnvironmentFamily::Building] {
            for ps in [0.0, 0.5] {
                let m = model(fam, ps);
                for r in m.map().passable_cells().collect::<Vec<_>>() {
                    for (g, &t) in m.map().target_candidates().iter().enumerate() {
                        let oracle = branch_oracle(m.map(), r, t, ps);
                        let got: BTreeMap<Position, f64> = m.responder_distribution(r, g).into_iter().collect();
                        assert_eq!(oracle.len(), got.len(), "{r} -> {t}");
                        for (k, v) in oracle {
                            assert!((got[&k] - v).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn adjacent_responder_frequency_matches_enumeration() {
        // p_still = 0, responder at (1,0), target (0,0) among its 3 neighbours.
        let m = model(EnvironmentFamily::Small, 0.0);
        let exact = 0.95 + 0.05 / 3.0;
        let dist = m.responder_distribution(p(1, 0), 0);
        let onto = dist.iter().find(|d| d.0 == p(0, 0)).unwrap().1;
        assert!((onto - exact).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let s = State::new(p(2, 2), p(1, 0), p(0, 0));
        let hits = (0..n).filter(|_| m.transition(s, Action::Stay, &mut rng).responder == p(0, 0)).count();
        let freq = hits as f64 / n as f64;
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((freq - exact).abs() < 4.0 * sigma, "{freq} vs {exact}");
    }

    #[test]
    fn initial_belief_is_uniform() {
        let se = model(EnvironmentFamily::Small, 0.5);
        let b = se.initial_belief();
        assert_eq!(b.len(), 8);
        assert!(b.iter().all(|(s, q)| (q - 0.125).abs() < 1e-15 && s.drone == p(2, 2)));
        assert!((b.entropy(EntropyMode::Full) - 3.0).abs() < 1e-12);
        assert!((b.entropy(EntropyMode::Goal) - 2.0).abs() < 1e-12);
        let le = model(EnvironmentFamily::Large, 0.5);
        let b = le.initial_belief();
        assert_eq!(b.len(), 64);
        assert!(b.iter().all(|(_, q)| (q - 1.0 / 64.0).abs() < 1e-15));
        assert!((b.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_predict_is_deterministic_when_frozen() {
        let m = model(EnvironmentFamily::Small, 1.0);
        let s = State::new(p(2, 2), p(2, 1), p(4, 4));
        let b = Belief::from_states(&m, [(s, 1.0)], meta0(&m)).unwrap();
        let next = b.predict(&m, Action::East);
        assert_eq!(next.len(), 1);
        let (s2, q) = next.iter().next().unwrap();
        assert_eq!(s2, State::new(p(3, 2), p(2, 1), p(4, 4)));
        assert_eq!(q, 1.0);
        assert_eq!(b.entropy(EntropyMode::Full), 0.0);
        assert_eq!(b.entropy(EntropyMode::Goal), 0.0);
    }

    #[test]
    fn predict_matches_enumeration_on_se_prior() {
        let m = model(EnvironmentFamily::Small, 0.5);
        let prior = m.initial_belief();
        let got = prior.predict(&m, Action::Stay);
        let mut oracle: BTreeMap<State, f64> = BTreeMap::new();
        for (s, q) in prior.iter() {
            for (r, w) in branch_oracle(m.map(), s.responder, s.target, 0.5) {
                *oracle.entry(State::new(s.drone, r, s.target)).or_default() += q * w;
            }
        }
        assert_eq!(oracle.len(), got.len());
        for (s, q) in got.iter() {
            assert!((oracle[&s] - q).abs() < 1e-12);
        }
        assert!((got.total_mass() - 1.0).abs() < 1e-12);
        let before = prior.target_marginal();
        let after = got.target_marginal();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn update_applies_observation_constraints() {
        let m = model(EnvironmentFamily::Small, 0.5);
        let prior = m.initial_belief();
        // drone moves north onto a responder start cell
        let pred = prior.predict(&m, Action::North);
        let seen = Observation { drone: p(2, 1), responder_seen: true, target_seen: false };
        let b = pred.update(&m, &seen).unwrap();
        assert!(b.iter().all(|(s, _)| s.responder == p(2, 1)));
        assert_eq!(b.meta().last_responder, Some(Sighting { position: p(2, 1), time: 1 }));
        let not_seen = Observation { responder_seen: false, ..seen };
        let b = pred.update(&m, &not_seen).unwrap();
        assert!(b.iter().all(|(s, _)| s.responder != p(2, 1)));
        assert!((b.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn found_target_collapses_goal_marginal() {
        let m = model(EnvironmentFamily::Small, 0.5);
        let states = m.map().target_candidates().iter().map(|&t| (State::new(p(0, 0), p(2, 1), t), 0.25));
        let b = Belief::from_states(&m, states, meta0(&m)).unwrap();
        let obs = Observation { drone: p(0, 0), responder_seen: false, target_seen: true };
        let post = b.update(&m, &obs).unwrap();
        assert_eq!(post.target_marginal(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_target_and_unexpected_responder_signals() {
        let m = model(EnvironmentFamily::Small, 0.5);
        let s = State::new(p(0, 0), p(2, 1), p(0, 0));
        let b = Belief::from_states(&m, [(s, 1.0)], meta0(&m)).unwrap();
        let obs = Observation { drone: p(0, 0), responder_seen: false, target_seen: false };
        assert_eq!(b.update(&m, &obs), Err(InconsistentObservation::EmptyTarget));
        let s = State::new(p(4, 0), p(2, 1), p(0, 0));
        let b = Belief::from_states(&m, [(s, 1.0)], meta0(&m)).unwrap();
        let obs = Observation { drone: p(4, 0), responder_seen: true, target_seen: false };
        assert_eq!(b.update(&m, &obs), Err(InconsistentObservation::UnexpectedResponder));
    }

    #[test]
    fn truncate_cases() {
        let se = model(EnvironmentFamily::Small, 0.5);
        let b = se.initial_belief();
        assert_eq!(b.truncate(20), b);
        let le = model(EnvironmentFamily::Large, 0.5);
        let t = le.initial_belief().truncate(20);
        assert_eq!(t.len(), 20);
        assert!(t.iter().all(|(_, q)| (q - 0.05).abs() < 1e-12));
        // ties resolved by state order: the 20 smallest states survive
        let kept: Vec<State> = t.iter().map(|x| x.0).collect();
        let mut all: Vec<State> = le.initial_belief().iter().map(|x| x.0).collect();
        all.sort();
        assert_eq!(kept, all[..20].to_vec());
    }

    #[test]
    fn truncate_matches_sort_oracle() {
        let m = model(EnvironmentFamily::Large, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cells: Vec<Position> = m.map().passable_cells().collect();
        let mut states = BTreeMap::new();
        while states.len() < 100 {
            let r = cells[rng.gen_range(0..cells.len())];
            let t = m.map().target_candidates()[rng.gen_range(0..16)];
            // coarse weights so ties occur
            states.insert(State::new(p(5, 5), r, t), rng.gen_range(1..6) as f64);
        }
        let b = Belief::from_states(&m, states.clone(), meta0(&m)).unwrap();
        let t = b.truncate(20);
        let mut oracle: Vec<(State, f64)> = states.into_iter().collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut top: Vec<State> = oracle[..20].iter().map(|x| x.0).collect();
        top.sort();
        assert_eq!(t.iter().map(|x| x.0).collect::<Vec<_>>(), top);
        assert!((t.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regeneration_one_frozen_target() {
        let m = model(EnvironmentFamily::Small, 1.0);
        let meta = SightingMeta {
            time: 6,
            last_responder: Some(Sighting { position: p(2, 1), time: 2 }),
            goal_snapshot: vec![0.1, 0.2, 0.3, 0.4].into(),
        };
        let visited = TargetSet::default().with(0).with(1).with(2);
        let b = regenerate_empty_target(&m, &meta, p(0, 4), visited).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.iter().next().unwrap(), (State::new(p(0, 4), p(2, 1), p(4, 4)), 1.0));
    }

    #[test]
    fn regeneration_symmetric_weights() {
        let m = model(EnvironmentFamily::Small, 0.5);
        let meta = SightingMeta {
            time: 4,
            last_responder: Some(Sighting { position: p(2, 2), time: 1 }),
            goal_snapshot: vec![0.0, 0.5, 0.5, 0.0].into(),
        };
        let visited = TargetSet::default().with(0).with(3);
        let b = regenerate_empty_target(&m, &meta, p(0, 0), visited).unwrap();
        let tm = b.target_marginal();
        assert!((tm[1] - 0.5).abs() < 1e-12 && (tm[2] - 0.5).abs() < 1e-12);
        assert!(
            regenerate_empty_target(&m, &meta, p(0, 0), (0..4).fold(TargetSet::default(), |s, g| s.with(g))).is_err()
        );
    }

    #[test]
    fn regeneration_never_seen_matches_monte_carlo() {
        let m = model(EnvironmentFamily::Small, 0.5);
        let meta = SightingMeta { time: 3, last_responder: None, goal_snapshot: vec![0.4, 0.3, 0.2, 0.1].into() };
        let visited = TargetSet::default().with(0);
        let b = regenerate_empty_target(&m, &meta, p(0, 0), visited).unwrap();
        let tm = b.target_marginal();
        let z = 0.3 + 0.2 + 0.1;
        for (g, w) in [(1, 0.3), (2, 0.2), (3, 0.1)] {
            assert!((tm[g] - w / z).abs() < 1e-12);
        }
        // forward-simulation oracle over 10^5 walks
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let mut counts: BTreeMap<Position, f64> = BTreeMap::new();
        let starts = m.map().responder_start_candidates().to_vec();
        for _ in 0..n {
            let u: f64 = rng.gen::<f64>() * z;
            let g = if u < 0.3 {
                1
            } else if u < 0.5 {
                2
            } else {
                3
            };
            let target = m.map().target_candidates()[g];
            let mut s = State::new(p(0, 0), starts[rng.gen_range(0..starts.len())], target);
            for _ in 0..3 {
                s = m.transition(s, Action::Stay, &mut rng);
            }
            *counts.entry(s.responder).or_default() += 1.0 / n as f64;
        }
        for (r, q) in b.responder_marginal() {
            let f = counts.get(&r).copied().unwrap_or(0.0);
            let sigma = (q * (1.0 - q) / n as f64).sqrt();
            assert!((f - q).abs() < 4.5 * sigma + 1e-9, "{r}: {f} vs {q}");
        }
    }

    #[test]
    fn unexpected_responder_on_path_and_substitution() {
        let m = model(EnvironmentFamily::Small, 0.5);
        let meta = SightingMeta { time: 3, last_responder: None, goal_snapshot: vec![0.25; 4].into() };
        // l_old = (2,1), l* = (1,1) sits on a shortest path to (0,0) only among
        // the remaining targets (0,0) and (4,4).
        let visited = TargetSet::default().with(1).with(2);
        let b = regenerate_unexpected_responder(&m, &meta, p(1, 1), p(2, 1), visited).unwrap();
        // (0,0): 3/(1+2) = 1; (4,4): 5/(1+6)
        let w00 = 0.25 * 1.0;
        let w44 = 0.25 * 5.0 / 7.0;
        let tm = b.target_marginal();
        assert!((tm[0] - w00 / (w00 + w44)).abs() < 1e-12);
        assert!((tm[3] - w44 / (w00 + w44)).abs() < 1e-12);
        assert!(b.iter().all(|(s, _)| s.drone == p(1, 1) && s.responder == p(1, 1)));
        // substitution example: 0.5 * 6 / (2 + 6) = 0.375
        assert!((0.5_f64 * 6.0 / (2.0 + 6.0) - 0.375).abs() < 1e-15);
        // zero detour is rejected
        assert!(regenerate_unexpected_responder(&m, &meta, p(0, 0), p(0, 0), TargetSet::default().with(1)).is_err());
    }

    #[test]
    fn csv_dump_lines() {
        let m = model(EnvironmentFamily::Small, 0.5);
        let csv = m.initial_belief().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x_d,y_d,x_r,y_r,x_t,y_t,prob");
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[1], "2,2,2,1,0,0,0.125");
    }

    #[test]
    fn fused_filter_matches_predict_then_update() {
        let m = model(EnvironmentFamily::Large, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut b = m.initial_belief();
        for _ in 0..12 {
            let truth = b.sample(&mut rng);
            let a = Action::ALL[rng.gen_range(0..5)];
            let obs = m.observe(&m.transition(truth, a, &mut rng));
            let fused = b.filter(&m, a, &obs).unwrap();
            let split = b.predict(&m, a).update(&m, &obs).unwrap();
            assert_eq!(fused.len(), split.len());
            for ((s1, p1), (s2, p2)) in fused.iter().zip(split.iter()) {
                assert_eq!(s1, s2);
                assert!((p1 - p2).abs() < 1e-12);
            }
            assert_eq!(fused.meta().last_responder, split.meta().last_responder);
            assert_eq!(fused.time(), split.time());
            // an impossible sighting is classified the same way
            let far = Observation { responder_seen: true, ..obs };
            assert_eq!(b.filter(&m, a, &far).err(), b.predict(&m, a).update(&m, &far).err());
            b = fused;
        }
    }
}
