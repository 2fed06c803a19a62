//! Reference implementations shared by the integration tests. Everything
//! here is written from the problem statement alone and only reads map
//! geometry from the library, so agreement with the library is meaningful.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sar_pomcp::belief::{regenerate_unexpected_responder, SightingMeta};
use sar_pomcp::{Action, Belief, GridMap, Model, ModelParams, Observation, Position, State, TargetSet};

pub type Cell = (i32, i32);

/// North, East, South, West with `y` growing southwards.
pub const MOVES: [Cell; 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

pub fn pos(c: Cell) -> Position {
    Position::new(c.0, c.1)
}

pub fn cell(p: Position) -> Cell {
    (p.x, p.y)
}

/// Plain grid with BFS distances and the responder's three-branch motion.
#[derive(Debug, Clone)]
pub struct RefWorld {
    pub width: i32,
    pub height: i32,
    pub free: Vec<bool>,
    pub targets: Vec<Cell>,
    pub responders: Vec<Cell>,
    pub drone: Cell,
    dist: HashMap<Cell, Vec<Option<u32>>>,
}

impl RefWorld {
    pub fn from_map(map: &GridMap) -> Self {
        let mut free = Vec::new();
        for y in 0..map.height() {
            for x in 0..map.width() {
                free.push(map.is_passable(Position::new(x, y)));
            }
        }
        let mut world = RefWorld {
            width: map.width(),
            height: map.height(),
            free,
            targets: map.target_candidates().iter().map(|&p| cell(p)).collect(),
            responders: map.responder_start_candidates().iter().map(|&p| cell(p)).collect(),
            drone: cell(map.drone_start()),
            dist: HashMap::new(),
        };
        let cells: Vec<Cell> = world.cells();
        for c in cells {
            let d = world.bfs(c);
            world.dist.insert(c, d);
        }
        world
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_free((x, y)) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn is_free(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height && self.free[(c.1 * self.width + c.0) as usize]
    }

    fn bfs(&self, from: Cell) -> Vec<Option<u32>> {
        let mut dist = vec![None; (self.width * self.height) as usize];
        let idx = |c: Cell| (c.1 * self.width + c.0) as usize;
        dist[idx(from)] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            let d = dist[idx(c)].unwrap();
            for (dx, dy) in MOVES {
                let n = (c.0 + dx, c.1 + dy);
                if self.is_free(n) && dist[idx(n)].is_none() {
                    dist[idx(n)] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn cost(&self, a: Cell, b: Cell) -> Option<u32> {
        self.dist[&a][(b.1 * self.width + b.0) as usize]
    }

    pub fn step(&self, c: Cell, m: Cell) -> Cell {
        let n = (c.0 + m.0, c.1 + m.1);
        if self.is_free(n) {
            n
        } else {
            c
        }
    }

    pub fn neighbours(&self, c: Cell) -> Vec<Cell> {
        MOVES.iter().map(|m| (c.0 + m.0, c.1 + m.1)).filter(|&n| self.is_free(n)).collect()
    }

    /// First move of a shortest path, ties in N, E, S, W order.
    pub fn first_step(&self, from: Cell, goal: Cell) -> Cell {
        let d = self.cost(from, goal).expect("connected");
        if d == 0 {
            return from;
        }
        for (dx, dy) in MOVES {
            let n = (from.0 + dx, from.1 + dy);
            if self.is_free(n) && self.cost(n, goal) == Some(d - 1) {
                return n;
            }
        }
        unreachable!("no descending neighbour")
    }

    /// Unmerged successor branches of a responder at `r` walking to `goal`.
    pub fn responder_branches(&self, r: Cell, goal: Cell, p_still: f64, toward: f64) -> Vec<(Cell, f64)> {
        if r == goal {
            return vec![(r, 1.0)];
        }
        let moving = 1.0 - p_still;
        let mut out = vec![(r, p_still), (self.first_step(r, goal), moving * toward)];
        let nb = self.neighbours(r);
        let random = moving * (1.0 - toward);
        if nb.is_empty() {
            out.push((r, random));
        } else {
            for n in &nb {
                out.push((*n, random / nb.len() as f64));
            }
        }
        out
    }
}

/// Joint state as plain tuples: (drone, responder, target).
pub type RefState = (Cell, Cell, Cell);
type ObsHistory = Vec<(bool, bool)>;

#[derive(Debug, Clone)]
struct Trajectory {
    state: RefState,
    obs: ObsHistory,
    p: f64,
}

fn tv_distance(a: &BTreeMap<RefState, f64>, b: &BTreeMap<RefState, f64>) -> f64 {
    let mut keys: Vec<&RefState> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

fn belief_map(b: &Belief) -> BTreeMap<RefState, f64> {
    b.iter().map(|(s, p)| ((cell(s.drone), cell(s.responder), cell(s.target)), p)).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FilterCheck {
    pub histories: usize,
    pub max_tv: f64,
}

/// Enumerates every trajectory of the hidden state for every action
/// sequence up to `horizon`, groups them by observation history and
/// compares the normalized final-state distribution against the library
/// filter (both split and fused forms) run along the same history.
pub fn check_filter_against_enumeration(map: &GridMap, params: ModelParams, horizon: usize) -> FilterCheck {
    let world = RefWorld::from_map(map);
    let model = Model::new(map.clone(), params).unwrap();
    let n0 = (world.responders.len() * world.targets.len()) as f64;
    let mut start = Vec::new();
    for &r in &world.responders {
        for &t in &world.targets {
            start.push(Trajectory { state: (world.drone, r, t), obs: Vec::new(), p: 1.0 / n0 });
        }
    }
    let mut check = FilterCheck::default();
    let mut actions = Vec::new();
    recurse(&world, &model, params, &start, &mut actions, horizon, &mut check);
    check
}

fn recurse(
    world: &RefWorld,
    model: &Model,
    params: ModelParams,
    trajs: &[Trajectory],
    actions: &mut Vec<usize>,
    horizon: usize,
    check: &mut FilterCheck,
) {
    if actions.len() == horizon {
        return;
    }
    for (a, m) in MOVES.into_iter().chain([(0, 0)]).enumerate() {
        let mut next = Vec::with_capacity(trajs.len() * 6);
        for t in trajs {
            let (d, r, g) = t.state;
            let d2 = world.step(d, m);
            for (r2, q) in world.responder_branches(r, g, params.p_still, params.toward_goal_factor) {
                if q == 0.0 {
                    continue;
                }
                let mut obs = t.obs.clone();
                obs.push((r2 == d2, g == d2));
                next.push(Trajectory { state: (d2, r2, g), obs, p: t.p * q });
            }
        }
        actions.push(a);
        let mut groups: BTreeMap<ObsHistory, BTreeMap<RefState, f64>> = BTreeMap::new();
        for t in &next {
            *groups.entry(t.obs.clone()).or_default().entry(t.state).or_default() += t.p;
        }
        for (history, joint) in &groups {
            let total: f64 = joint.values().sum();
            let posterior: BTreeMap<RefState, f64> = joint.iter().map(|(k, v)| (*k, v / total)).collect();
            let mut split = model.initial_belief();
            let mut fused = model.initial_belief();
            let mut drone = world.drone;
            for (&ai, &(rs, ts)) in actions.iter().zip(history) {
                let action = Action::ALL[ai];
                drone = world.step(drone, if ai < 4 { MOVES[ai] } else { (0, 0) });
                let obs = Observation { drone: pos(drone), responder_seen: rs, target_seen: ts };
                split = split.predict(model, action).update(model, &obs).expect("history has positive probability");
                fused = fused.filter(model, action, &obs).expect("history has positive probability");
            }
            let tv = tv_distance(&posterior, &belief_map(&split)).max(tv_distance(&posterior, &belief_map(&fused)));
            check.max_tv = check.max_tv.max(tv);
            check.histories += 1;
        }
        recurse(world, model, params, &next, actions, horizon, check);
        actions.pop();
    }
}

/// Small maps used by the filter equivalence checks, all at most 5x5.
pub fn small_maps() -> Vec<(&'static str, GridMap)> {
    let se = sar_pomcp::make_environment(sar_pomcp::EnvironmentFamily::Small, 0).unwrap();
    let layouts = [
        ("3x3 open", "T.T\n.DR\nT.T\n"),
        ("4x4 wall", "T..T\n.##.\nRD..\nT..T\n"),
        ("5x5 rooms", "T.#.T\n..#..\n.RD..\n..#R.\nT.#.T\n"),
        ("2x5 corridor", "T.D.T\n.R.R.\n"),
    ];
    let mut maps = vec![("SE", se)];
    maps.extend(layouts.iter().map(|(name, text)| (*name, GridMap::parse(text).unwrap())));
    maps
}

pub fn filter_equivalence_suite() -> (FilterCheck, Duration) {
    let started = Instant::now();
    let mut total = FilterCheck::default();
    for (_, map) in small_maps() {
        for p_still in [0.0, 0.5, 1.0] {
            let params = ModelParams { p_still, ..Default::default() };
            let c = check_filter_against_enumeration(&map, params, 4);
            total.histories += c.histories;
            total.max_tv = total.max_tv.max(c.max_tv);
        }
    }
    (total, started.elapsed())
}

/// Random fully connected map with `n_targets` candidates; retried until valid.
pub fn random_map(rng: &mut ChaCha8Rng, n_targets: usize) -> GridMap {
    loop {
        let w = rng.gen_range(4..=9);
        let h = rng.gen_range(4..=9);
        let mut cells: Vec<Position> = (0..h).flat_map(|y| (0..w).map(move |x| Position::new(x, y))).collect();
        cells.shuffle(rng);
        let n_blocked = rng.gen_range(0..=(w * h / 5) as usize);
        let (blocked, rest) = cells.split_at(n_blocked);
        if rest.len() < n_targets + 2 {
            continue;
        }
        let drone = rest[0];
        let responders = vec![rest[1]];
        let targets = rest[2..2 + n_targets].to_vec();
        if let Ok(map) = GridMap::new(w, h, blocked.iter().copied(), targets, drone, responders) {
            // every free cell must be connected, or the responder model is undefined there
            if Model::new(map.clone(), ModelParams::default()).is_ok() {
                return map;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RegenerationCheck {
    pub instances: usize,
    pub max_error: f64,
}

/// Compares the unexpected-responder regeneration against
/// `snapshot(g) * c(l_old, g) / (c(l_old, l*) + c(l*, g))`, normalized, on
/// randomized instances.
pub fn regeneration_suite(instances: usize, seed: u64) -> RegenerationCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = RegenerationCheck::default();
    while check.instances < instances {
        let n_targets = rng.gen_range(2..=6);
        let map = random_map(&mut rng, n_targets);
        let world = RefWorld::from_map(&map);
        let model = Model::new(map.clone(), ModelParams::default()).unwrap();
        let free = world.cells();
        let l_old = *free.choose(&mut rng).unwrap();
        let l_star = *free.choose(&mut rng).unwrap();
        if l_star == l_old {
            continue;
        }
        let mut visited = TargetSet::default();
        for g in 0..n_targets {
            if rng.gen_bool(0.3) {
                visited.insert(g);
            }
        }
        if visited.len() == n_targets {
            continue;
        }
        let snapshot: Vec<f64> = (0..n_targets).map(|_| rng.gen_range(0.05..1.0)).collect();
        let weights: Vec<f64> = (0..n_targets)
            .map(|g| {
                if visited.contains(g) {
                    return 0.0;
                }
                let t = world.targets[g];
                let direct = world.cost(l_old, t).unwrap() as f64;
                let detour = (world.cost(l_old, l_star).unwrap() + world.cost(l_star, t).unwrap()) as f64;
                snapshot[g] * direct / detour
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let meta = SightingMeta { time: 5, last_responder: None, goal_snapshot: snapshot.clone().into() };
        let b = regenerate_unexpected_responder(&model, &meta, pos(l_star), pos(l_old), visited).unwrap();
        let marginal = b.target_marginal();
        for g in 0..n_targets {
            check.max_error = check.max_error.max((marginal[g] - weights[g] / total).abs());
        }
        assert!(b.iter().all(|(s, _)| cell(s.responder) == l_star && cell(s.drone) == l_star));
        check.instances += 1;
    }
    check
}

/// Exact finite-horizon value of every first action on the belief MDP,
/// enumerating observation branches with the reference dynamics. The
/// episode ends when the drone reaches the target.
pub struct BeliefVi<'a> {
    pub world: &'a RefWorld,
    pub params: ModelParams,
    pub gamma: f64,
    memo: HashMap<(usize, Vec<(RefState, u64)>), f64>,
}

impl<'a> BeliefVi<'a> {
    pub fn new(world: &'a RefWorld, params: ModelParams, gamma: f64) -> Self {
        Self { world, params, gamma, memo: HashMap::new() }
    }

    fn key(b: &BTreeMap<RefState, f64>) -> Vec<(RefState, u64)> {
        b.iter().map(|(s, p)| (*s, (p * 1e12).round() as u64)).collect()
    }

    /// Q values of the five actions (N, E, S, W, Stay) with `depth` steps left.
    pub fn q_values(&mut self, b: &BTreeMap<RefState, f64>, depth: usize) -> [f64; 5] {
        let mut q = [0.0; 5];
        for (a, qa) in q.iter_mut().enumerate() {
            let m = if a < 4 { MOVES[a] } else { (0, 0) };
            let mut by_obs: BTreeMap<(bool, bool), BTreeMap<RefState, f64>> = BTreeMap::new();
            let mut value = 0.0;
            for (&(d, r, g), &p) in b {
                let d2 = self.world.step(d, m);
                for (r2, w) in self.world.responder_branches(r, g, self.params.p_still, self.params.toward_goal_factor)
                {
                    if d2 == g {
                        value += p * w * self.params.goal_reward;
                    } else {
                        *by_obs.entry((r2 == d2, false)).or_default().entry((d2, r2, g)).or_default() += p * w;
                    }
                }
            }
            if depth > 1 {
                for (_, joint) in by_obs {
                    let mass: f64 = joint.values().sum();
                    let post: BTreeMap<RefState, f64> = joint.into_iter().map(|(k, v)| (k, v / mass)).collect();
                    value += self.gamma * mass * self.value(&post, depth - 1);
                }
            }
            *qa = value;
        }
        q
    }

    pub fn value(&mut self, b: &BTreeMap<RefState, f64>, depth: usize) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        let key = (depth, Self::key(b));
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let v = self.q_values(b, depth).into_iter().fold(f64::NEG_INFINITY, f64::max);
        self.memo.insert(key, v);
        v
    }
}

/// Actions whose exact value is within `tol` of the best.
pub fn optimal_actions(q: &[f64; 5], tol: f64) -> Vec<Action> {
    let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..5).filter(|&a| q[a] >= best - tol).map(|a| Action::ALL[a]).collect()
}

pub fn prior_map(world: &RefWorld) -> BTreeMap<RefState, f64> {
    let n = (world.responders.len() * world.targets.len()) as f64;
    let mut b = BTreeMap::new();
    for &r in &world.responders {
        for &t in &world.targets {
            b.insert((world.drone, r, t), 1.0 / n);
        }
    }
    b
}

pub fn state(d: Cell, r: Cell, t: Cell) -> State {
    State::new(pos(d), pos(r), pos(t))
}
