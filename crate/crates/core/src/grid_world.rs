//! Grid maps, movement geometry and precomputed shortest-path tables.
//!
//! Maps are 4-connected. Every map carries the drone's entry cell, the set
//! of cells where the responder may start and the candidate survivor
//! locations. [`CostTable`] holds all-pairs step counts over the passable
//! cells plus the first move of a shortest path towards every target
//! candidate; rollouts, the responder model and belief regeneration all read
//! from it.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on target candidates, so visited sets fit in a `u128` mask.
pub const MAX_TARGETS: usize = 128;

const BUILDING_MAP: &str = include_str!("../maps/building.map");
const CROSS_MAP: &str = include_str!("../maps/cross.map");

/// A grid cell. Ordered row-major (`y`, then `x`), which is also the order
/// candidates are listed in a [`GridMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Position {
    pub x: i32,
    pub y: i32,
}

impl Position {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn chebyshev(self, other: Position) -> u32 {
        (self.x - other.x).unsigned_abs().max((self.y - other.y).unsigned_abs())
    }

    pub fn manhattan(self, other: Position) -> u32 {
        (self.x - other.x).unsigned_abs() + (self.y - other.y).unsigned_abs()
    }

    pub fn step(self, action: Action) -> Position {
        let (dx, dy) = action.delta();
        Position::new(self.x + dx, self.y + dy)
    }
}

impl Ord for Position {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Position {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Drone actions. `y` grows southwards, so North is `(0, -1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    North,
    East,
    South,
    West,
    Stay,
}

impl Action {
    /// Fixed tie-breaking order used everywhere.
    pub const ALL: [Action; 5] = [Action::North, Action::East, Action::South, Action::West, Action::Stay];
    pub const MOVES: [Action; 4] = [Action::North, Action::East, Action::South, Action::West];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::North => (0, -1),
            Action::East => (1, 0),
            Action::South => (0, 1),
            Action::West => (-1, 0),
            Action::Stay => (0, 0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Static world description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: i32,
    height: i32,
    passable: Vec<bool>,
    target_candidates: Vec<Position>,
    drone_start: Position,
    responder_start_candidates: Vec<Position>,
}

impl GridMap {
    /// Builds and validates a map. `blocked` lists impassable cells.
    /// Candidate lists are stored in row-major order.
    pub fn new(
        width: i32,
        height: i32,
        blocked: impl IntoIterator<Item = Position>,
        mut target_candidates: Vec<Position>,
        drone_start: Position,
        mut responder_start_candidates: Vec<Position>,
    ) -> Result<Self> {
        target_candidates.sort();
        responder_start_candidates.sort();
        if width <= 0 || height <= 0 {
            return Err(Error::InvalidMap(format!("bad dimensions {width}x{height}")));
        }
        let mut passable = vec![true; (width * height) as usize];
        for p in blocked {
            if p.x < 0 || p.y < 0 || p.x >= width || p.y >= height {
                return Err(Error::InvalidPosition(p));
            }
            passable[(p.y * width + p.x) as usize] = false;
        }
        let map = GridMap { width, height, passable, target_candidates, drone_start, responder_start_candidates };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<()> {
        if self.target_candidates.is_empty() {
            return Err(Error::InvalidMap("no target candidates".into()));
        }
        if self.responder_start_candidates.is_empty() {
            return Err(Error::InvalidMap("no responder start candidates".into()));
        }
        if self.target_candidates.len() > MAX_TARGETS {
            return Err(Error::InvalidMap(format!(
                "{} target candidates exceed the limit of {MAX_TARGETS}",
                self.target_candidates.len()
            )));
        }
        let all =
            std::iter::once(&self.drone_start).chain(&self.target_candidates).chain(&self.responder_start_candidates);
        for &p in all {
            if !self.is_passable(p) {
                return Err(Error::InvalidPosition(p));
            }
        }
        for (name, list) in [("target", &self.target_candidates), ("responder start", &self.responder_start_candidates)]
        {
            let mut sorted = list.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(Error::InvalidMap(format!("duplicate {name} candidates")));
            }
        }
        let reach = self.bfs(self.drone_start);
        let unreachable = self
            .target_candidates
            .iter()
            .chain(&self.responder_start_candidates)
            .find(|p| reach[self.index_of(**p)] == u32::MAX);
        if let Some(p) = unreachable {
            return Err(Error::InvalidMap(format!("{p} is not connected to the drone start")));
        }
        Ok(())
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn target_candidates(&self) -> &[Position] {
        &self.target_candidates
    }

    pub fn responder_start_candidates(&self) -> &[Position] {
        &self.responder_start_candidates
    }

    pub fn drone_start(&self) -> Position {
        self.drone_start
    }

    pub fn target_index(&self, p: Position) -> Option<usize> {
        self.target_candidates.iter().position(|&t| t == p)
    }

    pub fn in_bounds(&self, p: Position) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    pub fn is_passable(&self, p: Position) -> bool {
        self.in_bounds(p) && self.passable[self.index_of(p)]
    }

    pub fn is_blocked(&self, p: Position) -> bool {
        !self.is_passable(p)
    }

    /// Row-major cell index. Only meaningful for in-bounds positions.
    pub fn index_of(&self, p: Position) -> usize {
        (p.y * self.width + p.x) as usize
    }

    pub fn position_of(&self, index: usize) -> Position {
        let i = index as i32;
        Position::new(i % self.width, i / self.width)
    }

    pub fn cell_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn passable_cells(&self) -> impl Iterator<Item = Position> + '_ {
        (0..self.cell_count()).filter(|&i| self.passable[i]).map(|i| self.position_of(i))
    }

    /// Passable 4-neighbours of `p` in N, E, S, W order.
    pub fn neighbors(&self, p: Position) -> Result<Vec<Position>> {
        if !self.is_passable(p) {
            return Err(Error::InvalidPosition(p));
        }
        Ok(self.neighbors_unchecked(p).collect())
    }

    pub(crate) fn neighbors_unchecked(&self, p: Position) -> impl Iterator<Item = Position> + '_ {
        Action::MOVES.iter().map(move |&a| p.step(a)).filter(|&q| self.is_passable(q))
    }

    /// Result of applying `action` at `p`; moves into walls or off the map stay put.
    pub fn apply(&self, p: Position, action: Action) -> Position {
        let q = p.step(action);
        if self.is_passable(q) {
            q
        } else {
            p
        }
    }

    /// Moves that change the position, followed by `Stay`.
    pub fn legal_actions(&self, p: Position) -> Vec<Action> {
        Action::ALL.iter().copied().filter(|&a| a == Action::Stay || self.is_passable(p.step(a))).collect()
    }

    /// Step counts from `source` to every cell (`u32::MAX` when unreachable).
    fn bfs(&self, source: Position) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.cell_count()];
        let mut queue = VecDeque::new();
        dist[self.index_of(source)] = 0;
        queue.push_back(source);
        while let Some(p) = queue.pop_front() {
            let d = dist[self.index_of(p)];
            for q in self.neighbors_unchecked(p) {
                let qi = self.index_of(q);
                if dist[qi] == u32::MAX {
                    dist[qi] = d + 1;
                    queue.push_back(q);
                }
            }
        }
        dist
    }

    /// Parses the ASCII format: `#` blocked, `.` free, `D` drone start,
    /// `R` responder start candidate, `T` target candidate.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .skip_while(|l| l.is_empty())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        if rows.is_empty() {
            return Err(Error::MapParse { line: 1, message: "empty map".into() });
        }
        let width = rows[0].chars().count();
        let mut blocked = Vec::new();
        let mut targets = Vec::new();
        let mut responders = Vec::new();
        let mut drone = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::MapParse {
                    line: y + 1,
                    message: format!("expected {width} columns, found {}", row.chars().count()),
                });
            }
            for (x, c) in row.chars().enumerate() {
                let p = Position::new(x as i32, y as i32);
                match c {
                    '#' => blocked.push(p),
                    '.' => {}
                    'T' => targets.push(p),
                    'R' => responders.push(p),
                    'D' => {
                        if drone.replace(p).is_some() {
                            return Err(Error::MapParse { line: y + 1, message: "more than one drone start".into() });
                        }
                    }
                    other => {
                        return Err(Error::MapParse { line: y + 1, message: format!("unexpected character {other:?}") })
                    }
                }
            }
        }
        let drone = drone.ok_or_else(|| Error::MapParse { line: rows.len(), message: "no drone start".into() })?;
        GridMap::new(width as i32, rows.len() as i32, blocked, targets, drone, responders)
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(self.cell_count() + self.height as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                let p = Position::new(x, y);
                let c = if p == self.drone_start {
                    'D'
                } else if self.responder_start_candidates.contains(&p) {
                    'R'
                } else if self.target_candidates.contains(&p) {
                    'T'
                } else if self.is_passable(p) {
                    '.'
                } else {
                    '#'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    /// Number of equally likely starting configurations.
    pub fn initial_condition_count(&self) -> usize {
        self.responder_start_candidates.len() * self.target_candidates.len()
    }
}

/// The environment families used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvironmentFamily {
    #[serde(rename = "SE")]
    Small,
    #[serde(rename = "LE")]
    Large,
    #[serde(rename = "CE")]
    Cross,
    #[serde(rename = "BUILDING")]
    Building,
    #[serde(rename = "RANDOM")]
    Random,
}

impl EnvironmentFamily {
    pub fn label(self) -> &'static str {
        match self {
            EnvironmentFamily::Small => "SE",
            EnvironmentFamily::Large => "LE",
            EnvironmentFamily::Cross => "CE",
            EnvironmentFamily::Building => "BUILDING",
            EnvironmentFamily::Random => "RANDOM",
        }
    }
}

impl fmt::Display for EnvironmentFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EnvironmentFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SE" => Ok(EnvironmentFamily::Small),
            "LE" => Ok(EnvironmentFamily::Large),
            "CE" => Ok(EnvironmentFamily::Cross),
            "BUILDING" => Ok(EnvironmentFamily::Building),
            "RANDOM" => Ok(EnvironmentFamily::Random),
            _ => Err(Error::InvalidConfig(format!("unknown environment family {s:?}"))),
        }
    }
}

/// Builds a map of the given family. `seed` only matters for `Random`.
pub fn make_environment(family: EnvironmentFamily, seed: u64) -> Result<GridMap> {
    match family {
        EnvironmentFamily::Small => open_square(5, &[(2, 1), (2, 3)], &[(0, 0), (4, 0), (0, 4), (4, 4)]),
        EnvironmentFamily::Large => {
            let mut targets = Vec::new();
            for &(cx, cy) in &[(0, 0), (9, 0), (0, 9), (9, 9)] {
                for dy in 0..2 {
                    for dx in 0..2 {
                        targets.push((cx + dx, cy + dy));
                    }
                }
            }
            open_square(11, &[(5, 4), (6, 5), (5, 6), (4, 5)], &targets)
        }
        EnvironmentFamily::Cross => GridMap::parse(CROSS_MAP),
        EnvironmentFamily::Building => GridMap::parse(BUILDING_MAP),
        EnvironmentFamily::Random => random_rooms(seed),
    }
}

fn open_square(size: i32, responders: &[(i32, i32)], targets: &[(i32, i32)]) -> Result<GridMap> {
    let to_pos = |v: &[(i32, i32)]| {
        let mut out: Vec<Position> = v.iter().map(|&(x, y)| Position::new(x, y)).collect();
        out.sort();
        out
    };
    GridMap::new(size, size, std::iter::empty(), to_pos(targets), Position::new(size / 2, size / 2), to_pos(responders))
}

const RANDOM_SIZE: i32 = 64;
const RANDOM_ROOMS: usize = 6;
const RANDOM_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy)]
struct Room {
    x: i32,
    y: i32,
    w: i32,
    h: i32,
}

impl Room {
    fn center(&self) -> Position {
        Position::new(self.x + self.w / 2, self.y + self.h / 2)
    }

    /// Overlap test with a one-cell wall margin around each room.
    fn collides(&self, other: &Room) -> bool {
        self.x - 1 <= other.x + other.w
            && other.x - 1 <= self.x + self.w
            && self.y - 1 <= other.y + other.h
            && other.y - 1 <= self.y + self.h
    }
}

/// 64x64 map with six rectangular rooms joined in sequence by one-cell
/// L-shaped corridors, one target candidate per room, drone in the first room.
fn random_rooms(seed: u64) -> Result<GridMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_ATTEMPTS {
        if let Some(map) = try_random_rooms(&mut rng) {
            return Ok(map);
        }
    }
    Err(Error::Generation { attempts: RANDOM_ATTEMPTS })
}

fn try_random_rooms(rng: &mut ChaCha8Rng) -> Option<GridMap> {
    let mut rooms: Vec<Room> = Vec::with_capacity(RANDOM_ROOMS);
    let mut placements = 0;
    while rooms.len() < RANDOM_ROOMS {
        placements += 1;
        if placements > 2000 {
            return None;
        }
        let w = rng.gen_range(5..=12);
        let h = rng.gen_range(5..=12);
        let room = Room { x: rng.gen_range(1..RANDOM_SIZE - w - 1), y: rng.gen_range(1..RANDOM_SIZE - h - 1), w, h };
        if rooms.iter().all(|r| !room.collides(r)) {
            rooms.push(room);
        }
    }

    let mut free = vec![false; (RANDOM_SIZE * RANDOM_SIZE) as usize];
    let mut carve = |p: Position| free[(p.y * RANDOM_SIZE + p.x) as usize] = true;
    for r in &rooms {
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                carve(Position::new(x, y));
            }
        }
    }
    for pair in rooms.windows(2) {
        let (a, b) = (pair[0].center(), pair[1].center());
        let horizontal_first = rng.gen_bool(0.5);
        let corner = if horizontal_first { Position::new(b.x, a.y) } else { Position::new(a.x, b.y) };
        for (from, to) in [(a, corner), (corner, b)] {
            let (dx, dy) = ((to.x - from.x).signum(), (to.y - from.y).signum());
            let mut p = from;
            carve(p);
            while p != to {
                p = Position::new(p.x + dx, p.y + dy);
                carve(p);
            }
        }
    }

    let drone = rooms[0].center();
    let responders: Vec<Position> = Action::MOVES.iter().map(|&a| drone.step(a)).collect();
    let mut targets = Vec::with_capacity(RANDOM_ROOMS);
    for r in &rooms {
        let cells: Vec<Position> = (r.y..r.y + r.h)
            .flat_map(|y| (r.x..r.x + r.w).map(move |x| Position::new(x, y)))
            .filter(|p| *p != drone && !responders.contains(p))
            .collect();
        targets.push(*cells.choose(rng)?);
    }
    targets.sort();
    let mut responders = responders;
    responders.sort();

    let blocked = (0..RANDOM_SIZE * RANDOM_SIZE)
        .filter(|&i| !free[i as usize])
        .map(|i| Position::new(i % RANDOM_SIZE, i / RANDOM_SIZE));
    GridMap::new(RANDOM_SIZE, RANDOM_SIZE, blocked, targets, drone, responders).ok()
}

/// Sentinel for unreachable pairs.
pub const UNREACHABLE: u32 = u32::MAX;

/// All-pairs shortest-path step counts over passable cells and the first
/// move of a shortest path towards each target candidate.
#[derive(Debug, Clone)]
pub struct CostTable {
    width: i32,
    height: i32,
    /// Grid cell index to compact passable index.
    compact: Vec<u32>,
    passable_count: usize,
    cost: Vec<u32>,
    targets: Vec<Position>,
    /// `passable_count x targets.len()`, `None` for unreachable pairs.
    best: Vec<Option<Action>>,
}

impl CostTable {
    /// Breadth-first search from every passable cell.
    pub fn compute(map: &GridMap) -> CostTable {
        let mut compact = vec![u32::MAX; map.cell_count()];
        let cells: Vec<Position> = map.passable_cells().collect();
        for (i, &p) in cells.iter().enumerate() {
            compact[map.index_of(p)] = i as u32;
        }
        let n = cells.len();
        let mut cost = vec![UNREACHABLE; n * n];
        for (i, &src) in cells.iter().enumerate() {
            let dist = map.bfs(src);
            let row = &mut cost[i * n..(i + 1) * n];
            for (j, &dst) in cells.iter().enumerate() {
                row[j] = dist[map.index_of(dst)];
            }
        }
        let targets = map.target_candidates().to_vec();
        let mut table = CostTable {
            width: map.width(),
            height: map.height(),
            compact,
            passable_count: n,
            cost,
            targets,
            best: Vec::new(),
        };
        let mut best = Vec::with_capacity(n * table.targets.len());
        for &p in &cells {
            for &t in &table.targets {
                best.push(table.first_step(map, p, t));
            }
        }
        table.best = best;
        table
    }

    fn compact_index(&self, p: Position) -> Option<usize> {
        if p.x < 0 || p.y < 0 || p.x >= self.width || p.y >= self.height {
            return None;
        }
        match self.compact[(p.y * self.width + p.x) as usize] {
            u32::MAX => None,
            i => Some(i as usize),
        }
    }

    /// Step count from `a` to `b`; `UNREACHABLE` if either cell is blocked
    /// or no path exists.
    pub fn cost(&self, a: Position, b: Position) -> u32 {
        match (self.compact_index(a), self.compact_index(b)) {
            (Some(i), Some(j)) => self.cost[i * self.passable_count + j],
            _ => UNREACHABLE,
        }
    }

    pub fn targets(&self) -> &[Position] {
        &self.targets
    }

    /// First move of a shortest path from `p` to target candidate number
    /// `target`. `Stay` when already there, `None` when unreachable.
    pub fn best_action(&self, p: Position, target: usize) -> Option<Action> {
        let i = self.compact_index(p)?;
        self.best[i * self.targets.len() + target]
    }

    /// Like [`best_action`](Self::best_action) for an arbitrary destination.
    pub fn first_step(&self, map: &GridMap, p: Position, goal: Position) -> Option<Action> {
        let d = self.cost(p, goal);
        if d == UNREACHABLE {
            return None;
        }
        if d == 0 {
            return Some(Action::Stay);
        }
        Action::MOVES.iter().copied().find(|&a| map.is_passable(p.step(a)) && self.cost(p.step(a), goal) == d - 1)
    }
}
