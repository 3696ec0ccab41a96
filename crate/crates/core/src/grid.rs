//! Grid maps, MovingAI ingestion, MAPF-RD instances and deadline generation.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// A grid cell, `x` is the column and `y` the row (row 0 at the top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.manhattan(other) == 1
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn parse_err(line: usize, reason: impl Into<String>) -> MapError {
    MapError::Parse {
        line,
        reason: reason.into(),
    }
}

/// Four-connected occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: u32,
    height: u32,
    blocked: Vec<bool>,
    /// Edge length of one cell in meters.
    pub cell_size: f64,
}

impl GridMap {
    pub fn new(width: u32, height: u32, blocked: Vec<bool>) -> Self {
        assert_eq!(blocked.len(), (width * height) as usize);
        GridMap {
            width,
            height,
            blocked,
            cell_size: 1.0,
        }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![false; (width * height) as usize])
    }

    /// Random obstacle map with roughly `obstacle_pct` percent blocked cells.
    ///
    /// Obstacles that would split the free space are skipped so every free
    /// cell stays reachable from every other.
    pub fn random(width: u32, height: u32, obstacle_pct: u32, seed: u64) -> Self {
        let mut map = Self::empty(width, height);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = (width * height * obstacle_pct / 100) as usize;
        let mut cells: Vec<u32> = (0..width * height).collect();
        cells.shuffle(&mut rng);
        let mut placed = 0;
        for idx in cells {
            if placed == target {
                break;
            }
            map.blocked[idx as usize] = true;
            if map.free_components() > 1 {
                map.blocked[idx as usize] = false;
            } else {
                placed += 1;
            }
        }
        map
    }

    fn free_components(&self) -> usize {
        let mut seen = vec![false; self.blocked.len()];
        let mut components = 0;
        for start in 0..self.blocked.len() {
            if self.blocked[start] || seen[start] {
                continue;
            }
            components += 1;
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = queue.pop_front() {
                for n in self.neighbors(self.cell_at(i)) {
                    let j = self.index(n);
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        components
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.blocked.len()
    }

    pub fn num_blocked(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        (cell.y * self.width + cell.x) as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index as u32 % self.width, index as u32 / self.width)
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        !self.in_bounds(cell) || self.blocked[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_blocked(cell)
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.blocked.len())
            .filter(|&i| !self.blocked[i])
            .map(|i| self.cell_at(i))
    }

    /// Unblocked 4-neighbours in the fixed order north, east, south, west.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        const OFFSETS: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
        OFFSETS.iter().filter_map(move |&(dx, dy)| {
            let x = cell.x as i64 + dx;
            let y = cell.y as i64 + dy;
            if x < 0 || y < 0 {
                return None;
            }
            let next = Cell::new(x as u32, y as u32);
            self.is_free(next).then_some(next)
        })
    }

    pub fn degree(&self, cell: Cell) -> usize {
        self.neighbors(cell).count()
    }

    /// BFS distance (in moves) from `source` to every cell; `u32::MAX` when unreachable.
    pub fn distances_from(&self, source: Cell) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.blocked.len()];
        if self.is_blocked(source) {
            return dist;
        }
        dist[self.index(source)] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)];
            for n in self.neighbors(c) {
                let j = self.index(n);
                if dist[j] == u32::MAX {
                    dist[j] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn shortest_distance(&self, from: Cell, to: Cell) -> Option<u32> {
        let d = self.distances_from(from)[self.index(to)];
        (d != u32::MAX).then_some(d)
    }

    /// Parses a MovingAI `.map` file.
    pub fn parse(text: &str) -> Result<GridMap, MapError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut height = None;
        let mut width = None;
        let mut saw_type = false;
        loop {
            let (no, line) = lines
                .next()
                .ok_or_else(|| parse_err(text.lines().count().max(1), "unexpected end of header"))?;
            let line = line.trim_end_matches('\r');
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("type") => saw_type = true,
                Some("height") => height = Some(parse_dim(parts.next(), no, "height")?),
                Some("width") => width = Some(parse_dim(parts.next(), no, "width")?),
                Some("map") => {
                    if !saw_type {
                        return Err(parse_err(no, "missing `type` header line"));
                    }
                    break;
                }
                Some(other) => return Err(parse_err(no, format!("unknown header key `{other}`"))),
                None => return Err(parse_err(no, "empty header line")),
            }
        }
        let height = height.ok_or_else(|| parse_err(1, "missing `height` header"))?;
        let width = width.ok_or_else(|| parse_err(1, "missing `width` header"))?;

        let mut blocked = Vec::with_capacity((width * height) as usize);
        let mut rows = 0u32;
        for (no, line) in lines {
            let line = line.trim_end_matches('\r');
            if rows == height {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(parse_err(no, format!("more than {height} grid rows")));
            }
            if line.chars().count() != width as usize {
                return Err(parse_err(
                    no,
                    format!("row has {} cells, expected {width}", line.chars().count()),
                ));
            }
            for ch in line.chars() {
                blocked.push(match ch {
                    '.' | 'G' => false,
                    '@' | 'T' | 'O' => true,
                    other => return Err(parse_err(no, format!("unknown cell character `{other}`"))),
                });
            }
            rows += 1;
        }
        if rows != height {
            return Err(parse_err(
                text.lines().count(),
                format!("found {rows} grid rows, expected {height}"),
            ));
        }
        Ok(GridMap::new(width, height, blocked))
    }

    /// Canonical MovingAI rendering: `.` free, `@` blocked.
    pub fn to_movingai(&self) -> String {
        let mut out = format!("type octile\nheight {}\nwidth {}\nmap\n", self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(if self.is_blocked(Cell::new(x, y)) { '@' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

fn parse_dim(token: Option<&str>, line: usize, what: &str) -> Result<u32, MapError> {
    token
        .and_then(|t| t.parse::<u32>().ok())
        .filter(|v| *v > 0)
        .ok_or_else(|| parse_err(line, format!("invalid {what}")))
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenError {
    #[error("missing `version` header")]
    MissingVersion,
    #[error("entry {entry} (line {line}): {reason}")]
    Entry {
        entry: usize,
        line: usize,
        reason: String,
    },
    #[error("requested {requested} entries but the scenario only has {available}")]
    TooFew { requested: usize, available: usize },
}

/// Reads the first `count` start/goal pairs of a MovingAI `.scen` v1 file.
///
/// The optimal-length column is ignored; shortest paths are recomputed on the map.
pub fn parse_scen(text: &str, map: &GridMap, count: usize) -> Result<Vec<(Cell, Cell)>, ScenError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.find(|(_, l)| !l.trim().is_empty()) {
        Some((_, l)) if l.trim().starts_with("version") => {}
        _ => return Err(ScenError::MissingVersion),
    }
    let mut pairs = Vec::with_capacity(count);
    let mut available = 0;
    for (entry, (line, text)) in lines.filter(|(_, l)| !l.trim().is_empty()).enumerate() {
        available += 1;
        if pairs.len() == count {
            continue;
        }
        let cols: Vec<&str> = text.split('\t').collect();
        let err = |reason: String| ScenError::Entry { entry, line, reason };
        if cols.len() < 9 {
            return Err(err(format!("expected 9 tab-separated columns, got {}", cols.len())));
        }
        let num = |i: usize, name: &str| {
            cols[i]
                .trim()
                .parse::<u32>()
                .map_err(|_| err(format!("invalid {name} `{}`", cols[i])))
        };
        let start = Cell::new(num(4, "start_x")?, num(5, "start_y")?);
        let goal = Cell::new(num(6, "goal_x")?, num(7, "goal_y")?);
        for (what, c) in [("start", start), ("goal", goal)] {
            if !map.in_bounds(c) {
                return Err(err(format!("{what} {c} out of bounds")));
            }
            if map.is_blocked(c) {
                return Err(err(format!("{what} {c} is blocked")));
            }
        }
        pairs.push((start, goal));
    }
    if pairs.len() < count {
        return Err(ScenError::TooFew {
            requested: count,
            available,
        });
    }
    Ok(pairs)
}

/// Kinodynamic limits of every robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinodynLimits {
    /// m/s
    pub v_max: f64,
    /// m/s², negative
    pub a_min: f64,
    /// m/s²
    pub a_max: f64,
    /// deg/s
    pub omega_max: f64,
}

impl Default for KinodynLimits {
    fn default() -> Self {
        KinodynLimits {
            v_max: 5.0,
            a_min: -0.1,
            a_max: 0.1,
            omega_max: 3.0,
        }
    }
}

impl KinodynLimits {
    pub fn validate(&self) -> Result<(), InstanceError> {
        let ok = self.v_max > 0.0 && self.a_max > 0.0 && self.a_min < 0.0 && self.omega_max > 0.0;
        if ok {
            Ok(())
        } else {
            Err(InstanceError::InvalidLimits(*self))
        }
    }
}

/// Heading of a robot on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn between(from: Cell, to: Cell) -> Option<Heading> {
        match (to.x as i64 - from.x as i64, to.y as i64 - from.y as i64) {
            (0, -1) => Some(Heading::North),
            (1, 0) => Some(Heading::East),
            (0, 1) => Some(Heading::South),
            (-1, 0) => Some(Heading::West),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    /// Signed clockwise rotation in degrees from `self` to `to`: 0, 90, -90 or 180.
    pub fn rotation_to(self, to: Heading) -> i32 {
        match (to.index() + 4 - self.index()) % 4 {
            0 => 0,
            1 => 90,
            2 => 180,
            _ => -90,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Heading::North => "N",
            Heading::East => "E",
            Heading::South => "S",
            Heading::West => "W",
        }
    }

    pub fn parse(s: &str) -> Option<Heading> {
        match s {
            "N" => Some(Heading::North),
            "E" => Some(Heading::East),
            "S" => Some(Heading::South),
            "W" => Some(Heading::West),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSpec {
    pub start: Cell,
    pub goal: Cell,
    /// `None` means the robot initially faces its first move.
    pub heading: Option<Heading>,
}

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("agent {agent}: {what} {cell} is blocked or outside the map")]
    BlockedEndpoint {
        agent: usize,
        what: &'static str,
        cell: Cell,
    },
    #[error("agents {a} and {b} share the {what} {cell}")]
    Duplicate {
        a: usize,
        b: usize,
        what: &'static str,
        cell: Cell,
    },
    #[error("agent {agent}: deadline {deadline} is not strictly positive")]
    Deadline { agent: usize, deadline: f64 },
    #[error("{agents} agents but {deadlines} deadlines")]
    DeadlineCount { agents: usize, deadlines: usize },
    #[error("agent {agent}: goal {goal} unreachable from {start}")]
    Unreachable { agent: usize, start: Cell, goal: Cell },
    #[error("deadline scaling factor must be positive, got {0}")]
    ScalingFactor(f64),
    #[error("invalid kinodynamic limits {0:?}")]
    InvalidLimits(KinodynLimits),
    #[error("cannot place {requested} agents on a map with {free} reachable cells")]
    TooManyAgents { requested: usize, free: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// A MAPF-RD instance: map, agents and wall-clock deadlines in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct GridInstance {
    pub map: GridMap,
    pub agents: Vec<AgentSpec>,
    pub deadlines: Vec<f64>,
    pub seed: u64,
}

impl GridInstance {
    pub fn new(
        map: GridMap,
        agents: Vec<AgentSpec>,
        deadlines: Vec<f64>,
        seed: u64,
    ) -> Result<Self, InstanceError> {
        validate_agents(&map, &agents)?;
        if deadlines.len() != agents.len() {
            return Err(InstanceError::DeadlineCount {
                agents: agents.len(),
                deadlines: deadlines.len(),
            });
        }
        if let Some((agent, &deadline)) = deadlines
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d > 0.0 && d.is_finite()))
        {
            return Err(InstanceError::Deadline { agent, deadline });
        }
        Ok(GridInstance {
            map,
            agents,
            deadlines,
            seed,
        })
    }

    /// Builds an instance with deadlines drawn by [`generate_deadlines`].
    pub fn with_generated_deadlines(
        map: GridMap,
        agents: Vec<AgentSpec>,
        spec: DeadlineSpec,
        limits: &KinodynLimits,
        seed: u64,
    ) -> Result<Self, InstanceError> {
        let deadlines = generate_deadlines(&map, &agents, spec, limits, seed)?;
        Self::new(map, agents, deadlines, seed)
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Writes the line-oriented instance file
    /// (`agent_id start_x start_y goal_x goal_y deadline_s`).
    pub fn agents_to_text(&self) -> String {
        let mut out = String::from("# agent_id start_x start_y goal_x goal_y deadline_s\n");
        for (i, (a, d)) in self.agents.iter().zip(&self.deadlines).enumerate() {
            out.push_str(&format!(
                "{i} {} {} {} {} {d}\n",
                a.start.x, a.start.y, a.goal.x, a.goal.y
            ));
        }
        out
    }

    /// Parses the line-oriented instance file against `map`.
    pub fn from_agents_text(map: GridMap, text: &str, seed: u64) -> Result<Self, InstanceError> {
        let mut agents = Vec::new();
        let mut deadlines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| InstanceError::Parse { line: i + 1, reason };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 6 {
                return Err(err(format!("expected 6 columns, got {}", cols.len())));
            }
            let id: usize = cols[0].parse().map_err(|_| err("bad agent id".into()))?;
            if id != agents.len() {
                return Err(err(format!("agent ids must be consecutive, expected {}", agents.len())));
            }
            let n = |k: usize| cols[k].parse::<u32>().map_err(|_| err(format!("bad coordinate `{}`", cols[k])));
            let deadline: f64 = cols[5].parse().map_err(|_| err("bad deadline".into()))?;
            agents.push(AgentSpec {
                start: Cell::new(n(1)?, n(2)?),
                goal: Cell::new(n(3)?, n(4)?),
                heading: None,
            });
            deadlines.push(deadline);
        }
        Self::new(map, agents, deadlines, seed)
    }
}

pub fn validate_agents(map: &GridMap, agents: &[AgentSpec]) -> Result<(), InstanceError> {
    let mut starts = std::collections::HashMap::new();
    let mut goals = std::collections::HashMap::new();
    for (i, a) in agents.iter().enumerate() {
        for (what, cell, seen) in [("start", a.start, &mut starts), ("goal", a.goal, &mut goals)] {
            if map.is_blocked(cell) {
                return Err(InstanceError::BlockedEndpoint { agent: i, what, cell });
            }
            if let Some(&prev) = seen.get(&cell) {
                return Err(InstanceError::Duplicate { a: prev, b: i, what, cell });
            }
            seen.insert(cell, i);
        }
    }
    Ok(())
}

/// Samples `count` agents with pairwise distinct starts and goals, all
/// in one connected region, with start != goal.
pub fn random_agents(map: &GridMap, count: usize, seed: u64) -> Result<Vec<AgentSpec>, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: Vec<Cell> = map.free_cells().collect();
    if free.is_empty() || count * 2 > free.len() {
        return Err(InstanceError::TooManyAgents {
            requested: count,
            free: free.len(),
        });
    }
    // restrict to the component of a random free cell
    let anchor = free[rng.random_range(0..free.len())];
    let dist = map.distances_from(anchor);
    let mut region: Vec<Cell> = free.into_iter().filter(|c| dist[map.index(*c)] != u32::MAX).collect();
    if count * 2 > region.len() {
        return Err(InstanceError::TooManyAgents {
            requested: count,
            free: region.len(),
        });
    }
    region.shuffle(&mut rng);
    let starts = region[..count].to_vec();
    let mut goals = region.clone();
    goals.shuffle(&mut rng);
    let mut chosen = Vec::with_capacity(count);
    let mut used = std::collections::HashSet::new();
    for &s in &starts {
        let g = goals
            .iter()
            .copied()
            .find(|g| *g != s && !used.contains(g))
            .expect("region holds at least 2*count cells");
        used.insert(g);
        chosen.push(AgentSpec {
            start: s,
            goal: g,
            heading: None,
        });
    }
    Ok(chosen)
}

/// Deadline scaling: factors are drawn from `Uniform[k_d, k_d + spread]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlineSpec {
    pub k_d: f64,
    pub spread: f64,
}

impl DeadlineSpec {
    pub fn new(k_d: f64) -> Self {
        DeadlineSpec { k_d, spread: 3.0 }
    }
}

/// `T_i = (shortest_len_i * cell_size / v_max) * u_i`, `u_i ~ U[k_d, k_d + spread]`,
/// one draw per agent in ascending index order from a generator seeded with `seed`.
pub fn generate_deadlines(
    map: &GridMap,
    agents: &[AgentSpec],
    spec: DeadlineSpec,
    limits: &KinodynLimits,
    seed: u64,
) -> Result<Vec<f64>, InstanceError> {
    if !(spec.k_d > 0.0) || !(spec.spread >= 0.0) {
        return Err(InstanceError::ScalingFactor(spec.k_d));
    }
    limits.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    agents
        .iter()
        .enumerate()
        .map(|(agent, a)| {
            let len = map
                .shortest_distance(a.start, a.goal)
                .ok_or(InstanceError::Unreachable {
                    agent,
                    start: a.start,
                    goal: a.goal,
                })?;
            let lower_bound = lower_bound_time(len, map.cell_size, limits);
            let u = if spec.spread == 0.0 {
                spec.k_d
            } else {
                rng.random_range(spec.k_d..=spec.k_d + spec.spread)
            };
            Ok(lower_bound * u)
        })
        .collect()
}

/// Kinematic lower bound used for deadlines: path length over the speed limit.
pub fn lower_bound_time(shortest_len: u32, cell_size: f64, limits: &KinodynLimits) -> f64 {
    shortest_len as f64 * cell_size / limits.v_max
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("no candidate scaling factors given")]
    NoCandidates,
    #[error("every candidate gave a degenerate miss rate: {0:?}")]
    Degenerate(Vec<(f64, f64)>),
}

/// Picks the candidate whose miss rate is closest to 50%; ties keep the earlier candidate.
pub fn select_k_d(rates: &[(f64, f64)]) -> Result<f64, CalibrationError> {
    if rates.is_empty() {
        return Err(CalibrationError::NoCandidates);
    }
    if rates.len() > 1 && rates.iter().all(|(_, r)| *r == 0.0 || *r == 1.0) {
        return Err(CalibrationError::Degenerate(rates.to_vec()));
    }
    let mut best = rates[0];
    for &cand in &rates[1..] {
        if (cand.1 - 0.5).abs() < (best.1 - 0.5).abs() {
            best = cand;
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_empty_map() {
        let map = GridMap::parse("type octile\nheight 2\nwidth 2\nmap\n..\n..\n").unwrap();
        assert_eq!((map.width(), map.height(), map.num_blocked()), (2, 2, 0));
    }

    #[test]
    fn parses_benchmark_sized_empty_map() {
        let body: String = (0..32).map(|_| ".".repeat(32) + "\n").collect();
        let text = format!("type octile\nheight 32\nwidth 32\nmap\n{body}");
        let map = GridMap::parse(&text).unwrap();
        assert_eq!((map.width(), map.height(), map.num_blocked()), (32, 32, 0));
    }

    #[test]
    fn cell_characters() {
        let map = GridMap::parse("type octile\nheight 1\nwidth 5\nmap\n.G@TO\n").unwrap();
        let blocked: Vec<bool> = (0..5).map(|x| map.is_blocked(Cell::new(x, 0))).collect();
        assert_eq!(blocked, vec![false, false, true, true, true]);
    }

    #[test]
    fn short_row_reports_its_line() {
        let err = GridMap::parse("type octile\nheight 2\nwidth 3\nmap\n...\n..\n").unwrap_err();
        assert!(matches!(err, MapError::Parse { line: 6, .. }), "{err:?}");
    }

    #[test]
    fn rejects_unknown_char_and_bad_header() {
        assert!(matches!(
            GridMap::parse("type octile\nheight 1\nwidth 2\nmap\n.x\n"),
            Err(MapError::Parse { line: 5, .. })
        ));
        assert!(matches!(
            GridMap::parse("type octile\nheight x\nwidth 2\nmap\n..\n"),
            Err(MapError::Parse { line: 2, .. })
        ));
        assert!(GridMap::parse("type octile\nheight 2\nwidth 2\nmap\n..\n").is_err());
    }

    #[test]
    fn canonical_roundtrip() {
        let map = GridMap::random(12, 9, 20, 3);
        let text = map.to_movingai();
        assert_eq!(GridMap::parse(&text).unwrap().to_movingai(), text);
    }

    fn scen_line(sx: u32, sy: u32, gx: u32, gy: u32) -> String {
        format!("0\tm.map\t4\t4\t{sx}\t{sy}\t{gx}\t{gy}\t3.0\n")
    }

    #[test]
    fn scen_entries() {
        let map = GridMap::parse("type octile\nheight 4\nwidth 4\nmap\n....\n.@..\n....\n....\n").unwrap();
        let text = format!("version 1\n{}{}", scen_line(0, 0, 3, 3), scen_line(1, 1, 0, 0));
        assert!(parse_scen(&text, &map, 0).unwrap().is_empty());
        assert_eq!(parse_scen(&text, &map, 1).unwrap(), vec![(Cell::new(0, 0), Cell::new(3, 3))]);
        match parse_scen(&text, &map, 2) {
            Err(ScenError::Entry { entry: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let oob = format!("version 1\n{}", scen_line(9, 0, 0, 0));
        assert!(matches!(parse_scen(&oob, &map, 1), Err(ScenError::Entry { entry: 0, .. })));
        assert!(matches!(parse_scen(&text, &map, 5), Err(ScenError::Entry { .. }) | Err(ScenError::TooFew { .. })));
    }

    fn corridor_agent(len: u32) -> (GridMap, Vec<AgentSpec>) {
        let map = GridMap::empty(len + 1, 1);
        let a = AgentSpec {
            start: Cell::new(0, 0),
            goal: Cell::new(len, 0),
            heading: None,
        };
        (map, vec![a])
    }

    #[test]
    fn zero_width_deadline_is_lower_bound_times_k_d() {
        let (map, agents) = corridor_agent(10);
        let spec = DeadlineSpec { k_d: 8.0, spread: 0.0 };
        let d = generate_deadlines(&map, &agents, spec, &KinodynLimits::default(), 1).unwrap();
        assert_eq!(d, vec![2.0 * 8.0]);
    }

    #[test]
    fn deadlines_deterministic_and_bounded() {
        let map = GridMap::random(16, 16, 10, 7);
        let agents = random_agents(&map, 10, 5).unwrap();
        let limits = KinodynLimits::default();
        for k_d in [8.0, 10.0, 12.0, 14.0, 16.0] {
            let spec = DeadlineSpec::new(k_d);
            let a = generate_deadlines(&map, &agents, spec, &limits, 42).unwrap();
            let b = generate_deadlines(&map, &agents, spec, &limits, 42).unwrap();
            assert_eq!(a, b);
            for (ag, d) in agents.iter().zip(&a) {
                let lb = lower_bound_time(map.shortest_distance(ag.start, ag.goal).unwrap(), 1.0, &limits);
                assert!(*d >= lb * k_d && *d <= lb * (k_d + 3.0));
            }
        }
    }

    #[test]
    fn unreachable_goal_names_agent() {
        let map = GridMap::parse("type octile\nheight 1\nwidth 3\nmap\n.@.\n").unwrap();
        let agents = vec![AgentSpec {
            start: Cell::new(0, 0),
            goal: Cell::new(2, 0),
            heading: None,
        }];
        let err = generate_deadlines(&map, &agents, DeadlineSpec::new(8.0), &KinodynLimits::default(), 0);
        assert!(matches!(err, Err(InstanceError::Unreachable { agent: 0, .. })));
    }

    #[test]
    fn select_nearest_half() {
        let rates = [(8.0, 0.9), (10.0, 0.7), (12.0, 0.52), (14.0, 0.3), (16.0, 0.1)];
        assert_eq!(select_k_d(&rates), Ok(12.0));
        assert_eq!(select_k_d(&[(9.0, 1.0)]), Ok(9.0));
        assert!(matches!(select_k_d(&[(8.0, 1.0), (10.0, 0.0)]), Err(CalibrationError::Degenerate(_))));
    }

    #[test]
    fn instance_validation_and_text_roundtrip() {
        let map = GridMap::empty(5, 5);
        let agents = random_agents(&map, 4, 1).unwrap();
        let inst = GridInstance::with_generated_deadlines(
            map.clone(),
            agents.clone(),
            DeadlineSpec::new(10.0),
            &KinodynLimits::default(),
            9,
        )
        .unwrap();
        let back = GridInstance::from_agents_text(map.clone(), &inst.agents_to_text(), 9).unwrap();
        assert_eq!(back, inst);

        let mut dup = agents.clone();
        dup[1].start = dup[0].start;
        assert!(matches!(
            GridInstance::new(map.clone(), dup, vec![1.0; 4], 0),
            Err(InstanceError::Duplicate { what: "start", .. })
        ));
        assert!(matches!(
            GridInstance::new(map, agents, vec![1.0, 0.0, 1.0, 1.0], 0),
            Err(InstanceError::Deadline { agent: 1, .. })
        ));
    }

    #[test]
    fn random_map_stays_connected() {
        let map = GridMap::random(16, 16, 20, 11);
        assert_eq!(map.free_components(), 1);
        assert!(map.num_blocked() > 30);
    }
}
