//! Space-time A* for a single agent under constraints or reservations.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use thiserror::Error;

use crate::grid::{Cell, GridMap, Heading};
use crate::path::GridPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintKind {
    /// The agent may not be at `cell` at the timestep.
    Vertex { cell: Cell },
    /// The agent may not move `from -> to` departing at the timestep.
    Edge { from: Cell, to: Cell },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub agent: usize,
    pub kind: ConstraintKind,
    pub timestep: u32,
}

impl Constraint {
    pub fn vertex(agent: usize, cell: Cell, timestep: u32) -> Self {
        Constraint {
            agent,
            kind: ConstraintKind::Vertex { cell },
            timestep,
        }
    }

    pub fn edge(agent: usize, from: Cell, to: Cell, timestep: u32) -> Self {
        Constraint {
            agent,
            kind: ConstraintKind::Edge { from, to },
            timestep,
        }
    }
}

/// Time-dependent obstacles seen by the low-level search.
pub trait Obstacles {
    fn vertex_blocked(&self, cell: Cell, t: u32) -> bool;
    /// Move `from -> to` departing at `t`.
    fn edge_blocked(&self, from: Cell, to: Cell, t: u32) -> bool;
    /// Earliest arrival time from which the agent may rest at `cell` forever;
    /// `u32::MAX` if never.
    fn earliest_rest(&self, cell: Cell) -> u32;
    /// After this timestep blocking no longer depends on time.
    fn last_constrained_time(&self) -> u32;
}

/// CBS constraints of one agent.
#[derive(Debug, Default, Clone)]
pub struct ConstraintTable {
    vertex: HashSet<(Cell, u32)>,
    edge: HashSet<(Cell, Cell, u32)>,
    rest: HashMap<Cell, u32>,
    last: u32,
}

impl ConstraintTable {
    pub fn new<'a>(agent: usize, constraints: impl IntoIterator<Item = &'a Constraint>) -> Self {
        let mut table = ConstraintTable::default();
        for c in constraints.into_iter().filter(|c| c.agent == agent) {
            table.last = table.last.max(c.timestep + 1);
            match c.kind {
                ConstraintKind::Vertex { cell } => {
                    table.vertex.insert((cell, c.timestep));
                    let r = table.rest.entry(cell).or_insert(0);
                    *r = (*r).max(c.timestep + 1);
                }
                ConstraintKind::Edge { from, to } => {
                    table.edge.insert((from, to, c.timestep));
                }
            }
        }
        table
    }
}

impl Obstacles for ConstraintTable {
    fn vertex_blocked(&self, cell: Cell, t: u32) -> bool {
        self.vertex.contains(&(cell, t))
    }

    fn edge_blocked(&self, from: Cell, to: Cell, t: u32) -> bool {
        self.edge.contains(&(from, to, t))
    }

    fn earliest_rest(&self, cell: Cell) -> u32 {
        self.rest.get(&cell).copied().unwrap_or(0)
    }

    fn last_constrained_time(&self) -> u32 {
        self.last
    }
}

/// Paths of already planned agents, enforcing the strict rule: two agents
/// may occupy the same cell only at timesteps at least two apart. This
/// excludes vertex, swap and following conflicts at once.
#[derive(Debug, Clone)]
pub struct ReservationTable {
    width: u32,
    occupied: HashSet<(u32, u32)>,
    last_occupied: HashMap<u32, u32>,
    parked: HashMap<u32, u32>,
    last: u32,
}

impl ReservationTable {
    pub fn new(map: &GridMap) -> Self {
        ReservationTable {
            width: map.width(),
            occupied: HashSet::new(),
            last_occupied: HashMap::new(),
            parked: HashMap::new(),
            last: 0,
        }
    }

    fn key(&self, cell: Cell) -> u32 {
        cell.y * self.width + cell.x
    }

    /// Reserves a path, including resting at its goal forever.
    pub fn reserve_path(&mut self, path: &GridPath) {
        let arrival = path.cost() as u32;
        for (t, &c) in path.cells.iter().enumerate().take(path.cells.len() - 1) {
            self.reserve_cell(c, t as u32);
        }
        let k = self.key(path.goal());
        let p = self.parked.entry(k).or_insert(arrival);
        *p = (*p).min(arrival);
        self.last = self.last.max(arrival + 1);
    }

    /// Reserves a single cell at one timestep (used for start cells of unplanned agents).
    pub fn reserve_cell(&mut self, cell: Cell, t: u32) {
        let k = self.key(cell);
        self.occupied.insert((k, t));
        let l = self.last_occupied.entry(k).or_insert(t);
        *l = (*l).max(t);
        self.last = self.last.max(t + 1);
    }

    fn occupied_at(&self, k: u32, t: u32) -> bool {
        self.occupied.contains(&(k, t)) || self.parked.get(&k).is_some_and(|&p| t >= p)
    }
}

impl Obstacles for ReservationTable {
    fn vertex_blocked(&self, cell: Cell, t: u32) -> bool {
        let k = self.key(cell);
        (t > 0 && self.occupied_at(k, t - 1)) || self.occupied_at(k, t) || self.occupied_at(k, t + 1)
    }

    fn edge_blocked(&self, _from: Cell, _to: Cell, _t: u32) -> bool {
        // swaps imply a blocked vertex under the spacing rule
        false
    }

    fn earliest_rest(&self, cell: Cell) -> u32 {
        let k = self.key(cell);
        if self.parked.contains_key(&k) {
            return u32::MAX;
        }
        self.last_occupied.get(&k).map_or(0, |&l| l + 2)
    }

    fn last_constrained_time(&self) -> u32 {
        self.last
    }
}

/// A reservation table plus start cells of agents that are not planned
/// yet; each such cell is taken at timestep 0.
pub struct WithPendingStarts<'a> {
    pub base: &'a ReservationTable,
    pub starts: &'a [Cell],
}

impl Obstacles for WithPendingStarts<'_> {
    fn vertex_blocked(&self, cell: Cell, t: u32) -> bool {
        self.base.vertex_blocked(cell, t) || (t <= 1 && self.starts.contains(&cell))
    }

    fn edge_blocked(&self, _from: Cell, _to: Cell, _t: u32) -> bool {
        false
    }

    fn earliest_rest(&self, cell: Cell) -> u32 {
        let base = self.base.earliest_rest(cell);
        if self.starts.contains(&cell) {
            base.max(2)
        } else {
            base
        }
    }

    fn last_constrained_time(&self) -> u32 {
        self.base.last_constrained_time().max(1)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no path for agent {agent} from {start} to {goal} within horizon {horizon}")]
pub struct NoPath {
    pub agent: usize,
    pub start: Cell,
    pub goal: Cell,
    pub horizon: u32,
}

#[derive(Clone, Copy)]
struct Node {
    cell: Cell,
    t: u32,
    heading: Option<Heading>,
    turns: u32,
    parent: u32,
}

/// Shortest path under CBS-style constraints (only those naming `agent` apply).
///
/// `horizon` defaults to `width * height` past the last constrained timestep.
pub fn shortest_path(
    map: &GridMap,
    agent: usize,
    start: Cell,
    goal: Cell,
    constraints: &[Constraint],
    horizon: Option<u32>,
) -> Result<GridPath, NoPath> {
    let table = ConstraintTable::new(agent, constraints);
    plan_path(map, agent, start, goal, &table, horizon)
}

/// Minimum-timestep path avoiding `obstacles`; ties are broken by fewer
/// direction changes, then by smaller cell index.
pub fn plan_path<O: Obstacles + ?Sized>(
    map: &GridMap,
    agent: usize,
    start: Cell,
    goal: Cell,
    obstacles: &O,
    horizon: Option<u32>,
) -> Result<GridPath, NoPath> {
    let last = obstacles.last_constrained_time();
    let horizon = horizon.unwrap_or(map.num_cells() as u32 + last);
    let fail = NoPath {
        agent,
        start,
        goal,
        horizon,
    };
    if map.is_blocked(start) || map.is_blocked(goal) || obstacles.vertex_blocked(start, 0) {
        return Err(fail);
    }
    let rest = obstacles.earliest_rest(goal);
    if rest == u32::MAX {
        return Err(fail);
    }
    // beyond `stable` the search space is time-invariant, so states collapse
    let stable = last + 2;
    let heading_key = |h: Option<Heading>| h.map_or(4u8, Heading::index);

    let mut nodes: Vec<Node> = vec![Node {
        cell: start,
        t: 0,
        heading: None,
        turns: 0,
        parent: u32::MAX,
    }];
    let mut open = BinaryHeap::new();
    let mut closed: HashSet<(Cell, u32, u8)> = HashSet::new();
    let h0 = start.manhattan(goal);
    open.push(Reverse((h0, 0u32, map.index(start), 0u32)));

    while let Some(Reverse((_, _, _, id))) = open.pop() {
        let node = nodes[id as usize];
        if !closed.insert((node.cell, node.t.min(stable), heading_key(node.heading))) {
            continue;
        }
        if node.cell == goal && node.t >= rest {
            let mut cells = Vec::with_capacity(node.t as usize + 1);
            let mut cur = id;
            while cur != u32::MAX {
                cells.push(nodes[cur as usize].cell);
                cur = nodes[cur as usize].parent;
            }
            cells.reverse();
            return Ok(GridPath::new(agent, cells));
        }
        if node.t >= horizon {
            continue;
        }
        let t = node.t + 1;
        let moves = std::iter::once(node.cell).chain(map.neighbors(node.cell));
        for next in moves {
            if obstacles.vertex_blocked(next, t) {
                continue;
            }
            if next != node.cell && obstacles.edge_blocked(node.cell, next, node.t) {
                continue;
            }
            let dir = Heading::between(node.cell, next);
            let (heading, turns) = match (dir, node.heading) {
                (None, h) => (h, node.turns),
                (Some(d), Some(h)) if d != h => (Some(d), node.turns + 1),
                (Some(d), _) => (Some(d), node.turns),
            };
            if closed.contains(&(next, t.min(stable), heading_key(heading))) {
                continue;
            }
            let nid = nodes.len() as u32;
            nodes.push(Node {
                cell: next,
                t,
                heading,
                turns,
                parent: id,
            });
            let f = t + next.manhattan(goal);
            open.push(Reverse((f, turns, map.index(next), nid)));
        }
    }
    Err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{detect_conflicts_with, ConflictRules};
    use proptest::prelude::*;
    use std::collections::VecDeque;

    /// Breadth-first search over (cell, time) states; returns the arrival time.
    fn bfs_oracle(map: &GridMap, start: Cell, goal: Cell, constraints: &[Constraint], horizon: u32) -> Option<u32> {
        let table = ConstraintTable::new(0, constraints);
        let rest = constraints
            .iter()
            .filter_map(|c| match c.kind {
                ConstraintKind::Vertex { cell } if cell == goal => Some(c.timestep + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([(start, 0u32)]);
        if table.vertex_blocked(start, 0) {
            return None;
        }
        seen.insert((start, 0));
        while let Some((c, t)) = queue.pop_front() {
            if c == goal && t >= rest {
                return Some(t);
            }
            if t >= horizon {
                continue;
            }
            let mut nexts = vec![c];
            nexts.extend(map.neighbors(c));
            for n in nexts {
                if table.vertex_blocked(n, t + 1) || (n != c && table.edge_blocked(c, n, t)) {
                    continue;
                }
                if seen.insert((n, t + 1)) {
                    queue.push_back((n, t + 1));
                }
            }
        }
        None
    }

    fn corridor() -> GridMap {
        GridMap::empty(3, 1)
    }

    #[test]
    fn start_is_goal() {
        let p = shortest_path(&corridor(), 0, Cell::new(1, 0), Cell::new(1, 0), &[], None).unwrap();
        assert_eq!(p.cells.len(), 1);
    }

    #[test]
    fn corridor_two_moves() {
        let p = shortest_path(&corridor(), 0, Cell::new(0, 0), Cell::new(2, 0), &[], None).unwrap();
        assert_eq!(p.cost(), 2);
    }

    #[test]
    fn vertex_constraint_forces_wait() {
        let c = [Constraint::vertex(0, Cell::new(1, 0), 1)];
        let p = shortest_path(&corridor(), 0, Cell::new(0, 0), Cell::new(2, 0), &c, None).unwrap();
        assert_eq!(p.cost(), 3);
        assert_eq!(p.cells[1], Cell::new(0, 0));
        assert_eq!(bfs_oracle(&corridor(), Cell::new(0, 0), Cell::new(2, 0), &c, 9), Some(3));
    }

    #[test]
    fn late_goal_constraint_delays_resting() {
        let c = [Constraint::vertex(0, Cell::new(2, 0), 5)];
        let p = shortest_path(&corridor(), 0, Cell::new(0, 0), Cell::new(2, 0), &c, None).unwrap();
        assert_eq!(p.cost(), 6);
    }

    #[test]
    fn infeasible_is_an_error() {
        let map = GridMap::parse("type octile\nheight 1\nwidth 3\nmap\n.@.\n").unwrap();
        assert!(shortest_path(&map, 0, Cell::new(0, 0), Cell::new(2, 0), &[], Some(10)).is_err());
        let c = [Constraint::vertex(0, Cell::new(1, 0), 0)];
        assert!(shortest_path(&corridor(), 0, Cell::new(1, 0), Cell::new(2, 0), &c, None).is_err());
    }

    #[test]
    fn prefers_fewer_turns() {
        let map = GridMap::empty(4, 4);
        let p = shortest_path(&map, 0, Cell::new(0, 0), Cell::new(3, 3), &[], None).unwrap();
        assert_eq!(p.cost(), 6);
        assert_eq!(p.direction_changes(), 1);
    }

    #[test]
    fn reservations_keep_strict_spacing() {
        let map = GridMap::empty(5, 3);
        let first = shortest_path(&map, 0, Cell::new(0, 1), Cell::new(4, 1), &[], None).unwrap();
        let mut table = ReservationTable::new(&map);
        table.reserve_path(&first);
        let second = plan_path(&map, 1, Cell::new(4, 0), Cell::new(0, 2), &table, None).unwrap();
        assert!(detect_conflicts_with(&[first, second], ConflictRules::STRICT).is_empty());
    }

    #[test]
    fn parked_goal_is_impassable_forever() {
        let map = GridMap::empty(3, 1);
        let mut table = ReservationTable::new(&map);
        table.reserve_path(&GridPath::new(0, vec![Cell::new(1, 0)]));
        assert!(plan_path(&map, 1, Cell::new(0, 0), Cell::new(2, 0), &table, None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn matches_bfs_oracle(
            w in 2u32..=8, h in 1u32..=8, seed in 0u64..1000,
            raw in proptest::collection::vec((0u32..64, 0u32..12, any::<bool>(), 0u8..4), 0..=6),
        ) {
            let map = GridMap::random(w, h, 15, seed);
            let free: Vec<Cell> = map.free_cells().collect();
            prop_assume!(free.len() >= 2);
            let start = free[seed as usize % free.len()];
            let goal = free[(seed as usize * 7 + 3) % free.len()];
            let constraints: Vec<Constraint> = raw.iter().filter_map(|&(ci, t, vertex, d)| {
                let cell = free[ci as usize % free.len()];
                if vertex {
                    Some(Constraint::vertex(0, cell, t))
                } else {
                    let to = map.neighbors(cell).nth(d as usize % map.degree(cell).max(1))?;
                    Some(Constraint::edge(0, cell, to, t))
                }
            }).collect();
            let horizon = 40;
            let got = shortest_path(&map, 0, start, goal, &constraints, Some(horizon));
            let want = bfs_oracle(&map, start, goal, &constraints, horizon);
            match (got, want) {
                (Ok(p), Some(t)) => {
                    prop_assert_eq!(p.cost() as u32, t);
                    prop_assert!(p.is_contiguous());
                    let table = ConstraintTable::new(0, &constraints);
                    for (t, w) in p.cells.windows(2).enumerate() {
                        prop_assert!(!table.vertex_blocked(w[1], t as u32 + 1));
                        prop_assert!(!table.edge_blocked(w[0], w[1], t as u32));
                    }
                }
                (Err(_), None) => {}
                (g, w) => prop_assert!(false, "search {:?} vs oracle {:?}", g.map(|p| p.cost()), w),
            }
        }
    }
}
