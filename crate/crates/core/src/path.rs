//! Discrete paths, plans, executable action sequences and conflict detection.

use std::collections::HashMap;

use crate::grid::{Cell, Heading};

/// Time-indexed cell sequence of one agent, ending at its goal arrival.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridPath {
    pub agent: usize,
    pub cells: Vec<Cell>,
}

impl GridPath {
    pub fn new(agent: usize, cells: Vec<Cell>) -> Self {
        debug_assert!(!cells.is_empty());
        GridPath { agent, cells }
    }

    /// Number of timesteps until goal arrival (waits included).
    pub fn cost(&self) -> usize {
        self.cells.len() - 1
    }

    pub fn start(&self) -> Cell {
        self.cells[0]
    }

    pub fn goal(&self) -> Cell {
        *self.cells.last().expect("non-empty path")
    }

    /// Position at `t`, resting at the goal after arrival.
    pub fn at(&self, t: usize) -> Cell {
        self.cells[t.min(self.cells.len() - 1)]
    }

    /// Consecutive cells identical or 4-adjacent.
    pub fn is_contiguous(&self) -> bool {
        self.cells.windows(2).all(|w| w[0] == w[1] || w[0].is_adjacent(w[1]))
    }

    pub fn direction_changes(&self) -> usize {
        let mut heading: Option<Heading> = None;
        let mut changes = 0;
        for w in self.cells.windows(2) {
            if let Some(h) = Heading::between(w[0], w[1]) {
                if heading.is_some_and(|prev| prev != h) {
                    changes += 1;
                }
                heading = Some(h);
            }
        }
        changes
    }
}

/// One path per agent, indexed by agent id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Plan {
    pub paths: Vec<GridPath>,
}

impl Plan {
    pub fn new(paths: Vec<GridPath>) -> Self {
        Plan { paths }
    }

    pub fn num_agents(&self) -> usize {
        self.paths.len()
    }

    pub fn sum_of_costs(&self) -> usize {
        self.paths.iter().map(GridPath::cost).sum()
    }

    pub fn makespan(&self) -> usize {
        self.paths.iter().map(GridPath::cost).max().unwrap_or(0)
    }

    /// Expands every path; `headings[i]` is the fixed initial heading of agent `i`, if any.
    pub fn action_paths(&self, headings: &[Option<Heading>]) -> Vec<ActionPath> {
        self.paths
            .iter()
            .map(|p| expand_actions(p, headings.get(p.agent).copied().flatten()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    MoveForward,
    /// Clockwise degrees: 90, -90 or 180.
    Rotate(i32),
    Wait,
}

impl ActionKind {
    /// Class index used by the feature one-hot: move, rotate, wait.
    pub fn class(self) -> usize {
        match self {
            ActionKind::MoveForward => 0,
            ActionKind::Rotate(_) => 1,
            ActionKind::Wait => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::MoveForward => "move",
            ActionKind::Rotate(_) => "rotate",
            ActionKind::Wait => "wait",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub kind: ActionKind,
    pub from: Cell,
    pub to: Cell,
    /// Plan timestep at which the action starts.
    pub planned_timestep: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionPath {
    pub agent: usize,
    pub start: Cell,
    pub actions: Vec<Action>,
}

impl ActionPath {
    /// Cell sequence recovered from moves and waits.
    pub fn project(&self) -> Vec<Cell> {
        let mut cells = vec![self.start];
        for a in &self.actions {
            if !matches!(a.kind, ActionKind::Rotate(_)) {
                cells.push(a.to);
            }
        }
        cells
    }

    pub fn rotations(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| matches!(a.kind, ActionKind::Rotate(_)))
            .count()
    }
}

/// Turns a grid path into move/rotate/wait actions.
///
/// A rotation is emitted wherever the next move direction differs from the
/// current heading. With `initial_heading == None` the robot starts facing
/// its first move, so no leading rotation is produced.
pub fn expand_actions(path: &GridPath, initial_heading: Option<Heading>) -> ActionPath {
    let mut heading = initial_heading.or_else(|| {
        path.cells
            .windows(2)
            .find_map(|w| Heading::between(w[0], w[1]))
    });
    let mut actions = Vec::with_capacity(path.cells.len());
    for (t, w) in path.cells.windows(2).enumerate() {
        let (from, to) = (w[0], w[1]);
        let t = t as u32;
        match Heading::between(from, to) {
            None => actions.push(Action {
                kind: ActionKind::Wait,
                from,
                to,
                planned_timestep: t,
            }),
            Some(dir) => {
                let current = heading.unwrap_or(dir);
                let turn = current.rotation_to(dir);
                if turn != 0 {
                    actions.push(Action {
                        kind: ActionKind::Rotate(turn),
                        from,
                        to: from,
                        planned_timestep: t,
                    });
                }
                heading = Some(dir);
                actions.push(Action {
                    kind: ActionKind::MoveForward,
                    from,
                    to,
                    planned_timestep: t,
                });
            }
        }
    }
    ActionPath {
        agent: path.agent,
        start: path.start(),
        actions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConflictKind {
    /// Both agents at `cell` at `timestep`.
    Vertex { cell: Cell },
    /// Agents swap between `timestep` and `timestep + 1`; `from -> to` is the first agent's move.
    Edge { from: Cell, to: Cell },
    /// The second agent enters `cell` at `timestep + 1` right after the first occupied it at `timestep`.
    Following { cell: Cell },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Conflict {
    pub timestep: u32,
    pub agents: (usize, usize),
    pub kind: ConflictKind,
}

/// Which conflict classes to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConflictRules {
    pub following: bool,
}

impl ConflictRules {
    /// Vertex and swap conflicts only.
    pub const BASIC: ConflictRules = ConflictRules { following: false };
    /// Additionally forbids entering a cell the step after another agent occupied it.
    /// Plans free of these conflicts always yield acyclic dependency graphs.
    pub const STRICT: ConflictRules = ConflictRules { following: true };
}

/// All vertex and swap conflicts, earliest first.
pub fn detect_conflicts(paths: &[GridPath]) -> Vec<Conflict> {
    detect_conflicts_with(paths, ConflictRules::BASIC)
}

pub fn detect_conflicts_with(paths: &[GridPath], rules: ConflictRules) -> Vec<Conflict> {
    let mut out = Vec::new();
    scan_conflicts(paths, rules, |c| {
        out.push(c);
        false
    });
    out.sort();
    out
}

/// Earliest conflict, if any.
pub fn first_conflict(paths: &[GridPath], rules: ConflictRules) -> Option<Conflict> {
    let mut best: Option<Conflict> = None;
    scan_conflicts(paths, rules, |c| {
        if best.is_none_or(|b| c < b) {
            best = Some(c);
        }
        false
    });
    best
}

pub fn count_conflicts(paths: &[GridPath], rules: ConflictRules) -> usize {
    let mut n = 0;
    scan_conflicts(paths, rules, |_| {
        n += 1;
        false
    });
    n
}

pub fn is_conflict_free(paths: &[GridPath], rules: ConflictRules) -> bool {
    let mut found = false;
    scan_conflicts(paths, rules, |_| {
        found = true;
        true
    });
    !found
}

/// Scans timesteps in order and feeds conflicts to `sink`; stops early when it returns true.
fn scan_conflicts(paths: &[GridPath], rules: ConflictRules, mut sink: impl FnMut(Conflict) -> bool) {
    let horizon = paths.iter().map(|p| p.cells.len()).max().unwrap_or(0);
    let mut occupants: HashMap<Cell, Vec<usize>> = HashMap::new();
    let mut previous: HashMap<Cell, Vec<usize>> = HashMap::new();
    for t in 0..horizon {
        occupants.clear();
        for (i, p) in paths.iter().enumerate() {
            occupants.entry(p.at(t)).or_default().push(i);
        }
        let mut cells: Vec<(&Cell, &Vec<usize>)> = occupants.iter().collect();
        cells.sort();
        for (&cell, agents) in cells {
            for x in 0..agents.len() {
                for y in x + 1..agents.len() {
                    let c = Conflict {
                        timestep: t as u32,
                        agents: (agents[x], agents[y]),
                        kind: ConflictKind::Vertex { cell },
                    };
                    if sink(c) {
                        return;
                    }
                }
            }
            if rules.following && t > 0 {
                if let Some(prev) = previous.get(&cell) {
                    for &p in prev {
                        for &a in agents {
                            // overlaps are vertex conflicts, swaps are edge conflicts
                            if a == p
                                || paths[a].at(t - 1) == cell
                                || paths[p].at(t) == cell
                                || paths[a].at(t - 1) == paths[p].at(t)
                            {
                                continue;
                            }
                            let c = Conflict {
                                timestep: t as u32 - 1,
                                agents: (p, a),
                                kind: ConflictKind::Following { cell },
                            };
                            if sink(c) {
                                return;
                            }
                        }
                    }
                }
            }
        }
        if t > 0 {
            for i in 0..paths.len() {
                let (a0, a1) = (paths[i].at(t - 1), paths[i].at(t));
                if a0 == a1 {
                    continue;
                }
                for j in i + 1..paths.len() {
                    if paths[j].at(t - 1) == a1 && paths[j].at(t) == a0 {
                        let c = Conflict {
                            timestep: t as u32 - 1,
                            agents: (i, j),
                            kind: ConflictKind::Edge { from: a0, to: a1 },
                        };
                        if sink(c) {
                            return;
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut previous, &mut occupants);
    }
}
