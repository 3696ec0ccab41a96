//! Action dependency graphs built from (possibly conflicting) plans.
//!
//! Every action of every agent is a node. Type-1 edges chain the actions of
//! one agent. Type-2 edges encode passing orders: when two agents use the
//! same cell, the later agent's move into the cell depends on the earlier
//! agent's move out of it. Occupancies that overlap in time (vertex
//! conflicts) link the two entering actions in both directions, so
//! conflicting plans produce cycles.

use std::collections::{HashMap, HashSet};
use std::ops::Range;

use crate::grid::Cell;
use crate::path::{Action, ActionKind, ActionPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    Type1,
    Type2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdgNode {
    pub agent: usize,
    /// Position of the action in its agent's sequence.
    pub index: usize,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AdgEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeType,
}

#[derive(Debug, Clone)]
pub struct Adg {
    nodes: Vec<AdgNode>,
    edges: Vec<AdgEdge>,
    agent_ranges: Vec<Range<usize>>,
    starts: Vec<Cell>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

/// One stay of an agent at a cell.
#[derive(Debug, Clone, Copy)]
struct Visit {
    agent: usize,
    enter_t: u32,
    /// Inclusive; `u32::MAX` while resting at the goal.
    leave_t: u32,
    enter_node: Option<usize>,
    leave_node: Option<usize>,
}

impl Visit {
    fn overlaps(&self, other: &Visit) -> bool {
        self.enter_t <= other.leave_t && other.enter_t <= self.leave_t
    }
}

impl Adg {
    /// Builds the dependency graph of a plan. Agents are identified by
    /// their position in `plan`.
    pub fn build(plan: &[ActionPath]) -> Adg {
        let mut nodes = Vec::new();
        let mut agent_ranges = Vec::with_capacity(plan.len());
        for (agent, ap) in plan.iter().enumerate() {
            let first = nodes.len();
            nodes.extend(ap.actions.iter().enumerate().map(|(index, &action)| AdgNode {
                agent,
                index,
                action,
            }));
            agent_ranges.push(first..nodes.len());
        }

        let mut edges: Vec<AdgEdge> = Vec::new();
        for range in &agent_ranges {
            for n in range.start + 1..range.end {
                edges.push(AdgEdge {
                    src: n - 1,
                    dst: n,
                    kind: EdgeType::Type1,
                });
            }
        }

        let mut visits: HashMap<Cell, Vec<Visit>> = HashMap::new();
        for (agent, ap) in plan.iter().enumerate() {
            let base = agent_ranges[agent].start;
            let mut current = Visit {
                agent,
                enter_t: 0,
                leave_t: u32::MAX,
                enter_node: None,
                leave_node: None,
            };
            let mut cell = ap.start;
            for (i, a) in ap.actions.iter().enumerate() {
                if a.kind == ActionKind::MoveForward {
                    current.leave_t = a.planned_timestep;
                    current.leave_node = Some(base + i);
                    visits.entry(cell).or_default().push(current);
                    current = Visit {
                        agent,
                        enter_t: a.planned_timestep + 1,
                        leave_t: u32::MAX,
                        enter_node: Some(base + i),
                        leave_node: None,
                    };
                    cell = a.to;
                }
            }
            visits.entry(cell).or_default().push(current);
        }

        // proxies: a start stay is "entered" by the agent's first action and a
        // goal stay is "left" by its last one
        let enter_of = |v: &Visit| {
            v.enter_node
                .or_else(|| (!agent_ranges[v.agent].is_empty()).then(|| agent_ranges[v.agent].start))
        };
        let leave_of = |v: &Visit| {
            v.leave_node
                .or_else(|| (!agent_ranges[v.agent].is_empty()).then(|| agent_ranges[v.agent].end - 1))
        };

        let mut cells: Vec<Cell> = visits.keys().copied().collect();
        cells.sort();
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        let mut type2 = |src: Option<usize>, dst: Option<usize>, edges: &mut Vec<AdgEdge>| {
            if let (Some(src), Some(dst)) = (src, dst) {
                if src != dst && seen.insert((src, dst)) {
                    edges.push(AdgEdge {
                        src,
                        dst,
                        kind: EdgeType::Type2,
                    });
                }
            }
        };
        for cell in cells {
            let list = visits.get_mut(&cell).expect("key exists");
            if list.len() < 2 {
                continue;
            }
            list.sort_by_key(|v| (v.enter_t, v.leave_t, v.agent));
            for w in list.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if a.agent != b.agent && !a.overlaps(b) {
                    type2(leave_of(a), enter_of(b), &mut edges);
                }
            }
            for i in 0..list.len() {
                for j in i + 1..list.len() {
                    let (a, b) = (&list[i], &list[j]);
                    if a.agent != b.agent && a.overlaps(b) {
                        // simultaneous occupancy: neither entry may precede the other
                        type2(enter_of(a), enter_of(b), &mut edges);
                        type2(enter_of(b), enter_of(a), &mut edges);
                    }
                }
            }
        }

        let mut incoming = vec![Vec::new(); nodes.len()];
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            outgoing[e.src].push(i);
            incoming[e.dst].push(i);
        }
        Adg {
            nodes,
            edges,
            agent_ranges,
            starts: plan.iter().map(|a| a.start).collect(),
            incoming,
            outgoing,
        }
    }

    /// Copy with one extra Type2 dependency `src -> dst` (no-op if present).
    pub fn with_dependency(&self, src: usize, dst: usize) -> Adg {
        let mut out = self.clone();
        if src == dst || self.has_edge(src, dst) {
            return out;
        }
        let id = out.edges.len();
        out.edges.push(AdgEdge {
            src,
            dst,
            kind: EdgeType::Type2,
        });
        out.outgoing[src].push(id);
        out.incoming[dst].push(id);
        out
    }

    pub fn nodes(&self) -> &[AdgNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[AdgEdge] {
        &self.edges
    }

    pub fn num_agents(&self) -> usize {
        self.agent_ranges.len()
    }

    pub fn agent_nodes(&self, agent: usize) -> Range<usize> {
        self.agent_ranges[agent].clone()
    }

    pub fn start_cell(&self, agent: usize) -> Cell {
        self.starts[agent]
    }

    pub fn incoming(&self, node: usize) -> impl Iterator<Item = &AdgEdge> {
        self.incoming[node].iter().map(|&e| &self.edges[e])
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = &AdgEdge> {
        self.outgoing[node].iter().map(|&e| &self.edges[e])
    }

    /// Ids (indices into [`Adg::edges`]) of the edges leaving `node`.
    pub fn outgoing_ids(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    pub fn incoming_ids(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    pub fn count_edges(&self, kind: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Planned makespan in timesteps, at least 1.
    pub fn makespan(&self) -> u32 {
        self.nodes
            .iter()
            .map(|n| n.action.planned_timestep + 1)
            .max()
            .unwrap_or(1)
            .max(1)
    }

    /// Kahn's algorithm; on failure returns a concrete directed cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>, Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = (0..n).map(|i| self.incoming[i].len()).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for e in self.outgoing(v) {
                indeg[e.dst] -= 1;
                if indeg[e.dst] == 0 {
                    ready.push(e.dst);
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        // every remaining node has a remaining predecessor: walk backwards until a repeat
        let remaining: Vec<bool> = indeg.iter().map(|d| *d > 0).collect();
        let mut v = (0..n).find(|&i| remaining[i]).expect("some node is left");
        let mut pos: HashMap<usize, usize> = HashMap::new();
        let mut walk = Vec::new();
        loop {
            if let Some(&p) = pos.get(&v) {
                let mut cycle: Vec<usize> = walk[p..].to_vec();
                cycle.reverse();
                return Err(cycle);
            }
            pos.insert(v, walk.len());
            walk.push(v);
            v = self
                .incoming(v)
                .map(|e| e.src)
                .find(|&s| remaining[s])
                .expect("remaining node has a remaining predecessor");
        }
    }

    /// `None` when acyclic, otherwise a witness cycle listed in edge direction.
    pub fn find_cycle(&self) -> Option<Vec<usize>> {
        self.topological_order().err()
    }

    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.outgoing(src).any(|e| e.dst == dst)
    }
}
