//! Conflict-based search ordered by estimated deadline penalty.
//!
//! The high level expands constraint-tree nodes in order of (estimated
//! average penalty, conflict count, insertion order). Every node is scored
//! through its own dependency graph, which may be cyclic while conflicts
//! remain; estimators that cannot handle cycles fall back to a constant
//! speed baseline for that node.
//!
//! Vertex and swap conflicts are split two ways as usual. A plan free of
//! them can still deadlock when agents rotate around a cycle of cells in
//! one step (each entering the cell the next one leaves); such a cycle is
//! split one way per agent, each child forbidding that agent's move.
//! Returned plans therefore always have acyclic dependency graphs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::adg::Adg;
use crate::estimator::{ConstExec, EstimateError, Estimator};
use crate::grid::GridInstance;
use crate::objective::{action_paths, score, Evaluation, ObjectiveError};
use crate::path::{count_conflicts, first_conflict, ActionKind, ActionPath, ConflictKind, ConflictRules, GridPath, Plan};
use crate::penalty::PenaltyKind;
use crate::search::{shortest_path, Constraint, NoPath};
use crate::sim::SimConfig;

#[derive(Debug, Clone)]
pub struct CbsConfig {
    pub penalty: PenaltyKind,
    pub time_limit: Option<Duration>,
    pub max_expansions: Option<u64>,
    /// Speed factor of the baseline used when the estimator rejects a cyclic graph.
    pub fallback_k_u: f64,
    pub sim: SimConfig,
}

impl Default for CbsConfig {
    fn default() -> Self {
        CbsConfig {
            penalty: PenaltyKind::Linear,
            time_limit: Some(Duration::from_secs(60)),
            max_expansions: None,
            fallback_k_u: 0.05,
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CbsStats {
    pub expanded: u64,
    pub generated: u64,
    pub runtime_s: f64,
    pub final_penalty: Option<f64>,
    /// Nodes scored by the fallback estimator.
    pub fallbacks: u64,
}

impl CbsStats {
    pub fn csv_header() -> &'static str {
        "expanded,generated,runtime_s,final_penalty"
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{},{},{:.6},", self.expanded, self.generated, self.runtime_s);
        match self.final_penalty {
            Some(p) => {
                let _ = write!(s, "{p:.9}");
            }
            None => s.push_str("nan"),
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct CbsResult {
    pub plan: Plan,
    pub evaluation: Evaluation,
    pub stats: CbsStats,
    /// The budget ran out and the best conflict-free node seen was returned.
    pub timed_out: bool,
}

#[derive(Debug, Error)]
pub enum CbsError {
    #[error(transparent)]
    NoPath(#[from] NoPath),
    #[error("budget exhausted after {} expansions without a conflict-free node", stats.expanded)]
    Timeout { stats: CbsStats },
    #[error("constraint tree exhausted after {} expansions; instance unsolvable", stats.expanded)]
    Exhausted { stats: CbsStats },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

struct CtNode {
    constraints: Vec<Constraint>,
    paths: Vec<GridPath>,
    conflicts: usize,
    cycle: Option<Vec<Constraint>>,
    evaluation: Evaluation,
    id: u64,
}

impl CtNode {
    fn key(&self) -> (f64, usize, u64) {
        (self.evaluation.avg_penalty, self.conflicts, self.id)
    }
}

impl PartialEq for CtNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CtNode {}

impl PartialOrd for CtNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CtNode {
    // reversed for the max-heap: smallest key pops first
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2))
    }
}

/// Scores possibly conflicting paths; returns the evaluation and whether the
/// fallback estimator was used.
pub fn estimate_node(
    instance: &GridInstance,
    paths: &[GridPath],
    estimator: &dyn Estimator,
    fallback: &ConstExec,
    kind: PenaltyKind,
) -> Result<(Evaluation, bool), ObjectiveError> {
    let aps = action_paths(instance, &Plan::new(paths.to_vec()));
    estimate_graph(instance, &aps, &Adg::build(&aps), estimator, fallback, kind)
}

fn estimate_graph(
    instance: &GridInstance,
    aps: &[ActionPath],
    adg: &Adg,
    estimator: &dyn Estimator,
    fallback: &ConstExec,
    kind: PenaltyKind,
) -> Result<(Evaluation, bool), ObjectiveError> {
    let (estimates, fell_back) = match estimator.estimate(aps, adg) {
        Ok(e) => (e, false),
        Err(EstimateError::Cyclic { .. }) => (fallback.estimate(aps, adg)?, true),
        Err(e) => return Err(e.into()),
    };
    Ok((score(estimates, &instance.deadlines, kind)?, fell_back))
}

/// The moves `(agent, from, to, timestep)` of a rotation cycle in a plan
/// without vertex or swap conflicts, if its dependency graph has one.
fn rotation_cycle(adg: &Adg) -> Option<Vec<Constraint>> {
    let cycle = adg.find_cycle()?;
    let mut moves: Vec<Constraint> = cycle
        .iter()
        .map(|&n| adg.nodes()[n])
        .filter(|n| n.action.kind == ActionKind::MoveForward)
        .map(|n| Constraint::edge(n.agent, n.action.from, n.action.to, n.action.planned_timestep))
        .collect();
    moves.sort_by_key(|c| c.agent);
    moves.dedup_by_key(|c| c.agent);
    Some(moves)
}

struct Scored {
    constraints: Vec<Constraint>,
    paths: Vec<GridPath>,
    conflicts: usize,
    /// Branches for a rotation cycle, when that is the only conflict left.
    cycle: Option<Vec<Constraint>>,
    evaluation: Evaluation,
    fell_back: bool,
}

fn score_node(
    instance: &GridInstance,
    constraints: Vec<Constraint>,
    paths: Vec<GridPath>,
    estimator: &dyn Estimator,
    fallback: &ConstExec,
    kind: PenaltyKind,
) -> Result<Scored, ObjectiveError> {
    let aps = action_paths(instance, &Plan::new(paths.clone()));
    let adg = Adg::build(&aps);
    let (evaluation, fell_back) = estimate_graph(instance, &aps, &adg, estimator, fallback, kind)?;
    let mut conflicts = count_conflicts(&paths, ConflictRules::BASIC);
    let cycle = if conflicts == 0 { rotation_cycle(&adg) } else { None };
    conflicts += cycle.is_some() as usize;
    Ok(Scored {
        conflicts,
        cycle,
        constraints,
        paths,
        evaluation,
        fell_back,
    })
}

/// Child of `parent` with one more constraint; `None` if the constrained
/// agent has no path left.
fn child(
    instance: &GridInstance,
    parent: &CtNode,
    c: Constraint,
    estimator: &dyn Estimator,
    fallback: &ConstExec,
    kind: PenaltyKind,
) -> Option<Result<Scored, ObjectiveError>> {
    let agent = c.agent;
    let mut constraints = parent.constraints.clone();
    constraints.push(c);
    let spec = &instance.agents[agent];
    let path = shortest_path(&instance.map, agent, spec.start, spec.goal, &constraints, None).ok()?;
    let mut paths = parent.paths.clone();
    paths[agent] = path;
    Some(score_node(instance, constraints, paths, estimator, fallback, kind))
}

pub fn run_cbs(instance: &GridInstance, estimator: &dyn Estimator, cfg: &CbsConfig) -> Result<CbsResult, CbsError> {
    let clock = Instant::now();
    let fallback = ConstExec::new(cfg.fallback_k_u, cfg.sim);
    let mut stats = CbsStats::default();
    let mut next_id = 0u64;
    let mut best_free: Option<(f64, u64, Vec<GridPath>, Evaluation)> = None;

    let mut admit = |s: Scored, stats: &mut CbsStats, best: &mut Option<(f64, u64, Vec<GridPath>, Evaluation)>| {
        stats.generated += 1;
        stats.fallbacks += s.fell_back as u64;
        let id = next_id;
        next_id += 1;
        let p = s.evaluation.avg_penalty;
        if s.conflicts == 0 && best.as_ref().is_none_or(|b| p < b.0) {
            *best = Some((p, id, s.paths.clone(), s.evaluation.clone()));
        }
        CtNode {
            constraints: s.constraints,
            paths: s.paths,
            conflicts: s.conflicts,
            cycle: s.cycle,
            evaluation: s.evaluation,
            id,
        }
    };

    let root_paths = instance
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| shortest_path(&instance.map, i, a.start, a.goal, &[], None))
        .collect::<Result<Vec<_>, _>>()?;
    let root = score_node(instance, Vec::new(), root_paths, estimator, &fallback, cfg.penalty)?;
    let mut open = BinaryHeap::from([admit(root, &mut stats, &mut best_free)]);

    let out_of_budget = |stats: &CbsStats| {
        cfg.time_limit.is_some_and(|l| clock.elapsed() >= l) || cfg.max_expansions.is_some_and(|m| stats.expanded >= m)
    };

    while let Some(node) = open.pop() {
        if out_of_budget(&stats) {
            break;
        }
        stats.expanded += 1;
        let branches: Vec<Constraint> = match first_conflict(&node.paths, ConflictRules::BASIC) {
            Some(conflict) => {
                let (a, b) = conflict.agents;
                let t = conflict.timestep;
                match conflict.kind {
                    ConflictKind::Vertex { cell } => vec![Constraint::vertex(a, cell, t), Constraint::vertex(b, cell, t)],
                    ConflictKind::Edge { from, to } => vec![Constraint::edge(a, from, to, t), Constraint::edge(b, to, from, t)],
                    ConflictKind::Following { cell } => {
                        vec![Constraint::vertex(a, cell, t), Constraint::vertex(b, cell, t + 1)]
                    }
                }
            }
            None => match &node.cycle {
                Some(moves) => moves.clone(),
                None => {
                    stats.runtime_s = clock.elapsed().as_secs_f64();
                    stats.final_penalty = Some(node.evaluation.avg_penalty);
                    log::debug!("cbs solved: {} expanded, {} generated", stats.expanded, stats.generated);
                    return Ok(CbsResult {
                        plan: Plan::new(node.paths),
                        evaluation: node.evaluation,
                        stats,
                        timed_out: false,
                    });
                }
            },
        };
        let children = crate::parallel::par_map(&branches, |&c| child(instance, &node, c, estimator, &fallback, cfg.penalty));
        for scored in children.into_iter().flatten() {
            open.push(admit(scored?, &mut stats, &mut best_free));
        }
    }

    stats.runtime_s = clock.elapsed().as_secs_f64();
    let exhausted = open.is_empty() && !out_of_budget(&stats);
    match best_free {
        Some((penalty, _, paths, evaluation)) => {
            stats.final_penalty = Some(penalty);
            log::debug!("cbs budget exhausted; returning best conflict-free node");
            Ok(CbsResult {
                plan: Plan::new(paths),
                evaluation,
                stats,
                timed_out: true,
            })
        }
        None if exhausted => Err(CbsError::Exhausted { stats }),
        None => Err(CbsError::Timeout { stats }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::SimOracle;
    use crate::grid::{AgentSpec, Cell, GridMap};
    use crate::objective::evaluate;
    use crate::path::{detect_conflicts, is_conflict_free};
    use crate::sim::solo_time;

    fn agents(pairs: &[((u32, u32), (u32, u32))]) -> Vec<AgentSpec> {
        pairs
            .iter()
            .map(|&((sx, sy), (gx, gy))| AgentSpec {
                start: Cell::new(sx, sy),
                goal: Cell::new(gx, gy),
                heading: None,
            })
            .collect()
    }

    fn instance(map: GridMap, pairs: &[((u32, u32), (u32, u32))], deadline: f64) -> GridInstance {
        GridInstance::new(map, agents(pairs), vec![deadline; pairs.len()], 0).unwrap()
    }

    fn path(agent: usize, cells: &[(u32, u32)]) -> GridPath {
        GridPath::new(agent, cells.iter().map(|&(x, y)| Cell::new(x, y)).collect())
    }

    fn acyclic(inst: &GridInstance, plan: &Plan) -> bool {
        Adg::build(&action_paths(inst, plan)).is_acyclic()
    }

    #[test]
    fn conflict_free_root_is_returned() {
        let inst = instance(GridMap::empty(5, 5), &[((0, 0), (4, 0)), ((0, 4), (4, 4))], 100.0);
        let r = run_cbs(&inst, &SimOracle::default(), &CbsConfig::default()).unwrap();
        assert_eq!(r.stats.expanded, 1);
        assert_eq!(r.stats.generated, 1);
        assert_eq!(r.stats.fallbacks, 0);
        assert!(!r.timed_out);
        let direct = evaluate(&inst, &r.plan, &SimOracle::default(), PenaltyKind::Linear).unwrap();
        assert_eq!(direct, r.evaluation);
    }

    #[test]
    fn corridor_swap() {
        let map = GridMap::parse("type octile\nheight 2\nwidth 5\nmap\n.....\n.....\n").unwrap();
        let inst = instance(map, &[((0, 0), (4, 0)), ((4, 0), (0, 0))], 1.0);
        let r = run_cbs(&inst, &SimOracle::default(), &CbsConfig::default()).unwrap();
        assert!(r.stats.expanded > 1);
        assert!(!r.timed_out);
        assert!(detect_conflicts(&r.plan.paths).is_empty());
        assert!(acyclic(&inst, &r.plan));
        // the root swap makes its graph cyclic, which the oracle rejects
        assert!(r.stats.fallbacks > 0);
    }

    /// Four agents in the corner of a 3x3 map each step into the cell the
    /// next one leaves: no vertex or swap conflict, but a deadlock.
    #[test]
    fn rotation_cycle_is_split() {
        let inst = instance(
            GridMap::empty(3, 3),
            &[((0, 0), (1, 0)), ((1, 0), (1, 1)), ((1, 1), (0, 1)), ((0, 1), (0, 0))],
            100.0,
        );
        let root: Vec<GridPath> = inst
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| path(i, &[(a.start.x, a.start.y), (a.goal.x, a.goal.y)]))
            .collect();
        assert!(detect_conflicts(&root).is_empty());
        assert!(!acyclic(&inst, &Plan::new(root)));

        let r = run_cbs(&inst, &SimOracle::default(), &CbsConfig::default()).unwrap();
        assert!(r.stats.expanded > 1);
        assert!(detect_conflicts(&r.plan.paths).is_empty());
        assert!(acyclic(&inst, &r.plan));
    }

    #[test]
    fn vertex_conflict_node_takes_fallback() {
        let inst = instance(GridMap::empty(3, 3), &[((0, 1), (2, 1)), ((1, 0), (1, 2))], 10.0);
        let paths = vec![path(0, &[(0, 1), (1, 1), (2, 1)]), path(1, &[(1, 0), (1, 1), (1, 2)])];
        let fallback = ConstExec::new(0.05, SimConfig::default());
        let (eval, fell_back) =
            estimate_node(&inst, &paths, &SimOracle::default(), &fallback, PenaltyKind::Linear).unwrap();
        assert!(fell_back);
        let plan = Plan::new(paths.clone());
        let want = evaluate(&inst, &plan, &fallback, PenaltyKind::Linear).unwrap();
        assert_eq!(eval, want);
        let (_, fell_back) = estimate_node(&inst, &paths, &fallback, &fallback, PenaltyKind::Linear).unwrap();
        assert!(!fell_back);
    }

    #[test]
    fn expansion_budget_without_solution_is_reported() {
        let map = GridMap::parse("type octile\nheight 2\nwidth 5\nmap\n.....\n.....\n").unwrap();
        let inst = instance(map, &[((0, 0), (4, 0)), ((4, 0), (0, 0))], 1.0);
        let cfg = CbsConfig {
            max_expansions: Some(1),
            ..CbsConfig::default()
        };
        assert!(matches!(run_cbs(&inst, &SimOracle::default(), &cfg), Err(CbsError::Timeout { .. })));
    }

    #[test]
    fn unsolvable_corridor_exhausts_tree() {
        let map = GridMap::parse("type octile\nheight 1\nwidth 3\nmap\n...\n").unwrap();
        let inst = instance(map, &[((0, 0), (2, 0)), ((2, 0), (0, 0))], 1.0);
        let fast = ConstExec::new(0.05, SimConfig::default());
        let cfg = CbsConfig {
            max_expansions: Some(2_000),
            ..CbsConfig::default()
        };
        // every branch keeps the agents in one lane, so the tree never closes
        assert!(run_cbs(&inst, &fast, &cfg).is_err());
    }

    /// Two equal-length routes for agent 0: along the top (one turn) or
    /// through the lower-left pocket (three turns). Agent 1 crosses the top
    /// route exactly when agent 0 would pass.
    #[test]
    fn fewer_turns_win_when_the_turning_route_is_late() {
        let map = GridMap::parse(
            "type octile\nheight 4\nwidth 8\nmap\n....@@@@\n.@......\n..@.@@@@\n@...@@@@\n",
        )
        .unwrap();
        let cfg = SimConfig::default();
        let top = path(0, &[(0, 0), (1, 0), (2, 0), (3, 0), (3, 1), (3, 2), (3, 3)]);
        let bottom = path(0, &[(0, 0), (0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (3, 3)]);
        let crossing = path(1, &[(7, 1), (6, 1), (5, 1), (4, 1), (3, 1), (2, 1)]);
        let solo = |p: &GridPath| solo_time(&crate::path::expand_actions(p, None), &cfg);
        assert!(solo(&top) < solo(&bottom));
        let deadline = 0.5 * (solo(&top) + solo(&bottom));
        let inst = GridInstance::new(
            map,
            agents(&[((0, 0), (3, 3)), ((7, 1), (2, 1))]),
            vec![deadline, 1000.0],
            0,
        )
        .unwrap();

        let oracle = SimOracle::default();
        let r = run_cbs(&inst, &oracle, &CbsConfig::default()).unwrap();
        assert!(detect_conflicts(&r.plan.paths).is_empty());
        assert!(acyclic(&inst, &r.plan));
        assert_eq!(r.plan.paths[0], top, "agent 0 keeps the one-turn route");

        // derived check: the turning alternative is conflict-free but misses the deadline
        let alternative = Plan::new(vec![bottom, crossing]);
        assert!(is_conflict_free(&alternative.paths, ConflictRules::STRICT));
        let alt = evaluate(&inst, &alternative, &oracle, PenaltyKind::Linear).unwrap();
        let got = evaluate(&inst, &r.plan, &oracle, PenaltyKind::Linear).unwrap();
        assert!(alt.late(&inst.deadlines)[0]);
        assert!(!got.late(&inst.deadlines)[0]);
        assert!(got.avg_penalty < alt.avg_penalty);
    }

    #[test]
    fn stats_row() {
        let s = CbsStats {
            expanded: 3,
            generated: 5,
            runtime_s: 0.5,
            final_penalty: Some(1.25),
            fallbacks: 1,
        };
        assert_eq!(CbsStats::csv_header(), "expanded,generated,runtime_s,final_penalty");
        assert_eq!(s.csv_row(), "3,5,0.500000,1.250000000");
    }
}
