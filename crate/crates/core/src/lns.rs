//! Large neighbourhood search minimizing deadline penalties.
//!
//! Starts from a prioritized-planning solution, then repeatedly destroys the
//! paths of a small agent subset and replans them against the rest. A
//! candidate is kept only if the estimated average penalty drops (ties go to
//! the lower sum of costs).

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::estimator::Estimator;
use crate::grid::{Cell, GridInstance, GridMap};
use crate::objective::{evaluate, Evaluation, ObjectiveError};
use crate::path::{GridPath, Plan};
use crate::penalty::PenaltyKind;
use crate::search::{plan_path, ReservationTable, WithPendingStarts};

#[derive(Debug, Error)]
pub enum LnsError {
    #[error("no collision-free initial solution after {attempts} prioritized-planning attempts")]
    Infeasible { attempts: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborhoodMode {
    /// Seeds drawn by recent deadline violations.
    FailureBased,
    /// Agent-, map- and random neighbourhoods chosen by learned weights.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Destroy {
    FailureBased,
    AgentBased,
    MapBased,
    Random,
}

impl Destroy {
    const ADAPTIVE: [Destroy; 3] = [Destroy::AgentBased, Destroy::MapBased, Destroy::Random];
}

#[derive(Debug, Clone)]
pub struct LnsConfig {
    pub penalty: PenaltyKind,
    pub neighborhood_size: usize,
    /// Softmax temperature for failure-based seeding.
    pub temperature: f64,
    pub mode: NeighborhoodMode,
    pub max_iterations: Option<u64>,
    pub time_limit: Option<Duration>,
    pub seed: u64,
    /// Prioritized-planning attempts for the initial solution.
    pub initial_attempts: usize,
    /// Decay of the adaptive weights.
    pub gamma: f64,
    pub min_weight: f64,
}

impl Default for LnsConfig {
    fn default() -> Self {
        LnsConfig {
            penalty: PenaltyKind::Linear,
            neighborhood_size: 8,
            temperature: 1.0,
            mode: NeighborhoodMode::FailureBased,
            max_iterations: None,
            time_limit: Some(Duration::from_secs(60)),
            seed: 0,
            initial_attempts: 100,
            gamma: 0.9,
            min_weight: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: u64,
    pub elapsed_s: f64,
    pub avg_penalty: f64,
}

#[derive(Debug, Clone)]
pub struct LnsResult {
    pub plan: Plan,
    pub evaluation: Evaluation,
    pub initial_penalty: f64,
    pub trace: Vec<TracePoint>,
    pub iterations: u64,
    pub accepted: u64,
    pub repair_failures: u64,
    pub violation_counts: Vec<u32>,
    pub runtime: Duration,
}

impl LnsResult {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,elapsed_s,avg_penalty\n");
        for p in &self.trace {
            let _ = writeln!(out, "{},{:.6},{:.9}", p.iteration, p.elapsed_s, p.avg_penalty);
        }
        out
    }
}

/// Prioritized planning: agents in random order, each avoiding the paths of
/// those before it and the start cells of those after it.
pub fn initial_solution(instance: &GridInstance, rng: &mut impl Rng, attempts: usize) -> Result<Plan, LnsError> {
    let mut order: Vec<usize> = (0..instance.num_agents()).collect();
    for _ in 0..attempts.max(1) {
        order.shuffle(rng);
        if let Some(paths) = replan(instance, &[], &order, None) {
            return Ok(Plan::new(paths));
        }
    }
    Err(LnsError::Infeasible {
        attempts: attempts.max(1),
    })
}

/// Plans `order` one by one around the fixed paths of every other agent.
/// Returns the full path vector, or `None` if some agent has no path.
fn replan(instance: &GridInstance, current: &[GridPath], order: &[usize], horizon: Option<u32>) -> Option<Vec<GridPath>> {
    let map = &instance.map;
    let replanning: BTreeSet<usize> = order.iter().copied().collect();
    let mut table = ReservationTable::new(map);
    for (i, p) in current.iter().enumerate() {
        if !replanning.contains(&i) {
            table.reserve_path(p);
        }
    }
    let mut paths: Vec<Option<GridPath>> = (0..instance.num_agents())
        .map(|i| (!replanning.contains(&i)).then(|| current[i].clone()))
        .collect();
    for (k, &i) in order.iter().enumerate() {
        let starts: Vec<Cell> = order[k + 1..].iter().map(|&j| instance.agents[j].start).collect();
        let obstacles = WithPendingStarts {
            base: &table,
            starts: &starts,
        };
        let a = &instance.agents[i];
        let p = plan_path(map, i, a.start, a.goal, &obstacles, horizon).ok()?;
        table.reserve_path(&p);
        paths[i] = Some(p);
    }
    Some(paths.into_iter().map(|p| p.expect("all planned")).collect())
}

/// Samples an index with probability proportional to `exp(score / tau)`.
pub fn softmax_sample(scores: &[f64], tau: f64, rng: &mut impl Rng) -> usize {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    weighted_index(&w, rng)
}

fn weighted_index(w: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = w.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, x) in w.iter().enumerate() {
        if r < *x {
            return i;
        }
        r -= x;
    }
    w.len() - 1
}

/// Counts grow by one on every late verdict and reset on an on-time one.
pub fn update_violation_counts(vc: &mut [u32], late: &[bool]) {
    for (c, &l) in vc.iter_mut().zip(late) {
        *c = if l { *c + 1 } else { 0 };
    }
}

/// Agents whose paths cross the cells of a random walk, starting from a
/// random position on `seed`'s path.
fn walk_collect(
    map: &GridMap,
    paths: &[GridPath],
    visitors: &HashMap<Cell, Vec<usize>>,
    seed: usize,
    n: usize,
    set: &mut BTreeSet<usize>,
    rng: &mut impl Rng,
) {
    let path = &paths[seed];
    let mut cell = *path.cells.choose(rng).expect("paths are non-empty");
    for _ in 0..path.cells.len() {
        if set.len() >= n {
            return;
        }
        if let Some(agents) = visitors.get(&cell) {
            for &a in agents {
                if set.len() < n {
                    set.insert(a);
                }
            }
        }
        let next: Vec<Cell> = map.neighbors(cell).collect();
        match next.choose(rng) {
            Some(&c) => cell = c,
            None => return,
        }
    }
}

fn visitors(paths: &[GridPath]) -> HashMap<Cell, Vec<usize>> {
    let mut v: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, p) in paths.iter().enumerate() {
        let mut cells = p.cells.clone();
        cells.sort();
        cells.dedup();
        for c in cells {
            v.entry(c).or_default().push(i);
        }
    }
    v
}

/// Collects up to `n` agents around `seed` by repeated walks; the remainder
/// is filled with random agents.
fn grow_from(
    map: &GridMap,
    paths: &[GridPath],
    seed: usize,
    n: usize,
    rng: &mut impl Rng,
) -> BTreeSet<usize> {
    let vis = visitors(paths);
    let mut set = BTreeSet::from([seed]);
    for _ in 0..10 {
        if set.len() >= n {
            break;
        }
        walk_collect(map, paths, &vis, seed, n, &mut set, rng);
    }
    fill_random(&mut set, paths.len(), n, rng);
    set
}

fn fill_random(set: &mut BTreeSet<usize>, m: usize, n: usize, rng: &mut impl Rng) {
    let mut rest: Vec<usize> = (0..m).filter(|a| !set.contains(a)).collect();
    rest.shuffle(rng);
    for a in rest {
        if set.len() >= n {
            break;
        }
        set.insert(a);
    }
}

/// Chooses the agents to replan. `n` is clamped to the agent count.
pub fn select_neighborhood(
    destroy: Destroy,
    instance: &GridInstance,
    paths: &[GridPath],
    violations: &[u32],
    n: usize,
    tau: f64,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let m = paths.len();
    let n = n.min(m);
    let map = &instance.map;
    let set = match destroy {
        Destroy::FailureBased => {
            let scores: Vec<f64> = violations.iter().map(|&v| v as f64).collect();
            let seed = softmax_sample(&scores, tau, rng);
            grow_from(map, paths, seed, n, rng)
        }
        Destroy::AgentBased => {
            // largest detour over the agent's own shortest path
            let delay: Vec<usize> = paths
                .iter()
                .zip(&instance.agents)
                .map(|(p, a)| {
                    let best = map.shortest_distance(a.start, a.goal).unwrap_or(0) as usize;
                    p.cost().saturating_sub(best)
                })
                .collect();
            let max = delay.iter().copied().max().unwrap_or(0);
            let worst: Vec<usize> = (0..m).filter(|&i| delay[i] == max).collect();
            let seed = *worst.choose(rng).expect("at least one agent");
            grow_from(map, paths, seed, n, rng)
        }
        Destroy::MapBased => {
            let vis = visitors(paths);
            let junctions: Vec<Cell> = map.free_cells().filter(|&c| map.degree(c) > 2).collect();
            let mut set = BTreeSet::new();
            if let Some(&start) = junctions.choose(rng) {
                // agents met in breadth-first order around a junction
                let dist = map.distances_from(start);
                let mut cells: Vec<Cell> = vis.keys().copied().collect();
                cells.sort_by_key(|&c| (dist[map.index(c)], c));
                for c in cells {
                    for &a in &vis[&c] {
                        if set.len() < n {
                            set.insert(a);
                        }
                    }
                    if set.len() >= n {
                        break;
                    }
                }
            }
            fill_random(&mut set, m, n, rng);
            set
        }
        Destroy::Random => {
            let mut set = BTreeSet::new();
            fill_random(&mut set, m, n, rng);
            set
        }
    };
    set.into_iter().collect()
}

fn better(candidate: &Evaluation, cand_soc: usize, incumbent: &Evaluation, inc_soc: usize) -> bool {
    candidate.avg_penalty < incumbent.avg_penalty
        || (candidate.avg_penalty == incumbent.avg_penalty && cand_soc < inc_soc)
}

pub fn run_lns(instance: &GridInstance, estimator: &dyn Estimator, cfg: &LnsConfig) -> Result<LnsResult, LnsError> {
    run_lns_with(instance, estimator, cfg, &mut |_| {})
}

/// Like [`run_lns`], calling `on_candidate` with every plan it evaluates:
/// the initial solution, then each repaired candidate (accepted or not).
pub fn run_lns_with(
    instance: &GridInstance,
    estimator: &dyn Estimator,
    cfg: &LnsConfig,
    on_candidate: &mut dyn FnMut(&Plan),
) -> Result<LnsResult, LnsError> {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = instance.num_agents();
    let mut plan = initial_solution(instance, &mut rng, cfg.initial_attempts)?;
    on_candidate(&plan);
    let mut eval = evaluate(instance, &plan, estimator, cfg.penalty)?;
    let mut soc = plan.sum_of_costs();
    let initial_penalty = eval.avg_penalty;
    let mut vc = vec![0u32; m];
    update_violation_counts(&mut vc, &eval.late(&instance.deadlines));
    let mut weights = [1.0f64; 3];
    let mut trace = vec![TracePoint {
        iteration: 0,
        elapsed_s: clock.elapsed().as_secs_f64(),
        avg_penalty: eval.avg_penalty,
    }];
    let (mut iterations, mut accepted, mut failures) = (0u64, 0u64, 0u64);

    let out_of_budget = |it: u64| {
        let by_iter = cfg.max_iterations.is_some_and(|max| it >= max);
        let by_time = cfg.time_limit.is_some_and(|lim| clock.elapsed() >= lim);
        by_iter || by_time || (cfg.max_iterations.is_none() && cfg.time_limit.is_none())
    };

    while m > 0 && !out_of_budget(iterations) {
        iterations += 1;
        let (destroy, slot) = match cfg.mode {
            NeighborhoodMode::FailureBased => (Destroy::FailureBased, None),
            NeighborhoodMode::Adaptive => {
                let k = weighted_index(&weights, &mut rng);
                (Destroy::ADAPTIVE[k], Some(k))
            }
        };
        let mut subset = select_neighborhood(
            destroy,
            instance,
            &plan.paths,
            &vc,
            cfg.neighborhood_size,
            cfg.temperature,
            &mut rng,
        );
        subset.shuffle(&mut rng);
        let improved = match replan(instance, &plan.paths, &subset, None) {
            None => {
                failures += 1;
                false
            }
            Some(paths) => {
                let candidate = Plan::new(paths);
                on_candidate(&candidate);
                let cand_eval = evaluate(instance, &candidate, estimator, cfg.penalty)?;
                update_violation_counts(&mut vc, &cand_eval.late(&instance.deadlines));
                let cand_soc = candidate.sum_of_costs();
                if better(&cand_eval, cand_soc, &eval, soc) {
                    plan = candidate;
                    eval = cand_eval;
                    soc = cand_soc;
                    accepted += 1;
                    true
                } else {
                    false
                }
            }
        };
        if let Some(k) = slot {
            let hit = if improved { 1.0 } else { 0.0 };
            weights[k] = (cfg.gamma * weights[k] + (1.0 - cfg.gamma) * hit).max(cfg.min_weight);
        }
        trace.push(TracePoint {
            iteration: iterations,
            elapsed_s: clock.elapsed().as_secs_f64(),
            avg_penalty: eval.avg_penalty,
        });
    }

    Ok(LnsResult {
        plan,
        evaluation: eval,
        initial_penalty,
        trace,
        iterations,
        accepted,
        repair_failures: failures,
        violation_counts: vc,
        runtime: clock.elapsed(),
    })
}
