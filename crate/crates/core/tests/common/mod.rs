#![allow(dead_code)]

use mapfrd_core::grid::{random_agents, Cell, DeadlineSpec, GridInstance, GridMap};
use mapfrd_core::lns::initial_solution;
use mapfrd_core::path::{ActionPath, GridPath, Plan};
use mapfrd_core::sim::SimConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn instance(map: &GridMap, agents: usize, k_d: f64, seed: u64) -> GridInstance {
    let specs = random_agents(map, agents, seed).expect("agents fit on map");
    GridInstance::with_generated_deadlines(map.clone(), specs, DeadlineSpec::new(k_d), &SimConfig::default().limits, seed)
        .expect("valid instance")
}

/// A collision-free plan from prioritized planning, or `None` if the
/// random instance defeats it.
pub fn random_plan(map: &GridMap, agents: usize, seed: u64) -> Option<(GridInstance, Plan)> {
    let inst = instance(map, agents, 20.0, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let plan = initial_solution(&inst, &mut rng, 20).ok()?;
    Some((inst, plan))
}

pub fn action_paths(inst: &GridInstance, plan: &Plan) -> Vec<ActionPath> {
    mapfrd_core::objective::action_paths(inst, plan)
}

pub fn path(agent: usize, cells: &[(u32, u32)]) -> GridPath {
    GridPath::new(agent, cells.iter().map(|&(x, y)| Cell::new(x, y)).collect())
}

/// Every path from `start` reaching `goal` for good at timestep `cost <= max_cost`
/// (waits allowed, no trailing waits).
pub fn enumerate_paths(map: &GridMap, agent: usize, start: Cell, goal: Cell, max_cost: usize) -> Vec<GridPath> {
    let dist = map.distances_from(goal);
    let d = |c: Cell| Some(dist[map.index(c)]).filter(|&v| v != u32::MAX);
    fn go(
        map: &GridMap,
        d: &dyn Fn(Cell) -> Option<u32>,
        goal: Cell,
        budget: usize,
        cur: &mut Vec<Cell>,
        agent: usize,
        out: &mut Vec<GridPath>,
    ) {
        let here = *cur.last().unwrap();
        let steps = cur.len() - 1;
        if here == goal && (steps == 0 || cur[steps - 1] != goal) {
            out.push(GridPath::new(agent, cur.clone()));
        }
        if steps == budget {
            return;
        }
        let options = std::iter::once(here).chain(map.neighbors(here));
        for next in options.collect::<Vec<_>>() {
            match d(next) {
                Some(rem) if rem as usize <= budget - steps - 1 => {
                    cur.push(next);
                    go(map, d, goal, budget, cur, agent, out);
                    cur.pop();
                }
                _ => {}
            }
        }
    }
    let mut out = Vec::new();
    go(map, &d, goal, max_cost, &mut vec![start], agent, &mut out);
    out
}

/// All combinations of per-agent candidates that are pairwise free of
/// vertex and swap conflicts and whose dependency graph (agents facing
/// their first move) is acyclic.
pub fn joint_plans(candidates: &[Vec<GridPath>]) -> Vec<Plan> {
    use mapfrd_core::adg::Adg;
    use mapfrd_core::path::{is_conflict_free, ConflictRules};
    fn go(candidates: &[Vec<GridPath>], chosen: &mut Vec<GridPath>, out: &mut Vec<Plan>) {
        let k = chosen.len();
        if k == candidates.len() {
            let plan = Plan::new(chosen.clone());
            if Adg::build(&plan.action_paths(&vec![None; k])).is_acyclic() {
                out.push(plan);
            }
            return;
        }
        for p in &candidates[k] {
            if chosen
                .iter()
                .all(|q| is_conflict_free(&[q.clone(), p.clone()], ConflictRules::BASIC))
            {
                chosen.push(p.clone());
                go(candidates, chosen, out);
                chosen.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(candidates, &mut Vec::new(), &mut out);
    out
}
