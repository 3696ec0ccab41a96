mod common;

use mapfrd_core::adg::{Adg, EdgeType};
use mapfrd_core::encode::{deserialize_graph, encode, serialize_graph};
use mapfrd_core::grid::GridMap;
use mapfrd_core::path::{ActionKind, ActionPath, GridPath, Plan};
use proptest::prelude::*;

fn reachable(adg: &Adg, from: usize) -> Vec<bool> {
    let mut seen = vec![false; adg.nodes().len()];
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        for e in adg.outgoing(v) {
            if !seen[e.dst] {
                seen[e.dst] = true;
                stack.push(e.dst);
            }
        }
    }
    seen
}

/// Node ids of forward moves, with the cell they leave and enter.
fn moves(adg: &Adg) -> Vec<(usize, usize, u32, mapfrd_core::grid::Cell, mapfrd_core::grid::Cell)> {
    adg.nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.action.kind == ActionKind::MoveForward)
        .map(|(i, n)| (i, n.agent, n.action.planned_timestep, n.action.from, n.action.to))
        .collect()
}

fn check_plan(aps: &[ActionPath]) -> Result<(), TestCaseError> {
    let adg = Adg::build(aps);
    let total: usize = aps.iter().map(|a| a.actions.len()).sum();
    prop_assert_eq!(adg.nodes().len(), total);
    let chains: usize = aps.iter().map(|a| a.actions.len().saturating_sub(1)).sum();
    prop_assert_eq!(adg.count_edges(EdgeType::Type1), chains);
    prop_assert!(adg.is_acyclic());
    for e in adg.edges() {
        let (a, b) = (adg.nodes()[e.src].agent, adg.nodes()[e.dst].agent);
        match e.kind {
            EdgeType::Type1 => prop_assert!(a == b && e.dst == e.src + 1),
            EdgeType::Type2 => prop_assert!(a != b),
        }
    }
    // whenever one agent leaves a cell before another enters it, the graph orders them
    let mv = moves(&adg);
    let reach: Vec<Vec<bool>> = (0..adg.nodes().len()).map(|v| reachable(&adg, v)).collect();
    for &(x, ax, tx, from, _) in &mv {
        for &(y, ay, ty, _, to) in &mv {
            if ax != ay && from == to && tx < ty {
                prop_assert!(reach[x][y], "leave {x} (agent {ax}) must precede enter {y} (agent {ay})");
            }
        }
    }
    let g = encode(&adg);
    prop_assert_eq!(g.num_nodes(), total);
    prop_assert_eq!(g.edges.len(), adg.edges().len());
    let text = serialize_graph(&g);
    prop_assert_eq!(serialize_graph(&deserialize_graph(&text).unwrap()), text);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_plans_give_consistent_acyclic_graphs(seed in 0u64..100_000, agents in 1usize..=12, side in 6u32..=16) {
        let map = GridMap::random(side, side, 15, seed);
        let Some((inst, plan)) = common::random_plan(&map, agents, seed) else { return Ok(()) };
        check_plan(&common::action_paths(&inst, &plan))?;
    }

    #[test]
    fn injected_vertex_conflict_closes_a_cycle(seed in 0u64..100_000, agents in 2usize..=10) {
        let map = GridMap::empty(10, 10);
        let Some((_, plan)) = common::random_plan(&map, agents, seed) else { return Ok(()) };
        let Some(victim) = plan.paths.iter().find(|p| p.cells.len() >= 3) else { return Ok(()) };
        // an intruder that waits next door, then steps into the victim's cell at the same timestep
        let t = victim.cells.len() / 2;
        let target = victim.cells[t];
        let Some(side) = map.neighbors(target).find(|&n| n != victim.cells[t - 1] && n != victim.cells[t + 1]) else {
            return Ok(());
        };
        let mut cells = vec![side; t];
        cells.push(target);
        let mut paths = plan.paths.clone();
        let intruder = paths.len();
        paths.push(GridPath::new(intruder, cells));
        let aps = Plan::new(paths).action_paths(&vec![None; intruder + 1]);
        let adg = Adg::build(&aps);
        let cycle = adg.find_cycle();
        prop_assert!(cycle.is_some());
    }
}
