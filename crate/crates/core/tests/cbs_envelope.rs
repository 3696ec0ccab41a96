mod common;

use mapfrd_core::cbs::{run_cbs, CbsConfig};
use mapfrd_core::estimator::SimOracle;
use mapfrd_core::grid::GridMap;
use mapfrd_core::objective::evaluate;
use mapfrd_core::penalty::PenaltyKind;

/// Small instances where every conflict-free plan up to the returned plan's
/// per-agent costs (plus one step of slack) can be enumerated.
#[test]
fn cbs_penalty_lies_within_the_feasible_envelope() {
    let oracle = SimOracle::default();
    let cfg = CbsConfig {
        time_limit: None,
        max_expansions: Some(500),
        ..CbsConfig::default()
    };
    let mut checked = 0;
    for seed in 0..24u64 {
        let side = 3 + (seed % 3) as u32;
        let map = GridMap::random(side, side, 10, seed);
        let agents = 2 + (seed % 2) as usize;
        let inst = common::instance(&map, agents, 1.5, seed);
        let Ok(r) = run_cbs(&inst, &oracle, &cfg) else { continue };
        let candidates: Vec<_> = inst
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| common::enumerate_paths(&map, i, a.start, a.goal, r.plan.paths[i].cost() + 1))
            .collect();
        for (i, c) in candidates.iter().enumerate() {
            assert!(c.contains(&r.plan.paths[i]), "seed {seed}: enumeration misses the returned path");
        }
        if candidates.iter().map(Vec::len).product::<usize>() > 20_000 {
            continue;
        }
        let plans = common::joint_plans(&candidates);
        let penalties: Vec<f64> = plans
            .iter()
            .map(|p| evaluate(&inst, p, &oracle, PenaltyKind::Linear).unwrap().avg_penalty)
            .collect();
        let lo = penalties.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = penalties.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let got = evaluate(&inst, &r.plan, &oracle, PenaltyKind::Linear).unwrap().avg_penalty;
        assert!(lo <= got && got <= hi, "seed {seed}: {got} outside [{lo}, {hi}]");
        println!("seed {seed}: {} plans, gap to best {:.3}", plans.len(), got - lo);
        checked += 1;
    }
    assert!(checked >= 12, "only {checked} instances checked");
}
