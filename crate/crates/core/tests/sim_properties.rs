mod common;

use mapfrd_core::adg::Adg;
use mapfrd_core::grid::{Cell, GridMap};
use mapfrd_core::path::{expand_actions, GridPath};
use mapfrd_core::sim::{label_dataset, nominal_durations, simulate, simulate_fixed, NoiseModel, SimConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every monotone path from (0,0) to (w-1,h-1): all have length w+h-2.
fn staircases(w: u32, h: u32) -> Vec<GridPath> {
    fn go(x: u32, y: u32, w: u32, h: u32, cur: &mut Vec<Cell>, out: &mut Vec<GridPath>) {
        if x == w - 1 && y == h - 1 {
            out.push(GridPath::new(0, cur.clone()));
            return;
        }
        for (nx, ny) in [(x + 1, y), (x, y + 1)] {
            if nx < w && ny < h {
                cur.push(Cell::new(nx, ny));
                go(nx, ny, w, h, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(0, 0, w, h, &mut vec![Cell::new(0, 0)], &mut out);
    out
}

#[test]
fn more_turns_take_strictly_longer_on_equal_length_paths() {
    let cfg = SimConfig::default();
    for w in 1..=6 {
        for h in 1..=6 {
            let timed: Vec<(usize, f64)> = staircases(w, h)
                .iter()
                .map(|p| {
                    let ap = expand_actions(p, None);
                    let out = simulate(&Adg::build(&[ap.clone()]), &cfg, &NoiseModel::ideal()).unwrap();
                    (ap.rotations(), out.arrival[0])
                })
                .collect();
            for a in &timed {
                for b in &timed {
                    if a.0 < b.0 {
                        assert!(a.1 < b.1, "{w}x{h}: {a:?} vs {b:?}");
                    }
                }
            }
        }
    }
}

/// Longest-path oracle by repeated relaxation, independent of any ordering.
fn relaxed_arrivals(adg: &Adg, dur: &[f64], lat: &[f64]) -> Vec<f64> {
    let n = adg.nodes().len();
    let mut end: Vec<f64> = dur.to_vec();
    for _ in 0..=n {
        let mut changed = false;
        for v in 0..n {
            let s = adg
                .edges()
                .iter()
                .zip(lat)
                .filter(|(e, _)| e.dst == v)
                .map(|(e, l)| end[e.src] + l)
                .fold(0.0, f64::max);
            if s + dur[v] > end[v] {
                end[v] = s + dur[v];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..adg.num_agents())
        .map(|a| adg.agent_nodes(a).last().map_or(0.0, |i| end[i]))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn extra_dependency_never_speeds_anyone_up(seed in 0u64..10_000, agents in 2usize..=5) {
        let map = GridMap::empty(6, 6);
        let Some((inst, plan)) = common::random_plan(&map, agents, seed) else { return Ok(()) };
        let adg = Adg::build(&common::action_paths(&inst, &plan));
        let n = adg.nodes().len();
        prop_assume!(n >= 2);
        let cfg = SimConfig::default();
        let (dur, lat) = nominal_durations(&adg, &cfg, &NoiseModel::realistic(seed)).unwrap();
        let before = simulate_fixed(&adg, &dur, &lat).unwrap();
        prop_assert_eq!(&before.arrival, &relaxed_arrivals(&adg, &dur, &lat));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..8 {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            let grown = adg.with_dependency(u, v);
            if u == v || !grown.is_acyclic() {
                continue;
            }
            let mut lat2 = lat.clone();
            lat2.resize(grown.edges().len(), rng.random_range(0.0..0.5));
            let after = simulate_fixed(&grown, &dur, &lat2).unwrap();
            prop_assert_eq!(&after.arrival, &relaxed_arrivals(&grown, &dur, &lat2));
            for (b, a) in before.arrival.iter().zip(&after.arrival) {
                prop_assert!(a >= b);
            }
        }
    }

    #[test]
    fn trace_respects_limits(seed in 0u64..10_000, agents in 2usize..=8) {
        let map = GridMap::random(10, 10, 15, seed);
        let Some((inst, plan)) = common::random_plan(&map, agents, seed) else { return Ok(()) };
        let adg = Adg::build(&common::action_paths(&inst, &plan));
        let cfg = SimConfig::default();
        let lim = cfg.limits;
        let out = simulate(&adg, &cfg, &NoiseModel::realistic(seed)).unwrap();
        let eps = 1e-9;
        for s in &out.segments {
            prop_assert!(s.t1 >= s.t0);
            prop_assert!(s.v0 >= -eps && s.v0 <= lim.v_max + eps);
            prop_assert!(s.v1() >= -eps && s.v1() <= lim.v_max + eps);
            prop_assert!(s.accel >= lim.a_min - eps && s.accel <= lim.a_max + eps);
        }
        // per agent, segments join without jumps in position or speed
        for a in 0..adg.num_agents() {
            let segs: Vec<_> = out.segments.iter().filter(|s| s.agent == a).collect();
            for w in segs.windows(2) {
                if (w[0].t1 - w[1].t0).abs() < 1e-9 && (w[0].x1() - w[1].x0).abs() < 1e-6 {
                    prop_assert!((w[0].v1() - w[1].v0).abs() < 1e-6);
                }
            }
        }
        for e in &out.trace {
            prop_assert!(e.end_s >= e.start_s);
        }
    }
}

#[test]
fn ideal_execution_is_bit_reproducible() {
    let map = GridMap::random(12, 12, 15, 4);
    let (inst, plan) = (0..20).find_map(|s| common::random_plan(&map, 10, s)).unwrap();
    let adg = Adg::build(&common::action_paths(&inst, &plan));
    let cfg = SimConfig::default();
    let first = simulate(&adg, &cfg, &NoiseModel::ideal()).unwrap();
    for _ in 0..5 {
        let again = simulate(&adg, &cfg, &NoiseModel::ideal()).unwrap();
        assert_eq!(again.trace_csv(), first.trace_csv());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&again.arrival), bits(&first.arrival));
    }
}

#[cfg(feature = "parallel")]
#[test]
fn labelling_is_independent_of_thread_count() {
    let map = GridMap::empty(8, 8);
    let plans: Vec<_> = (0..12)
        .filter_map(|s| common::random_plan(&map, 6, s))
        .map(|(inst, plan)| common::action_paths(&inst, &plan))
        .collect();
    let cfg = SimConfig::default();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| label_dataset(&plans, &cfg, &NoiseModel::ideal()))
            .into_iter()
            .map(|(i, g)| (i, mapfrd_core::encode::serialize_graph(&g.unwrap())))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(4));
}
