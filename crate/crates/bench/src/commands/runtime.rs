//! Runtime breakdown: dependency-graph construction, encoding and
//! estimation time per instance, next to the graph size.

use std::time::Instant;

use mapfrd_core::adg::{Adg, EdgeType};
use mapfrd_core::encode::encode;
use mapfrd_core::lns::initial_solution;
use mapfrd_core::objective::action_paths;
use mapfrd_core::sim::SimConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::BenchError;
use crate::experiment::{build_instance, instance_keys, load_maps, make_estimators, InstanceKey};
use crate::report::write_csv;

pub const RUNTIME_CSV: &str = "runtime.csv";
/// Timings are the median of this many repetitions.
pub const REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRow {
    pub key: InstanceKey,
    pub nodes: usize,
    pub type1_edges: usize,
    pub type2_edges: usize,
    pub estimator: String,
    pub build_ms: f64,
    pub encode_ms: f64,
    pub estimate_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuntimeReport {
    pub rows: Vec<RuntimeRow>,
    pub failures: Vec<String>,
}

fn median_ms(mut f: impl FnMut()) -> f64 {
    let mut samples: Vec<f64> = (0..REPEATS)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    samples[REPEATS / 2]
}

/// Times every configured estimator on a prioritized-planning plan of each
/// instance. Instances run one after another so timings do not compete.
pub fn runtime(cfg: &ExperimentConfig) -> Result<RuntimeReport, BenchError> {
    let sim = SimConfig::default();
    let maps = load_maps(&cfg.maps)?;
    let estimators = make_estimators(cfg, sim)?;
    let mut report = RuntimeReport::default();
    for key in instance_keys(cfg) {
        let inst = match build_instance(&maps[&key.map], &key, cfg.k_d, &sim) {
            Ok(i) => i,
            Err(e) => {
                report.failures.push(format!("{}: {e}", key.describe()));
                continue;
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(key.seed);
        let plan = match initial_solution(&inst, &mut rng, 100) {
            Ok(p) => p,
            Err(e) => {
                report.failures.push(format!("{}: {e}", key.describe()));
                continue;
            }
        };
        let aps = action_paths(&inst, &plan);
        let adg = Adg::build(&aps);
        let build_ms = median_ms(|| {
            std::hint::black_box(Adg::build(std::hint::black_box(&aps)));
        });
        let encode_ms = median_ms(|| {
            std::hint::black_box(encode(std::hint::black_box(&adg)));
        });
        for (kind, est) in cfg.estimators.iter().zip(&estimators) {
            let mut failed = None;
            let estimate_ms = median_ms(|| {
                if let Err(e) = est.estimate(&aps, &adg) {
                    failed = Some(e.to_string());
                }
            });
            if let Some(e) = failed {
                report.failures.push(format!("{} {kind}: {e}", key.describe()));
                continue;
            }
            report.rows.push(RuntimeRow {
                key: key.clone(),
                nodes: adg.nodes().len(),
                type1_edges: adg.count_edges(EdgeType::Type1),
                type2_edges: adg.count_edges(EdgeType::Type2),
                estimator: kind.to_string(),
                build_ms,
                encode_ms,
                estimate_ms,
            });
        }
    }
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
                r.key.label,
                r.key.agents,
                r.key.seed,
                r.nodes,
                r.type1_edges,
                r.type2_edges,
                r.estimator,
                r.build_ms,
                r.encode_ms,
                r.estimate_ms
            )
        })
        .collect();
    write_csv(
        &cfg.output.join(RUNTIME_CSV),
        &cfg.hash(),
        "map,agents,seed,nodes,type1_edges,type2_edges,estimator,build_ms,encode_ms,estimate_ms",
        &rows,
    )?;
    Ok(report)
}
