//! Deadline-scale grid search per (map, M): the candidate whose simulated
//! miss rate under the configured planner is nearest one half.

use mapfrd_core::calibrate::{calibrate_k_d, CalibrationCase};
use mapfrd_core::grid::{random_agents, GridInstance};
use mapfrd_core::path::Plan;
use mapfrd_core::sim::SimConfig;

use crate::config::ExperimentConfig;
use crate::error::BenchError;
use crate::experiment::{derived_seed, load_maps, make_estimators, noise_model, run_planner};
use crate::maps::map_label;
use crate::report::write_csv;

pub const CALIBRATE_CSV: &str = "calibrate.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub map: String,
    pub agents: usize,
    pub k_d: f64,
    /// `(candidate, miss rate)` in candidate order.
    pub rates: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrateReport {
    pub rows: Vec<CalibrationRow>,
    pub failures: Vec<String>,
}

/// The planner is guided by the first configured estimator; execution is
/// simulated with the configured noise mode.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<CalibrateReport, BenchError> {
    let sim = SimConfig::default();
    let maps = load_maps(&cfg.maps)?;
    let estimators = make_estimators(cfg, sim)?;
    let guide = estimators[0].as_ref();
    let planner = |inst: &GridInstance| -> Result<Plan, String> { run_planner(cfg, cfg.planner, inst, guide, sim, &mut |_| {}) };
    let noise = noise_model(cfg.noise, derived_seed(0, "calibrate"));
    let mut report = CalibrateReport::default();
    for source in &cfg.maps {
        let map = &maps[source];
        for &agents in &cfg.agents {
            let mut cases = Vec::new();
            for &seed in &cfg.seeds {
                match random_agents(map, agents, seed) {
                    Ok(a) => cases.push(CalibrationCase {
                        map: map.clone(),
                        agents: a,
                        seed,
                    }),
                    Err(e) => report.failures.push(format!("{} M={agents} seed {seed}: {e}", map_label(source))),
                }
            }
            match calibrate_k_d(&cases, &cfg.k_d_candidates, &sim, &noise, &planner) {
                Ok(c) => report.rows.push(CalibrationRow {
                    map: map_label(source),
                    agents,
                    k_d: c.k_d,
                    rates: c.rates,
                }),
                Err(source_err) => {
                    let e = BenchError::Calibrate {
                        map: map_label(source),
                        agents,
                        source: source_err,
                    };
                    log::warn!("{e}");
                    report.failures.push(e.to_string());
                }
            }
        }
    }
    let mut rows = Vec::new();
    for r in &report.rows {
        for &(k, rate) in &r.rates {
            rows.push(format!("{},{},{k},{rate:.6},{}", r.map, r.agents, (k == r.k_d) as u8));
        }
    }
    write_csv(
        &cfg.output.join(CALIBRATE_CSV),
        &cfg.hash(),
        "map,agents,k_d,miss_rate,selected",
        &rows,
    )?;
    Ok(report)
}
