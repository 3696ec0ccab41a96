//! Penalty gap to the virtual best solver: every method plans every
//! instance, plans are executed in the noisy simulator, and each method's
//! average penalty is compared with the per-instance best.

use std::collections::BTreeMap;

use mapfrd_core::adg::Adg;
use mapfrd_core::estimator::Estimator;
use mapfrd_core::grid::GridMap;
use mapfrd_core::objective::{action_paths, score};
use mapfrd_core::penalty::AgentEstimate;
use mapfrd_core::sim::{simulate, SimConfig};

use crate::config::ExperimentConfig;
use crate::error::BenchError;
use crate::experiment::{build_instance, derived_seed, instance_keys, load_maps, make_estimators, noise_model, run_planner, InstanceKey};
use crate::report::write_csv;

pub const INSTANCES_CSV: &str = "evaluate_instances.csv";
pub const SUMMARY_CSV: &str = "evaluate_summary.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRow {
    pub key: InstanceKey,
    pub method: String,
    /// Simulated average penalty, `None` when this method failed.
    pub avg_penalty: Option<f64>,
    /// Gap to the per-instance best, `None` when the instance is excluded.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub map: String,
    pub agents: usize,
    pub method: String,
    pub instances: usize,
    pub mean_penalty: f64,
    pub mean_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VbsReport {
    pub rows: Vec<InstanceRow>,
    pub summary: Vec<SummaryRow>,
    /// Instances excluded because some method failed on them.
    pub excluded: Vec<String>,
    pub failures: Vec<String>,
}

/// Sum over agents of the per-agent penalty, divided by the agent count.
/// Gaps between these are the normalised gaps to the best solver.
fn simulated_penalty(
    cfg: &ExperimentConfig,
    map: &GridMap,
    key: &InstanceKey,
    est: &dyn Estimator,
    sim: SimConfig,
) -> Result<f64, String> {
    let inst = build_instance(map, key, cfg.k_d, &sim).map_err(|e| e.to_string())?;
    let plan = run_planner(cfg, cfg.planner, &inst, est, sim, &mut |_| {})?;
    let adg = Adg::build(&action_paths(&inst, &plan));
    let noise = noise_model(cfg.noise, derived_seed(key.seed, "eval"));
    let out = simulate(&adg, &sim, &noise).map_err(|e| e.to_string())?;
    let arrivals = out.arrival.into_iter().map(AgentEstimate::Point).collect();
    let eval = score(arrivals, &inst.deadlines, cfg.penalty).map_err(|e| e.to_string())?;
    Ok(eval.avg_penalty)
}

/// Per-instance gaps: each method's penalty minus the best penalty on that
/// instance; `None` for every method if any method failed.
pub fn vbs_gaps(penalties: &[Option<f64>]) -> Option<Vec<f64>> {
    let values: Option<Vec<f64>> = penalties.iter().copied().collect();
    let values = values?;
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    Some(values.iter().map(|p| p - best).collect())
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<VbsReport, BenchError> {
    if cfg.estimators.len() < 2 {
        return Err(BenchError::TooFewMethods(cfg.estimators.len()));
    }
    let sim = SimConfig::default();
    let maps = load_maps(&cfg.maps)?;
    let estimators = make_estimators(cfg, sim)?;
    let methods: Vec<String> = cfg.estimators.iter().map(|e| e.to_string()).collect();
    let keys = instance_keys(cfg);
    let per_instance = mapfrd_core::parallel::par_map(&keys, |key| {
        estimators
            .iter()
            .map(|est| simulated_penalty(cfg, &maps[&key.map], key, est.as_ref(), sim))
            .collect::<Vec<_>>()
    });

    let mut report = VbsReport::default();
    for (key, results) in keys.iter().zip(per_instance) {
        let penalties: Vec<Option<f64>> = results
            .iter()
            .zip(&methods)
            .map(|(r, m)| match r {
                Ok(p) => Some(*p),
                Err(e) => {
                    log::warn!("{} {m}: {e}", key.describe());
                    report.failures.push(format!("{} {m}: {e}", key.describe()));
                    None
                }
            })
            .collect();
        let gaps = vbs_gaps(&penalties);
        if gaps.is_none() {
            report.excluded.push(key.describe());
        }
        for (i, m) in methods.iter().enumerate() {
            report.rows.push(InstanceRow {
                key: key.clone(),
                method: m.clone(),
                avg_penalty: penalties[i],
                gap: gaps.as_ref().map(|g| g[i]),
            });
        }
    }

    let mut groups: BTreeMap<(usize, usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
    let map_order = |m: &str| cfg.maps.iter().position(|x| x == m).unwrap_or(usize::MAX);
    for (i, row) in report.rows.iter().enumerate() {
        if let (Some(p), Some(g)) = (row.avg_penalty, row.gap) {
            let method = i % methods.len();
            groups
                .entry((map_order(&row.key.map), row.key.agents, method))
                .or_default()
                .push((p, g));
        }
    }
    for ((map, agents, method), vals) in groups {
        let n = vals.len() as f64;
        report.summary.push(SummaryRow {
            map: crate::maps::map_label(&cfg.maps[map]),
            agents,
            method: methods[method].clone(),
            instances: vals.len(),
            mean_penalty: vals.iter().map(|v| v.0).sum::<f64>() / n,
            mean_gap: vals.iter().map(|v| v.1).sum::<f64>() / n,
        });
    }

    let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.9}"));
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            let status = match (r.avg_penalty, r.gap) {
                (None, _) => "failed",
                (Some(_), None) => "excluded",
                _ => "ok",
            };
            format!(
                "{},{},{},{},{status},{},{}",
                r.key.label,
                r.key.agents,
                r.key.seed,
                r.method,
                fmt(r.avg_penalty),
                fmt(r.gap)
            )
        })
        .collect();
    let hash = cfg.hash();
    write_csv(
        &cfg.output.join(INSTANCES_CSV),
        &hash,
        "map,agents,seed,method,status,avg_penalty,vbs_gap",
        &rows,
    )?;
    let summary: Vec<String> = report
        .summary
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{:.9},{:.9}",
                s.map, s.agents, s.method, s.instances, s.mean_penalty, s.mean_gap
            )
        })
        .collect();
    write_csv(
        &cfg.output.join(SUMMARY_CSV),
        &hash,
        "map,agents,method,instances,mean_penalty,mean_vbs_gap",
        &summary,
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_against_the_best() {
        assert_eq!(vbs_gaps(&[Some(3.0), Some(1.0), Some(2.5)]), Some(vec![2.0, 0.0, 1.5]));
        assert_eq!(vbs_gaps(&[Some(3.0), None]), None);
        assert_eq!(vbs_gaps(&[Some(0.5), Some(0.5)]), Some(vec![0.0, 0.0]));
    }
}
