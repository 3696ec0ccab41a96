//! Estimator accuracy on a held-out split: graphs are rebuilt from their
//! plans and instances, every estimator predicts per-agent times, and the
//! error against the stored labels is averaged per (map, M, estimator).

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use mapfrd_core::adg::Adg;
use mapfrd_core::encode::{deserialize_graph, encode};
use mapfrd_core::estimator::{mape, Estimator, EstimatorKind};
use mapfrd_core::grid::{GridInstance, GridMap};
use mapfrd_core::objective::action_paths;
use mapfrd_core::sim::SimConfig;

use crate::error::BenchError;
use crate::experiment::{load_maps, make_estimator};
use crate::manifest::{sha256_hex, Manifest, ManifestEntry, Split};
use crate::maps::map_label;
use crate::planfile::read_plan;
use crate::report::{mean_stderr, write_csv};

pub const MAPE_CSV: &str = "mape.csv";

#[derive(Debug, Clone)]
pub struct MapeArgs {
    pub dataset: PathBuf,
    pub estimators: Vec<EstimatorKind>,
    pub split: Split,
    pub predictor: Option<String>,
    pub predictor_timeout_s: f64,
    /// Defaults to `mape.csv` inside the dataset directory.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapeRow {
    pub map: String,
    pub agents: usize,
    pub estimator: String,
    pub graphs: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapeReport {
    pub rows: Vec<MapeRow>,
    pub failures: Vec<String>,
}

/// Stored labels and the per-estimator MAPE over agents with positive
/// labels (agents that never move take zero time and are skipped); `None`
/// when the graph has no such agent.
fn graph_mape(
    dir: &Path,
    entry: &ManifestEntry,
    map: &GridMap,
    estimators: &[Box<dyn Estimator>],
) -> Result<Vec<Option<f64>>, String> {
    let read = |f: &str| fs::read_to_string(dir.join(f)).map_err(|e| format!("{f}: {e}"));
    let graph = deserialize_graph(&read(&entry.graph_file)?).map_err(|e| format!("{}: {e}", entry.graph_file))?;
    let labels = graph.labels.clone().ok_or_else(|| format!("{}: graph has no labels", entry.graph_file))?;
    let plan = read_plan(&read(&entry.plan_file)?).map_err(|e| format!("{}: {e}", entry.plan_file))?;
    let inst = GridInstance::from_agents_text(map.clone(), &read(&entry.instance_file)?, entry.seed)
        .map_err(|e| format!("{}: {e}", entry.instance_file))?;
    let aps = action_paths(&inst, &plan);
    let adg = Adg::build(&aps);
    let rebuilt = encode(&adg);
    if rebuilt.num_nodes() != graph.num_nodes() || rebuilt.edges != graph.edges {
        return Err(format!("{}: rebuilt graph does not match the stored one", entry.graph_file));
    }
    let keep: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] > 0.0).collect();
    if keep.is_empty() {
        return Ok(vec![None; estimators.len()]);
    }
    let truth: Vec<f64> = keep.iter().map(|&i| labels[i]).collect();
    estimators
        .iter()
        .map(|est| {
            let pred = est.estimate(&aps, &adg).map_err(|e| format!("{} {}: {e}", entry.graph_file, est.name()))?;
            let pred: Vec<f64> = keep.iter().map(|&i| pred[i].central()).collect();
            mape(&pred, &truth).map(Some).map_err(|e| e.to_string())
        })
        .collect()
}

pub fn mape_table(args: &MapeArgs) -> Result<MapeReport, BenchError> {
    let manifest = Manifest::read(&args.dataset)?;
    manifest.verify(&args.dataset)?;
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.split == args.split).collect();
    if entries.is_empty() {
        return Err(BenchError::EmptySplit(args.split.to_string()));
    }
    let maps: HashMap<String, GridMap> = load_maps(entries.iter().map(|e| &e.map))?;
    let sim = SimConfig::default();
    let estimators = args
        .estimators
        .iter()
        .map(|&k| make_estimator(k, args.predictor.as_deref(), args.predictor_timeout_s, sim))
        .collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = args.estimators.iter().map(|e| e.to_string()).collect();

    let results = mapfrd_core::parallel::par_map(&entries, |e| graph_mape(&args.dataset, e, &maps[&e.map], &estimators));
    let mut report = MapeReport::default();
    // first-appearance order of maps keeps the table in dataset order
    let mut map_order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, usize, usize), Vec<f64>> = BTreeMap::new();
    for (e, r) in entries.iter().zip(results) {
        let values = match r {
            Ok(v) => v,
            Err(reason) => {
                log::warn!("{reason}");
                report.failures.push(reason);
                continue;
            }
        };
        let m = match map_order.iter().position(|&m| m == e.map) {
            Some(i) => i,
            None => {
                map_order.push(&e.map);
                map_order.len() - 1
            }
        };
        for (k, v) in values.into_iter().enumerate() {
            if let Some(v) = v {
                groups.entry((m, e.agents, k)).or_default().push(v);
            }
        }
    }
    for ((m, agents, k), vals) in groups {
        let (mean, stderr) = mean_stderr(&vals);
        report.rows.push(MapeRow {
            map: map_label(map_order[m]),
            agents,
            estimator: names[k].clone(),
            graphs: vals.len(),
            mean,
            stderr,
        });
    }

    let hash = sha256_hex(format!("{}\n{}\n{}", manifest.config_hash, names.join(","), args.split).as_bytes());
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{},{},{},{},{:.6},{:.6}", r.map, r.agents, r.estimator, r.graphs, r.mean, r.stderr))
        .collect();
    let out = args.output.clone().unwrap_or_else(|| args.dataset.join(MAPE_CSV));
    write_csv(&out, &hash, "map,agents,estimator,graphs,mape_mean,mape_stderr", &rows)?;
    Ok(report)
}
