//! Training data: every plan LNS evaluates is kept, plans with an already
//! seen sum of costs are dropped, and the rest are simulated and written as
//! labelled graphs next to their plans and instances.

use std::fs;
use std::path::Path;

use mapfrd_core::encode::serialize_graph;
use mapfrd_core::estimator::Estimator;
use mapfrd_core::grid::GridMap;
use mapfrd_core::objective::action_paths;
use mapfrd_core::path::Plan;
use mapfrd_core::sim::{label_dataset, SimConfig};

use crate::config::{ExperimentConfig, NoiseMode, Planner};
use crate::error::BenchError;
use crate::experiment::{build_instance, derived_seed, instance_keys, load_maps, make_estimators, noise_model, run_planner, InstanceKey};
use crate::manifest::{assign_splits, sha256_hex, Manifest, ManifestEntry, Split, MANIFEST_FILE, SPLIT_SEED};
use crate::planfile::write_plan;

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataReport {
    pub instances: usize,
    pub graphs: usize,
    pub failures: Vec<String>,
}

struct InstanceData {
    key: InstanceKey,
    instance_text: String,
    /// `(index among captured plans, plan text, graph text)`.
    graphs: Vec<(usize, String, String)>,
    failures: Vec<String>,
}

fn collect(
    cfg: &ExperimentConfig,
    key: &InstanceKey,
    map: &GridMap,
    est: &dyn Estimator,
    sim: SimConfig,
) -> Result<InstanceData, String> {
    let inst = build_instance(map, key, cfg.k_d, &sim).map_err(|e| e.to_string())?;
    let mut plans: Vec<Plan> = Vec::new();
    run_planner(cfg, Planner::Lns, &inst, est, sim, &mut |p| plans.push(p.clone()))?;
    let aps: Vec<_> = plans.iter().map(|p| action_paths(&inst, p)).collect();
    let noise = noise_model(cfg.noise, derived_seed(key.seed, "data"));
    let mut graphs = Vec::new();
    let mut failures = Vec::new();
    for (i, labelled) in label_dataset(&aps, &sim, &noise) {
        match labelled {
            Ok(g) => graphs.push((i, write_plan(&plans[i]), serialize_graph(&g))),
            Err(e) => failures.push(format!("{} plan {i}: {e}", key.describe())),
        }
    }
    Ok(InstanceData {
        key: key.clone(),
        instance_text: inst.agents_to_text(),
        graphs,
        failures,
    })
}

fn write(path: &Path, text: &str) -> Result<(), BenchError> {
    fs::write(path, text).map_err(BenchError::io(path))
}

/// Runs LNS guided by the first configured estimator on every instance and
/// writes `graphs/`, `plans/`, `instances/` and the manifest under the
/// output directory.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<GenDataReport, BenchError> {
    let sim = SimConfig::default();
    let maps = load_maps(&cfg.maps)?;
    let estimators = make_estimators(cfg, sim)?;
    let keys = instance_keys(cfg);
    let results = mapfrd_core::parallel::par_map(&keys, |key| collect(cfg, key, &maps[&key.map], estimators[0].as_ref(), sim));

    let out = &cfg.output;
    for sub in ["graphs", "plans", "instances"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(BenchError::io(&d))?;
    }
    let mut failures = Vec::new();
    let mut pending = Vec::new();
    for (key, r) in keys.iter().zip(results) {
        let data = match r {
            Ok(d) => d,
            Err(e) => {
                log::warn!("{}: {e}", key.describe());
                failures.push(format!("{}: {e}", key.describe()));
                continue;
            }
        };
        for f in &data.failures {
            log::warn!("{f}");
        }
        failures.extend(data.failures.iter().cloned());
        let stem = format!("{}_m{}_s{}", data.key.label, data.key.agents, data.key.seed);
        let instance_file = format!("instances/{stem}.agents");
        write(&out.join(&instance_file), &data.instance_text)?;
        for (i, plan_text, graph_text) in &data.graphs {
            let graph_file = format!("graphs/{stem}_p{i}.adg");
            let plan_file = format!("plans/{stem}_p{i}.plan");
            write(&out.join(&graph_file), graph_text)?;
            write(&out.join(&plan_file), plan_text)?;
            pending.push(ManifestEntry {
                split: Split::Test,
                map: data.key.map.clone(),
                agents: data.key.agents,
                seed: data.key.seed,
                plan_index: *i,
                graph_file,
                plan_file,
                instance_file: instance_file.clone(),
                graph_sha256: sha256_hex(graph_text.as_bytes()),
                plan_sha256: sha256_hex(plan_text.as_bytes()),
            });
        }
    }
    let splits = assign_splits(pending.len(), SPLIT_SEED);
    for (e, s) in pending.iter_mut().zip(splits) {
        e.split = s;
    }
    let reference = noise_model(cfg.noise, 0);
    let manifest = Manifest {
        config_hash: cfg.hash(),
        noise_mode: match cfg.noise {
            NoiseMode::Ideal => "ideal".into(),
            NoiseMode::Realistic => "realistic".into(),
        },
        sigma: reference.sigma,
        latency_base: reference.latency_base,
        latency_jitter: reference.latency_jitter,
        split_seed: SPLIT_SEED,
        entries: pending,
    };
    write(&out.join(MANIFEST_FILE), &manifest.to_text())?;
    log::info!("wrote {} graphs from {} instances to {}", manifest.entries.len(), keys.len(), out.display());
    Ok(GenDataReport {
        instances: keys.len(),
        graphs: manifest.entries.len(),
        failures,
    })
}
