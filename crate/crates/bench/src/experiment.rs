//! Pieces shared by the commands: instance enumeration, estimator
//! construction, planner dispatch and seed derivation.

use std::collections::HashMap;
use std::process::Command;
use std::time::Duration;

use mapfrd_core::cbs::{run_cbs, CbsConfig};
use mapfrd_core::estimator::{ConstExec, Estimator, EstimatorKind, LearnedClient, LearnedMode, SimOracle};
use mapfrd_core::grid::{random_agents, DeadlineSpec, GridInstance, GridMap, InstanceError};
use mapfrd_core::lns::{run_lns_with, LnsConfig};
use mapfrd_core::path::Plan;
use mapfrd_core::sim::{NoiseModel, SimConfig};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, NoiseMode, Planner};
use crate::error::BenchError;
use crate::maps::{load_map, map_label};

/// One (map, agent count, seed) cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceKey {
    pub map: String,
    pub label: String,
    pub agents: usize,
    pub seed: u64,
}

impl InstanceKey {
    pub fn describe(&self) -> String {
        format!("{} M={} seed {}", self.label, self.agents, self.seed)
    }
}

/// Every sweep cell, in (map, agents, seed) order as configured.
pub fn instance_keys(cfg: &ExperimentConfig) -> Vec<InstanceKey> {
    let mut keys = Vec::new();
    for map in &cfg.maps {
        for &agents in &cfg.agents {
            for &seed in &cfg.seeds {
                keys.push(InstanceKey {
                    map: map.clone(),
                    label: map_label(map),
                    agents,
                    seed,
                });
            }
        }
    }
    keys
}

/// Loads each configured map once.
pub fn load_maps<'a>(sources: impl IntoIterator<Item = &'a String>) -> Result<HashMap<String, GridMap>, BenchError> {
    let mut maps = HashMap::new();
    for s in sources {
        if !maps.contains_key(s) {
            maps.insert(s.clone(), load_map(s)?);
        }
    }
    Ok(maps)
}

/// Random start/goal pairs and deadlines, all drawn from the instance seed.
pub fn build_instance(map: &GridMap, key: &InstanceKey, k_d: f64, sim: &SimConfig) -> Result<GridInstance, InstanceError> {
    let agents = random_agents(map, key.agents, key.seed)?;
    GridInstance::with_generated_deadlines(map.clone(), agents, DeadlineSpec::new(k_d), &sim.limits, key.seed)
}

/// A 64-bit seed derived from `seed` and a purpose tag, stable across
/// platforms and releases.
pub fn derived_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn noise_model(mode: NoiseMode, seed: u64) -> NoiseModel {
    match mode {
        NoiseMode::Ideal => NoiseModel::ideal(),
        NoiseMode::Realistic => NoiseModel::realistic(seed),
    }
}

/// Builds an estimator; learned kinds start the predictor command
/// (whitespace-separated program and arguments).
pub fn make_estimator(
    kind: EstimatorKind,
    predictor: Option<&str>,
    timeout_s: f64,
    sim: SimConfig,
) -> Result<Box<dyn Estimator>, BenchError> {
    let mode = match kind {
        EstimatorKind::ConstExec(k) => return Ok(Box::new(ConstExec::new(k, sim))),
        EstimatorKind::SimOracle => return Ok(Box::new(SimOracle { cfg: sim })),
        EstimatorKind::LearnedPoint => LearnedMode::Point,
        EstimatorKind::LearnedDist => LearnedMode::Dist,
    };
    let command = predictor.unwrap_or_default();
    let mut words = command.split_whitespace();
    let program = words.next().ok_or_else(|| BenchError::Predictor {
        command: command.to_string(),
        reason: "empty command".into(),
    })?;
    let mut cmd = Command::new(program);
    cmd.args(words);
    let client = LearnedClient::spawn(cmd, mode, Duration::from_secs_f64(timeout_s)).map_err(|e| BenchError::Predictor {
        command: command.to_string(),
        reason: e.to_string(),
    })?;
    Ok(Box::new(client))
}

pub fn make_estimators(cfg: &ExperimentConfig, sim: SimConfig) -> Result<Vec<Box<dyn Estimator>>, BenchError> {
    cfg.estimators
        .iter()
        .map(|&k| make_estimator(k, cfg.predictor.as_deref(), cfg.predictor_timeout_s, sim))
        .collect()
}

pub fn lns_config(cfg: &ExperimentConfig, seed: u64) -> LnsConfig {
    LnsConfig {
        penalty: cfg.penalty,
        mode: cfg.neighborhood,
        max_iterations: cfg.budget.iterations(),
        time_limit: cfg.budget.time_limit(),
        seed,
        ..LnsConfig::default()
    }
}

/// Runs the configured planner; an iteration budget bounds CBS expansions.
/// `on_candidate` sees every plan LNS evaluates and is unused by CBS.
pub fn run_planner(
    cfg: &ExperimentConfig,
    planner: Planner,
    instance: &GridInstance,
    estimator: &dyn Estimator,
    sim: SimConfig,
    on_candidate: &mut dyn FnMut(&Plan),
) -> Result<Plan, String> {
    match planner {
        Planner::Lns => run_lns_with(instance, estimator, &lns_config(cfg, instance.seed), on_candidate)
            .map(|r| r.plan)
            .map_err(|e| e.to_string()),
        Planner::Cbs => {
            let cbs = CbsConfig {
                penalty: cfg.penalty,
                time_limit: cfg.budget.time_limit(),
                max_expansions: cfg.budget.iterations(),
                sim,
                ..CbsConfig::default()
            };
            run_cbs(instance, estimator, &cbs).map(|r| r.plan).map_err(|e| e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_depend_on_both_inputs() {
        assert_eq!(derived_seed(3, "eval"), derived_seed(3, "eval"));
        assert_ne!(derived_seed(3, "eval"), derived_seed(4, "eval"));
        assert_ne!(derived_seed(3, "eval"), derived_seed(3, "data"));
    }

    #[test]
    fn keys_follow_config_order() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("maps", "builtin:empty-4x4, builtin:empty-5x5").unwrap();
        cfg.set("agents", "1, 2").unwrap();
        cfg.set("seeds", "7, 3").unwrap();
        let keys: Vec<_> = instance_keys(&cfg)
            .into_iter()
            .map(|k| (k.label, k.agents, k.seed))
            .collect();
        assert_eq!(keys.len(), 8);
        assert_eq!(keys[0], ("empty-4x4".to_string(), 1, 7));
        assert_eq!(keys[1], ("empty-4x4".to_string(), 1, 3));
        assert_eq!(keys[7], ("empty-5x5".to_string(), 2, 3));
    }
}
