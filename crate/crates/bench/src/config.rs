//! Experiment configuration: flat `key = value` text.
//!
//! ```text
//! # comment
//! maps        = builtin:empty-8x8, builtin:random-16x16-20-7, maps/den.map
//! agents      = 4, 8, 12          # strictly ascending
//! seeds       = 0..25             # half-open range, or a list
//! planner     = lns               # lns | cbs
//! estimators  = const:0.05, sim   # const:<k_u> | sim | learned-point | learned-dist
//! penalty     = linear            # linear | percentage | quadratic
//! k_d         = 60
//! k_d_candidates = 20, 40, 60, 80, 100
//! budget      = iterations:200    # iterations:<n> | seconds:<s>
//! noise       = realistic         # ideal | realistic
//! neighborhood = failure          # failure | adaptive
//! output      = out
//! predictor   = python3 -m predictor.serve   # command for learned estimators
//! predictor_timeout_s = 30
//! ```
//!
//! Unknown keys, repeated keys and malformed values are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use mapfrd_core::estimator::EstimatorKind;
use mapfrd_core::lns::NeighborhoodMode;
use mapfrd_core::penalty::PenaltyKind;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("`{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planner {
    Lns,
    Cbs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Iterations(u64),
    Seconds(f64),
}

impl Budget {
    pub fn iterations(self) -> Option<u64> {
        match self {
            Budget::Iterations(n) => Some(n),
            Budget::Seconds(_) => None,
        }
    }

    pub fn time_limit(self) -> Option<Duration> {
        match self {
            Budget::Iterations(_) => None,
            Budget::Seconds(s) => Some(Duration::from_secs_f64(s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Ideal,
    Realistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub maps: Vec<String>,
    pub agents: Vec<usize>,
    pub seeds: Vec<u64>,
    pub planner: Planner,
    pub estimators: Vec<EstimatorKind>,
    pub penalty: PenaltyKind,
    pub k_d: f64,
    pub k_d_candidates: Vec<f64>,
    pub budget: Budget,
    pub noise: NoiseMode,
    pub neighborhood: NeighborhoodMode,
    pub output: PathBuf,
    pub predictor: Option<String>,
    pub predictor_timeout_s: f64,
}

pub const KEYS: [&str; 14] = [
    "maps",
    "agents",
    "seeds",
    "planner",
    "estimators",
    "penalty",
    "k_d",
    "k_d_candidates",
    "budget",
    "noise",
    "neighborhood",
    "output",
    "predictor",
    "predictor_timeout_s",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            maps: Vec::new(),
            agents: Vec::new(),
            seeds: (0..25).collect(),
            planner: Planner::Lns,
            estimators: vec![EstimatorKind::ConstExec(0.05)],
            penalty: PenaltyKind::Linear,
            k_d: 60.0,
            k_d_candidates: vec![20.0, 40.0, 60.0, 80.0, 100.0],
            budget: Budget::Iterations(200),
            noise: NoiseMode::Realistic,
            neighborhood: NeighborhoodMode::FailureBased,
            output: PathBuf::from("out"),
            predictor: None,
            predictor_timeout_s: 30.0,
        }
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_num<T: FromStr>(key: &str, s: &str) -> Result<T, ConfigError> {
    s.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        reason: format!("`{s}` is not a valid number"),
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg = Self::parse_unvalidated(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without the cross-key checks, so command-line overrides can
    /// complete the configuration before [`validate`](Self::validate).
    pub fn parse_unvalidated(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: i + 1,
                    key: key.into(),
                });
            }
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate(key.into()));
            }
            seen.push(key);
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    /// Sets one key; used by the file parser and by command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::Value { key: key.into(), reason };
        match key {
            "maps" => self.maps = list(value).map(String::from).collect(),
            "agents" => self.agents = list(value).map(|s| parse_num(key, s)).collect::<Result<_, _>>()?,
            "seeds" => {
                self.seeds = match value.split_once("..") {
                    Some((a, b)) => {
                        let (a, b): (u64, u64) = (parse_num(key, a.trim())?, parse_num(key, b.trim())?);
                        (a..b).collect()
                    }
                    None => list(value).map(|s| parse_num(key, s)).collect::<Result<_, _>>()?,
                }
            }
            "planner" => {
                self.planner = match value {
                    "lns" => Planner::Lns,
                    "cbs" => Planner::Cbs,
                    _ => return Err(bad(format!("`{value}` is not lns or cbs"))),
                }
            }
            "estimators" => {
                self.estimators = list(value).map(|s| s.parse().map_err(bad)).collect::<Result<_, _>>()?;
            }
            "penalty" => self.penalty = value.parse().map_err(|e| bad(format!("{e}")))?,
            "k_d" => self.k_d = parse_num(key, value)?,
            "k_d_candidates" => {
                self.k_d_candidates = list(value).map(|s| parse_num(key, s)).collect::<Result<_, _>>()?
            }
            "budget" => {
                self.budget = match value.split_once(':') {
                    Some(("iterations", n)) => Budget::Iterations(parse_num(key, n.trim())?),
                    Some(("seconds", s)) => Budget::Seconds(parse_num(key, s.trim())?),
                    _ => return Err(bad(format!("`{value}` is not iterations:<n> or seconds:<s>"))),
                }
            }
            "noise" => {
                self.noise = match value {
                    "ideal" => NoiseMode::Ideal,
                    "realistic" => NoiseMode::Realistic,
                    _ => return Err(bad(format!("`{value}` is not ideal or realistic"))),
                }
            }
            "neighborhood" => {
                self.neighborhood = match value {
                    "failure" => NeighborhoodMode::FailureBased,
                    "adaptive" => NeighborhoodMode::Adaptive,
                    _ => return Err(bad(format!("`{value}` is not failure or adaptive"))),
                }
            }
            "output" => self.output = PathBuf::from(value),
            "predictor" => self.predictor = Some(value.to_string()).filter(|s| !s.is_empty()),
            "predictor_timeout_s" => self.predictor_timeout_s = parse_num(key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.into(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: String| ConfigError::Value { key: key.into(), reason };
        if self.maps.is_empty() {
            return Err(ConfigError::Missing("maps"));
        }
        for m in &self.maps {
            if !m.starts_with("builtin:") && !Path::new(m).is_file() {
                return Err(bad("maps", format!("map file `{m}` does not exist")));
            }
        }
        if self.agents.is_empty() {
            return Err(ConfigError::Missing("agents"));
        }
        if self.agents.windows(2).any(|w| w[0] >= w[1]) || self.agents[0] == 0 {
            return Err(bad("agents", "counts must be positive and strictly ascending".into()));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "no seeds".into()));
        }
        if self.estimators.is_empty() {
            return Err(bad("estimators", "no estimators".into()));
        }
        if !(self.k_d > 0.0) || self.k_d_candidates.iter().any(|k| !(*k > 0.0)) {
            return Err(bad("k_d", "scaling factors must be positive".into()));
        }
        if let Budget::Seconds(s) = self.budget {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(bad("budget", format!("{s} seconds")));
            }
        }
        let learned = self
            .estimators
            .iter()
            .any(|e| matches!(e, EstimatorKind::LearnedPoint | EstimatorKind::LearnedDist));
        if learned && self.predictor.is_none() {
            return Err(bad("predictor", "learned estimators need a predictor command".into()));
        }
        if !(self.predictor_timeout_s > 0.0) {
            return Err(bad("predictor_timeout_s", "must be positive".into()));
        }
        Ok(())
    }

    /// One `key = value` line per key, in a fixed order.
    pub fn canonical(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "maps = {}", self.maps.join(", "));
        let _ = writeln!(s, "agents = {}", join(self.agents.iter().map(|a| a.to_string()).collect()));
        let _ = writeln!(s, "seeds = {}", join(self.seeds.iter().map(|a| a.to_string()).collect()));
        let _ = writeln!(
            s,
            "planner = {}",
            match self.planner {
                Planner::Lns => "lns",
                Planner::Cbs => "cbs",
            }
        );
        let _ = writeln!(s, "estimators = {}", join(self.estimators.iter().map(|e| e.to_string()).collect()));
        let _ = writeln!(s, "penalty = {}", self.penalty);
        let _ = writeln!(s, "k_d = {}", self.k_d);
        let _ = writeln!(s, "k_d_candidates = {}", join(self.k_d_candidates.iter().map(|k| k.to_string()).collect()));
        let _ = match self.budget {
            Budget::Iterations(n) => writeln!(s, "budget = iterations:{n}"),
            Budget::Seconds(x) => writeln!(s, "budget = seconds:{x}"),
        };
        let _ = writeln!(
            s,
            "noise = {}",
            match self.noise {
                NoiseMode::Ideal => "ideal",
                NoiseMode::Realistic => "realistic",
            }
        );
        let _ = writeln!(
            s,
            "neighborhood = {}",
            match self.neighborhood {
                NeighborhoodMode::FailureBased => "failure",
                NeighborhoodMode::Adaptive => "adaptive",
            }
        );
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(s, "predictor = {}", self.predictor.as_deref().unwrap_or(""));
        let _ = writeln!(s, "predictor_timeout_s = {}", self.predictor_timeout_s);
        s
    }

    /// SHA-256 of the canonical form without the output directory, hex
    /// encoded: the same experiment written elsewhere keeps its hash.
    pub fn hash(&self) -> String {
        let canonical = self.canonical();
        let keyed: String = canonical.lines().filter(|l| !l.starts_with("output =")).map(|l| format!("{l}\n")).collect();
        hex::encode(Sha256::digest(keyed.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sweep
maps = builtin:empty-8x8, builtin:random-16x16-20-7
agents = 4, 8
seeds = 0..3
planner = cbs
estimators = const:0.05, sim   # two methods
budget = seconds:2.5
noise = ideal
";

    #[test]
    fn parses_sample() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.agents, vec![4, 8]);
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.planner, Planner::Cbs);
        assert_eq!(c.estimators, vec![EstimatorKind::ConstExec(0.05), EstimatorKind::SimOracle]);
        assert_eq!(c.budget, Budget::Seconds(2.5));
        assert_eq!(c.noise, NoiseMode::Ideal);
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        let again = ExperimentConfig::parse(&c.canonical()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let mut moved = c.clone();
        moved.output = "elsewhere".into();
        assert_eq!(moved.hash(), c.hash());
        moved.k_d += 1.0;
        assert_ne!(moved.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_input() {
        let base = "maps = builtin:empty-8x8\nagents = 4\n";
        assert!(matches!(
            ExperimentConfig::parse(&format!("{base}colour = blue\n")),
            Err(ConfigError::UnknownKey { line: 3, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse(&format!("{base}agents = 8\n")),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(ExperimentConfig::parse("maps = builtin:empty-8x8\nagents = 8, 4\n").is_err());
        assert!(ExperimentConfig::parse("maps = nowhere/x.map\nagents = 4\n").is_err());
        assert!(ExperimentConfig::parse(&format!("{base}estimators = learned-point\n")).is_err());
        assert!(ExperimentConfig::parse(&format!("{base}budget = forever\n")).is_err());
        assert!(matches!(ExperimentConfig::parse("agents = 4\n"), Err(ConfigError::Missing("maps"))));
        assert!(matches!(ExperimentConfig::parse("maps\n"), Err(ConfigError::Syntax { line: 1 })));
    }
}
