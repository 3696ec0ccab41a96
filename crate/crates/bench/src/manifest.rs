//! Dataset manifest: one line per labelled graph with its split, origin and
//! content hashes, so a dataset can be re-read and verified byte for byte.
//!
//! ```text
//! # config_hash <hex>
//! datasetv1
//! noise <ideal|realistic> <sigma> <latency_base> <latency_jitter>
//! split_seed <n>
//! graph<TAB>split<TAB>map<TAB>agents<TAB>seed<TAB>plan_index<TAB>graph_file<TAB>plan_file<TAB>instance_file<TAB>sha256(graph)<TAB>sha256(plan)
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::BenchError;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const MANIFEST_VERSION: &str = "datasetv1";
pub const SPLIT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

/// 80/10/10 by graph: indices are shuffled with a fixed seed, the first
/// `floor(0.8 n)` train, the next `floor(0.1 n)` validate, the rest test.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = n * 8 / 10;
    let val = n / 10;
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub split: Split,
    pub map: String,
    pub agents: usize,
    pub seed: u64,
    pub plan_index: usize,
    /// Paths relative to the dataset directory.
    pub graph_file: String,
    pub plan_file: String,
    pub instance_file: String,
    pub graph_sha256: String,
    pub plan_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config_hash: String,
    /// `ideal` or `realistic`.
    pub noise_mode: String,
    pub sigma: f64,
    pub latency_base: f64,
    pub latency_jitter: f64,
    pub split_seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# config_hash {}\n{MANIFEST_VERSION}\nnoise {} {} {} {}\nsplit_seed {}\n",
            self.config_hash, self.noise_mode, self.sigma, self.latency_base, self.latency_jitter, self.split_seed
        );
        for e in &self.entries {
            s.push_str(
                &[
                    "graph".to_string(),
                    e.split.to_string(),
                    e.map.clone(),
                    e.agents.to_string(),
                    e.seed.to_string(),
                    e.plan_index.to_string(),
                    e.graph_file.clone(),
                    e.plan_file.clone(),
                    e.instance_file.clone(),
                    e.graph_sha256.clone(),
                    e.plan_sha256.clone(),
                ]
                .join("\t"),
            );
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Manifest, BenchError> {
        let bad = |line: usize, reason: &str| BenchError::Manifest {
            path: path.to_path_buf(),
            reason: format!("line {line}: {reason}"),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(0, &format!("missing {what}")));
        let (n, l) = next("config hash")?;
        let config_hash = l.strip_prefix("# config_hash ").ok_or_else(|| bad(n, "expected config hash"))?.to_string();
        let (n, l) = next("version")?;
        if l != MANIFEST_VERSION {
            return Err(bad(n, &format!("unsupported version `{l}`")));
        }
        let (n, l) = next("noise line")?;
        let noise: Vec<&str> = l.split(' ').collect();
        if noise.len() != 5 || noise[0] != "noise" {
            return Err(bad(n, "expected `noise <mode> <sigma> <base> <jitter>`"));
        }
        let num = |n: usize, s: &str| s.parse::<f64>().map_err(|_| bad(n, &format!("bad number `{s}`")));
        let (noise_mode, sigma, latency_base, latency_jitter) =
            (noise[1].to_string(), num(n, noise[2])?, num(n, noise[3])?, num(n, noise[4])?);
        let (n, l) = next("split seed")?;
        let split_seed = l
            .strip_prefix("split_seed ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(n, "expected `split_seed <n>`"))?;
        let mut entries = Vec::new();
        for (n, l) in lines {
            if l.is_empty() {
                continue;
            }
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 11 || f[0] != "graph" {
                return Err(bad(n, "expected 11 tab-separated graph fields"));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(n, &format!("bad integer `{s}`")));
            entries.push(ManifestEntry {
                split: f[1].parse().map_err(|e: String| bad(n, &e))?,
                map: f[2].to_string(),
                agents: int(f[3])? as usize,
                seed: int(f[4])?,
                plan_index: int(f[5])? as usize,
                graph_file: f[6].to_string(),
                plan_file: f[7].to_string(),
                instance_file: f[8].to_string(),
                graph_sha256: f[9].to_string(),
                plan_sha256: f[10].to_string(),
            });
        }
        Ok(Manifest {
            config_hash,
            noise_mode,
            sigma,
            latency_base,
            latency_jitter,
            split_seed,
            entries,
        })
    }

    pub fn read(dir: &Path) -> Result<Manifest, BenchError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(BenchError::io(&path))?;
        Manifest::parse(&text, &path)
    }

    /// Re-hashes every graph and plan file against the manifest.
    pub fn verify(&self, dir: &Path) -> Result<(), BenchError> {
        for e in &self.entries {
            for (file, expected) in [(&e.graph_file, &e.graph_sha256), (&e.plan_file, &e.plan_sha256)] {
                let path: PathBuf = dir.join(file);
                let bytes = fs::read(&path).map_err(BenchError::io(&path))?;
                let got = sha256_hex(&bytes);
                if &got != expected {
                    return Err(BenchError::Manifest {
                        path,
                        reason: format!("sha256 {got} does not match manifest {expected}"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_proportions() {
        let s = assign_splits(100, SPLIT_SEED);
        let count = |k| s.iter().filter(|&&x| x == k).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (80, 10, 10));
        assert_eq!(s, assign_splits(100, SPLIT_SEED));
        assert_eq!(assign_splits(1, SPLIT_SEED), vec![Split::Test]);
        assert!(assign_splits(0, SPLIT_SEED).is_empty());
    }

    #[test]
    fn text_round_trip() {
        let m = Manifest {
            config_hash: "abc".into(),
            noise_mode: "realistic".into(),
            sigma: 0.05,
            latency_base: 0.0,
            latency_jitter: 0.1,
            split_seed: 0,
            entries: vec![ManifestEntry {
                split: Split::Val,
                map: "builtin:empty-8x8".into(),
                agents: 4,
                seed: 2,
                plan_index: 5,
                graph_file: "graphs/a.adg".into(),
                plan_file: "plans/a.plan".into(),
                instance_file: "instances/a.agents".into(),
                graph_sha256: "00".into(),
                plan_sha256: "11".into(),
            }],
        };
        let p = Path::new("m");
        assert_eq!(Manifest::parse(&m.to_text(), p).unwrap(), m);
        assert!(Manifest::parse("# config_hash x\ndatasetv2\n", p).is_err());
    }
}
