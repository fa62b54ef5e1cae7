//! Pipeline configuration: `key=value` lines, `#` comments, paths resolved
//! relative to the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::hash::fingerprint_bytes;
use crate::infer::GroundingLimits;
use crate::kg::Split;
use crate::mine::{MineBudget, MinerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MineMode {
    Iterations,
    Seconds,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub rules: PathBuf,
    pub sims: PathBuf,
    pub thresholds: PathBuf,
    pub predictions: PathBuf,
    pub report: PathBuf,
    /// Optional cluster audit file written by `apply --aggregation nrno`.
    pub clusters: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads; 0 means all cores. Outputs are identical for any
    /// value.
    pub threads: usize,
    pub top_k: usize,
    pub minhash_k: usize,
    pub miner_mode: MineMode,
    pub miner_iterations: u64,
    pub miner_seconds: f64,
    pub max_len_cyclic: usize,
    pub max_len_acyclic: usize,
    pub allow_reflexive: bool,
    pub min_support: u64,
    pub min_confidence: f64,
    pub grid_steps: u32,
    pub random_levels: u32,
    pub random_iterations: u64,
    /// Sample random-search components from continuous [0,1] instead of
    /// the discrete lattice.
    pub random_continuous: bool,
    pub groundings_cap: usize,
    pub apply_split: Split,
    /// Fingerprint of the canonicalized config, recorded in output headers.
    /// The thread count is excluded: any worker count must produce
    /// byte-identical outputs, headers included.
    pub hash: u64,
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("duplicate key `{key}`")));
        }
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "train",
    "valid",
    "test",
    "rules",
    "sims",
    "thresholds",
    "predictions",
    "report",
    "clusters",
    "seed",
    "threads",
    "top_k",
    "minhash_k",
    "miner_mode",
    "miner_iterations",
    "miner_seconds",
    "max_len_cyclic",
    "max_len_acyclic",
    "allow_reflexive",
    "min_support",
    "min_confidence",
    "grid_steps",
    "random_levels",
    "random_iterations",
    "random_continuous",
    "groundings_cap",
    "apply_split",
];

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config(format!("{} is not utf-8", path.display())))?;
        let map = parse_kv(&text)?;
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
        }
        let mut canon = String::new();
        for (k, v) in &map {
            if k != "threads" {
                canon.push_str(k);
                canon.push('=');
                canon.push_str(v);
                canon.push('\n');
            }
        }
        let hash = fingerprint_bytes(canon.as_bytes());
        let dir = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        let resolve = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                dir.join(p)
            }
        };
        let path_key = |key: &str, default: &str| -> PathBuf {
            map.get(key)
                .map(|v| resolve(v))
                .unwrap_or_else(|| resolve(default))
        };
        let required = |key: &str| -> Result<PathBuf> {
            map.get(key)
                .map(|v| resolve(v))
                .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
        };

        macro_rules! num {
            ($key:expr, $default:expr, $ty:ty) => {
                match map.get($key) {
                    Some(v) => v
                        .parse::<$ty>()
                        .map_err(|_| Error::Config(format!("bad value for `{}`: `{v}`", $key)))?,
                    None => $default,
                }
            };
        }

        let miner_mode = match map.get("miner_mode").map(String::as_str) {
            None | Some("iterations") => MineMode::Iterations,
            Some("seconds") => MineMode::Seconds,
            Some(other) => {
                return Err(Error::Config(format!("bad miner_mode `{other}`")));
            }
        };
        let allow_reflexive = match map.get("allow_reflexive").map(String::as_str) {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => {
                return Err(Error::Config(format!("bad allow_reflexive `{other}`")));
            }
        };
        let random_continuous = match map.get("random_continuous").map(String::as_str) {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => {
                return Err(Error::Config(format!("bad random_continuous `{other}`")));
            }
        };
        let apply_split = match map.get("apply_split").map(String::as_str) {
            None | Some("test") => Split::Test,
            Some("valid") => Split::Valid,
            Some(other) => {
                return Err(Error::Config(format!("bad apply_split `{other}`")));
            }
        };

        Ok(Config {
            train: required("train")?,
            valid: required("valid")?,
            test: required("test")?,
            rules: path_key("rules", "rules.tsv"),
            sims: path_key("sims", "sims.bin"),
            thresholds: path_key("thresholds", "thresholds.tsv"),
            predictions: path_key("predictions", "predictions.txt"),
            report: path_key("report", "report.txt"),
            clusters: map.get("clusters").map(|v| resolve(v)),
            seed: num!("seed", 42, u64),
            threads: num!("threads", 0, usize),
            top_k: num!("top_k", 100, usize),
            minhash_k: num!("minhash_k", 256, usize),
            miner_mode,
            miner_iterations: num!("miner_iterations", 50_000, u64),
            miner_seconds: num!("miner_seconds", 1000.0, f64),
            max_len_cyclic: num!("max_len_cyclic", 3, usize),
            max_len_acyclic: num!("max_len_acyclic", 1, usize),
            allow_reflexive,
            min_support: num!("min_support", 2, u64),
            min_confidence: num!("min_confidence", 0.0001, f64),
            grid_steps: num!("grid_steps", 200, u32),
            random_levels: num!("random_levels", 10, u32),
            random_iterations: num!("random_iterations", 10_000, u64),
            random_continuous,
            groundings_cap: num!("groundings_cap", 100_000, usize),
            apply_split,
            hash,
        })
    }

    pub fn limits(&self) -> GroundingLimits {
        GroundingLimits {
            max_groundings: self.groundings_cap,
        }
    }

    pub fn miner_config(&self) -> MinerConfig {
        MinerConfig {
            max_len_cyclic: self.max_len_cyclic,
            max_len_acyclic: self.max_len_acyclic,
            allow_reflexive: self.allow_reflexive,
            min_support: self.min_support,
            min_confidence: self.min_confidence,
            seed: self.seed,
            limits: self.limits(),
            walk_attempts: 20,
        }
    }

    pub fn mine_budget(&self) -> MineBudget {
        match self.miner_mode {
            MineMode::Iterations => MineBudget::Iterations(self.miner_iterations),
            MineMode::Seconds => MineBudget::Seconds(self.miner_seconds),
        }
    }
}
