//! Helpers shared by the integration suites.

#![allow(dead_code)]

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rulerank::infer::PredictionTask;
use rulerank::kg::{Dataset, Dictionaries, EntityId, KnowledgeGraph, Split, Triple};
use rulerank::rules::{Rule, Term};

pub fn avalanche(x: u64) -> u64 {
    rulerank::hash::avalanche(x)
}

/// Build a graph plus dictionaries from string triples.
pub fn graph_from(lines: &[(&str, &str, &str)]) -> (Dictionaries, KnowledgeGraph) {
    let mut dicts = Dictionaries::new();
    let triples: Vec<Triple> = lines
        .iter()
        .map(|(h, r, t)| {
            Triple::new(
                dicts.intern_entity(h),
                dicts.intern_relation(r),
                dicts.intern_entity(t),
            )
        })
        .collect();
    let g = KnowledgeGraph::from_triples(triples, &dicts, Split::Train);
    (dicts, g)
}

/// Write the bundled synthetic dataset plus a config into `dir`.
/// `overrides` replace default keys. The config file is named
/// `run<name>.conf` when an override named "@file" is present.
pub fn synth_config(dir: &Path, overrides: &[(&str, &str)]) -> PathBuf {
    let ds = rulerank::synth::planted(42);
    rulerank::synth::write_all(dir, &ds).unwrap();
    fs::create_dir_all(dir.join("out")).unwrap();
    let mut map: std::collections::BTreeMap<&str, &str> = [
        ("train", "train.tsv"),
        ("valid", "valid.tsv"),
        ("test", "test.tsv"),
        ("rules", "out/rules.tsv"),
        ("sims", "out/sims.bin"),
        ("thresholds", "out/thresholds.tsv"),
        ("predictions", "out/predictions.txt"),
        ("report", "out/report.txt"),
        ("clusters", "out/clusters.tsv"),
        ("seed", "42"),
        ("threads", "0"),
        ("top_k", "100"),
        ("minhash_k", "128"),
        ("miner_mode", "iterations"),
        ("miner_iterations", "20000"),
        ("max_len_cyclic", "3"),
        ("max_len_acyclic", "1"),
        ("min_support", "2"),
        ("min_confidence", "0.0001"),
        ("grid_steps", "50"),
        ("random_levels", "10"),
        ("random_iterations", "300"),
        ("apply_split", "test"),
    ]
    .into_iter()
    .collect();
    let mut file_name = "run.conf".to_string();
    for (k, v) in overrides {
        if *k == "@file" {
            file_name = v.to_string();
        } else {
            map.insert(k, v);
        }
    }
    let mut conf = String::new();
    for (k, v) in &map {
        conf.push_str(&format!("{k}={v}\n"));
    }
    let path = dir.join(file_name);
    fs::write(&path, conf).unwrap();
    path
}

/// Read `key=value` pairs out of a report file.
pub fn report_value(report: &str, key: &str) -> Option<f64> {
    for line in report.lines() {
        for field in line.split_whitespace() {
            if let Some(rest) = field.strip_prefix(key) {
                if let Some(v) = rest.strip_prefix('=') {
                    return v.parse().ok();
                }
            }
        }
    }
    None
}

/// Brute-force inferred set: enumerate every variable assignment over all
/// entities and keep head instantiations whose body atoms are all stored.
/// Kept independent of the engine's frontier propagation.
pub fn oracle_infer(rule: &Rule, g: &KnowledgeGraph) -> Vec<Triple> {
    let mut vars: Vec<u8> = Vec::new();
    let mut see = |t: &Term| {
        if let Term::Var(v) = t {
            if !vars.contains(v) {
                vars.push(*v);
            }
        }
    };
    for t in &rule.head.terms {
        see(t);
    }
    for a in &rule.body {
        for t in &a.terms {
            see(t);
        }
    }
    let n = g.num_entities() as usize;
    let mut out: HashSet<Triple> = HashSet::new();
    if n == 0 {
        return Vec::new();
    }
    let mut assign = vec![0usize; vars.len()];
    loop {
        let value = |term: &Term| -> EntityId {
            match term {
                Term::Var(v) => {
                    let i = vars.iter().position(|x| x == v).unwrap();
                    EntityId(assign[i] as u32)
                }
                Term::Const(c) => *c,
            }
        };
        let holds = rule.body.iter().all(|a| {
            g.contains(Triple::new(
                value(&a.terms[0]),
                a.relation,
                value(&a.terms[1]),
            ))
        });
        if holds {
            out.insert(Triple::new(
                value(&rule.head.terms[0]),
                rule.head.relation,
                value(&rule.head.terms[1]),
            ));
        }
        let mut i = 0;
        loop {
            if i == assign.len() {
                let mut v: Vec<Triple> = out.into_iter().collect();
                v.sort_unstable();
                return v;
            }
            assign[i] += 1;
            if assign[i] < n {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
        if assign.iter().all(|&x| x == 0) {
            let mut v: Vec<Triple> = out.into_iter().collect();
            v.sort_unstable();
            return v;
        }
    }
}

/// Slot projection of the brute-force inferred set for a task.
pub fn oracle_candidates(rule: &Rule, task: &PredictionTask, g: &KnowledgeGraph) -> Vec<EntityId> {
    use rulerank::rules::Direction;
    let mut out: Vec<EntityId> = oracle_infer(rule, g)
        .into_iter()
        .filter_map(|t| match task.direction {
            Direction::Tail if t.head == task.known => Some(t.tail),
            Direction::Head if t.tail == task.known => Some(t.head),
            _ => None,
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Independent union-find with path halving, for the clustering oracle.
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[rb] = ra;
        }
    }

    /// Partition as a sorted set of sorted groups.
    pub fn partition(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = self.find(i);
            groups.entry(r).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        for g in &mut out {
            g.sort_unstable();
        }
        out.sort();
        out
    }
}

/// Normalize a ClusterModel partition for comparison.
pub fn normalized_partition(clusters: &[Vec<u32>]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = clusters
        .iter()
        .map(|c| {
            let mut v: Vec<usize> = c.iter().map(|&x| x as usize).collect();
            v.sort_unstable();
            v
        })
        .collect();
    out.sort();
    out
}

pub fn load_dataset(dir: &Path) -> Dataset {
    Dataset::load(
        &dir.join("train.tsv"),
        &dir.join("valid.tsv"),
        &dir.join("test.tsv"),
    )
    .unwrap()
}
