//! Candidate scoring under Maximum, Noisy-OR, Non-redundant Noisy-OR, and
//! the per-relation validation selector.
//!
//! Maximum orders entities by their full descending confidence sequence
//! (ties broken by the next-best confidence, and finally by entity id).
//! Noisy-OR scores 1 - prod(1 - conf). Non-redundant Noisy-OR takes the
//! maximum inside each redundancy cluster and Noisy-OR across clusters; a
//! cluster where the entity has no firing rule contributes factor 1. A
//! single firing confidence (or a single fired cluster) scores as that
//! confidence itself, which keeps the degenerate threshold equivalences
//! bit-exact.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::infer::{candidates, GroundingLimits, PredictionTask};
use crate::kg::{Dictionaries, EntityId, KnowledgeGraph, RelationId, Triple};
use crate::rules::{Direction, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Maximum,
    NoisyOr,
    Nrno,
    Vs,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Maximum => write!(f, "max"),
            Strategy::NoisyOr => write!(f, "noisyor"),
            Strategy::Nrno => write!(f, "nrno"),
            Strategy::Vs => write!(f, "vs"),
        }
    }
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Strategy::Maximum),
            "noisyor" => Ok(Strategy::NoisyOr),
            "nrno" => Ok(Strategy::Nrno),
            "vs" => Ok(Strategy::Vs),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

/// Per-entity firing confidences for one task. Inner lists carry the local
/// index of the firing rule within its (relation, direction) group, in
/// group order, so products are evaluated in a fixed order.
#[derive(Debug, Clone, Default)]
pub struct Firings {
    pub per_entity: Vec<(EntityId, Vec<(u32, f64)>)>,
}

impl Firings {
    pub fn from_pairs(mut pairs: Vec<(EntityId, Vec<(u32, f64)>)>) -> Self {
        pairs.sort_by_key(|(e, _)| *e);
        Firings { per_entity: pairs }
    }

    pub fn is_empty(&self) -> bool {
        self.per_entity.is_empty()
    }
}

/// Apply every rule of the task's group and collect filtered firings.
/// `group` holds global rule indices; firing lists use positions within
/// `group` as local rule indices.
pub fn collect_firings(
    rules: &[Rule],
    group: &[u32],
    task: &PredictionTask,
    g: &KnowledgeGraph,
    limits: GroundingLimits,
) -> Result<Firings> {
    let mut map: HashMap<EntityId, Vec<(u32, f64)>> = HashMap::new();
    for (local, &ri) in group.iter().enumerate() {
        let rule = &rules[ri as usize];
        let cands = candidates(rule, task, g, limits)?;
        for e in cands.entities {
            if task.is_filtered(e) {
                continue;
            }
            map.entry(e)
                .or_default()
                .push((local as u32, rule.confidence));
        }
    }
    Ok(Firings::from_pairs(map.into_iter().collect()))
}

/// Ranked candidates, scores non-increasing, ties in deterministic entity
/// order, at most k entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRanking {
    pub entries: Vec<(EntityId, f64)>,
}

impl CandidateRanking {
    pub fn position(&self, e: EntityId) -> Option<usize> {
        self.entries.iter().position(|(x, _)| *x == e)
    }
}

/// Compare descending confidence sequences lexicographically; a missing
/// position ranks below any present confidence.
fn cmp_conf_sequences(a: &[f64], b: &[f64]) -> Ordering {
    let len = a.len().max(b.len());
    for i in 0..len {
        let av = a.get(i).copied().unwrap_or(-1.0);
        let bv = b.get(i).copied().unwrap_or(-1.0);
        match bv.total_cmp(&av) {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
    Ordering::Equal
}

pub fn aggregate_max(firings: &Firings, k: usize) -> CandidateRanking {
    let mut items: Vec<(EntityId, Vec<f64>)> = firings
        .per_entity
        .iter()
        .map(|(e, fired)| {
            let mut confs: Vec<f64> = fired.iter().map(|(_, c)| *c).collect();
            confs.sort_unstable_by(|x, y| y.total_cmp(x));
            (*e, confs)
        })
        .collect();
    items.sort_by(|a, b| cmp_conf_sequences(&a.1, &b.1).then_with(|| a.0.cmp(&b.0)));
    items.truncate(k);
    CandidateRanking {
        entries: items.into_iter().map(|(e, confs)| (e, confs[0])).collect(),
    }
}

fn noisy_product(confs: impl ExactSizeIterator<Item = f64> + Clone) -> f64 {
    if confs.len() == 1 {
        return confs.clone().next().expect("len checked");
    }
    let mut miss = 1.0;
    for c in confs {
        miss *= 1.0 - c;
    }
    1.0 - miss
}

fn rank_by_score(mut scored: Vec<(EntityId, f64)>, k: usize) -> CandidateRanking {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    CandidateRanking { entries: scored }
}

pub fn aggregate_noisy_or(firings: &Firings, k: usize) -> CandidateRanking {
    let scored = firings
        .per_entity
        .iter()
        .map(|(e, fired)| (*e, noisy_product(fired.iter().map(|(_, c)| *c))))
        .collect();
    rank_by_score(scored, k)
}

/// Non-redundant Noisy-OR: `assignment` maps a local rule index to its
/// cluster.
pub fn aggregate_nrno(firings: &Firings, assignment: &[u32], k: usize) -> CandidateRanking {
    let scored = firings
        .per_entity
        .iter()
        .map(|(e, fired)| {
            let mut maxima: BTreeMap<u32, f64> = BTreeMap::new();
            for &(local, conf) in fired {
                let slot = maxima.entry(assignment[local as usize]).or_insert(conf);
                if conf > *slot {
                    *slot = conf;
                }
            }
            (*e, noisy_product(maxima.values().copied()))
        })
        .collect();
    rank_by_score(scored, k)
}

/// Pick the better of Maximum and Noisy-OR per (relation, direction) from
/// validation MRRs. Ties go to Maximum; pairs absent from the map should
/// also fall back to Maximum at apply time.
pub fn select_vs(
    validation: &BTreeMap<(RelationId, Direction), (f64, f64)>,
) -> BTreeMap<(RelationId, Direction), Strategy> {
    validation
        .iter()
        .map(|(&key, &(max_mrr, noisy_mrr))| {
            let pick = if noisy_mrr > max_mrr {
                Strategy::NoisyOr
            } else {
                Strategy::Maximum
            };
            (key, pick)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// prediction files
// ---------------------------------------------------------------------------

/// Rankings for both directions of one evaluation triple.
#[derive(Debug, Clone)]
pub struct TaskPredictions {
    pub triple: Triple,
    pub heads: CandidateRanking,
    pub tails: CandidateRanking,
}

fn ranking_line(label: &str, r: &CandidateRanking, dicts: &Dictionaries) -> Result<String> {
    if r.entries.is_empty() {
        return Ok(format!("{label}:"));
    }
    let mut parts = Vec::with_capacity(r.entries.len() * 2);
    for (e, s) in &r.entries {
        parts.push(dicts.entity_name(*e)?.to_string());
        parts.push(s.to_string());
    }
    Ok(format!("{label}: {}", parts.join("\t")))
}

/// Three lines per task: the triple, then `Heads: e<TAB>score<TAB>...`,
/// then `Tails: ...`, scores in full precision.
pub fn write_predictions(
    path: &Path,
    preds: &[TaskPredictions],
    dicts: &Dictionaries,
    header: &[String],
) -> Result<()> {
    let mut out = Vec::new();
    for line in header {
        writeln!(out, "{line}").expect("vec write");
    }
    for p in preds {
        writeln!(
            out,
            "{}\t{}\t{}",
            dicts.entity_name(p.triple.head)?,
            dicts.relation_name(p.triple.relation)?,
            dicts.entity_name(p.triple.tail)?
        )
        .expect("vec write");
        writeln!(out, "{}", ranking_line("Heads", &p.heads, dicts)?).expect("vec write");
        writeln!(out, "{}", ranking_line("Tails", &p.tails, dicts)?).expect("vec write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_ranking_line(
    path: &Path,
    lineno: usize,
    line: &str,
    label: &str,
    dicts: &Dictionaries,
) -> Result<CandidateRanking> {
    let bad = |msg: String| Error::PredictionFormat {
        path: path.to_path_buf(),
        line: lineno,
        msg,
    };
    let rest = line
        .strip_prefix(label)
        .and_then(|r| r.strip_prefix(':'))
        .ok_or_else(|| bad(format!("expected `{label}:` line")))?;
    let rest = rest.strip_prefix(' ').unwrap_or(rest);
    if rest.is_empty() {
        return Ok(CandidateRanking { entries: vec![] });
    }
    let fields: Vec<&str> = rest.split('\t').collect();
    if !fields.len().is_multiple_of(2) {
        return Err(bad("odd number of entity/score fields".into()));
    }
    let mut entries = Vec::with_capacity(fields.len() / 2);
    for pair in fields.chunks(2) {
        let e = dicts
            .entity_id(pair[0])
            .ok_or_else(|| bad(format!("unknown entity `{}`", pair[0])))?;
        let s: f64 = pair[1]
            .parse()
            .map_err(|_| bad(format!("bad score `{}`", pair[1])))?;
        entries.push((e, s));
    }
    Ok(CandidateRanking { entries })
}

pub fn read_predictions(path: &Path, dicts: &Dictionaries) -> Result<Vec<TaskPredictions>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let numbered: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.starts_with('#') && !l.is_empty())
        .collect();
    if !numbered.len().is_multiple_of(3) {
        return Err(Error::PredictionFormat {
            path: path.to_path_buf(),
            line: numbered.last().map(|(i, _)| *i).unwrap_or(0),
            msg: "file does not consist of 3-line task groups".into(),
        });
    }
    let mut out = Vec::with_capacity(numbered.len() / 3);
    for group in numbered.chunks(3) {
        let (lineno, triple_line) = group[0];
        let fields: Vec<&str> = triple_line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::PredictionFormat {
                path: path.to_path_buf(),
                line: lineno,
                msg: "triple line needs 3 tab-separated fields".into(),
            });
        }
        let resolve = |name: &str| {
            dicts
                .entity_id(name)
                .ok_or_else(|| Error::PredictionFormat {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("unknown entity `{name}`"),
                })
        };
        let head = resolve(fields[0])?;
        let relation = dicts
            .relation_id(fields[1])
            .ok_or_else(|| Error::PredictionFormat {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("unknown relation `{}`", fields[1]),
            })?;
        let tail = resolve(fields[2])?;
        let heads = parse_ranking_line(path, group[1].0, group[1].1, "Heads", dicts)?;
        let tails = parse_ranking_line(path, group[2].0, group[2].1, "Tails", dicts)?;
        out.push(TaskPredictions {
            triple: Triple::new(head, relation, tail),
            heads,
            tails,
        });
    }
    Ok(out)
}
