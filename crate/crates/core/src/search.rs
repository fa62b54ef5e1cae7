//! Per-(relation, direction) threshold learning by grid or random search,
//! maximizing validation MRR of Non-redundant Noisy-OR.
//!
//! Candidate vectors are evaluated against cached per-task firings and a
//! cached similarity matrix; only the clustering is recomputed per vector.
//! Both searches reduce deterministically: best fitness first, then the
//! lexicographically smaller vector, so parallel evaluation and reruns
//! agree. Random search always evaluates the all-zeros and all-ones
//! baselines, so its result is never worse than plain Maximum or Noisy-OR
//! on the validation pair.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agg::{aggregate_nrno, Firings};
use crate::cluster::{cluster, ThresholdVector};
use crate::error::{Error, Result};
use crate::eval::{mrr, rank_of, Rank, TiePolicy};
use crate::kg::{Dictionaries, EntityId, RelationId};
use crate::rules::{Direction, RuleType};
use crate::sim::SimilarityMatrix;

/// One validation task: its target and the pre-filtered firings of the
/// pair's rules (local indices aligned with the similarity matrix).
#[derive(Debug, Clone)]
pub struct TaskFirings {
    pub target: EntityId,
    pub firings: Firings,
}

/// Everything the search needs for one (relation, direction) pair.
#[derive(Debug)]
pub struct PairContext {
    pub relation: RelationId,
    pub direction: Direction,
    /// Rule types, local order aligned with the similarity matrix.
    pub types: Vec<RuleType>,
    pub sims: SimilarityMatrix,
    pub tasks: Vec<TaskFirings>,
    pub top_k: usize,
}

/// Validation MRR (average tie policy) of NRNO clustered with `t`.
pub fn fitness(ctx: &PairContext, t: &ThresholdVector) -> Result<f64> {
    if ctx.tasks.is_empty() {
        return Err(Error::EmptyTasks);
    }
    let model = cluster(&ctx.types, &ctx.sims, t);
    let ranks: Vec<Rank> = ctx
        .tasks
        .iter()
        .map(|task| {
            let ranking = aggregate_nrno(&task.firings, &model.assignment, ctx.top_k);
            rank_of(task.target, &ranking, TiePolicy::Average, 0)
        })
        .collect();
    mrr(&ranks)
}

/// Equally spaced grid levels over [0, 1], endpoints included.
pub fn grid_levels(n: u32) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

fn lex_less(a: &ThresholdVector, b: &ThresholdVector) -> bool {
    for i in 0..6 {
        match a.0[i].total_cmp(&b.0[i]) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// True when `a` beats `b`: higher fitness, ties to the lexicographically
/// smaller vector.
fn better(a: &(ThresholdVector, f64), b: &(ThresholdVector, f64)) -> bool {
    match a.1.total_cmp(&b.1) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => lex_less(&a.0, &b.0),
    }
}

fn best_of(ctx: &PairContext, candidates: Vec<ThresholdVector>) -> (ThresholdVector, Option<f64>) {
    if ctx.tasks.is_empty() {
        // pair absent from validation: degenerate to Maximum
        return (ThresholdVector::zeros(), None);
    }
    let winner = candidates
        .into_par_iter()
        .map(|t| {
            let f = fitness(ctx, &t).expect("tasks checked non-empty");
            (t, f)
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a })
        .expect("at least one candidate");
    (winner.0, Some(winner.1))
}

/// Sweep uniform vectors [t,...,t] for t over `n` grid steps; ties prefer
/// the smaller t.
pub fn grid_search(ctx: &PairContext, n: u32) -> (ThresholdVector, Option<f64>) {
    let candidates = grid_levels(n)
        .into_iter()
        .map(ThresholdVector::uniform)
        .collect();
    best_of(ctx, candidates)
}

fn random_candidates(
    levels: u32,
    iterations: u64,
    seed: u64,
    continuous: bool,
) -> Vec<ThresholdVector> {
    let mut out = vec![ThresholdVector::zeros(), ThresholdVector::ones()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..iterations {
        let mut v = [0.0; 6];
        for slot in &mut v {
            *slot = if continuous {
                rng.gen_range(0.0..=1.0)
            } else {
                rng.gen_range(0..=levels) as f64 / levels as f64
            };
        }
        out.push(ThresholdVector(v));
    }
    out
}

/// Sample `iterations` vectors with each of the six type-specific
/// components drawn uniformly from the `levels`-step lattice, or from
/// continuous [0, 1] when `continuous` is set. The degenerate baselines
/// are always evaluated too.
pub fn random_search(
    ctx: &PairContext,
    levels: u32,
    iterations: u64,
    seed: u64,
    continuous: bool,
) -> (ThresholdVector, Option<f64>) {
    best_of(ctx, random_candidates(levels, iterations, seed, continuous))
}

// ---------------------------------------------------------------------------
// thresholds file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ThresholdRow {
    pub relation: RelationId,
    pub direction: Direction,
    pub thresholds: ThresholdVector,
    /// Validation fitness; absent for pairs missing from the validation set.
    pub fitness: Option<f64>,
}

/// `relation<TAB>direction<TAB>t1 t2 t3 t4 t5 t6<TAB>fitness` per line.
pub fn write_thresholds(
    path: &Path,
    rows: &[ThresholdRow],
    dicts: &Dictionaries,
    header: &[String],
) -> Result<()> {
    let mut out = Vec::new();
    for line in header {
        writeln!(out, "{line}").expect("vec write");
    }
    for row in rows {
        let fit = match row.fitness {
            Some(f) => f.to_string(),
            None => "nan".to_string(),
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            dicts.relation_name(row.relation)?,
            row.direction,
            row.thresholds.to_field(),
            fit
        )
        .expect("vec write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_thresholds(
    path: &Path,
    dicts: &Dictionaries,
) -> Result<BTreeMap<(RelationId, Direction), ThresholdVector>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Config(format!(
                "{}:{}: thresholds line needs 4 fields",
                path.display(),
                i + 1
            )));
        }
        let relation = dicts
            .relation_id(fields[0])
            .ok_or_else(|| Error::UnknownRelation(fields[0].to_string()))?;
        let direction = Direction::parse(fields[1])?;
        let thresholds = ThresholdVector::parse_field(fields[2])?;
        map.insert((relation, direction), thresholds);
    }
    Ok(map)
}
