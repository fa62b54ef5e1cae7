//! Stage orchestration shared by the CLI: mine, calc-sims, search, apply,
//! eval. Every stage is deterministic given identical inputs, seeds, and
//! any thread count; all intra-stage parallelism reduces in fixed order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::agg::{
    aggregate_max, aggregate_noisy_or, aggregate_nrno, collect_firings, select_vs,
    write_predictions, CandidateRanking, Strategy, TaskPredictions,
};
use crate::cluster::{cluster, write_clusters, ClusterModel};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{
    build_filter, mrr, rank_of, EvalReport, Rank, TaskOutcome, TiePolicy, ALL_POLICIES,
};
use crate::hash::{derive_seed, mix};
use crate::infer::PredictionTask;
use crate::kg::{Dataset, RelationId, Split, Triple};
use crate::mine::mine;
use crate::rules::{Direction, RuleSet, RuleType};
use crate::search::{
    grid_search, random_search, write_thresholds, PairContext, TaskFirings, ThresholdRow,
};
use crate::sim::{CacheMeta, SignatureSet, SimilarityMatrix};

/// Comment header recorded at the top of every stage output.
#[derive(Debug, Clone)]
pub struct FileHeader {
    pub tool: String,
    pub config_hash: u64,
    pub seed: u64,
}

impl FileHeader {
    pub fn from_config(cfg: &Config) -> Self {
        FileHeader {
            tool: crate::VERSION.to_string(),
            config_hash: cfg.hash,
            seed: cfg.seed,
        }
    }

    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("# generated-by={}", self.tool),
            format!("# config-hash={:016x}", self.config_hash),
            format!("# seed={}", self.seed),
        ]
    }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

fn require(path: &Path, what: &str, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            what: what.to_string(),
            path: path.to_path_buf(),
            producer: producer.to_string(),
        })
    }
}

pub fn load_dataset(cfg: &Config) -> Result<Dataset> {
    Dataset::load(&cfg.train, &cfg.valid, &cfg.test)
}

fn load_rules(cfg: &Config, ds: &Dataset) -> Result<RuleSet> {
    require(&cfg.rules, "rule file", "mine")?;
    RuleSet::load(&cfg.rules, &ds.dicts)
}

fn load_signatures(cfg: &Config, rules: &RuleSet) -> Result<SignatureSet> {
    require(&cfg.sims, "signature cache", "calc-sims")?;
    let (sigs, meta) = SignatureSet::load(&cfg.sims)?;
    if meta.rule_count != rules.len() as u64 || meta.rules_fingerprint != rules.fingerprint() {
        return Err(Error::CacheFormat {
            path: cfg.sims.clone(),
            msg: "cache does not match the rule file; rerun `calc-sims`".into(),
        });
    }
    if sigs.k() != cfg.minhash_k {
        return Err(Error::CacheFormat {
            path: cfg.sims.clone(),
            msg: format!(
                "cache was built with k={}, config says {}; rerun `calc-sims`",
                sigs.k(),
                cfg.minhash_k
            ),
        });
    }
    Ok(sigs)
}

/// Both prediction tasks of one evaluation triple.
#[derive(Debug, Clone)]
pub struct EvalTask {
    pub triple: Triple,
    pub head: PredictionTask,
    pub tail: PredictionTask,
}

/// Filtered tasks for every triple of a split, in triple order.
pub fn tasks_for_split(ds: &Dataset, split: Split) -> Vec<EvalTask> {
    ds.graph(split)
        .triples()
        .iter()
        .map(|&t| EvalTask {
            triple: t,
            head: PredictionTask::new(
                t.tail,
                t.relation,
                Direction::Head,
                build_filter(ds, t.tail, t.relation, Direction::Head, t.head),
                t.head,
            ),
            tail: PredictionTask::new(
                t.head,
                t.relation,
                Direction::Tail,
                build_filter(ds, t.head, t.relation, Direction::Tail, t.tail),
                t.tail,
            ),
        })
        .collect()
}

fn group_validation_tasks(ds: &Dataset) -> BTreeMap<(RelationId, Direction), Vec<PredictionTask>> {
    let mut map: BTreeMap<(RelationId, Direction), Vec<PredictionTask>> = BTreeMap::new();
    for task in tasks_for_split(ds, Split::Valid) {
        map.entry((task.triple.relation, Direction::Head))
            .or_default()
            .push(task.head);
        map.entry((task.triple.relation, Direction::Tail))
            .or_default()
            .push(task.tail);
    }
    map
}

fn dir_code(d: Direction) -> u64 {
    match d {
        Direction::Head => 0,
        Direction::Tail => 1,
    }
}

pub fn stage_mine(cfg: &Config) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let header = FileHeader::from_config(cfg).lines();
    let rules =
        pool(cfg.threads).install(|| mine(&ds.train, cfg.mine_budget(), &cfg.miner_config()));
    log::info!("mined {} rules", rules.len());
    rules.save(&cfg.rules, &ds.dicts, &header)
}

pub fn stage_calc_sims(cfg: &Config) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let rules = load_rules(cfg, &ds)?;
    let sigs = pool(cfg.threads).install(|| {
        SignatureSet::compute(&rules, &ds.train, cfg.limits(), cfg.minhash_k, cfg.seed)
    });
    let meta = CacheMeta {
        tool: crate::VERSION.to_string(),
        config_hash: cfg.hash,
        rules_fingerprint: rules.fingerprint(),
        rule_count: rules.len() as u64,
    };
    sigs.save(&cfg.sims, &meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    Grid,
    Random,
}

impl SearchStrategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(SearchStrategy::Grid),
            "random" => Ok(SearchStrategy::Random),
            other => Err(Error::Config(format!("unknown search strategy `{other}`"))),
        }
    }
}

pub fn stage_search(cfg: &Config, strategy: SearchStrategy) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let rules = load_rules(cfg, &ds)?;
    let sigs = load_signatures(cfg, &rules)?;
    let valid_tasks = group_validation_tasks(&ds);
    let pairs = rules.pairs();

    let rows: Vec<ThresholdRow> = pool(cfg.threads).install(|| {
        pairs
            .par_iter()
            .map(|&(rel, dir)| -> Result<ThresholdRow> {
                let group = rules.group(rel, dir);
                let members: Vec<u32> = group
                    .iter()
                    .copied()
                    .filter(|&ri| sigs.sigs[ri as usize].is_some())
                    .collect();
                let tasks = valid_tasks.get(&(rel, dir));
                if members.is_empty() || tasks.is_none() {
                    // no validation evidence: degenerate to Maximum
                    return Ok(ThresholdRow {
                        relation: rel,
                        direction: dir,
                        thresholds: crate::cluster::ThresholdVector::zeros(),
                        fitness: None,
                    });
                }
                let tasks = tasks.expect("checked");
                let types: Vec<RuleType> = members
                    .iter()
                    .map(|&ri| rules.rules()[ri as usize].rule_type)
                    .collect();
                let sims = SimilarityMatrix::build(rel, dir, members.clone(), &sigs);
                let task_firings = tasks
                    .iter()
                    .map(|task| {
                        Ok(TaskFirings {
                            target: task.target,
                            firings: collect_firings(
                                rules.rules(),
                                &members,
                                task,
                                &ds.train,
                                cfg.limits(),
                            )?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let ctx = PairContext {
                    relation: rel,
                    direction: dir,
                    types,
                    sims,
                    tasks: task_firings,
                    top_k: cfg.top_k,
                };
                let (thresholds, fitness) = match strategy {
                    SearchStrategy::Grid => grid_search(&ctx, cfg.grid_steps),
                    SearchStrategy::Random => {
                        let seed = mix(mix(cfg.seed, rel.0 as u64), dir_code(dir));
                        random_search(
                            &ctx,
                            cfg.random_levels,
                            cfg.random_iterations,
                            seed,
                            cfg.random_continuous,
                        )
                    }
                };
                Ok(ThresholdRow {
                    relation: rel,
                    direction: dir,
                    thresholds,
                    fitness,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let header = FileHeader::from_config(cfg).lines();
    write_thresholds(&cfg.thresholds, &rows, &ds.dicts, &header)
}

/// Per-pair state prepared for NRNO application.
struct NrnoPair {
    members: Vec<u32>,
    model: ClusterModel,
}

pub fn stage_apply(cfg: &Config, strategy: Strategy, split: Option<Split>) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let rules = load_rules(cfg, &ds)?;
    let split = split.unwrap_or(cfg.apply_split);
    let tasks = tasks_for_split(&ds, split);

    // pairs the split actually queries
    let needed: BTreeSet<(RelationId, Direction)> = tasks
        .iter()
        .flat_map(|t| {
            [
                (t.triple.relation, Direction::Head),
                (t.triple.relation, Direction::Tail),
            ]
        })
        .collect();

    pool(cfg.threads).install(|| -> Result<()> {
        // strategy-specific preparation
        let mut nrno_pairs: BTreeMap<(RelationId, Direction), NrnoPair> = BTreeMap::new();
        if strategy == Strategy::Nrno {
            let sigs = load_signatures(cfg, &rules)?;
            require(&cfg.thresholds, "thresholds file", "search")?;
            let thresholds = crate::search::read_thresholds(&cfg.thresholds, &ds.dicts)?;
            for &(rel, dir) in &needed {
                let Some(t) = thresholds.get(&(rel, dir)) else {
                    continue; // fall back to Maximum for this pair
                };
                let members: Vec<u32> = rules
                    .group(rel, dir)
                    .iter()
                    .copied()
                    .filter(|&ri| sigs.sigs[ri as usize].is_some())
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let types: Vec<RuleType> = members
                    .iter()
                    .map(|&ri| rules.rules()[ri as usize].rule_type)
                    .collect();
                let sims = SimilarityMatrix::build(rel, dir, members.clone(), &sigs);
                let model = cluster(&types, &sims, t);
                nrno_pairs.insert((rel, dir), NrnoPair { members, model });
            }
            if let Some(cluster_path) = &cfg.clusters {
                let models: Vec<ClusterModel> =
                    nrno_pairs.values().map(|p| p.model.clone()).collect();
                write_clusters(
                    cluster_path,
                    &models,
                    &ds.dicts,
                    &FileHeader::from_config(cfg).lines(),
                )?;
            }
        }

        let mut vs_picks: BTreeMap<(RelationId, Direction), Strategy> = BTreeMap::new();
        if strategy == Strategy::Vs {
            let valid_tasks = group_validation_tasks(&ds);
            let entries: Vec<((RelationId, Direction), (f64, f64))> = valid_tasks
                .iter()
                .collect::<Vec<_>>()
                .par_iter()
                .map(|(&pair, tasks)| -> Result<_> {
                    let group = rules.group(pair.0, pair.1);
                    let mut max_ranks = Vec::with_capacity(tasks.len());
                    let mut noisy_ranks = Vec::with_capacity(tasks.len());
                    for task in tasks.iter() {
                        let firings =
                            collect_firings(rules.rules(), group, task, &ds.train, cfg.limits())?;
                        let max_ranking = aggregate_max(&firings, cfg.top_k);
                        let noisy_ranking = aggregate_noisy_or(&firings, cfg.top_k);
                        max_ranks.push(rank_of(task.target, &max_ranking, TiePolicy::Average, 0));
                        noisy_ranks.push(rank_of(
                            task.target,
                            &noisy_ranking,
                            TiePolicy::Average,
                            0,
                        ));
                    }
                    Ok((pair, (mrr(&max_ranks)?, mrr(&noisy_ranks)?)))
                })
                .collect::<Result<Vec<_>>>()?;
            let validation: BTreeMap<_, _> = entries.into_iter().collect();
            vs_picks = select_vs(&validation);
        }

        let rank_task = |task: &PredictionTask| -> Result<CandidateRanking> {
            let pair = (task.relation, task.direction);
            let group = rules.group(task.relation, task.direction);
            let effective = match strategy {
                Strategy::Maximum => Strategy::Maximum,
                Strategy::NoisyOr => Strategy::NoisyOr,
                Strategy::Nrno => Strategy::Nrno,
                Strategy::Vs => vs_picks.get(&pair).copied().unwrap_or(Strategy::Maximum),
            };
            match effective {
                Strategy::Nrno => match nrno_pairs.get(&pair) {
                    Some(p) => {
                        let firings = collect_firings(
                            rules.rules(),
                            &p.members,
                            task,
                            &ds.train,
                            cfg.limits(),
                        )?;
                        Ok(aggregate_nrno(&firings, &p.model.assignment, cfg.top_k))
                    }
                    None => {
                        // relation unseen in validation: Maximum aggregation
                        let firings =
                            collect_firings(rules.rules(), group, task, &ds.train, cfg.limits())?;
                        Ok(aggregate_max(&firings, cfg.top_k))
                    }
                },
                Strategy::NoisyOr => {
                    let firings =
                        collect_firings(rules.rules(), group, task, &ds.train, cfg.limits())?;
                    Ok(aggregate_noisy_or(&firings, cfg.top_k))
                }
                _ => {
                    let firings =
                        collect_firings(rules.rules(), group, task, &ds.train, cfg.limits())?;
                    Ok(aggregate_max(&firings, cfg.top_k))
                }
            }
        };

        let preds: Vec<TaskPredictions> = tasks
            .par_iter()
            .map(|t| -> Result<TaskPredictions> {
                Ok(TaskPredictions {
                    triple: t.triple,
                    heads: rank_task(&t.head)?,
                    tails: rank_task(&t.tail)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let header = FileHeader::from_config(cfg).lines();
        write_predictions(&cfg.predictions, &preds, &ds.dicts, &header)
    })
}

pub fn stage_eval(cfg: &Config, policy: TiePolicy) -> Result<()> {
    let ds = load_dataset(cfg)?;
    require(&cfg.predictions, "prediction file", "apply")?;
    let preds = crate::agg::read_predictions(&cfg.predictions, &ds.dicts)?;
    if preds.is_empty() {
        return Err(Error::EmptyTasks);
    }

    let outcomes: Vec<TaskOutcome> = pool(cfg.threads).install(|| {
        preds
            .par_iter()
            .enumerate()
            .flat_map(|(i, p)| {
                let make = |direction: Direction,
                            ranking: &CandidateRanking,
                            task_index: u64|
                 -> TaskOutcome {
                    let (known, target) = match direction {
                        Direction::Head => (p.triple.tail, p.triple.head),
                        Direction::Tail => (p.triple.head, p.triple.tail),
                    };
                    let filter = build_filter(&ds, known, p.triple.relation, direction, target);
                    let mut filtered = ranking.clone();
                    filtered
                        .entries
                        .retain(|(e, _)| filter.binary_search(e).is_err());
                    let seed = derive_seed(cfg.seed, task_index);
                    let mut ranks = [Rank::Absent; 5];
                    for (pi, pol) in ALL_POLICIES.iter().enumerate() {
                        ranks[pi] = rank_of(target, &filtered, *pol, seed);
                    }
                    TaskOutcome {
                        relation: p.triple.relation,
                        direction,
                        ranks,
                    }
                };
                vec![
                    make(Direction::Head, &p.heads, 2 * i as u64),
                    make(Direction::Tail, &p.tails, 2 * i as u64 + 1),
                ]
            })
            .collect()
    });

    let report = EvalReport::build(&outcomes, policy, |r| {
        ds.dicts.relation_name(r).unwrap_or("<unknown>").to_string()
    })?;
    let header = FileHeader::from_config(cfg).lines();
    fs::write(&cfg.report, report.render(&header)).map_err(|e| Error::io(&cfg.report, e))
}
