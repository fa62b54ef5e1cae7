//! C ABI for the rulerank link prediction engine.
//!
//! The surface is opaque handles plus integer status codes. Every
//! constructor has a paired `_free`; strings returned through out-pointers
//! stay valid until the owning handle is freed. `rr_last_error_message`
//! returns a thread-local description of the most recent failure on the
//! calling thread.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rulerank::agg::{aggregate_max, aggregate_noisy_or, aggregate_nrno, collect_firings};
use rulerank::cluster::cluster;
use rulerank::infer::{GroundingLimits, PredictionTask};
use rulerank::kg::{Dataset, EntityId, RelationId, Split};
use rulerank::mine::{mine, MineBudget, MinerConfig};
use rulerank::rules::{Direction, RuleSet, RuleType};
use rulerank::sim::{SignatureSet, SimilarityMatrix};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrStatus {
    Ok = 0,
    /// File could not be read or written.
    Io = 1,
    /// Input file or rule text failed to parse.
    Parse = 2,
    /// Null pointer, bad UTF-8, unknown name, or out-of-range argument.
    InvalidArgument = 3,
    /// A required artifact is missing or stale.
    Missing = 4,
    /// Unexpected internal failure.
    Internal = 5,
}

/// Which slot of the triple to predict.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrDirection {
    Head = 0,
    Tail = 1,
}

/// Confidence aggregation strategy for `rr_predict`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrAggregation {
    Maximum = 0,
    NoisyOr = 1,
    /// Requires a clusters handle; pairs without learned thresholds fall
    /// back to Maximum.
    Nrno = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrSplit {
    Train = 0,
    Valid = 1,
    Test = 2,
}

pub struct RrDataset {
    inner: Dataset,
}

pub struct RrRuleSet {
    inner: RuleSet,
}

/// Clustering state for NRNO prediction: per (relation, direction) members
/// and cluster assignments derived from a signature cache and a learned
/// thresholds file.
pub struct RrClusters {
    pairs: BTreeMap<(RelationId, Direction), (Vec<u32>, Vec<u32>)>,
}

/// A ranked candidate list; entity strings are owned by the handle.
pub struct RrRanking {
    entries: Vec<(CString, f64)>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', "?")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: RrStatus, msg: &str) -> RrStatus {
    set_error(msg);
    status
}

fn status_of(err: &rulerank::Error) -> RrStatus {
    use rulerank::Error as E;
    match err {
        E::Io { .. } => RrStatus::Io,
        E::MissingArtifact { .. } | E::CacheFormat { .. } => RrStatus::Missing,
        E::UnknownEntity(_)
        | E::UnknownRelation(_)
        | E::InvalidEntityId(_)
        | E::InvalidRelationId(_)
        | E::Config(_)
        | E::DirectionMismatch(_) => RrStatus::InvalidArgument,
        _ => RrStatus::Parse,
    }
}

/// Guard against panics crossing the FFI boundary.
fn guarded(f: impl FnOnce() -> RrStatus) -> RrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RrStatus::Internal, "internal panic"),
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Library version string; static storage, do not free.
#[no_mangle]
pub extern "C" fn rr_version() -> *const c_char {
    static VERSION: &str = concat!("rulerank ", env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn rr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load train/valid/test TSV files into a dataset with a shared
/// vocabulary.
///
/// # Safety
/// `train`, `valid`, `test` must be NUL-terminated strings; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_load(
    train: *const c_char,
    valid: *const c_char,
    test: *const c_char,
    out: *mut *mut RrDataset,
) -> RrStatus {
    guarded(|| {
        if out.is_null() {
            return fail(RrStatus::InvalidArgument, "out pointer is null");
        }
        let (Some(train), Some(valid), Some(test)) = (cstr(train), cstr(valid), cstr(test)) else {
            return fail(RrStatus::InvalidArgument, "path is null or not utf-8");
        };
        match Dataset::load(Path::new(train), Path::new(valid), Path::new(test)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RrDataset { inner }));
                RrStatus::Ok
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// # Safety
/// `ds` must come from `rr_dataset_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_free(ds: *mut RrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a valid dataset handle.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_entity_count(ds: *const RrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dicts.num_entities())
}

/// # Safety
/// `ds` must be a valid dataset handle.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_relation_count(ds: *const RrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dicts.num_relations())
}

/// # Safety
/// `ds` must be a valid dataset handle.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_triple_count(ds: *const RrDataset, split: RrSplit) -> usize {
    let Some(d) = ds.as_ref() else { return 0 };
    let split = match split {
        RrSplit::Train => Split::Train,
        RrSplit::Valid => Split::Valid,
        RrSplit::Test => Split::Test,
    };
    d.inner.graph(split).len()
}

/// Load a rule file against the dataset's vocabulary.
///
/// # Safety
/// `ds` must be valid; `path` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rr_ruleset_load(
    ds: *const RrDataset,
    path: *const c_char,
    out: *mut *mut RrRuleSet,
) -> RrStatus {
    guarded(|| {
        let (Some(ds), Some(path)) = (ds.as_ref(), cstr(path)) else {
            return fail(RrStatus::InvalidArgument, "null argument");
        };
        if out.is_null() {
            return fail(RrStatus::InvalidArgument, "out pointer is null");
        }
        match RuleSet::load(Path::new(path), &ds.inner.dicts) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RrRuleSet { inner }));
                RrStatus::Ok
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Mine a rule set from the training split with a fixed iteration budget
/// (deterministic for a given seed).
///
/// # Safety
/// `ds` must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rr_ruleset_mine(
    ds: *const RrDataset,
    iterations: u64,
    seed: u64,
    max_len_cyclic: u32,
    max_len_acyclic: u32,
    allow_reflexive: bool,
    out: *mut *mut RrRuleSet,
) -> RrStatus {
    guarded(|| {
        let Some(ds) = ds.as_ref() else {
            return fail(RrStatus::InvalidArgument, "dataset is null");
        };
        if out.is_null() {
            return fail(RrStatus::InvalidArgument, "out pointer is null");
        }
        if max_len_cyclic == 0 && max_len_acyclic == 0 {
            return fail(RrStatus::InvalidArgument, "both max lengths are zero");
        }
        let cfg = MinerConfig {
            max_len_cyclic: max_len_cyclic as usize,
            max_len_acyclic: max_len_acyclic as usize,
            allow_reflexive,
            seed,
            ..MinerConfig::default()
        };
        let inner = mine(&ds.inner.train, MineBudget::Iterations(iterations), &cfg);
        *out = Box::into_raw(Box::new(RrRuleSet { inner }));
        RrStatus::Ok
    })
}

/// # Safety
/// All handles must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rr_ruleset_save(
    ds: *const RrDataset,
    rules: *const RrRuleSet,
    path: *const c_char,
) -> RrStatus {
    guarded(|| {
        let (Some(ds), Some(rules), Some(path)) = (ds.as_ref(), rules.as_ref(), cstr(path)) else {
            return fail(RrStatus::InvalidArgument, "null argument");
        };
        match rules.inner.save(Path::new(path), &ds.inner.dicts, &[]) {
            Ok(()) => RrStatus::Ok,
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// # Safety
/// `rules` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn rr_ruleset_len(rules: *const RrRuleSet) -> usize {
    rules.as_ref().map_or(0, |r| r.inner.len())
}

/// # Safety
/// `rules` must come from a ruleset constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rr_ruleset_free(rules: *mut RrRuleSet) {
    if !rules.is_null() {
        drop(Box::from_raw(rules));
    }
}

/// Build NRNO clustering state from a signature cache (`calc-sims` output)
/// and a thresholds file (`search` output).
///
/// # Safety
/// Handles must be valid; paths NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rr_clusters_load(
    ds: *const RrDataset,
    rules: *const RrRuleSet,
    sims_path: *const c_char,
    thresholds_path: *const c_char,
    out: *mut *mut RrClusters,
) -> RrStatus {
    guarded(|| {
        let (Some(ds), Some(rules), Some(sims_path), Some(thresholds_path)) = (
            ds.as_ref(),
            rules.as_ref(),
            cstr(sims_path),
            cstr(thresholds_path),
        ) else {
            return fail(RrStatus::InvalidArgument, "null argument");
        };
        if out.is_null() {
            return fail(RrStatus::InvalidArgument, "out pointer is null");
        }
        let (sigs, meta) = match SignatureSet::load(Path::new(sims_path)) {
            Ok(v) => v,
            Err(e) => return fail(status_of(&e), &e.to_string()),
        };
        if meta.rule_count != rules.inner.len() as u64
            || meta.rules_fingerprint != rules.inner.fingerprint()
        {
            return fail(
                RrStatus::Missing,
                "signature cache does not match the rule set",
            );
        }
        let thresholds =
            match rulerank::search::read_thresholds(Path::new(thresholds_path), &ds.inner.dicts) {
                Ok(v) => v,
                Err(e) => return fail(status_of(&e), &e.to_string()),
            };
        let mut pairs = BTreeMap::new();
        for (&(rel, dir), t) in &thresholds {
            let members: Vec<u32> = rules
                .inner
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
                .map(|&ri| rules.inner.rules()[ri as usize].rule_type)
                .collect();
            let sims = SimilarityMatrix::build(rel, dir, members.clone(), &sigs);
            let model = cluster(&types, &sims, t);
            pairs.insert((rel, dir), (members, model.assignment));
        }
        *out = Box::into_raw(Box::new(RrClusters { pairs }));
        RrStatus::Ok
    })
}

/// # Safety
/// `clusters` must come from `rr_clusters_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rr_clusters_free(clusters: *mut RrClusters) {
    if !clusters.is_null() {
        drop(Box::from_raw(clusters));
    }
}

/// Rank candidates for one query. `direction` picks which slot of
/// `(?, relation, known)` / `(known, relation, ?)` to fill. When
/// `filter_known` is set, entities already linked to the query slot in any
/// split are removed before ranking. `clusters` may be null unless
/// `aggregation` is NRNO.
///
/// # Safety
/// Handles must be valid; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rr_predict(
    ds: *const RrDataset,
    rules: *const RrRuleSet,
    clusters: *const RrClusters,
    aggregation: RrAggregation,
    known_entity: *const c_char,
    relation: *const c_char,
    direction: RrDirection,
    top_k: u32,
    filter_known: bool,
    out: *mut *mut RrRanking,
) -> RrStatus {
    guarded(|| {
        let (Some(ds), Some(rules), Some(known), Some(rel)) = (
            ds.as_ref(),
            rules.as_ref(),
            cstr(known_entity),
            cstr(relation),
        ) else {
            return fail(RrStatus::InvalidArgument, "null argument");
        };
        if out.is_null() {
            return fail(RrStatus::InvalidArgument, "out pointer is null");
        }
        let Some(known) = ds.inner.dicts.entity_id(known) else {
            return fail(RrStatus::InvalidArgument, "unknown entity");
        };
        let Some(rel) = ds.inner.dicts.relation_id(rel) else {
            return fail(RrStatus::InvalidArgument, "unknown relation");
        };
        let dir = match direction {
            RrDirection::Head => Direction::Head,
            RrDirection::Tail => Direction::Tail,
        };
        let mut filter: Vec<EntityId> = Vec::new();
        if filter_known {
            for g in [&ds.inner.train, &ds.inner.valid, &ds.inner.test] {
                let known_answers = match dir {
                    Direction::Tail => g.tails_of(known, rel),
                    Direction::Head => g.heads_of(known, rel),
                };
                if let Ok(a) = known_answers {
                    filter.extend_from_slice(a);
                }
            }
            filter.sort_unstable();
            filter.dedup();
        }
        let task = PredictionTask {
            known,
            relation: rel,
            direction: dir,
            filter,
            target: known,
        };
        let limits = GroundingLimits::default();
        let group = rules.inner.group(rel, dir);
        let ranking = match aggregation {
            RrAggregation::Nrno => {
                let Some(clusters) = clusters.as_ref() else {
                    return fail(
                        RrStatus::InvalidArgument,
                        "NRNO aggregation needs a clusters handle",
                    );
                };
                match clusters.pairs.get(&(rel, dir)) {
                    Some((members, assignment)) => {
                        let firings = match collect_firings(
                            rules.inner.rules(),
                            members,
                            &task,
                            &ds.inner.train,
                            limits,
                        ) {
                            Ok(f) => f,
                            Err(e) => return fail(status_of(&e), &e.to_string()),
                        };
                        aggregate_nrno(&firings, assignment, top_k as usize)
                    }
                    None => {
                        let firings = match collect_firings(
                            rules.inner.rules(),
                            group,
                            &task,
                            &ds.inner.train,
                            limits,
                        ) {
                            Ok(f) => f,
                            Err(e) => return fail(status_of(&e), &e.to_string()),
                        };
                        aggregate_max(&firings, top_k as usize)
                    }
                }
            }
            RrAggregation::Maximum | RrAggregation::NoisyOr => {
                let firings = match collect_firings(
                    rules.inner.rules(),
                    group,
                    &task,
                    &ds.inner.train,
                    limits,
                ) {
                    Ok(f) => f,
                    Err(e) => return fail(status_of(&e), &e.to_string()),
                };
                match aggregation {
                    RrAggregation::Maximum => aggregate_max(&firings, top_k as usize),
                    _ => aggregate_noisy_or(&firings, top_k as usize),
                }
            }
        };
        let mut entries = Vec::with_capacity(ranking.entries.len());
        for (entity, score) in ranking.entries {
            let name = ds
                .inner
                .dicts
                .entity_name(entity)
                .expect("ids from this dataset");
            entries.push((CString::new(name).expect("no NUL in names"), score));
        }
        *out = Box::into_raw(Box::new(RrRanking { entries }));
        RrStatus::Ok
    })
}

/// # Safety
/// `r` must be a valid ranking handle.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_len(r: *const RrRanking) -> usize {
    r.as_ref().map_or(0, |r| r.entries.len())
}

/// Fetch one ranked entry. The entity pointer stays valid until the
/// ranking is freed.
///
/// # Safety
/// `r` must be valid; `entity` and `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_get(
    r: *const RrRanking,
    index: usize,
    entity: *mut *const c_char,
    score: *mut f64,
) -> RrStatus {
    guarded(|| {
        let Some(r) = r.as_ref() else {
            return fail(RrStatus::InvalidArgument, "ranking is null");
        };
        if entity.is_null() || score.is_null() {
            return fail(RrStatus::InvalidArgument, "out pointer is null");
        }
        let Some((name, s)) = r.entries.get(index) else {
            return fail(RrStatus::InvalidArgument, "index out of range");
        };
        *entity = name.as_ptr();
        *score = *s;
        RrStatus::Ok
    })
}

/// # Safety
/// `r` must come from `rr_predict` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rr_ranking_free(r: *mut RrRanking) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
