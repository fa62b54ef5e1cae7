//! Minimal bottom-up rule learner: sample ground paths by random walks and
//! generalize them into C/AC1/AC2 rules scored by confidence.
//!
//! This is a flat sampler. The anytime refinement and saturation scheduling
//! of full bottom-up learners is intentionally not replicated; an
//! iteration-count mode exists alongside the wall-clock budget so runs are
//! reproducible.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::infer::{confidence, GroundingLimits};
use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::rules::{Atom, Rule, RuleKey, RuleSet, RuleType, Term};

/// One traversed edge of a random walk. `forward` means the edge was walked
/// from its head to its tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkStep {
    pub triple: Triple,
    pub forward: bool,
}

impl WalkStep {
    fn source(&self) -> EntityId {
        if self.forward {
            self.triple.head
        } else {
            self.triple.tail
        }
    }

    fn dest(&self) -> EntityId {
        if self.forward {
            self.triple.tail
        } else {
            self.triple.head
        }
    }
}

/// An anchor triple plus a walk starting at one of its endpoints. The walk
/// never traverses the anchor itself.
#[derive(Debug, Clone)]
pub struct GroundPath {
    anchor: Triple,
    start_from_head: bool,
    steps: Vec<WalkStep>,
    /// Walk nodes w_0..w_n; w_0 is the chosen anchor endpoint.
    nodes: Vec<EntityId>,
}

impl GroundPath {
    pub fn new(anchor: Triple, start_from_head: bool, steps: Vec<WalkStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidPath("a path needs at least one step".into()));
        }
        let start = if start_from_head {
            anchor.head
        } else {
            anchor.tail
        };
        let mut nodes = vec![start];
        for (i, step) in steps.iter().enumerate() {
            if step.triple == anchor {
                return Err(Error::InvalidPath("walk reuses the anchor triple".into()));
            }
            if step.source() != nodes[i] {
                return Err(Error::InvalidPath(format!(
                    "step {} does not continue the walk",
                    i + 1
                )));
            }
            nodes.push(step.dest());
        }
        Ok(GroundPath {
            anchor,
            start_from_head,
            steps,
            nodes,
        })
    }

    pub fn anchor(&self) -> Triple {
        self.anchor
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn steps(&self) -> &[WalkStep] {
        &self.steps
    }

    pub fn nodes(&self) -> &[EntityId] {
        &self.nodes
    }

    /// The walk ends at the anchor endpoint it did not start from.
    pub fn is_cyclic(&self) -> bool {
        let other = if self.start_from_head {
            self.anchor.tail
        } else {
            self.anchor.head
        };
        *self.nodes.last().expect("non-empty") == other
    }
}

/// Sample a ground path: uniform anchor triple, uniform start endpoint, then
/// a walk of length `n` over edges in either direction. Dead ends retry up
/// to `max_attempts` whole walks before failing.
pub fn sample_path(
    g: &KnowledgeGraph,
    n: usize,
    rng: &mut ChaCha8Rng,
    allow_reflexive: bool,
    max_attempts: usize,
) -> Result<GroundPath> {
    if n == 0 {
        return Err(Error::InvalidPath("walk length must be at least 1".into()));
    }
    if g.is_empty() {
        return Err(Error::WalkFailed(0));
    }
    let triples = g.triples();
    for _ in 0..max_attempts {
        let anchor = triples[rng.gen_range(0..triples.len())];
        if !allow_reflexive && anchor.is_reflexive() {
            continue;
        }
        let start_from_head = rng.gen_bool(0.5);
        let mut cur = if start_from_head {
            anchor.head
        } else {
            anchor.tail
        };
        let mut steps = Vec::with_capacity(n);
        let mut dead_end = false;
        for _ in 0..n {
            let mut cands: Vec<WalkStep> = Vec::new();
            for &(r, t) in g.outgoing(cur) {
                let triple = Triple::new(cur, r, t);
                if triple == anchor || (!allow_reflexive && triple.is_reflexive()) {
                    continue;
                }
                cands.push(WalkStep {
                    triple,
                    forward: true,
                });
            }
            for &(r, h) in g.incoming(cur) {
                let triple = Triple::new(h, r, cur);
                if triple == anchor || (!allow_reflexive && triple.is_reflexive()) {
                    continue;
                }
                cands.push(WalkStep {
                    triple,
                    forward: false,
                });
            }
            if cands.is_empty() {
                dead_end = true;
                break;
            }
            let step = cands[rng.gen_range(0..cands.len())];
            steps.push(step);
            cur = step.dest();
        }
        if !dead_end {
            return GroundPath::new(anchor, start_from_head, steps);
        }
    }
    Err(Error::WalkFailed(max_attempts))
}

/// A view of the path oriented so the chain runs from a chosen end.
struct Oriented {
    /// (from-node-index, to-node-index, triple) per chain position.
    atoms: Vec<(usize, usize, Triple)>,
}

fn orient(path: &GroundPath, from_start: bool) -> Oriented {
    let n = path.steps.len();
    let atoms = if from_start {
        (0..n)
            .map(|i| (i, i + 1, path.steps[i].triple))
            .collect::<Vec<_>>()
    } else {
        (0..n)
            .rev()
            .map(|i| (i + 1, i, path.steps[i].triple))
            .collect::<Vec<_>>()
    };
    Oriented { atoms }
}

impl Oriented {
    /// Chain node indices in visit order: first atom's from-node, then each
    /// atom's to-node.
    fn visit_order(&self) -> Vec<usize> {
        let mut order = vec![self.atoms[0].0];
        for &(_, to, _) in &self.atoms {
            order.push(to);
        }
        order
    }

    /// Build body atoms with per-node terms assigned by `term_of`.
    fn body(&self, path: &GroundPath, term_of: &dyn Fn(usize) -> Term) -> Vec<Atom> {
        self.atoms
            .iter()
            .map(|&(from, to, triple)| {
                // keep the triple's literal (head, tail) order
                let (head_idx, tail_idx) =
                    if path.node_at(from) == triple.head && (path.node_at(to) == triple.tail) {
                        // walked forward
                        (from, to)
                    } else {
                        (to, from)
                    };
                Atom::new(triple.relation, term_of(head_idx), term_of(tail_idx))
            })
            .collect()
    }
}

impl GroundPath {
    fn node_at(&self, i: usize) -> EntityId {
        self.nodes[i]
    }
}

/// Assign canonical variable letters to the chain's node visit order.
/// `fixed` maps node indices to preassigned terms (head variables or kept
/// constants); every other node gets the next fresh letter.
fn assign_terms(order: &[usize], fixed: &HashMap<usize, Term>) -> HashMap<usize, Term> {
    let mut map = fixed.clone();
    let mut fresh = b"ABCDEFGHIJKLMNOPQRSTUVW".iter();
    for &idx in order {
        map.entry(idx).or_insert_with(|| {
            Term::Var(*fresh.next().expect("walks are far shorter than 23 steps"))
        });
    }
    map
}

/// Generalize a ground path into rules. Cyclic paths yield the C rule plus
/// one AC1 rule per head-constant choice; acyclic paths yield an AC2 rule
/// and an AC1 rule with the walk terminal kept constant.
pub fn generalize(path: &GroundPath) -> Vec<Rule> {
    let n = path.steps.len();
    let rel = path.anchor.relation;
    let mut out = Vec::new();

    let build = |oriented: &Oriented, fixed: HashMap<usize, Term>, head: Atom| -> Rule {
        let order = oriented.visit_order();
        let terms = assign_terms(&order, &fixed);
        let body = oriented.body(path, &|i| terms[&i]);
        Rule::new(head, body).expect("generalized paths form valid chains")
    };

    if path.is_cyclic() {
        // orient the chain to begin at the node filling the anchor's head slot
        let oriented = orient(path, path.start_from_head);
        let (start_idx, end_idx) = if path.start_from_head { (0, n) } else { (n, 0) };
        // C: both anchor slots generalized
        {
            let mut fixed = HashMap::new();
            fixed.insert(start_idx, Term::Var(b'X'));
            fixed.insert(end_idx, Term::Var(b'Y'));
            let head = Atom::new(rel, Term::Var(b'X'), Term::Var(b'Y'));
            out.push(build(&oriented, fixed, head));
        }
        // AC1, chain-end slot kept constant
        {
            let mut fixed = HashMap::new();
            fixed.insert(start_idx, Term::Var(b'X'));
            fixed.insert(end_idx, Term::Const(path.node_at(end_idx)));
            let head = Atom::new(rel, Term::Var(b'X'), Term::Const(path.node_at(end_idx)));
            out.push(build(&oriented, fixed, head));
        }
        // AC1, chain-start slot kept constant; chain re-oriented from the
        // head variable's end
        {
            let reversed = orient(path, !path.start_from_head);
            let mut fixed = HashMap::new();
            fixed.insert(end_idx, Term::Var(b'X'));
            fixed.insert(start_idx, Term::Const(path.node_at(start_idx)));
            let head = Atom::new(rel, Term::Const(path.node_at(start_idx)), Term::Var(b'X'));
            out.push(build(&reversed, fixed, head));
        }
    } else {
        let oriented = orient(path, true);
        let kept = if path.start_from_head {
            path.anchor.tail
        } else {
            path.anchor.head
        };
        let head = if path.start_from_head {
            Atom::new(rel, Term::Var(b'X'), Term::Const(kept))
        } else {
            Atom::new(rel, Term::Const(kept), Term::Var(b'X'))
        };
        // AC2: walk terminal unbound
        {
            let mut fixed = HashMap::new();
            fixed.insert(0, Term::Var(b'X'));
            out.push(build(&oriented, fixed, head));
        }
        // AC1: walk terminal kept constant
        {
            let mut fixed = HashMap::new();
            fixed.insert(0, Term::Var(b'X'));
            fixed.insert(n, Term::Const(path.node_at(n)));
            out.push(build(&oriented, fixed, head));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct MinerConfig {
    pub max_len_cyclic: usize,
    pub max_len_acyclic: usize,
    pub allow_reflexive: bool,
    /// Minimum predicted count for a rule to be kept.
    pub min_support: u64,
    pub min_confidence: f64,
    pub seed: u64,
    pub limits: GroundingLimits,
    /// Whole-walk retries inside one sampling round.
    pub walk_attempts: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            max_len_cyclic: 3,
            max_len_acyclic: 1,
            allow_reflexive: false,
            min_support: 2,
            min_confidence: 0.0001,
            seed: 42,
            limits: GroundingLimits::default(),
            walk_attempts: 20,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum MineBudget {
    /// Fixed sampling rounds; deterministic for a given seed and any worker
    /// count.
    Iterations(u64),
    /// Wall-clock budget; not deterministic.
    Seconds(f64),
}

fn sampling_round(g: &KnowledgeGraph, cfg: &MinerConfig, round: u64) -> Vec<Rule> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, round));
    let max_n = cfg.max_len_cyclic.max(cfg.max_len_acyclic).max(1);
    let n = rng.gen_range(1..=max_n);
    let path = match sample_path(g, n, &mut rng, cfg.allow_reflexive, cfg.walk_attempts) {
        Ok(p) => p,
        Err(_) => return Vec::new(),
    };
    generalize(&path)
        .into_iter()
        .filter(|r| match r.rule_type {
            RuleType::C => r.body.len() <= cfg.max_len_cyclic,
            RuleType::Ac1 | RuleType::Ac2 => r.body.len() <= cfg.max_len_acyclic,
        })
        .collect()
}

const ROUND_BATCH: u64 = 4096;

/// Mine a deduplicated, confidence-scored rule set from the training graph.
pub fn mine(g: &KnowledgeGraph, budget: MineBudget, cfg: &MinerConfig) -> RuleSet {
    let mut seen: HashMap<RuleKey, Rule> = HashMap::new();
    if !g.is_empty() {
        match budget {
            MineBudget::Iterations(count) => {
                let mut next = 0u64;
                while next < count {
                    let hi = (next + ROUND_BATCH).min(count);
                    let batch: Vec<Vec<Rule>> = (next..hi)
                        .into_par_iter()
                        .map(|round| sampling_round(g, cfg, round))
                        .collect();
                    for rules in batch {
                        for rule in rules {
                            seen.entry(rule.key()).or_insert(rule);
                        }
                    }
                    next = hi;
                }
            }
            MineBudget::Seconds(secs) => {
                let start = Instant::now();
                let mut round = 0u64;
                while start.elapsed().as_secs_f64() < secs {
                    for rule in sampling_round(g, cfg, round) {
                        seen.entry(rule.key()).or_insert(rule);
                    }
                    round += 1;
                }
            }
        }
    }

    let mut rules: Vec<Rule> = seen.into_values().collect();
    rules.sort_unstable_by_key(|r| r.sort_key());

    let scored: Vec<Option<Rule>> = rules
        .into_par_iter()
        .map(|mut rule| match confidence(&rule, g, cfg.limits) {
            Ok(stats) => {
                rule.confidence = stats.confidence;
                rule.predicted = stats.predicted;
                rule.correct = stats.correct;
                if stats.predicted >= cfg.min_support && stats.confidence >= cfg.min_confidence {
                    Some(rule)
                } else {
                    None
                }
            }
            Err(_) => {
                log::debug!("dropping rule with empty inferred set");
                None
            }
        })
        .collect();

    RuleSet::from_rules(scored.into_iter().flatten().collect())
}
