//! Grounding engine: inferred head sets, rule confidences, and per-task
//! candidate generation.
//!
//! Grounding walks the body chain with per-level frontier sets and memoized
//! adjacency lookups instead of enumerating variable assignments, but the
//! results are defined to equal the brute-force enumeration over all
//! assignments. Enumeration work is capped per call; a tripped cap flags the
//! result as truncated rather than failing.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::rules::{ChainEnd, Direction, Rule, Term};

/// Resource bounds for a single grounding call.
#[derive(Debug, Clone, Copy)]
pub struct GroundingLimits {
    /// Maximum adjacency expansions per (rule, task) before the result is
    /// flagged approximate.
    pub max_groundings: usize,
}

impl Default for GroundingLimits {
    fn default() -> Self {
        GroundingLimits {
            max_groundings: 100_000,
        }
    }
}

/// A link prediction query plus its filter set and evaluation target.
#[derive(Debug, Clone)]
pub struct PredictionTask {
    /// The given entity (the tail for Head tasks, the head for Tail tasks).
    pub known: EntityId,
    pub relation: RelationId,
    pub direction: Direction,
    /// Known true answers from all splits except the target, sorted.
    pub filter: Vec<EntityId>,
    pub target: EntityId,
}

impl PredictionTask {
    pub fn new(
        known: EntityId,
        relation: RelationId,
        direction: Direction,
        mut filter: Vec<EntityId>,
        target: EntityId,
    ) -> Self {
        filter.retain(|&e| e != target);
        filter.sort_unstable();
        filter.dedup();
        PredictionTask {
            known,
            relation,
            direction,
            filter,
            target,
        }
    }

    pub fn is_filtered(&self, e: EntityId) -> bool {
        self.filter.binary_search(&e).is_ok()
    }
}

/// The set of head triples a rule infers from a graph.
#[derive(Debug, Clone)]
pub struct InferredSet {
    /// Sorted, deduplicated triples; every relation equals the rule's head
    /// relation.
    pub triples: Vec<Triple>,
    /// True when the grounding cap tripped and the set may be incomplete.
    pub truncated: bool,
}

/// Entities filling the queried slot, from directed grounding.
#[derive(Debug, Clone)]
pub struct Candidates {
    pub entities: Vec<EntityId>,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ConfidenceStats {
    pub predicted: u64,
    pub correct: u64,
    pub confidence: f64,
    pub truncated: bool,
}

struct Budget {
    left: usize,
    truncated: bool,
}

impl Budget {
    fn new(limits: GroundingLimits) -> Self {
        Budget {
            left: limits.max_groundings,
            truncated: false,
        }
    }

    /// Returns false once the budget is exhausted.
    fn spend(&mut self) -> bool {
        if self.left == 0 {
            self.truncated = true;
            return false;
        }
        self.left -= 1;
        true
    }
}

fn step_relations(rule: &Rule) -> Vec<(RelationId, bool)> {
    rule.chain()
        .iter()
        .map(|s| (rule.body[s.atom].relation, s.forward))
        .collect()
}

/// Neighbors along the chain direction of a step.
fn advance(g: &KnowledgeGraph, rel: RelationId, forward: bool, x: EntityId) -> &[EntityId] {
    if forward {
        g.tails_unchecked(x, rel)
    } else {
        g.heads_unchecked(x, rel)
    }
}

/// Neighbors against the chain direction of a step.
fn retreat(g: &KnowledgeGraph, rel: RelationId, forward: bool, y: EntityId) -> &[EntityId] {
    if forward {
        g.heads_unchecked(y, rel)
    } else {
        g.tails_unchecked(y, rel)
    }
}

fn sorted(set: HashSet<EntityId>) -> Vec<EntityId> {
    let mut v: Vec<EntityId> = set.into_iter().collect();
    v.sort_unstable();
    v
}

/// Propagate a frontier forward through `steps`, returning the final set.
fn propagate_forward(
    g: &KnowledgeGraph,
    steps: &[(RelationId, bool)],
    start: Vec<EntityId>,
    budget: &mut Budget,
) -> Vec<EntityId> {
    let mut frontier = start;
    for &(rel, fwd) in steps {
        let mut next = HashSet::new();
        'outer: for &x in &frontier {
            for &nb in advance(g, rel, fwd, x) {
                if !budget.spend() {
                    break 'outer;
                }
                next.insert(nb);
            }
        }
        frontier = sorted(next);
        if frontier.is_empty() {
            break;
        }
    }
    frontier
}

/// Propagate a frontier backward (from the terminal node to the head
/// variable) through `steps`, which are given in chain order.
fn propagate_backward(
    g: &KnowledgeGraph,
    steps: &[(RelationId, bool)],
    terminal: Vec<EntityId>,
    budget: &mut Budget,
) -> Vec<EntityId> {
    let mut frontier = terminal;
    for &(rel, fwd) in steps.iter().rev() {
        let mut next = HashSet::new();
        'outer: for &y in &frontier {
            for &nb in retreat(g, rel, fwd, y) {
                if !budget.spend() {
                    break 'outer;
                }
                next.insert(nb);
            }
        }
        frontier = sorted(next);
        if frontier.is_empty() {
            break;
        }
    }
    frontier
}

/// Terminal-node seed values for backward grounding of AC1/AC2 rules.
fn terminal_seed(g: &KnowledgeGraph, rule: &Rule, steps: &[(RelationId, bool)]) -> Vec<EntityId> {
    match rule.chain_end() {
        ChainEnd::Const(c) => vec![c],
        ChainEnd::Unbound => {
            let &(rel, fwd) = steps.last().expect("non-empty chain");
            let mut set = HashSet::new();
            for &(h, t) in g.relation_pairs(rel) {
                set.insert(if fwd { t } else { h });
            }
            sorted(set)
        }
        ChainEnd::HeadVar => unreachable!("cyclic rules ground pairwise"),
    }
}

/// Compute the full inferred head set of a rule over a graph.
pub fn infer_heads(rule: &Rule, g: &KnowledgeGraph, limits: GroundingLimits) -> InferredSet {
    let steps = step_relations(rule);
    let mut budget = Budget::new(limits);
    let rel = rule.head.relation;

    let mut triples = match rule.chain_end() {
        ChainEnd::HeadVar => {
            // C: track (chain start, current) pairs level by level
            let &(rel0, fwd0) = &steps[0];
            let mut pairs: HashSet<(EntityId, EntityId)> = HashSet::new();
            for &(h, t) in g.relation_pairs(rel0) {
                if !budget.spend() {
                    break;
                }
                pairs.insert(if fwd0 { (h, t) } else { (t, h) });
            }
            let mut frontier: Vec<(EntityId, EntityId)> = pairs.into_iter().collect();
            frontier.sort_unstable();
            for &(srel, sfwd) in &steps[1..] {
                let mut next: HashSet<(EntityId, EntityId)> = HashSet::new();
                'outer: for &(s, c) in &frontier {
                    for &nb in advance(g, srel, sfwd, c) {
                        if !budget.spend() {
                            break 'outer;
                        }
                        next.insert((s, nb));
                    }
                }
                frontier = next.into_iter().collect();
                frontier.sort_unstable();
                if frontier.is_empty() {
                    break;
                }
            }
            // canonical C head is (chain start, chain end)
            frontier
                .into_iter()
                .map(|(s, e)| Triple::new(s, rel, e))
                .collect::<Vec<_>>()
        }
        ChainEnd::Const(_) | ChainEnd::Unbound => {
            let seed = terminal_seed(g, rule, &steps);
            let groundings = propagate_backward(g, &steps, seed, &mut budget);
            let (var_slot, const_id) = acyclic_head_slots(rule);
            groundings
                .into_iter()
                .map(|v| {
                    if var_slot == 0 {
                        Triple::new(v, rel, const_id)
                    } else {
                        Triple::new(const_id, rel, v)
                    }
                })
                .collect()
        }
    };
    triples.sort_unstable();
    triples.dedup();
    InferredSet {
        triples,
        truncated: budget.truncated,
    }
}

fn acyclic_head_slots(rule: &Rule) -> (usize, EntityId) {
    match (rule.head.terms[0], rule.head.terms[1]) {
        (Term::Var(_), Term::Const(c)) => (0, c),
        (Term::Const(c), Term::Var(_)) => (1, c),
        _ => unreachable!("acyclic rules have one constant head slot"),
    }
}

/// Rule confidence on the training graph: |inferred ∩ stored| / |inferred|.
pub fn confidence(
    rule: &Rule,
    g_train: &KnowledgeGraph,
    limits: GroundingLimits,
) -> Result<ConfidenceStats> {
    let inferred = infer_heads(rule, g_train, limits);
    if inferred.triples.is_empty() {
        return Err(Error::UndefinedConfidence);
    }
    let predicted = inferred.triples.len() as u64;
    let correct = inferred
        .triples
        .iter()
        .filter(|t| g_train.contains(**t))
        .count() as u64;
    Ok(ConfidenceStats {
        predicted,
        correct,
        confidence: correct as f64 / predicted as f64,
        truncated: inferred.truncated,
    })
}

/// Entities the rule proposes for a task, by directed grounding from the
/// known entity. Equals the slot projection of `infer_heads` restricted to
/// the task's known entity.
pub fn candidates(
    rule: &Rule,
    task: &PredictionTask,
    g: &KnowledgeGraph,
    limits: GroundingLimits,
) -> Result<Candidates> {
    if rule.head.relation != task.relation {
        return Err(Error::DirectionMismatch(format!(
            "rule relation {:?} but task relation {:?}",
            rule.head.relation, task.relation
        )));
    }
    if !rule.answers(task.direction) {
        return Err(Error::DirectionMismatch(format!(
            "rule is not indexed for {} prediction",
            task.direction
        )));
    }
    let steps = step_relations(rule);
    let mut budget = Budget::new(limits);

    let entities = match rule.chain_end() {
        ChainEnd::HeadVar => {
            // known entity fills the non-predicted slot; slot 0 is the chain
            // start of the canonical head
            match task.direction {
                Direction::Tail => propagate_forward(g, &steps, vec![task.known], &mut budget),
                Direction::Head => propagate_backward(g, &steps, vec![task.known], &mut budget),
            }
        }
        ChainEnd::Const(_) | ChainEnd::Unbound => {
            let (_, const_id) = acyclic_head_slots(rule);
            if task.known != const_id {
                Vec::new()
            } else {
                let seed = terminal_seed(g, rule, &steps);
                propagate_backward(g, &steps, seed, &mut budget)
            }
        }
    };
    Ok(Candidates {
        entities,
        truncated: budget.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Dictionaries, KnowledgeGraph, Split};
    use crate::rules::parse_rule;

    fn g0() -> (Dictionaries, KnowledgeGraph) {
        let mut d = Dictionaries::new();
        let mut triples = Vec::new();
        for (h, r, t) in [
            ("max", "lives", "uk"),
            ("john", "lives", "uk"),
            ("uk", "lang", "english"),
            ("max", "speaks", "english"),
        ] {
            let h = d.intern_entity(h);
            let r = d.intern_relation(r);
            let t = d.intern_entity(t);
            triples.push(Triple::new(h, r, t));
        }
        let g = KnowledgeGraph::from_triples(triples, &d, Split::Train);
        (d, g)
    }

    /// Brute force over all variable assignments; independent of the
    /// frontier-propagation path.
    fn oracle_infer(rule: &Rule, g: &KnowledgeGraph) -> Vec<Triple> {
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
            // next assignment
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

    #[test]
    fn cyclic_rule_infers_g0_pairs() {
        let (d, g) = g0();
        let rule = parse_rule(&d, "speaks(Y,X) <= lives(X,A), lang(A,Y)").unwrap();
        let inferred = infer_heads(&rule, &g, GroundingLimits::default());
        let speaks = d.relation_id("speaks").unwrap();
        let english = d.entity_id("english").unwrap();
        let mut expect = vec![
            Triple::new(d.entity_id("max").unwrap(), speaks, english),
            Triple::new(d.entity_id("john").unwrap(), speaks, english),
        ];
        expect.sort_unstable();
        assert_eq!(inferred.triples, expect);
        assert!(!inferred.truncated);
        assert_eq!(inferred.triples, oracle_infer(&rule, &g));
    }

    #[test]
    fn ac1_rule_infers_constant_head() {
        let (d, g) = g0();
        let rule = parse_rule(&d, "speaks(english,X) <= lives(X,A), lang(A,english)").unwrap();
        let inferred = infer_heads(&rule, &g, GroundingLimits::default());
        let speaks = d.relation_id("speaks").unwrap();
        let english = d.entity_id("english").unwrap();
        let mut expect = vec![
            Triple::new(english, speaks, d.entity_id("max").unwrap()),
            Triple::new(english, speaks, d.entity_id("john").unwrap()),
        ];
        expect.sort_unstable();
        assert_eq!(inferred.triples, expect);
        assert_eq!(inferred.triples, oracle_infer(&rule, &g));
    }

    #[test]
    fn ac2_rule_matches_oracle() {
        let (d, g) = g0();
        let rule = parse_rule(&d, "speaks(english,X) <= lives(X,A), lang(A,B)").unwrap();
        let inferred = infer_heads(&rule, &g, GroundingLimits::default());
        assert_eq!(inferred.triples, oracle_infer(&rule, &g));
        assert!(!inferred.triples.is_empty());
    }

    #[test]
    fn empty_graph_infers_nothing() {
        let (d, _) = g0();
        let empty = KnowledgeGraph::from_triples(Vec::new(), &d, Split::Train);
        let rule = parse_rule(&d, "speaks(Y,X) <= lives(X,A), lang(A,Y)").unwrap();
        let inferred = infer_heads(&rule, &empty, GroundingLimits::default());
        assert!(inferred.triples.is_empty());
    }

    #[test]
    fn confidence_on_g0_is_one_half() {
        let (d, g) = g0();
        let rule = parse_rule(&d, "speaks(Y,X) <= lives(X,A), lang(A,Y)").unwrap();
        let stats = confidence(&rule, &g, GroundingLimits::default()).unwrap();
        assert_eq!(stats.predicted, 2);
        assert_eq!(stats.correct, 1);
        assert_eq!(stats.confidence, 0.5);
    }

    #[test]
    fn confidence_bounds() {
        let (d, g) = g0();
        // inferred set contained in the graph
        let sub = parse_rule(&d, "lives(X,Y) <= lives(X,Y)").unwrap();
        assert_eq!(
            confidence(&sub, &g, GroundingLimits::default())
                .unwrap()
                .confidence,
            1.0
        );
        // inferred set disjoint from the graph
        let miss = parse_rule(&d, "lang(X,Y) <= lives(X,A), lang(A,Y)").unwrap();
        assert_eq!(
            confidence(&miss, &g, GroundingLimits::default())
                .unwrap()
                .confidence,
            0.0
        );
    }

    #[test]
    fn empty_inferred_set_has_undefined_confidence() {
        let (d, _) = g0();
        let empty = KnowledgeGraph::from_triples(Vec::new(), &d, Split::Train);
        let rule = parse_rule(&d, "speaks(Y,X) <= lives(X,A), lang(A,Y)").unwrap();
        assert!(matches!(
            confidence(&rule, &empty, GroundingLimits::default()),
            Err(Error::UndefinedConfidence)
        ));
    }

    #[test]
    fn candidates_for_both_directions() {
        let (d, g) = g0();
        let rule = parse_rule(&d, "speaks(Y,X) <= lives(X,A), lang(A,Y)").unwrap();
        let speaks = d.relation_id("speaks").unwrap();
        let max = d.entity_id("max").unwrap();
        let john = d.entity_id("john").unwrap();
        let english = d.entity_id("english").unwrap();

        // speaks(max, ?)
        let t1 = PredictionTask::new(max, speaks, Direction::Tail, vec![], english);
        let c1 = candidates(&rule, &t1, &g, GroundingLimits::default()).unwrap();
        assert_eq!(c1.entities, vec![english]);

        // speaks(?, english)
        let t2 = PredictionTask::new(english, speaks, Direction::Head, vec![], max);
        let c2 = candidates(&rule, &t2, &g, GroundingLimits::default()).unwrap();
        let mut expect = vec![max, john];
        expect.sort_unstable();
        assert_eq!(c2.entities, expect);
    }

    #[test]
    fn candidates_rejects_wrong_relation() {
        let (d, g) = g0();
        let rule = parse_rule(&d, "speaks(Y,X) <= lives(X,A), lang(A,Y)").unwrap();
        let lives = d.relation_id("lives").unwrap();
        let max = d.entity_id("max").unwrap();
        let task = PredictionTask::new(max, lives, Direction::Tail, vec![], max);
        assert!(matches!(
            candidates(&rule, &task, &g, GroundingLimits::default()),
            Err(Error::DirectionMismatch(_))
        ));
    }

    #[test]
    fn ac_rules_reject_their_constant_direction() {
        let (d, g) = g0();
        let rule = parse_rule(&d, "speaks(english,X) <= lives(X,A), lang(A,english)").unwrap();
        let speaks = d.relation_id("speaks").unwrap();
        let english = d.entity_id("english").unwrap();
        let max = d.entity_id("max").unwrap();
        // predicting the constant slot is a contract violation
        let task = PredictionTask::new(english, speaks, Direction::Head, vec![], max);
        assert!(matches!(
            candidates(&rule, &task, &g, GroundingLimits::default()),
            Err(Error::DirectionMismatch(_))
        ));
    }

    #[test]
    fn truncation_flags_capped_results() {
        let (d, g) = g0();
        let rule = parse_rule(&d, "speaks(Y,X) <= lives(X,A), lang(A,Y)").unwrap();
        let tight = GroundingLimits { max_groundings: 1 };
        let inferred = infer_heads(&rule, &g, tight);
        assert!(inferred.truncated);
    }

    #[test]
    fn zero_budget_is_empty_and_flagged() {
        let (d, g) = g0();
        let rule = parse_rule(&d, "speaks(Y,X) <= lives(X,A), lang(A,Y)").unwrap();
        let none = GroundingLimits { max_groundings: 0 };
        let inferred = infer_heads(&rule, &g, none);
        assert!(inferred.triples.is_empty());
        assert!(inferred.truncated);
        let speaks = d.relation_id("speaks").unwrap();
        let max = d.entity_id("max").unwrap();
        let task = PredictionTask::new(max, speaks, Direction::Tail, vec![], max);
        let c = candidates(&rule, &task, &g, none).unwrap();
        assert!(c.entities.is_empty());
        assert!(c.truncated);
    }

    #[test]
    fn monotone_under_triple_addition() {
        // adding a triple never removes an inferred head
        let mut d = Dictionaries::new();
        for e in 0..8 {
            d.intern_entity(&format!("e{e}"));
        }
        for r in 0..3 {
            d.intern_relation(&format!("r{r}"));
        }
        let mut state = 77u64;
        for round in 0..30 {
            let mut triples = Vec::new();
            for _ in 0..12 {
                state = crate::hash::avalanche(state.wrapping_add(round));
                triples.push(Triple::new(
                    EntityId((state % 8) as u32),
                    RelationId(((state >> 8) % 3) as u32),
                    EntityId(((state >> 16) % 8) as u32),
                ));
            }
            let g1 = KnowledgeGraph::from_triples(triples.clone(), &d, Split::Train);
            state = crate::hash::avalanche(state);
            triples.push(Triple::new(
                EntityId((state % 8) as u32),
                RelationId(((state >> 8) % 3) as u32),
                EntityId(((state >> 16) % 8) as u32),
            ));
            let g2 = KnowledgeGraph::from_triples(triples, &d, Split::Train);
            let rule = parse_rule(&d, "r0(Y,X) <= r1(X,A), r2(A,Y)").unwrap();
            let h1 = infer_heads(&rule, &g1, GroundingLimits::default());
            let h2 = infer_heads(&rule, &g2, GroundingLimits::default());
            for t in &h1.triples {
                assert!(h2.triples.contains(t));
            }
        }
    }
}
