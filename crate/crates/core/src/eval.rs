//! Filtered ranking evaluation: MRR and Hits@k under five same-score
//! policies.
//!
//! Hits@k counts rank <= k. The target's rank within its equal-score group
//! is resolved by the tie policy; a target absent from the (top-k) ranking
//! ranks as infinity and contributes 0 to both metrics.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agg::CandidateRanking;
use crate::error::{Error, Result};
use crate::kg::{Dataset, EntityId, RelationId};
use crate::rules::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TiePolicy {
    Top,
    Bottom,
    Average,
    Ordinal,
    Random,
}

pub const ALL_POLICIES: [TiePolicy; 5] = [
    TiePolicy::Top,
    TiePolicy::Bottom,
    TiePolicy::Average,
    TiePolicy::Ordinal,
    TiePolicy::Random,
];

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TiePolicy::Top => "top",
            TiePolicy::Bottom => "bottom",
            TiePolicy::Average => "average",
            TiePolicy::Ordinal => "ordinal",
            TiePolicy::Random => "random",
        };
        write!(f, "{s}")
    }
}

impl TiePolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(TiePolicy::Top),
            "bottom" => Ok(TiePolicy::Bottom),
            "average" => Ok(TiePolicy::Average),
            "ordinal" => Ok(TiePolicy::Ordinal),
            "random" => Ok(TiePolicy::Random),
            other => Err(Error::Config(format!("unknown tie policy `{other}`"))),
        }
    }
}

/// Rank of the target; Absent contributes 0 to MRR and Hits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rank {
    Finite(f64),
    Absent,
}

impl Rank {
    pub fn reciprocal(&self) -> f64 {
        match self {
            Rank::Finite(r) => 1.0 / r,
            Rank::Absent => 0.0,
        }
    }

    pub fn within(&self, k: u32) -> bool {
        match self {
            Rank::Finite(r) => *r <= k as f64,
            Rank::Absent => false,
        }
    }
}

/// Rank of `target` in an already-filtered ranking. `seed` feeds the Random
/// policy's per-task stream; other policies ignore it.
pub fn rank_of(target: EntityId, ranking: &CandidateRanking, policy: TiePolicy, seed: u64) -> Rank {
    let Some(pos) = ranking.position(target) else {
        return Rank::Absent;
    };
    let score = ranking.entries[pos].1;
    let mut first = pos;
    while first > 0 && ranking.entries[first - 1].1 == score {
        first -= 1;
    }
    let mut last = pos;
    while last + 1 < ranking.entries.len() && ranking.entries[last + 1].1 == score {
        last += 1;
    }
    // 1-based ranks
    let top = (first + 1) as f64;
    let bottom = (last + 1) as f64;
    match policy {
        TiePolicy::Top => Rank::Finite(top),
        TiePolicy::Bottom => Rank::Finite(bottom),
        TiePolicy::Average => Rank::Finite((top + bottom) / 2.0),
        TiePolicy::Ordinal => Rank::Finite((pos + 1) as f64),
        TiePolicy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Rank::Finite(rng.gen_range(first..=last) as f64 + 1.0)
        }
    }
}

pub fn mrr(ranks: &[Rank]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::EmptyTasks);
    }
    Ok(ranks.iter().map(Rank::reciprocal).sum::<f64>() / ranks.len() as f64)
}

pub fn hits_at(ranks: &[Rank], k: u32) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::EmptyTasks);
    }
    let hits = ranks.iter().filter(|r| r.within(k)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// All known true answers for a task slot across train/valid/test, minus
/// the target. Sorted and deduplicated.
pub fn build_filter(
    ds: &Dataset,
    known: EntityId,
    relation: RelationId,
    direction: Direction,
    target: EntityId,
) -> Vec<EntityId> {
    let mut filter = Vec::new();
    for g in [&ds.train, &ds.valid, &ds.test] {
        let answers = match direction {
            Direction::Tail => g.tails_unchecked(known, relation),
            Direction::Head => g.heads_unchecked(known, relation),
        };
        filter.extend_from_slice(answers);
    }
    filter.retain(|&e| e != target);
    filter.sort_unstable();
    filter.dedup();
    filter
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub tasks: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[Rank]) -> Result<Metrics> {
        Ok(Metrics {
            mrr: mrr(ranks)?,
            hits1: hits_at(ranks, 1)?,
            hits3: hits_at(ranks, 3)?,
            hits10: hits_at(ranks, 10)?,
            tasks: ranks.len(),
        })
    }
}

/// Rank of one task under every policy, with its grouping keys.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub relation: RelationId,
    pub direction: Direction,
    pub ranks: [Rank; 5],
}

impl TaskOutcome {
    pub fn rank(&self, policy: TiePolicy) -> Rank {
        let idx = ALL_POLICIES.iter().position(|p| *p == policy).unwrap();
        self.ranks[idx]
    }
}

/// Full evaluation report: overall metrics per policy, plus per-relation
/// and per-direction breakdowns under the selected policy.
#[derive(Debug)]
pub struct EvalReport {
    pub policy: TiePolicy,
    pub tasks: usize,
    pub overall: Vec<(TiePolicy, Metrics)>,
    pub by_relation: Vec<(String, Metrics)>,
    pub by_direction: Vec<(Direction, Metrics)>,
}

impl EvalReport {
    pub fn build(
        outcomes: &[TaskOutcome],
        policy: TiePolicy,
        relation_name: impl Fn(RelationId) -> String,
    ) -> Result<EvalReport> {
        if outcomes.is_empty() {
            return Err(Error::EmptyTasks);
        }
        let mut overall = Vec::new();
        for p in ALL_POLICIES {
            let ranks: Vec<Rank> = outcomes.iter().map(|o| o.rank(p)).collect();
            overall.push((p, Metrics::from_ranks(&ranks)?));
        }

        let mut rel_groups: BTreeMap<String, Vec<Rank>> = BTreeMap::new();
        let mut dir_groups: BTreeMap<u8, Vec<Rank>> = BTreeMap::new();
        for o in outcomes {
            rel_groups
                .entry(relation_name(o.relation))
                .or_default()
                .push(o.rank(policy));
            let dkey = match o.direction {
                Direction::Head => 0,
                Direction::Tail => 1,
            };
            dir_groups.entry(dkey).or_default().push(o.rank(policy));
        }
        let by_relation = rel_groups
            .into_iter()
            .map(|(name, ranks)| Ok((name, Metrics::from_ranks(&ranks)?)))
            .collect::<Result<Vec<_>>>()?;
        let by_direction = dir_groups
            .into_iter()
            .map(|(d, ranks)| {
                let dir = if d == 0 {
                    Direction::Head
                } else {
                    Direction::Tail
                };
                Ok((dir, Metrics::from_ranks(&ranks)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport {
            policy,
            tasks: outcomes.len(),
            overall,
            by_relation,
            by_direction,
        })
    }

    /// Aligned table plus machine-readable key=value lines.
    pub fn render(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!("tasks={}\n", self.tasks));
        out.push_str(&format!("policy={}\n\n", self.policy));
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>8} {:>8}\n",
            "policy", "MRR", "Hits@1", "Hits@3", "Hits@10"
        ));
        for (p, m) in &self.overall {
            out.push_str(&format!(
                "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                p.to_string(),
                m.mrr,
                m.hits1,
                m.hits3,
                m.hits10
            ));
        }
        out.push('\n');
        for (p, m) in &self.overall {
            out.push_str(&format!("policy.{p}.mrr={}\n", m.mrr));
            out.push_str(&format!("policy.{p}.hits1={}\n", m.hits1));
            out.push_str(&format!("policy.{p}.hits3={}\n", m.hits3));
            out.push_str(&format!("policy.{p}.hits10={}\n", m.hits10));
        }
        for (dir, m) in &self.by_direction {
            out.push_str(&format!(
                "direction.{dir}.mrr={} direction.{dir}.hits1={} direction.{dir}.hits10={} tasks={}\n",
                m.mrr, m.hits1, m.hits10, m.tasks
            ));
        }
        for (name, m) in &self.by_relation {
            out.push_str(&format!(
                "relation.{name}.mrr={} relation.{name}.hits1={} relation.{name}.hits10={} tasks={}\n",
                m.mrr, m.hits1, m.hits10, m.tasks
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: u32) -> EntityId {
        EntityId(i)
    }

    fn ranking(entries: &[(u32, f64)]) -> CandidateRanking {
        CandidateRanking {
            entries: entries.iter().map(|&(i, s)| (e(i), s)).collect(),
        }
    }

    #[test]
    fn tie_group_policies() {
        // target tied with 3 others occupying ranks 2-5
        let r = ranking(&[(0, 0.9), (1, 0.5), (2, 0.5), (3, 0.5), (4, 0.5), (5, 0.1)]);
        let target = e(3);
        assert_eq!(rank_of(target, &r, TiePolicy::Top, 0), Rank::Finite(2.0));
        assert_eq!(rank_of(target, &r, TiePolicy::Bottom, 0), Rank::Finite(5.0));
        assert_eq!(
            rank_of(target, &r, TiePolicy::Average, 0),
            Rank::Finite(3.5)
        );
        assert_eq!(
            rank_of(target, &r, TiePolicy::Ordinal, 0),
            Rank::Finite(4.0)
        );
        match rank_of(target, &r, TiePolicy::Random, 7) {
            Rank::Finite(v) => assert!((2.0..=5.0).contains(&v)),
            Rank::Absent => panic!("target present"),
        }
    }

    #[test]
    fn unique_top_rank_is_one_under_every_policy() {
        let r = ranking(&[(0, 0.9), (1, 0.5)]);
        for p in ALL_POLICIES {
            assert_eq!(rank_of(e(0), &r, p, 3), Rank::Finite(1.0));
        }
    }

    #[test]
    fn absent_target_ranks_infinite() {
        let r = ranking(&[(0, 0.9)]);
        assert_eq!(rank_of(e(5), &r, TiePolicy::Average, 0), Rank::Absent);
        assert_eq!(mrr(&[Rank::Absent]).unwrap(), 0.0);
        assert_eq!(hits_at(&[Rank::Absent], 10).unwrap(), 0.0);
    }

    #[test]
    fn mrr_and_hits_formulas() {
        let ranks = vec![Rank::Finite(1.0), Rank::Finite(2.0), Rank::Finite(4.0)];
        let want = (1.0 + 0.5 + 0.25) / 3.0;
        assert!((mrr(&ranks).unwrap() - want).abs() < 1e-15);
        assert_eq!(
            hits_at(&[Rank::Finite(1.0), Rank::Finite(1.0)], 1).unwrap(),
            1.0
        );
        assert!(matches!(mrr(&[]), Err(Error::EmptyTasks)));
        assert!(matches!(hits_at(&[], 3), Err(Error::EmptyTasks)));
    }

    #[test]
    fn average_is_midpoint_of_top_and_bottom() {
        let mut state = 17u64;
        for round in 0..300u64 {
            // random ranking with tied blocks
            let mut entries = Vec::new();
            let mut score = 1.0f64;
            let mut id = 0u32;
            for _ in 0..10 {
                state = crate::hash::avalanche(state.wrapping_add(round));
                let block = 1 + (state % 4) as usize;
                for _ in 0..block {
                    entries.push((id, score));
                    id += 1;
                }
                score -= 0.07;
            }
            let r = CandidateRanking {
                entries: entries.iter().map(|&(i, s)| (e(i), s)).collect(),
            };
            state = crate::hash::avalanche(state);
            let target = e((state % id as u64) as u32);
            let top = rank_of(target, &r, TiePolicy::Top, 0);
            let bottom = rank_of(target, &r, TiePolicy::Bottom, 0);
            let avg = rank_of(target, &r, TiePolicy::Average, 0);
            match (top, bottom, avg) {
                (Rank::Finite(t), Rank::Finite(b), Rank::Finite(a)) => {
                    assert_eq!(a, (t + b) / 2.0);
                }
                _ => panic!("target present"),
            }
        }
    }

    #[test]
    fn random_policy_expectation_matches_average() {
        let r = ranking(&[(0, 0.9), (1, 0.5), (2, 0.5), (3, 0.5), (4, 0.5)]);
        let target = e(2);
        let avg = match rank_of(target, &r, TiePolicy::Average, 0) {
            Rank::Finite(v) => v,
            Rank::Absent => unreachable!(),
        };
        let mut sum = 0.0;
        let draws = 10_000;
        for seed in 0..draws {
            match rank_of(target, &r, TiePolicy::Random, seed) {
                Rank::Finite(v) => sum += v,
                Rank::Absent => unreachable!(),
            }
        }
        let mean = sum / draws as f64;
        assert!((mean - avg).abs() < 0.1, "mean {mean} vs avg {avg}");
    }

    #[test]
    fn metrics_invariant_to_permutation_within_groups() {
        let a = ranking(&[(0, 0.9), (1, 0.5), (2, 0.5), (3, 0.1)]);
        let b = ranking(&[(0, 0.9), (2, 0.5), (1, 0.5), (3, 0.1)]);
        for p in [TiePolicy::Top, TiePolicy::Bottom, TiePolicy::Average] {
            assert_eq!(rank_of(e(1), &a, p, 0), rank_of(e(1), &b, p, 0));
            assert_eq!(rank_of(e(2), &a, p, 0), rank_of(e(2), &b, p, 0));
        }
    }

    #[test]
    fn filter_excludes_target_once() {
        use crate::kg::{Dictionaries, KnowledgeGraph, Split, Triple};
        let mut d = Dictionaries::new();
        let s = d.intern_entity("s");
        let a = d.intern_entity("a");
        let b = d.intern_entity("b");
        let target = d.intern_entity("t");
        let r = d.intern_relation("r");
        let train = KnowledgeGraph::from_triples(
            [
                Triple::new(s, r, a),
                Triple::new(s, r, b),
                // target known in train too
                Triple::new(s, r, target),
            ],
            &d,
            Split::Train,
        );
        let valid = KnowledgeGraph::from_triples([Triple::new(s, r, a)], &d, Split::Valid);
        let test = KnowledgeGraph::from_triples([Triple::new(s, r, target)], &d, Split::Test);
        let ds = Dataset {
            dicts: d,
            train,
            valid,
            test,
        };
        let filter = build_filter(&ds, s, r, Direction::Tail, target);
        assert_eq!(filter, vec![a, b]);
        // no known answers -> empty filter
        let empty = build_filter(&ds, a, r, Direction::Tail, target);
        assert!(empty.is_empty());
    }

    #[test]
    fn hits_are_monotone_in_k_within_report() {
        let outcomes = vec![
            TaskOutcome {
                relation: RelationId(0),
                direction: Direction::Head,
                ranks: [Rank::Finite(2.0); 5],
            },
            TaskOutcome {
                relation: RelationId(0),
                direction: Direction::Tail,
                ranks: [Rank::Finite(7.0); 5],
            },
        ];
        let report = EvalReport::build(&outcomes, TiePolicy::Average, |_| "r".to_string()).unwrap();
        for (_, m) in &report.overall {
            assert!(m.hits1 <= m.hits3 && m.hits3 <= m.hits10);
            assert!(m.mrr >= 0.0 && m.mrr <= 1.0);
        }
        assert_eq!(report.tasks, 2);
    }
}
