//! Redundancy clustering: connected components of the similarity graph
//! thresholded per rule-type pair.
//!
//! Clusters are computed separately for head and tail prediction of every
//! relation, since each direction learns its own thresholds. An edge joins
//! two rules when their estimated similarity strictly exceeds the threshold
//! for their type combination. The all-zeros vector is special-cased to one
//! cluster holding the whole group so it degenerates to Maximum aggregation
//! even for rule pairs with similarity 0; all-ones leaves every rule a
//! singleton, degenerating to Noisy-OR.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{Dictionaries, RelationId};
use crate::rules::{Direction, RuleType};
use crate::sim::SimilarityMatrix;

/// Six similarity cutoffs in the fixed order
/// [C/C, C/AC1, C/AC2, AC1/AC2, AC1/AC1, AC2/AC2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdVector(pub [f64; 6]);

impl ThresholdVector {
    pub fn zeros() -> Self {
        ThresholdVector([0.0; 6])
    }

    pub fn ones() -> Self {
        ThresholdVector([1.0; 6])
    }

    pub fn uniform(t: f64) -> Self {
        ThresholdVector([t; 6])
    }

    pub fn is_zeros(&self) -> bool {
        self.0.iter().all(|&t| t == 0.0)
    }

    pub fn is_ones(&self) -> bool {
        self.0.iter().all(|&t| t == 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|t| (0.0..=1.0).contains(t)) {
            Ok(())
        } else {
            Err(Error::Config(format!("threshold outside [0,1]: {self:?}")))
        }
    }

    /// Space-separated component list, as stored in thresholds files.
    pub fn to_field(&self) -> String {
        self.0
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_field(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(Error::Config(format!(
                "threshold vector needs 6 components, found {}",
                parts.len()
            )));
        }
        let mut v = [0.0; 6];
        for (i, p) in parts.iter().enumerate() {
            v[i] = p
                .parse()
                .map_err(|_| Error::Config(format!("bad threshold `{p}`")))?;
        }
        let t = ThresholdVector(v);
        t.validate()?;
        Ok(t)
    }
}

/// Position of an unordered rule-type pair in the threshold vector.
pub fn type_combo(a: RuleType, b: RuleType) -> usize {
    use RuleType::*;
    match (a, b) {
        (C, C) => 0,
        (C, Ac1) | (Ac1, C) => 1,
        (C, Ac2) | (Ac2, C) => 2,
        (Ac1, Ac2) | (Ac2, Ac1) => 3,
        (Ac1, Ac1) => 4,
        (Ac2, Ac2) => 5,
    }
}

/// Which aggregation a threshold vector degenerates to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    Maximum,
    NoisyOr,
    Mixed,
}

pub fn degenerate_mode(t: &ThresholdVector) -> AggregationMode {
    if t.is_zeros() {
        AggregationMode::Maximum
    } else if t.is_ones() {
        AggregationMode::NoisyOr
    } else {
        AggregationMode::Mixed
    }
}

/// Partition of one (relation, direction) rule group into redundancy
/// clusters. Indices are local to the group (aligned with the similarity
/// matrix rows); `members` maps them back to global rule indices.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub relation: RelationId,
    pub direction: Direction,
    pub thresholds: ThresholdVector,
    pub members: Vec<u32>,
    /// Clusters in discovery order, each holding local indices.
    pub clusters: Vec<Vec<u32>>,
    /// Local rule index -> cluster index.
    pub assignment: Vec<u32>,
}

/// BFS connected components over the thresholded similarity graph.
/// `types` holds the local rules' types aligned with the matrix.
pub fn cluster(types: &[RuleType], sims: &SimilarityMatrix, t: &ThresholdVector) -> ClusterModel {
    let n = sims.len();
    debug_assert_eq!(types.len(), n);

    let (clusters, assignment) = if t.is_zeros() {
        // degenerate to Maximum: one cluster for the whole group
        let all: Vec<u32> = (0..n as u32).collect();
        (vec![all], vec![0u32; n])
    } else {
        let mut assignment = vec![u32::MAX; n];
        let mut clusters: Vec<Vec<u32>> = Vec::new();
        let mut queue = VecDeque::new();
        for i in 0..n {
            if assignment[i] != u32::MAX {
                continue;
            }
            let cid = clusters.len() as u32;
            let mut cluster = Vec::new();
            assignment[i] = cid;
            queue.push_back(i);
            while let Some(j) = queue.pop_front() {
                cluster.push(j as u32);
                for k in 0..n {
                    if assignment[k] != u32::MAX {
                        continue;
                    }
                    if sims.get(j, k) > t.0[type_combo(types[j], types[k])] {
                        assignment[k] = cid;
                        queue.push_back(k);
                    }
                }
            }
            clusters.push(cluster);
        }
        (clusters, assignment)
    };

    ClusterModel {
        relation: sims.relation,
        direction: sims.direction,
        thresholds: *t,
        members: sims.members.clone(),
        clusters,
        assignment,
    }
}

/// Audit file: `relation<TAB>direction<TAB>clusterId<TAB>ruleIndex` per
/// line, rule indices referring to the rule file.
pub fn write_clusters(
    path: &Path,
    models: &[ClusterModel],
    dicts: &Dictionaries,
    header: &[String],
) -> Result<()> {
    let mut out = Vec::new();
    for line in header {
        writeln!(out, "{line}").expect("vec write");
    }
    for model in models {
        let rel = dicts.relation_name(model.relation)?;
        for (cid, members) in model.clusters.iter().enumerate() {
            for &local in members {
                writeln!(
                    out,
                    "{rel}\t{}\t{cid}\t{}",
                    model.direction, model.members[local as usize]
                )
                .expect("vec write");
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimilarityMatrix;

    fn matrix_from(n: usize, entries: &[(usize, usize, f64)]) -> SimilarityMatrix {
        SimilarityMatrix::from_entries(RelationId(0), Direction::Tail, n, entries)
    }

    #[test]
    fn type_combo_matches_vector_order() {
        use RuleType::*;
        assert_eq!(type_combo(C, C), 0);
        assert_eq!(type_combo(C, Ac1), 1);
        assert_eq!(type_combo(Ac1, C), 1);
        assert_eq!(type_combo(C, Ac2), 2);
        assert_eq!(type_combo(Ac1, Ac2), 3);
        assert_eq!(type_combo(Ac1, Ac1), 4);
        assert_eq!(type_combo(Ac2, Ac2), 5);
        // symmetry over all pairs
        for a in [C, Ac1, Ac2] {
            for b in [C, Ac1, Ac2] {
                assert_eq!(type_combo(a, b), type_combo(b, a));
            }
        }
    }

    #[test]
    fn transitive_chaining_merges_components() {
        let m = matrix_from(3, &[(0, 1, 0.6), (1, 2, 0.6), (0, 2, 0.1)]);
        let types = vec![RuleType::C; 3];
        let model = cluster(&types, &m, &ThresholdVector::uniform(0.5));
        assert_eq!(model.clusters.len(), 1);
        assert_eq!(model.clusters[0].len(), 3);
    }

    #[test]
    fn all_ones_gives_singletons() {
        let m = matrix_from(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let types = vec![RuleType::C; 3];
        let model = cluster(&types, &m, &ThresholdVector::ones());
        assert_eq!(model.clusters.len(), 3);
    }

    #[test]
    fn all_zeros_is_one_cluster_even_without_edges() {
        let m = matrix_from(3, &[(0, 1, 0.0), (1, 2, 0.0), (0, 2, 0.0)]);
        let types = vec![RuleType::C; 3];
        let model = cluster(&types, &m, &ThresholdVector::zeros());
        assert_eq!(model.clusters.len(), 1);
        assert_eq!(model.clusters[0].len(), 3);
    }

    #[test]
    fn positive_similarity_support_components() {
        // strictly positive sims with tiny thresholds: components follow
        // the similarity support
        let m = matrix_from(4, &[(0, 1, 0.2), (2, 3, 0.3)]);
        let types = vec![RuleType::Ac1; 4];
        let model = cluster(&types, &m, &ThresholdVector::uniform(0.05));
        assert_eq!(model.clusters.len(), 2);
    }

    #[test]
    fn partition_covers_every_rule_exactly_once() {
        let m = matrix_from(5, &[(0, 1, 0.9), (1, 2, 0.4), (3, 4, 0.8)]);
        let types = vec![
            RuleType::C,
            RuleType::Ac1,
            RuleType::Ac2,
            RuleType::C,
            RuleType::C,
        ];
        let model = cluster(&types, &m, &ThresholdVector::uniform(0.5));
        let mut seen = [0u32; 5];
        for (cid, c) in model.clusters.iter().enumerate() {
            for &i in c {
                seen[i as usize] += 1;
                assert_eq!(model.assignment[i as usize], cid as u32);
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn raising_thresholds_refines_partitions() {
        let m = matrix_from(4, &[(0, 1, 0.7), (1, 2, 0.5), (2, 3, 0.3)]);
        let types = vec![RuleType::C, RuleType::C, RuleType::Ac1, RuleType::Ac2];
        let coarse = cluster(&types, &m, &ThresholdVector::uniform(0.2));
        let fine = cluster(&types, &m, &ThresholdVector::uniform(0.6));
        // every fine cluster is contained in some coarse cluster
        for fc in &fine.clusters {
            let home = coarse.assignment[fc[0] as usize];
            for &i in fc {
                assert_eq!(coarse.assignment[i as usize], home);
            }
        }
        assert!(fine.clusters.len() >= coarse.clusters.len());
    }

    #[test]
    fn degenerate_modes() {
        assert_eq!(
            degenerate_mode(&ThresholdVector::zeros()),
            AggregationMode::Maximum
        );
        assert_eq!(
            degenerate_mode(&ThresholdVector::ones()),
            AggregationMode::NoisyOr
        );
        assert_eq!(
            degenerate_mode(&ThresholdVector([0.0, 1.0, 0.5, 0.0, 0.0, 0.0])),
            AggregationMode::Mixed
        );
    }

    #[test]
    fn threshold_field_round_trips() {
        let t = ThresholdVector([0.0, 0.25, 0.5, 0.75, 1.0, 0.1]);
        let s = t.to_field();
        assert_eq!(ThresholdVector::parse_field(&s).unwrap(), t);
        assert!(ThresholdVector::parse_field("0 0 0 0 0").is_err());
        assert!(ThresholdVector::parse_field("0 0 0 0 0 2").is_err());
    }
}
