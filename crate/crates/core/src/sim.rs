//! Exact and MinHash-estimated Jaccard similarity between rules'
//! inferred-triple sets.
//!
//! Signatures use k independent seeded avalanche hashes over the canonical
//! (head, relation, tail) encoding, so estimates are reproducible across
//! runs and platforms. Rules whose inferred set on the training graph is
//! empty never fire and are excluded from similarity and clustering.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hash::{derive_seed, mix, triple_hash};
use crate::infer::{infer_heads, GroundingLimits};
use crate::kg::{KnowledgeGraph, RelationId, Triple};
use crate::rules::{Direction, RuleSet};

/// Exact Jaccard similarity of two sorted, deduplicated triple sets.
pub fn exact_jaccard(a: &[Triple], b: &[Triple]) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::UndefinedSimilarity);
    }
    let mut i = 0;
    let mut j = 0;
    let mut inter = 0usize;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    values: Vec<u64>,
    seeds_tag: u64,
}

impl MinHashSignature {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }
}

/// Derive k hash-function seeds from a master seed.
pub fn make_seeds(master: u64, k: usize) -> Vec<u64> {
    (0..k).map(|i| derive_seed(master, i as u64)).collect()
}

fn tag_of(seeds: &[u64]) -> u64 {
    let mut state = 0x1f83_d9ab_fb41_bd6bu64;
    for &s in seeds {
        state = mix(state, s);
    }
    state
}

/// Per-function minima of the seeded hashes over the set. The set iteration
/// order cannot matter because minima are order-free.
pub fn signature(set: &[Triple], seeds: &[u64]) -> Result<MinHashSignature> {
    if set.is_empty() {
        return Err(Error::EmptySignature);
    }
    let values = seeds
        .iter()
        .map(|&seed| {
            set.iter()
                .map(|t| triple_hash(seed, t.head.0, t.relation.0, t.tail.0))
                .min()
                .expect("non-empty set")
        })
        .collect();
    Ok(MinHashSignature {
        values,
        seeds_tag: tag_of(seeds),
    })
}

/// Fraction of agreeing signature positions.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64> {
    if a.values.len() != b.values.len() || a.seeds_tag != b.seeds_tag {
        return Err(Error::SignatureMismatch);
    }
    let agree = a
        .values
        .iter()
        .zip(&b.values)
        .filter(|(x, y)| x == y)
        .count();
    Ok(agree as f64 / a.values.len() as f64)
}

/// MinHash signatures for every rule of a rule set, computed over the
/// training graph. `None` marks rules with empty inferred sets.
#[derive(Debug)]
pub struct SignatureSet {
    pub seeds: Vec<u64>,
    pub sigs: Vec<Option<MinHashSignature>>,
}

/// Provenance fields stored in the signature cache header.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheMeta {
    pub tool: String,
    pub config_hash: u64,
    pub rules_fingerprint: u64,
    pub rule_count: u64,
}

impl SignatureSet {
    pub fn k(&self) -> usize {
        self.seeds.len()
    }

    pub fn compute(
        rules: &RuleSet,
        g_train: &KnowledgeGraph,
        limits: GroundingLimits,
        k: usize,
        master_seed: u64,
    ) -> Self {
        let seeds = make_seeds(master_seed, k);
        let sigs: Vec<Option<MinHashSignature>> = rules
            .rules()
            .par_iter()
            .map(|rule| {
                let inferred = infer_heads(rule, g_train, limits);
                if inferred.truncated {
                    log::debug!("signature built from a capped inferred set");
                }
                signature(&inferred.triples, &seeds).ok()
            })
            .collect();
        let empty = sigs.iter().filter(|s| s.is_none()).count();
        if empty > 0 {
            log::info!(
                "{empty} rules infer nothing on the training graph; excluded from similarity"
            );
        }
        SignatureSet { seeds, sigs }
    }

    pub fn save(&self, path: &Path, meta: &CacheMeta) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(b"RRSG");
        out.extend_from_slice(&1u32.to_le_bytes());
        let tool = meta.tool.as_bytes();
        out.extend_from_slice(&(tool.len() as u16).to_le_bytes());
        out.extend_from_slice(tool);
        out.extend_from_slice(&meta.config_hash.to_le_bytes());
        out.extend_from_slice(&(self.seeds.len() as u32).to_le_bytes());
        for s in &self.seeds {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&meta.rules_fingerprint.to_le_bytes());
        out.extend_from_slice(&meta.rule_count.to_le_bytes());
        let entries: Vec<(u64, &MinHashSignature)> = self
            .sigs
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|sig| (i as u64, sig)))
            .collect();
        out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
        for (idx, sig) in entries {
            out.extend_from_slice(&idx.to_le_bytes());
            for v in &sig.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, CacheMeta)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor {
            bytes: &bytes,
            pos: 0,
            path,
        };
        if cur.take(4)? != b"RRSG" {
            return Err(cur.bad("not a signature cache"));
        }
        let version = cur.u32()?;
        if version != 1 {
            return Err(cur.bad(&format!("unsupported cache version {version}")));
        }
        let tool_len = cur.u16()? as usize;
        let tool = String::from_utf8(cur.take(tool_len)?.to_vec())
            .map_err(|_| cur.bad("tool string is not utf-8"))?;
        let config_hash = cur.u64()?;
        let k = cur.u32()? as usize;
        let mut seeds = Vec::with_capacity(k);
        for _ in 0..k {
            seeds.push(cur.u64()?);
        }
        let rules_fingerprint = cur.u64()?;
        let rule_count = cur.u64()?;
        let entry_count = cur.u64()?;
        let tag = tag_of(&seeds);
        let mut sigs: Vec<Option<MinHashSignature>> = vec![None; rule_count as usize];
        for _ in 0..entry_count {
            let idx = cur.u64()? as usize;
            if idx >= sigs.len() {
                return Err(cur.bad("rule index out of range"));
            }
            let mut values = Vec::with_capacity(k);
            for _ in 0..k {
                values.push(cur.u64()?);
            }
            sigs[idx] = Some(MinHashSignature {
                values,
                seeds_tag: tag,
            });
        }
        Ok((
            SignatureSet { seeds, sigs },
            CacheMeta {
                tool,
                config_hash,
                rules_fingerprint,
                rule_count,
            },
        ))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn bad(&self, msg: &str) -> Error {
        Error::CacheFormat {
            path: self.path.to_path_buf(),
            msg: msg.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.bad("truncated file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Symmetric estimated-Jaccard matrix over one (relation, direction) rule
/// group. Rules with different head relations are never paired: their
/// inferred sets cannot intersect, so matrices are built per relation.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub relation: RelationId,
    pub direction: Direction,
    /// Global rule indices of the group members, in group order.
    pub members: Vec<u32>,
    n: usize,
    /// Strict lower triangle, row-major.
    tri: Vec<f64>,
}

impl SimilarityMatrix {
    /// Build the matrix for group members that all carry signatures.
    pub fn build(
        relation: RelationId,
        direction: Direction,
        members: Vec<u32>,
        sigs: &SignatureSet,
    ) -> Self {
        let n = members.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let si = sigs.sigs[members[i] as usize]
                    .as_ref()
                    .expect("members carry signatures");
                (0..i)
                    .map(|j| {
                        let sj = sigs.sigs[members[j] as usize]
                            .as_ref()
                            .expect("members carry signatures");
                        estimate_jaccard(si, sj).expect("same seed set")
                    })
                    .collect()
            })
            .collect();
        SimilarityMatrix {
            relation,
            direction,
            members,
            n,
            tri: rows.into_iter().flatten().collect(),
        }
    }

    /// Build a matrix from explicit pairwise values; unreferenced pairs are
    /// 0. Used by tests and threshold tooling.
    pub fn from_entries(
        relation: RelationId,
        direction: Direction,
        n: usize,
        entries: &[(usize, usize, f64)],
    ) -> Self {
        let mut tri = vec![0.0; n * (n - 1) / 2];
        for &(i, j, v) in entries {
            assert!(i != j && i < n && j < n, "bad entry ({i},{j})");
            let (hi, lo) = if i > j { (i, j) } else { (j, i) };
            tri[hi * (hi - 1) / 2 + lo] = v;
        }
        SimilarityMatrix {
            relation,
            direction,
            members: (0..n as u32).collect(),
            n,
            tri,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Estimated similarity between local indices; diagonal is 1.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        self.tri[hi * (hi - 1) / 2 + lo]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::EntityId;

    fn t(h: u32, r: u32, tl: u32) -> Triple {
        Triple::new(EntityId(h), RelationId(r), EntityId(tl))
    }

    #[test]
    fn exact_jaccard_examples() {
        let a = vec![t(1, 0, 1), t(2, 0, 2)];
        let b = vec![t(2, 0, 2), t(3, 0, 3)];
        assert_eq!(exact_jaccard(&a, &b).unwrap(), 1.0 / 3.0);
        assert_eq!(exact_jaccard(&a, &a).unwrap(), 1.0);
        let c = vec![t(9, 0, 9)];
        assert_eq!(exact_jaccard(&a, &c).unwrap(), 0.0);
        assert!(matches!(
            exact_jaccard(&[], &[]),
            Err(Error::UndefinedSimilarity)
        ));
    }

    #[test]
    fn signatures_ignore_iteration_order() {
        let seeds = make_seeds(11, 32);
        let fwd = vec![t(1, 0, 2), t(2, 1, 3), t(3, 0, 4)];
        let mut rev = fwd.clone();
        rev.reverse();
        assert_eq!(
            signature(&fwd, &seeds).unwrap(),
            signature(&rev, &seeds).unwrap()
        );
    }

    #[test]
    fn singleton_signature_is_the_elementwise_hash() {
        let seeds = make_seeds(5, 8);
        let set = vec![t(4, 2, 7)];
        let sig = signature(&set, &seeds).unwrap();
        for (i, &seed) in seeds.iter().enumerate() {
            assert_eq!(sig.values()[i], triple_hash(seed, 4, 2, 7));
        }
    }

    #[test]
    fn empty_set_has_no_signature() {
        let seeds = make_seeds(5, 8);
        assert!(matches!(signature(&[], &seeds), Err(Error::EmptySignature)));
    }

    #[test]
    fn estimate_extremes() {
        let seeds = make_seeds(3, 64);
        let a = signature(&[t(1, 0, 1)], &seeds).unwrap();
        assert_eq!(estimate_jaccard(&a, &a).unwrap(), 1.0);
        let all_disagree = MinHashSignature {
            values: a.values.iter().map(|v| v.wrapping_add(1)).collect(),
            seeds_tag: a.seeds_tag,
        };
        assert_eq!(estimate_jaccard(&a, &all_disagree).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_signatures_are_rejected() {
        let a = signature(&[t(1, 0, 1)], &make_seeds(3, 16)).unwrap();
        let b = signature(&[t(1, 0, 1)], &make_seeds(4, 16)).unwrap();
        assert!(matches!(
            estimate_jaccard(&a, &b),
            Err(Error::SignatureMismatch)
        ));
        let c = signature(&[t(1, 0, 1)], &make_seeds(3, 8)).unwrap();
        assert!(matches!(
            estimate_jaccard(&a, &c),
            Err(Error::SignatureMismatch)
        ));
    }

    #[test]
    fn estimates_track_exact_jaccard() {
        // seeded random pairs; tolerance 3/sqrt(k)
        let k = 256;
        let tol = 3.0 / (k as f64).sqrt();
        let mut state = 31u64;
        let mut within = 0;
        let trials = 40;
        for trial in 0..trials {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for i in 0..60u32 {
                state = crate::hash::avalanche(state.wrapping_add(trial));
                if !state.is_multiple_of(3) {
                    a.push(t(i, 0, i + 1));
                }
                if state % 5 < 3 {
                    b.push(t(i, 0, i + 1));
                }
            }
            if a.is_empty() || b.is_empty() {
                within += 1;
                continue;
            }
            let exact = exact_jaccard(&a, &b).unwrap();
            let seeds = make_seeds(trial, k);
            let est = estimate_jaccard(
                &signature(&a, &seeds).unwrap(),
                &signature(&b, &seeds).unwrap(),
            )
            .unwrap();
            if (est - exact).abs() <= tol {
                within += 1;
            }
        }
        assert!(
            within * 100 >= trials * 95,
            "{within}/{trials} within bound"
        );
    }

    #[test]
    fn estimator_is_unbiased_over_reseeding() {
        let a = vec![t(1, 0, 1), t(2, 0, 2)];
        let b = vec![t(2, 0, 2), t(3, 0, 3)];
        let exact = exact_jaccard(&a, &b).unwrap();
        let k = 16;
        let mut sum = 0.0;
        let runs = 1000;
        for master in 0..runs {
            let seeds = make_seeds(master, k);
            sum += estimate_jaccard(
                &signature(&a, &seeds).unwrap(),
                &signature(&b, &seeds).unwrap(),
            )
            .unwrap();
        }
        let mean = sum / runs as f64;
        assert!((mean - exact).abs() < 0.02, "mean {mean} vs exact {exact}");
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal() {
        use crate::kg::{Dictionaries, Split};
        use crate::rules::parse_rule;
        let mut d = Dictionaries::new();
        for e in ["a", "b", "c", "u", "v"] {
            d.intern_entity(e);
        }
        for r in ["p", "q", "s"] {
            d.intern_relation(r);
        }
        let mut triples = Vec::new();
        for (h, r, tl) in [
            ("a", "p", "u"),
            ("b", "p", "u"),
            ("c", "p", "v"),
            ("u", "q", "a"),
            ("v", "q", "b"),
            ("a", "s", "a"),
            ("b", "s", "b"),
        ] {
            triples.push(Triple::new(
                d.entity_id(h).unwrap(),
                d.relation_id(r).unwrap(),
                d.entity_id(tl).unwrap(),
            ));
        }
        let g = crate::kg::KnowledgeGraph::from_triples(triples, &d, Split::Train);
        let rules = vec![
            parse_rule(&d, "s(X,Y) <= p(X,A), q(A,Y)").unwrap(),
            parse_rule(&d, "s(X,Y) <= p(X,Y)").unwrap(),
            parse_rule(&d, "s(X,Y) <= q(Y,X)").unwrap(),
        ];
        let rs = RuleSet::from_rules(rules);
        let sigs = SignatureSet::compute(&rs, &g, GroundingLimits::default(), 64, 9);
        let members: Vec<u32> = (0..3)
            .filter(|&i| sigs.sigs[i as usize].is_some())
            .collect();
        let s = d.relation_id("s").unwrap();
        let m = SimilarityMatrix::build(s, Direction::Tail, members, &sigs);
        for i in 0..m.len() {
            assert_eq!(m.get(i, i), 1.0);
            for j in 0..m.len() {
                assert_eq!(m.get(i, j), m.get(j, i));
                assert!((0.0..=1.0).contains(&m.get(i, j)));
            }
        }

        // rules with different head relations infer disjoint sets, so they
        // are never paired in a matrix
        let other = parse_rule(&d, "q(X,Y) <= p(Y,X)").unwrap();
        let a = crate::infer::infer_heads(&rs.rules()[1], &g, GroundingLimits::default());
        let b = crate::infer::infer_heads(&other, &g, GroundingLimits::default());
        if !a.triples.is_empty() || !b.triples.is_empty() {
            assert_eq!(exact_jaccard(&a.triples, &b.triples).unwrap(), 0.0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_set() -> impl Strategy<Value = Vec<Triple>> {
            proptest::collection::btree_set((0u32..30, 0u32..3, 0u32..30), 0..40)
                .prop_map(|s| s.into_iter().map(|(h, r, tl)| t(h, r, tl)).collect())
        }

        proptest! {
            #[test]
            fn jaccard_is_symmetric_and_bounded(a in arb_set(), b in arb_set()) {
                prop_assume!(!a.is_empty() || !b.is_empty());
                let ab = exact_jaccard(&a, &b).unwrap();
                prop_assert_eq!(ab, exact_jaccard(&b, &a).unwrap());
                prop_assert!((0.0..=1.0).contains(&ab));
                if !a.is_empty() {
                    prop_assert_eq!(exact_jaccard(&a, &a).unwrap(), 1.0);
                }
            }

            #[test]
            fn equal_sets_share_signatures(a in arb_set(), seed in 0u64..1000) {
                prop_assume!(!a.is_empty());
                let seeds = make_seeds(seed, 16);
                let s1 = signature(&a, &seeds).unwrap();
                let s2 = signature(&a, &seeds).unwrap();
                prop_assert_eq!(estimate_jaccard(&s1, &s2).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn cache_round_trips() {
        let seeds = make_seeds(77, 16);
        let tag = tag_of(&seeds);
        let sigs = SignatureSet {
            seeds: seeds.clone(),
            sigs: vec![
                Some(MinHashSignature {
                    values: (0..16).map(|i| i * 3 + 1).collect(),
                    seeds_tag: tag,
                }),
                None,
                Some(MinHashSignature {
                    values: (0..16).map(|i| i * 7 + 5).collect(),
                    seeds_tag: tag,
                }),
            ],
        };
        let meta = CacheMeta {
            tool: "rulerank test".into(),
            config_hash: 0xdead_beef,
            rules_fingerprint: 42,
            rule_count: 3,
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        sigs.save(f.path(), &meta).unwrap();
        let (loaded, meta2) = SignatureSet::load(f.path()).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(loaded.seeds, seeds);
        assert_eq!(loaded.sigs, sigs.sigs);
    }
}
