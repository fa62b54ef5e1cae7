//! Immutable in-memory triple store with adjacency indices.
//!
//! Entities and relations are interned into dense integer ids through a
//! shared [`Dictionaries`] so that several graphs (train/valid/test splits)
//! can address the same vocabulary. Graphs are immutable after construction
//! and safe for unrestricted concurrent reads.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }

    pub fn is_reflexive(&self) -> bool {
        self.head == self.tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Valid => write!(f, "valid"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Bidirectional string <-> dense id dictionaries for entities and relations.
///
/// Interning is append-only: existing entries are never renumbered, so ids
/// handed out earlier stay valid while later files extend the vocabulary.
#[derive(Debug, Default, Clone)]
pub struct Dictionaries {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_ids: HashMap<String, RelationId>,
}

impl Dictionaries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(name.to_string());
        self.entity_ids.insert(name.to_string(), id);
        id
    }

    pub fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(name.to_string());
        self.relation_ids.insert(name.to_string(), id);
        id
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: EntityId) -> Result<&str> {
        self.entities
            .get(id.0 as usize)
            .map(|s| s.as_str())
            .ok_or(Error::InvalidEntityId(id.0))
    }

    pub fn relation_name(&self, id: RelationId) -> Result<&str> {
        self.relations
            .get(id.0 as usize)
            .map(|s| s.as_str())
            .ok_or(Error::InvalidRelationId(id.0))
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }
}

static EMPTY_ENTITIES: [EntityId; 0] = [];
static EMPTY_PAIRS: [(EntityId, EntityId); 0] = [];
static EMPTY_EDGES: [(RelationId, EntityId); 0] = [];

/// One split of a knowledge graph: a triple set plus adjacency indices.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    split: Split,
    triples: HashSet<Triple>,
    sorted: Vec<Triple>,
    // (head, relation) -> sorted tails; (tail, relation) -> sorted heads
    hr: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    tr: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    // relation -> sorted (head, tail) pairs
    by_relation: HashMap<RelationId, Vec<(EntityId, EntityId)>>,
    // entity -> sorted incident edges, used by random walks
    out_adj: HashMap<EntityId, Vec<(RelationId, EntityId)>>,
    in_adj: HashMap<EntityId, Vec<(RelationId, EntityId)>>,
    num_entities: u32,
    num_relations: u32,
}

impl KnowledgeGraph {
    /// Build a graph from parsed triples. Duplicates collapse to one stored
    /// triple. Validity snapshots (`num_entities`/`num_relations`) are taken
    /// from the dictionaries at call time.
    pub fn from_triples<I>(triples: I, dicts: &Dictionaries, split: Split) -> Self
    where
        I: IntoIterator<Item = Triple>,
    {
        let triples: HashSet<Triple> = triples.into_iter().collect();
        let mut sorted: Vec<Triple> = triples.iter().copied().collect();
        sorted.sort_unstable();

        let mut hr: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut tr: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut by_relation: HashMap<RelationId, Vec<(EntityId, EntityId)>> = HashMap::new();
        let mut out_adj: HashMap<EntityId, Vec<(RelationId, EntityId)>> = HashMap::new();
        let mut in_adj: HashMap<EntityId, Vec<(RelationId, EntityId)>> = HashMap::new();
        for t in &sorted {
            hr.entry((t.head, t.relation)).or_default().push(t.tail);
            tr.entry((t.tail, t.relation)).or_default().push(t.head);
            by_relation
                .entry(t.relation)
                .or_default()
                .push((t.head, t.tail));
            out_adj
                .entry(t.head)
                .or_default()
                .push((t.relation, t.tail));
            in_adj.entry(t.tail).or_default().push((t.relation, t.head));
        }
        // inputs were iterated in sorted order, so every index list is sorted
        for v in out_adj.values_mut() {
            v.sort_unstable();
        }
        for v in in_adj.values_mut() {
            v.sort_unstable();
        }

        KnowledgeGraph {
            split,
            triples,
            sorted,
            hr,
            tr,
            by_relation,
            out_adj,
            in_adj,
            num_entities: dicts.num_entities() as u32,
            num_relations: dicts.num_relations() as u32,
        }
    }

    /// Load a TSV file of `head<TAB>relation<TAB>tail` lines, extending the
    /// shared dictionaries. An empty file yields an empty graph.
    pub fn load_tsv(path: &Path, dicts: &mut Dictionaries, split: Split) -> Result<Self> {
        let raw = parse_tsv(path)?;
        let triples = intern_triples(&raw, dicts);
        Ok(Self::from_triples(triples, dicts, split))
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// All triples in (head, relation, tail) order.
    pub fn triples(&self) -> &[Triple] {
        &self.sorted
    }

    pub fn num_entities(&self) -> u32 {
        self.num_entities
    }

    pub fn num_relations(&self) -> u32 {
        self.num_relations
    }

    fn check_entity(&self, e: EntityId) -> Result<()> {
        if e.0 < self.num_entities {
            Ok(())
        } else {
            Err(Error::InvalidEntityId(e.0))
        }
    }

    fn check_relation(&self, r: RelationId) -> Result<()> {
        if r.0 < self.num_relations {
            Ok(())
        } else {
            Err(Error::InvalidRelationId(r.0))
        }
    }

    /// Tails t with (h, r, t) stored, in ascending id order.
    pub fn tails_of(&self, h: EntityId, r: RelationId) -> Result<&[EntityId]> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        Ok(self.tails_unchecked(h, r))
    }

    /// Heads h with (h, r, t) stored, in ascending id order.
    pub fn heads_of(&self, t: EntityId, r: RelationId) -> Result<&[EntityId]> {
        self.check_entity(t)?;
        self.check_relation(r)?;
        Ok(self.heads_unchecked(t, r))
    }

    pub(crate) fn tails_unchecked(&self, h: EntityId, r: RelationId) -> &[EntityId] {
        self.hr
            .get(&(h, r))
            .map(|v| v.as_slice())
            .unwrap_or(&EMPTY_ENTITIES)
    }

    pub(crate) fn heads_unchecked(&self, t: EntityId, r: RelationId) -> &[EntityId] {
        self.tr
            .get(&(t, r))
            .map(|v| v.as_slice())
            .unwrap_or(&EMPTY_ENTITIES)
    }

    pub fn contains(&self, t: Triple) -> bool {
        self.triples.contains(&t)
    }

    /// All (head, tail) pairs of a relation, ascending.
    pub fn relation_pairs(&self, r: RelationId) -> &[(EntityId, EntityId)] {
        self.by_relation
            .get(&r)
            .map(|v| v.as_slice())
            .unwrap_or(&EMPTY_PAIRS)
    }

    /// Outgoing edges (relation, tail) of an entity, ascending.
    pub fn outgoing(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.out_adj
            .get(&e)
            .map(|v| v.as_slice())
            .unwrap_or(&EMPTY_EDGES)
    }

    /// Incoming edges (relation, head) of an entity, ascending.
    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        self.in_adj
            .get(&e)
            .map(|v| v.as_slice())
            .unwrap_or(&EMPTY_EDGES)
    }
}

fn parse_tsv(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::TripleParse {
                path: path.to_path_buf(),
                line: i + 1,
                found: fields.len(),
            });
        }
        out.push((
            fields[0].to_string(),
            fields[1].to_string(),
            fields[2].to_string(),
        ));
    }
    Ok(out)
}

fn intern_triples(raw: &[(String, String, String)], dicts: &mut Dictionaries) -> Vec<Triple> {
    raw.iter()
        .map(|(h, r, t)| {
            Triple::new(
                dicts.intern_entity(h),
                dicts.intern_relation(r),
                dicts.intern_entity(t),
            )
        })
        .collect()
}

/// Train/valid/test splits sharing one dictionary built over their union, so
/// entities and relations unseen at training time are still addressable.
#[derive(Debug)]
pub struct Dataset {
    pub dicts: Dictionaries,
    pub train: KnowledgeGraph,
    pub valid: KnowledgeGraph,
    pub test: KnowledgeGraph,
}

impl Dataset {
    pub fn load(train: &Path, valid: &Path, test: &Path) -> Result<Self> {
        let raw_train = parse_tsv(train)?;
        let raw_valid = parse_tsv(valid)?;
        let raw_test = parse_tsv(test)?;

        let mut dicts = Dictionaries::new();
        let t_train = intern_triples(&raw_train, &mut dicts);
        let t_valid = intern_triples(&raw_valid, &mut dicts);
        let t_test = intern_triples(&raw_test, &mut dicts);

        Ok(Dataset {
            train: KnowledgeGraph::from_triples(t_train, &dicts, Split::Train),
            valid: KnowledgeGraph::from_triples(t_valid, &dicts, Split::Valid),
            test: KnowledgeGraph::from_triples(t_test, &dicts, Split::Test),
            dicts,
        })
    }

    pub fn graph(&self, split: Split) -> &KnowledgeGraph {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}
