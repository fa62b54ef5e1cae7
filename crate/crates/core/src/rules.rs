//! Typed Horn rules (cyclic C, acyclic AC1/AC2) with oriented body atoms.
//!
//! A rule body is a linear chain of atoms. Each atom keeps its literal term
//! order; the chain may traverse an atom in either direction. For cyclic
//! rules the chain connects the two head variables, and the produced triple
//! puts the chain-start grounding in the first head slot; rule texts that
//! print the head variables in either order denote the same rule, which is
//! how published rule files and their flipped-head variants both stay
//! readable. For AC1/AC2 rules the head constant slot is literal.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{Dictionaries, EntityId, RelationId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    /// Single uppercase letter.
    Var(u8),
    Const(EntityId),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub relation: RelationId,
    pub terms: [Term; 2],
}

impl Atom {
    pub fn new(relation: RelationId, first: Term, second: Term) -> Self {
        Atom {
            relation,
            terms: [first, second],
        }
    }

    fn contains_var(&self, v: u8) -> bool {
        self.terms.contains(&Term::Var(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleType {
    C,
    Ac1,
    Ac2,
}

impl fmt::Display for RuleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleType::C => write!(f, "C"),
            RuleType::Ac1 => write!(f, "AC1"),
            RuleType::Ac2 => write!(f, "AC2"),
        }
    }
}

/// Which head-atom slot a task asks to fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// Predict the first slot: task (?, r, t).
    Head,
    /// Predict the second slot: task (h, r, ?).
    Tail,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Head => write!(f, "head"),
            Direction::Tail => write!(f, "tail"),
        }
    }
}

impl Direction {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "head" => Ok(Direction::Head),
            "tail" => Ok(Direction::Tail),
            other => Err(Error::Config(format!("bad direction `{other}`"))),
        }
    }
}

/// One traversal step of the body chain: which atom, and whether the chain
/// runs along the atom's literal (first -> second) orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainStep {
    pub atom: usize,
    pub forward: bool,
}

/// What the far end of the chain is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainEnd {
    /// C: the other head variable.
    HeadVar,
    /// AC1: a constant.
    Const(EntityId),
    /// AC2: a variable that appears nowhere else.
    Unbound,
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Atom>,
    pub rule_type: RuleType,
    chain: Vec<ChainStep>,
    end: ChainEnd,
    pub confidence: f64,
    pub predicted: u64,
    pub correct: u64,
}

/// Encoded atom: (relation, term-kind/value for both slots).
pub type AtomKey = (u32, u8, u64, u8, u64);
/// Deterministic ordering key for rule files and deduplicated output.
pub type RuleSortKey = (RelationId, u8, usize, Vec<AtomKey>);

/// Structural identity of a rule, used for deduplication.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleKey {
    pub head: Atom,
    pub body: Vec<Atom>,
}

const VAR_START: u8 = b'X';
const VAR_END: u8 = b'Y';
const FRESH_VARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVW";

impl Rule {
    /// Classify and canonicalize a rule from its head and body atoms.
    ///
    /// Fails when the body is not a single chain anchored at a head
    /// variable, or the structure matches no rule type.
    pub fn new(head: Atom, body: Vec<Atom>) -> Result<Rule> {
        if body.is_empty() {
            return Err(Error::RuleClass("empty body".into()));
        }
        match (head.terms[0], head.terms[1]) {
            (Term::Var(a), Term::Var(b)) => {
                if a == b {
                    return Err(Error::RuleClass(
                        "head repeats one variable in both slots".into(),
                    ));
                }
                Self::build_cyclic(head, body, a, b)
            }
            (Term::Var(v), Term::Const(_)) => Self::build_acyclic(head, body, v),
            (Term::Const(_), Term::Var(v)) => Self::build_acyclic(head, body, v),
            (Term::Const(_), Term::Const(_)) => {
                Err(Error::RuleClass("head has no variable".into()))
            }
        }
    }

    fn build_cyclic(head: Atom, body: Vec<Atom>, va: u8, vb: u8) -> Result<Rule> {
        // chain start is the head variable present in the first body atom;
        // when both occur there the first head slot wins
        let start = if body[0].contains_var(va) {
            va
        } else if body[0].contains_var(vb) {
            vb
        } else {
            return Err(Error::RuleClass(
                "body disconnected from head variables".into(),
            ));
        };
        let end = if start == va { vb } else { va };
        let order: Vec<usize> = (0..body.len()).collect();
        let walk = walk_chain(&body, &order, start, &[va, vb])?;
        match walk.end {
            WalkEnd::Var(v) if v == end => {}
            WalkEnd::Var(_) => {
                return Err(Error::RuleClass(
                    "chain ends in a variable that is not the other head variable".into(),
                ))
            }
            WalkEnd::Const(_) => {
                return Err(Error::RuleClass(
                    "cyclic rule chain ends in a constant".into(),
                ))
            }
        }
        // canonical form: chain start occupies the first head slot
        let mut rename = HashMap::new();
        rename.insert(start, VAR_START);
        rename.insert(end, VAR_END);
        assign_fresh(&walk.intermediates, &mut rename)?;
        let head = Atom::new(head.relation, Term::Var(VAR_START), Term::Var(VAR_END));
        let body = rename_atoms(&body, &rename);
        Ok(Rule {
            head,
            body,
            rule_type: RuleType::C,
            chain: walk.steps,
            end: ChainEnd::HeadVar,
            confidence: 0.0,
            predicted: 0,
            correct: 0,
        })
    }

    fn build_acyclic(head: Atom, body: Vec<Atom>, v: u8) -> Result<Rule> {
        let forward: Vec<usize> = (0..body.len()).collect();
        let reversed: Vec<usize> = (0..body.len()).rev().collect();
        let walk = if body[forward[0]].contains_var(v) {
            match walk_chain(&body, &forward, v, &[v]) {
                Ok(w) => w,
                Err(e) => {
                    if body.len() > 1 && body[reversed[0]].contains_var(v) {
                        walk_chain(&body, &reversed, v, &[v]).map_err(|_| e)?
                    } else {
                        return Err(e);
                    }
                }
            }
        } else if body[reversed[0]].contains_var(v) {
            walk_chain(&body, &reversed, v, &[v])?
        } else {
            return Err(Error::RuleClass(
                "body disconnected from head variable".into(),
            ));
        };

        let (rule_type, end) = match walk.end {
            WalkEnd::Const(c) => (RuleType::Ac1, ChainEnd::Const(c)),
            WalkEnd::Var(t) => {
                if t == v || walk.intermediates.contains(&t) {
                    return Err(Error::RuleClass(
                        "chain terminal variable is not unbound".into(),
                    ));
                }
                (RuleType::Ac2, ChainEnd::Unbound)
            }
        };

        let mut rename = HashMap::new();
        rename.insert(v, VAR_START);
        let mut fresh = walk.intermediates.clone();
        if let WalkEnd::Var(t) = walk.end {
            fresh.push(t);
        }
        assign_fresh(&fresh, &mut rename)?;
        let head = Atom::new(
            head.relation,
            rename_term(head.terms[0], &rename),
            rename_term(head.terms[1], &rename),
        );
        let body = rename_atoms(&body, &rename);
        Ok(Rule {
            head,
            body,
            rule_type,
            chain: walk.steps,
            end,
            confidence: 0.0,
            predicted: 0,
            correct: 0,
        })
    }

    /// Body traversal steps ordered from the head variable outward.
    pub fn chain(&self) -> &[ChainStep] {
        &self.chain
    }

    pub fn chain_end(&self) -> ChainEnd {
        self.end
    }

    /// The head slot holding the variable a task can ask for. For C rules
    /// both slots are variables and both directions apply.
    pub fn directions(&self) -> &'static [Direction] {
        match self.rule_type {
            RuleType::C => &[Direction::Head, Direction::Tail],
            _ => {
                if self.head.terms[0].is_var() {
                    &[Direction::Head]
                } else {
                    &[Direction::Tail]
                }
            }
        }
    }

    pub fn answers(&self, dir: Direction) -> bool {
        self.directions().contains(&dir)
    }

    pub fn key(&self) -> RuleKey {
        RuleKey {
            head: self.head,
            body: self.body.clone(),
        }
    }

    pub fn sort_key(&self) -> RuleSortKey {
        let ty = match self.rule_type {
            RuleType::C => 0u8,
            RuleType::Ac1 => 1,
            RuleType::Ac2 => 2,
        };
        let mut atoms = Vec::with_capacity(self.body.len() + 1);
        for a in std::iter::once(&self.head).chain(self.body.iter()) {
            let enc = |t: Term| match t {
                Term::Var(v) => (0u8, v as u64),
                Term::Const(c) => (1u8, c.0 as u64),
            };
            let (k0, v0) = enc(a.terms[0]);
            let (k1, v1) = enc(a.terms[1]);
            atoms.push((a.relation.0, k0, v0, k1, v1));
        }
        (self.head.relation, ty, self.body.len(), atoms)
    }
}

struct Walk {
    steps: Vec<ChainStep>,
    intermediates: Vec<u8>,
    end: WalkEnd,
}

enum WalkEnd {
    Var(u8),
    Const(EntityId),
}

/// Walk the body atoms in the given order starting from variable `start`.
/// Every atom must share exactly the running chain term; interior terms must
/// be fresh variables.
fn walk_chain(body: &[Atom], order: &[usize], start: u8, head_vars: &[u8]) -> Result<Walk> {
    let mut steps = Vec::with_capacity(order.len());
    let mut intermediates = Vec::new();
    let mut cur = start;
    for (pos, &idx) in order.iter().enumerate() {
        let atom = &body[idx];
        let (other, forward) = if atom.terms[0] == Term::Var(cur) {
            (atom.terms[1], true)
        } else if atom.terms[1] == Term::Var(cur) {
            (atom.terms[0], false)
        } else {
            return Err(Error::RuleClass(format!(
                "body atom {} does not continue the chain",
                idx + 1
            )));
        };
        steps.push(ChainStep { atom: idx, forward });
        let last = pos + 1 == order.len();
        match other {
            Term::Var(v) => {
                if !last {
                    if head_vars.contains(&v) || intermediates.contains(&v) {
                        return Err(Error::RuleClass(format!(
                            "variable {} reused off the chain",
                            v as char
                        )));
                    }
                    intermediates.push(v);
                    cur = v;
                } else {
                    return Ok(Walk {
                        steps,
                        intermediates,
                        end: WalkEnd::Var(v),
                    });
                }
            }
            Term::Const(c) => {
                if !last {
                    return Err(Error::RuleClass(
                        "constant in the middle of the chain".into(),
                    ));
                }
                return Ok(Walk {
                    steps,
                    intermediates,
                    end: WalkEnd::Const(c),
                });
            }
        }
    }
    unreachable!("order is non-empty")
}

fn assign_fresh(vars: &[u8], rename: &mut HashMap<u8, u8>) -> Result<()> {
    for (i, v) in vars.iter().enumerate() {
        let slot = FRESH_VARS
            .get(i)
            .copied()
            .ok_or_else(|| Error::RuleClass("body too long".into()))?;
        rename.insert(*v, slot);
    }
    Ok(())
}

fn rename_term(t: Term, rename: &HashMap<u8, u8>) -> Term {
    match t {
        Term::Var(v) => Term::Var(*rename.get(&v).expect("all variables are on the chain")),
        c => c,
    }
}

fn rename_atoms(body: &[Atom], rename: &HashMap<u8, u8>) -> Vec<Atom> {
    body.iter()
        .map(|a| {
            Atom::new(
                a.relation,
                rename_term(a.terms[0], rename),
                rename_term(a.terms[1], rename),
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// text format
// ---------------------------------------------------------------------------

/// Parse `head <= atom, atom, ...`. Single-uppercase-letter tokens are
/// variables; every other token resolves against the sealed dictionaries.
pub fn parse_rule(dicts: &Dictionaries, text: &str) -> Result<Rule> {
    let mut parts = text.splitn(2, "<=");
    let head_txt = parts
        .next()
        .ok_or_else(|| Error::RuleSyntax("missing head".into()))?;
    let body_txt = parts
        .next()
        .ok_or_else(|| Error::RuleSyntax(format!("missing `<=` in `{text}`")))?;
    let head = parse_atom(dicts, head_txt)?;
    let mut body = Vec::new();
    for atom_txt in split_atoms(body_txt)? {
        body.push(parse_atom(dicts, &atom_txt)?);
    }
    if body.is_empty() {
        return Err(Error::RuleSyntax("empty body".into()));
    }
    Rule::new(head, body)
}

fn split_atoms(s: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::RuleSyntax("unbalanced parentheses".into()))?;
                cur.push(ch);
            }
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
            }
            _ => cur.push(ch),
        }
    }
    if depth != 0 {
        return Err(Error::RuleSyntax("unbalanced parentheses".into()));
    }
    if !cur.trim().is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn parse_atom(dicts: &Dictionaries, s: &str) -> Result<Atom> {
    let s = s.trim();
    let open = s
        .find('(')
        .ok_or_else(|| Error::RuleSyntax(format!("atom `{s}` has no `(`")))?;
    let close = s
        .rfind(')')
        .ok_or_else(|| Error::RuleSyntax(format!("atom `{s}` has no `)`")))?;
    if close < open {
        return Err(Error::RuleSyntax(format!("atom `{s}` is malformed")));
    }
    let rel_tok = s[..open].trim();
    if rel_tok.is_empty() {
        return Err(Error::RuleSyntax(format!("atom `{s}` has no relation")));
    }
    let relation = dicts
        .relation_id(rel_tok)
        .ok_or_else(|| Error::UnknownRelation(rel_tok.to_string()))?;
    let inner: Vec<&str> = s[open + 1..close].split(',').map(str::trim).collect();
    if inner.len() != 2 {
        return Err(Error::RuleSyntax(format!(
            "atom `{s}` must have exactly two terms"
        )));
    }
    let first = parse_term(dicts, inner[0])?;
    let second = parse_term(dicts, inner[1])?;
    Ok(Atom::new(relation, first, second))
}

fn parse_term(dicts: &Dictionaries, tok: &str) -> Result<Term> {
    if tok.is_empty() {
        return Err(Error::RuleSyntax("empty term".into()));
    }
    let bytes = tok.as_bytes();
    if bytes.len() == 1 && bytes[0].is_ascii_uppercase() {
        return Ok(Term::Var(bytes[0]));
    }
    dicts
        .entity_id(tok)
        .map(Term::Const)
        .ok_or_else(|| Error::UnknownEntity(tok.to_string()))
}

pub fn serialize_rule(dicts: &Dictionaries, rule: &Rule) -> String {
    let mut s = String::new();
    write_atom(&mut s, dicts, &rule.head);
    s.push_str(" <= ");
    for (i, atom) in rule.body.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        write_atom(&mut s, dicts, atom);
    }
    s
}

fn write_atom(out: &mut String, dicts: &Dictionaries, atom: &Atom) {
    out.push_str(dicts.relation_name(atom.relation).expect("valid id"));
    out.push('(');
    write_term(out, dicts, atom.terms[0]);
    out.push(',');
    write_term(out, dicts, atom.terms[1]);
    out.push(')');
}

fn write_term(out: &mut String, dicts: &Dictionaries, t: Term) {
    match t {
        Term::Var(v) => out.push(v as char),
        Term::Const(c) => out.push_str(dicts.entity_name(c).expect("valid id")),
    }
}

// ---------------------------------------------------------------------------
// rule sets
// ---------------------------------------------------------------------------

/// Rules indexed by (head relation, predicted direction). C rules appear
/// under both directions; AC1/AC2 rules only under the direction of their
/// head variable, never under their head constant.
#[derive(Debug, Default)]
pub struct RuleSet {
    rules: Vec<Rule>,
    index: HashMap<(RelationId, Direction), Vec<u32>>,
}

impl RuleSet {
    pub fn from_rules(rules: Vec<Rule>) -> Self {
        let mut index: HashMap<(RelationId, Direction), Vec<u32>> = HashMap::new();
        for (i, rule) in rules.iter().enumerate() {
            for &dir in rule.directions() {
                index
                    .entry((rule.head.relation, dir))
                    .or_default()
                    .push(i as u32);
            }
        }
        RuleSet { rules, index }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Rule indices answering tasks for this (relation, direction), in rule
    /// file order.
    pub fn group(&self, relation: RelationId, dir: Direction) -> &[u32] {
        static EMPTY: [u32; 0] = [];
        self.index
            .get(&(relation, dir))
            .map(|v| v.as_slice())
            .unwrap_or(&EMPTY)
    }

    /// All (relation, direction) pairs with at least one rule, sorted.
    pub fn pairs(&self) -> Vec<(RelationId, Direction)> {
        let mut v: Vec<(RelationId, Direction)> = self.index.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Fingerprint of the rule structures, used to tie cache files to the
    /// rule set they were computed from.
    pub fn fingerprint(&self) -> u64 {
        let mut state = 0x8f1b_bcdc_a54e_77d1u64;
        for rule in &self.rules {
            let (rel, ty, len, atoms) = rule.sort_key();
            state = crate::hash::mix(state, rel.0 as u64);
            state = crate::hash::mix(state, ty as u64);
            state = crate::hash::mix(state, len as u64);
            for (r, k0, v0, k1, v1) in atoms {
                state = crate::hash::mix(state, r as u64);
                state = crate::hash::mix(state, (k0 as u64) << 32 | v0);
                state = crate::hash::mix(state, (k1 as u64) << 32 | v1);
            }
        }
        state
    }

    /// Load a rule file: `predicted<TAB>correct<TAB>confidence<TAB>rule`
    /// per line; `#` lines and blank lines are skipped. Confidence is taken
    /// from the file; the predicted/correct counts are retained for audit.
    pub fn load(path: &Path, dicts: &Dictionaries) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() != 4 {
                return Err(Error::RuleFormat {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
            }
            let predicted: u64 = fields[0].parse().map_err(|_| Error::RuleFormat {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("bad predicted count `{}`", fields[0]),
            })?;
            let correct: u64 = fields[1].parse().map_err(|_| Error::RuleFormat {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("bad correct count `{}`", fields[1]),
            })?;
            let confidence: f64 = fields[2].parse().map_err(|_| Error::RuleFormat {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("bad confidence `{}`", fields[2]),
            })?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(Error::RuleFormat {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("confidence {confidence} outside [0,1]"),
                });
            }
            if correct > predicted {
                return Err(Error::RuleFormat {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("correct {correct} exceeds predicted {predicted}"),
                });
            }
            let mut rule = parse_rule(dicts, fields[3]).map_err(|e| Error::RuleFile {
                path: path.to_path_buf(),
                line: i + 1,
                source: Box::new(e),
            })?;
            rule.confidence = confidence;
            rule.predicted = predicted;
            rule.correct = correct;
            rules.push(rule);
        }
        Ok(Self::from_rules(rules))
    }

    /// Write the rule file, prefixed by the given full comment lines.
    pub fn save(&self, path: &Path, dicts: &Dictionaries, header: &[String]) -> Result<()> {
        let mut out = Vec::new();
        for line in header {
            writeln!(out, "{line}").expect("vec write");
        }
        for rule in &self.rules {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                rule.predicted,
                rule.correct,
                rule.confidence,
                serialize_rule(dicts, rule)
            )
            .expect("vec write");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
