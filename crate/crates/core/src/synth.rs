//! Synthetic 60-entity dataset with a planted exact implication, used by
//! the bundled walkthrough and the end-to-end tests.
//!
//! 40 persons live in 10 countries, each country has one language, and
//! `speaks(p, l)` holds exactly when `lives(p, c)` and `lang(c, l)` do. All
//! implied `speaks` triples are present in the training split, so the
//! cyclic rule scores confidence 1.0; validation and test sample from those
//! triples. A seeded `friend` relation adds noise edges so mining and
//! threshold search have something non-trivial to chew on.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PERSONS: usize = 40;
pub const COUNTRIES: usize = 10;
pub const LANGUAGES: usize = 10;

type Row = (String, String, String);

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub train: Vec<Row>,
    pub valid: Vec<Row>,
    pub test: Vec<Row>,
}

fn person(i: usize) -> String {
    format!("p{i:02}")
}

fn country(i: usize) -> String {
    format!("c{i}")
}

fn language(i: usize) -> String {
    format!("l{i}")
}

/// Deterministic planted dataset.
pub fn planted(seed: u64) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train: Vec<Row> = Vec::new();

    for p in 0..PERSONS {
        let c = p % COUNTRIES;
        train.push((person(p), "lives".into(), country(c)));
    }
    for c in 0..COUNTRIES {
        train.push((country(c), "lang".into(), language(c)));
    }
    let speaks: Vec<Row> = (0..PERSONS)
        .map(|p| (person(p), "speaks".into(), language(p % COUNTRIES)))
        .collect();
    train.extend(speaks.iter().cloned());

    // noise edges between persons
    let mut friends: Vec<Row> = Vec::new();
    while friends.len() < 30 {
        let a = rng.gen_range(0..PERSONS);
        let b = rng.gen_range(0..PERSONS);
        if a == b {
            continue;
        }
        let row = (person(a), "friend".into(), person(b));
        if !friends.contains(&row) {
            friends.push(row);
        }
    }
    train.extend(friends.iter().cloned());

    // validation and test sample the planted relation (the triples stay in
    // train, keeping the implication exact) plus a few noise tasks
    let mut order: Vec<usize> = (0..PERSONS).collect();
    order.shuffle(&mut rng);
    let valid_speaks: Vec<Row> = order[..10]
        .iter()
        .map(|&p| (person(p), "speaks".into(), language(p % COUNTRIES)))
        .collect();
    let test_speaks: Vec<Row> = order[10..20]
        .iter()
        .map(|&p| (person(p), "speaks".into(), language(p % COUNTRIES)))
        .collect();

    let mut valid = valid_speaks;
    valid.extend(friends[..5].iter().cloned());
    let mut test = test_speaks;
    test.extend(friends[5..10].iter().cloned());

    SynthDataset { train, valid, test }
}

fn write_split(path: &Path, rows: &[Row]) -> Result<()> {
    let mut out = String::new();
    for (h, r, t) in rows {
        out.push_str(&format!("{h}\t{r}\t{t}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write train.tsv, valid.tsv, and test.tsv into `dir`.
pub fn write_all(dir: &Path, ds: &SynthDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_split(&dir.join("train.tsv"), &ds.train)?;
    write_split(&dir.join("valid.tsv"), &ds.valid)?;
    write_split(&dir.join("test.tsv"), &ds.test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::{confidence, GroundingLimits};
    use crate::kg::Dataset;
    use crate::rules::parse_rule;

    #[test]
    fn planted_dataset_has_sixty_entities_and_exact_implication() {
        let ds = planted(42);
        let dir = tempfile::tempdir().unwrap();
        write_all(dir.path(), &ds).unwrap();
        let data = Dataset::load(
            &dir.path().join("train.tsv"),
            &dir.path().join("valid.tsv"),
            &dir.path().join("test.tsv"),
        )
        .unwrap();
        assert_eq!(data.dicts.num_entities(), 60);
        let rule = parse_rule(&data.dicts, "speaks(X,Y) <= lives(X,A), lang(A,Y)").unwrap();
        let stats = confidence(&rule, &data.train, GroundingLimits::default()).unwrap();
        assert_eq!(stats.confidence, 1.0);
        assert_eq!(stats.predicted, PERSONS as u64);
        // every valid/test triple is predictable from the training paths
        for t in data.test.triples() {
            if data.dicts.relation_name(t.relation).unwrap() == "speaks" {
                assert!(data.train.contains(*t));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = planted(7);
        let b = planted(7);
        assert_eq!(a.train, b.train);
        assert_eq!(a.valid, b.valid);
        assert_eq!(a.test, b.test);
    }
}
