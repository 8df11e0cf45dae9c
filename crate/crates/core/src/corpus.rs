//! Semantified-bioassay corpora: loading, validation, pruning, predicate
//! subsets, statistics and cross-validation fold splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CorpusError;

/// Separator between predicate and value in a canonical statement key.
pub const KEY_SEPARATOR: &str = " -> ";

/// One logical annotation of a bioassay: a predicate and its value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Statement {
    pub predicate: String,
    pub value: String,
    /// True iff both predicate and value are ontology terms.
    pub ontologized: bool,
}

impl Statement {
    /// Builds a statement, trimming surrounding whitespace from both parts.
    pub fn new(predicate: impl AsRef<str>, value: impl AsRef<str>, ontologized: bool) -> Self {
        Statement {
            predicate: predicate.as_ref().trim().to_string(),
            value: value.as_ref().trim().to_string(),
            ontologized,
        }
    }

    /// `predicate -> value`, the identity used for set semantics.
    pub fn key(&self) -> String {
        format!("{}{}{}", self.predicate, KEY_SEPARATOR, self.value)
    }

    /// Text fed to the vectorizer when a statement is scored against an assay.
    pub fn text(&self) -> String {
        format!("{} {}", self.predicate, self.value)
    }

    fn validate(&self) -> Result<(), String> {
        if self.predicate.trim().is_empty() {
            return Err("statement predicate is empty".into());
        }
        if self.value.trim().is_empty() {
            return Err(format!("statement value is empty for predicate {:?}", self.predicate));
        }
        Ok(())
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.predicate, KEY_SEPARATOR, self.value)
    }
}

/// A bioassay description and its statement set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bioassay {
    pub id: String,
    pub text: String,
    pub statements: Vec<Statement>,
}

impl Bioassay {
    /// Creates an assay, trimming statements and dropping duplicate keys
    /// (first occurrence wins).
    pub fn new(id: impl Into<String>, text: impl Into<String>, statements: Vec<Statement>) -> Self {
        let mut assay = Bioassay {
            id: id.into(),
            text: text.into(),
            statements,
        };
        assay.normalize();
        assay
    }

    /// Trims statements and removes duplicate keys. Returns how many were dropped.
    fn normalize(&mut self) -> usize {
        let before = self.statements.len();
        let mut seen = HashSet::new();
        let statements = std::mem::take(&mut self.statements);
        self.statements = statements
            .into_iter()
            .map(|s| Statement::new(&s.predicate, &s.value, s.ontologized))
            .filter(|s| seen.insert(s.key()))
            .collect();
        before - self.statements.len()
    }

    pub fn keys(&self) -> BTreeSet<String> {
        self.statements.iter().map(Statement::key).collect()
    }
}

/// An ordered collection of bioassays with pairwise-distinct ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Corpus {
    assays: Vec<Bioassay>,
}

impl Corpus {
    /// Validates and wraps a list of assays.
    pub fn new(assays: Vec<Bioassay>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus { assays };
        corpus.validate_and_normalize()?;
        Ok(corpus)
    }

    fn validate_and_normalize(&mut self) -> Result<usize, CorpusError> {
        let mut ids = HashSet::new();
        let mut dropped = 0;
        for assay in &mut self.assays {
            if !ids.insert(assay.id.clone()) {
                return Err(CorpusError::Validation(format!(
                    "duplicate assay id {:?}",
                    assay.id
                )));
            }
            if assay.id.trim().is_empty() {
                return Err(CorpusError::Validation("assay id is empty".into()));
            }
            if assay.text.trim().is_empty() {
                return Err(CorpusError::Validation(format!(
                    "assay {:?} has empty text",
                    assay.id
                )));
            }
            for s in &assay.statements {
                s.validate()
                    .map_err(|e| CorpusError::Validation(format!("assay {:?}: {e}", assay.id)))?;
            }
            dropped += assay.normalize();
        }
        Ok(dropped)
    }

    pub fn assays(&self) -> &[Bioassay] {
        &self.assays
    }

    pub fn into_assays(self) -> Vec<Bioassay> {
        self.assays
    }

    pub fn len(&self) -> usize {
        self.assays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assays.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Bioassay> {
        self.assays.iter().find(|a| a.id == id)
    }

    /// Assays whose ids appear in `ids`, in the order given.
    pub fn select(&self, ids: &[String]) -> Vec<Bioassay> {
        let by_id: BTreeMap<&str, &Bioassay> =
            self.assays.iter().map(|a| (a.id.as_str(), a)).collect();
        ids.iter()
            .filter_map(|id| by_id.get(id.as_str()).map(|a| (*a).clone()))
            .collect()
    }

    /// All distinct canonical statement keys.
    pub fn statement_universe(&self) -> BTreeSet<String> {
        self.assays.iter().flat_map(|a| a.statements.iter().map(Statement::key)).collect()
    }

    /// Distinct statements keyed by canonical key. When two assays disagree
    /// on the `ontologized` flag for one key, the first occurrence wins.
    pub fn statement_dictionary(&self) -> BTreeMap<String, Statement> {
        let mut dict = BTreeMap::new();
        for s in self.assays.iter().flat_map(|a| a.statements.iter()) {
            dict.entry(s.key()).or_insert_with(|| s.clone());
        }
        dict
    }

    /// Number of distinct statements carrying each predicate.
    pub fn predicate_frequency(&self) -> BTreeMap<String, usize> {
        let mut freq = BTreeMap::new();
        for s in self.statement_dictionary().values() {
            *freq.entry(s.predicate.clone()).or_insert(0) += 1;
        }
        freq
    }

    /// Number of (assay, statement) occurrences per predicate.
    pub fn predicate_occurrences(&self) -> BTreeMap<String, usize> {
        let mut freq = BTreeMap::new();
        for s in self.assays.iter().flat_map(|a| a.statements.iter()) {
            *freq.entry(s.predicate.clone()).or_insert(0) += 1;
        }
        freq
    }

    /// SHA-256 over the corpus' canonical JSONL serialization.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for assay in &self.assays {
            let line = serde_json::to_string(assay).expect("assay serializes");
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Writes the corpus in its JSONL interchange form.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for assay in &self.assays {
            serde_json::to_writer(&mut out, assay)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// A corpus plus the number of duplicate statements removed while loading it.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub duplicates_dropped: usize,
}

/// Reads a JSONL corpus. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<LoadedCorpus, CorpusError> {
    let mut assays = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let assay: Bioassay = serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
            line: idx + 1,
            source,
        })?;
        assays.push(assay);
    }
    let mut corpus = Corpus { assays };
    let duplicates_dropped = corpus.validate_and_normalize()?;
    Ok(LoadedCorpus {
        corpus,
        duplicates_dropped,
    })
}

/// Loads and validates a JSONL corpus file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
    let loaded = read_corpus(BufReader::new(file))?;
    if loaded.duplicates_dropped > 0 {
        log::warn!(
            "{}: dropped {} duplicate statements",
            path.display(),
            loaded.duplicates_dropped
        );
    }
    Ok(loaded.corpus)
}

/// Reads a predicate blocklist: one predicate per line, `#` starts a comment.
pub fn read_blocklist<R: BufRead>(reader: R) -> Result<BTreeSet<String>, CorpusError> {
    let mut set = BTreeSet::new();
    for line in reader.lines() {
        let line = line?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line.as_str(),
        };
        let predicate = content.trim();
        if !predicate.is_empty() {
            set.insert(predicate.to_string());
        }
    }
    Ok(set)
}

pub fn load_blocklist(path: impl AsRef<Path>) -> Result<BTreeSet<String>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
    read_blocklist(BufReader::new(file))
}

/// Keeps only fully ontologized statements whose predicate is not blocked.
/// Assays left without statements are dropped.
pub fn prune_partially_ontologized(corpus: &Corpus, blocklist: &BTreeSet<String>) -> Corpus {
    filter_statements(corpus, |s| s.ontologized && !blocklist.contains(&s.predicate))
}

/// Keeps statements whose predicate is among the `n` most frequent ones
/// (by distinct-statement count, ties broken by predicate order).
pub fn top_predicate_subset(corpus: &Corpus, n: usize) -> Corpus {
    let keep: HashSet<String> = ranked_predicates(corpus).into_iter().take(n).map(|(p, _)| p).collect();
    filter_statements(corpus, |s| keep.contains(&s.predicate))
}

/// Predicates by descending distinct-statement count, then lexicographically.
pub fn ranked_predicates(corpus: &Corpus) -> Vec<(String, usize)> {
    let mut ranked: Vec<(String, usize)> = corpus.predicate_frequency().into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

fn filter_statements(corpus: &Corpus, keep: impl Fn(&Statement) -> bool) -> Corpus {
    let assays = corpus
        .assays
        .iter()
        .filter_map(|a| {
            let statements: Vec<Statement> = a.statements.iter().filter(|s| keep(s)).cloned().collect();
            (!statements.is_empty()).then(|| Bioassay {
                id: a.id.clone(),
                text: a.text.clone(),
                statements,
            })
        })
        .collect();
    Corpus { assays }
}

/// Statements-per-assay summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_assays: usize,
    pub total_statements: usize,
    pub min: usize,
    pub max: usize,
    pub total_unique: usize,
}

impl CorpusStats {
    /// Exact mean statements per assay.
    pub fn avg(&self) -> f64 {
        self.total_statements as f64 / self.n_assays as f64
    }

    /// Mean rounded half-up to the nearest integer, for display.
    pub fn avg_rounded(&self) -> usize {
        (2 * self.total_statements + self.n_assays) / (2 * self.n_assays)
    }
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let counts = corpus.assays.iter().map(|a| a.statements.len());
    Ok(CorpusStats {
        n_assays: corpus.len(),
        total_statements: counts.clone().sum(),
        min: counts.clone().min().unwrap_or(0),
        max: counts.max().unwrap_or(0),
        total_unique: corpus.statement_universe().len(),
    })
}

/// One cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Three folds with pairwise-disjoint test sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Fold>,
    pub seed: u64,
}

pub const N_FOLDS: usize = 3;

/// Shuffles assay ids, carves three disjoint test sets of `test_size`, and
/// samples each fold's `train_size` training ids from everything outside
/// that fold's own test set.
pub fn split_folds(
    corpus: &Corpus,
    train_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<FoldSplit, CorpusError> {
    let n = corpus.len();
    if test_size == 0 || train_size == 0 {
        return Err(CorpusError::InfeasibleSplit(
            "train and test sizes must be positive".into(),
        ));
    }
    if N_FOLDS * test_size > n || train_size + test_size > n {
        return Err(CorpusError::InfeasibleSplit(format!(
            "{n} assays cannot hold {N_FOLDS} disjoint test sets of {test_size} with {train_size} training assays"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<String> = corpus.assays.iter().map(|a| a.id.clone()).collect();
    ids.shuffle(&mut rng);

    let folds = (0..N_FOLDS)
        .map(|f| {
            let test_range = f * test_size..(f + 1) * test_size;
            let test_ids = ids[test_range.clone()].to_vec();
            let mut pool: Vec<String> = ids
                .iter()
                .enumerate()
                .filter(|(i, _)| !test_range.contains(i))
                .map(|(_, id)| id.clone())
                .collect();
            pool.shuffle(&mut rng);
            pool.truncate(train_size);
            Fold {
                train_ids: pool,
                test_ids,
            }
        })
        .collect();
    Ok(FoldSplit { folds, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(p: &str, v: &str, o: bool) -> Statement {
        Statement::new(p, v, o)
    }

    fn table1_line() -> &'static str {
        r#"{"id":"A360","text":"Inhibitors of the enzyme in DMSO at 25 degree celsius","statements":[{"predicate":"has participant","value":"DMSO","ontologized":true},{"predicate":"has assay phase characteristic","value":"homogeneous phase","ontologized":true},{"predicate":"has temperature value","value":"25 degree celsius","ontologized":false},{"predicate":"has incubation time value","value":"20 minute","ontologized":false}]}"#
    }

    #[test]
    fn loads_single_assay() {
        let data = r#"{"id":"a","text":"t","statements":[{"predicate":"p","value":"1","ontologized":true},{"predicate":"p","value":"2","ontologized":true}]}"#;
        let loaded = read_corpus(data.as_bytes()).unwrap();
        assert_eq!(loaded.corpus.len(), 1);
        assert_eq!(loaded.corpus.statement_universe().len(), 2);
    }

    #[test]
    fn loads_table1_assay() {
        let corpus = read_corpus(table1_line().as_bytes()).unwrap().corpus;
        assert!(corpus.statement_universe().contains("has participant -> DMSO"));
        assert_eq!(corpus.assays()[0].statements.len(), 4);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let data = format!("{}\n{}\n", table1_line(), table1_line());
        match read_corpus(data.as_bytes()) {
            Err(CorpusError::Validation(msg)) => assert!(msg.contains("A360")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_names_line() {
        let data = format!("{}\n\n{{not json\n", table1_line());
        match read_corpus(data.as_bytes()) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_statements_counted() {
        let data = r#"{"id":"a","text":"t","statements":[{"predicate":"p ","value":"v","ontologized":true},{"predicate":"p","value":" v","ontologized":true}]}"#;
        let loaded = read_corpus(data.as_bytes()).unwrap();
        assert_eq!(loaded.duplicates_dropped, 1);
        assert_eq!(loaded.corpus.assays()[0].statements, vec![st("p", "v", true)]);
    }

    #[test]
    fn empty_parts_rejected() {
        let data = r#"{"id":"a","text":"t","statements":[{"predicate":"  ","value":"v","ontologized":true}]}"#;
        assert!(matches!(read_corpus(data.as_bytes()), Err(CorpusError::Validation(_))));
        let data = r#"{"id":"a","text":"  ","statements":[]}"#;
        assert!(matches!(read_corpus(data.as_bytes()), Err(CorpusError::Validation(_))));
    }

    #[test]
    fn prune_keeps_ontologized_only() {
        let corpus = Corpus::new(vec![Bioassay::new(
            "a",
            "t",
            vec![st("p", "1", true), st("p", "2", false), st("q", "3", false)],
        )])
        .unwrap();
        let pruned = prune_partially_ontologized(&corpus, &BTreeSet::new());
        assert_eq!(pruned.assays()[0].statements.len(), 1);
        assert_eq!(corpus.assays()[0].statements.len(), 3);
    }

    #[test]
    fn prune_drops_emptied_assays() {
        let corpus = Corpus::new(vec![
            Bioassay::new("a", "t", vec![st("p", "1", false)]),
            Bioassay::new("b", "t", vec![st("p", "1", true)]),
        ])
        .unwrap();
        let pruned = prune_partially_ontologized(&corpus, &BTreeSet::new());
        assert_eq!(pruned.len(), 1);
        assert_eq!(pruned.assays()[0].id, "b");
    }

    #[test]
    fn blocklist_removes_predicate() {
        let title = "has assay title";
        let assays = (0..5)
            .map(|i| {
                let mut s = vec![st("has participant", &format!("x{i}"), true)];
                if i % 2 == 0 {
                    s.push(st(title, &format!("title {i}"), true));
                }
                if i == 4 {
                    s = vec![st(title, "only", true)];
                }
                Bioassay::new(format!("a{i}"), "text", s)
            })
            .collect();
        let corpus = Corpus::new(assays).unwrap();
        let block: BTreeSet<String> = [title.to_string()].into();
        let pruned = prune_partially_ontologized(&corpus, &block);
        // a4 carried only the blocked predicate and disappears.
        assert_eq!(pruned.len(), 4);
        assert!(pruned
            .assays()
            .iter()
            .flat_map(|a| &a.statements)
            .all(|s| s.predicate != title));
        assert_eq!(pruned.statement_universe().len(), 4);
    }

    #[test]
    fn blocklist_parsing() {
        let text = "# header\nhas assay title\n  has comment  # trailing\n\n";
        let set = read_blocklist(text.as_bytes()).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains("has comment"));
    }

    #[test]
    fn stats_hand_counted() {
        let corpus = Corpus::new(vec![
            Bioassay::new("a", "t", vec![st("p", "1", true), st("p", "2", true)]),
            Bioassay::new(
                "b",
                "t",
                vec![st("q", "1", true), st("q", "2", true), st("q", "3", true), st("q", "4", true)],
            ),
        ])
        .unwrap();
        let stats = corpus_stats(&corpus).unwrap();
        assert_eq!((stats.min, stats.max, stats.total_unique), (2, 4, 6));
        assert_eq!(stats.avg(), 3.0);
        assert_eq!(stats.avg_rounded(), 3);
    }

    #[test]
    fn stats_single_assay_and_empty() {
        let corpus =
            Corpus::new(vec![Bioassay::new("a", "t", vec![st("p", "1", true), st("p", "2", true), st("p", "3", true)])])
                .unwrap();
        let stats = corpus_stats(&corpus).unwrap();
        assert_eq!((stats.min, stats.max, stats.avg()), (3, 3, 3.0));
        assert!(matches!(corpus_stats(&Corpus::default()), Err(CorpusError::Empty)));
    }

    #[test]
    fn avg_rounding_half_up() {
        let stats = CorpusStats {
            n_assays: 2,
            total_statements: 5,
            min: 2,
            max: 3,
            total_unique: 5,
        };
        assert_eq!(stats.avg_rounded(), 3);
    }

    #[test]
    fn top_predicate_keeps_most_frequent() {
        let corpus = Corpus::new(vec![
            Bioassay::new("a", "t", vec![st("P1", "1", true), st("P2", "x", true)]),
            Bioassay::new("b", "t", vec![st("P1", "2", true), st("P1", "3", true)]),
        ])
        .unwrap();
        let top = top_predicate_subset(&corpus, 1);
        let universe = top.statement_universe();
        assert_eq!(universe.len(), 3);
        assert!(universe.iter().all(|k| k.starts_with("P1")));
        assert_eq!(top_predicate_subset(&corpus, 10), corpus);
    }

    #[test]
    fn top_predicate_ties_lexicographic() {
        let corpus = Corpus::new(vec![Bioassay::new(
            "a",
            "t",
            vec![st("b", "1", true), st("a", "1", true)],
        )])
        .unwrap();
        let top = top_predicate_subset(&corpus, 1);
        assert_eq!(top.assays()[0].statements, vec![st("a", "1", true)]);
    }

    fn n_assays(n: usize) -> Corpus {
        Corpus::new(
            (0..n)
                .map(|i| Bioassay::new(format!("a{i}"), "text", vec![st("p", "v", true)]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_exact_partition() {
        let corpus = n_assays(9);
        let split = split_folds(&corpus, 3, 3, 1).unwrap();
        let mut all: Vec<String> = split.folds.iter().flat_map(|f| f.test_ids.clone()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 9);
        for fold in &split.folds {
            assert!(fold.train_ids.iter().all(|id| !fold.test_ids.contains(id)));
            assert_eq!(fold.train_ids.len(), 3);
        }
    }

    #[test]
    fn split_full_sizes() {
        let corpus = n_assays(983);
        let split = split_folds(&corpus, 600, 300, 7).unwrap();
        assert_eq!(split.folds.len(), 3);
        for (i, fold) in split.folds.iter().enumerate() {
            assert_eq!(fold.test_ids.len(), 300);
            assert_eq!(fold.train_ids.len(), 600);
            let test: HashSet<_> = fold.test_ids.iter().collect();
            assert!(fold.train_ids.iter().all(|id| !test.contains(id)));
            for other in &split.folds[i + 1..] {
                assert!(other.test_ids.iter().all(|id| !test.contains(id)));
            }
        }
        assert_eq!(split, split_folds(&corpus, 600, 300, 7).unwrap());
        assert_ne!(split, split_folds(&corpus, 600, 300, 8).unwrap());
    }

    #[test]
    fn split_infeasible() {
        let corpus = n_assays(8);
        assert!(matches!(split_folds(&corpus, 3, 3, 0), Err(CorpusError::InfeasibleSplit(_))));
        assert!(matches!(split_folds(&corpus, 7, 2, 0), Err(CorpusError::InfeasibleSplit(_))));
    }

    #[test]
    fn jsonl_roundtrip() {
        let corpus = read_corpus(table1_line().as_bytes()).unwrap().corpus;
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let again = read_corpus(buf.as_slice()).unwrap().corpus;
        assert_eq!(corpus, again);
        assert_eq!(corpus.fingerprint(), again.fingerprint());
    }
}
