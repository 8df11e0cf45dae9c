//! Seeded synthetic corpora with planted structure, used by tests, the
//! acceptance suite and CLI demos.
//!
//! A planted corpus has `groups` vocabulary-disjoint groups. Every assay in a
//! group shares the group's core words plus a few random group-specific
//! extras, and all assays of a group carry the identical statement set drawn
//! from a shared statement universe.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Bioassay, Corpus, Statement};
use crate::vectorizer::SparseVector;

/// Distinct predicates used by [`statement_universe`].
pub const N_PREDICATES: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub groups: usize,
    pub per_group: usize,
    pub universe: usize,
    pub min_statements: usize,
    pub max_statements: usize,
    pub core_words: usize,
    pub extra_words: usize,
    pub extras_per_assay: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            groups: 8,
            per_group: 100,
            universe: 1900,
            min_statements: 30,
            max_statements: 50,
            core_words: 20,
            extra_words: 30,
            extras_per_assay: 6,
            seed: 42,
        }
    }
}

/// `n` distinct ontologized statements over [`N_PREDICATES`] predicates.
pub fn statement_universe(n: usize) -> Vec<Statement> {
    (0..n)
        .map(|i| Statement::new(format!("has property {:02}", i % N_PREDICATES), format!("term {i:04}"), true))
        .collect()
}

fn group_word(group: usize, j: usize) -> String {
    // letters only so the tokenizer keeps each word whole
    let letters = |mut x: usize| {
        let mut s = String::new();
        loop {
            s.push((b'a' + (x % 26) as u8) as char);
            x /= 26;
            if x == 0 {
                break s;
            }
        }
    };
    format!("grp{}w{}", letters(group), letters(j))
}

/// The planted group of each assay id produced by [`planted_corpus`].
pub fn planted_group(id: &str) -> Option<usize> {
    id.strip_prefix('G')?.split('-').next()?.parse().ok()
}

pub fn planted_corpus(config: &PlantedConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let universe = statement_universe(config.universe);
    let mut assays = Vec::with_capacity(config.groups * config.per_group);
    for g in 0..config.groups {
        let size = rng.gen_range(config.min_statements..=config.max_statements).min(universe.len());
        let mut picks: Vec<usize> = index::sample(&mut rng, universe.len(), size).into_vec();
        picks.sort_unstable();
        let statements: Vec<Statement> = picks.iter().map(|&i| universe[i].clone()).collect();
        let core: Vec<String> = (0..config.core_words).map(|j| group_word(g, j)).collect();
        for a in 0..config.per_group {
            let mut words = core.clone();
            let extras = config.extras_per_assay.min(config.extra_words);
            for j in index::sample(&mut rng, config.extra_words, extras) {
                words.push(group_word(g, config.core_words + j));
            }
            let text = words.join(" ");
            assays.push(Bioassay::new(format!("G{g}-{a:04}"), text, statements.clone()));
        }
    }
    Corpus::new(assays).expect("generated ids are unique")
}

/// `per_blob` points per center, each coordinate uniform within `spread` of
/// each center.
pub fn blobs(centers: &[Vec<f64>], per_blob: usize, spread: f64, seed: u64) -> Vec<SparseVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(centers.len() * per_blob);
    for c in centers {
        for _ in 0..per_blob {
            let p: Vec<f64> = c.iter().map(|x| x + rng.gen_range(-spread..=spread)).collect();
            out.push(SparseVector::from_dense(&p));
        }
    }
    out
}
