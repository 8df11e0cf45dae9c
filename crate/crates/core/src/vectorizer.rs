//! Bag-of-words TF-IDF with smoothed idf and L2-normalized sparse output.
//!
//! Tokens are lowercase alphanumeric runs of at least [`MIN_TOKEN_LEN`]
//! characters; digits are kept because measurement values carry signal in
//! assay descriptions. No stop words, no stemming.
//!
//! `idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1`

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::VectorizerError;

pub const MIN_TOKEN_LEN: usize = 2;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= MIN_TOKEN_LEN)
        .map(str::to_lowercase)
        .collect()
}

/// A sparse vector with strictly increasing indices and nonzero weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds from unsorted entries; zero weights are dropped and duplicate
    /// indices summed. Panics when an index is out of range.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, w) in entries {
            assert!(i < dim, "index {i} out of range for dimension {dim}");
            *acc.entry(i).or_insert(0.0) += w;
        }
        SparseVector {
            dim,
            entries: acc.into_iter().filter(|&(_, w)| w != 0.0).collect(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector::from_entries(values.len(), values.iter().copied().enumerate())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, w) in &self.entries {
            out[i] = w;
        }
        out
    }

    /// `[self | other]`, with `other`'s indices shifted by `self.dim`.
    pub fn concat(&self, other: &SparseVector) -> SparseVector {
        let mut entries = Vec::with_capacity(self.nnz() + other.nnz());
        entries.extend_from_slice(&self.entries);
        entries.extend(other.entries.iter().map(|&(i, w)| (i + self.dim, w)));
        SparseVector {
            dim: self.dim + other.dim,
            entries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub min_token_len: usize,
    pub idf: String,
    pub norm: String,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig {
            min_token_len: MIN_TOKEN_LEN,
            idf: "smooth+1".into(),
            norm: "l2".into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TfidfRepr {
    vocabulary: BTreeMap<String, usize>,
    doc_freq: Vec<usize>,
    n_docs: usize,
    config: TfidfConfig,
}

/// A fitted vocabulary with document frequencies and idf weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TfidfRepr", try_from = "TfidfRepr")]
pub struct TfidfModel {
    vocabulary: BTreeMap<String, usize>,
    doc_freq: Vec<usize>,
    n_docs: usize,
    idf: Vec<f64>,
    config: TfidfConfig,
}

impl From<TfidfModel> for TfidfRepr {
    fn from(m: TfidfModel) -> Self {
        TfidfRepr {
            vocabulary: m.vocabulary,
            doc_freq: m.doc_freq,
            n_docs: m.n_docs,
            config: m.config,
        }
    }
}

impl TryFrom<TfidfRepr> for TfidfModel {
    type Error = String;

    fn try_from(r: TfidfRepr) -> Result<Self, String> {
        if r.vocabulary.len() != r.doc_freq.len() {
            return Err("vocabulary and doc_freq lengths differ".into());
        }
        let indices: BTreeSet<usize> = r.vocabulary.values().copied().collect();
        if indices.len() != r.vocabulary.len() || indices.iter().next_back().is_some_and(|&m| m + 1 != indices.len()) {
            return Err("vocabulary indices must be a contiguous range from 0".into());
        }
        if r.config != TfidfConfig::default() {
            return Err(format!("unsupported TF-IDF configuration {:?}", r.config));
        }
        Ok(TfidfModel {
            idf: r.doc_freq.iter().map(|&df| smooth_idf(r.n_docs, df)).collect(),
            vocabulary: r.vocabulary,
            doc_freq: r.doc_freq,
            n_docs: r.n_docs,
            config: r.config,
        })
    }
}

fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1 + n_docs) as f64 / (1 + df) as f64).ln() + 1.0
}

impl TfidfModel {
    pub fn fit<S: AsRef<str>>(docs: &[S]) -> Result<Self, VectorizerError> {
        if docs.is_empty() {
            return Err(VectorizerError::NoDocuments);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let distinct: BTreeSet<String> = tokenize(doc.as_ref()).into_iter().collect();
            for term in distinct {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        if df.is_empty() {
            return Err(VectorizerError::EmptyVocabulary);
        }
        let n_docs = docs.len();
        let vocabulary = df.keys().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let doc_freq: Vec<usize> = df.into_values().collect();
        Ok(TfidfModel {
            idf: doc_freq.iter().map(|&d| smooth_idf(n_docs, d)).collect(),
            vocabulary,
            doc_freq,
            n_docs,
            config: TfidfConfig::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    /// Count-times-idf weights, L2-normalized. Unknown tokens are ignored;
    /// a text with no known token maps to the zero vector.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
        for token in tokenize(text) {
            if let Some(idx) = self.index_of(&token) {
                *counts.entry(idx).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(usize, f64)> =
            counts.into_iter().map(|(i, c)| (i, c as f64 * self.idf[i])).collect();
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut entries {
                *w /= norm;
            }
        }
        SparseVector {
            dim: self.dim(),
            entries,
        }
    }
}
