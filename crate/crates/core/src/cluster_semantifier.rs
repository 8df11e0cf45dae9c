//! Cluster-then-copy semantification.
//!
//! Training assays are clustered on their TF-IDF vectors. Every cluster keeps
//! a table counting, for each statement, how many of its member assays carry
//! it. A new text is routed to its nearest centroid and receives every
//! statement of that cluster with count >= threshold: threshold 1 is the
//! union of the members' statement sets, threshold = member count is their
//! intersection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Bioassay, Statement};
use crate::error::SemantifyError;
use crate::evaluation::{score_assays, FoldMetrics, Metrics};
use crate::corpus::{Corpus, FoldSplit};
use crate::kmeans::{self, KMeansConfig, KMeansModel};
use crate::vectorizer::TfidfModel;
use crate::Semantifier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub kmeans: KMeansConfig,
    pub threshold: usize,
}

impl ClusterConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        ClusterConfig {
            kmeans: KMeansConfig::new(k, seed),
            threshold: 1,
        }
    }

    pub fn with_threshold(mut self, threshold: usize) -> Self {
        self.threshold = threshold;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClusterRepr", into = "ClusterRepr")]
pub struct ClusterSemantifier {
    tfidf: TfidfModel,
    kmeans: KMeansModel,
    tables: Vec<BTreeMap<String, usize>>,
    sizes: Vec<usize>,
    statements: BTreeMap<String, Statement>,
    default_threshold: usize,
}

#[derive(Serialize, Deserialize)]
struct ClusterRepr {
    tfidf: TfidfModel,
    kmeans: KMeansModel,
    cluster_tables: BTreeMap<usize, BTreeMap<String, usize>>,
    cluster_sizes: Vec<usize>,
    statements: BTreeMap<String, Statement>,
    default_threshold: usize,
}

impl From<ClusterSemantifier> for ClusterRepr {
    fn from(s: ClusterSemantifier) -> Self {
        ClusterRepr {
            tfidf: s.tfidf,
            kmeans: s.kmeans,
            cluster_tables: s.tables.into_iter().enumerate().collect(),
            cluster_sizes: s.sizes,
            statements: s.statements,
            default_threshold: s.default_threshold,
        }
    }
}

impl TryFrom<ClusterRepr> for ClusterSemantifier {
    type Error = String;

    fn try_from(r: ClusterRepr) -> Result<Self, String> {
        let k = r.kmeans.k;
        if r.kmeans.dim != r.tfidf.dim() {
            return Err("centroid dimension differs from vocabulary size".into());
        }
        if r.cluster_tables.len() != k || r.cluster_tables.keys().copied().ne(0..k) {
            return Err(format!("expected cluster tables 0..{k}"));
        }
        if r.cluster_sizes.len() != k {
            return Err(format!("expected {k} cluster sizes"));
        }
        if r.default_threshold == 0 {
            return Err("default threshold must be at least 1".into());
        }
        for (j, table) in &r.cluster_tables {
            for (key, &count) in table {
                if !r.statements.contains_key(key) {
                    return Err(format!("cluster {j} references unknown statement {key:?}"));
                }
                if count == 0 || count > r.cluster_sizes[*j] {
                    return Err(format!("cluster {j}: count {count} for {key:?} out of range"));
                }
            }
        }
        if let Some((key, s)) = r.statements.iter().find(|(key, s)| s.key() != **key) {
            return Err(format!("statement dictionary key {key:?} does not match {s}"));
        }
        Ok(ClusterSemantifier {
            tfidf: r.tfidf,
            kmeans: r.kmeans,
            tables: r.cluster_tables.into_values().collect(),
            sizes: r.cluster_sizes,
            statements: r.statements,
            default_threshold: r.default_threshold,
        })
    }
}

/// Statements copied from the nearest cluster, with their member counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPrediction {
    pub cluster: usize,
    pub members: usize,
    pub statements: Vec<(Statement, usize)>,
}

impl ClusterSemantifier {
    /// Fits TF-IDF and K-means on the training texts, then counts statement
    /// occurrences per cluster.
    pub fn fit(train: &[Bioassay], config: &ClusterConfig) -> Result<Self, SemantifyError> {
        if config.threshold == 0 {
            return Err(SemantifyError::ZeroThreshold);
        }
        if train.is_empty() {
            return Err(SemantifyError::EmptyTrainingSet);
        }
        let texts: Vec<&str> = train.iter().map(|a| a.text.as_str()).collect();
        let tfidf = TfidfModel::fit(&texts)?;
        let vectors: Vec<_> = texts.iter().map(|t| tfidf.transform(t)).collect();
        let fit = kmeans::fit(&vectors, &config.kmeans)?;

        let k = fit.model.k;
        let mut tables = vec![BTreeMap::new(); k];
        let mut sizes = vec![0; k];
        let mut statements = BTreeMap::new();
        for (assay, &cluster) in train.iter().zip(&fit.labels) {
            sizes[cluster] += 1;
            let keys: BTreeSet<String> = assay.keys();
            for s in &assay.statements {
                statements.entry(s.key()).or_insert_with(|| s.clone());
            }
            for key in keys {
                *tables[cluster].entry(key).or_insert(0) += 1;
            }
        }
        Ok(ClusterSemantifier {
            tfidf,
            kmeans: fit.model,
            tables,
            sizes,
            statements,
            default_threshold: config.threshold,
        })
    }

    pub fn k(&self) -> usize {
        self.kmeans.k
    }

    pub fn tfidf(&self) -> &TfidfModel {
        &self.tfidf
    }

    pub fn kmeans(&self) -> &KMeansModel {
        &self.kmeans
    }

    /// Statement key -> number of member assays carrying it.
    pub fn cluster_table(&self, cluster: usize) -> &BTreeMap<String, usize> {
        &self.tables[cluster]
    }

    pub fn cluster_size(&self, cluster: usize) -> usize {
        self.sizes[cluster]
    }

    pub fn default_threshold(&self) -> usize {
        self.default_threshold
    }

    pub fn statement_dictionary(&self) -> &BTreeMap<String, Statement> {
        &self.statements
    }

    /// Nearest cluster for a text. Texts without known terms are the zero
    /// vector and go to whichever centroid is closest to the origin.
    pub fn cluster_of(&self, text: &str) -> usize {
        let v = self.tfidf.transform(text);
        self.kmeans.assign(&v).expect("vectorizer and centroids share a dimension")
    }

    pub fn predict_detailed(&self, text: &str, threshold: usize) -> Result<ClusterPrediction, SemantifyError> {
        if threshold == 0 {
            return Err(SemantifyError::ZeroThreshold);
        }
        let cluster = self.cluster_of(text);
        let statements = self.tables[cluster]
            .iter()
            .filter(|(_, &count)| count >= threshold)
            .map(|(key, &count)| (self.statements[key].clone(), count))
            .collect();
        Ok(ClusterPrediction {
            cluster,
            members: self.sizes[cluster],
            statements,
        })
    }

    /// Statements of the nearest cluster carried by at least `threshold`
    /// members, ordered by canonical key.
    pub fn predict(&self, text: &str, threshold: usize) -> Result<Vec<Statement>, SemantifyError> {
        Ok(self
            .predict_detailed(text, threshold)?
            .statements
            .into_iter()
            .map(|(s, _)| s)
            .collect())
    }
}

impl Semantifier for ClusterSemantifier {
    fn semantify(&self, text: &str) -> Vec<Statement> {
        self.predict(text, self.default_threshold).expect("default threshold is positive")
    }
}

/// One row of a sweep: a cluster count and the fold-averaged metrics at each
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub threshold: usize,
    pub per_fold: Vec<FoldMetrics>,
    pub mean: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub k_grid: Vec<usize>,
    pub thresholds: Vec<usize>,
    pub seed: u64,
    pub aggregation: String,
    pub rows: Vec<SweepRow>,
}

/// Fits one model per (fold, k) and scores every threshold against it.
pub fn sweep(
    corpus: &Corpus,
    folds: &FoldSplit,
    k_grid: &[usize],
    thresholds: &[usize],
    base: &KMeansConfig,
) -> Result<SweepGrid, SemantifyError> {
    if k_grid.is_empty() || thresholds.is_empty() {
        return Err(SemantifyError::Config("sweep grids must be nonempty".into()));
    }
    if thresholds.contains(&0) {
        return Err(SemantifyError::ZeroThreshold);
    }
    let mut rows = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let mut per_threshold: Vec<Vec<FoldMetrics>> = vec![Vec::new(); thresholds.len()];
        for (f, fold) in folds.folds.iter().enumerate() {
            let train = corpus.select(&fold.train_ids);
            let test = corpus.select(&fold.test_ids);
            let config = ClusterConfig {
                kmeans: KMeansConfig { k, ..*base },
                threshold: 1,
            };
            let model = ClusterSemantifier::fit(&train, &config)?;
            for (slot, &t) in per_threshold.iter_mut().zip(thresholds) {
                let metrics = score_assays(&test, |text| model.predict(text, t).expect("threshold checked"));
                slot.push(FoldMetrics { fold: f, metrics });
            }
        }
        let cells = thresholds
            .iter()
            .zip(per_threshold)
            .map(|(&threshold, per_fold)| SweepCell {
                threshold,
                mean: Metrics::mean(per_fold.iter().map(|m| &m.metrics)),
                per_fold,
            })
            .collect();
        rows.push(SweepRow { k, cells });
    }
    Ok(SweepGrid {
        k_grid: k_grid.to_vec(),
        thresholds: thresholds.to_vec(),
        seed: base.seed,
        aggregation: "micro".into(),
        rows,
    })
}

impl SweepGrid {
    /// Aligned text table: one row per k, one P/R/F1 column group per
    /// threshold, highest threshold first.
    pub fn to_table(&self) -> String {
        let mut order: Vec<usize> = (0..self.thresholds.len()).collect();
        order.sort_by(|&a, &b| self.thresholds[b].cmp(&self.thresholds[a]));
        let mut out = String::new();
        out.push_str(&format!("{:>8}", "clusters"));
        for &i in &order {
            out.push_str(&format!(" | {:^20}", format!("labels freq >= {}", self.thresholds[i])));
        }
        out.push('\n');
        out.push_str(&format!("{:>8}", ""));
        for _ in &order {
            out.push_str(&format!(" | {:>6}{:>7}{:>7}", "P", "R", "F1"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:>8}", row.k));
            for &i in &order {
                let m = &row.cells[i].mean;
                out.push_str(&format!(" | {:>6.2}{:>7.2}{:>7.2}", m.precision, m.recall, m.f1));
            }
            out.push('\n');
        }
        out
    }

    /// The (k, threshold) cell with the highest mean F1; earliest on ties.
    pub fn best(&self) -> Option<(usize, usize, Metrics)> {
        let mut best: Option<(usize, usize, Metrics)> = None;
        for row in &self.rows {
            for cell in &row.cells {
                if best.as_ref().is_none_or(|b| cell.mean.f1 > b.2.f1) {
                    best = Some((row.k, cell.threshold, cell.mean));
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(key: &str) -> Statement {
        Statement::new("has", key, true)
    }

    fn assay(id: &str, text: &str, keys: &[&str]) -> Bioassay {
        Bioassay::new(id, text, keys.iter().map(|k| st(k)).collect())
    }

    fn two_group_train() -> Vec<Bioassay> {
        vec![
            assay("a", "kinase inhibitor luciferase", &["A", "B"]),
            assay("b", "kinase inhibitor luciferase readout", &["B", "C"]),
            assay("c", "bacterial growth plate", &["X"]),
            assay("d", "bacterial growth plate count", &["X", "Y"]),
        ]
    }

    #[test]
    fn table_counts_members() {
        let model = ClusterSemantifier::fit(&two_group_train(), &ClusterConfig::new(2, 1)).unwrap();
        let c = model.cluster_of("kinase inhibitor luciferase");
        let table = model.cluster_table(c);
        let expect: BTreeMap<String, usize> =
            [("has -> A", 1), ("has -> B", 2), ("has -> C", 1)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert_eq!(table, &expect);
        assert_eq!(model.cluster_size(c), 2);
    }

    #[test]
    fn threshold_filtering() {
        let model = ClusterSemantifier::fit(&two_group_train(), &ClusterConfig::new(2, 1)).unwrap();
        let text = "kinase luciferase";
        assert_eq!(model.predict(text, 1).unwrap(), vec![st("A"), st("B"), st("C")]);
        assert_eq!(model.predict(text, 2).unwrap(), vec![st("B")]);
        assert!(model.predict(text, 3).unwrap().is_empty());
        assert!(matches!(model.predict(text, 0), Err(SemantifyError::ZeroThreshold)));
    }

    #[test]
    fn singleton_clusters_copy_exactly() {
        let train = two_group_train();
        let model = ClusterSemantifier::fit(&train, &ClusterConfig::new(train.len(), 4)).unwrap();
        for a in &train {
            let c = model.cluster_of(&a.text);
            assert_eq!(model.cluster_size(c), 1);
            assert!(model.cluster_table(c).values().all(|&n| n == 1));
            let mut expect = a.statements.clone();
            expect.sort_by_key(Statement::key);
            assert_eq!(model.predict(&a.text, 1).unwrap(), expect);
        }
    }

    #[test]
    fn unseen_text_still_predicts() {
        let model = ClusterSemantifier::fit(&two_group_train(), &ClusterConfig::new(2, 1)).unwrap();
        let c = model.cluster_of("zzz qqq");
        let zero = crate::vectorizer::SparseVector::zeros(model.tfidf().dim());
        assert_eq!(c, model.kmeans().assign(&zero).unwrap());
        assert!(!model.predict("zzz qqq", 1).unwrap().is_empty());
    }

    #[test]
    fn deterministic_and_serializable() {
        let a = ClusterSemantifier::fit(&two_group_train(), &ClusterConfig::new(2, 11)).unwrap();
        let b = ClusterSemantifier::fit(&two_group_train(), &ClusterConfig::new(2, 11)).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        assert!(json.contains("\"cluster_tables\":{\"0\":"));
        let back: ClusterSemantifier = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn corrupt_artifact_rejected() {
        let a = ClusterSemantifier::fit(&two_group_train(), &ClusterConfig::new(2, 11)).unwrap();
        let mut v: serde_json::Value = serde_json::to_value(&a).unwrap();
        v["cluster_tables"]["0"]["nonexistent -> key"] = 1.into();
        assert!(serde_json::from_value::<ClusterSemantifier>(v).is_err());
    }

    #[test]
    fn k_above_train_size_errors() {
        let err = ClusterSemantifier::fit(&two_group_train(), &ClusterConfig::new(5, 1)).unwrap_err();
        assert!(matches!(err, SemantifyError::KMeans(_)));
    }
}
