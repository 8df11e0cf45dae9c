//! Set-prediction scoring, three-fold cross validation and latency
//! measurement.
//!
//! Within a fold, true/false positives and false negatives are summed over
//! all test assays before precision, recall and F1 are computed (micro
//! aggregation). Fold metrics are then averaged arithmetically. An empty
//! prediction has precision 0, so F1 is always defined.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster_semantifier::{ClusterConfig, ClusterSemantifier};
use crate::corpus::{Bioassay, Corpus, FoldSplit, Statement};
use crate::error::SemantifyError;
use crate::label_semantifier::{LabelSemantifier, LabelerConfig};
use crate::Semantifier;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetScore {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl SetScore {
    pub fn metrics(&self) -> Metrics {
        Metrics::from_counts(self.tp, self.fp, self.fn_)
    }
}

impl std::ops::Add for SetScore {
    type Output = SetScore;

    fn add(self, o: SetScore) -> SetScore {
        SetScore {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

pub fn score_sets<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> SetScore {
    let tp = pred.intersection(gold).count();
    SetScore {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Metrics {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Metrics {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }

    /// Coordinate-wise arithmetic mean.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Metrics>) -> Metrics {
        let mut n = 0.0;
        let mut acc = Metrics::default();
        for m in items {
            n += 1.0;
            acc.precision += m.precision;
            acc.recall += m.recall;
            acc.f1 += m.f1;
        }
        if n == 0.0 {
            return acc;
        }
        Metrics {
            precision: acc.precision / n,
            recall: acc.recall / n,
            f1: acc.f1 / n,
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Sums counts over all scores, then computes metrics once.
pub fn aggregate_micro(scores: &[SetScore]) -> Metrics {
    scores.iter().copied().fold(SetScore::default(), |a, b| a + b).metrics()
}

/// Micro-aggregated metrics of `predict` over a list of gold assays.
pub fn score_assays(test: &[Bioassay], mut predict: impl FnMut(&str) -> Vec<Statement>) -> Metrics {
    let scores: Vec<SetScore> = test
        .iter()
        .map(|a| {
            let pred: BTreeSet<String> = predict(&a.text).iter().map(Statement::key).collect();
            score_sets(&pred, &a.keys())
        })
        .collect();
    aggregate_micro(&scores)
}

/// Either semantification method with its full configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodConfig {
    Cluster(ClusterConfig),
    Labeler(LabelerConfig),
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Cluster(_) => "cluster",
            MethodConfig::Labeler(_) => "labeler",
        }
    }
}

/// A fitted model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedMethod {
    Cluster(ClusterSemantifier),
    Labeler(LabelSemantifier),
}

impl FittedMethod {
    pub fn fit(train: &[Bioassay], config: &MethodConfig) -> Result<Self, SemantifyError> {
        Ok(match config {
            MethodConfig::Cluster(c) => FittedMethod::Cluster(ClusterSemantifier::fit(train, c)?),
            MethodConfig::Labeler(c) => FittedMethod::Labeler(LabelSemantifier::train(train, c)?),
        })
    }
}

impl Semantifier for FittedMethod {
    fn semantify(&self, text: &str) -> Vec<Statement> {
        match self {
            FittedMethod::Cluster(m) => m.semantify(text),
            FittedMethod::Labeler(m) => m.semantify(text),
        }
    }

    fn semantify_counted(&self, text: &str) -> (Vec<Statement>, Option<usize>) {
        match self {
            FittedMethod::Cluster(m) => m.semantify_counted(text),
            FittedMethod::Labeler(m) => m.semantify_counted(text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Per-assay prediction latency summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub assays: usize,
    pub mean_us: f64,
    pub median_us: f64,
    pub max_us: f64,
    pub predictions_per_sec: f64,
    /// Classifier evaluations per assay, for methods that score pairs.
    pub classifier_evaluations_per_assay: Option<usize>,
}

impl TimingStats {
    fn from_samples(mut micros: Vec<f64>, evaluations: Option<usize>) -> TimingStats {
        let n = micros.len();
        if n == 0 {
            return TimingStats {
                assays: 0,
                mean_us: 0.0,
                median_us: 0.0,
                max_us: 0.0,
                predictions_per_sec: 0.0,
                classifier_evaluations_per_assay: evaluations,
            };
        }
        micros.sort_by(f64::total_cmp);
        let total: f64 = micros.iter().sum();
        let median = if n % 2 == 1 {
            micros[n / 2]
        } else {
            (micros[n / 2 - 1] + micros[n / 2]) / 2.0
        };
        TimingStats {
            assays: n,
            mean_us: total / n as f64,
            median_us: median,
            max_us: micros[n - 1],
            predictions_per_sec: if total > 0.0 { n as f64 * 1e6 / total } else { f64::INFINITY },
            classifier_evaluations_per_assay: evaluations,
        }
    }
}

/// Times each prediction sequentially on a warm model. Fitting is excluded.
pub fn timing_report<S: Semantifier + ?Sized>(method: &S, texts: &[&str]) -> TimingStats {
    let mut micros = Vec::with_capacity(texts.len());
    let mut evaluations: Option<usize> = None;
    if let Some(first) = texts.first() {
        // warm-up
        method.semantify(first);
    }
    for text in texts {
        let start = Instant::now();
        let (_, evals) = method.semantify_counted(text);
        micros.push(start.elapsed().as_secs_f64() * 1e6);
        if let Some(e) = evals {
            evaluations = Some(evaluations.map_or(e, |prev: usize| prev.max(e)));
        }
    }
    TimingStats::from_samples(micros, evaluations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: MethodConfig,
    pub folds_seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub aggregation: String,
    pub per_fold: Vec<FoldMetrics>,
    pub mean: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingStats>,
}

impl EvalReport {
    /// The report without wall-clock fields, for reproducibility checks.
    pub fn without_timing(&self) -> EvalReport {
        EvalReport {
            timing: None,
            ..self.clone()
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "method {} | aggregation {} | folds seed {}\n{:>6} {:>7} {:>7} {:>7}\n",
            self.config.name(),
            self.aggregation,
            self.folds_seed,
            "fold",
            "P",
            "R",
            "F1"
        );
        for f in &self.per_fold {
            out.push_str(&format!(
                "{:>6} {:>7.4} {:>7.4} {:>7.4}\n",
                f.fold, f.metrics.precision, f.metrics.recall, f.metrics.f1
            ));
        }
        out.push_str(&format!(
            "{:>6} {:>7.4} {:>7.4} {:>7.4}\n",
            "mean", self.mean.precision, self.mean.recall, self.mean.f1
        ));
        if let Some(t) = &self.timing {
            out.push_str(&format!(
                "latency per assay: median {:.1} us, mean {:.1} us ({:.0} assays/s)",
                t.median_us, t.mean_us, t.predictions_per_sec
            ));
            if let Some(e) = t.classifier_evaluations_per_assay {
                out.push_str(&format!(", {e} classifier evaluations/assay"));
            }
            out.push('\n');
        }
        out
    }
}

/// Fits on each fold's training assays only, predicts its test assays and
/// reports micro metrics per fold and their mean.
pub fn cross_validate(corpus: &Corpus, config: &MethodConfig, folds: &FoldSplit) -> Result<EvalReport, SemantifyError> {
    let mut per_fold = Vec::with_capacity(folds.folds.len());
    let mut micros = Vec::new();
    let mut evaluations = None;
    for (f, fold) in folds.folds.iter().enumerate() {
        let train = corpus.select(&fold.train_ids);
        let test = corpus.select(&fold.test_ids);
        if train.len() != fold.train_ids.len() || test.len() != fold.test_ids.len() {
            return Err(SemantifyError::Config(format!("fold {f} references assays missing from the corpus")));
        }
        let model = FittedMethod::fit(&train, config)?;
        let mut scores = Vec::with_capacity(test.len());
        for assay in &test {
            let start = Instant::now();
            let (pred, evals) = model.semantify_counted(&assay.text);
            micros.push(start.elapsed().as_secs_f64() * 1e6);
            if evals.is_some() {
                evaluations = evals;
            }
            let pred: BTreeSet<String> = pred.iter().map(Statement::key).collect();
            scores.push(score_sets(&pred, &assay.keys()));
        }
        per_fold.push(FoldMetrics {
            fold: f,
            metrics: aggregate_micro(&scores),
        });
    }
    let first = folds.folds.first();
    Ok(EvalReport {
        config: *config,
        folds_seed: folds.seed,
        train_size: first.map_or(0, |f| f.train_ids.len()),
        test_size: first.map_or(0, |f| f.test_ids.len()),
        aggregation: "micro".into(),
        mean: Metrics::mean(per_fold.iter().map(|f| &f.metrics)),
        per_fold,
        timing: Some(TimingStats::from_samples(micros, evaluations)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_fixture() {
        let s = score_sets(&set(&["A", "B", "C"]), &set(&["B", "C", "D"]));
        assert_eq!(s, SetScore { tp: 2, fp: 1, fn_: 1 });
        let m = s.metrics();
        assert_eq!(m.precision, 2.0 / 3.0);
        assert_eq!(m.recall, 2.0 / 3.0);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_empty() {
        let gold = set(&["A", "B"]);
        assert_eq!(score_sets(&gold, &gold).metrics(), Metrics { precision: 1.0, recall: 1.0, f1: 1.0 });
        let m = score_sets(&BTreeSet::new(), &gold).metrics();
        assert_eq!(m, Metrics::default());
    }

    #[test]
    fn micro_aggregation() {
        let m = aggregate_micro(&[SetScore { tp: 1, fp: 1, fn_: 0 }, SetScore { tp: 1, fp: 0, fn_: 1 }]);
        assert_eq!(m.precision, 2.0 / 3.0);
        assert_eq!(m.recall, 2.0 / 3.0);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);

        let single = SetScore { tp: 3, fp: 1, fn_: 2 };
        assert_eq!(aggregate_micro(&[single]), single.metrics());

        let zero = aggregate_micro(&[SetScore { tp: 0, fp: 2, fn_: 0 }, SetScore { tp: 0, fp: 0, fn_: 5 }]);
        assert_eq!(zero, Metrics::default());
    }

    #[test]
    fn timing_samples() {
        let t = TimingStats::from_samples(vec![3.0, 1.0, 2.0, 10.0], Some(5));
        assert_eq!(t.median_us, 2.5);
        assert_eq!(t.mean_us, 4.0);
        assert_eq!(t.max_us, 10.0);
        assert_eq!(t.classifier_evaluations_per_assay, Some(5));
    }

    proptest! {
        #[test]
        fn swap_exchanges_fp_fn(a in prop::collection::btree_set(0u8..20, 0..15), b in prop::collection::btree_set(0u8..20, 0..15)) {
            let ab = score_sets(&a, &b);
            let ba = score_sets(&b, &a);
            prop_assert_eq!(ab.tp, ba.tp);
            prop_assert_eq!(ab.fp, ba.fn_);
            prop_assert_eq!(ab.fn_, ba.fp);
        }

        #[test]
        fn f1_is_harmonic_mean(a in prop::collection::btree_set(0u8..30, 0..20), b in prop::collection::btree_set(0u8..30, 0..20)) {
            let m = score_sets(&a, &b).metrics();
            prop_assert!((0.0..=1.0).contains(&m.f1));
            if m.precision + m.recall > 0.0 {
                let h = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
                prop_assert!((m.f1 - h).abs() < 1e-12);
            } else {
                prop_assert_eq!(m.f1, 0.0);
            }
        }
    }
}
