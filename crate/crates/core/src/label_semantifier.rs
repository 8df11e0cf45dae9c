//! Per-statement binary labeling.
//!
//! Every (assay text, statement) pair is a binary instance: true when the
//! statement is in the assay's gold set. Training uses all gold statements
//! of each assay plus `rf_count` randomly drawn false statements from the
//! rest of the statement universe. Prediction scores the assay against every
//! statement in the universe, so its cost grows linearly with the universe.
//!
//! The classifier is pluggable through [`PairClassifier`]; the bundled
//! [`LogisticModel`] is a linear log-odds model over the concatenated TF-IDF
//! blocks of the assay text and the statement text.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Bioassay, Statement};
use crate::error::SemantifyError;
use crate::vectorizer::{SparseVector, TfidfModel};
use crate::Semantifier;

pub const DEFAULT_RF_COUNT: usize = 170;

/// The sweep range for the number of random false statements per assay.
pub fn rf_grid() -> Vec<usize> {
    (100..=200).step_by(10).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelerConfig {
    pub rf_count: usize,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub threshold: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig {
            rf_count: DEFAULT_RF_COUNT,
            seed: 42,
            epochs: 200,
            lr: 0.5,
            threshold: 0.5,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<(), SemantifyError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(SemantifyError::Config(format!("decision threshold {} outside (0, 1)", self.threshold)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(SemantifyError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub assay_id: String,
    pub statement_key: String,
    pub label: bool,
}

/// All gold statements of `assay` as positives followed by `rf_count`
/// distinct non-gold statements drawn uniformly from `universe`.
pub fn build_instances(
    assay: &Bioassay,
    universe: &[Statement],
    rf_count: usize,
    seed: u64,
) -> Result<Vec<LabeledInstance>, SemantifyError> {
    let gold = assay.keys();
    let candidates: Vec<String> = universe.iter().map(Statement::key).filter(|k| !gold.contains(k)).collect();
    if rf_count > candidates.len() {
        return Err(SemantifyError::InfeasibleNegatives {
            assay: assay.id.clone(),
            requested: rf_count,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = assay.statements.iter().map(|s| LabeledInstance {
        assay_id: assay.id.clone(),
        statement_key: s.key(),
        label: true,
    });
    let negatives = index::sample(&mut rng, candidates.len(), rf_count).into_iter().map(|i| LabeledInstance {
        assay_id: assay.id.clone(),
        statement_key: candidates[i].clone(),
        label: false,
    });
    Ok(positives.chain(negatives).collect())
}

/// `[tfidf(assay text) | tfidf(predicate + " " + value)]`, dimension `2 |V|`.
pub fn featurize_pair(tfidf: &TfidfModel, assay_text: &str, statement: &Statement) -> SparseVector {
    tfidf.transform(assay_text).concat(&tfidf.transform(&statement.text()))
}

/// A binary classifier over paired feature vectors.
pub trait PairClassifier {
    /// Probability that the pair is a true annotation.
    fn probability(&self, features: &SparseVector) -> f64;
}

/// Linear log-odds model: `p = sigmoid(w . x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        LogisticModel {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &SparseVector) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }

    /// Mean of `softplus(z) - y z` over the instances, with its analytic
    /// gradient `mean((sigmoid(z) - y) x)`.
    pub fn loss_and_gradient(&self, xs: &[SparseVector], ys: &[bool]) -> LossGradient {
        let n = xs.len().max(1) as f64;
        let mut grad = vec![0.0; self.dim()];
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z = self.logit(x);
            let y = if y { 1.0 } else { 0.0 };
            loss += softplus(z) - y * z;
            let r = sigmoid(z) - y;
            grad_b += r;
            for &(i, v) in x.entries() {
                grad[i] += r * v;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        LossGradient {
            loss: loss / n,
            weights: grad,
            bias: grad_b / n,
        }
    }

    /// Full-batch gradient descent from zero weights. Returns the model and
    /// the loss measured at the start of every epoch.
    pub fn train(
        dim: usize,
        xs: &[SparseVector],
        ys: &[bool],
        epochs: usize,
        lr: f64,
    ) -> Result<(LogisticModel, Vec<f64>), SemantifyError> {
        let mut model = LogisticModel::zeros(dim);
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let g = model.loss_and_gradient(xs, ys);
            if !g.loss.is_finite() {
                return Err(SemantifyError::NonFiniteLoss { epoch });
            }
            history.push(g.loss);
            for (w, d) in model.weights.iter_mut().zip(&g.weights) {
                *w -= lr * d;
            }
            model.bias -= lr * g.bias;
            if model.weights.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
                return Err(SemantifyError::NonFiniteLoss { epoch });
            }
        }
        Ok((model, history))
    }
}

impl PairClassifier for LogisticModel {
    fn probability(&self, features: &SparseVector) -> f64 {
        sigmoid(self.logit(features))
    }
}

/// Every statement of the universe whose probability reaches the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPrediction {
    pub statements: Vec<(Statement, f64)>,
    /// Number of classifier calls made; equals the universe size.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSemantifier<C = LogisticModel> {
    tfidf: TfidfModel,
    classifier: C,
    statement_universe: Vec<Statement>,
    config: LabelerConfig,
}

/// Training diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub instances: usize,
    pub positives: usize,
    pub loss_history: Vec<f64>,
}

impl LabelSemantifier<LogisticModel> {
    /// Trains on `train` with the universe formed by the training statements.
    pub fn train(train: &[Bioassay], config: &LabelerConfig) -> Result<Self, SemantifyError> {
        Self::train_with_universe(train, &[], config).map(|(m, _)| m)
    }

    /// Like [`train`](Self::train), with `extra` statements appended to the
    /// universe (duplicates ignored).
    pub fn train_with_universe(
        train: &[Bioassay],
        extra: &[Statement],
        config: &LabelerConfig,
    ) -> Result<(Self, TrainReport), SemantifyError> {
        config.validate()?;
        if train.is_empty() {
            return Err(SemantifyError::EmptyTrainingSet);
        }
        let mut seen = BTreeSet::new();
        let universe: Vec<Statement> = train
            .iter()
            .flat_map(|a| a.statements.iter())
            .chain(extra)
            .filter(|s| seen.insert(s.key()))
            .cloned()
            .collect();
        if universe.is_empty() {
            return Err(SemantifyError::EmptyUniverse);
        }

        let docs: Vec<String> = train
            .iter()
            .map(|a| a.text.clone())
            .chain(universe.iter().map(Statement::text))
            .collect();
        let tfidf = TfidfModel::fit(&docs)?;
        let by_key: std::collections::BTreeMap<String, &Statement> = universe.iter().map(|s| (s.key(), s)).collect();

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, assay) in train.iter().enumerate() {
            let instances = build_instances(assay, &universe, config.rf_count, instance_seed(config.seed, i))?;
            let assay_vec = tfidf.transform(&assay.text);
            for inst in instances {
                let stmt = by_key[&inst.statement_key];
                xs.push(assay_vec.concat(&tfidf.transform(&stmt.text())));
                ys.push(inst.label);
            }
        }
        let (classifier, loss_history) = LogisticModel::train(2 * tfidf.dim(), &xs, &ys, config.epochs, config.lr)?;
        let report = TrainReport {
            instances: xs.len(),
            positives: ys.iter().filter(|&&y| y).count(),
            loss_history,
        };
        Ok((
            LabelSemantifier {
                tfidf,
                classifier,
                statement_universe: universe,
                config: *config,
            },
            report,
        ))
    }
}

fn instance_seed(seed: u64, assay_index: usize) -> u64 {
    seed ^ (assay_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl<C: PairClassifier> LabelSemantifier<C> {
    /// Assembles a semantifier around an externally trained classifier.
    pub fn from_parts(
        tfidf: TfidfModel,
        classifier: C,
        statement_universe: Vec<Statement>,
        config: LabelerConfig,
    ) -> Result<Self, SemantifyError> {
        let model = LabelSemantifier {
            tfidf,
            classifier,
            statement_universe,
            config,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), SemantifyError> {
        self.config.validate()?;
        if self.statement_universe.is_empty() {
            return Err(SemantifyError::EmptyUniverse);
        }
        let keys: BTreeSet<String> = self.statement_universe.iter().map(Statement::key).collect();
        if keys.len() != self.statement_universe.len() {
            return Err(SemantifyError::Artifact("statement universe has duplicate keys".into()));
        }
        Ok(())
    }

    pub fn tfidf(&self) -> &TfidfModel {
        &self.tfidf
    }

    pub fn classifier(&self) -> &C {
        &self.classifier
    }

    pub fn statement_universe(&self) -> &[Statement] {
        &self.statement_universe
    }

    pub fn config(&self) -> &LabelerConfig {
        &self.config
    }

    /// Scores every universe statement against `text` and keeps those with
    /// probability >= `threshold`.
    pub fn predict_with_threshold(&self, text: &str, threshold: f64) -> LabelPrediction {
        let assay_vec = self.tfidf.transform(text);
        let mut evaluations = 0;
        let mut statements = Vec::new();
        for stmt in &self.statement_universe {
            let features = assay_vec.concat(&self.tfidf.transform(&stmt.text()));
            let p = self.classifier.probability(&features);
            evaluations += 1;
            if p >= threshold {
                statements.push((stmt.clone(), p));
            }
        }
        LabelPrediction { statements, evaluations }
    }

    pub fn predict_detailed(&self, text: &str) -> LabelPrediction {
        self.predict_with_threshold(text, self.config.threshold)
    }

    pub fn predict_set(&self, text: &str) -> Vec<Statement> {
        self.predict_detailed(text).statements.into_iter().map(|(s, _)| s).collect()
    }
}

impl<C: PairClassifier> Semantifier for LabelSemantifier<C> {
    fn semantify(&self, text: &str) -> Vec<Statement> {
        self.predict_set(text)
    }

    fn semantify_counted(&self, text: &str) -> (Vec<Statement>, Option<usize>) {
        let p = self.predict_detailed(text);
        (p.statements.into_iter().map(|(s, _)| s).collect(), Some(p.evaluations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(p: &str, v: &str) -> Statement {
        Statement::new(p, v, true)
    }

    fn toy() -> (Bioassay, Vec<Statement>) {
        let gold = vec![st("has organism", "mouse"), st("has detection method", "luminescence")];
        let extra = vec![st("has solvent", "ethanol"), st("has readout", "absorbance")];
        (Bioassay::new("toy", "luminescence mouse kinase screen", gold), extra)
    }

    #[test]
    fn instances_positives_then_negatives() {
        let assay = Bioassay::new("a", "t", (0..37).map(|i| st("p", &format!("g{i}"))).collect());
        let mut universe = assay.statements.clone();
        universe.extend((0..300).map(|i| st("q", &format!("n{i}"))));
        let inst = build_instances(&assay, &universe, 170, 1).unwrap();
        assert_eq!(inst.len(), 207);
        assert_eq!(inst.iter().filter(|i| i.label).count(), 37);
        assert!(inst[..37].iter().all(|i| i.label));
        let negs: BTreeSet<&String> = inst[37..].iter().map(|i| &i.statement_key).collect();
        assert_eq!(negs.len(), 170);
        assert!(negs.iter().all(|k| k.starts_with("q -> ")));
    }

    #[test]
    fn instances_edge_cases() {
        let (assay, extra) = toy();
        let mut universe = assay.statements.clone();
        assert_eq!(build_instances(&assay, &universe, 0, 0).unwrap().len(), 2);
        assert!(matches!(
            build_instances(&assay, &universe, 1, 0),
            Err(SemantifyError::InfeasibleNegatives { available: 0, .. })
        ));
        universe.extend(extra);
        assert_eq!(build_instances(&assay, &universe, 2, 3).unwrap(), build_instances(&assay, &universe, 2, 3).unwrap());
    }

    #[test]
    fn pair_features() {
        let tfidf = TfidfModel::fit(&["bioassay in dmso", "has participant"]).unwrap();
        let stmt = st("has participant", "DMSO");
        let x = featurize_pair(&tfidf, "qqq zzz", &stmt);
        assert_eq!(x.dim(), 2 * tfidf.dim());
        let block = tfidf.transform("has participant dmso");
        let d = tfidf.dim();
        let second: Vec<(usize, f64)> = x.entries().iter().map(|&(i, w)| (i - d, w)).collect();
        assert_eq!(second, block.entries());
        let both_oov = featurize_pair(&tfidf, "qqq", &st("zz", "yy"));
        assert!(both_oov.is_zero());
        assert_eq!(both_oov.dim(), 2 * d);
    }

    #[test]
    fn zero_weights_return_everything() {
        let (assay, extra) = toy();
        let config = LabelerConfig {
            epochs: 0,
            ..LabelerConfig::default()
        };
        let config = LabelerConfig { rf_count: 2, ..config };
        let (m, _) = LabelSemantifier::train_with_universe(std::slice::from_ref(&assay), &extra, &config).unwrap();
        let p = m.predict_detailed("anything");
        assert_eq!(p.evaluations, 4);
        assert_eq!(p.statements.len(), 4);
        assert!(p.statements.iter().all(|(_, prob)| *prob == 0.5));
    }

    #[test]
    fn toy_loss_decreases_and_recovers_gold() {
        let (assay, extra) = toy();
        let config = LabelerConfig {
            rf_count: 2,
            seed: 7,
            epochs: 300,
            lr: 0.1,
            threshold: 0.5,
        };
        let (m, report) = LabelSemantifier::train_with_universe(std::slice::from_ref(&assay), &extra, &config).unwrap();
        assert_eq!(report.instances, 4);
        for w in report.loss_history[..11].windows(2) {
            assert!(w[1] < w[0]);
        }
        let mut got = m.predict_set(&assay.text);
        got.sort();
        let mut gold = assay.statements.clone();
        gold.sort();
        assert_eq!(got, gold);
    }

    #[test]
    fn deterministic_training() {
        let (assay, extra) = toy();
        let config = LabelerConfig { rf_count: 1, epochs: 20, ..Default::default() };
        let a = LabelSemantifier::train_with_universe(std::slice::from_ref(&assay), &extra, &config).unwrap().0;
        let b = LabelSemantifier::train_with_universe(&[assay], &extra, &config).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn higher_threshold_subset() {
        let (assay, extra) = toy();
        let config = LabelerConfig { rf_count: 2, epochs: 30, lr: 0.3, ..Default::default() };
        let (m, _) = LabelSemantifier::train_with_universe(std::slice::from_ref(&assay), &extra, &config).unwrap();
        let lo: BTreeSet<Statement> = m.predict_with_threshold(&assay.text, 0.3).statements.into_iter().map(|s| s.0).collect();
        let hi: BTreeSet<Statement> = m.predict_with_threshold(&assay.text, 0.6).statements.into_iter().map(|s| s.0).collect();
        assert!(hi.is_subset(&lo));
    }

    #[test]
    fn bad_config_rejected() {
        let (assay, _) = toy();
        for config in [
            LabelerConfig { threshold: 1.0, ..Default::default() },
            LabelerConfig { lr: 0.0, ..Default::default() },
        ] {
            assert!(matches!(LabelSemantifier::train(std::slice::from_ref(&assay), &config), Err(SemantifyError::Config(_))));
        }
    }

    #[test]
    fn divergent_training_reports_epoch() {
        let xs = vec![SparseVector::from_dense(&[1e200]), SparseVector::from_dense(&[-1e200])];
        let err = LogisticModel::train(1, &xs, &[true, false], 10, 1e200).unwrap_err();
        assert!(matches!(err, SemantifyError::NonFiniteLoss { .. }));
    }

    #[test]
    fn rf_grid_range() {
        assert_eq!(rf_grid(), vec![100, 110, 120, 130, 140, 150, 160, 170, 180, 190, 200]);
    }
}
