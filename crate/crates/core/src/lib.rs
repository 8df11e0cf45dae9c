//! Automatic semantification of bioassay descriptions with sets of
//! predicate/value statements.
//!
//! Two methods are provided:
//!
//! - [`cluster_semantifier`]: TF-IDF + K-means over training assays; a new
//!   text is annotated with the statements that occur in at least
//!   `threshold` members of its nearest cluster.
//! - [`label_semantifier`]: a binary classifier over (assay, statement)
//!   pairs that scores every statement of the training universe.
//!
//! [`evaluation`] provides set-based precision/recall/F1, three-fold cross
//! validation and latency measurement for both.

pub mod artifact;
pub mod cluster_semantifier;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod kmeans;
pub mod label_semantifier;
pub mod synthetic;
pub mod vectorizer;

pub use corpus::{Bioassay, Corpus, Statement};
pub use error::{CorpusError, KMeansError, SemantifyError, VectorizerError};

/// Anything that turns assay text into a statement set.
pub trait Semantifier {
    fn semantify(&self, text: &str) -> Vec<Statement>;

    /// The prediction plus the number of pairwise classifier evaluations it
    /// took, for methods that score statements one by one.
    fn semantify_counted(&self, text: &str) -> (Vec<Statement>, Option<usize>) {
        (self.semantify(text), None)
    }
}
