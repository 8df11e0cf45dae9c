use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid corpus: {0}")]
    Validation(String),
    #[error("corpus is empty")]
    Empty,
    #[error("infeasible fold split: {0}")]
    InfeasibleSplit(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e.to_string())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VectorizerError {
    #[error("cannot fit TF-IDF on zero documents")]
    NoDocuments,
    #[error("every document tokenized to nothing; vocabulary would be empty")]
    EmptyVocabulary,
}

#[derive(Debug, Error, PartialEq)]
pub enum KMeansError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the number of points ({n})")]
    TooManyClusters { k: usize, n: usize },
    #[error("vector dimension {found} does not match expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("elbow selection needs at least 3 curve points, got {0}")]
    ShortCurve(usize),
    #[error("k grid must be strictly ascending")]
    UnsortedGrid,
}

#[derive(Debug, Error)]
pub enum SemantifyError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Vectorizer(#[from] VectorizerError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("cannot sample {requested} negatives for assay {assay:?}: only {available} available")]
    InfeasibleNegatives {
        assay: String,
        requested: usize,
        available: usize,
    },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("statement universe is empty")]
    EmptyUniverse,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("artifact error: {0}")]
    Artifact(String),
}

impl From<serde_json::Error> for SemantifyError {
    fn from(e: serde_json::Error) -> Self {
        SemantifyError::Artifact(e.to_string())
    }
}

impl From<std::io::Error> for SemantifyError {
    fn from(e: std::io::Error) -> Self {
        SemantifyError::Artifact(e.to_string())
    }
}
