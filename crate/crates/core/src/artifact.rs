//! The JSON model artifact shared by the CLI and the service.
//!
//! ```json
//! {"version": "1", "method": "cluster", "cluster": {...}, "provenance": {...}}
//! ```
//!
//! Artifacts contain no timestamps, so training twice with the same inputs
//! and seed produces byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster_semantifier::ClusterSemantifier;
use crate::corpus::{Bioassay, Corpus};
use crate::error::SemantifyError;
use crate::evaluation::{FittedMethod, MethodConfig};
use crate::label_semantifier::LabelSemantifier;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub corpus_fingerprint: String,
    pub n_train: usize,
    pub config: MethodConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cluster,
    Labeler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterSemantifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeler: Option<LabelSemantifier>,
    pub provenance: Provenance,
}

impl ModelArtifact {
    /// Fits the configured method on every assay of `corpus`.
    pub fn train(corpus: &Corpus, config: &MethodConfig) -> Result<Self, SemantifyError> {
        let model = FittedMethod::fit(corpus.assays(), config)?;
        Ok(Self::from_fitted(model, corpus.assays(), corpus.fingerprint(), config))
    }

    pub fn from_fitted(model: FittedMethod, train: &[Bioassay], corpus_fingerprint: String, config: &MethodConfig) -> Self {
        let seed = match config {
            MethodConfig::Cluster(c) => c.kmeans.seed,
            MethodConfig::Labeler(c) => c.seed,
        };
        let provenance = Provenance {
            seed,
            corpus_fingerprint,
            n_train: train.len(),
            config: *config,
        };
        let (method, cluster, labeler) = match model {
            FittedMethod::Cluster(m) => (Method::Cluster, Some(m), None),
            FittedMethod::Labeler(m) => (Method::Labeler, None, Some(m)),
        };
        ModelArtifact {
            version: FORMAT_VERSION.into(),
            method,
            cluster,
            labeler,
            provenance,
        }
    }

    pub fn into_fitted(self) -> Result<FittedMethod, SemantifyError> {
        match (self.method, self.cluster, self.labeler) {
            (Method::Cluster, Some(m), None) => Ok(FittedMethod::Cluster(m)),
            (Method::Labeler, Some(_), _) | (Method::Cluster, _, Some(_)) => {
                Err(SemantifyError::Artifact("artifact carries blocks for both methods".into()))
            }
            (Method::Labeler, None, Some(m)) => {
                m.validate()?;
                Ok(FittedMethod::Labeler(m))
            }
            (method, _, _) => Err(SemantifyError::Artifact(format!("artifact lacks the {method:?} block"))),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SemantifyError> {
        let artifact: ModelArtifact = serde_json::from_slice(bytes)?;
        if artifact.version != FORMAT_VERSION {
            return Err(SemantifyError::Artifact(format!("unsupported artifact version {:?}", artifact.version)));
        }
        artifact.clone().into_fitted()?;
        Ok(artifact)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("artifact serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SemantifyError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| SemantifyError::Artifact(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    /// Writes to a sibling temporary file, syncs, then renames into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SemantifyError> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_json())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}
