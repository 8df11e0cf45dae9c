//! Background model training, at most one job at a time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use semantify_core::artifact::ModelArtifact;
use semantify_core::cluster_semantifier::ClusterConfig;
use semantify_core::corpus::load_corpus;
use semantify_core::evaluation::MethodConfig;
use semantify_core::kmeans::KMeansConfig;
use semantify_core::label_semantifier::LabelerConfig;

/// Flat training options as accepted over HTTP; unset fields take the
/// method defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    pub k: Option<usize>,
    pub threshold: Option<f64>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub restarts: Option<usize>,
    pub rf_count: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
}

impl TrainOptions {
    pub fn into_config(self, method: &str) -> Result<MethodConfig, String> {
        match method {
            "cluster" => {
                let d = KMeansConfig::default();
                let threshold = self.threshold.unwrap_or(1.0);
                if threshold < 1.0 || threshold.fract() != 0.0 {
                    return Err(format!("cluster threshold must be a positive integer, got {threshold}"));
                }
                if self.rf_count.is_some() || self.epochs.is_some() || self.lr.is_some() {
                    return Err("rf_count, epochs and lr apply to the labeler only".into());
                }
                let kmeans = KMeansConfig {
                    k: self.k.unwrap_or(d.k),
                    seed: self.seed.unwrap_or(d.seed),
                    max_iter: self.max_iter.unwrap_or(d.max_iter),
                    tol: self.tol.unwrap_or(d.tol),
                    restarts: self.restarts.unwrap_or(d.restarts),
                };
                if kmeans.k == 0 {
                    return Err("k must be at least 1".into());
                }
                if kmeans.restarts == 0 {
                    return Err("restarts must be at least 1".into());
                }
                if kmeans.tol.is_nan() || kmeans.tol < 0.0 {
                    return Err("tol must be non-negative".into());
                }
                Ok(MethodConfig::Cluster(ClusterConfig {
                    kmeans,
                    threshold: threshold as usize,
                }))
            }
            "labeler" => {
                if self.k.is_some() || self.max_iter.is_some() || self.tol.is_some() || self.restarts.is_some() {
                    return Err("k, max_iter, tol and restarts apply to the cluster method only".into());
                }
                let d = LabelerConfig::default();
                let config = LabelerConfig {
                    rf_count: self.rf_count.unwrap_or(d.rf_count),
                    seed: self.seed.unwrap_or(d.seed),
                    epochs: self.epochs.unwrap_or(d.epochs),
                    lr: self.lr.unwrap_or(d.lr),
                    threshold: self.threshold.unwrap_or(d.threshold),
                };
                config.validate().map_err(|e| e.to_string())?;
                Ok(MethodConfig::Labeler(config))
            }
            other => Err(format!("unknown method {other:?}; expected \"cluster\" or \"labeler\"")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub status: JobState,
    pub method: String,
    pub corpus_path: PathBuf,
    pub artifact_path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub started_at: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Default)]
pub struct JobTable {
    inner: Mutex<BTreeMap<String, JobStatus>>,
}

impl JobTable {
    pub fn get(&self, id: &str) -> Option<JobStatus> {
        self.inner.lock().expect("job table poisoned").get(id).cloned()
    }

    /// Registers a new running job unless one is already running.
    pub fn try_start(&self, method: &str, corpus_path: &Path, models_dir: &Path) -> Option<JobStatus> {
        let mut jobs = self.inner.lock().expect("job table poisoned");
        if jobs.values().any(|j| j.status == JobState::Running) {
            return None;
        }
        let job_id = uuid::Uuid::new_v4().to_string();
        let status = JobStatus {
            artifact_path: models_dir.join(format!("{job_id}.json")),
            job_id: job_id.clone(),
            status: JobState::Running,
            method: method.to_string(),
            corpus_path: corpus_path.to_path_buf(),
            error: None,
            started_at: Utc::now(),
            finished_at: None,
        };
        jobs.insert(job_id, status.clone());
        Some(status)
    }

    fn finish(&self, id: &str, result: Result<(), String>) {
        let mut jobs = self.inner.lock().expect("job table poisoned");
        if let Some(job) = jobs.get_mut(id) {
            job.finished_at = Some(Utc::now());
            match result {
                Ok(()) => job.status = JobState::Done,
                Err(e) => {
                    job.status = JobState::Failed;
                    job.error = Some(e);
                }
            }
        }
    }
}

/// Runs a training job on a blocking worker thread.
pub fn spawn_training(table: Arc<JobTable>, job: JobStatus, config: MethodConfig) {
    tokio::task::spawn_blocking(move || {
        let result = (|| -> Result<(), String> {
            let corpus = load_corpus(&job.corpus_path).map_err(|e| e.to_string())?;
            let artifact = ModelArtifact::train(&corpus, &config).map_err(|e| e.to_string())?;
            if let Some(dir) = job.artifact_path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            }
            artifact.save(&job.artifact_path).map_err(|e| e.to_string())
        })();
        if let Err(e) = &result {
            log::warn!("training job {} failed: {e}", job.job_id);
        }
        table.finish(&job.job_id, result);
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_validation() {
        let ok = TrainOptions { k: Some(5), ..Default::default() }.into_config("cluster").unwrap();
        assert!(matches!(ok, MethodConfig::Cluster(c) if c.kmeans.k == 5 && c.threshold == 1));
        assert!(TrainOptions { k: Some(0), ..Default::default() }.into_config("cluster").is_err());
        assert!(TrainOptions { threshold: Some(1.5), ..Default::default() }.into_config("cluster").is_err());
        assert!(TrainOptions { k: Some(3), ..Default::default() }.into_config("labeler").is_err());
        assert!(TrainOptions { threshold: Some(2.0), ..Default::default() }.into_config("labeler").is_err());
        assert!(TrainOptions::default().into_config("svm").is_err());
        let lab = TrainOptions { rf_count: Some(120), ..Default::default() }.into_config("labeler").unwrap();
        assert!(matches!(lab, MethodConfig::Labeler(c) if c.rf_count == 120));
    }

    #[test]
    fn single_running_job() {
        let table = JobTable::default();
        let dir = Path::new("/tmp");
        let first = table.try_start("cluster", dir, dir).unwrap();
        assert!(table.try_start("cluster", dir, dir).is_none());
        table.finish(&first.job_id, Ok(()));
        assert_eq!(table.get(&first.job_id).unwrap().status, JobState::Done);
        assert!(table.try_start("cluster", dir, dir).is_some());
    }
}
