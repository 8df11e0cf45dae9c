//! Curation records persisted as an append-only JSONL log.
//!
//! Every mutation appends the full updated record and fsyncs before the
//! in-memory view changes; on startup the log is replayed and the last line
//! for each uid wins. A torn final line (crash mid-write) is skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use semantify_core::corpus::{Bioassay, Statement};

pub const LOG_FILE: &str = "curations.jsonl";

/// Stable id of a statement: first 16 hex digits of SHA-256 of its key.
pub fn statement_id(statement: &Statement) -> String {
    let digest = Sha256::digest(statement.key().as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatementSource {
    Cluster { cluster_id: usize },
    Labeler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedStatement {
    pub statement_id: String,
    pub predicate: String,
    pub value: String,
    pub ontologized: bool,
    pub source: StatementSource,
    /// Cluster members carrying the statement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Classifier probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl PredictedStatement {
    pub fn statement(&self) -> Statement {
        Statement::new(&self.predicate, &self.value, self.ontologized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationRecord {
    pub assay_uid: String,
    pub text: String,
    pub predicted: Vec<PredictedStatement>,
    pub deleted_ids: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl CurationRecord {
    pub fn remaining(&self) -> usize {
        self.predicted.iter().filter(|p| !self.deleted_ids.contains(&p.statement_id)).count()
    }

    /// The curated record in corpus interchange form.
    pub fn to_bioassay(&self) -> Bioassay {
        Bioassay::new(
            self.assay_uid.clone(),
            self.text.clone(),
            self.predicted
                .iter()
                .filter(|p| !self.deleted_ids.contains(&p.statement_id))
                .map(PredictedStatement::statement)
                .collect(),
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown assay {0}")]
    UnknownAssay(String),
    #[error("unknown statement {sid} in assay {uid}")]
    UnknownStatement { uid: String, sid: String },
}

pub enum DeleteOutcome {
    Deleted(usize),
    AlreadyDeleted(usize),
}

impl DeleteOutcome {
    pub fn remaining(&self) -> usize {
        match self {
            DeleteOutcome::Deleted(n) | DeleteOutcome::AlreadyDeleted(n) => *n,
        }
    }
}

pub struct CurationStore {
    path: PathBuf,
    writer: Mutex<File>,
    records: RwLock<BTreeMap<String, Arc<CurationRecord>>>,
}

impl CurationStore {
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = data_dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let mut records = BTreeMap::new();
        if path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&path)?).lines().collect::<Result<_, _>>()?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CurationRecord>(line) {
                    Ok(r) => {
                        records.insert(r.assay_uid.clone(), Arc::new(r));
                    }
                    Err(e) if i + 1 == last => log::warn!("{}: skipping torn final line: {e}", path.display()),
                    Err(e) => {
                        return Err(StoreError::Io(std::io::Error::new(
                            std::io::ErrorKind::InvalidData,
                            format!("{} line {}: {e}", path.display(), i + 1),
                        )))
                    }
                }
            }
        }
        let writer = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(CurationStore {
            path,
            writer: Mutex::new(writer),
            records: RwLock::new(records),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append(file: &mut File, record: &CurationRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()?;
        Ok(())
    }

    pub fn create(&self, text: String, predicted: Vec<PredictedStatement>) -> Result<Arc<CurationRecord>, StoreError> {
        let now = Utc::now();
        let record = Arc::new(CurationRecord {
            assay_uid: uuid::Uuid::new_v4().to_string(),
            text,
            predicted,
            deleted_ids: BTreeSet::new(),
            created_at: now,
            updated_at: now,
        });
        let mut file = self.writer.lock().expect("store writer poisoned");
        Self::append(&mut file, &record)?;
        self.records
            .write()
            .expect("store map poisoned")
            .insert(record.assay_uid.clone(), record.clone());
        Ok(record)
    }

    pub fn get(&self, uid: &str) -> Option<Arc<CurationRecord>> {
        self.records.read().expect("store map poisoned").get(uid).cloned()
    }

    /// All records in uid order.
    pub fn snapshot(&self) -> Vec<Arc<CurationRecord>> {
        self.records.read().expect("store map poisoned").values().cloned().collect()
    }

    pub fn delete_statement(&self, uid: &str, sid: &str) -> Result<DeleteOutcome, StoreError> {
        let mut file = self.writer.lock().expect("store writer poisoned");
        let current = self.get(uid).ok_or_else(|| StoreError::UnknownAssay(uid.to_string()))?;
        if !current.predicted.iter().any(|p| p.statement_id == sid) {
            return Err(StoreError::UnknownStatement {
                uid: uid.to_string(),
                sid: sid.to_string(),
            });
        }
        if current.deleted_ids.contains(sid) {
            return Ok(DeleteOutcome::AlreadyDeleted(current.remaining()));
        }
        let mut next = (*current).clone();
        next.deleted_ids.insert(sid.to_string());
        next.updated_at = Utc::now().max(current.updated_at);
        Self::append(&mut file, &next)?;
        let remaining = next.remaining();
        self.records
            .write()
            .expect("store map poisoned")
            .insert(uid.to_string(), Arc::new(next));
        Ok(DeleteOutcome::Deleted(remaining))
    }
}
