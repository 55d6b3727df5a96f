//! Append-only JSON-lines annotation log.
//!
//! Every accepted submission is appended and flushed before it is
//! acknowledged. The latest record per (image, annotator) in log order is
//! authoritative; replaying the log on startup rebuilds the same view.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use oralscreen_core::aggregation::ImageAnnotation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("annotation log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("annotation log {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] oralscreen_core::Error),
    #[error("could not encode record: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Default)]
struct Inner {
    file: Option<File>,
    log: Vec<ImageAnnotation>,
    latest: BTreeMap<(String, String), usize>,
}

impl Inner {
    fn index(&mut self, ann: ImageAnnotation) {
        let key = (ann.image_id.clone(), ann.annotator_id.clone());
        self.latest.insert(key, self.log.len());
        self.log.push(ann);
    }
}

pub struct AnnotationStore {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl AnnotationStore {
    /// A store that keeps records in memory only.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner::default()),
        }
    }

    /// Opens (creating if needed) the log at `path` and replays it.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut inner = Inner::default();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io_err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let ann: ImageAnnotation =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                inner.index(ann);
            }
        }
        inner.file = Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_err)?,
        );
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(inner),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Validates, persists and indexes one record. Resubmissions for the
    /// same (image, annotator) supersede earlier ones.
    pub fn append(&self, ann: ImageAnnotation) -> Result<ImageAnnotation, StoreError> {
        ann.validate()?;
        let mut line = serde_json::to_vec(&ann)?;
        line.push(b'\n');
        let mut inner = self.inner.lock().expect("store lock poisoned");
        if let Some(file) = inner.file.as_mut() {
            let path = self.path.clone().unwrap_or_default();
            let io_err = |source| StoreError::Io { path, source };
            file.write_all(&line)
                .and_then(|_| file.flush())
                .and_then(|_| file.sync_data())
                .map_err(io_err)?;
        }
        inner.index(ann.clone());
        Ok(ann)
    }

    /// The authoritative record per (image, annotator), in log order.
    pub fn snapshot(&self) -> Vec<ImageAnnotation> {
        let inner = self.inner.lock().expect("store lock poisoned");
        let mut idx: Vec<usize> = inner.latest.values().copied().collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| inner.log[i].clone()).collect()
    }

    /// Number of records in the log, superseded ones included.
    pub fn log_len(&self) -> usize {
        self.inner.lock().expect("store lock poisoned").log.len()
    }
}
