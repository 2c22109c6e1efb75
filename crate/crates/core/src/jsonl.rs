//! JSON-lines reading and atomic per-line appends.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Parses every non-blank line of `text`; errors carry the 1-based line number.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| JsonlError::Parse {
            path: origin.to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            path: shown.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), JsonlError> {
    let shown = path.display().to_string();
    let io_err = |source| JsonlError::Io {
        path: shown.clone(),
        source,
    };
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| io_err(e.into()))?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(io_err)
}

/// Append-only JSONL sink. Each `append` writes one complete line under a lock.
#[derive(Debug)]
pub struct JsonlAppender {
    path: String,
    file: Mutex<File>,
}

impl JsonlAppender {
    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let shown = path.display().to_string();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| JsonlError::Io {
                path: shown.clone(),
                source,
            })?;
        Ok(Self {
            path: shown,
            file: Mutex::new(file),
        })
    }

    /// Appends an already-serialized line (without trailing newline).
    pub fn append_raw(&self, line: &str) -> Result<(), JsonlError> {
        let mut record = String::with_capacity(line.len() + 1);
        record.push_str(line);
        record.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(record.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|source| JsonlError::Io {
                path: self.path.clone(),
                source,
            })
    }

    pub fn append<T: Serialize>(&self, item: &T) -> Result<(), JsonlError> {
        let line = serde_json::to_string(item).map_err(|e| JsonlError::Io {
            path: self.path.clone(),
            source: e.into(),
        })?;
        self.append_raw(&line)
    }
}
