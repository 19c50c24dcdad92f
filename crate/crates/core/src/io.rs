//! Line-delimited record files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| FormatError::parse(path, i + 1, e.to_string()))?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T, I>(path: &Path, items: I) -> Result<(), FormatError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    create_parent(path)?;
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| FormatError::parse(path, 0, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| FormatError::io(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

/// Reads a text file, mapping failures onto [`FormatError`].
pub fn read_to_string(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub fn write_string(path: &Path, contents: &str) -> Result<(), FormatError> {
    create_parent(path)?;
    std::fs::write(path, contents).map_err(|e| FormatError::io(path, e))
}

fn create_parent(path: &Path) -> Result<(), FormatError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e)),
        _ => Ok(()),
    }
}
