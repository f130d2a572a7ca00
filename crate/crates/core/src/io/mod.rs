//! Reading dataset bundles and configs; writing result tables and traces.

mod bundle;
mod results;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::exchange::ExchangeEvent;
use crate::graph::GraphError;
use crate::pipeline::ExperimentConfig;

pub use bundle::{load_bundle, read_meta, save_bundle, BundleMeta, EDGES, FEATURES, LABELS, META, SPLIT};
pub use results::{read_results, summary_lines, write_results, ResultsRow, HEADER};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Json { file: String, message: String },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("{file}: meta.json declares {expected} {what}, found {actual}")]
    CountMismatch {
        file: String,
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{file}{}: {source}", line.map_or(String::new(), |l| format!(":{l}")))]
    Graph {
        file: String,
        line: Option<usize>,
        #[source]
        source: GraphError,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("{0}")]
    Invalid(String),
}

/// Parses a JSON experiment config; missing fields take their defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| IoError::Json {
        file: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Serialize)]
struct TraceLine<'a> {
    run_id: &'a str,
    seed: u64,
    #[serde(flatten)]
    event: &'a ExchangeEvent,
}

/// Appends exchange events as JSON lines tagged with their run.
pub fn write_trace<'a>(
    path: impl AsRef<Path>,
    runs: impl IntoIterator<Item = (&'a str, u64, &'a [ExchangeEvent])>,
) -> Result<(), IoError> {
    let path = path.as_ref();
    let io = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for (run_id, seed, events) in runs {
        for event in events {
            serde_json::to_writer(&mut w, &TraceLine { run_id, seed, event }).map_err(|e| IoError::Invalid(e.to_string()))?;
            w.write_all(b"\n").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
