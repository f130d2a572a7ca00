use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::pipeline::{mean_std, ExperimentResult, Method};

pub const HEADER: [&str; 11] = [
    "run_id",
    "dataset",
    "method",
    "strategy",
    "seed",
    "depth",
    "labels_per_class",
    "epochs_used",
    "val_accuracy",
    "test_accuracy",
    "wall_ms",
];

/// One line of the results table. Accuracies are kept at the four decimals
/// the file stores, so a written table reads back identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub run_id: String,
    pub dataset: String,
    pub method: String,
    /// Exchange strategy, or `none` for runs without exchange.
    pub strategy: String,
    pub seed: u64,
    /// Number of GCN layers.
    pub depth: usize,
    /// `None` for the bundle's own split.
    pub labels_per_class: Option<usize>,
    pub epochs_used: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_ms: u64,
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

impl ResultsRow {
    /// One row per seed of `result`.
    pub fn from_result(
        dataset: &str,
        result: &ExperimentResult,
        depth: usize,
        labels_per_class: Option<usize>,
    ) -> Vec<ResultsRow> {
        let method = result.method.name();
        let strategy = match (result.method, result.strategy) {
            (Method::Ake, Some(s)) => s.name(),
            _ => "none",
        };
        let lpc = labels_per_class.map_or("public".to_string(), |l| l.to_string());
        result
            .runs
            .iter()
            .map(|r| ResultsRow {
                run_id: format!("{dataset}/{method}/{strategy}/d{depth}/{lpc}/s{}", r.seed),
                dataset: dataset.to_string(),
                method: method.to_string(),
                strategy: strategy.to_string(),
                seed: r.seed,
                depth,
                labels_per_class,
                epochs_used: r.epochs_used,
                val_accuracy: round4(r.val_accuracy),
                test_accuracy: round4(r.test_accuracy),
                wall_ms: r.wall_ms,
            })
            .collect()
    }

    fn group(&self) -> String {
        let lpc = self.labels_per_class.map_or("public".into(), |l| l.to_string());
        format!(
            "{} strategy={} depth={} labels_per_class={lpc}",
            self.method, self.strategy, self.depth
        )
    }
}

/// `mean ± std` of test accuracy per (method, strategy, depth, labels) group,
/// in first-appearance order.
pub fn summary_lines(rows: &[ResultsRow]) -> Vec<String> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = r.group();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r.test_accuracy);
    }
    order
        .into_iter()
        .map(|key| {
            let acc = &groups[&key];
            let (mean, std) = mean_std(acc);
            format!("# {key}: test_accuracy {mean:.4} ± {std:.4} (n={})", acc.len())
        })
        .collect()
}

pub fn write_results(rows: &[ResultsRow], path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    if rows.is_empty() {
        return Err(IoError::Invalid("no result rows to write".into()));
    }
    let io = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::create(path).map_err(io)?;
    {
        let mut w = csv::Writer::from_writer(&mut file);
        w.write_record(HEADER).map_err(|e| IoError::Csv(e.to_string()))?;
        for r in rows {
            w.write_record([
                r.run_id.clone(),
                r.dataset.clone(),
                r.method.clone(),
                r.strategy.clone(),
                r.seed.to_string(),
                r.depth.to_string(),
                r.labels_per_class.map_or(String::new(), |l| l.to_string()),
                r.epochs_used.to_string(),
                format!("{:.4}", r.val_accuracy),
                format!("{:.4}", r.test_accuracy),
                r.wall_ms.to_string(),
            ])
            .map_err(|e| IoError::Csv(e.to_string()))?;
        }
        w.flush().map_err(io)?;
    }
    for line in summary_lines(rows) {
        writeln!(file, "{line}").map_err(io)?;
    }
    Ok(())
}

/// Parses a table written by [`write_results`], skipping `#` lines.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultsRow>, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let first = BufReader::new(&file).lines().next().transpose().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if first.as_deref() != Some(HEADER.join(",").as_str()) {
        return Err(IoError::Invalid(format!("{} does not start with the results header", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| IoError::Csv(e.to_string()))?;
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| IoError::Csv(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |k: usize| rec.get(k).unwrap_or("");
            let num = |k: usize| -> Result<u64, IoError> {
                field(k).parse().map_err(|_| IoError::Parse {
                    file: path.display().to_string(),
                    line,
                    message: format!("{} '{}' is not an integer", HEADER[k], field(k)),
                })
            };
            let real = |k: usize| -> Result<f64, IoError> {
                field(k).parse().map_err(|_| IoError::Parse {
                    file: path.display().to_string(),
                    line,
                    message: format!("{} '{}' is not a number", HEADER[k], field(k)),
                })
            };
            Ok(ResultsRow {
                run_id: field(0).into(),
                dataset: field(1).into(),
                method: field(2).into(),
                strategy: field(3).into(),
                seed: num(4)?,
                depth: num(5)? as usize,
                labels_per_class: if field(6).is_empty() { None } else { Some(num(6)? as usize) },
                epochs_used: num(7)? as usize,
                val_accuracy: real(8)?,
                test_accuracy: real(9)?,
                wall_ms: num(10)?,
            })
        })
        .collect()
}
