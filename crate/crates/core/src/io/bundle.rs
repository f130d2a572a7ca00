//! Directory bundles: `meta.json`, `edges.tsv`, `features.tsv` (sparse COO),
//! `labels.tsv`, and `split.json`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::graph::{build_graph, Graph, GraphError, Splits};
use crate::linalg::Matrix;

pub const META: &str = "meta.json";
pub const EDGES: &str = "edges.tsv";
pub const FEATURES: &str = "features.tsv";
pub const LABELS: &str = "labels.tsv";
pub const SPLIT: &str = "split.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub directed: bool,
}

fn read(dir: &Path, file: &str) -> Result<String, IoError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(IoError::MissingFile(path));
    }
    fs::read_to_string(&path).map_err(|source| IoError::Io { path, source })
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// Non-blank lines as `(1-based line number, tab-separated fields)`.
fn records<'a>(file: &'a str, text: &'a str, arity: usize) -> impl Iterator<Item = Result<(usize, Vec<&'a str>), IoError>> + 'a {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(move |(i, l)| {
            let fields: Vec<&str> = l.trim_end_matches('\r').split('\t').collect();
            if fields.len() != arity {
                return Err(parse_err(file, i + 1, format!("expected {arity} tab-separated fields, found {}", fields.len())));
            }
            Ok((i + 1, fields))
        })
}

fn index(file: &str, line: usize, what: &str, field: &str, bound: usize) -> Result<usize, IoError> {
    let v: usize = field
        .trim()
        .parse()
        .map_err(|_| parse_err(file, line, format!("{what} '{field}' is not a nonnegative integer")))?;
    if v >= bound {
        return Err(parse_err(file, line, format!("{what} {v} out of range (bound {bound})")));
    }
    Ok(v)
}

pub fn read_meta(dir: impl AsRef<Path>) -> Result<BundleMeta, IoError> {
    let text = read(dir.as_ref(), META)?;
    let meta: BundleMeta = serde_json::from_str(&text).map_err(|e| IoError::Json {
        file: META.into(),
        message: e.to_string(),
    })?;
    if meta.directed {
        return Err(parse_err(META, 1, "directed bundles are not supported"));
    }
    Ok(meta)
}

/// Reads and strictly validates a bundle; any malformed line fails the whole
/// load with its file and line number.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Graph, IoError> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    let n = meta.num_nodes;

    let text = read(dir, EDGES)?;
    let mut edges = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for rec in records(EDGES, &text, 2) {
        let (line, f) = rec?;
        let u = index(EDGES, line, "node", f[0], n)?;
        let v = index(EDGES, line, "node", f[1], n)?;
        if u == v {
            return Err(IoError::Graph {
                file: EDGES.into(),
                line: Some(line),
                source: GraphError::SelfLoopEdge(u),
            });
        }
        if let Some(first) = seen.insert((u.min(v), u.max(v)), line) {
            return Err(parse_err(EDGES, line, format!("edge {u}-{v} already listed on line {first}")));
        }
        edges.push((u, v));
    }

    let text = read(dir, FEATURES)?;
    let mut features = Matrix::zeros(n, meta.num_features);
    let mut filled: HashMap<(usize, usize), usize> = HashMap::new();
    for rec in records(FEATURES, &text, 3) {
        let (line, f) = rec?;
        let i = index(FEATURES, line, "node", f[0], n)?;
        let j = index(FEATURES, line, "feature", f[1], meta.num_features)?;
        let v: f64 = f[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(FEATURES, line, format!("value '{}' is not a number", f[2])))?;
        if !v.is_finite() {
            return Err(parse_err(FEATURES, line, "value is not finite"));
        }
        if let Some(first) = filled.insert((i, j), line) {
            return Err(parse_err(FEATURES, line, format!("entry ({i}, {j}) already set on line {first}")));
        }
        features.set(i, j, v);
    }

    let text = read(dir, LABELS)?;
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut count = 0;
    for rec in records(LABELS, &text, 2) {
        let (line, f) = rec?;
        count += 1;
        if count > n {
            return Err(IoError::CountMismatch {
                file: LABELS.into(),
                what: "labels",
                expected: n,
                actual: count,
            });
        }
        let i = index(LABELS, line, "node", f[0], n)?;
        let y = index(LABELS, line, "label", f[1], meta.num_classes)?;
        if labels[i].replace(y).is_some() {
            return Err(parse_err(LABELS, line, format!("node {i} labeled twice")));
        }
    }
    if count != n {
        return Err(IoError::CountMismatch {
            file: LABELS.into(),
            what: "labels",
            expected: n,
            actual: count,
        });
    }
    let labels: Vec<usize> = labels.into_iter().map(|y| y.expect("every node labeled")).collect();

    let text = read(dir, SPLIT)?;
    let splits: Splits = serde_json::from_str(&text).map_err(|e| IoError::Json {
        file: SPLIT.into(),
        message: e.to_string(),
    })?;

    build_graph(n, meta.num_classes, &edges, features, labels, &splits).map_err(|source| IoError::Graph {
        file: SPLIT.into(),
        line: None,
        source,
    })
}

/// Writes `g` as a bundle; [`load_bundle`] reads it back exactly.
pub fn save_bundle(g: &Graph, name: &str, dir: impl AsRef<Path>) -> Result<(), IoError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| IoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let write = |file: &str, body: String| -> Result<(), IoError> {
        let path: PathBuf = dir.join(file);
        fs::write(&path, body).map_err(|source| IoError::Io { path, source })
    };
    let meta = BundleMeta {
        name: name.to_string(),
        num_nodes: g.num_nodes(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
        directed: false,
    };
    write(META, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")?;

    let mut body = String::new();
    for &(u, v) in g.edges() {
        writeln!(body, "{u}\t{v}").unwrap();
    }
    write(EDGES, body)?;

    let mut body = String::new();
    for i in 0..g.num_nodes() {
        for (j, &v) in g.features().row(i).iter().enumerate() {
            if v != 0.0 {
                writeln!(body, "{i}\t{j}\t{v}").unwrap();
            }
        }
    }
    write(FEATURES, body)?;

    let mut body = String::new();
    for (i, y) in g.labels().iter().enumerate() {
        writeln!(body, "{i}\t{y}").unwrap();
    }
    write(LABELS, body)?;

    write(SPLIT, serde_json::to_string(&g.splits()).expect("splits serialize") + "\n")
}
