//! JSON manifest plus TSV edge, feature and label files.
//!
//! Paths inside a manifest are resolved relative to the manifest's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LedaError, Result};
use crate::graph::{degree_features, DomainGraph, GraphCollection, TaskKind, DEGREE_FEATURE_DIM};
use crate::{Matrix, Sparse};

pub const MANIFEST_VERSION: u32 = 1;

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub task_kind: TaskKind,
    #[serde(default = "default_true")]
    pub symmetrize: bool,
    pub domains: Vec<ManifestDomain>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDomain {
    pub domain_id: String,
    pub edges_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    /// Node count for attribute-free graphs whose trailing nodes may be isolated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_nodes: Option<usize>,
    /// Class of the whole graph (graph-level collections only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_label: Option<usize>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LedaError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LedaError::data(path, e.to_string()))
    }
}

/// Reads and validates a dataset described by a manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<GraphCollection> {
    let manifest = DatasetManifest::read(manifest_path)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(LedaError::data(
            manifest_path,
            format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                manifest.version
            ),
        ));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    if manifest.task_kind == TaskKind::NodeLevel {
        let mut seen = BTreeSet::new();
        for d in &manifest.domains {
            if !seen.insert(d.domain_id.as_str()) {
                return Err(LedaError::data(
                    manifest_path,
                    format!("duplicate domain id '{}'", d.domain_id),
                ));
            }
        }
    }

    let mut graphs = Vec::with_capacity(manifest.domains.len());
    let mut graph_labels = Vec::new();
    for entry in &manifest.domains {
        graphs.push(load_domain(base, entry, manifest.symmetrize)?);
        if manifest.task_kind == TaskKind::GraphLevel {
            let label = entry.graph_label.ok_or_else(|| {
                LedaError::data(
                    manifest_path,
                    format!("graph-level entry '{}' lacks graph_label", entry.domain_id),
                )
            })?;
            graph_labels.push(label);
        }
    }
    let collection = match manifest.task_kind {
        TaskKind::NodeLevel => GraphCollection::node_level(graphs),
        TaskKind::GraphLevel => GraphCollection::graph_level(graphs, graph_labels),
    };
    collection.map_err(|e| LedaError::data(manifest_path, e.to_string()))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_domain(base: &Path, entry: &ManifestDomain, symmetrize: bool) -> Result<DomainGraph> {
    let edges_path = resolve(base, &entry.edges_path);
    let edges = read_edges(&edges_path)?;

    let features = entry
        .features_path
        .as_ref()
        .map(|p| read_features(&resolve(base, p)))
        .transpose()?;
    let labels_path = entry.labels_path.as_ref().map(|p| resolve(base, p));
    let labels = labels_path.as_deref().map(read_labels).transpose()?;

    let max_index = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let n = match (&features, &labels, entry.num_nodes) {
        (Some(f), _, _) => f.rows(),
        (None, _, Some(n)) => n,
        (None, Some(l), None) => l.len(),
        (None, None, None) => max_index,
    };
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
        return Err(LedaError::data(
            &edges_path,
            format!("edge ({a}, {b}) references a node beyond the {n} available"),
        ));
    }

    let adjacency = if symmetrize {
        Sparse::adjacency_from_edges(n, &edges)?
    } else {
        let triplets: Vec<_> = edges.iter().map(|&(a, b)| (a, b, 1.0)).collect();
        let a = Sparse::from_triplets(n, n, &triplets)?;
        if a.values().iter().any(|&v| v != 1.0) {
            return Err(LedaError::data(&edges_path, "duplicate edge lines"));
        }
        if !a.is_symmetric() {
            return Err(LedaError::data(
                &edges_path,
                "edges are not symmetric and symmetrize is false",
            ));
        }
        a
    };

    let (features, degree_featurized) = match features {
        Some(f) => (f, false),
        None => (degree_features(&adjacency, DEGREE_FEATURE_DIM)?, true),
    };

    let num_classes = match (&labels, entry.num_classes) {
        (Some(_), Some(k)) => Some(k),
        (Some(l), None) => Some(l.iter().max().map_or(0, |m| m + 1)),
        (None, k) => k,
    };
    if let (Some(l), Some(k), Some(path)) = (&labels, num_classes, &labels_path) {
        if l.len() != n {
            return Err(LedaError::data(
                path,
                format!("{} labels for {n} nodes", l.len()),
            ));
        }
        if let Some(bad) = l.iter().find(|&&x| x >= k) {
            return Err(LedaError::data(
                path,
                format!("label {bad} outside [0, {k})"),
            ));
        }
    }

    let mut graph = DomainGraph::new(entry.domain_id.clone(), features, adjacency, labels, num_classes)?;
    graph.degree_featurized = degree_featurized;
    Ok(graph)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| LedaError::io(path, e))?;
    content_lines(&text)
        .map(|(line_no, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    LedaError::data(path, format!("line {line_no}: bad node index '{s}'"))
                })
            };
            match fields.as_slice() {
                [a, b] => Ok((parse(a)?, parse(b)?)),
                _ => Err(LedaError::data(
                    path,
                    format!("line {line_no}: expected two tab-separated node indices"),
                )),
            }
        })
        .collect()
}

fn read_features(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| LedaError::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let row = line
            .split('\t')
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        LedaError::data(path, format!("line {}: bad value '{s}'", line_no + 1))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(LedaError::data(
                    path,
                    format!(
                        "ragged rows: line {} has {} values, expected {}",
                        line_no + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows).map_err(|e| LedaError::data(path, e.to_string()))
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| LedaError::io(path, e))?;
    content_lines(&text)
        .map(|(line_no, line)| {
            line.trim().parse::<usize>().map_err(|_| {
                LedaError::data(path, format!("line {line_no}: bad label '{line}'"))
            })
        })
        .collect()
}

/// Writes `collection` as a manifest plus per-graph files under `dir`; returns the manifest path.
///
/// Degree-featurized graphs are written without a features file so that loading recomputes
/// the same encoding.
pub fn save_dataset(collection: &GraphCollection, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| LedaError::io(dir, e))?;
    let mut entries = Vec::with_capacity(collection.graphs.len());
    for (i, g) in collection.graphs.iter().enumerate() {
        let stem = format!("{i:04}_{}", sanitize(&g.domain_id));
        let edges_name = PathBuf::from(format!("{stem}.edges.tsv"));
        write_file(&dir.join(&edges_name), &edges_text(&g.adjacency))?;

        let features_path = if g.degree_featurized && g.feature_dim() == DEGREE_FEATURE_DIM {
            None
        } else {
            let name = PathBuf::from(format!("{stem}.features.tsv"));
            write_file(&dir.join(&name), &features_text(&g.features))?;
            Some(name)
        };
        let labels_path = match &g.labels {
            Some(labels) => {
                let name = PathBuf::from(format!("{stem}.labels.tsv"));
                let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
                write_file(&dir.join(&name), &text)?;
                Some(name)
            }
            None => None,
        };
        entries.push(ManifestDomain {
            domain_id: g.domain_id.clone(),
            edges_path: edges_name,
            features_path,
            labels_path,
            num_classes: g.num_classes,
            num_nodes: Some(g.num_nodes()),
            graph_label: collection.graph_labels.as_ref().map(|l| l[i]),
        });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        task_kind: collection.task_kind,
        symmetrize: true,
        domains: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| LedaError::data(&path, e.to_string()))?;
    write_file(&path, &(text + "\n"))?;
    Ok(path)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LedaError::io(path, e))
}

fn edges_text(adjacency: &Sparse) -> String {
    let mut out = String::new();
    for r in 0..adjacency.rows() {
        for (c, _) in adjacency.row_entries(r) {
            if c >= r {
                out.push_str(&format!("{r}\t{c}\n"));
            }
        }
    }
    out
}

/// Rust's `Display` for `f64` prints the shortest string that parses back to the same bits.
fn features_text(features: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..features.rows() {
        let row: Vec<String> = features.row(r).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}
