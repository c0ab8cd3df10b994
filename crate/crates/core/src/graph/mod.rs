//! Dataset model, on-disk formats, synthetic SBM generation and degree featurization.

mod features;
mod io;
mod sbm;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use features::{degree_features, DEGREE_FEATURE_DIM};
pub use io::{load_dataset, save_dataset, DatasetManifest, ManifestDomain, MANIFEST_VERSION};
pub use sbm::generate_sbm;

use crate::error::{LedaError, Result};
use crate::{Matrix, Sparse};

/// One domain's graph: node features, binary symmetric adjacency and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainGraph {
    pub domain_id: String,
    pub features: Matrix,
    pub adjacency: Sparse,
    pub labels: Option<Vec<usize>>,
    pub num_classes: Option<usize>,
    /// Features were synthesized from degrees because the source had none.
    pub degree_featurized: bool,
}

impl DomainGraph {
    pub fn new(
        domain_id: impl Into<String>,
        features: Matrix,
        adjacency: Sparse,
        labels: Option<Vec<usize>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        let graph = Self {
            domain_id: domain_id.into(),
            features,
            adjacency,
            labels,
            num_classes,
            degree_featurized: false,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        let id = &self.domain_id;
        if self.adjacency.rows() != n || self.adjacency.cols() != n {
            return Err(LedaError::Dataset(format!(
                "domain '{id}': adjacency {}x{} does not match {n} feature rows",
                self.adjacency.rows(),
                self.adjacency.cols()
            )));
        }
        if !self.features.is_finite() {
            return Err(LedaError::Dataset(format!(
                "domain '{id}': non-finite feature"
            )));
        }
        if self.adjacency.values().iter().any(|&v| v != 1.0) {
            return Err(LedaError::Dataset(format!(
                "domain '{id}': adjacency is not binary"
            )));
        }
        if !self.adjacency.is_symmetric() {
            return Err(LedaError::Dataset(format!(
                "domain '{id}': adjacency is not symmetric"
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(LedaError::Dataset(format!(
                    "domain '{id}': {} labels for {n} nodes",
                    labels.len()
                )));
            }
            let classes = self.num_classes.unwrap_or(0);
            if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
                return Err(LedaError::Dataset(format!(
                    "domain '{id}': label {bad} outside [0, {classes})"
                )));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Disjoint union of graphs sharing one domain id (block-diagonal adjacency).
    pub fn disjoint_union(domain_id: &str, graphs: &[&DomainGraph]) -> Result<Self> {
        let blocks: Vec<&Matrix> = graphs.iter().map(|g| &g.features).collect();
        let features = Matrix::vstack(&blocks).map_err(|_| {
            LedaError::Dataset(format!(
                "domain '{domain_id}': graphs disagree on feature dimension"
            ))
        })?;
        let mut triplets = Vec::new();
        let mut offset = 0;
        for g in graphs {
            for r in 0..g.num_nodes() {
                triplets.extend(g.adjacency.row_entries(r).map(|(c, v)| (offset + r, offset + c, v)));
            }
            offset += g.num_nodes();
        }
        let adjacency = Sparse::from_triplets(offset, offset, &triplets)?;
        Ok(Self {
            domain_id: domain_id.to_string(),
            features,
            adjacency,
            labels: None,
            num_classes: None,
            degree_featurized: graphs.iter().any(|g| g.degree_featurized),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    NodeLevel,
    GraphLevel,
}

/// Node-level: one graph per domain. Graph-level: many small graphs, several per domain id.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphCollection {
    pub graphs: Vec<DomainGraph>,
    pub task_kind: TaskKind,
    pub graph_labels: Option<Vec<usize>>,
}

impl GraphCollection {
    pub fn node_level(graphs: Vec<DomainGraph>) -> Result<Self> {
        let c = Self {
            graphs,
            task_kind: TaskKind::NodeLevel,
            graph_labels: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn graph_level(graphs: Vec<DomainGraph>, graph_labels: Vec<usize>) -> Result<Self> {
        let c = Self {
            graphs,
            task_kind: TaskKind::GraphLevel,
            graph_labels: Some(graph_labels),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.graphs {
            g.validate()?;
        }
        match self.task_kind {
            TaskKind::NodeLevel => {
                let mut seen = std::collections::BTreeSet::new();
                for g in &self.graphs {
                    if !seen.insert(g.domain_id.as_str()) {
                        return Err(LedaError::Dataset(format!(
                            "duplicate domain id '{}'",
                            g.domain_id
                        )));
                    }
                }
            }
            TaskKind::GraphLevel => match &self.graph_labels {
                Some(labels) if labels.len() == self.graphs.len() => {}
                Some(labels) => {
                    return Err(LedaError::Dataset(format!(
                        "{} graph labels for {} graphs",
                        labels.len(),
                        self.graphs.len()
                    )))
                }
                None => {
                    return Err(LedaError::Dataset(
                        "graph-level collection without graph labels".into(),
                    ))
                }
            },
        }
        Ok(())
    }

    /// Distinct domain ids in ascending order.
    pub fn domain_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.graphs.iter().map(|g| g.domain_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn domain(&self, domain_id: &str) -> Option<&DomainGraph> {
        self.graphs.iter().find(|g| g.domain_id == domain_id)
    }

    /// One graph per domain id, sorted by id. Graph-level domains become disjoint unions.
    pub fn training_domains(&self) -> Result<Vec<DomainGraph>> {
        let mut grouped: BTreeMap<&str, Vec<&DomainGraph>> = BTreeMap::new();
        for g in &self.graphs {
            grouped.entry(g.domain_id.as_str()).or_default().push(g);
        }
        grouped
            .into_iter()
            .map(|(id, graphs)| match graphs.as_slice() {
                [single] => Ok((*single).clone()),
                many => DomainGraph::disjoint_union(id, many),
            })
            .collect()
    }

    /// Copy restricted to the listed domain ids.
    pub fn subset(&self, keep: &[&str]) -> Self {
        let mut graphs = Vec::new();
        let mut labels = Vec::new();
        for (i, g) in self.graphs.iter().enumerate() {
            if keep.contains(&g.domain_id.as_str()) {
                graphs.push(g.clone());
                if let Some(l) = &self.graph_labels {
                    labels.push(l[i]);
                }
            }
        }
        Self {
            graphs,
            task_kind: self.task_kind,
            graph_labels: self.graph_labels.as_ref().map(|_| labels),
        }
    }
}
