//! Graph storage, homophily metrics, traversal, imbalanced splits and an SBM generator.

mod csr;
mod homophily;
mod sbm;
mod split;

pub use csr::Csr;
pub use homophily::{edge_homophily, node_homophily};
pub use sbm::{generate_sbm, SbmSpec};
pub use split::{make_imbalanced_split, EvalQuota, ImbalanceSpec, Masks, Setting};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Attributed undirected graph with optional labels and train/val/test masks.
#[derive(Debug, Clone)]
pub struct Graph {
    adj: Csr,
    features: Matrix,
    labels: Option<Vec<usize>>,
    num_classes: usize,
    class_names: Vec<String>,
    masks: Masks,
}

impl Graph {
    /// Builds a graph from an edge list. Arcs are symmetrized, duplicates and
    /// self-loops dropped. Labels are remapped to dense ids `0..C` in
    /// ascending order of the raw ids; the raw ids are kept as class names.
    pub fn from_edge_list(
        edges: &[(usize, usize)],
        n: usize,
        features: Matrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        for (i, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::ingest(
                    "edge list",
                    Some(i + 1),
                    format!("endpoint ({u}, {v}) out of range for {n} nodes"),
                ));
            }
        }
        if features.rows() != n {
            return Err(Error::ingest(
                "features",
                None,
                format!("{} feature rows for {n} nodes", features.rows()),
            ));
        }
        let (labels, num_classes, class_names) = match labels {
            Some(raw) => {
                if raw.len() != n {
                    return Err(Error::ingest(
                        "labels",
                        None,
                        format!("{} labels for {n} nodes", raw.len()),
                    ));
                }
                let mut distinct = raw.clone();
                distinct.sort_unstable();
                distinct.dedup();
                let dense = raw
                    .iter()
                    .map(|c| distinct.binary_search(c).expect("present"))
                    .collect();
                let names = distinct.iter().map(ToString::to_string).collect();
                (Some(dense), distinct.len(), names)
            }
            None => (None, 0, Vec::new()),
        };
        Ok(Self {
            adj: Csr::from_undirected(n, edges.iter().copied()),
            features,
            labels,
            num_classes,
            class_names,
            masks: Masks::empty(n),
        })
    }

    /// Assembles a graph from parts already in canonical form.
    pub(crate) fn from_parts(
        adj: Csr,
        features: Matrix,
        labels: Option<Vec<usize>>,
        num_classes: usize,
        masks: Masks,
    ) -> Self {
        let class_names = (0..num_classes).map(|c| c.to_string()).collect();
        Self {
            adj,
            features,
            labels,
            num_classes,
            class_names,
            masks,
        }
    }

    /// Undirected edges, each once with `u < v`.
    pub fn to_edge_list(&self) -> Vec<(usize, usize)> {
        self.adj.edges().collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.num_nodes()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.num_edges()
    }

    pub fn adj(&self) -> &Csr {
        &self.adj
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        self.adj.neighbors(u)
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj.degree(u)
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Contract("graph has no labels".into()))
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Raw class id for each dense class id.
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Replaces the reporting names of the dense classes.
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(Error::Contract(format!(
                "{} class names for {} classes",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    pub fn set_masks(&mut self, masks: Masks) -> Result<()> {
        masks.validate(self.num_nodes())?;
        self.masks = masks;
        Ok(())
    }

    /// Node count per class, optionally restricted to a mask.
    pub fn class_counts(&self, mask: Option<&[bool]>) -> Result<Vec<usize>> {
        let labels = self.labels()?;
        let mut counts = vec![0; self.num_classes];
        for (i, &c) in labels.iter().enumerate() {
            if mask.is_none_or(|m| m[i]) {
                counts[c] += 1;
            }
        }
        Ok(counts)
    }

    /// Hop distances from `source`; see [`Csr::bfs`].
    pub fn bfs_distance(&self, source: usize, cutoff: Option<usize>) -> Vec<Option<usize>> {
        self.adj.bfs(source, cutoff)
    }

    /// Nodes within `h` hops of `center`, the center included.
    pub fn k_hop_neighbors(&self, center: usize, h: usize) -> Vec<usize> {
        self.adj.k_hop(center, h)
    }

    /// Same graph with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut inv = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let edges: Vec<_> = self.adj.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        let features = self.features.select_rows(&inv);
        let labels = self
            .labels
            .as_ref()
            .map(|l| inv.iter().map(|&i| l[i]).collect::<Vec<_>>());
        let remap = |m: &[bool]| inv.iter().map(|&i| m[i]).collect::<Vec<_>>();
        let masks = Masks {
            train: remap(&self.masks.train),
            val: remap(&self.masks.val),
            test: remap(&self.masks.test),
        };
        Ok(Self::from_parts(
            Csr::from_undirected(n, edges),
            features,
            labels,
            self.num_classes,
            masks,
        ))
    }
}
