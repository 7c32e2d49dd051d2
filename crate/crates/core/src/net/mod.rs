//! Multi-filter message passing, the subgraph link encoder and the node
//! classifier.

mod checkpoint;
mod classifier;
mod encoder;
mod layer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use classifier::{argmax_rows, NodeClassifier};
pub use encoder::{apply_threshold, RelevanceState, SubgraphBatch, SubgraphEncoder};
pub use layer::{Aggregation, GateScores, Layer, MeanAggLayer, MultiFilterLayer};

use crate::autodiff::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::graph::Csr;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Directed message list of an undirected graph: one entry `src -> dst` per
/// arc, grouped by receiving node.
///
/// A truncated graph keeps only the messages into its first `n_out` nodes;
/// layers run on it produce just those rows.
#[derive(Debug, Clone)]
pub struct MessageGraph {
    n: usize,
    n_out: usize,
    pub(crate) dst: Arc<[usize]>,
    pub(crate) src: Arc<[usize]>,
    inv_closed_degree: Vec<f64>,
    inv_degree: Vec<f64>,
}

impl MessageGraph {
    pub fn from_csr(adj: &Csr) -> Self {
        Self::disjoint_union(std::slice::from_ref(adj))
    }

    /// Block-diagonal union; part `i` occupies the id range starting at the
    /// sum of the preceding part sizes.
    pub fn disjoint_union(parts: &[Csr]) -> Self {
        let mut dst = Vec::new();
        let mut src = Vec::new();
        let mut inv = Vec::new();
        let mut inv_open = Vec::new();
        let mut base = 0;
        for adj in parts {
            for u in 0..adj.num_nodes() {
                for &k in adj.neighbors(u) {
                    dst.push(base + u);
                    src.push(base + k);
                }
                let d = adj.degree(u);
                inv.push(1.0 / (d + 1) as f64);
                inv_open.push(if d == 0 { 0.0 } else { 1.0 / d as f64 });
            }
            base += adj.num_nodes();
        }
        Self {
            n: base,
            n_out: base,
            dst: dst.into(),
            src: src.into(),
            inv_closed_degree: inv,
            inv_degree: inv_open,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Rows produced by a layer run on this graph.
    pub fn num_outputs(&self) -> usize {
        self.n_out
    }

    /// Restricts receivers to nodes `0..n_out` and inputs to `0..n_in`.
    /// Degrees keep their full-graph values, so the surviving rows are
    /// computed exactly. Fails if a kept message comes from a node outside
    /// the input range.
    pub fn truncated(&self, n_in: usize, n_out: usize) -> Result<Self> {
        if n_out > n_in || n_in > self.n {
            return Err(Error::Contract(format!(
                "cannot truncate a {}-node graph to {n_in} inputs and {n_out} outputs",
                self.n
            )));
        }
        let keep: Vec<usize> = (0..self.dst.len()).filter(|&i| self.dst[i] < n_out).collect();
        if let Some(&i) = keep.iter().find(|&&i| self.src[i] >= n_in) {
            return Err(Error::Contract(format!(
                "message {} -> {} leaves the first {n_in} inputs",
                self.src[i], self.dst[i]
            )));
        }
        Ok(Self {
            n: n_in,
            n_out,
            dst: keep.iter().map(|&i| self.dst[i]).collect(),
            src: keep.iter().map(|&i| self.src[i]).collect(),
            inv_closed_degree: self.inv_closed_degree[..n_in].to_vec(),
            inv_degree: self.inv_degree[..n_in].to_vec(),
        })
    }

    pub fn num_messages(&self) -> usize {
        self.dst.len()
    }

    /// `1 / (deg(u) + 1)` per input node.
    pub fn inverse_closed_degree(&self) -> &[f64] {
        &self.inv_closed_degree
    }

    /// `1 / deg(u)` of the receiving node, one entry per message.
    pub fn mean_weights(&self) -> Matrix {
        Matrix::column(&self.dst.iter().map(|&u| self.inv_degree[u]).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Multi-filter layers averaging gated messages over neighbors.
    MultiFilter,
    /// Multi-filter layers summing gated messages.
    MultiFilterSum,
    MeanAgg,
}

pub(crate) fn build_layers<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    kind: LayerKind,
    in_dim: usize,
    dims: &[usize],
    rng: &mut R,
) -> Vec<Layer> {
    let mut prev = in_dim;
    dims.iter()
        .enumerate()
        .map(|(i, &d)| {
            let name = format!("{prefix}.{i}");
            let layer = match kind {
                LayerKind::MultiFilter => Layer::MultiFilter(MultiFilterLayer::new(
                    store,
                    &name,
                    prev,
                    d,
                    Aggregation::Mean,
                    rng,
                )),
                LayerKind::MultiFilterSum => Layer::MultiFilter(MultiFilterLayer::new(
                    store,
                    &name,
                    prev,
                    d,
                    Aggregation::Sum,
                    rng,
                )),
                LayerKind::MeanAgg => Layer::MeanAgg(MeanAggLayer::new(store, &name, prev, d, rng)),
            };
            prev = d;
            layer
        })
        .collect()
}

/// Architecture settings shared by the encoder and the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder_dims: Vec<usize>,
    pub classifier_dims: Vec<usize>,
    pub omega: f64,
    pub dropout: f64,
    /// Output width of the frozen feature projection used for pair similarity.
    pub projection_dim: usize,
    pub encoder_kind: LayerKind,
    pub classifier_kind: LayerKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_dims: vec![64, 32],
            classifier_dims: vec![64, 32],
            omega: 0.3,
            dropout: 0.5,
            projection_dim: 32,
            encoder_kind: LayerKind::MultiFilter,
            classifier_kind: LayerKind::MultiFilter,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_dims.is_empty() || self.classifier_dims.is_empty() {
            return Err(Error::config("model", "at least one layer is required"));
        }
        if self.encoder_dims.iter().chain(&self.classifier_dims).any(|&d| d == 0) {
            return Err(Error::config("model", "layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("{} outside [0, 1)", self.dropout)));
        }
        if !self.omega.is_finite() {
            return Err(Error::config("omega", "must be finite"));
        }
        if self.projection_dim == 0 {
            return Err(Error::config("projection_dim", "must be positive"));
        }
        Ok(())
    }
}

/// Every learnable and frozen weight of one run, in a single store so one
/// optimizer covers both networks.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: SubgraphEncoder,
    pub classifier: NodeClassifier,
    /// Frozen `d x d'` projection for pair similarity.
    pub projection: ParamId,
    /// Frozen `3 x 3` bilinear weight of the relevance score.
    pub relevance_weight: ParamId,
}

impl Model {
    /// `encoder_extra` is the width of the structural label channel appended
    /// to the node features on the encoder side.
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        feature_dim: usize,
        encoder_extra: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if num_classes == 0 {
            return Err(Error::config("model", "need at least one class"));
        }
        let mut store = ParamStore::new();
        let encoder = SubgraphEncoder::new(
            &mut store,
            config.encoder_kind,
            feature_dim + encoder_extra,
            &config.encoder_dims,
            config.omega,
            config.dropout,
            rng,
        );
        let classifier = NodeClassifier::new(
            &mut store,
            config.classifier_kind,
            feature_dim,
            &config.classifier_dims,
            num_classes,
            config.omega,
            config.dropout,
            rng,
        );
        let projection = store.add(
            "projection",
            Matrix::glorot(feature_dim, config.projection_dim, rng),
            false,
        );
        let relevance_weight = store.add("relevance_weight", Matrix::identity(3), false);
        Ok(Self {
            config,
            store,
            encoder,
            classifier,
            projection,
            relevance_weight,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn union_offsets_second_part() {
        let a = Csr::from_undirected(2, [(0, 1)]);
        let b = Csr::from_undirected(3, [(0, 2)]);
        let g = MessageGraph::disjoint_union(&[a, b]);
        assert_eq!(g.num_nodes(), 5);
        let pairs: Vec<_> = g.dst.iter().zip(g.src.iter()).map(|(&d, &s)| (d, s)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0), (2, 4), (4, 2)]);
        assert_eq!(g.inverse_closed_degree(), &[0.5, 0.5, 0.5, 1.0, 0.5]);
        assert_eq!(g.mean_weights().data(), &[1.0; 4]);
    }

    #[test]
    fn truncation_keeps_messages_into_prefix() {
        // path 0-1-2-3 ordered by distance from 0
        let g = MessageGraph::from_csr(&Csr::from_undirected(4, [(0, 1), (1, 2), (2, 3)]));
        let t = g.truncated(3, 2).unwrap();
        let pairs: Vec<_> = t.dst.iter().zip(t.src.iter()).map(|(&d, &s)| (d, s)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0), (1, 2)]);
        assert_eq!((t.num_nodes(), t.num_outputs()), (3, 2));
        assert_eq!(t.mean_weights().data(), &[1.0, 0.5, 0.5]);
        assert!(g.truncated(2, 2).is_err());
    }

    #[test]
    fn model_has_frozen_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Model::new(ModelConfig::default(), 5, 11, 3, &mut rng).unwrap();
        assert!(!m.store.get(m.projection).trainable);
        assert!(!m.store.get(m.relevance_weight).trainable);
        assert_eq!(m.store.value(m.projection).shape(), (5, 32));
    }

    #[test]
    fn empty_layer_list_rejected() {
        let cfg = ModelConfig {
            encoder_dims: vec![],
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
