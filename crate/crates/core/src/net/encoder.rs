use super::layer::GateScores;
use super::{build_layers, Layer, LayerKind, MessageGraph};
use crate::autodiff::{Matrix, ParamId, ParamStore, Tape, TapeTensor};
use crate::error::{Error, Result};
use crate::graph::Csr;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Several enclosing subgraphs packed as one block-diagonal graph.
#[derive(Debug, Clone)]
pub struct SubgraphBatch {
    pub(crate) graph: MessageGraph,
    pub(crate) features: Matrix,
    pub(crate) segment: Arc<[usize]>,
    pub(crate) inv_size: Vec<f64>,
}

impl SubgraphBatch {
    /// Each part is a local adjacency with its input feature rows.
    pub fn new(parts: &[(Csr, Matrix)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Contract("empty subgraph batch".into()));
        }
        let width = parts[0].1.cols();
        let total: usize = parts.iter().map(|(a, _)| a.num_nodes()).sum();
        let mut data = Vec::with_capacity(total * width);
        let mut segment = Vec::with_capacity(total);
        let mut inv_size = Vec::with_capacity(parts.len());
        for (i, (adj, x)) in parts.iter().enumerate() {
            if adj.num_nodes() == 0 {
                return Err(Error::Contract(format!("subgraph {i} is empty")));
            }
            if x.cols() != width || x.rows() != adj.num_nodes() {
                return Err(Error::Dimension {
                    op: "subgraph batch part",
                    lhs: x.shape(),
                    rhs: (adj.num_nodes(), width),
                });
            }
            data.extend_from_slice(x.data());
            segment.extend(std::iter::repeat_n(i, adj.num_nodes()));
            inv_size.push(1.0 / adj.num_nodes() as f64);
        }
        let adjs: Vec<Csr> = parts.iter().map(|(a, _)| a.clone()).collect();
        Ok(Self {
            graph: MessageGraph::disjoint_union(&adjs),
            features: Matrix::from_vec(total, width, data)?,
            segment: segment.into(),
            inv_size,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_size.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_size.is_empty()
    }
}

/// Per-node filter coefficients of the encoder's last layer, used to score
/// how relevant a node is to a candidate link.
#[derive(Debug, Clone)]
pub struct RelevanceState {
    gates: Option<GateScores>,
    mean_alpha: Vec<[f64; 3]>,
}

impl RelevanceState {
    /// Coefficients of the message `v -> u`.
    pub fn pair_alpha(&self, u: usize, v: usize) -> [f64; 3] {
        match &self.gates {
            Some(g) => g.alpha(u, v),
            None => [1.0 / 3.0; 3],
        }
    }

    /// Coefficients averaged over the closed neighborhood of `k`.
    pub fn mean_alpha(&self, k: usize) -> [f64; 3] {
        self.mean_alpha[k]
    }

    pub fn num_nodes(&self) -> usize {
        self.mean_alpha.len()
    }
}

/// Link predictor over enclosing subgraphs: stacked layers, concatenated
/// layer outputs, a linear readout, mean pooling and a sigmoid.
#[derive(Debug, Clone)]
pub struct SubgraphEncoder {
    pub layers: Vec<Layer>,
    pub w_pool: ParamId,
    pub in_dim: usize,
    pub omega: f64,
    pub dropout: f64,
}

impl SubgraphEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        kind: LayerKind,
        in_dim: usize,
        dims: &[usize],
        omega: f64,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        let layers = build_layers(store, "encoder", kind, in_dim, dims, rng);
        let width: usize = dims.iter().sum();
        let w_pool = store.add("encoder.pool", Matrix::zeros(width, 1), true);
        Self {
            layers,
            w_pool,
            in_dim,
            omega,
            dropout,
        }
    }

    /// Link probability for every subgraph in the batch, as a `B x 1` column.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &SubgraphBatch,
        training: bool,
        rng: &mut R,
    ) -> Result<TapeTensor> {
        if batch.features.cols() != self.in_dim {
            return Err(Error::Dimension {
                op: "encoder input",
                lhs: batch.features.shape(),
                rhs: (batch.features.rows(), self.in_dim),
            });
        }
        let mut h = tape.constant(batch.features.clone());
        let mut outs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            h = layer.forward(
                tape,
                store,
                &batch.graph,
                h,
                self.omega,
                self.dropout,
                training,
                rng,
            )?;
            outs.push(h);
        }
        let cat = tape.concat_cols(&outs)?;
        let w = tape.param(store, self.w_pool);
        let score = tape.matmul(cat, w)?;
        let summed = tape.segment_sum(score, batch.segment.clone(), batch.len())?;
        let inv = tape.constant(Matrix::column(&batch.inv_size));
        let mean = tape.mul_col(inv, summed)?;
        Ok(tape.sigmoid(mean))
    }

    /// Runs all but the last layer over a whole graph in eval mode, with the
    /// structural label channel zeroed, and reads the last layer's gates.
    pub fn relevance_state(
        &self,
        store: &ParamStore,
        adj: &Csr,
        features: &Matrix,
    ) -> Result<RelevanceState> {
        let n = adj.num_nodes();
        if features.rows() != n || features.cols() > self.in_dim {
            return Err(Error::Dimension {
                op: "relevance state features",
                lhs: features.shape(),
                rhs: (n, self.in_dim),
            });
        }
        let mut padded = Matrix::zeros(n, self.in_dim);
        for r in 0..n {
            padded.row_mut(r)[..features.cols()].copy_from_slice(features.row(r));
        }
        let graph = MessageGraph::from_csr(adj);
        let (last, head) = self.layers.split_last().expect("encoder has layers");
        let mut tape = Tape::new();
        let mut h = tape.constant(padded);
        // eval mode never draws from the generator
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for layer in head {
            h = layer.forward(&mut tape, store, &graph, h, self.omega, 0.0, false, &mut rng)?;
        }
        let hidden = tape.value(h);
        let gates = match last {
            Layer::MultiFilter(l) => Some(l.gate_scores(store, hidden)?),
            Layer::MeanAgg(_) => None,
        };
        let mean_alpha = (0..n)
            .map(|k| match &gates {
                None => [1.0 / 3.0; 3],
                Some(g) => {
                    let mut acc = g.alpha(k, k);
                    for &i in adj.neighbors(k) {
                        let a = g.alpha(k, i);
                        (0..3).for_each(|c| acc[c] += a[c]);
                    }
                    let m = (adj.degree(k) + 1) as f64;
                    acc.map(|x| x / m)
                }
            })
            .collect();
        Ok(RelevanceState { gates, mean_alpha })
    }
}

/// Strict threshold: an edge is kept only when `p > eta`.
pub fn apply_threshold(probs: &[f64], eta: f64) -> Vec<bool> {
    probs.iter().map(|&p| p > eta).collect()
}
