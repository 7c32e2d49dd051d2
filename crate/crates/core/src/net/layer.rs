use super::MessageGraph;
use crate::autodiff::{Matrix, ParamId, ParamStore, Tape, TapeTensor};
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax over the three raw (already squashed) channel gates.
#[inline]
pub(crate) fn normalize_gates(raw: [f64; 3]) -> [f64; 3] {
    let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = raw.map(|r| (r - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|x| x / z)
}

/// How gated neighbor messages are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Divide by the receiving node's degree.
    #[default]
    Mean,
    Sum,
}

/// Message passing with low-pass, high-pass and identity channels mixed by
/// per-edge softmax gates.
///
/// Weights are stored input-major (`d_in x d_out`), so projecting a node
/// feature matrix is `H · W`. The low-pass gate vector is stored as a
/// `d_out x 2` matrix whose columns act on the receiving node and on the
/// neighbor respectively.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiFilterLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w_low: ParamId,
    pub w_high: ParamId,
    pub w_id: ParamId,
    pub g_low: ParamId,
    pub g_high: ParamId,
    pub g_id: ParamId,
    #[serde(default)]
    pub aggregation: Aggregation,
}

/// Per-node gate logits of one layer; `alpha(u, k)` combines them per edge.
#[derive(Debug, Clone)]
pub struct GateScores {
    pub low_self: Vec<f64>,
    pub low_nb: Vec<f64>,
    pub high: Vec<f64>,
    pub id: Vec<f64>,
}

impl GateScores {
    /// Normalized filter coefficients for message `k -> u`.
    pub fn alpha(&self, u: usize, k: usize) -> [f64; 3] {
        normalize_gates([
            sigmoid(self.low_self[u] + self.low_nb[k]),
            sigmoid(-self.high[k]),
            sigmoid(self.id[u]),
        ])
    }
}

impl MultiFilterLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        aggregation: Aggregation,
        rng: &mut R,
    ) -> Self {
        Self {
            aggregation,
            in_dim,
            out_dim,
            w_low: store.add(format!("{prefix}.w_low"), Matrix::glorot(in_dim, out_dim, rng), true),
            w_high: store.add(format!("{prefix}.w_high"), Matrix::glorot(in_dim, out_dim, rng), true),
            w_id: store.add(format!("{prefix}.w_id"), Matrix::glorot(in_dim, out_dim, rng), true),
            g_low: store.add(format!("{prefix}.g_low"), Matrix::zeros(out_dim, 2), true),
            g_high: store.add(format!("{prefix}.g_high"), Matrix::zeros(out_dim, 1), true),
            g_id: store.add(format!("{prefix}.g_id"), Matrix::zeros(out_dim, 1), true),
        }
    }

    fn check_input(&self, h: TapeTensor) -> Result<()> {
        if h.cols() != self.in_dim {
            return Err(Error::Dimension {
                op: "multi-filter layer input",
                lhs: h.shape(),
                rhs: (self.in_dim, self.out_dim),
            });
        }
        Ok(())
    }

    /// Normalized coefficients `(low, high, identity)` for each row pair
    /// `(h_u[i], h_k[i])`, as an `E x 3` tensor whose rows sum to one.
    pub fn filter_coefficients(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h_u: TapeTensor,
        h_k: TapeTensor,
    ) -> Result<TapeTensor> {
        self.check_input(h_u)?;
        self.check_input(h_k)?;
        let wl = tape.param(store, self.w_low);
        let wh = tape.param(store, self.w_high);
        let wi = tape.param(store, self.w_id);
        let gl = tape.param(store, self.g_low);
        let gh = tape.param(store, self.g_high);
        let gi = tape.param(store, self.g_id);

        let lu = tape.matmul(h_u, wl)?;
        let lk = tape.matmul(h_k, wl)?;
        let cat = tape.concat_cols(&[lu, lk])?;
        // [g_self; g_nb] stacked as one 2d-long vector
        let g_flat = stack_columns(tape, gl)?;
        let low = tape.matmul(cat, g_flat)?;
        let low = tape.sigmoid(low);

        let hk = tape.matmul(h_k, wh)?;
        let hk = tape.neg(hk);
        let high = tape.matmul(hk, gh)?;
        let high = tape.sigmoid(high);

        let iu = tape.matmul(h_u, wi)?;
        let id = tape.matmul(iu, gi)?;
        let id = tape.sigmoid(id);

        let raw = tape.concat_cols(&[low, high, id])?;
        Ok(tape.softmax_rows(raw))
    }

    /// One round of multi-filter aggregation:
    /// `h'_u = ω·res(h_u) + Σ_k c_u α_(u,k) · ReLU([W_L h_k, W_H h_k, W_I h_k])`,
    /// where `res` is the identity when dimensions match and `W_I` otherwise,
    /// and `c_u` is `1 / deg(u)` for mean aggregation and 1 for sum.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graph: &MessageGraph,
        h: TapeTensor,
        omega: f64,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<TapeTensor> {
        self.check_input(h)?;
        if h.rows() != graph.num_nodes() {
            return Err(Error::Dimension {
                op: "multi-filter layer rows",
                lhs: h.shape(),
                rhs: (graph.num_nodes(), self.in_dim),
            });
        }
        let wl = tape.param(store, self.w_low);
        let wh = tape.param(store, self.w_high);
        let wi = tape.param(store, self.w_id);
        let gl = tape.param(store, self.g_low);
        let gh = tape.param(store, self.g_high);
        let gi = tape.param(store, self.g_id);

        let pl = tape.matmul(h, wl)?;
        let ph = tape.matmul(h, wh)?;
        let pi = tape.matmul(h, wi)?;

        let s_low = tape.matmul(pl, gl)?;
        let s_low_self = tape.slice_cols(s_low, 0, 1)?;
        let s_low_nb = tape.slice_cols(s_low, 1, 1)?;
        let s_high = tape.matmul(ph, gh)?;
        let s_id = tape.matmul(pi, gi)?;

        let a = tape.gather_rows(s_low_self, graph.dst.clone())?;
        let b = tape.gather_rows(s_low_nb, graph.src.clone())?;
        let low = tape.add(a, b)?;
        let low = tape.sigmoid(low);
        let high = tape.gather_rows(s_high, graph.src.clone())?;
        let high = tape.neg(high);
        let high = tape.sigmoid(high);
        let id = tape.gather_rows(s_id, graph.dst.clone())?;
        let id = tape.sigmoid(id);
        let raw = tape.concat_cols(&[low, high, id])?;
        let mut alpha = tape.softmax_rows(raw);
        if self.aggregation == Aggregation::Mean {
            let w = tape.constant(graph.mean_weights());
            alpha = tape.mul_col(w, alpha)?;
        }

        let residual = if self.in_dim == self.out_dim { h } else { pi };
        let residual = leading_rows(tape, residual, graph.num_outputs())?;
        let mut out = tape.scale(residual, omega);
        for (channel, proj) in [pl, ph, pi].into_iter().enumerate() {
            let coef = tape.slice_cols(alpha, channel, 1)?;
            let msg = tape.relu(proj);
            let agg = tape.neighbor_sum(coef, msg, graph.dst.clone(), graph.src.clone(), graph.num_outputs())?;
            out = tape.add(out, agg)?;
        }
        tape.dropout(out, dropout, training, rng)
    }

    /// Gate logits per node computed from plain feature rows, without a tape.
    pub fn gate_scores(&self, store: &ParamStore, h: &Matrix) -> Result<GateScores> {
        let pl = h.matmul(store.value(self.w_low))?;
        let ph = h.matmul(store.value(self.w_high))?;
        let pi = h.matmul(store.value(self.w_id))?;
        let sl = pl.matmul(store.value(self.g_low))?;
        let sh = ph.matmul(store.value(self.g_high))?;
        let si = pi.matmul(store.value(self.g_id))?;
        Ok(GateScores {
            low_self: (0..h.rows()).map(|r| sl.get(r, 0)).collect(),
            low_nb: (0..h.rows()).map(|r| sl.get(r, 1)).collect(),
            high: sh.into_vec(),
            id: si.into_vec(),
        })
    }
}

fn leading_rows(tape: &mut Tape, x: TapeTensor, n: usize) -> Result<TapeTensor> {
    if n == x.rows() {
        Ok(x)
    } else {
        tape.gather_rows(x, (0..n).collect::<Vec<_>>().into())
    }
}

// d x 2 -> 2d x 1, first column on top
fn stack_columns(tape: &mut Tape, g: TapeTensor) -> Result<TapeTensor> {
    let d = g.rows();
    let at: std::sync::Arc<[(usize, usize)]> = (0..2 * d).map(|i| (i % d, i / d)).collect();
    tape.pick(g, at)
}

/// Uniform mean aggregation over the closed neighborhood followed by ReLU;
/// the plain-GCN stand-in used when the multi-filter encoder is ablated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanAggLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: ParamId,
}

impl MeanAggLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: store.add(format!("{prefix}.w"), Matrix::glorot(in_dim, out_dim, rng), true),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graph: &MessageGraph,
        h: TapeTensor,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<TapeTensor> {
        if h.cols() != self.in_dim || h.rows() != graph.num_nodes() {
            return Err(Error::Dimension {
                op: "mean-aggregation layer input",
                lhs: h.shape(),
                rhs: (graph.num_nodes(), self.in_dim),
            });
        }
        let w = tape.param(store, self.weight);
        let p = tape.matmul(h, w)?;
        let n_out = graph.num_outputs();
        let inv = graph.inverse_closed_degree();
        let edge_w = tape.constant(Matrix::column(
            &graph.dst.iter().map(|&d| inv[d]).collect::<Vec<_>>(),
        ));
        let self_w = tape.constant(Matrix::column(&inv[..n_out]));
        let nb = tape.neighbor_sum(edge_w, p, graph.dst.clone(), graph.src.clone(), n_out)?;
        let p_out = leading_rows(tape, p, n_out)?;
        let own = tape.mul_col(self_w, p_out)?;
        let sum = tape.add(nb, own)?;
        let out = tape.relu(sum);
        tape.dropout(out, dropout, training, rng)
    }
}

/// A message-passing layer of either family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer {
    MultiFilter(MultiFilterLayer),
    MeanAgg(MeanAggLayer),
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        match self {
            Layer::MultiFilter(l) => l.out_dim,
            Layer::MeanAgg(l) => l.out_dim,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graph: &MessageGraph,
        h: TapeTensor,
        omega: f64,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<TapeTensor> {
        match self {
            Layer::MultiFilter(l) => l.forward(tape, store, graph, h, omega, dropout, training, rng),
            Layer::MeanAgg(l) => l.forward(tape, store, graph, h, dropout, training, rng),
        }
    }
}
