use super::{build_layers, Layer, LayerKind, MessageGraph};
use crate::autodiff::{Matrix, ParamId, ParamStore, Tape, TapeTensor};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Node classifier: stacked message-passing layers and an affine softmax head.
#[derive(Debug, Clone)]
pub struct NodeClassifier {
    pub layers: Vec<Layer>,
    pub head_w: ParamId,
    pub head_b: ParamId,
    pub in_dim: usize,
    pub num_classes: usize,
    pub omega: f64,
    pub dropout: f64,
}

impl NodeClassifier {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        kind: LayerKind,
        in_dim: usize,
        dims: &[usize],
        num_classes: usize,
        omega: f64,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        let layers = build_layers(store, "classifier", kind, in_dim, dims, rng);
        let last = layers.last().map_or(in_dim, Layer::out_dim);
        let head_w = store.add("classifier.head_w", Matrix::glorot(last, num_classes, rng), true);
        let head_b = store.add("classifier.head_b", Matrix::zeros(1, num_classes), true);
        Self {
            layers,
            head_w,
            head_b,
            in_dim,
            num_classes,
            omega,
            dropout,
        }
    }

    /// Class log-probabilities for every node, `n x C`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graph: &MessageGraph,
        x: TapeTensor,
        training: bool,
        rng: &mut R,
    ) -> Result<TapeTensor> {
        let graphs = vec![graph; self.layers.len()];
        self.forward_layers(tape, store, &graphs, x, training, rng)
    }

    /// Like [`forward`](Self::forward) with one message graph per layer,
    /// typically successively truncated so only the rows needed downstream
    /// are computed.
    pub fn forward_layers<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graphs: &[&MessageGraph],
        x: TapeTensor,
        training: bool,
        rng: &mut R,
    ) -> Result<TapeTensor> {
        if x.cols() != self.in_dim {
            return Err(Error::Dimension {
                op: "classifier input",
                lhs: x.shape(),
                rhs: (x.rows(), self.in_dim),
            });
        }
        if graphs.len() != self.layers.len() {
            return Err(Error::Contract(format!(
                "{} message graphs for {} layers",
                graphs.len(),
                self.layers.len()
            )));
        }
        let mut h = x;
        for (layer, graph) in self.layers.iter().zip(graphs) {
            h = layer.forward(tape, store, graph, h, self.omega, self.dropout, training, rng)?;
        }
        let w = tape.param(store, self.head_w);
        let b = tape.param(store, self.head_b);
        let logits = tape.matmul(h, w)?;
        let logits = tape.add_row(logits, b)?;
        Ok(tape.log_softmax_rows(logits))
    }

    /// Eval-mode class log-probabilities as a plain matrix.
    pub fn predict_log_proba(&self, store: &ParamStore, graph: &MessageGraph, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let xt = tape.constant(x.clone());
        // eval mode never draws from the generator
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lp = self.forward(&mut tape, store, graph, xt, false, &mut rng)?;
        Ok(tape.value(lp).clone())
    }

    /// Eval-mode class probabilities as a plain matrix.
    pub fn predict_proba(&self, store: &ParamStore, graph: &MessageGraph, x: &Matrix) -> Result<Matrix> {
        Ok(self.predict_log_proba(store, graph, x)?.map(f64::exp))
    }
}

/// Row-wise argmax; ties go to the smaller class id.
pub fn argmax_rows(p: &Matrix) -> Vec<usize> {
    (0..p.rows())
        .map(|r| {
            let row = p.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
