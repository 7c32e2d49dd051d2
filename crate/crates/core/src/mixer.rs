//! Minority node synthesis: pair sampling across all classes and masked
//! feature mixup guided by integrated-gradient feature importance.

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::graph::{Graph, ImbalanceSpec, Masks};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixerConfig {
    /// Scale of the importance threshold.
    pub kappa: f64,
    /// Synthetic nodes per minority training node. Zero disables synthesis.
    pub zeta: f64,
    /// Riemann steps for integrated gradients.
    pub steps: usize,
}

impl Default for MixerConfig {
    fn default() -> Self {
        Self {
            kappa: 1.05,
            zeta: 1.0,
            steps: 50,
        }
    }
}

impl MixerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::config("kappa", format!("{} must be positive", self.kappa)));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::config("zeta", format!("{} must be non-negative", self.zeta)));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "need at least one Riemann step"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePair {
    /// Minority anchor.
    pub v_s: usize,
    /// Partner from any class.
    pub v_t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticNode {
    pub features: Vec<f64>,
    /// Always the anchor's class.
    pub label: usize,
    pub pair: NodePair,
    /// `1 / (1 + ψ)` for the pair; 0 when the pair was mixed without it.
    pub similarity: f64,
}

/// Number of synthetic nodes for a class with `n_train` training nodes.
pub fn synthetic_count(n_train: usize, zeta: f64) -> usize {
    // guard against 0.1 * 30 style rounding lifting an exact product
    (zeta * n_train as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Partner sampling distribution over training nodes: each node of class `c`
/// weighs `ln(n_c + 1) / (n_c + 1)` with `n_c` the class's training count,
/// renormalized to sum to one.
pub fn target_distribution(labels: &[usize], train: &[bool], num_classes: usize) -> Result<Vec<(usize, f64)>> {
    let mut counts = vec![0usize; num_classes];
    for (i, &c) in labels.iter().enumerate() {
        if train[i] {
            counts[c] += 1;
        }
    }
    let weight = |n: usize| ((n + 1) as f64).ln() / (n + 1) as f64;
    let nodes: Vec<(usize, f64)> = labels
        .iter()
        .enumerate()
        .filter(|&(i, _)| train[i])
        .map(|(i, &c)| (i, weight(counts[c])))
        .collect();
    let total: f64 = nodes.iter().map(|&(_, w)| w).sum();
    if nodes.is_empty() || total <= 0.0 {
        return Err(Error::Sampling("no labeled training nodes to draw partners from".into()));
    }
    Ok(nodes.into_iter().map(|(i, w)| (i, w / total)).collect())
}

/// Draws `⌈ζ·n_m⌉` pairs per minority class `m`: the anchor uniformly from
/// the class's training nodes, the partner from [`target_distribution`].
pub fn sample_pairs<R: Rng + ?Sized>(
    g: &Graph,
    masks: &Masks,
    spec: &ImbalanceSpec,
    cfg: &MixerConfig,
    rng: &mut R,
) -> Result<Vec<NodePair>> {
    cfg.validate()?;
    let labels = g.labels()?;
    let targets = target_distribution(labels, &masks.train, g.num_classes())?;
    let picker = WeightedIndex::new(targets.iter().map(|&(_, p)| p))
        .map_err(|e| Error::Sampling(e.to_string()))?;
    let mut minority = spec.minority_classes.clone();
    minority.sort_unstable();
    minority.dedup();
    let mut pairs = Vec::new();
    for m in minority {
        let anchors: Vec<usize> = (0..labels.len())
            .filter(|&i| masks.train[i] && labels[i] == m)
            .collect();
        if anchors.is_empty() {
            return Err(Error::Sampling(format!("minority class {m} has no training nodes")));
        }
        for _ in 0..synthetic_count(anchors.len(), cfg.zeta) {
            let v_s = anchors[rng.random_range(0..anchors.len())];
            let v_t = targets[picker.sample(rng)].0;
            pairs.push(NodePair { v_s, v_t });
        }
    }
    Ok(pairs)
}

/// A scalar loss of a single feature vector with its gradient.
pub trait FeatureLoss {
    fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> FeatureLoss for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(x)
    }
}

/// Right Riemann sum of the integrated gradient from the zero baseline:
/// `IG_i = x_i · (1/S) Σ_{s=1..S} ∂L((s/S)·x)/∂x_i`.
pub fn integrated_gradient<L: FeatureLoss + ?Sized>(loss: &L, x: &[f64], steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::config("steps", "need at least one Riemann step"));
    }
    let mut acc = vec![0.0; x.len()];
    let mut scaled = vec![0.0; x.len()];
    for s in 1..=steps {
        let t = s as f64 / steps as f64;
        scaled.iter_mut().zip(x).for_each(|(o, &v)| *o = t * v);
        let (_, grad) = loss.loss_and_grad(&scaled)?;
        if grad.len() != x.len() {
            return Err(Error::Contract(format!(
                "gradient has {} entries for a {}-dim input",
                grad.len(),
                x.len()
            )));
        }
        acc.iter_mut().zip(&grad).for_each(|(a, g)| *a += g);
    }
    Ok(acc
        .iter()
        .zip(x)
        .map(|(a, &v)| a / steps as f64 * v)
        .collect())
}

/// `1 / (1 + ‖x_s·W − x_t·W‖)` with `W` of shape `d x d'`.
pub fn pair_similarity(x_s: &[f64], x_t: &[f64], projection: &Matrix) -> Result<f64> {
    if x_s.len() != projection.rows() || x_t.len() != projection.rows() {
        return Err(Error::Dimension {
            op: "pair similarity",
            lhs: (1, x_s.len().max(x_t.len())),
            rhs: projection.shape(),
        });
    }
    let diff: Vec<f64> = x_s.iter().zip(x_t).map(|(a, b)| a - b).collect();
    let proj = Matrix::row_vector(&diff).matmul(projection)?;
    let dist = proj.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(1.0 / (1.0 + dist))
}

/// `M[i] = 1` iff `κ·ψ̂ − D[i] > 0`; set coordinates are taken from the partner.
pub fn build_mask(similarity: f64, importance: &[f64], kappa: f64) -> Vec<bool> {
    let threshold = kappa * similarity;
    importance.iter().map(|&d| threshold - d > 0.0).collect()
}

pub fn mix_features(x_s: &[f64], x_t: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if x_s.len() != x_t.len() || x_s.len() != mask.len() {
        return Err(Error::Contract(format!(
            "mixup inputs have lengths {}, {}, {}",
            x_s.len(),
            x_t.len(),
            mask.len()
        )));
    }
    Ok(x_s
        .iter()
        .zip(x_t)
        .zip(mask)
        .map(|((&s, &t), &m)| if m { t } else { s })
        .collect())
}

/// Convex interpolation `x_s + δ(x_t − x_s)`.
pub fn interpolate_features(x_s: &[f64], x_t: &[f64], delta: f64) -> Vec<f64> {
    x_s.iter().zip(x_t).map(|(&s, &t)| s + delta * (t - s)).collect()
}

/// Nearest other training node of the same class by Euclidean distance,
/// ties to the smaller id; the node itself when it is alone in its class.
pub fn nearest_same_class(features: &Matrix, labels: &[usize], train: &[bool], v: usize) -> usize {
    let xv = features.row(v);
    let mut best = (f64::INFINITY, v);
    for u in 0..labels.len() {
        if u == v || !train[u] || labels[u] != labels[v] {
            continue;
        }
        let d: f64 = features.row(u).iter().zip(xv).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, u);
        }
    }
    best.1
}
