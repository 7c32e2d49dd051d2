//! Candidate edges for synthetic nodes and adaptive enclosing subgraphs with
//! double-radius structural labels.

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::graph::Csr;
use crate::mixer::NodePair;
use crate::net::RelevanceState;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorConfig {
    /// Fraction of the anchors' closed neighborhoods proposed as edge targets.
    pub xi: f64,
    /// Hop radius of the initial enclosing subgraph.
    pub hops: usize,
    /// Largest structural label; larger ones are clamped.
    pub drnl_cap: usize,
    /// Extra hops scored beyond the initial radius when ranking by relevance.
    pub expand_hops: usize,
    /// Rank pool nodes by relevance; otherwise keep the fixed-radius subgraph.
    pub adaptive: bool,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            xi: 0.3,
            hops: 2,
            drnl_cap: 10,
            expand_hops: 1,
            adaptive: true,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::config("xi", format!("{} outside (0, 1]", self.xi)));
        }
        if self.hops == 0 {
            return Err(Error::config("hops", "must be at least 1"));
        }
        if self.drnl_cap == 0 {
            return Err(Error::config("drnl_cap", "must be at least 1"));
        }
        Ok(())
    }

    /// Width of the one-hot structural label block.
    pub fn label_width(&self) -> usize {
        self.drnl_cap + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEdge {
    /// Id of the synthetic node in the augmented graph.
    pub syn: usize,
    /// Original node at the other end.
    pub target: usize,
    pub pair: NodePair,
}

/// For each synthetic node, draws `max(1, ⌊ξ·|U|⌋)` targets without
/// replacement from `U = N[v_s] ∪ N[v_t]` (closed neighborhoods).
pub fn sample_candidate_edges<R: Rng + ?Sized>(
    adj: &Csr,
    pairs: &[NodePair],
    syn_ids: &[usize],
    xi: f64,
    rng: &mut R,
) -> Result<Vec<CandidateEdge>> {
    if pairs.len() != syn_ids.len() {
        return Err(Error::Contract(format!(
            "{} pairs for {} synthetic nodes",
            pairs.len(),
            syn_ids.len()
        )));
    }
    let mut out = Vec::new();
    for (&pair, &syn) in pairs.iter().zip(syn_ids) {
        let pool: Vec<usize> = adj
            .neighbors(pair.v_s)
            .iter()
            .chain(adj.neighbors(pair.v_t))
            .copied()
            .chain([pair.v_s, pair.v_t])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let k = ((pool.len() as f64 * xi + 1e-9).floor() as usize).clamp(1, pool.len());
        let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|target| CandidateEdge { syn, target, pair }));
    }
    Ok(out)
}

/// Copy of `adj` with extra nodes appended, each wired to the given anchors.
pub fn attach_nodes(adj: &Csr, anchors: &[Vec<usize>]) -> Csr {
    let n = adj.num_nodes();
    let extra = anchors
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.iter().map(move |&t| (n + i, t)));
    Csr::from_undirected(n + anchors.len(), adj.edges().chain(extra))
}

/// Double-radius label: centers 1, nodes missing a distance 0, otherwise
/// `1 + min(du, dv) + (d/2)·(d/2 + d%2 − 1)` with `d = du + dv`, clamped.
pub fn drnl_label(du: Option<usize>, dv: Option<usize>, cap: usize) -> usize {
    match (du, dv) {
        (Some(0), _) | (_, Some(0)) => 1,
        (Some(a), Some(b)) => {
            let d = a + b;
            let half = d / 2;
            (1 + a.min(b) + half * (half + d % 2 - 1)).min(cap)
        }
        _ => 0,
    }
}

/// `⌈V·(1 + 2E / (V(V−1)))⌉`, or `V` when there are fewer than two nodes.
pub fn density_size(nodes: usize, edges: usize) -> usize {
    if nodes < 2 {
        return nodes;
    }
    let v = nodes as f64;
    (v * (1.0 + 2.0 * edges as f64 / (v * (v - 1.0))) - 1e-9).ceil() as usize
}

/// Relevance of node `k` to the candidate link: bilinear agreement of the
/// filter profiles over a distance penalty. Zero when a distance is missing.
pub fn relevance_score(
    mean_alpha: [f64; 3],
    weight: &Matrix,
    link_alpha: [f64; 3],
    du: Option<usize>,
    dv: Option<usize>,
) -> f64 {
    let (Some(a), Some(b)) = (du, dv) else {
        return 0.0;
    };
    let mut num = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            num += mean_alpha[i] * weight.get(i, j) * link_alpha[j];
        }
    }
    num / (a + b + a.min(b)) as f64
}

/// Top `m` pool nodes by score plus both centers; ties go to the smaller id.
/// Returns the selection in ascending id order.
pub fn select_top_m(scored: &[(usize, f64)], centers: (usize, usize), m: usize) -> Vec<usize> {
    let mut chosen = BTreeSet::from([centers.0, centers.1]);
    let mut rest: Vec<&(usize, f64)> = scored
        .iter()
        .filter(|(k, _)| *k != centers.0 && *k != centers.1)
        .collect();
    rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(k, _) in rest {
        if chosen.len() >= m {
            break;
        }
        chosen.insert(k);
    }
    chosen.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    /// Global ids, ascending; local index is the position.
    pub nodes: Vec<usize>,
    /// Induced adjacency without the candidate edge.
    pub adj: Csr,
    pub center_u: usize,
    pub center_v: usize,
    pub labels: Vec<usize>,
    /// Node budget from the density rule before clamping.
    pub budget: usize,
}

impl Subgraph {
    pub fn label_one_hot(&self, cap: usize) -> Matrix {
        let mut m = Matrix::zeros(self.nodes.len(), cap + 1);
        for (r, &l) in self.labels.iter().enumerate() {
            m.set(r, l.min(cap), 1.0);
        }
        m
    }

    /// `[x ∥ one-hot label]` per node; `features` rows are indexed by global id.
    pub fn input_features(&self, features: &Matrix, cap: usize) -> Matrix {
        let d = features.cols();
        let mut m = Matrix::zeros(self.nodes.len(), d + cap + 1);
        for (r, &g) in self.nodes.iter().enumerate() {
            let row = m.row_mut(r);
            row[..d].copy_from_slice(features.row(g));
            row[d + self.labels[r].min(cap)] = 1.0;
        }
        m
    }
}

fn local_labels(adj: &Csr, cu: usize, cv: usize, cap: usize) -> Vec<usize> {
    let du = adj.bfs(cu, None);
    let dv = adj.bfs(cv, None);
    (0..adj.num_nodes())
        .map(|k| drnl_label(du[k], dv[k], cap))
        .collect()
}

/// Enclosing subgraph of the candidate link `(u, v)`.
///
/// The initial pool is the `h`-hop union around both endpoints with the
/// link removed; its density fixes the node budget `M`. With adaptive
/// extraction and a relevance state, nodes within `h + expand_hops` hops are
/// ranked by relevance and the top `M` kept; otherwise the initial pool is
/// used as is.
pub fn extract_subgraph(
    adj: &Csr,
    u: usize,
    v: usize,
    cfg: &ExtractorConfig,
    relevance: Option<(&RelevanceState, &Matrix)>,
) -> Result<Subgraph> {
    let n = adj.num_nodes();
    if u >= n || v >= n || u == v {
        return Err(Error::Contract(format!("invalid candidate link ({u}, {v}) in {n} nodes")));
    }
    let skip = Some((u, v));
    let adaptive = cfg.adaptive && relevance.is_some();
    let reach = if adaptive { cfg.hops + cfg.expand_hops } else { cfg.hops };
    let du = adj.bfs_without(u, None, skip);
    let dv = adj.bfs_without(v, None, skip);
    let within = |k: usize, r: usize| du[k].is_some_and(|d| d <= r) || dv[k].is_some_and(|d| d <= r);

    let initial: Vec<usize> = (0..n).filter(|&k| within(k, cfg.hops)).collect();
    let stats = adj.induced(&initial, skip);
    let budget = density_size(initial.len(), stats.num_edges());

    let (nodes, sub) = match relevance {
        Some((state, weight)) if adaptive => {
            let link = state.pair_alpha(u, v);
            let scored: Vec<(usize, f64)> = (0..n)
                .filter(|&k| within(k, reach))
                .map(|k| (k, relevance_score(state.mean_alpha(k), weight, link, du[k], dv[k])))
                .collect();
            let m = budget.min(scored.len());
            let nodes = select_top_m(&scored, (u, v), m);
            let sub = adj.induced(&nodes, skip);
            (nodes, sub)
        }
        _ => (initial, stats),
    };
    let center_u = nodes.binary_search(&u).expect("center present");
    let center_v = nodes.binary_search(&v).expect("center present");
    let labels = local_labels(&sub, center_u, center_v, cfg.drnl_cap);
    Ok(Subgraph {
        nodes,
        adj: sub,
        center_u,
        center_v,
        labels,
        budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cycle4() -> Csr {
        // u=0, a=1, v=2, b=3
        Csr::from_undirected(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    }

    #[test]
    fn drnl_hand_values() {
        assert_eq!(drnl_label(Some(1), Some(1), 10), 2);
        assert_eq!(drnl_label(Some(1), Some(2), 10), 3);
        assert_eq!(drnl_label(Some(0), Some(3), 10), 1);
        assert_eq!(drnl_label(Some(2), None, 10), 0);
        assert_eq!(drnl_label(Some(5), Some(5), 10), 10);
    }

    #[test]
    fn density_budget() {
        assert_eq!(density_size(10, 15), 14);
        assert_eq!(density_size(10, 0), 10);
        assert_eq!(density_size(1, 0), 1);
    }

    #[test]
    fn relevance_of_common_neighbor() {
        let third = [1.0 / 3.0; 3];
        let f = relevance_score(third, &Matrix::identity(3), third, Some(1), Some(1));
        assert!((f - 1.0 / 9.0).abs() < 1e-15);
        let far = relevance_score(third, &Matrix::identity(3), third, Some(2), Some(2));
        assert!(far < f);
        assert_eq!(relevance_score(third, &Matrix::identity(3), third, None, Some(1)), 0.0);
    }

    #[test]
    fn top_m_keeps_centers_and_breaks_ties_by_id() {
        let scored = [(0, 0.0), (9, 0.0), (4, 0.5), (2, 0.5), (7, 0.9)];
        assert_eq!(select_top_m(&scored, (0, 9), 4), vec![0, 2, 7, 9]);
        assert_eq!(select_top_m(&scored, (0, 9), 2), vec![0, 9]);
    }

    #[test]
    fn four_cycle_subgraph() {
        let sub = extract_subgraph(&cycle4(), 0, 2, &ExtractorConfig::default(), None).unwrap();
        assert_eq!(sub.nodes, vec![0, 1, 2, 3]);
        assert_eq!(sub.labels, vec![1, 2, 1, 2]);
        assert_eq!(sub.adj.num_edges(), 4);
    }

    #[test]
    fn candidate_edge_is_left_out() {
        let g = Csr::from_undirected(3, [(0, 1), (1, 2), (0, 2)]);
        let sub = extract_subgraph(&g, 0, 1, &ExtractorConfig::default(), None).unwrap();
        assert!(!sub.adj.has_edge(sub.center_u, sub.center_v));
        assert_eq!(sub.adj.num_edges(), 2);
    }

    #[test]
    fn one_hot_rows() {
        let sub = extract_subgraph(&cycle4(), 0, 2, &ExtractorConfig::default(), None).unwrap();
        let x = sub.input_features(&Matrix::filled(4, 2, 7.0), 10);
        assert_eq!(x.shape(), (4, 13));
        assert_eq!(x.row(1)[2 + 2], 1.0);
        assert_eq!(x.row(0)[..3], [7.0, 7.0, 0.0]);
    }

    #[test]
    fn candidate_counts_follow_ratio() {
        // v_s = 0 with neighbors 1..=4, v_t = 5 with neighbors 6..=9
        let edges: Vec<_> = (1..5).map(|i| (0, i)).chain((6..10).map(|i| (5, i))).collect();
        let g = Csr::from_undirected(12, edges);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pair = NodePair { v_s: 0, v_t: 5 };
        let c = sample_candidate_edges(&g, &[pair], &[12], 0.3, &mut rng).unwrap();
        assert_eq!(c.len(), 3);
        let all = sample_candidate_edges(&g, &[pair], &[12], 1.0, &mut rng).unwrap();
        assert_eq!(all.iter().map(|c| c.target).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
        let iso = NodePair { v_s: 10, v_t: 11 };
        let c = sample_candidate_edges(&g, &[iso], &[12], 0.3, &mut rng).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].target == 10 || c[0].target == 11);
    }

    #[test]
    fn attached_nodes_get_anchor_edges() {
        let g = attach_nodes(&cycle4(), &[vec![0, 2], vec![3, 3]]);
        assert_eq!(g.num_nodes(), 6);
        assert_eq!(g.neighbors(4), &[0, 2]);
        assert_eq!(g.neighbors(5), &[3]);
    }
}
