use super::Graph;
use crate::error::Result;

/// Fraction of undirected edges whose endpoints share a label.
/// An edgeless graph scores 0.
pub fn edge_homophily(g: &Graph) -> Result<f64> {
    let labels = g.labels()?;
    let (mut same, mut total) = (0usize, 0usize);
    for (u, v) in g.adj().edges() {
        total += 1;
        if labels[u] == labels[v] {
            same += 1;
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    })
}

/// Mean over nodes of the same-label fraction of each node's neighbors.
/// Isolated nodes contribute 0.
pub fn node_homophily(g: &Graph) -> Result<f64> {
    let labels = g.labels()?;
    let n = g.num_nodes();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = (0..n)
        .map(|v| {
            let nbrs = g.neighbors(v);
            if nbrs.is_empty() {
                0.0
            } else {
                let same = nbrs.iter().filter(|&&u| labels[u] == labels[v]).count();
                same as f64 / nbrs.len() as f64
            }
        })
        .sum();
    Ok(sum / n as f64)
}
