use std::collections::VecDeque;

/// Undirected adjacency in compressed sparse row form. Every edge is stored
/// in both directions, neighbor runs are sorted, and there are no self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    /// Symmetrizes, deduplicates and drops self-loops. Endpoints must be `< n`.
    pub fn from_undirected<I>(n: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (u, v) in edges {
            debug_assert!(u < n && v < n);
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &pairs {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.into_iter().map(|(_, v)| v).collect();
        Self { offsets, targets }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Unweighted shortest-path lengths from `source`. Entries beyond `cutoff`
    /// hops or unreachable are `None`.
    pub fn bfs(&self, source: usize, cutoff: Option<usize>) -> Vec<Option<usize>> {
        self.bfs_without(source, cutoff, None)
    }

    /// Like [`Csr::bfs`] but treats the undirected edge `skip` as absent.
    pub fn bfs_without(
        &self,
        source: usize,
        cutoff: Option<usize>,
        skip: Option<(usize, usize)>,
    ) -> Vec<Option<usize>> {
        let n = self.num_nodes();
        let mut dist = vec![None; n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        let is_skipped = |a: usize, b: usize| {
            skip.is_some_and(|(x, y)| (a == x && b == y) || (a == y && b == x))
        };
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            if cutoff.is_some_and(|c| du >= c) {
                continue;
            }
            for &v in self.neighbors(u) {
                if dist[v].is_none() && !is_skipped(u, v) {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Nodes within `h` hops of `center`, the center included, sorted ascending.
    pub fn k_hop(&self, center: usize, h: usize) -> Vec<usize> {
        self.bfs(center, Some(h))
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|_| i))
            .collect()
    }

    /// Induced subgraph on `nodes` (local index = position in `nodes`),
    /// optionally leaving out one global edge.
    pub fn induced(&self, nodes: &[usize], skip: Option<(usize, usize)>) -> Csr {
        let mut local = std::collections::HashMap::with_capacity(nodes.len());
        for (i, &g) in nodes.iter().enumerate() {
            local.insert(g, i);
        }
        let mut edges = Vec::new();
        for (i, &g) in nodes.iter().enumerate() {
            for &nb in self.neighbors(g) {
                if let Some(&j) = local.get(&nb) {
                    let skipped =
                        skip.is_some_and(|(a, b)| (g == a && nb == b) || (g == b && nb == a));
                    if i < j && !skipped {
                        edges.push((i, j));
                    }
                }
            }
        }
        Csr::from_undirected(nodes.len(), edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Csr {
        Csr::from_undirected(n, (0..n - 1).map(|i| (i, i + 1)))
    }

    #[test]
    fn dedup_and_self_loops() {
        let g = Csr::from_undirected(2, [(0, 1), (1, 0), (1, 1)]);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn path_degrees_and_distances() {
        let g = path(3);
        assert_eq!((0..3).map(|u| g.degree(u)).collect::<Vec<_>>(), vec![1, 2, 1]);
        let d = g.bfs(0, None);
        assert_eq!(d, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(g.bfs(0, Some(1))[2], None);
    }

    #[test]
    fn k_hop_includes_center() {
        let g = path(4);
        assert_eq!(g.k_hop(0, 2), vec![0, 1, 2]);
        let iso = Csr::from_undirected(3, [(1, 2)]);
        assert_eq!(iso.k_hop(0, 5), vec![0]);
    }

    #[test]
    fn skipped_edge_is_not_traversed() {
        // 4-cycle 0-1-2-3-0
        let g = Csr::from_undirected(4, [(0, 1), (1, 2), (2, 3), (3, 0)]);
        let d = g.bfs_without(0, None, Some((1, 0)));
        assert_eq!(d[1], Some(3));
    }

    #[test]
    fn induced_subgraph_drops_skipped_edge() {
        let g = Csr::from_undirected(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]);
        let sub = g.induced(&[2, 0, 1], Some((0, 2)));
        assert_eq!(sub.num_edges(), 2);
        assert!(!sub.has_edge(0, 1));
        assert!(sub.has_edge(1, 2) && sub.has_edge(0, 2));
    }
}
