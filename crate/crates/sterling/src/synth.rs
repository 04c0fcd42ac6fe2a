//! Synthetic bipartite graphs with planted block structure, used as
//! recoverable ground truth in tests and diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bigraph::BipartiteGraph;

/// A generated graph together with the planted block label of every node.
pub struct PlantedGraph {
    pub graph: BipartiteGraph,
    pub labels_u: Vec<usize>,
    pub labels_v: Vec<usize>,
}

/// Two-block planted partition: the first half of each side belongs to
/// block 0, the second half to block 1. Each (u, v) pair is connected with
/// probability `p_in` when the blocks match and `p_cross` otherwise.
///
/// Any node left isolated by the coin flips is attached to one random
/// partner inside its own block, so the labels stay the ground truth while
/// the graph is guaranteed to have no empty neighborhoods.
pub fn planted_two_block(
    n_u: usize,
    n_v: usize,
    p_in: f64,
    p_cross: f64,
    seed: u64,
) -> PlantedGraph {
    assert!(n_u >= 2 && n_v >= 2, "need at least one node per block per side");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels_u: Vec<usize> = (0..n_u).map(|i| usize::from(i >= n_u / 2)).collect();
    let labels_v: Vec<usize> = (0..n_v).map(|i| usize::from(i >= n_v / 2)).collect();

    let mut edges = Vec::new();
    for u in 0..n_u {
        for v in 0..n_v {
            let p = if labels_u[u] == labels_v[v] { p_in } else { p_cross };
            if rng.gen_bool(p) {
                edges.push((u as u32, v as u32));
            }
        }
    }

    let mut deg_u = vec![0usize; n_u];
    let mut deg_v = vec![0usize; n_v];
    for &(u, v) in &edges {
        deg_u[u as usize] += 1;
        deg_v[v as usize] += 1;
    }
    for u in 0..n_u {
        if deg_u[u] == 0 {
            let block: Vec<u32> = (0..n_v as u32)
                .filter(|&v| labels_v[v as usize] == labels_u[u])
                .collect();
            let v = block[rng.gen_range(0..block.len())];
            edges.push((u as u32, v));
            deg_v[v as usize] += 1;
        }
    }
    for v in 0..n_v {
        if deg_v[v] == 0 {
            let block: Vec<u32> = (0..n_u as u32)
                .filter(|&u| labels_u[u as usize] == labels_v[v])
                .collect();
            let u = block[rng.gen_range(0..block.len())];
            edges.push((u, v as u32));
        }
    }

    PlantedGraph {
        graph: BipartiteGraph::from_edges(n_u, n_v, edges),
        labels_u,
        labels_v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_graph_is_reproducible_and_connected() {
        let a = planted_two_block(40, 40, 0.5, 0.05, 7);
        let b = planted_two_block(40, 40, 0.5, 0.05, 7);
        assert_eq!(a.graph.edges(), b.graph.edges());
        assert!(a.graph.degrees(crate::bigraph::Side::U).iter().all(|&d| d > 0));
        assert!(a.graph.degrees(crate::bigraph::Side::V).iter().all(|&d| d > 0));
        assert_eq!(a.labels_u.iter().filter(|&&l| l == 0).count(), 20);
    }

    #[test]
    fn block_structure_dominates() {
        let g = planted_two_block(40, 40, 0.5, 0.05, 3);
        let (mut within, mut cross) = (0usize, 0usize);
        for &(u, v) in g.graph.edges() {
            if g.labels_u[u as usize] == g.labels_v[v as usize] {
                within += 1;
            } else {
                cross += 1;
            }
        }
        // expectation: within ≈ 0.5·800 = 400, cross ≈ 0.05·800 = 40
        assert!(within > 5 * cross, "within={within} cross={cross}");
    }
}
