//! Bipartite graph model, edge-list ingestion, and structural indices.
//!
//! A graph holds two disjoint node sets U and V with undirected edges only
//! between the sides. On top of it this module computes the inverse-log
//! Adamic-Adar affinity between same-side nodes, n-hop metapath adjacency
//! (alternating-walk counts), and the candidate index used to mine k-NN
//! positive pairs during training.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::diff::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum BigraphError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("`{path}` contains no edges")]
    EmptyGraph { path: String },
    #[error("node {node} paired with itself")]
    SelfPair { node: usize },
    #[error("metapath hop count must be at least 1")]
    ZeroHops,
}

/// Which partition of the bipartite graph a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    U,
    V,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::U => Side::V,
            Side::V => Side::U,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::U => write!(f, "U"),
            Side::V => write!(f, "V"),
        }
    }
}

/// Undirected bipartite graph with contiguous 0-based indices on each side.
/// Immutable after construction; adjacency lists are sorted ascending and
/// shared behind `Arc` so they can be attached to autodiff ops cheaply.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    n_u: usize,
    n_v: usize,
    edges: Vec<(u32, u32)>,
    adj_u: Arc<Vec<Vec<u32>>>,
    adj_v: Arc<Vec<Vec<u32>>>,
    deg_u: Vec<u32>,
    deg_v: Vec<u32>,
}

impl BipartiteGraph {
    /// Build from an edge list. Duplicate pairs collapse to a single edge.
    pub fn from_edges(n_u: usize, n_v: usize, mut edges: Vec<(u32, u32)>) -> Self {
        for &(u, v) in &edges {
            assert!((u as usize) < n_u, "u index {u} out of range (n_u={n_u})");
            assert!((v as usize) < n_v, "v index {v} out of range (n_v={n_v})");
        }
        edges.sort_unstable();
        edges.dedup();
        let mut adj_u = vec![Vec::new(); n_u];
        let mut adj_v = vec![Vec::new(); n_v];
        for &(u, v) in &edges {
            adj_u[u as usize].push(v);
            adj_v[v as usize].push(u);
        }
        // edges are sorted by (u,v) so adj_u is already ascending; adj_v needs a sort
        for list in adj_v.iter_mut() {
            list.sort_unstable();
        }
        let deg_u = adj_u.iter().map(|l| l.len() as u32).collect();
        let deg_v = adj_v.iter().map(|l| l.len() as u32).collect();
        BipartiteGraph {
            n_u,
            n_v,
            edges,
            adj_u: Arc::new(adj_u),
            adj_v: Arc::new(adj_v),
            deg_u,
            deg_v,
        }
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn n(&self, side: Side) -> usize {
        match side {
            Side::U => self.n_u,
            Side::V => self.n_v,
        }
    }

    /// Edges as (u, v) pairs, sorted ascending.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Adjacency lists of the given side (neighbors live on the other side).
    pub fn adj(&self, side: Side) -> &Arc<Vec<Vec<u32>>> {
        match side {
            Side::U => &self.adj_u,
            Side::V => &self.adj_v,
        }
    }

    pub fn degrees(&self, side: Side) -> &[u32] {
        match side {
            Side::U => &self.deg_u,
            Side::V => &self.deg_v,
        }
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adj_u[u as usize].binary_search(&v).is_ok()
    }

    /// Dense binary biadjacency matrix B with B[u][v] = 1 iff (u,v) is an edge.
    pub fn biadjacency<S: Scalar>(&self) -> Tensor<S> {
        let mut b = Tensor::zeros(self.n_u, self.n_v);
        for &(u, v) in &self.edges {
            b.set(u as usize, v as usize, S::one());
        }
        b
    }
}

/// Mapping between raw string ids and contiguous indices, per side.
#[derive(Debug, Clone, Default)]
pub struct IdMap {
    u_ids: Vec<String>,
    v_ids: Vec<String>,
    u_index: HashMap<String, u32>,
    v_index: HashMap<String, u32>,
}

impl IdMap {
    fn intern(&mut self, side: Side, raw: &str) -> u32 {
        let (ids, index) = match side {
            Side::U => (&mut self.u_ids, &mut self.u_index),
            Side::V => (&mut self.v_ids, &mut self.v_index),
        };
        if let Some(&i) = index.get(raw) {
            return i;
        }
        let i = ids.len() as u32;
        ids.push(raw.to_string());
        index.insert(raw.to_string(), i);
        i
    }

    pub fn len(&self, side: Side) -> usize {
        match side {
            Side::U => self.u_ids.len(),
            Side::V => self.v_ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.u_ids.is_empty() && self.v_ids.is_empty()
    }

    pub fn raw(&self, side: Side, index: u32) -> &str {
        match side {
            Side::U => &self.u_ids[index as usize],
            Side::V => &self.v_ids[index as usize],
        }
    }

    pub fn lookup(&self, side: Side, raw: &str) -> Option<u32> {
        match side {
            Side::U => self.u_index.get(raw).copied(),
            Side::V => self.v_index.get(raw).copied(),
        }
    }

    /// Write the sidecar table: `raw_id <TAB> index <TAB> side` per line.
    pub fn write_tsv(&self, path: &Path) -> Result<(), BigraphError> {
        let mut out = String::new();
        for (i, raw) in self.u_ids.iter().enumerate() {
            out.push_str(&format!("{raw}\t{i}\tU\n"));
        }
        for (i, raw) in self.v_ids.iter().enumerate() {
            out.push_str(&format!("{raw}\t{i}\tV\n"));
        }
        fs::write(path, out).map_err(|source| BigraphError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_tsv(path: &Path) -> Result<Self, BigraphError> {
        let text = fs::read_to_string(path).map_err(|source| BigraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut ids = IdMap::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (raw, idx, side) = match (parts.next(), parts.next(), parts.next()) {
                (Some(r), Some(i), Some(s)) => (r, i, s),
                _ => {
                    return Err(BigraphError::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        msg: "expected `raw_id <TAB> index <TAB> side`".into(),
                    })
                }
            };
            let side = match side {
                "U" => Side::U,
                "V" => Side::V,
                other => {
                    return Err(BigraphError::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        msg: format!("unknown side `{other}`"),
                    })
                }
            };
            let expect: u32 = idx.parse().map_err(|_| BigraphError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad index `{idx}`"),
            })?;
            let got = ids.intern(side, raw);
            if got != expect {
                return Err(BigraphError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("index {expect} out of order (expected {got})"),
                });
            }
        }
        Ok(ids)
    }

    /// Map an edge file through this (frozen) id table. Pairs mentioning an
    /// unknown id are skipped; the second value counts them. Used for test
    /// splits that must share the training id space.
    pub fn map_edge_file(
        &self,
        path: &Path,
        has_weights: bool,
    ) -> Result<(Vec<(u32, u32)>, usize), BigraphError> {
        let mut pairs = Vec::new();
        let mut skipped = 0usize;
        parse_edge_lines(path, has_weights, |u_raw, v_raw| {
            match (self.lookup(Side::U, u_raw), self.lookup(Side::V, v_raw)) {
                (Some(u), Some(v)) => pairs.push((u, v)),
                _ => skipped += 1,
            }
        })?;
        Ok((pairs, skipped))
    }
}

/// Parse a TSV edge list, calling `sink(u_raw, v_raw)` for every kept edge.
/// Lines are `u_id <TAB> v_id [<TAB> weight [<TAB> extra…]]`; when weights
/// are expected, a non-positive weight drops the line (binarization) and
/// trailing extra fields (timestamps and the like) are ignored.
fn parse_edge_lines(
    path: &Path,
    has_weights: bool,
    mut sink: impl FnMut(&str, &str),
) -> Result<(), BigraphError> {
    let text = fs::read_to_string(path).map_err(|source| BigraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parse_err = |line: usize, msg: String| BigraphError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let u_raw = parts.next().filter(|s| !s.is_empty());
        let v_raw = parts.next().filter(|s| !s.is_empty());
        let (u_raw, v_raw) = match (u_raw, v_raw) {
            (Some(u), Some(v)) => (u, v),
            _ => {
                return Err(parse_err(
                    lineno + 1,
                    "expected `u_id <TAB> v_id`".to_string(),
                ))
            }
        };
        if has_weights {
            let w = parts
                .next()
                .ok_or_else(|| parse_err(lineno + 1, "missing weight field".to_string()))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno + 1, format!("bad weight `{w}`")))?;
            if w <= 0.0 {
                continue;
            }
        }
        sink(u_raw, v_raw);
    }
    Ok(())
}

/// Read a TSV edge list into a graph plus the raw-id table. Raw ids are
/// assigned contiguous indices in first-appearance order; duplicate edges
/// collapse; with `has_weights`, any positive weight becomes an edge.
pub fn ingest_edge_list(
    path: &Path,
    has_weights: bool,
) -> Result<(BipartiteGraph, IdMap), BigraphError> {
    let mut ids = IdMap::default();
    let mut edges = Vec::new();
    parse_edge_lines(path, has_weights, |u_raw, v_raw| {
        let u = ids.intern(Side::U, u_raw);
        let v = ids.intern(Side::V, v_raw);
        edges.push((u, v));
    })?;
    if edges.is_empty() {
        return Err(BigraphError::EmptyGraph {
            path: path.display().to_string(),
        });
    }
    let graph = BipartiteGraph::from_edges(ids.len(Side::U), ids.len(Side::V), edges);
    Ok((graph, ids))
}

/// Degree clamped to 2 so an inverse-log weight is always finite and the
/// "rarer is more informative" ordering is preserved for degree-1 hubs.
#[inline]
fn inv_log_degree(deg: u32) -> f64 {
    1.0 / f64::from(deg.max(2)).ln()
}

/// Adamic-Adar affinity between two distinct same-side nodes: the sum of
/// 1/ln(d) over shared cross-side neighbors, with degrees clamped to 2.
pub fn adamic_adar(
    g: &BipartiteGraph,
    side: Side,
    a: u32,
    b: u32,
) -> Result<f64, BigraphError> {
    if a == b {
        return Err(BigraphError::SelfPair { node: a as usize });
    }
    let adj = g.adj(side);
    let deg_other = g.degrees(side.other());
    let (la, lb) = (&adj[a as usize], &adj[b as usize]);
    // merge intersection of two ascending lists; addition order is ascending
    // in the shared neighbor, which keeps scores bitwise symmetric in (a,b)
    let mut score = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < la.len() && j < lb.len() {
        match la[i].cmp(&lb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                score += inv_log_degree(deg_other[la[i] as usize]);
                i += 1;
                j += 1;
            }
        }
    }
    Ok(score)
}

/// n-hop metapath adjacency: alternating-walk counts (B·Bᵀ)^{n−1}·B.
#[derive(Debug, Clone)]
pub struct MetaAdjacency {
    pub hops: usize,
    pub matrix: Tensor<f64>,
}

/// Count length-(2n−1) alternating U→V walks between every (u, v) pair.
/// The Gram product is taken on the smaller side; the two associations
/// (B·Bᵀ)^{n−1}·B and B·(BᵀB)^{n−1} agree exactly because walk counts are
/// integers. With `binarize`, positive counts collapse to 1.
pub fn metapath_adjacency(
    g: &BipartiteGraph,
    hops: usize,
    binarize: bool,
) -> Result<MetaAdjacency, BigraphError> {
    if hops == 0 {
        return Err(BigraphError::ZeroHops);
    }
    let b: Tensor<f64> = g.biadjacency();
    let mut matrix = if hops == 1 {
        b
    } else if g.n_u() <= g.n_v() {
        let gram = b.matmul_nt(&b); // B·Bᵀ, |U|×|U|
        let mut acc = gram.clone();
        for _ in 2..hops {
            acc = acc.matmul(&gram);
        }
        acc.matmul(&b)
    } else {
        let gram = b.matmul_tn(&b); // BᵀB, |V|×|V|
        let mut acc = gram.clone();
        for _ in 2..hops {
            acc = acc.matmul(&gram);
        }
        b.matmul(&acc)
    };
    if binarize {
        matrix = matrix.map(|x| if x > 0.0 { 1.0 } else { 0.0 });
    }
    Ok(MetaAdjacency { hops, matrix })
}

/// Per-node candidate lists for k-NN mining: every same-side peer reachable
/// in two hops, with its (positive) Adamic-Adar score. Peers outside two
/// hops score zero under the combined similarity and can never enter the
/// top-k, so the index stays sparse without changing results.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    pub side: Side,
    /// For each node, ascending-index list of (peer, s_aa) with s_aa > 0.
    pub aa_pairs: Vec<Vec<(u32, f64)>>,
    pub n_knn: usize,
}

pub fn build_neighbor_index(g: &BipartiteGraph, side: Side, n_knn: usize) -> NeighborIndex {
    assert!(n_knn >= 1, "n_knn must be at least 1");
    let n = g.n(side);
    let adj = g.adj(side);
    let adj_other = g.adj(side.other());
    let deg_other = g.degrees(side.other());
    let mut aa_pairs = Vec::with_capacity(n);
    let mut score = vec![0.0f64; n];
    let mut touched = Vec::new();
    for a in 0..n {
        // shared-neighbor sums accumulate in ascending cross-node order,
        // matching adamic_adar exactly
        for &v in &adj[a] {
            let w = inv_log_degree(deg_other[v as usize]);
            for &peer in &adj_other[v as usize] {
                let p = peer as usize;
                if p == a {
                    continue;
                }
                if score[p] == 0.0 {
                    touched.push(peer);
                }
                score[p] += w;
            }
        }
        touched.sort_unstable();
        let pairs = touched
            .iter()
            .map(|&p| (p, score[p as usize]))
            .collect::<Vec<_>>();
        for &p in &touched {
            score[p as usize] = 0.0;
        }
        touched.clear();
        aa_pairs.push(pairs);
    }
    NeighborIndex { side, aa_pairs, n_knn }
}

/// Which factors of the combined similarity s_aa·cos(a_θ, b_φ) participate
/// in neighbor ranking. Used by component-removal experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMode {
    /// Structural × embedding similarity (the default).
    Product,
    /// Structure only: the embedding factor is treated as 1.
    StructureOnly,
    /// Embedding only: the structural factor is treated as 1.
    EmbeddingOnly,
}

fn cosine_f64<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.as_f64(), y.as_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt()).max(crate::diff::EPS)
}

/// Top-k peers of `node` by combined similarity: the online embedding of the
/// node against the target embedding of each candidate, weighted by the
/// structural score. Ties break toward the lower index; returns fewer than
/// `n_knn` when candidates are scarce.
pub fn select_knn<S: Scalar>(
    index: &NeighborIndex,
    node: u32,
    emb_online: &Tensor<S>,
    emb_target: &Tensor<S>,
    n_knn: usize,
) -> Vec<u32> {
    select_knn_with(index, node, emb_online, emb_target, n_knn, SimilarityMode::Product)
}

pub fn select_knn_with<S: Scalar>(
    index: &NeighborIndex,
    node: u32,
    emb_online: &Tensor<S>,
    emb_target: &Tensor<S>,
    n_knn: usize,
    mode: SimilarityMode,
) -> Vec<u32> {
    assert_eq!(
        emb_online.rows(),
        index.aa_pairs.len(),
        "online embedding rows must match side size"
    );
    assert_eq!(
        emb_target.rows(),
        index.aa_pairs.len(),
        "target embedding rows must match side size"
    );
    let candidates = &index.aa_pairs[node as usize];
    let anchor = emb_online.row(node as usize);
    let mut scored: Vec<(f64, u32)> = candidates
        .iter()
        .map(|&(peer, s_aa)| {
            let s = match mode {
                SimilarityMode::Product => {
                    s_aa * cosine_f64(anchor, emb_target.row(peer as usize))
                }
                SimilarityMode::StructureOnly => s_aa,
                SimilarityMode::EmbeddingOnly => {
                    cosine_f64(anchor, emb_target.row(peer as usize))
                }
            };
            (s, peer)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(n_knn);
    scored.into_iter().map(|(_, p)| p).collect()
}

/// `select_knn` for every node of the side at once.
pub fn select_knn_batch<S: Scalar>(
    index: &NeighborIndex,
    emb_online: &Tensor<S>,
    emb_target: &Tensor<S>,
    n_knn: usize,
    mode: SimilarityMode,
) -> Vec<Vec<u32>> {
    use rayon::prelude::*;
    (0..index.aa_pairs.len() as u32)
        .into_par_iter()
        .map(|node| select_knn_with(index, node, emb_online, emb_target, n_knn, mode))
        .collect()
}
