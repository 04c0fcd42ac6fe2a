//! Loss terms: bootstrap losses over edges and mined neighbors, the learned
//! joint node distribution, the co-cluster joint distribution, and the
//! mutual-information global loss.
//!
//! Every builder here records onto a [`Tape`] and returns the node of a
//! scalar (or matrix) so a single backward pass covers the whole step.
//! Target-side (φ) inputs are expected to be bound as constants; nothing in
//! this module distinguishes the sides beyond that.

use std::sync::Arc;

use crate::diff::{NodeId, Tape, Tensor, EPS};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("edge batch is empty")]
    EmptyBatch,
    #[error(
        "joint node distribution is degenerate (Z = {z:.3e}); every entry was filtered out — lower alpha"
    )]
    Degenerate { z: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Coefficients of the combined local objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub lambda_uv: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_uv: 1.0,
            lambda_u: 1.0,
            lambda_v: 1.0,
        }
    }
}

/// Activation applied to the cross-embedding products of
/// [`embedding_adjacency`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaKind {
    Abs,
    Relu,
}

/// How the learned adjacency is post-processed.
#[derive(Debug, Clone, Copy)]
pub struct AdjacencyOptions {
    pub delta: DeltaKind,
    /// Noise filter: drop entries below mean + alpha·std. `None` disables.
    pub filter_alpha: Option<f64>,
}

impl Default for AdjacencyOptions {
    fn default() -> Self {
        AdjacencyOptions {
            delta: DeltaKind::Abs,
            filter_alpha: Some(0.0),
        }
    }
}

/// Inter-type bootstrap loss over connected pairs: the mean over edges of
/// −[cos(ũ_θ, v_φ) + cos(ṽ_θ, u_φ)]. Inputs are the full per-side matrices
/// (projected online, raw target); `edges` indexes the paired rows.
pub fn loss_uv<S: Scalar>(
    tape: &mut Tape<S>,
    u_proj_theta: NodeId,
    v_proj_theta: NodeId,
    u_phi: NodeId,
    v_phi: NodeId,
    edges: &[(u32, u32)],
) -> Result<NodeId, ObjectiveError> {
    if edges.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let iu: Arc<Vec<u32>> = Arc::new(edges.iter().map(|&(u, _)| u).collect());
    let iv: Arc<Vec<u32>> = Arc::new(edges.iter().map(|&(_, v)| v).collect());
    let c_uv = tape.cosine_pairs(u_proj_theta, v_phi, iu.clone(), iv.clone());
    let c_vu = tape.cosine_pairs(v_proj_theta, u_phi, iv, iu);
    let s = tape.add(c_uv, c_vu);
    let m = tape.mean_all(s);
    Ok(tape.scale(m, -S::one()))
}

/// Intra-type bootstrap loss for one side: the mean over all nodes of
/// −(1/n_knn)·Σ_{p ∈ knn(a)} [cos(ã_θ, p_φ) + cos(p̃_θ, a_φ)]. Nodes with an
/// empty neighbor list contribute zero. `knn[a]` lists the mined peers of
/// node `a`; the divisor is the configured n_knn even when fewer peers exist.
pub fn loss_intra<S: Scalar>(
    tape: &mut Tape<S>,
    proj_theta: NodeId,
    emb_phi: NodeId,
    knn: &[Vec<u32>],
    n_knn: usize,
) -> NodeId {
    assert!(n_knn >= 1, "n_knn must be at least 1");
    let n_nodes = knn.len();
    assert_eq!(
        tape.value(proj_theta).rows(),
        n_nodes,
        "knn list length must match side size"
    );
    let mut anchors = Vec::new();
    let mut peers = Vec::new();
    for (a, list) in knn.iter().enumerate() {
        for &p in list {
            anchors.push(a as u32);
            peers.push(p);
        }
    }
    if anchors.is_empty() {
        return tape.constant(Tensor::scalar(S::zero()));
    }
    let anchors: Arc<Vec<u32>> = Arc::new(anchors);
    let peers: Arc<Vec<u32>> = Arc::new(peers);
    let c_ap = tape.cosine_pairs(proj_theta, emb_phi, anchors.clone(), peers.clone());
    let c_pa = tape.cosine_pairs(proj_theta, emb_phi, peers, anchors);
    let s = tape.add(c_ap, c_pa);
    let total = tape.sum_all(s);
    let norm = -S::one() / S::from_f64((n_nodes * n_knn) as f64);
    tape.scale(total, norm)
}

/// λ_uv·L_uv + λ_u·L_u + λ_v·L_v.
pub fn loss_local<S: Scalar>(
    tape: &mut Tape<S>,
    l_uv: NodeId,
    l_u: NodeId,
    l_v: NodeId,
    w: &LossWeights,
) -> NodeId {
    let a = tape.scale(l_uv, S::from_f64(w.lambda_uv));
    let b = tape.scale(l_u, S::from_f64(w.lambda_u));
    let c = tape.scale(l_v, S::from_f64(w.lambda_v));
    let ab = tape.add(a, b);
    tape.add(ab, c)
}

/// Embedding-derived adjacency: ½[δ(U_θ·V_φᵀ) + δ(U_φ·V_θᵀ)], optionally
/// followed by the noise filter that zeroes entries below mean + alpha·std.
/// The filter threshold is a frozen statistic of the forward values.
pub fn embedding_adjacency<S: Scalar>(
    tape: &mut Tape<S>,
    u_theta: NodeId,
    v_theta: NodeId,
    u_phi: NodeId,
    v_phi: NodeId,
    opts: &AdjacencyOptions,
) -> NodeId {
    let v_phi_t = tape.transpose(v_phi);
    let v_theta_t = tape.transpose(v_theta);
    let cross_a = tape.matmul(u_theta, v_phi_t);
    let cross_b = tape.matmul(u_phi, v_theta_t);
    let (da, db) = match opts.delta {
        DeltaKind::Abs => (tape.abs(cross_a), tape.abs(cross_b)),
        DeltaKind::Relu => (tape.relu(cross_a), tape.relu(cross_b)),
    };
    let sum = tape.add(da, db);
    let a_emb = tape.scale(sum, S::from_f64(0.5));
    match opts.filter_alpha {
        Some(alpha) => tape.filter_below_mean_std(a_emb, S::from_f64(alpha)),
        None => a_emb,
    }
}

/// Tape nodes of the learned joint node distribution p(u,v) and its
/// normalizer Z.
#[derive(Debug, Clone, Copy)]
pub struct JointNodeNodes {
    pub p: NodeId,
    pub z: NodeId,
}

/// p(u,v) = (A_meta ⊙ A_emb)/Z with Z the total sum. The structural prior
/// `a_meta` should be bound as a constant; gradients flow through `a_emb`.
pub fn joint_node_distribution<S: Scalar>(
    tape: &mut Tape<S>,
    a_meta: NodeId,
    a_emb: NodeId,
) -> Result<JointNodeNodes, ObjectiveError> {
    if tape.value(a_meta).shape() != tape.value(a_emb).shape() {
        return Err(ObjectiveError::Shape(format!(
            "A_meta {:?} vs A_emb {:?}",
            tape.value(a_meta).shape(),
            tape.value(a_emb).shape()
        )));
    }
    let m = tape.hadamard(a_meta, a_emb);
    let z = tape.sum_all(m);
    let zv = tape.value(z).item().as_f64();
    if !(zv > EPS) {
        return Err(ObjectiveError::Degenerate { z: zv });
    }
    let p = tape.div_scalar(m, z);
    Ok(JointNodeNodes { p, z })
}

/// p(k,l) = Σ_{u,v} p(k|u)·p(u,v)·p(l|v), computed as Pᵤᵀ·P·Pᵥ.
pub fn joint_cluster_distribution<S: Scalar>(
    tape: &mut Tape<S>,
    p_k_given_u: NodeId,
    p_l_given_v: NodeId,
    p_uv: NodeId,
) -> Result<NodeId, ObjectiveError> {
    let (nu, _k) = tape.value(p_k_given_u).shape();
    let (nv, _l) = tape.value(p_l_given_v).shape();
    if tape.value(p_uv).shape() != (nu, nv) {
        return Err(ObjectiveError::Shape(format!(
            "p(u,v) is {:?}, expected ({nu}, {nv})",
            tape.value(p_uv).shape()
        )));
    }
    let put = tape.transpose(p_k_given_u);
    let left = tape.matmul(put, p_uv);
    Ok(tape.matmul(left, p_l_given_v))
}

/// Mutual information of a joint cluster matrix on the tape:
/// I = Σ p(k,l)·[ln p(k,l) − ln(p(k)p(l))], natural log, ε-guarded.
/// Marginals are taken inside, so `p_kl` rows/columns need not be handed in.
pub fn mutual_information_node<S: Scalar>(tape: &mut Tape<S>, p_kl: NodeId) -> NodeId {
    let (k, l) = tape.value(p_kl).shape();
    let ones_col = tape.constant(Tensor::filled(l, 1, S::one()));
    let ones_row = tape.constant(Tensor::filled(1, k, S::one()));
    let pk = tape.matmul(p_kl, ones_col); // (K,1)
    let pl = tape.matmul(ones_row, p_kl); // (1,L)
    let outer = tape.matmul(pk, pl); // (K,L) product of marginals
    let log_p = tape.log_guard(p_kl);
    let log_o = tape.log_guard(outer);
    let diff = tape.sub(log_p, log_o);
    let integrand = tape.hadamard(p_kl, diff);
    tape.sum_all(integrand)
}

/// L = L_loc + L_glb.
pub fn loss_total<S: Scalar>(tape: &mut Tape<S>, local: NodeId, global: NodeId) -> NodeId {
    tape.add(local, global)
}

/// Materialized co-cluster joint with its marginals; the value-level twin of
/// [`joint_cluster_distribution`] used by evaluation and diagnostics.
#[derive(Debug, Clone)]
pub struct JointClusterDistribution {
    pub joint: Tensor<f64>,
    pub marg_k: Vec<f64>,
    pub marg_l: Vec<f64>,
}

impl JointClusterDistribution {
    /// Wrap a joint matrix, computing marginals by row/column sums.
    pub fn from_joint(joint: Tensor<f64>) -> Self {
        let (k, l) = joint.shape();
        let mut marg_k = vec![0.0; k];
        let mut marg_l = vec![0.0; l];
        for r in 0..k {
            for c in 0..l {
                let p = joint.get(r, c);
                marg_k[r] += p;
                marg_l[c] += p;
            }
        }
        JointClusterDistribution { joint, marg_k, marg_l }
    }

    pub fn total(&self) -> f64 {
        self.joint.sum()
    }
}

/// Mutual information of a materialized joint, natural log, with 0·log 0 = 0.
pub fn mutual_information(d: &JointClusterDistribution) -> f64 {
    let (k, l) = d.joint.shape();
    let mut mi = 0.0;
    for r in 0..k {
        for c in 0..l {
            let p = d.joint.get(r, c);
            if p <= 0.0 {
                continue;
            }
            let denom = (d.marg_k[r] * d.marg_l[c]).max(EPS);
            mi += p * (p.max(EPS) / denom).ln();
        }
    }
    mi
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
        Tensor::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb).max(EPS)
    }

    #[test]
    fn loss_uv_perfect_alignment_is_minus_two() {
        let mut tape = Tape::<f64>::new();
        let e = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let u_t = tape.param(e.clone());
        let v_t = tape.param(e.clone());
        let u_p = tape.constant(e.clone());
        let v_p = tape.constant(e);
        let l = loss_uv(&mut tape, u_t, v_t, u_p, v_p, &[(0, 0), (1, 1)]).unwrap();
        assert!((tape.value(l).item() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn loss_uv_orthogonal_pairs_is_zero() {
        let mut tape = Tape::<f64>::new();
        let theta = Tensor::from_rows(&[vec![1.0, 0.0]]);
        let phi = Tensor::from_rows(&[vec![0.0, 1.0]]);
        let u_t = tape.param(theta.clone());
        let v_t = tape.param(theta);
        let u_p = tape.constant(phi.clone());
        let v_p = tape.constant(phi);
        let l = loss_uv(&mut tape, u_t, v_t, u_p, v_p, &[(0, 0)]).unwrap();
        assert!(tape.value(l).item().abs() < 1e-12);
    }

    #[test]
    fn loss_uv_empty_batch_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let t = tape.param(Tensor::zeros(1, 2));
        assert!(matches!(
            loss_uv(&mut tape, t, t, t, t, &[]),
            Err(ObjectiveError::EmptyBatch)
        ));
    }

    #[test]
    fn loss_uv_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (nu, nv, d) = (7, 5, 4);
        let ut = rand_tensor(&mut rng, nu, d);
        let vt = rand_tensor(&mut rng, nv, d);
        let up = rand_tensor(&mut rng, nu, d);
        let vp = rand_tensor(&mut rng, nv, d);
        let edges: Vec<(u32, u32)> = vec![(0, 0), (0, 3), (2, 1), (6, 4), (3, 3), (2, 1)];

        let mut tape = Tape::<f64>::new();
        let a = tape.param(ut.clone());
        let b = tape.param(vt.clone());
        let c = tape.constant(up.clone());
        let e = tape.constant(vp.clone());
        let l = loss_uv(&mut tape, a, b, c, e, &edges).unwrap();

        let mut want = 0.0;
        for &(u, v) in &edges {
            want -= cos(ut.row(u as usize), vp.row(v as usize));
            want -= cos(vt.row(v as usize), up.row(u as usize));
        }
        want /= edges.len() as f64;
        assert!((tape.value(l).item() - want).abs() < 1e-12);
    }

    #[test]
    fn loss_uv_is_scale_invariant_per_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ut = rand_tensor(&mut rng, 3, 4);
        let vt = rand_tensor(&mut rng, 3, 4);
        let up = rand_tensor(&mut rng, 3, 4);
        let vp = rand_tensor(&mut rng, 3, 4);
        let edges = [(0u32, 1u32), (2, 0)];
        let eval = |ut: &Tensor<f64>| {
            let mut tape = Tape::<f64>::new();
            let a = tape.param(ut.clone());
            let b = tape.param(vt.clone());
            let c = tape.constant(up.clone());
            let e = tape.constant(vp.clone());
            let l = loss_uv(&mut tape, a, b, c, e, &edges).unwrap();
            tape.value(l).item()
        };
        let base = eval(&ut);
        let mut scaled = ut.clone();
        for x in scaled.row_mut(0) {
            *x *= 7.5;
        }
        assert!((eval(&scaled) - base).abs() < 1e-12);
    }

    #[test]
    fn loss_intra_self_neighbors_give_minus_two() {
        // every node's single neighbor has identical embeddings on both
        // networks → each cosine is 1; n_knn=1 → −2
        let mut tape = Tape::<f64>::new();
        let e = Tensor::from_rows(&[vec![0.6, 0.8], vec![0.6, 0.8]]);
        let t = tape.param(e.clone());
        let p = tape.constant(e);
        let knn = vec![vec![1u32], vec![0u32]];
        let l = loss_intra(&mut tape, t, p, &knn, 1);
        assert!((tape.value(l).item() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn loss_intra_empty_lists_contribute_zero() {
        let mut tape = Tape::<f64>::new();
        let e = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let t = tape.param(e.clone());
        let p = tape.constant(e);
        // only node 0 has a neighbor; divisor stays n_nodes·n_knn
        let knn = vec![vec![1u32], vec![], vec![]];
        let l = loss_intra(&mut tape, t, p, &knn, 2);
        // cos(0,1)=1 both directions → −(1+1)/(3·2)
        assert!((tape.value(l).item() + 2.0 / 6.0).abs() < 1e-12);
        // no neighbors at all → constant zero
        let mut tape2 = Tape::<f64>::new();
        let t2 = tape2.param(Tensor::zeros(3, 2));
        let p2 = tape2.constant(Tensor::zeros(3, 2));
        let l2 = loss_intra(&mut tape2, t2, p2, &vec![vec![], vec![], vec![]], 2);
        assert_eq!(tape2.value(l2).item(), 0.0);
    }

    #[test]
    fn loss_intra_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10;
        let theta = rand_tensor(&mut rng, n, 6);
        let phi = rand_tensor(&mut rng, n, 6);
        let n_knn = 3;
        let knn: Vec<Vec<u32>> = (0..n)
            .map(|a| {
                (0..rng.gen_range(0..=n_knn))
                    .map(|_| {
                        let mut p = rng.gen_range(0..n as u32);
                        while p as usize == a {
                            p = rng.gen_range(0..n as u32);
                        }
                        p
                    })
                    .collect()
            })
            .collect();

        let mut tape = Tape::<f64>::new();
        let t = tape.param(theta.clone());
        let p = tape.constant(phi.clone());
        let l = loss_intra(&mut tape, t, p, &knn, n_knn);

        let mut want = 0.0;
        for (a, list) in knn.iter().enumerate() {
            let mut inner = 0.0;
            for &peer in list {
                inner += cos(theta.row(a), phi.row(peer as usize));
                inner += cos(theta.row(peer as usize), phi.row(a));
            }
            want += -inner / n_knn as f64;
        }
        want /= n as f64;
        assert!((tape.value(l).item() - want).abs() < 1e-12);
    }

    #[test]
    fn loss_local_is_the_weighted_sum() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::scalar(0.7));
        let b = tape.param(Tensor::scalar(-1.3));
        let c = tape.param(Tensor::scalar(0.2));
        let w = LossWeights { lambda_uv: 2.0, lambda_u: 0.5, lambda_v: 0.1 };
        let l = loss_local(&mut tape, a, b, c, &w);
        assert!((tape.value(l).item() - (2.0 * 0.7 - 0.5 * 1.3 + 0.1 * 0.2)).abs() < 1e-12);

        let only_uv = LossWeights { lambda_uv: 1.0, lambda_u: 0.0, lambda_v: 0.0 };
        let l2 = loss_local(&mut tape, a, b, c, &only_uv);
        assert_eq!(tape.value(l2).item(), 0.7);

        let zero = LossWeights { lambda_uv: 0.0, lambda_u: 0.0, lambda_v: 0.0 };
        let l3 = loss_local(&mut tape, a, b, c, &zero);
        assert_eq!(tape.value(l3).item(), 0.0);
    }

    #[test]
    fn embedding_adjacency_symmetric_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = rand_tensor(&mut rng, 4, 3);
        let v = rand_tensor(&mut rng, 5, 3);
        let mut tape = Tape::<f64>::new();
        let ut = tape.param(u.clone());
        let vt = tape.param(v.clone());
        let up = tape.constant(u.clone());
        let vp = tape.constant(v.clone());
        let opts = AdjacencyOptions { delta: DeltaKind::Abs, filter_alpha: None };
        let a = embedding_adjacency(&mut tape, ut, vt, up, vp, &opts);
        let want = u.matmul_nt(&v).map(f64::abs);
        for (x, y) in tape.value(a).data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_adjacency_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let ut = rand_tensor(&mut rng, 5, 3);
        let vt = rand_tensor(&mut rng, 4, 3);
        let up = rand_tensor(&mut rng, 5, 3);
        let vp = rand_tensor(&mut rng, 4, 3);
        let alpha = 0.3;

        let mut tape = Tape::<f64>::new();
        let a = tape.param(ut.clone());
        let b = tape.param(vt.clone());
        let c = tape.constant(up.clone());
        let d = tape.constant(vp.clone());
        let opts = AdjacencyOptions { delta: DeltaKind::Abs, filter_alpha: Some(alpha) };
        let got = embedding_adjacency(&mut tape, a, b, c, d, &opts);

        // scalar oracle: per-entry products, abs, average, then μ/σ zeroing
        let mut raw = vec![0.0; 5 * 4];
        for i in 0..5 {
            for j in 0..4 {
                let dot_a: f64 = (0..3).map(|t| ut.get(i, t) * vp.get(j, t)).sum();
                let dot_b: f64 = (0..3).map(|t| up.get(i, t) * vt.get(j, t)).sum();
                raw[i * 4 + j] = 0.5 * (dot_a.abs() + dot_b.abs());
            }
        }
        let mu = raw.iter().sum::<f64>() / raw.len() as f64;
        let var = raw.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / raw.len() as f64;
        let thresh = mu + alpha * var.sqrt();
        let want: Vec<f64> = raw
            .iter()
            .map(|&x| if x >= thresh { x } else { 0.0 })
            .collect();
        let got_vals = tape.value(got);
        let mut kept = 0;
        for (idx, (&x, &y)) in got_vals.data().iter().zip(&want).enumerate() {
            assert!((x - y).abs() < 1e-12, "entry {idx}");
            if y != 0.0 {
                kept += 1;
            }
        }
        assert!(kept > 0 && kept < 20, "threshold should split entries (kept {kept})");
    }

    #[test]
    fn embedding_adjacency_relu_delta() {
        let mut tape = Tape::<f64>::new();
        let u = Tensor::from_rows(&[vec![1.0, 0.0]]);
        let v = Tensor::from_rows(&[vec![-1.0, 0.0]]);
        let ut = tape.param(u.clone());
        let vt = tape.param(v.clone());
        let up = tape.constant(u);
        let vp = tape.constant(v);
        let opts = AdjacencyOptions { delta: DeltaKind::Relu, filter_alpha: None };
        let a = embedding_adjacency(&mut tape, ut, vt, up, vp, &opts);
        // both cross products are −1 → relu zeroes them
        assert_eq!(tape.value(a).item(), 0.0);
    }

    #[test]
    fn joint_node_uniform_case() {
        let mut tape = Tape::<f64>::new();
        let meta = tape.constant(Tensor::filled(3, 4, 1.0));
        let emb = tape.param(Tensor::filled(3, 4, 0.25));
        let j = joint_node_distribution(&mut tape, meta, emb).unwrap();
        for &p in tape.value(j.p).data() {
            assert!((p - 1.0 / 12.0).abs() < 1e-12);
        }
        assert!((tape.value(j.p).sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn joint_node_point_mass() {
        let mut tape = Tape::<f64>::new();
        let mut meta = Tensor::zeros(2, 2);
        meta.set(1, 0, 3.0);
        let meta = tape.constant(meta);
        let emb = tape.param(Tensor::filled(2, 2, 0.5));
        let j = joint_node_distribution(&mut tape, meta, emb).unwrap();
        assert_eq!(tape.value(j.p).get(1, 0), 1.0);
        assert_eq!(tape.value(j.p).get(0, 0), 0.0);
    }

    #[test]
    fn joint_node_support_and_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let meta = Tensor::from_fn(6, 7, |_, _| {
            if rng.gen_bool(0.4) { rng.gen_range(1.0..3.0) } else { 0.0 }
        });
        let emb = Tensor::from_fn(6, 7, |_, _| rng.gen_range(0.0..1.0));
        let mut tape = Tape::<f64>::new();
        let m = tape.constant(meta.clone());
        let e = tape.param(emb);
        let j = joint_node_distribution(&mut tape, m, e).unwrap();
        let p = tape.value(j.p);
        assert!((p.sum() - 1.0).abs() < 1e-9);
        for (i, (&pv, &mv)) in p.data().iter().zip(meta.data()).enumerate() {
            assert!(pv >= 0.0);
            if mv == 0.0 {
                assert_eq!(pv, 0.0, "support leak at {i}");
            }
        }
    }

    #[test]
    fn joint_node_degenerate_z_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let meta = tape.constant(Tensor::filled(2, 2, 1.0));
        let emb = tape.param(Tensor::zeros(2, 2));
        match joint_node_distribution(&mut tape, meta, emb) {
            Err(ObjectiveError::Degenerate { .. }) => {}
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn joint_cluster_point_mass_is_outer_product() {
        let mut tape = Tape::<f64>::new();
        let pu = tape.param(Tensor::from_rows(&[
            vec![0.2, 0.8],
            vec![0.5, 0.5],
        ]));
        let pv = tape.param(Tensor::from_rows(&[
            vec![0.1, 0.6, 0.3],
            vec![1.0, 0.0, 0.0],
        ]));
        let mut point = Tensor::zeros(2, 2);
        point.set(0, 1, 1.0); // all mass at (u0, v1)
        let puv = tape.constant(point);
        let j = joint_cluster_distribution(&mut tape, pu, pv, puv).unwrap();
        let jv = tape.value(j);
        // outer(p(·|u0), p(·|v1)) = outer([0.2,0.8],[1,0,0])
        assert!((jv.get(0, 0) - 0.2).abs() < 1e-12);
        assert!((jv.get(1, 0) - 0.8).abs() < 1e-12);
        assert!(jv.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn joint_cluster_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let (nu, nv, k, l) = (6, 5, 3, 4);
        let softmax_rows = |t: Tensor<f64>| {
            let mut out = t;
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - m).exp();
                    s += *x;
                }
                for x in row.iter_mut() {
                    *x /= s;
                }
            }
            out
        };
        let pu = softmax_rows(rand_tensor(&mut rng, nu, k));
        let pv = softmax_rows(rand_tensor(&mut rng, nv, l));
        let mut puv = Tensor::from_fn(nu, nv, |_, _| rng.gen_range(0.0..1.0));
        let z = puv.sum();
        puv = puv.scale(1.0 / z);

        let mut tape = Tape::<f64>::new();
        let a = tape.param(pu.clone());
        let b = tape.param(pv.clone());
        let c = tape.constant(puv.clone());
        let j = joint_cluster_distribution(&mut tape, a, b, c).unwrap();
        let jv = tape.value(j);

        let mut want = Tensor::<f64>::zeros(k, l);
        for kk in 0..k {
            for ll in 0..l {
                let mut s = 0.0;
                for u in 0..nu {
                    for v in 0..nv {
                        s += pu.get(u, kk) * pv.get(v, ll) * puv.get(u, v);
                    }
                }
                want.set(kk, ll, s);
            }
        }
        assert!((jv.sum() - 1.0).abs() < 1e-9);
        for (x, y) in jv.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_cluster_shape_mismatch_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let pu = tape.param(Tensor::zeros(3, 2));
        let pv = tape.param(Tensor::zeros(4, 2));
        let puv = tape.constant(Tensor::zeros(3, 5));
        assert!(matches!(
            joint_cluster_distribution(&mut tape, pu, pv, puv),
            Err(ObjectiveError::Shape(_))
        ));
    }

    #[test]
    fn mi_of_independent_joint_is_zero() {
        let pk = [0.2, 0.5, 0.3];
        let pl = [0.7, 0.3];
        let joint = Tensor::from_fn(3, 2, |r, c| pk[r] * pl[c]);
        let d = JointClusterDistribution::from_joint(joint.clone());
        assert!(mutual_information(&d).abs() < 1e-12);
        let mut tape = Tape::<f64>::new();
        let p = tape.param(joint);
        let i = mutual_information_node(&mut tape, p);
        assert!(tape.value(i).item().abs() < 1e-12);
    }

    #[test]
    fn mi_of_diagonal_and_permutation_joints() {
        let d = JointClusterDistribution::from_joint(Tensor::from_rows(&[
            vec![0.5, 0.0],
            vec![0.0, 0.5],
        ]));
        assert!((mutual_information(&d) - 2f64.ln()).abs() < 1e-12);

        // permutation over 5 clusters
        let n = 5;
        let mut joint = Tensor::zeros(n, n);
        for i in 0..n {
            joint.set(i, (i + 2) % n, 1.0 / n as f64);
        }
        let d = JointClusterDistribution::from_joint(joint.clone());
        assert!((mutual_information(&d) - (n as f64).ln()).abs() < 1e-12);

        let mut tape = Tape::<f64>::new();
        let p = tape.param(joint);
        let i = mutual_information_node(&mut tape, p);
        assert!((tape.value(i).item() - (n as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn mi_tape_matches_value_form_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for trial in 0..25 {
            let (k, l) = (rng.gen_range(2..6), rng.gen_range(2..6));
            let mut joint = Tensor::from_fn(k, l, |_, _| rng.gen_range(0.01..1.0));
            let z = joint.sum();
            joint = joint.scale(1.0 / z);
            let d = JointClusterDistribution::from_joint(joint.clone());
            let want = mutual_information(&d);
            let mut tape = Tape::<f64>::new();
            let p = tape.param(joint);
            let i = mutual_information_node(&mut tape, p);
            let got = tape.value(i).item();
            assert!((got - want).abs() < 1e-10, "trial {trial}");
            assert!(got >= -1e-10);
            assert!(got <= (k.min(l) as f64).ln() + 1e-10);
        }
    }

    #[test]
    fn loss_total_adds() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::scalar(1.25));
        let b = tape.param(Tensor::scalar(-0.75));
        let t = loss_total(&mut tape, a, b);
        assert_eq!(tape.value(t).item(), 0.5);
        let z1 = tape.constant(Tensor::scalar(0.0));
        let z2 = tape.constant(Tensor::scalar(0.0));
        let t0 = loss_total(&mut tape, z1, z2);
        assert_eq!(tape.value(t0).item(), 0.0);
    }
}
