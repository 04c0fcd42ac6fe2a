//! Finite-difference validation of every backward rule, from single ops up
//! to the full training objective on a small fixture graph.
//!
//! Analytic gradients are compared against central differences (h = 1e-5,
//! always in f64). An entry passes when |analytic − fd| ≤ 1e-7 +
//! 1e-4·max(|analytic|, |fd|). Reductions go through a Hadamard product with
//! a random constant before the final sum, so transposed or permuted
//! gradients cannot cancel out. Fixtures keep inputs away from the
//! non-smooth points (relu/abs at zero, filter thresholds, zero-norm rows);
//! the composite cases assert those margins explicitly and fail loudly if a
//! seed change erodes them.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bigraph::{build_neighbor_index, metapath_adjacency, select_knn_batch, BipartiteGraph, Side, SimilarityMode};
use crate::diff::{NodeId, Tape, Tensor};
use crate::nets::{cluster_probs, encode, project, ModelConfig, ModelState, ProjectorKind};
use crate::objectives::{
    embedding_adjacency, joint_cluster_distribution, joint_node_distribution, loss_intra,
    loss_local, loss_total, loss_uv, mutual_information_node, AdjacencyOptions, DeltaKind,
    LossWeights,
};

const H: f64 = 1e-5;
const TOL_ABS: f64 = 1e-7;
const TOL_REL: f64 = 1e-4;

/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    /// Total scalar entries differentiated.
    pub entries: usize,
    pub max_abs_diff: f64,
    pub max_rel_err: f64,
    pub passed: bool,
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:40} entries={:<5} max_abs={:.3e} max_rel={:.3e}",
            if self.passed { "ok  " } else { "FAIL" },
            self.name,
            self.entries,
            self.max_abs_diff,
            self.max_rel_err
        )
    }
}

pub fn all_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

struct Case {
    name: String,
    tensors: Vec<Tensor<f64>>,
    build: Box<dyn Fn(&mut Tape<f64>, &[NodeId]) -> NodeId>,
}

/// Compare analytic gradients of `build`'s scalar output against central
/// differences over every entry of every parameter tensor.
pub fn check(
    name: &str,
    tensors: &[Tensor<f64>],
    build: impl Fn(&mut Tape<f64>, &[NodeId]) -> NodeId,
) -> CheckReport {
    let eval = |tensors: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| tape.param(t.clone())).collect();
        let root = build(&mut tape, &ids);
        let v = tape.value(root).item();
        assert!(v.is_finite(), "{name}: non-finite forward value");
        v
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = tensors.iter().map(|t| tape.param(t.clone())).collect();
    let root = build(&mut tape, &ids);
    let grads = tape.backward(root);

    let mut entries = 0usize;
    let mut max_abs_diff = 0.0f64;
    let mut max_rel_err = 0.0f64;
    let mut passed = true;
    for (pi, t) in tensors.iter().enumerate() {
        let analytic = grads.get(ids[pi]);
        for e in 0..t.len() {
            let mut plus = tensors.to_vec();
            plus[pi].data_mut()[e] += H;
            let mut minus = tensors.to_vec();
            minus[pi].data_mut()[e] -= H;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let a = analytic.map_or(0.0, |g| g.data()[e]);
            let diff = (a - fd).abs();
            let scale = a.abs().max(fd.abs());
            if diff > TOL_ABS + TOL_REL * scale {
                passed = false;
            }
            max_abs_diff = max_abs_diff.max(diff);
            max_rel_err = max_rel_err.max(diff / scale.max(TOL_ABS));
            entries += 1;
        }
    }
    CheckReport {
        name: name.to_string(),
        entries,
        max_abs_diff,
        max_rel_err,
        passed,
    }
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    Tensor::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero (|x| ∈ [lo, 1)) for ops with a kink there.
fn rand_mat_off_zero(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64) -> Tensor<f64> {
    Tensor::from_fn(r, c, |_, _| {
        let mag = rng.gen_range(lo..1.0);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Reduce a matrix node to a scalar through a random constant Hadamard
/// weighting, so every output entry influences the loss differently.
fn weighted_sum(tape: &mut Tape<f64>, x: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
    let (r, c) = tape.value(x).shape();
    let w = Tensor::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let w = tape.constant(w);
    let h = tape.hadamard(x, w);
    tape.sum_all(h)
}

fn op_cases(seed: u64) -> Vec<Case> {
    let mut cases: Vec<Case> = Vec::new();
    let mut push = |name: String, tensors: Vec<Tensor<f64>>, build: Box<dyn Fn(&mut Tape<f64>, &[NodeId]) -> NodeId>| {
        cases.push(Case { name, tensors, build });
    };

    for trial in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial.wrapping_mul(0x9e3779b97f4a7c15)));
        let m = rng.gen_range(2..6);
        let k = rng.gen_range(2..6);
        let n = rng.gen_range(2..6);

        {
            let a = rand_mat(&mut rng, m, k);
            let b = rand_mat(&mut rng, k, n);
            let r2 = ChaCha8Rng::seed_from_u64(seed + 1000 + trial);
            push(
                format!("matmul[{trial}]"),
                vec![a, b],
                Box::new(move |t, p| {
                    let o = t.matmul(p[0], p[1]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let a = rand_mat(&mut rng, m, n);
            let r2 = ChaCha8Rng::seed_from_u64(seed + 2000 + trial);
            push(
                format!("transpose[{trial}]"),
                vec![a],
                Box::new(move |t, p| {
                    let o = t.transpose(p[0]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let a = rand_mat(&mut rng, m, n);
            let b = rand_mat(&mut rng, m, n);
            let r2 = ChaCha8Rng::seed_from_u64(seed + 3000 + trial);
            push(
                format!("add+scale+hadamard[{trial}]"),
                vec![a, b],
                Box::new(move |t, p| {
                    let s = t.add(p[0], p[1]);
                    let s = t.scale(s, -1.7);
                    let h = t.hadamard(s, p[1]);
                    weighted_sum(t, h, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat(&mut rng, m, n);
            let bias = rand_mat(&mut rng, 1, n);
            let r2 = ChaCha8Rng::seed_from_u64(seed + 4000 + trial);
            push(
                format!("add_row_vec[{trial}]"),
                vec![x, bias],
                Box::new(move |t, p| {
                    let o = t.add_row_vec(p[0], p[1]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let a = rand_mat(&mut rng, m, k);
            let b = rand_mat(&mut rng, m, n);
            let r2 = ChaCha8Rng::seed_from_u64(seed + 5000 + trial);
            push(
                format!("concat_cols[{trial}]"),
                vec![a, b],
                Box::new(move |t, p| {
                    let o = t.concat_cols(p[0], p[1]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat(&mut rng, k, n);
            let rows = rng.gen_range(2..5);
            let adj: Arc<Vec<Vec<u32>>> = Arc::new(
                (0..rows)
                    .map(|i| {
                        if i == 0 {
                            Vec::new() // exercise the empty-neighborhood row
                        } else {
                            (0..rng.gen_range(1..=k as u32))
                                .map(|_| rng.gen_range(0..k as u32))
                                .collect()
                        }
                    })
                    .collect(),
            );
            let r2 = ChaCha8Rng::seed_from_u64(seed + 6000 + trial);
            push(
                format!("neighbor_mean[{trial}]"),
                vec![x],
                Box::new(move |t, p| {
                    let o = t.neighbor_mean(p[0], adj.clone());
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat(&mut rng, k, n);
            let idx: Arc<Vec<u32>> = Arc::new(
                (0..rng.gen_range(2..7))
                    .map(|_| rng.gen_range(0..k as u32))
                    .collect(),
            );
            let r2 = ChaCha8Rng::seed_from_u64(seed + 7000 + trial);
            push(
                format!("gather_rows[{trial}]"),
                vec![x],
                Box::new(move |t, p| {
                    let o = t.gather_rows(p[0], idx.clone());
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat_off_zero(&mut rng, m, n, 0.05);
            let r2 = ChaCha8Rng::seed_from_u64(seed + 8000 + trial);
            push(
                format!("relu[{trial}]"),
                vec![x],
                Box::new(move |t, p| {
                    let o = t.relu(p[0]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat(&mut rng, m, n);
            let r2 = ChaCha8Rng::seed_from_u64(seed + 9000 + trial);
            push(
                format!("tanh[{trial}]"),
                vec![x],
                Box::new(move |t, p| {
                    let o = t.tanh(p[0]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat_off_zero(&mut rng, m, n, 0.05);
            let r2 = ChaCha8Rng::seed_from_u64(seed + 10000 + trial);
            push(
                format!("abs[{trial}]"),
                vec![x],
                Box::new(move |t, p| {
                    let o = t.abs(p[0]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat(&mut rng, m, n);
            let r2 = ChaCha8Rng::seed_from_u64(seed + 11000 + trial);
            push(
                format!("softmax_rows[{trial}]"),
                vec![x],
                Box::new(move |t, p| {
                    let o = t.softmax_rows(p[0]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = Tensor::from_fn(m, n, |_, _| rng.gen_range(0.1..2.0));
            let r2 = ChaCha8Rng::seed_from_u64(seed + 12000 + trial);
            push(
                format!("log_guard[{trial}]"),
                vec![x],
                Box::new(move |t, p| {
                    let o = t.log_guard(p[0]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat(&mut rng, m, n);
            push(
                format!("sum_all[{trial}]"),
                vec![x],
                Box::new(move |t, p| {
                    let s = t.sum_all(p[0]);
                    t.scale(s, 0.37)
                }),
            );
        }
        {
            // rows with norms comfortably above the ε-guard
            let a = rand_mat_off_zero(&mut rng, m, 4, 0.3);
            let b = rand_mat_off_zero(&mut rng, k, 4, 0.3);
            let ia: Arc<Vec<u32>> = Arc::new(
                (0..rng.gen_range(2..6)).map(|_| rng.gen_range(0..m as u32)).collect(),
            );
            let ib: Arc<Vec<u32>> =
                Arc::new(ia.iter().map(|_| rng.gen_range(0..k as u32)).collect());
            let r2 = ChaCha8Rng::seed_from_u64(seed + 13000 + trial);
            push(
                format!("cosine_pairs[{trial}]"),
                vec![a, b],
                Box::new(move |t, p| {
                    let o = t.cosine_pairs(p[0], p[1], ia.clone(), ib.clone());
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat(&mut rng, m, n);
            let mask: Arc<Vec<bool>> = Arc::new((0..m * n).map(|_| rng.gen_bool(0.6)).collect());
            let r2 = ChaCha8Rng::seed_from_u64(seed + 14000 + trial);
            push(
                format!("mask[{trial}]"),
                vec![x],
                Box::new(move |t, p| {
                    let o = t.apply_mask(p[0], mask.clone());
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
        {
            let x = rand_mat(&mut rng, m, n);
            let z = Tensor::scalar(rng.gen_range(0.5..2.0));
            let r2 = ChaCha8Rng::seed_from_u64(seed + 15000 + trial);
            push(
                format!("div_scalar[{trial}]"),
                vec![x, z],
                Box::new(move |t, p| {
                    let o = t.div_scalar(p[0], p[1]);
                    weighted_sum(t, o, &mut r2.clone())
                }),
            );
        }
    }
    cases
}

/// Fixture for the end-to-end objective checks: a small connected bipartite
/// graph with every architectural feature switched on.
struct Fixture {
    graph: BipartiteGraph,
    cfg: ModelConfig,
    names: Vec<String>,
    theta: Vec<Tensor<f64>>,
    phi_u: Tensor<f64>,
    phi_v: Tensor<f64>,
    knn_u: Vec<Vec<u32>>,
    knn_v: Vec<Vec<u32>>,
    a_meta: Tensor<f64>,
}

/// Deterministically pick the first sub-seed whose fixture keeps all
/// non-smooth points at a safe margin (see [`fixture_margins`]). Random
/// embeddings routinely land an `abs` or relu input within the fd step of
/// its kink, which would invalidate the comparison rather than the gradient.
fn fixture(seed: u64) -> Fixture {
    for attempt in 0..64 {
        let f = build_fixture(seed.wrapping_add(u64::wrapping_mul(attempt, 0x517cc1b727220a95)));
        if fixture_margins(&f).is_ok() {
            return f;
        }
    }
    let err = fixture_margins(&build_fixture(seed)).unwrap_err();
    panic!("no usable gradcheck fixture near seed {seed}: {err}");
}

fn build_fixture(seed: u64) -> Fixture {
    let (n_u, n_v) = (6usize, 5usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    // connect everything first, then sprinkle extras
    for u in 0..n_u as u32 {
        edges.push((u, u % n_v as u32));
    }
    for v in 0..n_v as u32 {
        edges.push((v % n_u as u32, v));
    }
    for u in 0..n_u as u32 {
        for v in 0..n_v as u32 {
            if rng.gen_bool(0.4) {
                edges.push((u, v));
            }
        }
    }
    let graph = BipartiteGraph::from_edges(n_u, n_v, edges);
    let cfg = ModelConfig {
        d: 4,
        layers: 1,
        skip_connection: true,
        projector_kind: ProjectorKind::Mlp,
        n_clusters: 3,
        n_hops: 2,
        n_knn: 2,
        alpha: 0.0,
        ..ModelConfig::default()
    };
    let state = ModelState::<f64>::init(cfg.clone(), n_u, n_v, seed ^ 0xabcdef);
    let names: Vec<String> = state.theta.names().map(str::to_string).collect();
    let theta: Vec<Tensor<f64>> = names
        .iter()
        .map(|n| state.theta.get(n).unwrap().clone())
        .collect();

    // independent target-side embeddings (constants in every check)
    let (phi_u, phi_v) = crate::nets::encode_values(&state.phi, &cfg, &graph);

    let idx_u = build_neighbor_index(&graph, Side::U, cfg.n_knn);
    let idx_v = build_neighbor_index(&graph, Side::V, cfg.n_knn);
    let (theta_u, theta_v) = crate::nets::encode_values(&state.theta, &cfg, &graph);
    let knn_u = select_knn_batch(&idx_u, &theta_u, &phi_u, cfg.n_knn, SimilarityMode::Product);
    let knn_v = select_knn_batch(&idx_v, &theta_v, &phi_v, cfg.n_knn, SimilarityMode::Product);

    let a_meta = metapath_adjacency(&graph, cfg.n_hops, false).unwrap().matrix;

    Fixture {
        graph,
        cfg,
        names,
        theta,
        phi_u,
        phi_v,
        knn_u,
        knn_v,
        a_meta,
    }
}

/// The fixture must keep every non-smooth point at a safe distance, or the
/// finite-difference comparison itself is invalid.
fn fixture_margins(f: &Fixture) -> Result<(), String> {
    const MARGIN: f64 = 1e-3;
    let get = |name: &str| {
        &f.theta[f.names.iter().position(|n| n == name).unwrap_or_else(|| panic!("{name}"))]
    };
    let mut params = crate::diff::ParamSet::new();
    for (n, t) in f.names.iter().zip(&f.theta) {
        params.insert(n.clone(), t.clone());
    }

    // relu pre-activations (layer 0, both sides)
    for (adj, x0, w_name) in [
        (f.graph.adj(Side::U), get("v0"), "enc.u.w1.0"),
        (f.graph.adj(Side::V), get("u0"), "enc.v.w1.0"),
    ] {
        let mut mean = Tensor::<f64>::zeros(adj.len(), x0.cols());
        for (r, nbrs) in adj.iter().enumerate() {
            for &j in nbrs.iter() {
                for (o, &s) in mean.row_mut(r).iter_mut().zip(x0.row(j as usize)) {
                    *o += s / nbrs.len() as f64;
                }
            }
        }
        let pre = mean.matmul(get(w_name));
        for &x in pre.data() {
            if x.abs() <= MARGIN {
                return Err(format!("relu pre-activation {x:.2e} too close to zero"));
            }
        }
    }

    // encoder outputs: nonzero row norms (cosine guard) and abs margins
    let (u_emb, v_emb) = crate::nets::encode_values(&params, &f.cfg, &f.graph);
    for t in [&u_emb, &v_emb, &f.phi_u, &f.phi_v] {
        for n in t.row_norms() {
            if n <= MARGIN {
                return Err(format!("embedding row norm {n:.2e} too small"));
            }
        }
    }
    let cross_a = u_emb.matmul_nt(&f.phi_v);
    let cross_b = f.phi_u.matmul_nt(&v_emb);
    for t in [&cross_a, &cross_b] {
        for &x in t.data() {
            if x.abs() <= MARGIN {
                return Err(format!("abs input {x:.2e} too close to zero"));
            }
        }
    }

    // noise-filter threshold margin
    let a_emb = cross_a.map(f64::abs).add(&cross_b.map(f64::abs)).scale(0.5);
    let thresh = a_emb.mean() + f.cfg.alpha * a_emb.std();
    for &x in a_emb.data() {
        if (x - thresh).abs() <= MARGIN {
            return Err(format!(
                "adjacency entry {x:.4} within {MARGIN} of filter threshold {thresh:.4}"
            ));
        }
    }
    Ok(())
}

/// Build the full training objective on the tape; `parts` selects which
/// pieces contribute so individual terms can be checked in isolation.
#[derive(Clone, Copy)]
struct Parts {
    uv: bool,
    intra_u: bool,
    intra_v: bool,
    global: bool,
}

fn build_objective(f: &Fixture, parts: Parts, tape: &mut Tape<f64>, ids: &[NodeId]) -> NodeId {
    let binding: crate::nets::Binding = f
        .names
        .iter()
        .cloned()
        .zip(ids.iter().copied())
        .collect();
    let (u_emb, v_emb) = encode(tape, &binding, &f.cfg, &f.graph);
    let u_proj = project(tape, &binding, &f.cfg, "u", u_emb);
    let v_proj = project(tape, &binding, &f.cfg, "v", v_emb);
    let u_phi = tape.constant(f.phi_u.clone());
    let v_phi = tape.constant(f.phi_v.clone());

    let zero = tape.constant(Tensor::scalar(0.0));
    let l_uv = if parts.uv {
        loss_uv(tape, u_proj, v_proj, u_phi, v_phi, f.graph.edges()).unwrap()
    } else {
        zero
    };
    let l_u = if parts.intra_u {
        loss_intra(tape, u_proj, u_phi, &f.knn_u, f.cfg.n_knn)
    } else {
        zero
    };
    let l_v = if parts.intra_v {
        loss_intra(tape, v_proj, v_phi, &f.knn_v, f.cfg.n_knn)
    } else {
        zero
    };
    let weights = LossWeights {
        lambda_uv: f.cfg.lambda_uv,
        lambda_u: f.cfg.lambda_u,
        lambda_v: f.cfg.lambda_v,
    };
    let l_loc = loss_local(tape, l_uv, l_u, l_v, &weights);

    let l_glb = if parts.global {
        let opts = AdjacencyOptions {
            delta: DeltaKind::Abs,
            filter_alpha: Some(f.cfg.alpha),
        };
        let a_emb = embedding_adjacency(tape, u_emb, v_emb, u_phi, v_phi, &opts);
        let a_meta = tape.constant(f.a_meta.clone());
        let joint = joint_node_distribution(tape, a_meta, a_emb).unwrap();
        let p_k_u = cluster_probs(tape, &binding, "u", u_proj);
        let p_l_v = cluster_probs(tape, &binding, "v", v_proj);
        let p_kl = joint_cluster_distribution(tape, p_k_u, p_l_v, joint.p).unwrap();
        let mi = mutual_information_node(tape, p_kl);
        tape.scale(mi, -1.0)
    } else {
        zero
    };
    loss_total(tape, l_loc, l_glb)
}

fn composite_cases(seed: u64) -> Vec<Case> {
    let f = Arc::new(fixture(seed));
    let mk = |name: &str, parts: Parts, f: &Arc<Fixture>| -> Case {
        let f = f.clone();
        Case {
            name: name.to_string(),
            tensors: f.theta.clone(),
            build: Box::new(move |tape, ids| build_objective(&f, parts, tape, ids)),
        }
    };
    vec![
        mk("loss_uv through encoder+projector", Parts { uv: true, intra_u: false, intra_v: false, global: false }, &f),
        mk("loss_intra (U side)", Parts { uv: false, intra_u: true, intra_v: false, global: false }, &f),
        mk("loss_intra (V side)", Parts { uv: false, intra_u: false, intra_v: true, global: false }, &f),
        mk("global mutual-information loss", Parts { uv: false, intra_u: false, intra_v: false, global: true }, &f),
        mk("total objective", Parts { uv: true, intra_u: true, intra_v: true, global: true }, &f),
    ]
}

/// Run every op-level and composite finite-difference check.
pub fn run_suite(seed: u64) -> Vec<CheckReport> {
    let mut reports = Vec::new();
    for case in op_cases(seed).into_iter().chain(composite_cases(seed)) {
        reports.push(check(&case.name, &case.tensors, |t, p| (case.build)(t, p)));
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_level_checks_pass() {
        let reports: Vec<CheckReport> = op_cases(0)
            .into_iter()
            .map(|c| check(&c.name, &c.tensors, |t, p| (c.build)(t, p)))
            .collect();
        for r in &reports {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn composite_objective_checks_pass() {
        let reports: Vec<CheckReport> = composite_cases(0)
            .into_iter()
            .map(|c| check(&c.name, &c.tensors, |t, p| (c.build)(t, p)))
            .collect();
        for r in &reports {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn check_flags_a_wrong_gradient() {
        // The analytic pass sees loss = 1.0·Σx, every fd rebuild sees
        // 1.5·Σx, so the comparison must report a failure.
        let t = Tensor::from_vec(1, 2, vec![0.5, -0.3]);
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let report = check("deliberate mismatch", &[t], |tape, p| {
            let n = calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            let c = tape.constant(Tensor::filled(1, 2, if n == 0 { 1.0 } else { 1.5 }));
            let h = tape.hadamard(p[0], c);
            tape.sum_all(h)
        });
        assert!(!report.passed);
        assert_eq!(report.entries, 2);
    }
}
