//! Link prediction with a logistic-regression probe over concatenated
//! node embeddings, scored by AUC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bigraph::BipartiteGraph;
use crate::diff::Tensor;
use crate::scalar::Scalar;

use super::EvalError;

/// Trained probe: one weight per feature plus an intercept.
#[derive(Debug, Clone)]
pub struct LogRegProbe {
    pub w: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl LogRegProbe {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.b + self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent on ℓ2-regularized logistic loss. The step
/// size is 1/L for the curvature bound L = max‖x‖²/4 + λ, so descent is
/// monotone; stops when ‖∇‖ < 1e-6 or after `max_iters`.
pub fn train_logreg(
    features: &[Vec<f64>],
    labels: &[bool],
    l2: f64,
    max_iters: usize,
) -> Result<LogRegProbe, EvalError> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(EvalError::Invalid(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(EvalError::Invalid("ragged feature rows".into()));
    }
    let n = features.len() as f64;
    let max_sq_norm = features
        .iter()
        .map(|f| f.iter().map(|x| x * x).sum::<f64>() + 1.0) // +1 for the intercept column
        .fold(0.0f64, f64::max);
    let lr = 1.0 / (max_sq_norm / 4.0 + l2);

    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..max_iters {
        let mut gw = vec![0.0f64; dim];
        let mut gb = 0.0f64;
        for (x, &y) in features.iter().zip(labels) {
            let z = b + w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            let err = sigmoid(z) - f64::from(u8::from(y));
            for (g, &xi) in gw.iter_mut().zip(x) {
                *g += err * xi;
            }
            gb += err;
        }
        for (g, &wi) in gw.iter_mut().zip(&w) {
            *g = *g / n + l2 * wi;
        }
        gb /= n;
        grad_norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        iterations = it + 1;
        if grad_norm < 1e-6 {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g;
        }
        b -= lr * gb;
    }
    Ok(LogRegProbe { w, b, iterations, grad_norm })
}

/// AUC by the rank statistic: the probability a random positive outscores a
/// random negative, with tied scores counting one half. Average ranks over
/// tie groups make this exactly the pairwise-comparison value.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; everyone in the tie group gets the average
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64;
    Ok(auc)
}

/// Uniformly sample `count` distinct non-edges, seeded. Pairs never collide
/// with graph edges or each other.
pub fn sample_negatives(g: &BipartiteGraph, count: usize, seed: u64) -> Vec<(u32, u32)> {
    use crate::bigraph::Side;
    let (n_u, n_v) = (g.n(Side::U) as u32, g.n(Side::V) as u32);
    let capacity = n_u as u64 * n_v as u64 - g.edges().len() as u64;
    assert!(
        count as u64 <= capacity,
        "requested {count} negatives but only {capacity} non-edges exist"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.gen_range(0..n_u);
        let v = rng.gen_range(0..n_v);
        if !g.has_edge(u, v) && seen.insert((u, v)) {
            out.push((u, v));
        }
    }
    out
}

fn pair_features<S: Scalar>(
    u_emb: &Tensor<S>,
    v_emb: &Tensor<S>,
    pairs: &[(u32, u32)],
) -> Vec<Vec<f64>> {
    pairs
        .iter()
        .map(|&(u, v)| {
            u_emb
                .row(u as usize)
                .iter()
                .chain(v_emb.row(v as usize))
                .map(|x| x.as_f64())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LinkPredReport {
    pub auc: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub probe_iterations: usize,
    pub probe_grad_norm: f64,
}

/// Train the probe on `[u ‖ v]` features of the training pairs and report
/// AUC on the test pairs. Labels: true edges vs sampled non-edges.
#[allow(clippy::too_many_arguments)]
pub fn link_prediction_auc<S: Scalar>(
    u_emb: &Tensor<S>,
    v_emb: &Tensor<S>,
    train_pos: &[(u32, u32)],
    train_neg: &[(u32, u32)],
    test_pos: &[(u32, u32)],
    test_neg: &[(u32, u32)],
    l2: f64,
    max_iters: usize,
) -> Result<LinkPredReport, EvalError> {
    let mut features = pair_features(u_emb, v_emb, train_pos);
    features.extend(pair_features(u_emb, v_emb, train_neg));
    let mut labels = vec![true; train_pos.len()];
    labels.extend(vec![false; train_neg.len()]);
    let probe = train_logreg(&features, &labels, l2, max_iters)?;

    let mut test_features = pair_features(u_emb, v_emb, test_pos);
    test_features.extend(pair_features(u_emb, v_emb, test_neg));
    let scores: Vec<f64> = test_features.iter().map(|x| probe.score(x)).collect();
    let mut test_labels = vec![true; test_pos.len()];
    test_labels.extend(vec![false; test_neg.len()]);
    Ok(LinkPredReport {
        auc: auc(&scores, &test_labels)?,
        train_pairs: features.len(),
        test_pairs: scores.len(),
        probe_iterations: probe.iterations,
        probe_grad_norm: probe.grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfectly_separated_scores_give_auc_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
        let flipped = auc(&scores, &[false, false, true, true]).unwrap();
        assert_eq!(flipped, 0.0);
    }

    #[test]
    fn random_scores_approach_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scores: Vec<f64> = (0..20000).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<bool> = (0..20000).map(|_| rng.gen_bool(0.5)).collect();
        let a = auc(&scores, &labels).unwrap();
        assert!((a - 0.5).abs() < 0.02, "auc {a}");
    }

    #[test]
    fn auc_matches_pairwise_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..25 {
            let n = 20;
            // coarse grid of scores forces plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let mut wins = 0.0;
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if labels[i] && !labels[j] {
                        total += 1.0;
                        if scores[i] > scores[j] {
                            wins += 1.0;
                        } else if scores[i] == scores[j] {
                            wins += 0.5;
                        }
                    }
                }
            }
            let expected = wins / total;
            let got = auc(&scores, &labels).unwrap();
            assert!((got - expected).abs() < 1e-12, "trial {trial}: {got} vs {expected}");
        }
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(EvalError::SingleClass)
        ));
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let scores = [0.1, 0.7, 0.3, 0.9, 0.5];
        let labels = [false, true, false, true, true];
        let a = auc(&scores, &labels).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp() - 2.0).collect();
        let b = auc(&transformed, &labels).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probe_learns_a_separable_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let y = rng.gen_bool(0.5);
            let center = if y { 1.0 } else { -1.0 };
            features.push(vec![
                center + rng.gen_range(-0.3..0.3),
                -center + rng.gen_range(-0.3..0.3),
            ]);
            labels.push(y);
        }
        let probe = train_logreg(&features, &labels, 1e-4, 10_000).unwrap();
        let scores: Vec<f64> = features.iter().map(|x| probe.score(x)).collect();
        let a = auc(&scores, &labels).unwrap();
        assert!(a > 0.99, "auc {a}");
        assert!(probe.w[0] > 0.0 && probe.w[1] < 0.0);
    }

    #[test]
    fn negative_sampling_avoids_edges_and_repeats() {
        let g = BipartiteGraph::from_edges(4, 4, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        let negs = sample_negatives(&g, 12, 7);
        assert_eq!(negs.len(), 12);
        let unique: std::collections::HashSet<_> = negs.iter().collect();
        assert_eq!(unique.len(), 12);
        for &(u, v) in &negs {
            assert!(!g.has_edge(u, v));
        }
        assert_eq!(sample_negatives(&g, 12, 7), negs);
    }

    #[test]
    fn end_to_end_probe_recovers_additive_edge_structure() {
        // Edge probability rises with a per-node activity score that the
        // first embedding coordinate exposes, so the concatenated-feature
        // probe has a genuinely linear problem to solve.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n_u, n_v) = (30usize, 30usize);
        let act_u: Vec<f64> = (0..n_u).map(|_| rng.gen::<f64>()).collect();
        let act_v: Vec<f64> = (0..n_v).map(|_| rng.gen::<f64>()).collect();
        let mut edges = Vec::new();
        for u in 0..n_u {
            for v in 0..n_v {
                let p = sigmoid(6.0 * (act_u[u] + act_v[v] - 1.2));
                if rng.gen_bool(p) {
                    edges.push((u as u32, v as u32));
                }
            }
        }
        let g = BipartiteGraph::from_edges(n_u, n_v, edges);
        let emb = |acts: &[f64], rng: &mut ChaCha8Rng| {
            Tensor::from_rows(
                &acts
                    .iter()
                    .map(|&a| vec![a, rng.gen_range(-0.1..0.1)])
                    .collect::<Vec<_>>(),
            )
        };
        let u = emb(&act_u, &mut rng);
        let v = emb(&act_v, &mut rng);
        let edges = g.edges();
        let split = edges.len() / 2;
        let negs = sample_negatives(&g, edges.len(), 3);
        let report = link_prediction_auc(
            &u,
            &v,
            &edges[..split],
            &negs[..split],
            &edges[split..],
            &negs[split..],
            1e-4,
            10_000,
        )
        .unwrap();
        assert!(report.auc > 0.75, "auc {}", report.auc);
    }
}
