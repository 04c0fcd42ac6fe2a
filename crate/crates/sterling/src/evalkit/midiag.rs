//! Diagnostic for the information bound: the co-cluster mutual information
//! I(K;L) should not exceed what the embeddings themselves carry about each
//! other, estimated by quantizing each side into discrete codes and
//! measuring discrete MI under the joint node distribution.

use crate::diff::Tensor;
use crate::objectives::{mutual_information, JointClusterDistribution};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct MiDiagnostic {
    /// I(K;L) from the model's co-cluster joint, in nats.
    pub i_cluster: f64,
    /// Plug-in estimate of I between the quantized embeddings, in nats.
    pub i_quantized: f64,
    pub bins: usize,
    /// Caveats a reader needs before trusting the comparison.
    pub note: String,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Quantize embedding rows into `bins` codes: farthest-first initialization
/// starting from row 0, then Lloyd iterations until assignments stabilize
/// (at most `max_iters`). Deterministic; ties resolve to the lower index.
pub fn kmeans_codes<S: Scalar>(emb: &Tensor<S>, bins: usize, max_iters: usize) -> Vec<usize> {
    assert!(bins >= 1, "need at least one bin");
    let n = emb.rows();
    let d = emb.cols();
    if n == 0 {
        return Vec::new();
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| emb.row(r).iter().map(|x| x.as_f64()).collect())
        .collect();
    let k = bins.min(n);

    let mut centers: Vec<Vec<f64>> = vec![rows[0].clone()];
    let mut nearest: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let far = (0..n)
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
            .unwrap();
        centers.push(rows[far].clone());
        for (dist, row) in nearest.iter_mut().zip(&rows) {
            *dist = dist.min(sq_dist(row, centers.last().unwrap()));
        }
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        rows.iter()
            .map(|r| {
                let mut best = 0usize;
                let mut best_d = sq_dist(r, &centers[0]);
                for (c, center) in centers.iter().enumerate().skip(1) {
                    let dd = sq_dist(r, center);
                    if dd < best_d {
                        best_d = dd;
                        best = c;
                    }
                }
                best
            })
            .collect()
    };

    let mut codes = assign(&centers);
    for _ in 0..max_iters {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows
                .iter()
                .zip(&codes)
                .filter(|(_, &code)| code == c)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                continue; // keep the stale center rather than inventing one
            }
            for j in 0..d {
                center[j] = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            }
        }
        let next = assign(&centers);
        if next == codes {
            break;
        }
        codes = next;
    }
    codes
}

/// Estimate I between the two sides' quantized embeddings under the joint
/// node distribution `p_uv`, and report it alongside the model's I(K;L).
pub fn mi_bound_diagnostic<S: Scalar>(
    u_emb: &Tensor<S>,
    v_emb: &Tensor<S>,
    p_uv: &Tensor<f64>,
    cluster_joint: &JointClusterDistribution,
    bins: usize,
) -> MiDiagnostic {
    assert_eq!(p_uv.rows(), u_emb.rows(), "p(u,v) rows must match U nodes");
    assert_eq!(p_uv.cols(), v_emb.rows(), "p(u,v) cols must match V nodes");
    let codes_u = kmeans_codes(u_emb, bins, 100);
    let codes_v = kmeans_codes(v_emb, bins, 100);
    let mut q = Tensor::<f64>::zeros(bins.max(1), bins.max(1));
    for u in 0..p_uv.rows() {
        for v in 0..p_uv.cols() {
            let cell = q.get(codes_u[u], codes_v[v]) + p_uv.get(u, v);
            q.set(codes_u[u], codes_v[v], cell);
        }
    }
    let quantized = JointClusterDistribution::from_joint(q);
    MiDiagnostic {
        i_cluster: mutual_information(cluster_joint),
        i_quantized: mutual_information(&quantized),
        bins,
        note: "plug-in MI over k-means codes; finite binning can only lose \
               information, and small-sample bias inflates both estimates"
            .to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[usize], k: usize) -> Tensor<f64> {
        Tensor::from_fn(labels.len(), k, |r, c| f64::from(u8::from(labels[r] == c)))
    }

    #[test]
    fn identity_quantization_recovers_cluster_mi() {
        // embeddings are exact one-hot cluster indicators; bins = N_K makes
        // quantization the identity, so both MI values must coincide
        let labels_u = vec![0, 0, 1, 1, 0, 1];
        let labels_v = vec![0, 1, 1, 0, 1, 0, 1];
        let u = one_hot(&labels_u, 2);
        let v = one_hot(&labels_v, 2);
        // joint concentrated on matching blocks
        let p_uv = Tensor::from_fn(6, 7, |r, c| {
            if labels_u[r] == labels_v[c] { 1.0 } else { 0.01 }
        });
        let z = p_uv.sum();
        let p_uv = p_uv.scale(1.0 / z);

        // cluster joint computed from the same indicator matrices
        let pu = one_hot(&labels_u, 2);
        let pv = one_hot(&labels_v, 2);
        let joint = pu.matmul_tn(&p_uv).matmul(&pv);
        let d = JointClusterDistribution::from_joint(joint);

        let diag = mi_bound_diagnostic(&u, &v, &p_uv, &d, 2);
        assert!(
            (diag.i_quantized - diag.i_cluster).abs() < 1e-9,
            "{} vs {}",
            diag.i_quantized,
            diag.i_cluster
        );
    }

    #[test]
    fn single_bin_estimates_zero() {
        let u = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let v = u.clone();
        let p_uv = Tensor::filled(2, 2, 0.25);
        let d = JointClusterDistribution::from_joint(Tensor::filled(2, 2, 0.25));
        let diag = mi_bound_diagnostic(&u, &v, &p_uv, &d, 1);
        assert_eq!(diag.i_quantized, 0.0);
    }

    #[test]
    fn kmeans_separates_obvious_blobs() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let center = if i < 5 { 0.0 } else { 10.0 };
            rows.push(vec![center + 0.1 * i as f64, center]);
        }
        let emb = Tensor::from_rows(&rows);
        let codes = kmeans_codes(&emb, 2, 100);
        let first = codes[0];
        let second = codes[5];
        assert_ne!(first, second);
        assert!(codes[..5].iter().all(|&c| c == first));
        assert!(codes[5..].iter().all(|&c| c == second));
    }

    #[test]
    fn kmeans_is_deterministic() {
        let emb = Tensor::from_fn(30, 3, |r, c| ((r * 7 + c * 13) % 11) as f64);
        assert_eq!(kmeans_codes(&emb, 4, 100), kmeans_codes(&emb, 4, 100));
    }
}
