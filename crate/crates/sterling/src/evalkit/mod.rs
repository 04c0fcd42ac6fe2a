//! Downstream evaluation: top-K recommendation metrics, a logistic-regression
//! link-prediction probe, co-clustering agreement scores, and a diagnostic
//! comparing the co-cluster mutual information against a discretized
//! estimate from the embeddings themselves.

mod cocluster;
mod linkpred;
mod midiag;
mod ranking;

pub use cocluster::{accuracy_with_mapping, cocluster_score, nmi, ClusterScore};
pub use linkpred::{auc, link_prediction_auc, sample_negatives, train_logreg, LinkPredReport, LogRegProbe};
pub use midiag::{kmeans_codes, mi_bound_diagnostic, MiDiagnostic};
pub use ranking::{rank_by_cosine, recommend_metrics, RankedList, RankingMetrics};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("test set contains a single class; AUC is undefined")]
    SingleClass,
    #[error("{0}")]
    Invalid(String),
}

/// The JSON document every evaluation command writes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsFile {
    pub dataset: String,
    pub split: String,
    pub metrics: BTreeMap<String, f64>,
    pub config_hash: String,
    pub seed: u64,
}

/// Mean pairwise cosine over up to `sample` rows (seeded choice when the
/// matrix has more). Values near 1 mean the representation has collapsed.
pub fn mean_pairwise_cosine<S: crate::scalar::Scalar>(
    emb: &crate::diff::Tensor<S>,
    sample: usize,
    seed: u64,
) -> f64 {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rows: Vec<usize> = (0..emb.rows()).collect();
    if rows.len() > sample {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rows.shuffle(&mut rng);
        rows.truncate(sample);
        rows.sort_unstable();
    }
    let norms = emb.row_norms();
    let mut acc = 0.0;
    let mut count = 0usize;
    for (i, &a) in rows.iter().enumerate() {
        for &b in &rows[i + 1..] {
            let dot: f64 = emb
                .row(a)
                .iter()
                .zip(emb.row(b))
                .map(|(x, y)| (*x * *y).as_f64())
                .sum();
            let denom = (norms[a] * norms[b]).as_f64().max(crate::diff::EPS);
            acc += dot / denom;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Hex SHA-256 of the resolved config (serde_json orders keys, so the
/// serialization is canonical).
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_and_key_order_independent() {
        let a: serde_json::Value = serde_json::from_str(r#"{"a": 1, "b": 2}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"b": 2, "a": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        let c: serde_json::Value = serde_json::from_str(r#"{"a": 1, "b": 3}"#).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }
}
