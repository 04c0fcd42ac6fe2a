//! Top-K recommendation metrics over per-user ranked item lists.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::diff::Tensor;
use crate::scalar::Scalar;

/// One user's ranking: candidate items in descending score order (training
/// items already excluded) and the held-out relevant set.
#[derive(Debug, Clone)]
pub struct RankedList {
    pub user: u32,
    pub items: Vec<u32>,
    pub relevant: HashSet<u32>,
}

/// Metrics at one cutoff, averaged over users with ≥ 1 relevant item and
/// reported ×100.
#[derive(Debug, Clone)]
pub struct RankingMetrics {
    pub k: usize,
    pub f1: f64,
    pub ndcg: f64,
    pub map: f64,
    pub mrr: f64,
    pub users: usize,
}

fn per_user(list: &RankedList, k: usize) -> (f64, f64, f64, f64) {
    let k_eff = k.min(list.items.len());
    let mut hits = 0usize;
    let mut dcg = 0.0;
    let mut ap_sum = 0.0;
    let mut rr = 0.0;
    for (i, item) in list.items.iter().take(k_eff).enumerate() {
        if list.relevant.contains(item) {
            let rank = i + 1;
            hits += 1;
            dcg += 1.0 / ((rank + 1) as f64).log2();
            ap_sum += hits as f64 / rank as f64;
            if rr == 0.0 {
                rr = 1.0 / rank as f64;
            }
        }
    }
    let n_rel = list.relevant.len();
    let precision = if k_eff == 0 { 0.0 } else { hits as f64 / k_eff as f64 };
    let recall = hits as f64 / n_rel as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let ideal: f64 = (0..n_rel.min(k))
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ndcg = if ideal > 0.0 { dcg / ideal } else { 0.0 };
    let ap = ap_sum / n_rel.min(k).max(1) as f64;
    (f1, ndcg, ap, rr)
}

/// F1@K, NDCG@K, MAP@K and MRR@K for each cutoff. Gains are binary; DCG
/// discounts by 1/log₂(rank+1) with the ideal DCG over min(K, |relevant|).
/// Users whose relevant set is empty are excluded from every average.
pub fn recommend_metrics(lists: &[RankedList], k_values: &[usize]) -> Vec<RankingMetrics> {
    let eligible: Vec<&RankedList> = lists.iter().filter(|l| !l.relevant.is_empty()).collect();
    k_values
        .iter()
        .map(|&k| {
            let (mut f1, mut ndcg, mut map, mut mrr) = (0.0, 0.0, 0.0, 0.0);
            for list in &eligible {
                let (a, b, c, d) = per_user(list, k);
                f1 += a;
                ndcg += b;
                map += c;
                mrr += d;
            }
            let n = eligible.len().max(1) as f64;
            RankingMetrics {
                k,
                f1: 100.0 * f1 / n,
                ndcg: 100.0 * ndcg / n,
                map: 100.0 * map / n,
                mrr: 100.0 * mrr / n,
                users: eligible.len(),
            }
        })
        .collect()
}

/// Rank every non-training item for each test user by cosine similarity
/// between the online embeddings. Ties break toward the lower item index so
/// rankings are reproducible.
pub fn rank_by_cosine<S: Scalar>(
    u_emb: &Tensor<S>,
    v_emb: &Tensor<S>,
    train_items: &[Vec<u32>],
    test_pairs: &[(u32, u32)],
) -> Vec<RankedList> {
    let mut relevant: Vec<HashSet<u32>> = vec![HashSet::new(); u_emb.rows()];
    for &(u, v) in test_pairs {
        relevant[u as usize].insert(v);
    }
    let users: Vec<u32> = (0..u_emb.rows() as u32)
        .filter(|&u| !relevant[u as usize].is_empty())
        .collect();

    let scores = u_emb.matmul_nt(v_emb);
    let u_norms = u_emb.row_norms();
    let v_norms = v_emb.row_norms();
    let eps = S::from_f64(crate::diff::EPS);

    users
        .into_par_iter()
        .map(|u| {
            let ui = u as usize;
            let exclude: HashSet<u32> = train_items
                .get(ui)
                .map(|v| v.iter().copied().collect())
                .unwrap_or_default();
            let mut scored: Vec<(f64, u32)> = (0..v_emb.rows() as u32)
                .filter(|v| !exclude.contains(v))
                .map(|v| {
                    let denom = (u_norms[ui] * v_norms[v as usize]).max(eps);
                    let c = (scores.get(ui, v as usize) / denom).as_f64();
                    (c, v)
                })
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            RankedList {
                user: u,
                items: scored.into_iter().map(|(_, v)| v).collect(),
                relevant: relevant[ui].clone(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(items: &[u32], relevant: &[u32]) -> RankedList {
        RankedList {
            user: 0,
            items: items.to_vec(),
            relevant: relevant.iter().copied().collect(),
        }
    }

    #[test]
    fn ndcg_matches_hand_computation() {
        // relevance pattern [1, 0, 1] at K=3 with 2 relevant items:
        // DCG = 1 + 1/log₂4, IDCG = 1 + 1/log₂3
        let l = list(&[10, 11, 12], &[10, 12]);
        let m = recommend_metrics(&[l], &[3]);
        let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((m[0].ndcg / 100.0 - expected).abs() < 1e-12);
        assert!((expected - 0.9197).abs() < 1e-4);
    }

    #[test]
    fn first_item_relevant_gives_full_mrr() {
        let l = list(&[5, 6, 7], &[5]);
        let m = recommend_metrics(&[l], &[3]);
        assert!((m[0].mrr - 100.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_topk_gives_f1_one() {
        let l = list(&[1, 2, 3, 4], &[1, 2, 3]);
        let m = recommend_metrics(&[l], &[3]);
        assert!((m[0].f1 - 100.0).abs() < 1e-12);
        assert!((m[0].ndcg - 100.0).abs() < 1e-12);
        assert!((m[0].map - 100.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_k_reduces_f1_to_set_based() {
        let l = list(&[1, 2, 3, 4, 5], &[2, 9]);
        let m = recommend_metrics(&[l], &[usize::MAX]);
        // set-based: precision 1/5, recall 1/2 → F1 = 2·(1/5·1/2)/(1/5+1/2)
        let p: f64 = 0.2;
        let r = 0.5;
        let f1 = 2.0 * p * r / (p + r);
        assert!((m[0].f1 / 100.0 - f1).abs() < 1e-12);
    }

    #[test]
    fn users_without_relevant_items_are_excluded() {
        let a = list(&[1, 2], &[1]);
        let b = list(&[1, 2], &[]);
        let m = recommend_metrics(&[a.clone(), b], &[1]);
        let solo = recommend_metrics(&[a], &[1]);
        assert_eq!(m[0].users, 1);
        assert!((m[0].f1 - solo[0].f1).abs() < 1e-12);
    }

    #[test]
    fn map_matches_manual_average_precision() {
        // ranks 1,3 relevant of 2 total → AP@3 = (1/1 + 2/3)/2
        let l = list(&[10, 11, 12], &[10, 12]);
        let m = recommend_metrics(&[l], &[3]);
        assert!((m[0].map / 100.0 - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_ranking_excludes_training_items_and_sorts() {
        let u = Tensor::from_rows(&[vec![1.0f64, 0.0]]);
        let v = Tensor::from_rows(&[
            vec![1.0, 0.0],   // item 0: cos 1, but in training set
            vec![0.6, 0.8],   // item 1: cos 0.6
            vec![0.99, 0.14], // item 2: cos ≈ 0.99
            vec![-1.0, 0.0],  // item 3: cos −1
        ]);
        let lists = rank_by_cosine(&u, &v, &[vec![0]], &[(0, 1)]);
        assert_eq!(lists.len(), 1);
        assert_eq!(lists[0].items, vec![2, 1, 3]);
        assert!(lists[0].relevant.contains(&1));
    }
}
