//! Agreement between predicted clusters and ground-truth classes: NMI with
//! geometric-mean normalization, and accuracy under the optimal injective
//! cluster→class mapping.

use crate::diff::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct ClusterScore {
    pub nmi: f64,
    pub acc: f64,
    /// Hard cluster per node (argmax row of the probability matrix).
    pub assignment: Vec<usize>,
    /// Optimal class for each cluster; `None` for clusters the matching
    /// left unpaired (possible when there are more clusters than classes).
    pub mapping: Vec<Option<usize>>,
}

/// Minimal-cost perfect matching on a square cost matrix (Hungarian
/// algorithm with potentials, O(n³)). Returns the column chosen for each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched = vec![0usize; n + 1]; // matched[j] = row occupying column j (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        // unwind the augmenting path
        while j0 != 0 {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if matched[j] > 0 {
            row_to_col[matched[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// NMI between two discrete labelings: I(a;b) / √(H(a)·H(b)), natural log,
/// with the 0·ln 0 = 0 convention. Zero when either labeling is constant.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must align");
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut joint = vec![vec![0usize; kb]; ka];
    let mut ma = vec![0usize; ka];
    let mut mb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x][y] += 1;
        ma[x] += 1;
        mb[y] += 1;
    }
    let nf = n as f64;
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let (ha, hb) = (entropy(&ma), entropy(&mb));
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x][y];
            if c > 0 {
                let p = c as f64 / nf;
                mi += p * (p / (ma[x] as f64 / nf) / (mb[y] as f64 / nf)).ln();
            }
        }
    }
    mi / (ha * hb).sqrt()
}

/// Best-mapping accuracy: the confusion matrix between clusters and classes
/// is matched by the assignment problem; clusters beyond the class count
/// stay unmatched and contribute zero.
pub fn accuracy_with_mapping(
    assignment: &[usize],
    labels: &[usize],
) -> (f64, Vec<Option<usize>>) {
    assert_eq!(assignment.len(), labels.len(), "labelings must align");
    let n = assignment.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let k = assignment.iter().max().map_or(0, |&m| m + 1);
    let c = labels.iter().max().map_or(0, |&m| m + 1);
    let side = k.max(c);
    let mut counts = vec![vec![0usize; side]; side];
    for (&a, &l) in assignment.iter().zip(labels) {
        counts[a][l] += 1;
    }
    let cost: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&x| -(x as f64)).collect())
        .collect();
    let row_to_col = hungarian(&cost);
    let correct: usize = (0..side).map(|r| counts[r][row_to_col[r]]).sum();
    let mapping: Vec<Option<usize>> = (0..k)
        .map(|r| {
            let col = row_to_col[r];
            (col < c && counts[r][col] > 0).then_some(col)
        })
        .collect();
    (correct as f64 / n as f64, mapping)
}

/// Score soft cluster probabilities against ground-truth classes. The hard
/// assignment takes each row's argmax (lowest index on ties).
pub fn cocluster_score<S: Scalar>(probs: &Tensor<S>, labels: &[usize]) -> ClusterScore {
    assert_eq!(probs.rows(), labels.len(), "one label per node");
    let assignment: Vec<usize> = (0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            let mut best = 0usize;
            for (i, &x) in row.iter().enumerate() {
                if x.as_f64() > row[best].as_f64() {
                    best = i;
                }
            }
            best
        })
        .collect();
    let nmi = nmi(&assignment, labels);
    let (acc, mapping) = accuracy_with_mapping(&assignment, labels);
    ClusterScore { nmi, acc, assignment, mapping }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over injective cluster→class mappings.
    fn acc_oracle(assignment: &[usize], labels: &[usize]) -> f64 {
        let k = assignment.iter().max().map_or(0, |&m| m + 1);
        let c = labels.iter().max().map_or(0, |&m| m + 1);
        let side = k.max(c);
        let mut counts = vec![vec![0usize; side]; side];
        for (&a, &l) in assignment.iter().zip(labels) {
            counts[a][l] += 1;
        }
        fn best(counts: &[Vec<usize>], row: usize, taken: &mut Vec<bool>) -> usize {
            if row == counts.len() {
                return 0;
            }
            let mut best_total = 0;
            for col in 0..counts.len() {
                if !taken[col] {
                    taken[col] = true;
                    let total = counts[row][col] + best(counts, row + 1, taken);
                    best_total = best_total.max(total);
                    taken[col] = false;
                }
            }
            best_total
        }
        best(&counts, 0, &mut vec![false; side]) as f64 / assignment.len() as f64
    }

    #[test]
    fn perfect_agreement_scores_one() {
        let labels = vec![0, 0, 1, 1, 2, 2];
        let probs = Tensor::from_rows(&[
            vec![0.9, 0.05, 0.05],
            vec![0.8, 0.1, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.1, 0.1, 0.8],
            vec![0.0, 0.1, 0.9],
        ]);
        let score = cocluster_score::<f64>(&probs, &labels);
        assert!((score.nmi - 1.0).abs() < 1e-12);
        assert!((score.acc - 1.0).abs() < 1e-12);
        assert_eq!(score.mapping, vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn relabeled_clusters_still_score_one() {
        // same partition, permuted cluster ids
        let labels = vec![0, 0, 1, 1];
        let assignment = vec![1, 1, 0, 0];
        assert!((nmi(&assignment, &labels) - 1.0).abs() < 1e-12);
        let (acc, mapping) = accuracy_with_mapping(&assignment, &labels);
        assert_eq!(acc, 1.0);
        assert_eq!(mapping, vec![Some(1), Some(0)]);
    }

    #[test]
    fn single_cluster_gives_zero_nmi() {
        let labels = vec![0, 1, 0, 1];
        let assignment = vec![0, 0, 0, 0];
        assert_eq!(nmi(&assignment, &labels), 0.0);
        // constant labels likewise
        assert_eq!(nmi(&labels, &assignment), 0.0);
    }

    #[test]
    fn nmi_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a: Vec<usize> = (0..40).map(|_| rng.gen_range(0..4)).collect();
            let b: Vec<usize> = (0..40).map(|_| rng.gen_range(0..3)).collect();
            assert!((nmi(&a, &b) - nmi(&b, &a)).abs() < 1e-12);
            let v = nmi(&a, &b);
            assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn twelve_node_confusion_matches_permutation_oracle() {
        let assignment = vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 0, 1, 2];
        let labels = vec![1, 1, 0, 0, 0, 2, 2, 2, 1, 1, 0, 2];
        let (acc, _) = accuracy_with_mapping(&assignment, &labels);
        assert!((acc - acc_oracle(&assignment, &labels)).abs() < 1e-12);
    }

    #[test]
    fn hungarian_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..25 {
            let n = rng.gen_range(8..30);
            let k = rng.gen_range(2..6);
            let c = rng.gen_range(2..6);
            let assignment: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            let (acc, mapping) = accuracy_with_mapping(&assignment, &labels);
            let expected = acc_oracle(&assignment, &labels);
            assert!(
                (acc - expected).abs() < 1e-12,
                "trial {trial}: {acc} vs {expected}"
            );
            // injectivity over assigned classes
            let assigned: Vec<usize> = mapping.iter().flatten().copied().collect();
            let unique: std::collections::HashSet<_> = assigned.iter().collect();
            assert_eq!(assigned.len(), unique.len());
        }
    }

    #[test]
    fn extra_clusters_score_zero_for_unmatched() {
        // 3 clusters, 2 classes: the worst cluster must stay unmatched
        let assignment = vec![0, 0, 1, 1, 2];
        let labels = vec![0, 0, 1, 1, 0];
        let (acc, mapping) = accuracy_with_mapping(&assignment, &labels);
        assert!((acc - 0.8).abs() < 1e-12);
        assert_eq!(mapping[2], None);
    }
}
