//! Per-impression ranking metrics. Each returns `None` when the metric is
//! undefined for the impression (no positive, or for AUC no negative).

/// Candidate indices by descending score; ties keep the original order.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

/// Fraction of (positive, negative) pairs ordered correctly, ties ½.
pub fn auc_impression(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Mean reciprocal rank over all positives.
pub fn mrr_impression(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let order = ranking(scores);
    let rr: Vec<f64> = order
        .iter()
        .enumerate()
        .filter(|(_, &i)| labels[i] == 1)
        .map(|(rank, _)| 1.0 / (rank + 1) as f64)
        .collect();
    if rr.is_empty() {
        return None;
    }
    Some(rr.iter().sum::<f64>() / rr.len() as f64)
}

pub fn ndcg_at_k(scores: &[f64], labels: &[u8], k: usize) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return None;
    }
    let gain = |rank: usize| 1.0 / ((rank + 2) as f64).log2();
    let dcg: f64 = ranking(scores)
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &i)| labels[i] == 1)
        .map(|(rank, _)| gain(rank))
        .sum();
    let ideal: f64 = (0..positives.min(k)).map(gain).sum();
    Some(dcg / ideal)
}

/// All four metrics, or `None` if the impression lacks a positive or a
/// negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpressionMetrics {
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
}

pub fn impression_metrics(scores: &[f64], labels: &[u8]) -> Option<ImpressionMetrics> {
    Some(ImpressionMetrics {
        auc: auc_impression(scores, labels)?,
        mrr: mrr_impression(scores, labels)?,
        ndcg5: ndcg_at_k(scores, labels, 5)?,
        ndcg10: ndcg_at_k(scores, labels, 10)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc_impression(&[0.9, 0.1], &[1, 0]), Some(1.0));
        assert_eq!(auc_impression(&[0.4; 5], &[1, 0, 1, 0, 0]), Some(0.5));
        assert_eq!(auc_impression(&[0.3, 0.9, 0.1], &[1, 0, 0]), Some(0.5));
        assert_eq!(auc_impression(&[0.3, 0.9], &[1, 1]), None);
        assert_eq!(auc_impression(&[0.3, 0.9], &[0, 0]), None);
    }

    #[test]
    fn mrr_examples() {
        assert_eq!(mrr_impression(&[0.9, 0.5, 0.1], &[1, 0, 0]), Some(1.0));
        assert_eq!(mrr_impression(&[0.1, 0.5, 0.9], &[1, 0, 0]), Some(1.0 / 3.0));
        assert_eq!(mrr_impression(&[0.9, 0.5, 0.4, 0.1], &[1, 0, 0, 1]), Some(0.625));
        assert_eq!(mrr_impression(&[0.9], &[0]), None);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[0.9, 0.5], &[1, 0], 5), Some(1.0));
        let r2 = ndcg_at_k(&[0.5, 0.9, 0.1], &[1, 0, 0], 5).unwrap();
        assert!((r2 - 1.0 / 3f64.log2()).abs() < 1e-15 && (r2 - 0.6309).abs() < 1e-4);
        let scores: Vec<f64> = (0..8).map(|i| -(i as f64)).collect();
        let mut labels = vec![0; 8];
        labels[6] = 1;
        assert_eq!(ndcg_at_k(&scores, &labels, 5), Some(0.0));
    }

    #[test]
    fn ties_follow_candidate_order() {
        assert_eq!(ranking(&[1.0, 2.0, 1.0, 2.0]), vec![1, 3, 0, 2]);
    }

    fn impression() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..12).prop_flat_map(|n| {
            (
                proptest::collection::vec(-5.0f64..5.0, n),
                proptest::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance((s, l) in impression()) {
            let t: Vec<f64> = s.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(impression_metrics(&s, &l), impression_metrics(&t, &l));
        }

        #[test]
        fn auc_of_negated_scores((s, l) in impression()) {
            let mut sorted = s.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            if let Some(a) = auc_impression(&s, &l) {
                let neg: Vec<f64> = s.iter().map(|x| -x).collect();
                prop_assert!((a - (1.0 - auc_impression(&neg, &l).unwrap())).abs() < 1e-12);
            }
        }

        #[test]
        fn dcg_monotone_in_k((s, l) in impression()) {
            if let Some(n5) = ndcg_at_k(&s, &l, 5) {
                let n10 = ndcg_at_k(&s, &l, 10).unwrap();
                let dcg = |k: usize| ranking(&s).iter().take(k).enumerate()
                    .filter(|(_, &i)| l[i] == 1).map(|(r, _)| 1.0 / ((r + 2) as f64).log2()).sum::<f64>();
                prop_assert!(dcg(10) >= dcg(5));
                prop_assert!((0.0..=1.0 + 1e-12).contains(&n5) && (0.0..=1.0 + 1e-12).contains(&n10));
            }
        }
    }
}
