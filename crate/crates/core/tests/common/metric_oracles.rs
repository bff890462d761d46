//! Metric oracles shared by the metric tests and the acceptance suite.

use fedsplit::error::MetricError;
use fedsplit::metrics::{auc_from_counts, f1_binary, roc_auc};
use fedsplit::rng::SplitMix64;

/// O(n²) pair count, the textbook definition.
pub fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut c, mut t, mut p, mut n) = (0u64, 0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            p += 1;
        } else {
            n += 1;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                if scores[i] > scores[j] {
                    c += 1;
                } else if scores[i] == scores[j] {
                    t += 1;
                }
            }
        }
    }
    auc_from_counts(c, t, p, n)
}

pub fn random_instances_match_brute_force(count: usize) {
    let mut rng = SplitMix64::new(99);
    let mut done = 0;
    while done < count {
        let n = 2 + rng.below(49) as usize;
        let labels: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            continue;
        }
        // coarse grid so ties are common
        let levels = 1 + rng.below(12);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.below(levels) as f64 / levels as f64)
            .collect();
        assert_eq!(
            roc_auc(&scores, &labels).unwrap(),
            brute_auc(&scores, &labels)
        );
        done += 1;
    }
}

pub fn worked_examples() {
    assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0]).unwrap(), 0.75);
    assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
    assert!(matches!(
        roc_auc(&[0.1, 0.2], &[1, 1]),
        Err(MetricError::SingleClass)
    ));
    assert!((f1_binary(&[1, 1, 0], &[1, 0, 0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(f1_binary(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
    assert_eq!(f1_binary(&[0, 0, 0], &[1, 0, 1]).unwrap(), 0.0);
}
