//! Synthetic minority oversampling: every class is brought up to the
//! majority count by interpolating between a sample and one of its k
//! nearest same-class neighbors.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Default)]
pub struct SmoteResult {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Classes that had a single sample and were duplicated instead of
    /// interpolated.
    pub duplicated_classes: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Balance classes to the majority count. Deterministic under `seed`.
pub fn smote(samples: &[Vec<f64>], labels: &[usize], k: usize, seed: u64) -> SmoteResult {
    assert_eq!(samples.len(), labels.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    let majority = by_class.values().map(|v| v.len()).max().unwrap_or(0);

    let mut out = SmoteResult {
        samples: samples.to_vec(),
        labels: labels.to_vec(),
        duplicated_classes: Vec::new(),
    };

    for (&class, members) in &by_class {
        let need = majority - members.len();
        if need == 0 {
            continue;
        }
        if members.len() == 1 {
            let lone = &samples[members[0]];
            for _ in 0..need {
                out.samples.push(lone.clone());
                out.labels.push(class);
            }
            out.duplicated_classes.push(class);
            continue;
        }
        for _ in 0..need {
            let base = members[rng.random_range(0..members.len())];
            // k nearest same-class neighbors of the base point
            let mut dists: Vec<(usize, f64)> = members
                .iter()
                .filter(|&&j| j != base)
                .map(|&j| (j, sq_dist(&samples[base], &samples[j])))
                .collect();
            dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            dists.truncate(k.max(1));
            let (neighbor, _) = dists[rng.random_range(0..dists.len())];
            let u: f64 = rng.random();
            let point: Vec<f64> = samples[base]
                .iter()
                .zip(&samples[neighbor])
                .map(|(&a, &b)| a + u * (b - a))
                .collect();
            out.samples.push(point);
            out.labels.push(class);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_input_unchanged() {
        let samples = vec![vec![1.0], vec![2.0], vec![10.0], vec![11.0]];
        let labels = vec![0, 0, 1, 1];
        let r = smote(&samples, &labels, 5, 1);
        assert_eq!(r.samples, samples);
        assert_eq!(r.labels, labels);
        assert!(r.duplicated_classes.is_empty());
    }

    #[test]
    fn synthetic_points_lie_on_the_segment() {
        let samples = vec![vec![0.0], vec![10.0], vec![5.0], vec![6.0], vec![7.0], vec![8.0]];
        let labels = vec![0, 0, 1, 1, 1, 1];
        let r = smote(&samples, &labels, 5, 7);
        assert_eq!(r.labels.iter().filter(|&&l| l == 0).count(), 4);
        for (s, &l) in r.samples.iter().zip(&r.labels).skip(samples.len()) {
            assert_eq!(l, 0);
            assert!((0.0..=10.0).contains(&s[0]), "synthetic {s:?} off segment");
        }
    }

    #[test]
    fn counts_equal_majority_for_every_class() {
        let samples: Vec<Vec<f64>> = (0..13).map(|i| vec![i as f64]).collect();
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 3];
        let r = smote(&samples, &labels, 3, 42);
        for class in 0..4 {
            assert_eq!(r.labels.iter().filter(|&&l| l == class).count(), 7);
        }
        assert_eq!(r.duplicated_classes, vec![3]);
        // singles duplicated verbatim
        for (s, &l) in r.samples.iter().zip(&r.labels).skip(samples.len()) {
            if l == 3 {
                assert_eq!(s, &vec![12.0]);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let samples: Vec<Vec<f64>> = (0..9).map(|i| vec![(i * i) as f64]).collect();
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 2, 2];
        let a = smote(&samples, &labels, 2, 99);
        let b = smote(&samples, &labels, 2, 99);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.labels, b.labels);
    }
}
