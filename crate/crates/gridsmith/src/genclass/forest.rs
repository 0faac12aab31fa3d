//! Random forest of CART trees (Gini impurity), grown on bootstrap
//! resamples. Deterministic under a fixed seed: per-tree RNG streams are
//! derived from the forest seed, so training order cannot change results.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf {
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn counts_for<'a>(&'a self, x: &[f64]) -> &'a Vec<usize> {
        match self {
            Node::Leaf { counts } => counts,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.counts_for(x)
                } else {
                    right.counts_for(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    root: Node,
}

fn gini(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

fn class_counts(labels: &[usize], idx: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &i in idx {
        counts[labels[i]] += 1;
    }
    counts
}

fn grow(
    samples: &[Vec<f64>],
    labels: &[usize],
    idx: &mut Vec<usize>,
    n_classes: usize,
    min_split: usize,
) -> Node {
    let counts = class_counts(labels, idx, n_classes);
    let impurity = gini(&counts);
    if idx.len() < min_split || impurity == 0.0 {
        return Node::Leaf { counts };
    }

    let n_features = samples[0].len();
    let mut best: Option<(usize, f64, f64)> = None; // feature, threshold, score
    for feature in 0..n_features {
        idx.sort_by(|&a, &b| samples[a][feature].total_cmp(&samples[b][feature]));
        let mut left = vec![0usize; n_classes];
        let mut right = counts.clone();
        let total = idx.len() as f64;
        for w in 0..idx.len() - 1 {
            let i = idx[w];
            left[labels[i]] += 1;
            right[labels[i]] -= 1;
            let (a, b) = (samples[idx[w]][feature], samples[idx[w + 1]][feature]);
            if a == b {
                continue;
            }
            let nl = (w + 1) as f64;
            let nr = total - nl;
            let score = nl / total * gini(&left) + nr / total * gini(&right);
            if best.map_or(true, |(_, _, s)| score < s - 1e-15) {
                best = Some((feature, 0.5 * (a + b), score));
            }
        }
    }

    match best {
        Some((feature, threshold, score)) if score < impurity - 1e-12 => {
            let (mut li, mut ri): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| samples[i][feature] <= threshold);
            let left = grow(samples, labels, &mut li, n_classes, min_split);
            let right = grow(samples, labels, &mut ri, n_classes, min_split);
            Node::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
        _ => Node::Leaf { counts },
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub n_classes: usize,
    pub seed: u64,
    trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_samples_split: 2,
        }
    }
}

impl Forest {
    /// Train on (samples, labels) with labels in 0..n_classes.
    pub fn train(
        samples: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Forest {
        assert!(!samples.is_empty(), "empty training set");
        let n = samples.len();
        let trees = (0..params.n_trees)
            .map(|t| {
                // independent stream per tree: insensitive to tree order
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9e3779b9));
                let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                idx.sort_unstable();
                Tree {
                    root: grow(samples, labels, &mut idx, n_classes, params.min_samples_split),
                }
            })
            .collect();
        Forest {
            n_classes,
            seed,
            trees,
        }
    }

    /// Per-class vote totals across trees.
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        let mut votes = vec![0usize; self.n_classes];
        for tree in &self.trees {
            let counts = tree.root.counts_for(x);
            if let Some(class) = argmax(counts, None) {
                votes[class] += 1;
            }
        }
        votes
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.votes(x), None).expect("forest has classes")
    }

    /// Prediction with disallowed classes masked out: each tree re-votes
    /// among the allowed classes from its leaf distribution.
    pub fn predict_restricted(&self, x: &[f64], allowed: &[bool]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for tree in &self.trees {
            let counts = tree.root.counts_for(x);
            if let Some(class) = argmax(counts, Some(allowed)) {
                votes[class] += 1;
            }
        }
        argmax(&votes, Some(allowed)).expect("at least one allowed class")
    }
}

/// Index of the largest count, lowest index on ties, optionally masked.
fn argmax(counts: &[usize], allowed: Option<&[bool]>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, &c) in counts.iter().enumerate() {
        if let Some(mask) = allowed {
            if !mask[i] {
                continue;
            }
        }
        if best.map_or(c > 0, |(_, bc)| c > bc) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_always_predicted() {
        let samples: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels = vec![2; 10];
        let f = Forest::train(&samples, &labels, 3, &ForestParams::default(), 5);
        assert_eq!(f.predict(&[3.5]), 2);
        assert_eq!(f.predict(&[1e6]), 2);
    }

    #[test]
    fn separable_capacity_data_fits_exactly() {
        // small capacity -> class 0, large -> class 1
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            samples.push(vec![20.0 + i as f64]);
            labels.push(0);
            samples.push(vec![1200.0 + 10.0 * i as f64]);
            labels.push(1);
        }
        let f = Forest::train(&samples, &labels, 2, &ForestParams::default(), 11);
        for (s, &l) in samples.iter().zip(&labels) {
            assert_eq!(f.predict(s), l);
        }
    }

    #[test]
    fn same_seed_identical_predictions() {
        let samples: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 37 % 100) as f64]).collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let a = Forest::train(&samples, &labels, 3, &ForestParams::default(), 77);
        let b = Forest::train(&samples, &labels, 3, &ForestParams::default(), 77);
        for q in 0..100 {
            let x = [q as f64];
            assert_eq!(a.predict(&x), b.predict(&x));
            assert_eq!(a.votes(&x), b.votes(&x));
        }
    }

    #[test]
    fn restriction_revotes_among_allowed() {
        // all mass on class 0; with 0 masked the runner-up must win
        let samples = vec![vec![1.0], vec![2.0], vec![3.0], vec![100.0]];
        let labels = vec![0, 0, 0, 1];
        let f = Forest::train(&samples, &labels, 3, &ForestParams::default(), 3);
        assert_eq!(f.predict(&[2.0]), 0);
        let allowed = vec![false, true, true];
        assert_eq!(f.predict_restricted(&[2.0], &allowed), 1);
    }
}
