//! Random forest classifier used as the feature-selection fitness oracle:
//! gini-split decision trees grown to purity over bootstrap samples, with
//! sqrt-of-features candidate sampling at every node.

use crate::error::{Error, Result};
use rand::Rng;

/// Forest settings. The split criterion is always gini and each node
/// draws `ceil(sqrt(n_features))` candidate features; only the counts
/// are configurable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfConfig {
    pub trees: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            trees: 15,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

/// Gini impurity `1 - sum_c p_c^2` of a label multiset.
pub fn gini(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("gini of an empty label set"));
    }
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

fn gini_of_counts(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / nf).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
}

/// Majority class; ties break toward the smallest id for determinism.
fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_features: usize,
    n_candidates: usize,
    n_classes: usize,
    cfg: RfConfig,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &i in idx {
            counts[self.y[i]] += 1;
        }
        counts
    }

    fn build<R: Rng>(&mut self, idx: &[usize], rng: &mut R) -> usize {
        let counts = self.class_counts(idx);
        let n = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || n < self.cfg.min_samples_split {
            self.nodes.push(Node::Leaf {
                class: majority(&counts),
            });
            return self.nodes.len() - 1;
        }

        // Candidate features: sqrt(F) drawn without replacement per node.
        let mut features: Vec<usize> = (0..self.n_features).collect();
        for i in 0..self.n_candidates.min(self.n_features) {
            let j = rng.gen_range(i..self.n_features);
            features.swap(i, j);
        }
        let candidates = &features[..self.n_candidates.min(self.n_features)];

        let parent_gini = gini_of_counts(&counts, n);
        let mut best: Option<(f64, usize, f64)> = None; // (weighted gini, feature, threshold)
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &f in candidates {
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
            let mut left_counts = vec![0usize; self.n_classes];
            let mut right_counts = counts.clone();
            for k in 0..n - 1 {
                left_counts[sorted[k].1] += 1;
                right_counts[sorted[k].1] -= 1;
                if sorted[k].0 == sorted[k + 1].0 {
                    continue;
                }
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < self.cfg.min_samples_leaf || n_right < self.cfg.min_samples_leaf {
                    continue;
                }
                let w = (n_left as f64 * gini_of_counts(&left_counts, n_left)
                    + n_right as f64 * gini_of_counts(&right_counts, n_right))
                    / n as f64;
                let threshold = 0.5 * (sorted[k].0 + sorted[k + 1].0);
                let better = match best {
                    None => true,
                    Some((bw, _, _)) => w < bw - 1e-15,
                };
                if better {
                    best = Some((w, f, threshold));
                }
            }
        }

        match best {
            Some((w, feature, threshold)) if w < parent_gini - 1e-15 || parent_gini > 0.0 => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
                if left_idx.is_empty() || right_idx.is_empty() {
                    self.nodes.push(Node::Leaf {
                        class: majority(&counts),
                    });
                    return self.nodes.len() - 1;
                }
                let slot = self.nodes.len();
                self.nodes.push(Node::Leaf { class: 0 }); // placeholder
                let left = self.build(&left_idx, rng);
                let right = self.build(&right_idx, rng);
                self.nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                slot
            }
            _ => {
                self.nodes.push(Node::Leaf {
                    class: majority(&counts),
                });
                self.nodes.len() - 1
            }
        }
    }
}

/// Fit a forest of gini trees on bootstrap samples.
///
/// Rows of `x` are feature vectors, `y` holds class ids. A single-class
/// `y` degenerates to constant-leaf trees, which is legal.
pub fn rf_fit<R: Rng>(x: &[Vec<f64>], y: &[usize], cfg: &RfConfig, rng: &mut R) -> Result<RandomForest> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            op: "rf_fit",
            lhs: vec![x.len()],
            rhs: vec![y.len()],
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("rf_fit needs at least 2 rows"));
    }
    if cfg.trees < 1 {
        return Err(Error::invalid("rf_fit needs at least 1 tree"));
    }
    let n_features = x[0].len();
    let n_classes = y.iter().copied().max().unwrap_or(0) + 1;
    let n_candidates = (n_features as f64).sqrt().ceil() as usize;
    let n = x.len();

    let mut trees = Vec::with_capacity(cfg.trees);
    for _ in 0..cfg.trees {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        if n_features == 0 {
            // No features selected at all: a forest of priors.
            let mut builder = TreeBuilder {
                x,
                y,
                n_features,
                n_candidates: 0,
                n_classes,
                cfg: *cfg,
                nodes: Vec::new(),
            };
            let counts = builder.class_counts(&idx);
            builder.nodes.push(Node::Leaf {
                class: majority(&counts),
            });
            trees.push(DecisionTree {
                nodes: builder.nodes,
            });
            continue;
        }
        let mut builder = TreeBuilder {
            x,
            y,
            n_features,
            n_candidates: n_candidates.max(1),
            n_classes,
            cfg: *cfg,
            nodes: Vec::new(),
        };
        builder.build(&idx, rng);
        trees.push(DecisionTree {
            nodes: builder.nodes,
        });
    }
    Ok(RandomForest { trees, n_classes })
}

impl RandomForest {
    /// Majority vote over the trees; ties break toward the smallest id.
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict(row)] += 1;
        }
        majority(&votes)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
