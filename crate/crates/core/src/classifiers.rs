//! Deterministic base classifiers whose outputs index the generating function.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{LpcError, Result};

pub const DEFAULT_TREE_DEPTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    Knn { k: usize },
    Qda,
    /// `max_depth: None` grows the tree until every leaf is pure.
    DecisionTree { max_depth: Option<usize> },
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassifierKind::Knn { k } => write!(f, "knn{k}"),
            ClassifierKind::Qda => write!(f, "qda"),
            ClassifierKind::DecisionTree { max_depth: Some(d) } => write!(f, "tree{d}"),
            ClassifierKind::DecisionTree { max_depth: None } => write!(f, "tree-full"),
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = LpcError;

    /// Accepts `knn5`, `knn:5`, `qda`, `tree`, `dt`, `tree:8`, `tree-full`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || LpcError::InvalidArgument(format!("unknown classifier {s:?}"));
        if lower == "qda" {
            return Ok(ClassifierKind::Qda);
        }
        if lower == "tree-full" {
            return Ok(ClassifierKind::DecisionTree { max_depth: None });
        }
        for prefix in ["tree", "dt"] {
            if let Some(rest) = lower.strip_prefix(prefix) {
                let rest = rest.trim_start_matches(':');
                let max_depth = if rest.is_empty() {
                    DEFAULT_TREE_DEPTH
                } else {
                    rest.parse().map_err(|_| bad())?
                };
                return Ok(ClassifierKind::DecisionTree {
                    max_depth: Some(max_depth),
                });
            }
        }
        if let Some(rest) = lower.strip_prefix("knn") {
            let k = rest.trim_start_matches(':').parse().map_err(|_| bad())?;
            return Ok(ClassifierKind::Knn { k });
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseClassifier {
    Knn(Knn),
    Qda(Qda),
    DecisionTree(DecisionTree),
}

impl BaseClassifier {
    pub fn fit(kind: ClassifierKind, dataset: &LabeledDataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(LpcError::EmptyDataset);
        }
        Ok(match kind {
            ClassifierKind::Knn { k } => BaseClassifier::Knn(Knn::fit(k, dataset)?),
            ClassifierKind::Qda => BaseClassifier::Qda(Qda::fit(dataset)?),
            ClassifierKind::DecisionTree { max_depth } => {
                BaseClassifier::DecisionTree(DecisionTree::fit(max_depth, dataset))
            }
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            BaseClassifier::Knn(m) => ClassifierKind::Knn { k: m.k },
            BaseClassifier::Qda(_) => ClassifierKind::Qda,
            BaseClassifier::DecisionTree(t) => ClassifierKind::DecisionTree {
                max_depth: t.max_depth,
            },
        }
    }

    pub fn num_labels(&self) -> usize {
        match self {
            BaseClassifier::Knn(m) => m.num_labels,
            BaseClassifier::Qda(m) => m.num_labels(),
            BaseClassifier::DecisionTree(t) => t.num_labels,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseClassifier::Knn(m) => m.dim,
            BaseClassifier::Qda(m) => m.dim,
            BaseClassifier::DecisionTree(t) => t.dim,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(LpcError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            BaseClassifier::Knn(m) => m.predict(x),
            BaseClassifier::Qda(m) => m.predict(x),
            BaseClassifier::DecisionTree(t) => t.predict(x),
        })
    }
}

/// Index of the largest count, ties to the smallest label.
fn majority(counts: &[usize]) -> usize {
    counts
        .iter()
        .enumerate()
        .fold((0, 0), |best, (y, &c)| if c > best.1 { (y, c) } else { best })
        .0
}

/// Euclidean k-nearest neighbors over the stored training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    k: usize,
    dim: usize,
    num_labels: usize,
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl Knn {
    fn fit(k: usize, dataset: &LabeledDataset) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(LpcError::InvalidArgument(format!(
                "knn needs an odd positive k, got {k}"
            )));
        }
        Ok(Self {
            k,
            dim: dataset.dim(),
            num_labels: dataset.num_labels(),
            points: dataset.features().to_vec(),
            labels: dataset.labels().to_vec(),
        })
    }

    fn predict(&self, x: &[f64]) -> usize {
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        // distance ties resolved by training order
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.k.min(dist.len());
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, order);
        }
        let mut votes = vec![0; self.num_labels];
        for &(_, i) in &dist[..k] {
            votes[self.labels[i]] += 1;
        }
        majority(&votes)
    }
}

/// Quadratic discriminant analysis with per-class Gaussian fits.
///
/// Each class covariance gets `1e-6 * trace / dim` added to its diagonal. The
/// Cholesky factors are stored so that predictions after a JSON round trip are
/// bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qda {
    dim: usize,
    classes: Vec<QdaClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QdaClass {
    mean: Vec<f64>,
    /// Lower-triangular factor, row-major.
    chol: Vec<f64>,
    log_det: f64,
    log_prior: f64,
}

impl Qda {
    fn fit(dataset: &LabeledDataset) -> Result<Self> {
        let d = dataset.dim();
        let n = dataset.len() as f64;
        let counts = dataset.class_counts();
        let mut classes = Vec::with_capacity(counts.len());
        for (y, &count) in counts.iter().enumerate() {
            if count == 0 {
                return Err(LpcError::InsufficientClassSamples {
                    class: y,
                    count,
                    required: 1,
                });
            }
            let members: Vec<&Vec<f64>> = dataset
                .features()
                .iter()
                .zip(dataset.labels())
                .filter(|(_, &l)| l == y)
                .map(|(x, _)| x)
                .collect();
            let mut mean = vec![0.0; d];
            for x in &members {
                for (m, v) in mean.iter_mut().zip(x.iter()) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);

            let mut cov = DMatrix::<f64>::zeros(d, d);
            for x in &members {
                let diff = DVector::from_iterator(d, x.iter().zip(&mean).map(|(v, m)| v - m));
                cov += &diff * diff.transpose();
            }
            if count > 1 {
                cov /= (count - 1) as f64;
            }
            let reg = 1e-6 * cov.trace() / d as f64;
            for i in 0..d {
                cov[(i, i)] += reg;
            }
            let chol = cov.cholesky().ok_or(LpcError::InsufficientClassSamples {
                class: y,
                count,
                required: d + 1,
            })?;
            let l = chol.l();
            let log_det = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
            if !log_det.is_finite() {
                return Err(LpcError::InsufficientClassSamples {
                    class: y,
                    count,
                    required: d + 1,
                });
            }
            let chol = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
            classes.push(QdaClass {
                mean,
                chol,
                log_det,
                log_prior: (count as f64 / n).ln(),
            });
        }
        Ok(Self { dim: d, classes })
    }

    fn num_labels(&self) -> usize {
        self.classes.len()
    }

    /// Log-density discriminant of every class, up to a shared constant.
    pub fn discriminants(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        self.classes
            .iter()
            .map(|c| {
                // forward substitution: L z = x - mean
                let mut z = vec![0.0; d];
                for i in 0..d {
                    let mut acc = x[i] - c.mean[i];
                    for j in 0..i {
                        acc -= c.chol[i * d + j] * z[j];
                    }
                    z[i] = acc / c.chol[i * d + i];
                }
                let maha: f64 = z.iter().map(|v| v * v).sum();
                c.log_prior - 0.5 * c.log_det - 0.5 * maha
            })
            .collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        self.discriminants(x)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (y, &s)| if s > best.1 { (y, s) } else { best })
            .0
    }
}

/// Axis-aligned CART tree with Gini impurity and midpoint thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    max_depth: Option<usize>,
    dim: usize,
    num_labels: usize,
    nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
enum TreeNode {
    Leaf {
        label: usize,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

impl DecisionTree {
    fn fit(max_depth: Option<usize>, dataset: &LabeledDataset) -> Self {
        let mut tree = Self {
            max_depth,
            dim: dataset.dim(),
            num_labels: dataset.num_labels(),
            nodes: vec![TreeNode::Leaf { label: 0 }],
        };
        let mut stack = vec![(0usize, (0..dataset.len()).collect::<Vec<_>>(), 0usize)];
        while let Some((node, indices, depth)) = stack.pop() {
            let counts = tree.counts(dataset, &indices);
            let label = majority(&counts);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_left = max_depth.is_none_or(|m| depth < m);
            let split = if pure || !depth_left {
                None
            } else {
                tree.best_split(dataset, &indices)
            };
            match split {
                None => tree.nodes[node] = TreeNode::Leaf { label },
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = indices
                        .iter()
                        .partition(|&&i| dataset.features()[i][feature] <= threshold);
                    let left = tree.nodes.len();
                    tree.nodes.push(TreeNode::Leaf { label });
                    tree.nodes.push(TreeNode::Leaf { label });
                    tree.nodes[node] = TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        tree
    }

    fn counts(&self, dataset: &LabeledDataset, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_labels];
        for &i in indices {
            counts[dataset.labels()[i]] += 1;
        }
        counts
    }

    /// Split minimizing the weighted child Gini impurity; the first minimum in
    /// (feature, threshold) order wins. Zero-gain splits are allowed so that
    /// unbounded trees always separate distinct feature vectors.
    fn best_split(&self, dataset: &LabeledDataset, indices: &[usize]) -> Option<(usize, f64)> {
        let total = self.counts(dataset, indices);
        let n = indices.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = indices.to_vec();
        for f in 0..self.dim {
            let value = |i: usize| dataset.features()[i][f];
            order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
            let mut left = vec![0usize; self.num_labels];
            for pos in 0..order.len() - 1 {
                left[dataset.labels()[order[pos]]] += 1;
                let (lo, hi) = (value(order[pos]), value(order[pos + 1]));
                if lo == hi {
                    continue;
                }
                let nl = (pos + 1) as f64;
                let nr = n - nl;
                let gini = |counts: &mut dyn Iterator<Item = f64>, size: f64| {
                    1.0 - counts.map(|c| (c / size) * (c / size)).sum::<f64>()
                };
                let gl = gini(&mut left.iter().map(|&c| c as f64), nl);
                let gr = gini(&mut left.iter().zip(&total).map(|(&l, &t)| (t - l) as f64), nr);
                let impurity = (nl * gl + nr * gr) / n;
                let mut threshold = 0.5 * (lo + hi);
                if threshold >= hi {
                    threshold = lo;
                }
                if best.is_none_or(|b| impurity < b.0 - 1e-12) {
                    best = Some((impurity, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn predict(&self, x: &[f64]) -> usize {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                TreeNode::Leaf { label } => return label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}
