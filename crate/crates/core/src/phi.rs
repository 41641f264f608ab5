//! Indicator generating function and its compressed pattern tables.
//!
//! For `k` base classifiers, `phi(x, y)` is the one-hot vector of length
//! `|Y|^(k+1)` with its 1 at `ind((y, h_1(x), ..., h_k(x)))`. Because it
//! depends on `x` only through the prediction tuple, the set of all `phi_x`
//! matrices is a finite list of patterns, each stored as one column per label.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::classifiers::BaseClassifier;
use crate::error::{LpcError, Result};

/// Largest pattern count for which full enumeration is the default.
pub const MAX_ENUMERATED_PATTERNS: usize = 4096;

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    u32::try_from(exp)
        .ok()
        .and_then(|e| base.checked_pow(e))
        .ok_or_else(|| LpcError::InvalidArgument(format!("{base}^{exp} overflows")))
}

/// Lexicographic index of a label tuple: `sum_j y_j * |Y|^(len-1-j)`.
pub fn ind(tuple: &[usize], num_labels: usize) -> Result<usize> {
    let mut index = 0usize;
    for &y in tuple {
        if y >= num_labels {
            return Err(LpcError::LabelOutOfRange {
                label: y,
                num_labels,
            });
        }
        index = index
            .checked_mul(num_labels)
            .and_then(|v| v.checked_add(y))
            .ok_or_else(|| LpcError::InvalidArgument("tuple index overflows".into()))?;
    }
    Ok(index)
}

/// Inverse of [`ind`] for tuples of length `len`.
pub fn ind_decode(mut index: usize, num_labels: usize, len: usize) -> Result<Vec<usize>> {
    let m = checked_pow(num_labels, len)?;
    if index >= m {
        return Err(LpcError::InvalidArgument(format!(
            "index {index} out of range for {m} tuples"
        )));
    }
    let mut tuple = vec![0; len];
    for slot in tuple.iter_mut().rev() {
        *slot = index % num_labels;
        index /= num_labels;
    }
    Ok(tuple)
}

/// Column hit by each label row of the pattern matrix `M` for `pattern`.
pub fn pattern_matrix(num_labels: usize, pattern: &[usize]) -> Result<Vec<usize>> {
    let mut tuple = Vec::with_capacity(pattern.len() + 1);
    tuple.push(0);
    tuple.extend_from_slice(pattern);
    (0..num_labels)
        .map(|y| {
            tuple[0] = y;
            ind(&tuple, num_labels)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHot {
    pub index: usize,
    pub len: usize,
}

impl OneHot {
    pub fn to_dense(self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        v[self.index] = 1.0;
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratingFunction {
    num_labels: usize,
    classifiers: Vec<BaseClassifier>,
}

impl GeneratingFunction {
    pub fn new(num_labels: usize, classifiers: Vec<BaseClassifier>) -> Result<Self> {
        if num_labels == 0 {
            return Err(LpcError::InvalidArgument("need at least one label".into()));
        }
        if let Some(first) = classifiers.first() {
            for c in &classifiers {
                if c.num_labels() != num_labels {
                    return Err(LpcError::DimensionMismatch {
                        expected: num_labels,
                        got: c.num_labels(),
                    });
                }
                if c.dim() != first.dim() {
                    return Err(LpcError::DimensionMismatch {
                        expected: first.dim(),
                        got: c.dim(),
                    });
                }
            }
        }
        checked_pow(num_labels, classifiers.len() + 1)?;
        Ok(Self {
            num_labels,
            classifiers,
        })
    }

    /// The label one-hot map, with no classifiers.
    pub fn label_indicator(num_labels: usize) -> Result<Self> {
        Self::new(num_labels, Vec::new())
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn k(&self) -> usize {
        self.classifiers.len()
    }

    pub fn m(&self) -> usize {
        self.num_labels.pow((self.k() + 1) as u32)
    }

    pub fn classifiers(&self) -> &[BaseClassifier] {
        &self.classifiers
    }

    /// Feature dimension, or `None` when there are no classifiers.
    pub fn feature_dim(&self) -> Option<usize> {
        self.classifiers.first().map(|c| c.dim())
    }

    /// Per-component range of the indicator map: every entry is 1.
    pub fn range_c(&self) -> Vec<f64> {
        vec![1.0; self.m()]
    }

    pub fn c_norm2(&self) -> f64 {
        (self.m() as f64).sqrt()
    }

    pub fn pattern(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.classifiers.iter().map(|c| c.predict(x)).collect()
    }

    pub fn phi_evaluate(&self, x: &[f64], y: usize) -> Result<OneHot> {
        let mut tuple = vec![y];
        tuple.extend(self.pattern(x)?);
        Ok(OneHot {
            index: ind(&tuple, self.num_labels)?,
            len: self.m(),
        })
    }

    pub fn pattern_matrix(&self, pattern: &[usize]) -> Result<Vec<usize>> {
        if pattern.len() != self.k() {
            return Err(LpcError::DimensionMismatch {
                expected: self.k(),
                got: pattern.len(),
            });
        }
        pattern_matrix(self.num_labels, pattern)
    }

    /// Distinct patterns of `features` in first-occurrence order.
    pub fn observed_patterns(&self, features: &[Vec<f64>]) -> Result<PatternTable> {
        let mut seen = HashMap::new();
        let mut patterns = Vec::new();
        for x in features {
            let p = self.pattern(x)?;
            if !seen.contains_key(&p) {
                seen.insert(p.clone(), patterns.len());
                patterns.push(p);
            }
        }
        PatternTable::from_patterns(self.num_labels, self.k(), patterns)
    }

    /// All `|Y|^k` patterns in lexicographic order.
    pub fn enumerated_patterns(&self) -> Result<PatternTable> {
        PatternTable::enumerate(self.num_labels, self.k())
    }

    pub fn enumeration_size(&self) -> Result<usize> {
        checked_pow(self.num_labels, self.k())
    }
}

/// A finite list of `phi_x` matrices, each stored as one column per label row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PatternTableRepr", into = "PatternTableRepr")]
pub struct PatternTable {
    num_labels: usize,
    dim: usize,
    keys: Vec<Vec<usize>>,
    columns: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
}

#[derive(Serialize, Deserialize)]
struct PatternTableRepr {
    num_labels: usize,
    dim: usize,
    keys: Vec<Vec<usize>>,
    columns: Vec<Vec<usize>>,
}

impl TryFrom<PatternTableRepr> for PatternTable {
    type Error = LpcError;

    fn try_from(r: PatternTableRepr) -> Result<Self> {
        PatternTable::with_keys(r.num_labels, r.dim, r.keys, r.columns)
    }
}

impl From<PatternTable> for PatternTableRepr {
    fn from(t: PatternTable) -> Self {
        Self {
            num_labels: t.num_labels,
            dim: t.dim,
            keys: t.keys,
            columns: t.columns,
        }
    }
}

impl PatternTable {
    /// Generic one-hot table over `dim` components; pattern `i` gets key `[i]`.
    pub fn from_columns(num_labels: usize, dim: usize, columns: Vec<Vec<usize>>) -> Result<Self> {
        let keys = (0..columns.len()).map(|i| vec![i]).collect();
        Self::with_keys(num_labels, dim, keys, columns)
    }

    /// Indicator table for the given prediction tuples.
    pub fn from_patterns(num_labels: usize, k: usize, patterns: Vec<Vec<usize>>) -> Result<Self> {
        let dim = checked_pow(num_labels, k + 1)?;
        let mut columns = Vec::with_capacity(patterns.len());
        for p in &patterns {
            if p.len() != k {
                return Err(LpcError::DimensionMismatch {
                    expected: k,
                    got: p.len(),
                });
            }
            columns.push(pattern_matrix(num_labels, p)?);
        }
        Self::with_keys(num_labels, dim, patterns, columns)
    }

    pub fn enumerate(num_labels: usize, k: usize) -> Result<Self> {
        let r = checked_pow(num_labels, k)?;
        let patterns = (0..r)
            .map(|i| ind_decode(i, num_labels, k))
            .collect::<Result<Vec<_>>>()?;
        Self::from_patterns(num_labels, k, patterns)
    }

    fn with_keys(
        num_labels: usize,
        dim: usize,
        keys: Vec<Vec<usize>>,
        columns: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if num_labels == 0 {
            return Err(LpcError::InvalidArgument("need at least one label".into()));
        }
        if columns.is_empty() {
            return Err(LpcError::InvalidArgument("pattern table is empty".into()));
        }
        if keys.len() != columns.len() {
            return Err(LpcError::DimensionMismatch {
                expected: columns.len(),
                got: keys.len(),
            });
        }
        let mut lookup = HashMap::with_capacity(keys.len());
        let mut seen_cols = HashMap::with_capacity(columns.len());
        for (i, (key, cols)) in keys.iter().zip(&columns).enumerate() {
            if cols.len() != num_labels {
                return Err(LpcError::DimensionMismatch {
                    expected: num_labels,
                    got: cols.len(),
                });
            }
            for (a, &c) in cols.iter().enumerate() {
                if c >= dim {
                    return Err(LpcError::InvalidArgument(format!(
                        "pattern {i} hits column {c} outside dimension {dim}"
                    )));
                }
                if cols[..a].contains(&c) {
                    return Err(LpcError::InvalidArgument(format!(
                        "pattern {i} maps two labels to column {c}"
                    )));
                }
            }
            if lookup.insert(key.clone(), i).is_some() || seen_cols.insert(cols.clone(), i).is_some()
            {
                return Err(LpcError::InvalidArgument(format!("pattern {i} is a duplicate")));
            }
        }
        Ok(Self {
            num_labels,
            dim,
            keys,
            columns,
            lookup,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Length `m` of the feature map.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of patterns `r`.
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn keys(&self) -> &[Vec<usize>] {
        &self.keys
    }

    pub fn columns(&self, i: usize) -> &[usize] {
        &self.columns[i]
    }

    pub fn column(&self, i: usize, y: usize) -> usize {
        self.columns[i][y]
    }

    pub fn find(&self, key: &[usize]) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    /// `phi_x^T lambda` for pattern `i`.
    pub fn scores(&self, i: usize, lambda: &[f64]) -> Vec<f64> {
        self.columns[i].iter().map(|&c| lambda[c]).collect()
    }

    /// `Phi p` for `p` flattened as `i * |Y| + y`.
    pub fn push_forward(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, cols) in self.columns.iter().enumerate() {
            for (y, &c) in cols.iter().enumerate() {
                out[c] += p[i * self.num_labels + y];
            }
        }
        out
    }

    /// Number of (pattern, label) cells.
    pub fn num_cells(&self) -> usize {
        self.len() * self.num_labels
    }
}
