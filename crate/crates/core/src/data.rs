//! Labeled datasets, the synthetic Gaussian-mixture task, CSV ingestion and
//! stratified folds.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LpcError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    label_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(LpcError::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if label_names.is_empty() {
            return Err(LpcError::InvalidArgument("at least one label name is required".into()));
        }
        let dim = features.first().map_or(1, Vec::len);
        if dim == 0 {
            return Err(LpcError::InvalidArgument("feature dimension must be >= 1".into()));
        }
        if let Some(bad) = features.iter().find(|f| f.len() != dim) {
            return Err(LpcError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= label_names.len()) {
            return Err(LpcError::LabelOutOfRange {
                label,
                num_labels: label_names.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            label_names,
        })
    }

    /// Builds a dataset whose label names are `"0", "1", ...`.
    pub fn with_num_labels(features: Vec<Vec<f64>>, labels: Vec<usize>, num_labels: usize) -> Result<Self> {
        Self::new(features, labels, (0..num_labels).map(|y| y.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_labels()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// New dataset with the samples at `indices`, in that order. Label space is kept.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
        }
    }
}

/// Per-class Gaussian mixtures with a shared isotropic covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// `class_means[y][c]` is the mean of mixture component `c` of class `y`.
    pub class_means: Vec<Vec<Vec<f64>>>,
    pub component_weights: Vec<f64>,
    /// Standard deviation of every coordinate of every component.
    pub sigma: f64,
    pub priors: Vec<f64>,
}

impl Default for SyntheticSpec {
    /// Three classes in four dimensions, two equally weighted components per
    /// class, covariance `0.7^2 I`, uniform class priors.
    fn default() -> Self {
        Self {
            class_means: vec![
                vec![vec![1.0, 1.0, 1.0, 1.0], vec![3.0, 3.0, 3.0, 3.0]],
                vec![vec![1.0, 2.0, 1.0, 2.0], vec![4.0, 3.0, 4.0, 3.0]],
                vec![vec![2.0, 2.0, 2.0, 2.0], vec![4.0, 4.0, 4.0, 4.0]],
            ],
            component_weights: vec![0.5, 0.5],
            sigma: 0.7,
            priors: vec![1.0 / 3.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesRiskEstimate {
    pub risk: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of the Bayes risk of [`SyntheticSpec::default`]
/// (10^6 samples, seed 0); the standard error is about 4.3e-4.
pub const SYNTHETIC_BAYES_RISK: f64 = 0.243_078;

impl SyntheticSpec {
    pub fn num_labels(&self) -> usize {
        self.class_means.len()
    }

    pub fn dim(&self) -> usize {
        self.class_means[0][0].len()
    }

    fn validate(&self) -> Result<()> {
        if self.class_means.is_empty() || self.priors.len() != self.class_means.len() {
            return Err(LpcError::InvalidArgument("one prior per class is required".into()));
        }
        let d = self.dim();
        for comps in &self.class_means {
            if comps.len() != self.component_weights.len() || comps.iter().any(|m| m.len() != d) {
                return Err(LpcError::InvalidArgument("inconsistent mixture means".into()));
            }
        }
        if !(self.sigma > 0.0) {
            return Err(LpcError::InvalidArgument("sigma must be positive".into()));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng, classes: &WeightedIndex<f64>, comps: &WeightedIndex<f64>) -> (Vec<f64>, usize) {
        let y = classes.sample(rng);
        let c = comps.sample(rng);
        let x = self.class_means[y][c]
            .iter()
            .map(|&mu| {
                let z: f64 = StandardNormal.sample(rng);
                mu + self.sigma * z
            })
            .collect();
        (x, y)
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        self.validate()?;
        if n == 0 {
            return Err(LpcError::InvalidArgument("n must be >= 1".into()));
        }
        let classes = weighted(&self.priors)?;
        let comps = weighted(&self.component_weights)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (features, labels) = (0..n).map(|_| self.draw(&mut rng, &classes, &comps)).unzip();
        LabeledDataset::new(
            features,
            labels,
            (1..=self.num_labels()).map(|y| y.to_string()).collect(),
        )
    }

    /// Label of largest posterior probability (ties to the smallest label).
    pub fn bayes_label(&self, x: &[f64]) -> usize {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let mut best = (0, f64::NEG_INFINITY);
        for (y, comps) in self.class_means.iter().enumerate() {
            let terms: Vec<f64> = comps
                .iter()
                .zip(&self.component_weights)
                .map(|(mu, &w)| {
                    let d2: f64 = mu.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
                    w.ln() - d2 * inv
                })
                .collect();
            let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let score = self.priors[y].ln() + top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
            if score > best.1 {
                best = (y, score);
            }
        }
        best.0
    }

    pub fn bayes_risk_mc(&self, num_samples: usize, seed: u64) -> Result<BayesRiskEstimate> {
        self.validate()?;
        if num_samples == 0 {
            return Err(LpcError::InvalidArgument("num_samples must be >= 1".into()));
        }
        let classes = weighted(&self.priors)?;
        let comps = weighted(&self.component_weights)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let errors = (0..num_samples)
            .filter(|_| {
                let (x, y) = self.draw(&mut rng, &classes, &comps);
                self.bayes_label(&x) != y
            })
            .count();
        let risk = errors as f64 / num_samples as f64;
        Ok(BayesRiskEstimate {
            risk,
            std_error: (risk * (1.0 - risk) / num_samples as f64).sqrt(),
            samples: num_samples,
        })
    }
}

fn weighted(w: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(w).map_err(|e| LpcError::InvalidArgument(format!("weights: {e}")))
}

pub fn synth_generate(n: usize, seed: u64) -> Result<LabeledDataset> {
    SyntheticSpec::default().generate(n, seed)
}

pub fn bayes_risk_mc(spec: &SyntheticSpec, num_samples: usize, seed: u64) -> Result<BayesRiskEstimate> {
    spec.bayes_risk_mc(num_samples, seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
    #[default]
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select by zero-based index, `last` the final column, anything else a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("last") {
            LabelColumn::Last
        } else if let Ok(i) = s.parse() {
            LabelColumn::Index(i)
        } else {
            LabelColumn::Name(s.to_string())
        })
    }
}

/// Rows and columns in diagnostics are 1-based and count the header line.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn, has_header: bool) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| LpcError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_csv(file, label_column, has_header)
}

pub fn read_csv<R: Read>(reader: R, label_column: &LabelColumn, has_header: bool) -> Result<LabeledDataset> {
    let (header, records) = read_records(reader, has_header)?;
    let width = records
        .first()
        .map(|(_, r)| r.len())
        .ok_or(LpcError::EmptyDataset)?;
    if width < 2 {
        return Err(LpcError::InvalidArgument("need at least one feature column and a label column".into()));
    }
    let label_idx = resolve_column(label_column, header.as_deref(), width)?;

    let mut features = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut names: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    for (row, record) in &records {
        let mut x = Vec::with_capacity(width - 1);
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                continue;
            }
            x.push(parse_cell(cell, *row, col)?);
        }
        let raw = record[label_idx].trim();
        if raw.is_empty() {
            return Err(missing(*row, label_idx));
        }
        let next = names.len();
        let y = *lookup.entry(raw.to_string()).or_insert_with(|| {
            names.push(raw.to_string());
            next
        });
        features.push(x);
        labels.push(y);
    }
    LabeledDataset::new(features, labels, names)
}

/// Reads a CSV of feature vectors, optionally dropping one column (e.g. a label).
pub fn read_features_csv<R: Read>(reader: R, drop_column: Option<&LabelColumn>, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let (header, records) = read_records(reader, has_header)?;
    let width = records.first().map(|(_, r)| r.len()).unwrap_or(0);
    let skip = drop_column
        .map(|c| resolve_column(c, header.as_deref(), width))
        .transpose()?;
    records
        .iter()
        .map(|(row, record)| {
            record
                .iter()
                .enumerate()
                .filter(|(col, _)| Some(*col) != skip)
                .map(|(col, cell)| parse_cell(cell, *row, col))
                .collect()
        })
        .collect()
}

type Records = (Option<Vec<String>>, Vec<(usize, Vec<String>)>);

fn read_records<R: Read>(reader: R, has_header: bool) -> Result<Records> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = if has_header {
        Some(
            rdr.headers()
                .map_err(|e| csv_error(e, 1))?
                .iter()
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };
    let offset = usize::from(has_header) + 1;
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(e, i + offset))?;
        records.push((i + offset, rec.iter().map(str::to_string).collect()));
    }
    Ok((header, records))
}

fn csv_error(e: csv::Error, row: usize) -> LpcError {
    LpcError::Parse {
        row,
        column: 0,
        message: e.to_string(),
    }
}

fn resolve_column(col: &LabelColumn, header: Option<&[String]>, width: usize) -> Result<usize> {
    let idx = match col {
        LabelColumn::Last => width.saturating_sub(1),
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => header
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| LpcError::InvalidArgument(format!("no column named {name:?}")))?,
    };
    if idx >= width {
        return Err(LpcError::InvalidArgument(format!(
            "column {idx} out of range for {width} columns"
        )));
    }
    Ok(idx)
}

fn missing(row: usize, col: usize) -> LpcError {
    LpcError::Parse {
        row,
        column: col + 1,
        message: "missing value".into(),
    }
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell == "?" || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Err(missing(row, col));
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(LpcError::Parse {
            row,
            column: col + 1,
            message: format!("not a number: {cell:?}"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedFolds {
    pub folds: Vec<Vec<usize>>,
    pub requested: usize,
}

impl StratifiedFolds {
    /// True when fewer folds than requested were produced.
    pub fn clamped(&self) -> bool {
        self.folds.len() < self.requested
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Indices outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        let mut rest: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        rest.sort_unstable();
        rest
    }
}

/// Shuffles each class and deals its samples round-robin over the folds,
/// continuing the deal where the previous class stopped. The fold count is
/// clamped to the smallest class size.
pub fn stratified_kfold(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<StratifiedFolds> {
    if dataset.is_empty() {
        return Err(LpcError::EmptyDataset);
    }
    if k == 0 {
        return Err(LpcError::InvalidArgument("k must be >= 1".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_labels()];
    for (i, &y) in dataset.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let smallest = by_class.iter().map(Vec::len).filter(|&c| c > 0).min().unwrap_or(1);
    let folds_used = k.min(smallest);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); folds_used];
    let mut next = 0;
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[next % folds_used].push(i);
            next += 1;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(StratifiedFolds {
        folds,
        requested: k,
    })
}

/// Uniform draw in `[0, 1)` keyed by `(seed, index)`.
pub(crate) fn uniform_draw(seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.random::<f64>()
}
