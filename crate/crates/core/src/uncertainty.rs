//! Cross-fitted expectation estimates and the confidence intervals around them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{BaseClassifier, ClassifierKind};
use crate::data::{stratified_kfold, LabeledDataset};
use crate::error::{LpcError, Result};
use crate::phi::GeneratingFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyInterval {
    pub tau_n: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub s: Vec<f64>,
    pub n: usize,
    pub delta: Option<f64>,
}

/// Hoeffding half-width numerator `c * sqrt((ln m + ln(2/delta)) / 2)`.
pub fn hoeffding_s(c: f64, m: usize, delta: f64) -> f64 {
    c * (((m as f64).ln() + (2.0 / delta).ln()) / 2.0).sqrt()
}

fn check_tau(tau_n: &[f64]) -> Result<()> {
    if tau_n.is_empty() {
        return Err(LpcError::InvalidArgument("expectation vector is empty".into()));
    }
    if tau_n.iter().any(|t| !t.is_finite()) {
        return Err(LpcError::InvalidArgument("expectation vector is not finite".into()));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LpcError::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

impl UncertaintyInterval {
    /// `tau_n -/+ s_i / sqrt(n)` with `s_i` from the Hoeffding bound on `c_i`.
    pub fn hoeffding(tau_n: Vec<f64>, n: usize, delta: f64, c: &[f64]) -> Result<Self> {
        check_tau(&tau_n)?;
        check_delta(delta)?;
        if c.len() != tau_n.len() {
            return Err(LpcError::DimensionMismatch {
                expected: tau_n.len(),
                got: c.len(),
            });
        }
        if c.iter().any(|&ci| !(ci >= 0.0) || !ci.is_finite()) {
            return Err(LpcError::InvalidArgument("ranges must be finite and >= 0".into()));
        }
        let m = tau_n.len();
        let s = c.iter().map(|&ci| hoeffding_s(ci, m, delta)).collect();
        let mut interval = Self::with_s(tau_n, n, s)?;
        interval.delta = Some(delta);
        Ok(interval)
    }

    /// Fixed half-width numerator `s` on every component.
    pub fn manual(tau_n: Vec<f64>, n: usize, s: f64) -> Result<Self> {
        let m = tau_n.len();
        Self::with_s(tau_n, n, vec![s; m])
    }

    pub fn with_s(tau_n: Vec<f64>, n: usize, s: Vec<f64>) -> Result<Self> {
        check_tau(&tau_n)?;
        if n == 0 {
            return Err(LpcError::InvalidArgument("sample count must be >= 1".into()));
        }
        if s.len() != tau_n.len() {
            return Err(LpcError::DimensionMismatch {
                expected: tau_n.len(),
                got: s.len(),
            });
        }
        if s.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(LpcError::InvalidArgument("half-widths must be finite and >= 0".into()));
        }
        let root = (n as f64).sqrt();
        let a = tau_n.iter().zip(&s).map(|(t, s)| t - s / root).collect();
        let b = tau_n.iter().zip(&s).map(|(t, s)| t + s / root).collect();
        Ok(Self {
            tau_n,
            a,
            b,
            s,
            n,
            delta: None,
        })
    }

    /// Degenerate interval `a = b = tau_n`.
    pub fn point(tau_n: Vec<f64>) -> Result<Self> {
        check_tau(&tau_n)?;
        let m = tau_n.len();
        Ok(Self {
            a: tau_n.clone(),
            b: tau_n.clone(),
            s: vec![0.0; m],
            tau_n,
            n: 0,
            delta: None,
        })
    }

    /// Explicit endpoints, e.g. user supplied bounds.
    pub fn from_bounds(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_tau(&a)?;
        check_tau(&b)?;
        if a.len() != b.len() {
            return Err(LpcError::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        if a.iter().zip(&b).any(|(x, y)| x > y) {
            return Err(LpcError::InvalidArgument("interval has a > b".into()));
        }
        let tau_n = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let s = vec![0.0; a.len()];
        Ok(Self {
            tau_n,
            a,
            b,
            s,
            n: 0,
            delta: None,
        })
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn dim(&self) -> usize {
        self.tau_n.len()
    }

    pub fn is_point(&self) -> bool {
        self.a == self.b
    }

    /// True when `a <= v <= b` componentwise up to `tol`.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.a.iter().zip(&self.b))
                .all(|(x, (lo, hi))| *x >= lo - tol && *x <= hi + tol)
    }

    /// Sub-interval with every half-width scaled by `factor` in `[0, 1]`.
    pub fn shrink(&self, factor: f64) -> Self {
        let mid = |i: usize| 0.5 * (self.a[i] + self.b[i]);
        let half = |i: usize| 0.5 * (self.b[i] - self.a[i]) * factor;
        let m = self.dim();
        Self {
            tau_n: self.tau_n.clone(),
            a: (0..m).map(|i| mid(i) - half(i)).collect(),
            b: (0..m).map(|i| mid(i) + half(i)).collect(),
            s: self.s.iter().map(|s| s * factor).collect(),
            n: self.n,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvEstimate {
    /// Classifiers refitted on the full dataset.
    pub gf: GeneratingFunction,
    pub tau: Vec<f64>,
    pub folds_used: usize,
    pub clamped: bool,
    pub n: usize,
}

/// Stable order by label, then by feature vector. Makes the estimate
/// independent of the order samples arrive in.
pub fn canonical_order(dataset: &LabeledDataset) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    let (xs, ys) = (dataset.features(), dataset.labels());
    idx.sort_by(|&i, &j| {
        ys[i].cmp(&ys[j]).then_with(|| {
            xs[i]
                .iter()
                .zip(&xs[j])
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    idx
}

pub fn fit_all(kinds: &[ClassifierKind], dataset: &LabeledDataset) -> Result<Vec<BaseClassifier>> {
    kinds.iter().map(|&k| BaseClassifier::fit(k, dataset)).collect()
}

/// Cross-fitted estimate of `E[phi(x, y)]`: every sample is scored by
/// classifiers trained on the other folds.
pub fn estimate_expectation_cv(
    kinds: &[ClassifierKind],
    dataset: &LabeledDataset,
    folds: usize,
    seed: u64,
) -> Result<CvEstimate> {
    if dataset.is_empty() {
        return Err(LpcError::EmptyDataset);
    }
    if folds < 2 {
        return Err(LpcError::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    for (class, &count) in dataset.class_counts().iter().enumerate() {
        if count < 2 {
            return Err(LpcError::InsufficientClassSamples {
                class,
                count,
                required: 2,
            });
        }
    }
    let canonical = dataset.subset(&canonical_order(dataset));
    let num_labels = canonical.num_labels();
    let m = num_labels
        .checked_pow(kinds.len() as u32 + 1)
        .ok_or_else(|| LpcError::InvalidArgument("feature map dimension overflows".into()))?;

    let split = stratified_kfold(&canonical, folds, seed)?;
    let per_fold: Vec<Result<Vec<(usize, usize)>>> = (0..split.len())
        .into_par_iter()
        .map(|f| {
            let train = canonical.subset(&split.complement(f));
            let gf = GeneratingFunction::new(num_labels, fit_all(kinds, &train)?)?;
            split.folds[f]
                .iter()
                .map(|&i| {
                    let hot = gf.phi_evaluate(&canonical.features()[i], canonical.labels()[i])?;
                    Ok((i, hot.index))
                })
                .collect()
        })
        .collect();

    let mut counts = vec![0usize; m];
    for fold in per_fold {
        for (_, index) in fold? {
            counts[index] += 1;
        }
    }
    let n = canonical.len();
    let tau = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let gf = GeneratingFunction::new(num_labels, fit_all(kinds, &canonical)?)?;
    Ok(CvEstimate {
        gf,
        tau,
        folds_used: split.len(),
        clamped: split.clamped(),
        n,
    })
}
