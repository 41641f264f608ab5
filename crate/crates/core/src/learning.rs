//! Learning linear programs and the trained model.
//!
//! The dual problem maximizes `a.alpha - b.beta + gamma` over `alpha, beta >= 0`
//! subject to `sum_{y in S} (alpha - beta)[col(i, y)] + |S| gamma <= 1` for every
//! pattern `i` and nonempty label subset `S`. The minimax risk is one minus its
//! optimal value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::BaseClassifier;
use crate::error::{LpcError, Result};
use crate::lp::{solve_with, LinearProgram, LpStatus, SolverOptions};
use crate::numeric::nonempty_label_subsets;
use crate::phi::{GeneratingFunction, PatternTable};
use crate::uncertainty::UncertaintyInterval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpForm {
    /// Variables `(alpha, beta, gamma)`.
    Interval,
    /// Variables `(lambda, gamma)`, valid when `a == b`.
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternMode {
    /// All `|Y|^k` prediction tuples.
    Exact,
    /// Tuples observed on a feature sample.
    Approx,
}

#[derive(Debug, Clone, Copy)]
pub enum TrainMode<'a> {
    Exact,
    Approx(&'a [Vec<f64>]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub lambda: Vec<f64>,
    /// `a.alpha - b.beta + gamma`.
    pub value: f64,
    pub minimax_risk: f64,
    pub form: LpForm,
    pub lp_rows: usize,
    pub lp_cols: usize,
    pub iterations: usize,
}

fn check_dims(table: &PatternTable, v: &[f64]) -> Result<()> {
    if v.len() != table.dim() {
        return Err(LpcError::DimensionMismatch {
            expected: table.dim(),
            got: v.len(),
        });
    }
    Ok(())
}

/// Adds one row per (pattern, nonempty subset) over the `m` columns starting at
/// `offset`, with the matching `gamma` coefficient at `gamma_col`. When
/// `negated_offset` is set the same coefficients are repeated with opposite
/// sign there.
fn add_subset_rows(
    lp: &mut LinearProgram,
    table: &PatternTable,
    offset: usize,
    negated_offset: Option<usize>,
    gamma_col: usize,
) -> Result<()> {
    let subsets = nonempty_label_subsets(table.num_labels())?;
    let mut terms = Vec::with_capacity(2 * table.num_labels() + 1);
    for i in 0..table.len() {
        for subset in &subsets {
            terms.clear();
            for &y in subset {
                let c = table.column(i, y);
                terms.push((offset + c, 1.0));
                if let Some(neg) = negated_offset {
                    terms.push((neg + c, -1.0));
                }
            }
            terms.push((gamma_col, subset.len() as f64));
            lp.add_sparse_constraint(&terms, 1.0)?;
        }
    }
    Ok(())
}

pub fn build_learning_lp(table: &PatternTable, interval: &UncertaintyInterval) -> Result<LinearProgram> {
    check_dims(table, &interval.a)?;
    check_dims(table, &interval.b)?;
    if interval.a.iter().zip(&interval.b).any(|(a, b)| a > b) {
        return Err(LpcError::InvalidArgument("interval has a > b".into()));
    }
    let m = table.dim();
    let mut objective = interval.a.clone();
    objective.extend(interval.b.iter().map(|b| -b));
    objective.push(1.0);
    let mut nonneg = vec![true; 2 * m];
    nonneg.push(false);
    let mut lp = LinearProgram::new(objective, nonneg)?;
    add_subset_rows(&mut lp, table, 0, Some(m), 2 * m)?;
    Ok(lp)
}

pub fn build_learning_lp_point(table: &PatternTable, tau: &[f64]) -> Result<LinearProgram> {
    check_dims(table, tau)?;
    let m = table.dim();
    let mut objective = tau.to_vec();
    objective.push(1.0);
    let mut lp = LinearProgram::new(objective, vec![false; m + 1])?;
    add_subset_rows(&mut lp, table, 0, None, m)?;
    Ok(lp)
}

/// Largest `||(phi_x^T lambda + gamma)^+||_1` over the table's patterns.
pub fn max_clipped_sum(table: &PatternTable, lambda: &[f64], gamma: f64) -> f64 {
    (0..table.len())
        .map(|i| {
            table
                .columns(i)
                .iter()
                .map(|&c| (lambda[c] + gamma).max(0.0))
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn dual_value(interval: &UncertaintyInterval, alpha: &[f64], beta: &[f64], gamma: f64) -> f64 {
    let a: f64 = interval.a.iter().zip(alpha).map(|(a, x)| a * x).sum();
    let b: f64 = interval.b.iter().zip(beta).map(|(b, x)| b * x).sum();
    a - b + gamma
}

pub fn solve_learning(table: &PatternTable, interval: &UncertaintyInterval, form: LpForm) -> Result<DualSolution> {
    solve_learning_with(table, interval, form, &SolverOptions::default())
}

pub fn solve_learning_with(
    table: &PatternTable,
    interval: &UncertaintyInterval,
    form: LpForm,
    opts: &SolverOptions,
) -> Result<DualSolution> {
    let m = table.dim();
    let lp = match form {
        LpForm::Interval => build_learning_lp(table, interval)?,
        LpForm::Point => {
            if !interval.is_point() {
                return Err(LpcError::InvalidArgument("point form needs a == b".into()));
            }
            build_learning_lp_point(table, &interval.a)?
        }
    };
    let sol = solve_with(&lp, opts)?;
    let z = match sol.status {
        LpStatus::Optimal => sol.point.expect("optimal solutions carry a point"),
        LpStatus::Unbounded => return Err(LpcError::EmptyUncertaintySet),
        LpStatus::Infeasible => {
            return Err(LpcError::Numerical("learning problem reported infeasible".into()))
        }
    };
    let (alpha, beta, mut gamma) = match form {
        LpForm::Interval => (z[..m].to_vec(), z[m..2 * m].to_vec(), z[2 * m]),
        LpForm::Point => (
            z[..m].iter().map(|l| l.max(0.0)).collect(),
            z[..m].iter().map(|l| (-l).max(0.0)).collect(),
            z[m],
        ),
    };
    let lambda: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a - b).collect();

    // Pull gamma back so every clipped score sum is at most one.
    let excess = max_clipped_sum(table, &lambda, gamma) - 1.0;
    if excess > 0.0 {
        gamma -= excess;
    }
    let value = dual_value(interval, &alpha, &beta, gamma);
    Ok(DualSolution {
        alpha,
        beta,
        gamma,
        lambda,
        value,
        minimax_risk: 1.0 - value,
        form,
        lp_rows: lp.num_constraints(),
        lp_cols: lp.num_vars(),
        iterations: sol.iterations,
    })
}

/// Solves the point form when `a == b` and the interval form otherwise.
pub fn learn(table: &PatternTable, interval: &UncertaintyInterval, opts: &SolverOptions) -> Result<DualSolution> {
    let form = if interval.is_point() {
        LpForm::Point
    } else {
        LpForm::Interval
    };
    solve_learning_with(table, interval, form, opts)
}

/// Observed patterns of `features`, plus the pattern behind every component
/// with a positive lower bound so the restricted problem stays bounded.
pub fn approx_table(gf: &GeneratingFunction, features: &[Vec<f64>], a: &[f64]) -> Result<PatternTable> {
    let observed = gf.observed_patterns(features)?;
    let mut patterns = observed.keys().to_vec();
    for (j, _) in a.iter().enumerate().filter(|(_, &v)| v > 0.0) {
        let tuple = crate::phi::ind_decode(j, gf.num_labels(), gf.k() + 1)?;
        let key = tuple[1..].to_vec();
        if observed.find(&key).is_none() && !patterns.contains(&key) {
            patterns.push(key);
        }
    }
    PatternTable::from_patterns(gf.num_labels(), gf.k(), patterns)
}

pub fn train(gf: GeneratingFunction, interval: UncertaintyInterval, mode: TrainMode<'_>) -> Result<LpcModel> {
    train_with(gf, interval, mode, &SolverOptions::default())
}

pub fn train_with(
    gf: GeneratingFunction,
    interval: UncertaintyInterval,
    mode: TrainMode<'_>,
    opts: &SolverOptions,
) -> Result<LpcModel> {
    if interval.dim() != gf.m() {
        return Err(LpcError::DimensionMismatch {
            expected: gf.m(),
            got: interval.dim(),
        });
    }
    let (table, pattern_mode) = match mode {
        TrainMode::Exact => {
            let r = gf.enumeration_size()?;
            if r > crate::phi::MAX_ENUMERATED_PATTERNS {
                return Err(LpcError::InvalidArgument(format!(
                    "exact mode would enumerate {r} patterns; use approx mode"
                )));
            }
            (gf.enumerated_patterns()?, PatternMode::Exact)
        }
        TrainMode::Approx(features) => (approx_table(&gf, features, &interval.a)?, PatternMode::Approx),
    };
    let dual = learn(&table, &interval, opts)?;
    let names = (0..gf.num_labels()).map(|y| y.to_string()).collect();
    LpcModel::new(gf, interval, table, pattern_mode, &dual, names)
}

/// A trained minimax classifier together with everything needed to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct LpcModel {
    gf: GeneratingFunction,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: f64,
    lambda: Vec<f64>,
    minimax_risk: f64,
    interval: UncertaintyInterval,
    pattern_mode: PatternMode,
    patterns: PatternTable,
    label_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    num_labels: usize,
    k: usize,
    ind_order: String,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: f64,
    #[serde(rename = "R")]
    minimax_risk: f64,
    interval: UncertaintyInterval,
    classifiers: Vec<BaseClassifier>,
    pattern_mode: PatternMode,
    patterns: PatternTable,
    label_names: Vec<String>,
}

const IND_ORDER: &str = "lexicographic";

impl TryFrom<ModelFile> for LpcModel {
    type Error = LpcError;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.ind_order != IND_ORDER {
            return Err(LpcError::Serialization(format!("unsupported ind_order {:?}", f.ind_order)));
        }
        let gf = GeneratingFunction::new(f.num_labels, f.classifiers)?;
        if gf.k() != f.k {
            return Err(LpcError::Serialization(format!(
                "k = {} but {} classifiers stored",
                f.k,
                gf.k()
            )));
        }
        let model = Self::from_parts(
            gf,
            f.interval,
            f.patterns,
            f.pattern_mode,
            f.alpha,
            f.beta,
            f.gamma,
            f.label_names,
        )?;
        Ok(Self {
            minimax_risk: f.minimax_risk,
            ..model
        })
    }
}

impl From<LpcModel> for ModelFile {
    fn from(m: LpcModel) -> Self {
        Self {
            num_labels: m.gf.num_labels(),
            k: m.gf.k(),
            ind_order: IND_ORDER.to_string(),
            alpha: m.alpha,
            beta: m.beta,
            gamma: m.gamma,
            minimax_risk: m.minimax_risk,
            interval: m.interval,
            classifiers: m.gf.classifiers().to_vec(),
            pattern_mode: m.pattern_mode,
            patterns: m.patterns,
            label_names: m.label_names,
        }
    }
}

impl LpcModel {
    pub fn new(
        gf: GeneratingFunction,
        interval: UncertaintyInterval,
        patterns: PatternTable,
        pattern_mode: PatternMode,
        dual: &DualSolution,
        label_names: Vec<String>,
    ) -> Result<Self> {
        Self::from_parts(
            gf,
            interval,
            patterns,
            pattern_mode,
            dual.alpha.clone(),
            dual.beta.clone(),
            dual.gamma,
            label_names,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        gf: GeneratingFunction,
        interval: UncertaintyInterval,
        patterns: PatternTable,
        pattern_mode: PatternMode,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: f64,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let m = gf.m();
        for (what, len) in [
            ("alpha", alpha.len()),
            ("beta", beta.len()),
            ("interval", interval.dim()),
            ("patterns", patterns.dim()),
        ] {
            if len != m {
                return Err(LpcError::Serialization(format!("{what} has length {len}, expected {m}")));
            }
        }
        if patterns.num_labels() != gf.num_labels() || label_names.len() != gf.num_labels() {
            return Err(LpcError::DimensionMismatch {
                expected: gf.num_labels(),
                got: label_names.len(),
            });
        }
        if patterns.keys().iter().any(|key| key.len() != gf.k()) {
            return Err(LpcError::Serialization("pattern keys do not match k".into()));
        }
        let lambda: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a - b).collect();
        let minimax_risk = 1.0 - dual_value(&interval, &alpha, &beta, gamma);
        Ok(Self {
            gf,
            alpha,
            beta,
            gamma,
            lambda,
            minimax_risk,
            interval,
            pattern_mode,
            patterns,
            label_names,
        })
    }

    pub fn with_label_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_labels() {
            return Err(LpcError::DimensionMismatch {
                expected: self.num_labels(),
                got: names.len(),
            });
        }
        self.label_names = names;
        Ok(self)
    }

    pub fn gf(&self) -> &GeneratingFunction {
        &self.gf
    }

    pub fn num_labels(&self) -> usize {
        self.gf.num_labels()
    }

    pub fn k(&self) -> usize {
        self.gf.k()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Upper bound `R` on the expected 0-1 loss over the uncertainty set.
    pub fn minimax_risk(&self) -> f64 {
        self.minimax_risk
    }

    pub fn interval(&self) -> &UncertaintyInterval {
        &self.interval
    }

    pub fn patterns(&self) -> &PatternTable {
        &self.patterns
    }

    pub fn pattern_mode(&self) -> PatternMode {
        self.pattern_mode
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
