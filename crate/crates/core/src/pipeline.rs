//! End-to-end fitting, evaluation and the learning-curve experiment.

use serde::{Deserialize, Serialize};

use crate::bounds::{model_sandwich, RiskSandwich};
use crate::classifiers::ClassifierKind;
use crate::data::{stratified_kfold, LabeledDataset, SyntheticSpec};
use crate::error::{LpcError, Result};
use crate::learning::{approx_table, learn, LpcModel, PatternMode};
use crate::lp::SolverOptions;
use crate::phi::MAX_ENUMERATED_PATTERNS;
use crate::prediction::{evaluate as evaluate_rule, ErrorReport};
use crate::uncertainty::{estimate_expectation_cv, UncertaintyInterval};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalMode {
    Hoeffding,
    Point,
    Manual { s: f64 },
}

impl std::str::FromStr for IntervalMode {
    type Err = LpcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hoeffding" => Ok(IntervalMode::Hoeffding),
            "point" => Ok(IntervalMode::Point),
            other => {
                let value = other
                    .strip_prefix("manual:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| LpcError::InvalidArgument(format!("unknown interval mode {other:?}")))?;
                Ok(IntervalMode::Manual { s: value })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    /// Exact when `|Y|^k` is at most the enumeration limit.
    #[default]
    Auto,
    Exact,
    Approx,
}

impl std::str::FromStr for ModeChoice {
    type Err = LpcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ModeChoice::Auto),
            "exact" => Ok(ModeChoice::Exact),
            "approx" => Ok(ModeChoice::Approx),
            _ => Err(LpcError::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

pub fn synthetic_classifiers() -> Vec<ClassifierKind> {
    vec![
        ClassifierKind::Knn { k: 3 },
        ClassifierKind::Knn { k: 5 },
        ClassifierKind::Knn { k: 7 },
    ]
}

pub fn default_classifiers() -> Vec<ClassifierKind> {
    vec![
        ClassifierKind::Knn { k: 5 },
        ClassifierKind::Qda,
        ClassifierKind::DecisionTree {
            max_depth: Some(crate::classifiers::DEFAULT_TREE_DEPTH),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpcConfig {
    pub classifiers: Vec<ClassifierKind>,
    pub interval: IntervalMode,
    pub delta: f64,
    pub folds: usize,
    pub seed: u64,
    pub mode: ModeChoice,
}

impl Default for LpcConfig {
    fn default() -> Self {
        Self {
            classifiers: default_classifiers(),
            interval: IntervalMode::Hoeffding,
            delta: 0.05,
            folds: 10,
            seed: 0,
            mode: ModeChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub lp_rows: usize,
    pub lp_cols: usize,
    pub iterations: usize,
    pub folds_used: usize,
    pub folds_clamped: bool,
    pub pattern_mode: PatternMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub model: LpcModel,
    pub summary: FitSummary,
}

pub fn fit_lpc(dataset: &LabeledDataset, config: &LpcConfig) -> Result<FitOutput> {
    fit_lpc_with(dataset, config, &SolverOptions::default())
}

pub fn fit_lpc_with(dataset: &LabeledDataset, config: &LpcConfig, opts: &SolverOptions) -> Result<FitOutput> {
    let est = estimate_expectation_cv(&config.classifiers, dataset, config.folds, config.seed)?;
    let interval = match config.interval {
        IntervalMode::Hoeffding => UncertaintyInterval::hoeffding(est.tau.clone(), est.n, config.delta, &est.gf.range_c())?,
        IntervalMode::Point => UncertaintyInterval::point(est.tau.clone())?.with_n(est.n),
        IntervalMode::Manual { s } => UncertaintyInterval::manual(est.tau.clone(), est.n, s)?,
    };
    let exact = match config.mode {
        ModeChoice::Exact => true,
        ModeChoice::Approx => false,
        ModeChoice::Auto => est.gf.enumeration_size().is_ok_and(|r| r <= MAX_ENUMERATED_PATTERNS),
    };
    let (table, pattern_mode) = if exact {
        let r = est.gf.enumeration_size()?;
        if r > MAX_ENUMERATED_PATTERNS {
            return Err(LpcError::InvalidArgument(format!(
                "exact mode would enumerate {r} patterns; use approx mode"
            )));
        }
        (est.gf.enumerated_patterns()?, PatternMode::Exact)
    } else {
        (approx_table(&est.gf, dataset.features(), &interval.a)?, PatternMode::Approx)
    };
    let dual = learn(&table, &interval, opts)?;
    let summary = FitSummary {
        n: est.n,
        m: est.gf.m(),
        r: table.len(),
        lp_rows: dual.lp_rows,
        lp_cols: dual.lp_cols,
        iterations: dual.iterations,
        folds_used: est.folds_used,
        folds_clamped: est.clamped,
        pattern_mode,
    };
    let model = LpcModel::new(est.gf, interval, table, pattern_mode, &dual, dataset.label_names().to_vec())?;
    Ok(FitOutput { model, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub errors: ErrorReport,
    pub sandwich: RiskSandwich,
    /// Whether the empirical distribution of the evaluation set lies in the
    /// model's uncertainty set; when it does, `L <= exact <= R` must hold.
    pub empirical_in_set: bool,
}

/// Empirical distribution of `dataset` over the model's (pattern, label)
/// cells, or `None` when a sample falls on a pattern outside the table.
pub fn empirical_cells(model: &LpcModel, dataset: &LabeledDataset) -> Result<Option<Vec<f64>>> {
    let labels = model.num_labels();
    let mut p = vec![0.0; model.patterns().num_cells()];
    let w = 1.0 / dataset.len() as f64;
    for (x, &y) in dataset.features().iter().zip(dataset.labels()) {
        match model.patterns().find(&model.gf().pattern(x)?) {
            Some(i) => p[i * labels + y] += w,
            None => return Ok(None),
        }
    }
    Ok(Some(p))
}

pub fn evaluate(model: &LpcModel, dataset: &LabeledDataset, seed: u64) -> Result<EvalReport> {
    let errors = evaluate_rule(model, dataset, seed)?;
    let sandwich = model_sandwich(model)?;
    let empirical_in_set = match empirical_cells(model, dataset)? {
        Some(p) => model.interval().contains(&model.patterns().push_forward(&p), 1e-12),
        None => false,
    };
    Ok(EvalReport {
        errors,
        sandwich,
        empirical_in_set,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    pub fold: usize,
    pub n_test: usize,
    pub minimax_risk: f64,
    pub errors: ErrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<CvFold>,
    pub mean_exact: f64,
    pub mean_randomized: f64,
    pub mean_argmax: f64,
    pub clamped: bool,
}

/// Outer stratified cross-validation of the whole fitting procedure.
pub fn cross_validate(dataset: &LabeledDataset, config: &LpcConfig, folds: usize) -> Result<CvReport> {
    let split = stratified_kfold(dataset, folds, config.seed)?;
    if split.len() < 2 {
        return Err(LpcError::InvalidArgument("cross-validation needs at least 2 folds".into()));
    }
    let mut out = Vec::with_capacity(split.len());
    for f in 0..split.len() {
        let train = dataset.subset(&split.complement(f));
        let test = dataset.subset(&split.folds[f]);
        let fit = fit_lpc(&train, config)?;
        out.push(CvFold {
            fold: f,
            n_test: test.len(),
            minimax_risk: fit.model.minimax_risk(),
            errors: evaluate_rule(&fit.model, &test, config.seed.wrapping_add(f as u64))?,
        });
    }
    let mean = |g: fn(&CvFold) -> f64| out.iter().map(g).sum::<f64>() / out.len() as f64;
    Ok(CvReport {
        mean_exact: mean(|f| f.errors.exact),
        mean_randomized: mean(|f| f.errors.randomized),
        mean_argmax: mean(|f| f.errors.argmax),
        clamped: split.clamped(),
        folds: out,
    })
}

pub const CURVE_SIZES: [usize; 5] = [50, 100, 500, 1000, 5000];
pub const CURVE_TEST_SIZE: usize = 10_000;
pub const CURVE_S: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub test_error: f64,
    pub bayes_risk: f64,
}

/// Seed of the training sample of size `n` in the curve run for `seed`.
pub fn curve_train_seed(seed: u64, n: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(n as u64)
}

/// Seed of the fixed test sample shared by every `n` in the run for `seed`.
pub fn curve_test_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03
}

/// One row per training size: fit with a fixed half-width numerator `s` and
/// score the exact expected error on a shared synthetic test sample.
pub fn learning_curve(
    spec: &SyntheticSpec,
    sizes: &[usize],
    seed: u64,
    config: &LpcConfig,
    test_size: usize,
    bayes_risk: f64,
) -> Result<Vec<CurveRow>> {
    let test = spec.generate(test_size, curve_test_seed(seed))?;
    sizes
        .iter()
        .map(|&n| {
            let train = spec.generate(n, curve_train_seed(seed, n))?;
            let fit = fit_lpc(&train, config)?;
            let sandwich = model_sandwich(&fit.model)?;
            let errors = evaluate_rule(&fit.model, &test, seed)?;
            Ok(CurveRow {
                seed,
                n,
                r: fit.model.minimax_risk(),
                l: sandwich.lower_l,
                test_error: errors.exact,
                bayes_risk,
            })
        })
        .collect()
}

pub fn curve_config(seed: u64) -> LpcConfig {
    LpcConfig {
        classifiers: synthetic_classifiers(),
        interval: IntervalMode::Manual { s: CURVE_S },
        seed,
        ..LpcConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;

    #[test]
    fn parse_modes() {
        assert_eq!("point".parse::<IntervalMode>().unwrap(), IntervalMode::Point);
        assert_eq!("hoeffding".parse::<IntervalMode>().unwrap(), IntervalMode::Hoeffding);
        assert_eq!("manual:0.25".parse::<IntervalMode>().unwrap(), IntervalMode::Manual { s: 0.25 });
        assert!("manual:-1".parse::<IntervalMode>().is_err());
        assert!("manual".parse::<IntervalMode>().is_err());
        assert_eq!("approx".parse::<ModeChoice>().unwrap(), ModeChoice::Approx);
    }

    #[test]
    fn fit_reports_consistent_sizes() {
        let d = synth_generate(300, 7).unwrap();
        let fit = fit_lpc(&d, &LpcConfig::default()).unwrap();
        let s = &fit.summary;
        assert_eq!((s.m, s.r, s.lp_rows, s.lp_cols), (81, 27, 189, 163));
        assert_eq!(s.pattern_mode, PatternMode::Exact);
        let report = evaluate(&fit.model, &d, 0).unwrap();
        assert!(report.sandwich.lower_l <= report.sandwich.upper_r + 1e-12);
        assert!((report.sandwich.upper_r - fit.model.minimax_risk()).abs() < 1e-8);
    }

    #[test]
    fn point_mode_uses_point_form() {
        let d = synth_generate(200, 1).unwrap();
        let config = LpcConfig {
            interval: IntervalMode::Point,
            ..LpcConfig::default()
        };
        let fit = fit_lpc(&d, &config).unwrap();
        assert_eq!(fit.summary.lp_cols, 82);
        assert!(fit.model.interval().is_point());
    }

    #[test]
    fn approx_mode_restricts_patterns() {
        let d = synth_generate(200, 2).unwrap();
        let config = LpcConfig {
            mode: ModeChoice::Approx,
            interval: IntervalMode::Point,
            ..LpcConfig::default()
        };
        let fit = fit_lpc(&d, &config).unwrap();
        assert_eq!(fit.summary.pattern_mode, PatternMode::Approx);
        assert!(fit.summary.r <= 27);
        let exact = fit_lpc(&d, &LpcConfig { mode: ModeChoice::Exact, ..config }).unwrap();
        // fewer constraints can only raise the optimum
        assert!(fit.model.minimax_risk() <= exact.model.minimax_risk() + 1e-9);
    }

    #[test]
    fn cross_validation_reports_every_fold() {
        let d = synth_generate(150, 3).unwrap();
        let config = LpcConfig {
            folds: 5,
            ..LpcConfig::default()
        };
        let cv = cross_validate(&d, &config, 3).unwrap();
        assert_eq!(cv.folds.len(), 3);
        assert_eq!(cv.folds.iter().map(|f| f.n_test).sum::<usize>(), 150);
        let mean = cv.folds.iter().map(|f| f.errors.argmax).sum::<f64>() / 3.0;
        assert!((mean - cv.mean_argmax).abs() < 1e-15);
    }

    #[test]
    fn curve_has_one_row_per_size() {
        let spec = SyntheticSpec::default();
        let rows = learning_curve(&spec, &[50, 100], 3, &curve_config(3), 500, 0.24).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(row.l <= row.r + 1e-12);
            assert!((0.0..=1.0).contains(&row.test_error));
        }
    }
}
