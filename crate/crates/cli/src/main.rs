//! `lpc` command-line front end.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use lpc::bounds::{estimate_m_heuristic, model_sandwich, DeviationBound};
use lpc::classifiers::ClassifierKind;
use lpc::data::{load_csv, read_features_csv, LabelColumn, LabeledDataset, SyntheticSpec, SYNTHETIC_BAYES_RISK};
use lpc::lp::SolverOptions;
use lpc::pipeline::{
    cross_validate, curve_config, default_classifiers, evaluate, fit_lpc, learning_curve, synthetic_classifiers,
    IntervalMode, LpcConfig, ModeChoice, CURVE_SIZES, CURVE_TEST_SIZE,
};
use lpc::selfcheck::{self, SelfcheckConfig, SUITES};
use lpc::{LpcError, LpcModel};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "lpc", version, about = "Minimax linear-programming classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate expectations by cross validation, learn the classifier and write the model.
    Train(TrainArgs),
    /// Write per-label probabilities and predicted labels as CSV.
    Predict(PredictArgs),
    /// Score a saved model on labeled data, or cross-validate the whole pipeline.
    Eval(EvalArgs),
    /// Risk bounds of a saved model.
    Bounds(BoundsArgs),
    /// Learning curve on the synthetic problem.
    Curve(CurveArgs),
    /// Randomized invariant suites.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct DataArgs {
    /// Labeled CSV file.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Draw this many samples from the built-in synthetic problem instead.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Label column: `last`, a zero-based index, or a header name.
    #[arg(long, default_value = "last")]
    label_col: String,
    /// The CSV has no header line.
    #[arg(long)]
    no_header: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ModelArgs {
    /// Number of base classifiers; takes a prefix of the default list when `--classifiers` is absent.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated base classifiers, e.g. `knn5,qda,tree10`.
    #[arg(long, value_delimiter = ',')]
    classifiers: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// `hoeffding`, `point` or `manual:<s>`.
    #[arg(long, default_value = "hoeffding")]
    interval: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `auto`, `exact` or `approx`.
    #[arg(long, default_value = "auto")]
    mode: String,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Report file; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of feature rows.
    #[arg(long)]
    data: PathBuf,
    /// Drop this column before predicting (for files that still carry labels).
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    no_header: bool,
    /// Seed for the sampled labels.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metadata JSON; stderr when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Saved model; without it the pipeline is cross-validated on the data.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BoundsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Confidence for the deviation term; defaults to the one stored with the interval.
    #[arg(long)]
    delta: Option<f64>,
    /// Random points tried by the heuristic estimate of M.
    #[arg(long, default_value_t = 200)]
    m_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the deviation term.
    #[arg(long)]
    no_deviation: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CurveArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training sizes.
    #[arg(long, value_delimiter = ',', default_values_t = CURVE_SIZES)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = CURVE_TEST_SIZE)]
    test_size: usize,
    /// Recompute the Bayes risk with this many Monte Carlo samples instead of the stored constant.
    #[arg(long)]
    bayes_samples: Option<usize>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metadata JSON; stderr when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SelfcheckArgs {
    /// Suites to run; all when absent.
    #[arg(long, value_delimiter = ',')]
    suite: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smaller instance counts and Monte Carlo sizes.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the simplex optimality tolerance.
    #[arg(long, hide = true)]
    optimality_tol: Option<f64>,
}

/// Failure carrying its process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<LpcError> for Failure {
    fn from(e: LpcError) -> Self {
        let (code, kind) = match &e {
            LpcError::InvalidArgument(_) => (1, "invalid_argument"),
            LpcError::DimensionMismatch { .. } => (2, "dimension_mismatch"),
            LpcError::LabelOutOfRange { .. } => (2, "label_out_of_range"),
            LpcError::EmptyDataset => (2, "empty_dataset"),
            LpcError::InsufficientClassSamples { .. } => (2, "insufficient_class_samples"),
            LpcError::Parse { .. } => (2, "parse"),
            LpcError::Io(_) => (2, "io"),
            LpcError::Serialization(_) => (2, "serialization"),
            LpcError::EmptyUncertaintySet => (3, "empty_uncertainty_set"),
            LpcError::Lp(_) => (3, "lp"),
            LpcError::Numerical(_) => (3, "numerical"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        LpcError::from(e).into()
    }
}

type CmdResult = std::result::Result<Value, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        kind: "usage",
        message: message.into(),
    }
}

fn metadata(command: &str, config: Value, started: Instant) -> Value {
    json!({
        "command": command,
        "version": VERSION,
        "config": config,
        "wall_time": started.elapsed().as_secs_f64(),
    })
}

fn to_value<T: Serialize>(v: &T) -> std::result::Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| LpcError::from(e).into())
}

fn write_text(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

fn write_json(path: Option<&Path>, value: &Value) -> std::result::Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(LpcError::from)?;
    text.push('\n');
    write_text(path, &text).map_err(|e| io_error(path, e))
}

/// Metadata for CSV-producing commands goes to a side file or stderr.
fn write_side_json(path: Option<&Path>, value: &Value) -> std::result::Result<(), Failure> {
    match path {
        Some(_) => write_json(path, value),
        None => {
            eprintln!("{}", serde_json::to_string(value).map_err(LpcError::from)?);
            Ok(())
        }
    }
}

fn io_error(path: Option<&Path>, e: io::Error) -> Failure {
    let where_ = path.map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string());
    LpcError::Io(format!("{where_}: {e}")).into()
}

fn label_column(s: &str) -> LabelColumn {
    match s.parse() {
        Ok(c) => c,
        Err(never) => match never {},
    }
}

fn load_data(args: &DataArgs, seed: u64) -> std::result::Result<LabeledDataset, Failure> {
    match (&args.data, args.synthetic) {
        (Some(path), None) => Ok(load_csv(path, &label_column(&args.label_col), !args.no_header)?),
        (None, Some(n)) => Ok(SyntheticSpec::default().generate(n, seed)?),
        _ => Err(usage("exactly one of --data or --synthetic is required")),
    }
}

fn build_config(args: &ModelArgs, synthetic: bool) -> std::result::Result<LpcConfig, Failure> {
    let mut classifiers = match &args.classifiers {
        Some(names) => names
            .iter()
            .map(|s| s.trim().parse::<ClassifierKind>())
            .collect::<Result<Vec<_>, _>>()?,
        None if synthetic => synthetic_classifiers(),
        None => default_classifiers(),
    };
    if let Some(k) = args.k {
        if k == 0 {
            return Err(usage("--k must be positive"));
        }
        if args.classifiers.is_some() && k != classifiers.len() {
            return Err(usage(format!("--k {k} disagrees with {} listed classifiers", classifiers.len())));
        }
        if k > classifiers.len() {
            return Err(usage(format!(
                "--k {k} exceeds the {} default classifiers; list them with --classifiers",
                classifiers.len()
            )));
        }
        classifiers.truncate(k);
    }
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(usage(format!("--delta must lie in (0, 1), got {}", args.delta)));
    }
    if args.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    Ok(LpcConfig {
        classifiers,
        interval: args.interval.parse::<IntervalMode>()?,
        delta: args.delta,
        folds: args.folds,
        seed: args.seed,
        mode: args.mode.parse::<ModeChoice>()?,
    })
}

fn cmd_train(args: &TrainArgs, started: Instant) -> CmdResult {
    let config = build_config(&args.model, args.data.synthetic.is_some())?;
    let dataset = load_data(&args.data, config.seed)?;
    let fit = fit_lpc(&dataset, &config)?;
    let sandwich = model_sandwich(&fit.model)?;
    fit.model.save(&args.out)?;
    let s = &fit.summary;
    let wall_time = started.elapsed().as_secs_f64();
    let report = json!({
        "R": fit.model.minimax_risk(),
        "L": sandwich.lower_l,
        "n": s.n,
        "m": s.m,
        "r": s.r,
        "lp_rows": s.lp_rows,
        "lp_cols": s.lp_cols,
        "iterations": s.iterations,
        "folds_used": s.folds_used,
        "folds_clamped": s.folds_clamped,
        "pattern_mode": s.pattern_mode,
        "model": args.out,
        "wall_time": wall_time,
        "metadata": metadata("train", json!({"args": to_value(args)?, "resolved": to_value(&config)?}), started),
    });
    write_json(args.report.as_deref(), &report)?;
    Ok(report)
}

fn csv_error(e: csv::Error) -> Failure {
    LpcError::Io(e.to_string()).into()
}

fn cmd_predict(args: &PredictArgs, started: Instant) -> CmdResult {
    let model = LpcModel::load(&args.model)?;
    let drop = args.label_col.as_deref().map(label_column);
    let file = File::open(&args.data).map_err(|e| io_error(Some(&args.data), e))?;
    let rows = read_features_csv(file, drop.as_ref(), !args.no_header)?;
    let names = model.label_names();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header: Vec<String> = names.iter().map(|n| format!("p_{n}")).collect();
        header.push("sampled".into());
        header.push("argmax".into());
        w.write_record(&header).map_err(csv_error)?;
        for (i, x) in rows.iter().enumerate() {
            let dist = model.rule_probabilities(x)?;
            let sampled = model.predict(x, args.seed, i as u64)?;
            let mut record: Vec<String> = dist.probs.iter().map(|p| p.to_string()).collect();
            record.push(names[sampled].clone());
            record.push(names[dist.argmax()].clone());
            w.write_record(&record).map_err(csv_error)?;
        }
        w.flush()?;
    }
    let text = String::from_utf8(buf).map_err(|e| LpcError::Serialization(e.to_string()))?;
    write_text(args.out.as_deref(), &text).map_err(|e| io_error(args.out.as_deref(), e))?;
    let report = json!({
        "rows": rows.len(),
        "metadata": metadata("predict", to_value(args)?, started),
    });
    write_side_json(args.report.as_deref(), &report)?;
    Ok(report)
}

fn cmd_eval(args: &EvalArgs, started: Instant) -> CmdResult {
    let report = match &args.model {
        Some(path) => {
            let model = LpcModel::load(path)?;
            let dataset = load_data(&args.data, args.config.seed)?;
            let eval = evaluate(&model, &dataset, args.config.seed)?;
            json!({
                "mode": "model",
                "R": model.minimax_risk(),
                "L": eval.sandwich.lower_l,
                "exact_error": eval.errors.exact,
                "randomized_error": eval.errors.randomized,
                "argmax_error": eval.errors.argmax,
                "n": eval.errors.n,
                "empirical_in_set": eval.empirical_in_set,
                "metadata": metadata("eval", to_value(args)?, started),
            })
        }
        None => {
            let config = build_config(&args.config, args.data.synthetic.is_some())?;
            let dataset = load_data(&args.data, config.seed)?;
            let cv = cross_validate(&dataset, &config, config.folds)?;
            json!({
                "mode": "cross_validation",
                "folds": to_value(&cv.folds)?,
                "mean_exact_error": cv.mean_exact,
                "mean_randomized_error": cv.mean_randomized,
                "mean_argmax_error": cv.mean_argmax,
                "folds_clamped": cv.clamped,
                "metadata": metadata("eval", json!({"args": to_value(args)?, "resolved": to_value(&config)?}), started),
            })
        }
    };
    write_json(args.out.as_deref(), &report)?;
    Ok(report)
}

fn cmd_bounds(args: &BoundsArgs, started: Instant) -> CmdResult {
    let model = LpcModel::load(&args.model)?;
    let sandwich = model_sandwich(&model)?;
    let mut report = json!({
        "R": model.minimax_risk(),
        "L": sandwich.lower_l,
        "kappa_h": sandwich.kappa_h,
        "kappa_neg_h": sandwich.kappa_neg_h,
    });
    let interval = model.interval();
    let delta = args.delta.or(interval.delta);
    if !args.no_deviation {
        match (delta, interval.n) {
            (Some(delta), n) if n > 0 => {
                let anchors = [interval.a.clone(), interval.tau_n.clone()];
                let est = estimate_m_heuristic(model.patterns(), args.m_samples, args.seed, &anchors)?;
                let gf = model.gf();
                let dev = DeviationBound::new(gf.m(), n, delta, gf.c_norm2(), est.value, true)?;
                report["deviation_term"] = json!({
                    "term": dev.term,
                    "m_estimate": dev.m_estimate,
                    "optimistic": dev.optimistic,
                    "m_solved": est.solved,
                    "m_skipped": est.skipped,
                    "n": dev.n,
                    "delta": dev.delta,
                    "c_norm2": dev.c_norm2,
                });
            }
            _ => {
                report["deviation_term"] = Value::Null;
            }
        }
    }
    report["metadata"] = metadata("bounds", to_value(args)?, started);
    write_json(args.out.as_deref(), &report)?;
    Ok(report)
}

fn cmd_curve(args: &CurveArgs, started: Instant) -> CmdResult {
    if args.sizes.is_empty() || args.sizes.contains(&0) {
        return Err(usage("--sizes must list positive sizes"));
    }
    let spec = SyntheticSpec::default();
    let bayes = match args.bayes_samples {
        Some(samples) => spec.bayes_risk_mc(samples, args.seed)?.risk,
        None => SYNTHETIC_BAYES_RISK,
    };
    let config = curve_config(args.seed);
    let rows = learning_curve(&spec, &args.sizes, args.seed, &config, args.test_size, bayes)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["n", "R", "L", "test_error", "bayes_risk"]).map_err(csv_error)?;
        for row in &rows {
            w.write_record([
                row.n.to_string(),
                row.r.to_string(),
                row.l.to_string(),
                row.test_error.to_string(),
                row.bayes_risk.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
    }
    let text = String::from_utf8(buf).map_err(|e| LpcError::Serialization(e.to_string()))?;
    write_text(args.out.as_deref(), &text).map_err(|e| io_error(args.out.as_deref(), e))?;
    let report = json!({
        "rows": rows.len(),
        "bayes_risk": bayes,
        "metadata": metadata("curve", json!({"args": to_value(args)?, "resolved": to_value(&config)?}), started),
    });
    write_side_json(args.report.as_deref(), &report)?;
    Ok(report)
}

fn cmd_selfcheck(args: &SelfcheckArgs, started: Instant) -> CmdResult {
    let mut config = SelfcheckConfig {
        seed: args.seed,
        ..SelfcheckConfig::default()
    };
    if args.quick {
        config.duality_instances = 20;
        config.alternative_rules = 5;
        config.sandwich_triples = 40;
        config.coverage_resamples = 40;
        config.coverage_mc_samples = 100_000;
    }
    if let Some(tol) = args.optimality_tol {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(usage("--optimality-tol must be positive"));
        }
        config.solver = SolverOptions {
            optimality_tol: tol,
            ..SolverOptions::default()
        };
    }
    let suites: Vec<&str> = if args.suite.is_empty() {
        SUITES.to_vec()
    } else {
        args.suite.iter().map(|s| s.trim()).collect()
    };
    if let Some(bad) = suites.iter().find(|s| !SUITES.contains(s)) {
        return Err(usage(format!("unknown suite {bad:?}; expected one of {}", SUITES.join(", "))));
    }
    let result = selfcheck::run(&config, &suites)?;
    let report = json!({
        "passed": result.passed,
        "suites": to_value(&result.suites)?,
        "metadata": metadata("selfcheck", json!({"args": to_value(args)?, "resolved": to_value(&config)?}), started),
    });
    write_json(args.out.as_deref(), &report)?;
    if !result.passed {
        let failed: Vec<&str> = result
            .suites
            .iter()
            .filter(|s| !s.passed())
            .map(|s| s.invariant.as_str())
            .collect();
        return Err(Failure {
            code: 3,
            kind: "selfcheck_failed",
            message: format!("violated: {}", failed.join("; ")),
        });
    }
    Ok(report)
}

fn echo<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn report_failure(command: &str, config: Value, failure: &Failure, started: Instant) -> ExitCode {
    let body = json!({
        "error": {
            "kind": failure.kind,
            "message": failure.message,
            "exit_code": failure.code,
        },
        "metadata": metadata(command, config, started),
    });
    eprintln!("{}", serde_json::to_string(&body).unwrap_or_else(|_| failure.message.clone()));
    ExitCode::from(failure.code)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let failure = usage(e.render().to_string().trim_end());
            return report_failure("usage", Value::Null, &failure, started);
        }
    };
    let (name, config, result) = match &cli.command {
        Command::Train(a) => ("train", echo(a), cmd_train(a, started)),
        Command::Predict(a) => ("predict", echo(a), cmd_predict(a, started)),
        Command::Eval(a) => ("eval", echo(a), cmd_eval(a, started)),
        Command::Bounds(a) => ("bounds", echo(a), cmd_bounds(a, started)),
        Command::Curve(a) => ("curve", echo(a), cmd_curve(a, started)),
        Command::Selfcheck(a) => ("selfcheck", echo(a), cmd_selfcheck(a, started)),
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(f) => report_failure(name, config, &f, started),
    }
}
