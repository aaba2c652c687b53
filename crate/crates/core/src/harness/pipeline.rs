//! Instance, model sequence, methods, evaluation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{BetaKind, DatasetKind, ExperimentConfig, Family, Method};
use super::plot;
use crate::aggregation::{
    combine_outputs, iwa_from_outputs, ols_from_outputs, one_hot, scaled_weights, tcr_from_outputs,
    tmr_from_outputs, tmv_from_outputs, AggregationResult,
};
use crate::datasets::{load_csv_instance, DomainAdaptationInstance, MoonsShift, SincShift};
use crate::density_ratio::{
    fit_domain_classifier, normalized_weights, DensityRatio, DomainClassifierConfig, UnitRatio,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{
    accuracy_from_predictions, mean, median, risk_from_predictions, EvaluationReport,
};
use crate::models::{
    fit_ridge_with, fit_softmax_entropy, fit_softmax_with, FeatureMap, ModelSequence, SharedModel,
    SoftmaxOptions,
};
use crate::selection::{dev_from_losses, iwv_from_losses, loss_table};

pub fn generate_instance(cfg: &ExperimentConfig, seed: u64) -> Result<DomainAdaptationInstance> {
    match cfg.dataset {
        DatasetKind::Sinc => SincShift {
            scale: cfg.sinc_scale,
            noise_std: cfg.resolved_noise(),
            ..SincShift::new(cfg.n, cfg.m, cfg.eval_size, seed)
        }
        .generate(),
        DatasetKind::Moons => {
            MoonsShift::new(cfg.n, cfg.m, cfg.eval_size, cfg.resolved_noise(), seed).generate()
        }
        DatasetKind::Csv => {
            let paths = cfg
                .csv
                .as_ref()
                .ok_or_else(|| Error::config("csv", "missing paths"))?;
            let mut inst = load_csv_instance(paths)?;
            inst.seed = seed;
            Ok(inst)
        }
    }
}

/// Number of classes if every label row is one-hot, `None` for regression.
pub fn class_count(inst: &DomainAdaptationInstance) -> Option<usize> {
    let y = &inst.source.y;
    let one_hot = y.cols() >= 2
        && y.iter_rows().all(|r| {
            r.iter().all(|&v| v == 0.0 || v == 1.0) && r.iter().filter(|&&v| v == 1.0).count() == 1
        });
    one_hot.then_some(y.cols())
}

/// Trains the model sequence. Only source labels and unlabeled target
/// inputs are used.
pub fn build_sequence(
    cfg: &ExperimentConfig,
    inst: &DomainAdaptationInstance,
) -> Result<ModelSequence> {
    let src = &inst.source;
    let d = src.x.cols();
    let family = cfg.resolved_family();
    if family == Family::Polynomial {
        let mut models = Vec::new();
        let mut labels = Vec::new();
        for deg in 0..cfg.resolved_l() as u32 {
            let m = fit_ridge_with(FeatureMap::polynomial(d, deg), &src.x, &src.y, cfg.ridge)?;
            models.push(Arc::new(m) as SharedModel);
            labels.push(format!("degree {deg}"));
        }
        return ModelSequence::with_labels(models, labels);
    }
    let classes = class_count(inst)
        .ok_or_else(|| Error::config("family", "classifier families need one-hot labels"))?;
    let labels = src.class_labels();
    let features = FeatureMap::polynomial(d, cfg.degree.max(1)).standardized(&src.x);
    let mut models = Vec::new();
    let mut names = Vec::new();
    for lam in cfg.resolved_lambdas() {
        let model = match family {
            Family::Epochs => {
                let opts = SoftmaxOptions {
                    epochs: (lam * cfg.epochs as f64).round() as usize,
                    lr: cfg.lr,
                    l2: 0.0,
                };
                fit_softmax_with(features.clone(), &src.x, &labels, classes, &opts, None)?
            }
            _ => {
                let opts = SoftmaxOptions {
                    epochs: cfg.epochs,
                    lr: cfg.lr,
                    l2: 0.0,
                };
                let w = lam * cfg.entropy_weight;
                fit_softmax_entropy(
                    features.clone(),
                    &src.x,
                    &labels,
                    classes,
                    &opts,
                    &inst.target_x,
                    w,
                )?
            }
        };
        models.push(Arc::new(model) as SharedModel);
        names.push(format!("lambda {lam}"));
    }
    ModelSequence::with_labels(models, names)
}

pub fn build_ratio(
    cfg: &ExperimentConfig,
    inst: &DomainAdaptationInstance,
) -> Result<Box<dyn DensityRatio>> {
    Ok(match cfg.beta {
        BetaKind::Unit => Box::new(UnitRatio),
        BetaKind::Learned => {
            let dc = DomainClassifierConfig {
                epochs: cfg.beta_epochs,
                bound: cfg.beta_bound,
                degree: cfg.beta_degree,
                ..Default::default()
            };
            Box::new(fit_domain_classifier(&inst.source.x, &inst.target_x, &dc)?)
        }
        BetaKind::Analytic => match cfg.dataset {
            DatasetKind::Sinc => Box::new(
                SincShift {
                    scale: cfg.sinc_scale,
                    ..SincShift::new(cfg.n, cfg.m, cfg.eval_size, 0)
                }
                .density_ratio(cfg.beta_bound)?,
            ),
            DatasetKind::Moons => Box::new(
                MoonsShift::new(cfg.n, cfg.m, cfg.eval_size, cfg.resolved_noise(), 0)
                    .density_ratio(cfg.beta_bound)?,
            ),
            DatasetKind::Csv => {
                return Err(Error::config("beta", "no analytic ratio for csv data"))
            }
        },
    })
}

/// An instance with its trained sequence and the ratio values on the
/// source inputs.
#[derive(Clone)]
pub struct Prepared {
    pub instance: DomainAdaptationInstance,
    pub sequence: ModelSequence,
    pub beta: Vec<f64>,
    pub classes: Option<usize>,
}

pub fn prepare(cfg: &ExperimentConfig, mut instance: DomainAdaptationInstance) -> Result<Prepared> {
    if cfg.source_as_target {
        instance.target_x = instance.source.x.clone();
    }
    let sequence = build_sequence(cfg, &instance)?;
    let ratio = build_ratio(cfg, &instance)?;
    let beta = normalized_weights(ratio.as_ref(), &instance.source.x)?.weights;
    let classes = class_count(&instance);
    Ok(Prepared {
        instance,
        sequence,
        beta,
        classes,
    })
}

/// What a method produced on one seed.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    /// One coefficient per model; empty for majority voting.
    pub weights: Vec<f64>,
    pub rank_retained: Option<usize>,
    pub gram_condition: Option<f64>,
    pub chosen_index: Option<usize>,
    /// Predictions on the evaluation inputs.
    pub predictions: Matrix,
}

impl MethodOutcome {
    fn from_aggregation(method: Method, r: AggregationResult, eval_out: &[Matrix]) -> Result<Self> {
        Ok(Self {
            method,
            predictions: combine_outputs(eval_out, &r.weights)?,
            rank_retained: Some(r.rank_retained),
            gram_condition: Some(r.gram_condition),
            chosen_index: None,
            weights: r.weights,
        })
    }

    fn one_hot(method: Method, index: usize, eval_out: &[Matrix]) -> Self {
        let mut w = vec![0.0; eval_out.len()];
        w[index] = 1.0;
        Self {
            method,
            predictions: eval_out[index].clone(),
            rank_retained: None,
            gram_condition: None,
            chosen_index: Some(index),
            weights: w,
        }
    }
}

/// A failed method or seed; the sweep continues without it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub method: Option<String>,
    pub seed: u64,
    pub message: String,
}

/// Everything computed for one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub reports: Vec<EvaluationReport>,
    pub outcomes: Vec<MethodOutcome>,
    pub failures: Vec<Failure>,
    /// Target risk of every single model on the evaluation split.
    pub model_risks: Vec<f64>,
    pub model_accuracies: Option<Vec<f64>>,
    pub oracle: AggregationResult,
}

impl SeedRun {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }

    pub fn report(&self, method: Method) -> Option<&EvaluationReport> {
        self.reports.iter().find(|r| r.method == method.name())
    }

    /// Per-model target performance: accuracy, or negative risk for
    /// regression.
    pub fn model_performance(&self) -> Vec<f64> {
        match &self.model_accuracies {
            Some(a) => a.clone(),
            None => self.model_risks.iter().map(|r| -r).collect(),
        }
    }
}

/// Methods that never see a target label.
fn unsupervised(
    method: Method,
    cfg: &ExperimentConfig,
    p: &Prepared,
    src_out: &[Matrix],
    tgt_out: &[Matrix],
    eval_out: &[Matrix],
) -> Result<MethodOutcome> {
    let src = &p.instance.source;
    let need_classes = || {
        p.classes.ok_or_else(|| {
            Error::InvalidArgument(format!("{method} needs a classification instance"))
        })
    };
    match method {
        Method::Iwa => {
            let r = iwa_from_outputs(src_out, &src.y, &p.beta, tgt_out, cfg.rcond)?;
            MethodOutcome::from_aggregation(method, r, eval_out)
        }
        Method::Sor => MethodOutcome::from_aggregation(
            method,
            ols_from_outputs("sor", src_out, &src.y, cfg.rcond)?,
            eval_out,
        ),
        Method::Tmr => {
            need_classes()?;
            MethodOutcome::from_aggregation(method, tmr_from_outputs(tgt_out, cfg.rcond)?, eval_out)
        }
        Method::Tcr => {
            need_classes()?;
            MethodOutcome::from_aggregation(method, tcr_from_outputs(tgt_out, cfg.rcond)?, eval_out)
        }
        Method::Tmv => {
            let classes = need_classes()?;
            Ok(MethodOutcome {
                method,
                weights: Vec::new(),
                rank_retained: None,
                gram_condition: None,
                chosen_index: None,
                predictions: one_hot(&tmv_from_outputs(eval_out)?, classes),
            })
        }
        Method::Iwv | Method::Dev => {
            let losses = loss_table(src_out, &src.y, cfg.selection_loss)?;
            let sel = if method == Method::Iwv {
                iwv_from_losses(&p.beta, &losses)
            } else {
                if src.len() < 2 {
                    return Err(Error::InvalidArgument(
                        "dev needs at least two source samples".into(),
                    ));
                }
                dev_from_losses(&p.beta, &losses)
            };
            Ok(MethodOutcome::one_hot(method, sel.chosen_index, eval_out))
        }
        Method::SourceOnly => Ok(MethodOutcome::one_hot(method, 0, eval_out)),
        Method::Oracle | Method::TargetBest => {
            unreachable!("label-using references are handled by evaluate")
        }
    }
}

/// Runs every configured method on a prepared instance and scores it on
/// the labeled evaluation split.
pub fn evaluate(cfg: &ExperimentConfig, p: &Prepared) -> Result<SeedRun> {
    let seed = p.instance.seed;
    let seq = &p.sequence;
    let eval = &p.instance.target_eval;
    let src_out = seq.outputs(&p.instance.source.x)?;
    let tgt_out = seq.outputs(&p.instance.target_x)?;
    let eval_out = seq.outputs(&eval.x)?;

    let eval_labels = p.classes.map(|_| eval.class_labels());
    let model_risks = eval_out
        .iter()
        .map(|o| risk_from_predictions(o, &eval.y).map(|r| r.mean))
        .collect::<Result<Vec<_>>>()?;
    let model_accuracies = match &eval_labels {
        Some(l) => Some(
            eval_out
                .iter()
                .map(|o| accuracy_from_predictions(o, l))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let oracle = ols_from_outputs("oracle", &eval_out, &eval.y, cfg.rcond)?;
    let oracle_risk =
        risk_from_predictions(&combine_outputs(&eval_out, &oracle.weights)?, &eval.y)?.mean;

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for method in cfg.effective_methods() {
        if method.needs_classes() && p.classes.is_none() {
            log::info!("{method} skipped: regression instance");
            continue;
        }
        let outcome = match method {
            Method::Oracle => MethodOutcome::from_aggregation(method, oracle.clone(), &eval_out),
            Method::TargetBest => {
                let best = match &model_accuracies {
                    Some(a) => first_extreme(a, |x, y| x > y),
                    None => first_extreme(&model_risks, |x, y| x < y),
                };
                Ok(MethodOutcome::one_hot(method, best, &eval_out))
            }
            _ => unsupervised(method, cfg, p, &src_out, &tgt_out, &eval_out),
        };
        match outcome {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(Failure {
                method: Some(method.name().to_string()),
                seed,
                message: e.to_string(),
            }),
        }
    }

    let mut reports = Vec::new();
    for o in &outcomes {
        let risk = risk_from_predictions(&o.predictions, &eval.y)?.mean;
        let accuracy = match &eval_labels {
            Some(l) => Some(accuracy_from_predictions(&o.predictions, l)?),
            None => None,
        };
        reports.push(EvaluationReport {
            method: o.method.name().to_string(),
            seed,
            target_risk: risk,
            target_accuracy: accuracy,
            excess_vs_oracle: risk - oracle_risk,
            weights: o.weights.clone(),
        });
    }
    Ok(SeedRun {
        seed,
        reports,
        outcomes,
        failures,
        model_risks,
        model_accuracies,
        oracle,
    })
}

/// Index of the first element that beats all others under `better`.
fn first_extreme(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if better(x, v[best]) {
            best = i;
        }
    }
    best
}

pub fn run_instance(cfg: &ExperimentConfig, instance: DomainAdaptationInstance) -> Result<SeedRun> {
    evaluate(cfg, &prepare(cfg, instance)?)
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    run_instance(cfg, generate_instance(cfg, seed)?)
}

/// Mean or median of one method over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub method: String,
    pub statistic: String,
    pub risk: f64,
    pub accuracy: Option<f64>,
    pub excess: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    /// Sorted by method (declaration order) then seed.
    pub rows: Vec<EvaluationReport>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: Vec<Failure>,
}

fn method_rank(name: &str) -> usize {
    Method::ALL
        .iter()
        .position(|m| m.name() == name)
        .unwrap_or(usize::MAX)
}

impl ResultTable {
    pub fn from_runs(runs: Vec<(u64, Result<SeedRun>)>) -> Self {
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (seed, run) in runs {
            match run {
                Ok(r) => {
                    rows.extend(r.reports);
                    failures.extend(r.failures);
                }
                Err(e) => {
                    log::warn!("seed {seed} failed: {e}");
                    failures.push(Failure {
                        method: None,
                        seed,
                        message: e.to_string(),
                    });
                }
            }
        }
        rows.sort_by(|a, b| {
            (method_rank(&a.method), a.seed).cmp(&(method_rank(&b.method), b.seed))
        });
        failures.sort_by(|a, b| (a.seed, &a.method).cmp(&(b.seed, &b.method)));
        let mut aggregates = Vec::new();
        let mut names: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
        names.dedup();
        for name in names {
            let sel: Vec<&EvaluationReport> = rows.iter().filter(|r| r.method == name).collect();
            let risks: Vec<f64> = sel.iter().map(|r| r.target_risk).collect();
            let excess: Vec<f64> = sel.iter().map(|r| r.excess_vs_oracle).collect();
            let accs: Option<Vec<f64>> = sel.iter().map(|r| r.target_accuracy).collect();
            for (stat, f) in [("mean", mean as fn(&[f64]) -> f64), ("median", median)] {
                aggregates.push(AggregateRow {
                    method: name.to_string(),
                    statistic: stat.to_string(),
                    risk: f(&risks),
                    accuracy: accs.as_deref().map(f),
                    excess: f(&excess),
                    count: sel.len(),
                });
            }
        }
        Self {
            rows,
            aggregates,
            failures,
        }
    }

    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &EvaluationReport> + '_ {
        self.rows.iter().filter(move |r| r.method == method.name())
    }

    pub fn aggregate(&self, method: Method, statistic: &str) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.method == method.name() && a.statistic == statistic)
    }

    pub fn is_classification(&self) -> bool {
        self.rows
            .first()
            .is_some_and(|r| r.target_accuracy.is_some())
    }

    /// CSV with columns `method,risk,accuracy,excess,seed`. Failed cells are
    /// left empty; aggregate rows carry `mean` or `median` in the seed
    /// column.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(EvaluationReport::CSV_HEADER)?;
        for r in &self.rows {
            w.write_record(r.csv_record())?;
        }
        for f in &self.failures {
            let m = f.method.clone().unwrap_or_else(|| "all".into());
            w.write_record([
                m,
                String::new(),
                String::new(),
                String::new(),
                f.seed.to_string(),
            ])?;
        }
        for a in &self.aggregates {
            w.write_record([
                a.method.clone(),
                a.risk.to_string(),
                a.accuracy.map(|v| v.to_string()).unwrap_or_default(),
                a.excess.to_string(),
                a.statistic.clone(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `results.csv` and `results.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        plot::write_file(&dir.join("results.csv"), &self.to_csv_string()?)?;
        plot::write_file(&dir.join("results.json"), &self.to_json_string()?)
    }
}

/// Computes the table without writing anything. Seeds run in parallel.
pub fn experiment_table(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let runs: Vec<(u64, Result<SeedRun>)> = cfg
        .seeds
        .par_iter()
        .map(|&s| (s, run_seed(cfg, s)))
        .collect();
    Ok(ResultTable::from_runs(runs))
}

/// Runs all seeds, writes `results.csv`, `results.json` and the plots to
/// `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let table = experiment_table(cfg)?;
    table.write(&cfg.out)?;
    emit_plots(&table, &cfg.out.join("plots"))?;
    Ok(table)
}

/// Median performance bar chart and the IWA weights of the first seed,
/// each with a companion CSV.
pub fn emit_plots(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(Error::InvalidArgument("cannot plot an empty table".into()));
    }
    let classification = table.is_classification();
    let (label, title) = if classification {
        ("median target accuracy", "Target accuracy by method")
    } else {
        ("median target risk", "Target risk by method")
    };
    let bars: Vec<(String, f64)> = table
        .aggregates
        .iter()
        .filter(|a| a.statistic == "median")
        .map(|a| {
            (
                a.method.clone(),
                if classification {
                    a.accuracy.unwrap_or(f64::NAN)
                } else {
                    a.risk
                },
            )
        })
        .collect();
    let mut written = Vec::new();
    let svg = dir.join("summary.svg");
    plot::write_file(&svg, &plot::bar_chart(title, label, &bars))?;
    let mut csv = String::from("method,median\n");
    for (m, v) in &bars {
        csv.push_str(&format!("{m},{v}\n"));
    }
    plot::write_file(&dir.join("summary.csv"), &csv)?;
    written.push(svg);

    if let Some(first) = table.rows_for(Method::Iwa).next() {
        let bars: Vec<(String, f64)> = scaled_weights(&first.weights)
            .into_iter()
            .enumerate()
            .map(|(i, w)| (format!("model {i}"), w))
            .collect();
        let svg = dir.join("weights.svg");
        let title = format!("Scaled IWA weights, seed {}", first.seed);
        plot::write_file(&svg, &plot::bar_chart(&title, "c_i / sum |c_j|", &bars))?;
        let mut csv = String::from("model,scaled_weight,raw_weight\n");
        for (i, ((_, s), raw)) in bars.iter().zip(&first.weights).enumerate() {
            csv.push_str(&format!("{i},{s},{raw}\n"));
        }
        plot::write_file(&dir.join("weights.csv"), &csv)?;
        written.push(svg);
    }
    Ok(written)
}
