//! Sensitivity to corrupted models, weight/performance correlation, and the
//! empirical convergence rate of the aggregation weights.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::pipeline::{
    evaluate, generate_instance, prepare, Failure, Prepared, ResultTable, SeedRun,
};
use super::plot::{self, Series};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{accuracy_from_predictions, median, pearson, quantile, risk_from_predictions};
use crate::models::{corrupt, predict_batch, SharedModel};
use crate::rng;

const SENSITIVITY_STREAM: u64 = 101;

/// A candidate is inaccurate when its target accuracy is below this fraction
/// of the source-only accuracy (for regression: its risk exceeds the
/// source-only risk divided by it).
pub const INACCURACY_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GateStats {
    /// Corrupted slots drawn.
    pub slots: usize,
    /// Slots whose first draw already passed the inaccuracy gate.
    pub first_draw_flagged: usize,
    pub redraws: usize,
    /// Slots that kept a model failing the gate after `max_redraws`.
    pub exhausted: usize,
}

impl GateStats {
    pub fn first_draw_rate(&self) -> f64 {
        if self.slots == 0 {
            1.0
        } else {
            self.first_draw_flagged as f64 / self.slots as f64
        }
    }

    fn add(&mut self, o: &GateStats) {
        self.slots += o.slots;
        self.first_draw_flagged += o.first_draw_flagged;
        self.redraws += o.redraws;
        self.exhausted += o.exhausted;
    }
}

/// Per-seed change in target performance between the first and last count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodDrop {
    pub method: String,
    /// Accuracy lost (classification) or risk gained (regression).
    pub per_seed: Vec<f64>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub counts: Vec<usize>,
    pub tables: Vec<ResultTable>,
    pub drops: Vec<MethodDrop>,
    pub gate: GateStats,
}

impl SensitivityReport {
    pub fn drop_of(&self, method: Method) -> Option<&MethodDrop> {
        self.drops.iter().find(|d| d.method == method.name())
    }

    pub fn table(&self, count: usize) -> Option<&ResultTable> {
        self.counts
            .iter()
            .position(|&c| c == count)
            .map(|i| &self.tables[i])
    }
}

/// Performance on the evaluation split where larger is better.
fn score(pred: &Matrix, y: &Matrix, labels: Option<&[usize]>) -> Result<f64> {
    match labels {
        Some(l) => accuracy_from_predictions(pred, l),
        None => Ok(-risk_from_predictions(pred, y)?.mean),
    }
}

fn is_inaccurate(candidate: f64, source_only: f64, classification: bool) -> bool {
    if classification {
        candidate < INACCURACY_FRACTION * source_only
    } else {
        -candidate > -source_only / INACCURACY_FRACTION
    }
}

/// Draws `total` corrupted models. Each slot picks a base uniformly from the
/// sequence and is redrawn until it fails the accuracy gate on the labeled
/// evaluation split, at most `max_redraws` times.
fn draw_corrupted(
    cfg: &ExperimentConfig,
    p: &Prepared,
    total: usize,
) -> Result<(Vec<SharedModel>, GateStats)> {
    let eval = &p.instance.target_eval;
    let labels = p.classes.map(|_| eval.class_labels());
    let so = score(
        &predict_batch(p.sequence.get(0).as_ref(), &eval.x)?,
        &eval.y,
        labels.as_deref(),
    )?;
    let mut rng = rng::seeded(rng::derive(p.instance.seed, SENSITIVITY_STREAM));
    let mut stats = GateStats::default();
    let mut models = Vec::with_capacity(total);
    for _ in 0..total {
        stats.slots += 1;
        let mut attempt = 0;
        loop {
            let base = p
                .sequence
                .get(rng.random_range(0..p.sequence.len()))
                .clone();
            let candidate: SharedModel = Arc::new(corrupt(base, rng.random()));
            let s = score(
                &predict_batch(candidate.as_ref(), &eval.x)?,
                &eval.y,
                labels.as_deref(),
            )?;
            let ok = is_inaccurate(s, so, labels.is_some());
            if ok && attempt == 0 {
                stats.first_draw_flagged += 1;
            }
            if ok || attempt >= cfg.max_redraws {
                if !ok {
                    stats.exhausted += 1;
                }
                models.push(candidate);
                break;
            }
            attempt += 1;
            stats.redraws += 1;
        }
    }
    Ok((models, stats))
}

fn sensitivity_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<SeedRun>, GateStats)> {
    let base = prepare(cfg, generate_instance(cfg, seed)?)?;
    let total = cfg.counts.iter().copied().max().unwrap_or(0);
    let (extra, stats) = draw_corrupted(cfg, &base, total)?;
    let mut runs = Vec::with_capacity(cfg.counts.len());
    for &count in &cfg.counts {
        let mut p = base.clone();
        for (i, m) in extra[..count].iter().enumerate() {
            p.sequence.push(m.clone(), format!("corrupted {i}"))?;
        }
        runs.push(evaluate(cfg, &p)?);
    }
    Ok((runs, stats))
}

/// Appends `count` corrupted models for every entry of `cfg.counts` and
/// reruns all methods. Smaller counts use a prefix of the models drawn for
/// the largest one.
pub fn sensitivity_report(cfg: &ExperimentConfig) -> Result<SensitivityReport> {
    cfg.validate()?;
    if cfg.counts.is_empty() {
        return Err(Error::config("counts", "at least one count is required"));
    }
    type SeedResult = Result<(Vec<SeedRun>, GateStats)>;
    let per_seed: Vec<(u64, SeedResult)> = cfg
        .seeds
        .par_iter()
        .map(|&s| (s, sensitivity_seed(cfg, s)))
        .collect();

    let mut gate = GateStats::default();
    let mut per_count: Vec<Vec<(u64, Result<SeedRun>)>> =
        (0..cfg.counts.len()).map(|_| Vec::new()).collect();
    for (seed, r) in per_seed {
        match r {
            Ok((runs, stats)) => {
                gate.add(&stats);
                for (k, run) in runs.into_iter().enumerate() {
                    per_count[k].push((seed, Ok(run)));
                }
            }
            Err(e) => {
                let msg = e.to_string();
                for slot in &mut per_count {
                    slot.push((seed, Err(Error::Numerical(msg.clone()))));
                }
            }
        }
    }
    let tables: Vec<ResultTable> = per_count.into_iter().map(ResultTable::from_runs).collect();
    let drops = method_drops(cfg, &tables);
    Ok(SensitivityReport {
        counts: cfg.counts.clone(),
        tables,
        drops,
        gate,
    })
}

fn performance_of(r: &crate::metrics::EvaluationReport) -> f64 {
    r.target_accuracy.unwrap_or(-r.target_risk)
}

fn method_drops(cfg: &ExperimentConfig, tables: &[ResultTable]) -> Vec<MethodDrop> {
    let (first, last) = (&tables[0], &tables[tables.len() - 1]);
    let mut drops = Vec::new();
    for method in cfg.effective_methods() {
        let per_seed: Vec<f64> = first
            .rows_for(method)
            .filter_map(|a| {
                last.rows_for(method)
                    .find(|b| b.seed == a.seed)
                    .map(|b| performance_of(a) - performance_of(b))
            })
            .collect();
        if per_seed.is_empty() {
            continue;
        }
        drops.push(MethodDrop {
            method: method.name().to_string(),
            median: median(&per_seed),
            per_seed,
        });
    }
    drops
}

/// Median and quartiles of performance per method and count.
pub fn sensitivity_series(report: &SensitivityReport) -> Vec<Series> {
    let mut names: Vec<String> = report.tables[0]
        .aggregates
        .iter()
        .map(|a| a.method.clone())
        .collect();
    names.dedup();
    names
        .into_iter()
        .map(|name| {
            let mut s = Series {
                name: name.clone(),
                median: Vec::new(),
                lower: Vec::new(),
                upper: Vec::new(),
            };
            for t in &report.tables {
                let v: Vec<f64> = t
                    .rows
                    .iter()
                    .filter(|r| r.method == name)
                    .map(performance_of)
                    .collect();
                let (lo, mid, hi) = if v.is_empty() {
                    (f64::NAN, f64::NAN, f64::NAN)
                } else {
                    (quantile(&v, 0.25), median(&v), quantile(&v, 0.75))
                };
                s.lower.push(lo);
                s.median.push(mid);
                s.upper.push(hi);
            }
            s
        })
        .collect()
}

impl SensitivityReport {
    /// Writes one table per count, `sensitivity.csv`, the drops, and the
    /// line chart.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        for (c, t) in self.counts.iter().zip(&self.tables) {
            t.write(&dir.join(format!("count_{c}")))?;
        }
        let series = sensitivity_series(self);
        let classification = self.tables[0].is_classification();
        let mut csv = String::from("method,count,median,q25,q75\n");
        for s in &series {
            for (i, c) in self.counts.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{c},{},{},{}\n",
                    s.name, s.median[i], s.lower[i], s.upper[i]
                ));
            }
        }
        plot::write_file(&dir.join("sensitivity.csv"), &csv)?;
        let mut drops = String::from("method,median_drop\n");
        for d in &self.drops {
            drops.push_str(&format!("{},{}\n", d.method, d.median));
        }
        plot::write_file(&dir.join("drops.csv"), &drops)?;
        plot::write_file(
            &dir.join("sensitivity.json"),
            &serde_json::to_string_pretty(self)?,
        )?;
        let xs: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        let y_label = if classification {
            "target accuracy"
        } else {
            "negative target risk"
        };
        let svg = dir.join("plots").join("sensitivity.svg");
        plot::write_file(
            &svg,
            &plot::line_chart(
                "Added inaccurate models",
                "added models",
                y_label,
                &xs,
                &series,
            ),
        )?;
        Ok(vec![svg])
    }

    /// Failures across all counts.
    pub fn failures(&self) -> impl Iterator<Item = &Failure> + '_ {
        self.tables.iter().flat_map(|t| &t.failures)
    }
}

/// Runs the sensitivity study and writes its artifacts to `cfg.out`.
pub fn run_sensitivity(cfg: &ExperimentConfig) -> Result<SensitivityReport> {
    let report = sensitivity_report(cfg)?;
    report.write(&cfg.out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub method: String,
    pub seed: u64,
    pub r: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub failures: Vec<Failure>,
}

impl CorrelationReport {
    pub fn values(&self, method: Method) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method.name())
            .map(|r| r.r)
            .collect()
    }

    pub fn median(&self, method: Method) -> Option<f64> {
        let v = self.values(method);
        (!v.is_empty()).then(|| median(&v))
    }

    /// `[min, q25, median, q75, max]` per method with at least one row.
    pub fn summary(&self) -> Vec<(String, [f64; 5])> {
        let mut out = Vec::new();
        for m in Method::ALL {
            let v = self.values(m);
            if !v.is_empty() {
                let q = |p| quantile(&v, p);
                out.push((
                    m.name().to_string(),
                    [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)],
                ));
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "seed", "r", "degenerate"])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.seed.to_string(),
                r.r.to_string(),
                r.degenerate.to_string(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Numerical(e.to_string()))?;
        plot::write_file(
            &dir.join("correlation.csv"),
            &String::from_utf8_lossy(&bytes),
        )?;
        let summary = self.summary();
        let mut csv = String::from("method,min,q25,median,q75,max\n");
        for (m, q) in &summary {
            csv.push_str(&format!(
                "{m},{},{},{},{},{}\n",
                q[0], q[1], q[2], q[3], q[4]
            ));
        }
        plot::write_file(&dir.join("plots").join("correlation.csv"), &csv)?;
        let svg = dir.join("plots").join("correlation.svg");
        plot::write_file(
            &svg,
            &plot::box_plot("Weights vs. target performance", "Pearson r", &summary),
        )?;
        Ok(vec![svg])
    }
}

/// Pearson r between each weighting method's coefficients and the target
/// performance of the individual models (accuracy, or negative risk for
/// regression), per seed.
pub fn correlation_report(cfg: &ExperimentConfig) -> Result<CorrelationReport> {
    let methods: Vec<Method> = cfg
        .methods
        .iter()
        .copied()
        .filter(|m| m.is_weighting())
        .collect();
    if methods.is_empty() {
        return Err(Error::config(
            "methods",
            "correlation needs at least one of iwa, sor, tmr, tcr",
        ));
    }
    let cfg = ExperimentConfig {
        methods: methods.clone(),
        ..cfg.clone()
    };
    cfg.validate()?;
    let runs: Vec<(u64, Result<SeedRun>)> = cfg
        .seeds
        .par_iter()
        .map(|&s| (s, super::pipeline::run_seed(&cfg, s)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (seed, run) in runs {
        let run = match run {
            Ok(r) => r,
            Err(e) => {
                failures.push(Failure {
                    method: None,
                    seed,
                    message: e.to_string(),
                });
                continue;
            }
        };
        failures.extend(run.failures.iter().cloned());
        let perf = run.model_performance();
        for &m in &methods {
            let Some(o) = run.outcome(m) else { continue };
            match pearson(&o.weights, &perf) {
                Ok(c) => rows.push(CorrelationRow {
                    method: m.name().to_string(),
                    seed,
                    r: c.r,
                    degenerate: c.degenerate,
                }),
                Err(e) => failures.push(Failure {
                    method: Some(m.name().to_string()),
                    seed,
                    message: e.to_string(),
                }),
            }
        }
    }
    rows.sort_by(|a, b| {
        let rank = |n: &str| Method::ALL.iter().position(|m| m.name() == n);
        (rank(&a.method), a.seed).cmp(&(rank(&b.method), b.seed))
    });
    Ok(CorrelationReport { rows, failures })
}

pub fn run_correlation(cfg: &ExperimentConfig) -> Result<CorrelationReport> {
    let report = correlation_report(cfg)?;
    report.write(&cfg.out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub sizes: Vec<usize>,
    /// `‖c̃ − c*‖` per size and seed.
    pub distances: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    /// Least-squares slope of log median against log size.
    pub slope: f64,
    pub strictly_decreasing: bool,
    pub failures: Vec<Failure>,
}

pub fn log_log_slope(sizes: &[usize], values: &[f64]) -> f64 {
    let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Distance between the IWA weights and the oracle weights fitted on the
/// labeled evaluation split, for `n = m` over `cfg.rate_sizes`.
pub fn rate_report(cfg: &ExperimentConfig) -> Result<RateReport> {
    if cfg.rate_sizes.len() < 2 {
        return Err(Error::config(
            "rate_sizes",
            "at least two sizes are required",
        ));
    }
    let mut distances = Vec::new();
    let mut failures = Vec::new();
    for &size in &cfg.rate_sizes {
        let c = ExperimentConfig {
            n: size,
            m: size,
            methods: vec![Method::Iwa],
            ..cfg.clone()
        };
        c.validate()?;
        let runs: Vec<(u64, Result<SeedRun>)> = c
            .seeds
            .par_iter()
            .map(|&s| (s, super::pipeline::run_seed(&c, s)))
            .collect();
        let mut d = Vec::new();
        for (seed, run) in runs {
            let dist = run.and_then(|r| {
                let iwa = r.outcome(Method::Iwa).ok_or_else(|| {
                    Error::Numerical(
                        r.failures
                            .first()
                            .map_or("iwa failed".into(), |f| f.message.clone()),
                    )
                })?;
                Ok(iwa
                    .weights
                    .iter()
                    .zip(&r.oracle.weights)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt())
            });
            match dist {
                Ok(v) => d.push(v),
                Err(e) => failures.push(Failure {
                    method: Some("iwa".into()),
                    seed,
                    message: format!("n = m = {size}: {e}"),
                }),
            }
        }
        if d.is_empty() {
            return Err(Error::Numerical(format!(
                "every seed failed at n = m = {size}"
            )));
        }
        distances.push(d);
    }
    let medians: Vec<f64> = distances.iter().map(|d| median(d)).collect();
    Ok(RateReport {
        slope: log_log_slope(&cfg.rate_sizes, &medians),
        strictly_decreasing: medians.windows(2).all(|w| w[1] < w[0]),
        sizes: cfg.rate_sizes.clone(),
        medians,
        distances,
        failures,
    })
}

impl RateReport {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut csv = String::from("size,median,q25,q75\n");
        let mut s = Series {
            name: "iwa".into(),
            median: self.medians.clone(),
            lower: Vec::new(),
            upper: Vec::new(),
        };
        for (i, d) in self.distances.iter().enumerate() {
            s.lower.push(quantile(d, 0.25));
            s.upper.push(quantile(d, 0.75));
            csv.push_str(&format!(
                "{},{},{},{}\n",
                self.sizes[i], self.medians[i], s.lower[i], s.upper[i]
            ));
        }
        plot::write_file(&dir.join("rate.csv"), &csv)?;
        plot::write_file(&dir.join("rate.json"), &serde_json::to_string_pretty(self)?)?;
        let xs: Vec<f64> = self.sizes.iter().map(|&v| v as f64).collect();
        let svg = dir.join("plots").join("rate.svg");
        let title = format!("Distance to oracle weights, slope {:.3}", self.slope);
        plot::write_file(
            &svg,
            &plot::line_chart(&title, "n = m", "||c - c*||", &xs, &[s]),
        )?;
        Ok(vec![svg])
    }
}

pub fn rate_check(cfg: &ExperimentConfig) -> Result<RateReport> {
    let report = rate_report(cfg)?;
    report.write(&cfg.out)?;
    Ok(report)
}
