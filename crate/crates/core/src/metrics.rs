//! Target risk, accuracy and the weight/accuracy correlation diagnostic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{argmax, predict_batch, Model};

/// Mean of per-sample losses with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_error: f64,
}

fn check_pred(pred: &Matrix, y: &Matrix) -> Result<()> {
    if pred.rows() != y.rows() || pred.cols() != y.cols() {
        return Err(Error::Dimension {
            context: "risk predictions",
            expected: y.rows() * y.cols(),
            found: pred.rows() * pred.cols(),
        });
    }
    if y.rows() == 0 {
        return Err(Error::InvalidArgument("empty evaluation sample".into()));
    }
    Ok(())
}

/// `‖ŷᵢ − yᵢ‖²` for every row.
pub fn squared_errors(pred: &Matrix, y: &Matrix) -> Result<Vec<f64>> {
    check_pred(pred, y)?;
    Ok(pred
        .iter_rows()
        .zip(y.iter_rows())
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect())
}

pub fn risk_from_predictions(pred: &Matrix, y: &Matrix) -> Result<RiskEstimate> {
    let e = squared_errors(pred, y)?;
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let std_error = if e.len() > 1 {
        (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(RiskEstimate { mean, std_error })
}

/// `(1/k) Σ ‖f(xᵢ) − yᵢ‖²`.
pub fn empirical_risk(model: &dyn Model, xs: &Matrix, ys: &Matrix) -> Result<f64> {
    Ok(risk_from_predictions(&predict_batch(model, xs)?, ys)?.mean)
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy_from_predictions(pred: &Matrix, labels: &[usize]) -> Result<f64> {
    if pred.rows() != labels.len() {
        return Err(Error::Dimension {
            context: "accuracy labels",
            expected: pred.rows(),
            found: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation sample".into()));
    }
    let hits = pred
        .iter_rows()
        .zip(labels)
        .filter(|(p, &l)| argmax(p) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn accuracy(model: &dyn Model, xs: &Matrix, labels: &[usize]) -> Result<f64> {
    accuracy_from_predictions(&predict_batch(model, xs)?, labels)
}

/// Pearson coefficient; `degenerate` marks a constant input, for which `r`
/// is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub degenerate: bool,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "pearson",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(
            "pearson needs at least two points".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    // Relative cut so that tiny rounding residue of a constant vector counts
    // as constant.
    let flat = |s: f64, m: f64| s <= (1e-12 * m.abs().max(1e-300)).powi(2) * n;
    if denom == 0.0 || flat(saa, ma) || flat(sbb, mb) {
        return Ok(Correlation {
            r: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        r: (sab / denom).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Median of a non-empty slice (mean of the two middle values for even
/// lengths).
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile of a non-empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// One evaluated method on one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub method: String,
    pub seed: u64,
    pub target_risk: f64,
    pub target_accuracy: Option<f64>,
    /// Target risk minus the target risk of the oracle aggregation.
    pub excess_vs_oracle: f64,
    pub weights: Vec<f64>,
}

impl EvaluationReport {
    pub const CSV_HEADER: [&'static str; 5] = ["method", "risk", "accuracy", "excess", "seed"];

    pub fn csv_record(&self) -> [String; 5] {
        [
            self.method.clone(),
            format!("{}", self.target_risk),
            self.target_accuracy
                .map(|a| format!("{a}"))
                .unwrap_or_default(),
            format!("{}", self.excess_vs_oracle),
            self.seed.to_string(),
        ]
    }
}
