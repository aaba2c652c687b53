//! Model selection by importance weighted validation (IWV) and deep
//! embedded validation (DEV). Both score every model of the sequence on
//! weighted source data and pick the lowest score.

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledSample;
use crate::density_ratio::{normalized_weights, DensityRatio};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{argmax, ModelSequence};

/// Weight variance below which DEV falls back to the IWV score.
pub const DEV_MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `‖f(x) − y‖²`.
    #[default]
    Squared,
    /// `1[argmax f(x) ≠ argmax y]`.
    ZeroOne,
}

impl Loss {
    pub fn eval(self, prediction: &[f64], label: &[f64]) -> f64 {
        match self {
            Loss::Squared => prediction
                .iter()
                .zip(label)
                .map(|(p, y)| (p - y) * (p - y))
                .sum(),
            Loss::ZeroOne => f64::from(u8::from(argmax(prediction) != argmax(label))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub method: String,
    pub chosen_index: usize,
    /// Lower is better.
    pub scores: Vec<f64>,
}

impl SelectionResult {
    fn from_scores(method: &str, scores: Vec<f64>) -> Self {
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s < scores[best] {
                best = i;
            }
        }
        Self {
            method: method.to_string(),
            chosen_index: best,
            scores,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Per-sample losses of each model: `losses[i][k] = loss(fᵢ(xₖ), yₖ)`.
pub fn loss_table(outputs: &[Matrix], y: &Matrix, loss: Loss) -> Result<Vec<Vec<f64>>> {
    outputs
        .iter()
        .map(|o| {
            if o.rows() != y.rows() {
                return Err(Error::Dimension {
                    context: "loss table",
                    expected: y.rows(),
                    found: o.rows(),
                });
            }
            Ok(o.iter_rows()
                .zip(y.iter_rows())
                .map(|(p, t)| loss.eval(p, t))
                .collect())
        })
        .collect()
}

fn weighted_mean(w: &[f64], l: &[f64]) -> f64 {
    w.iter().zip(l).map(|(a, b)| a * b).sum::<f64>() / w.len() as f64
}

/// `(1/n) Σₖ wₖ lₖ`.
pub fn iwv_score(w: &[f64], l: &[f64]) -> f64 {
    weighted_mean(w, l)
}

/// Control-variate corrected weighted risk:
/// `mean(w·l) + η mean(w) − η` with `η = −Cov(w·l, w) / Var(w)`, using the
/// `1/n` normalizer. Falls back to [`iwv_score`] when `Var(w) < 1e-12`.
pub fn dev_score(w: &[f64], l: &[f64]) -> f64 {
    let n = w.len() as f64;
    let mean_w = w.iter().sum::<f64>() / n;
    let var_w = w.iter().map(|v| (v - mean_w).powi(2)).sum::<f64>() / n;
    let mean_wl = weighted_mean(w, l);
    if var_w < DEV_MIN_VARIANCE {
        return mean_wl;
    }
    let cov = w
        .iter()
        .zip(l)
        .map(|(wi, li)| (wi * li - mean_wl) * (wi - mean_w))
        .sum::<f64>()
        / n;
    let eta = -cov / var_w;
    mean_wl + eta * mean_w - eta
}

fn prepare(
    models: &ModelSequence,
    source: &LabeledSample,
    beta: &dyn DensityRatio,
    loss: Loss,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if source.is_empty() {
        return Err(Error::InvalidArgument("empty source sample".into()));
    }
    let w = normalized_weights(beta, &source.x)?.weights;
    let losses = loss_table(&models.outputs(&source.x)?, &source.y, loss)?;
    Ok((w, losses))
}

/// Importance weighted validation.
pub fn iwv_select(
    models: &ModelSequence,
    source: &LabeledSample,
    beta: &dyn DensityRatio,
    loss: Loss,
) -> Result<SelectionResult> {
    let (w, losses) = prepare(models, source, beta, loss)?;
    Ok(iwv_from_losses(&w, &losses))
}

pub fn iwv_from_losses(w: &[f64], losses: &[Vec<f64>]) -> SelectionResult {
    SelectionResult::from_scores("iwv", losses.iter().map(|l| iwv_score(w, l)).collect())
}

/// Deep embedded validation.
pub fn dev_select(
    models: &ModelSequence,
    source: &LabeledSample,
    beta: &dyn DensityRatio,
    loss: Loss,
) -> Result<SelectionResult> {
    if source.len() < 2 {
        return Err(Error::InvalidArgument(
            "DEV needs at least two source samples".into(),
        ));
    }
    let (w, losses) = prepare(models, source, beta, loss)?;
    Ok(dev_from_losses(&w, &losses))
}

pub fn dev_from_losses(w: &[f64], losses: &[Vec<f64>]) -> SelectionResult {
    SelectionResult::from_scores("dev", losses.iter().map(|l| dev_score(w, l)).collect())
}

/// One-hot coefficient vector of the selected model.
pub fn select_as_aggregation(sel: &SelectionResult, l: usize) -> Result<Vec<f64>> {
    if sel.chosen_index >= l {
        return Err(Error::InvalidArgument(format!(
            "selected index {} out of range for {l} models",
            sel.chosen_index
        )));
    }
    let mut c = vec![0.0; l];
    c[sel.chosen_index] = 1.0;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::AggregatedModel;
    use crate::density_ratio::{FnRatio, UnitRatio};
    use crate::models::{FnModel, Model, SharedModel};
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::sync::Arc;

    fn table(rows: Vec<f64>) -> SharedModel {
        Arc::new(FnModel::new(1, 1, move |x: &[f64]| {
            vec![rows[x[0] as usize]]
        }))
    }

    fn idx(k: usize) -> Matrix {
        Matrix::column(&(0..k).map(|i| i as f64).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn iwv_picks_lower_loss() {
        let y = Matrix::column(&[0.0, 0.0]).unwrap();
        // Squared losses per model: 0.5 and 0.2 on average.
        let a = table(vec![0.5f64.sqrt(), 0.5f64.sqrt()]);
        let b = table(vec![0.2f64.sqrt(), 0.2f64.sqrt()]);
        let s = ModelSequence::new(vec![a, b]).unwrap();
        let src = LabeledSample::new(idx(2), y).unwrap();
        let r = iwv_select(&s, &src, &UnitRatio, Loss::Squared).unwrap();
        assert_eq!(r.chosen_index, 1);
        assert_abs_diff_eq!(r.scores[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.scores[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn iwv_zero_loss_model_is_chosen() {
        let ys = vec![0.3, -1.0, 2.0];
        let s = ModelSequence::new(vec![
            table(vec![0.0; 3]),
            table(ys.clone()),
            table(vec![1.0; 3]),
        ])
        .unwrap();
        let src = LabeledSample::new(idx(3), Matrix::column(&ys).unwrap()).unwrap();
        let r = iwv_select(&s, &src, &UnitRatio, Loss::Squared).unwrap();
        assert_eq!(r.chosen_index, 1);
        assert_eq!(r.scores[1], 0.0);
    }

    #[test]
    fn iwv_matches_weighted_sum() {
        let y = Matrix::column(&[1.0, 0.0, -1.0, 2.0]).unwrap();
        let preds = [
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0],
            [1.0, 0.5, -1.0, 0.0],
        ];
        let s = ModelSequence::new(preds.iter().map(|p| table(p.to_vec())).collect()).unwrap();
        let beta_vals = [1.0, 2.0, 1.0, 0.0];
        let beta = FnRatio::new(10.0, move |x: &[f64]| beta_vals[x[0] as usize]);
        let src = LabeledSample::new(idx(4), y.clone()).unwrap();
        let r = iwv_select(&s, &src, &beta, Loss::Squared).unwrap();
        for (i, p) in preds.iter().enumerate() {
            let direct: f64 = (0..4)
                .map(|k| beta_vals[k] * (p[k] - y[(k, 0)]).powi(2))
                .sum::<f64>()
                / 4.0;
            assert_abs_diff_eq!(r.scores[i], direct, epsilon = 1e-15);
        }
    }

    #[test]
    fn dev_falls_back_to_iwv_bitwise() {
        let mut r = rng::seeded(3);
        let l: Vec<f64> = (0..30).map(|_| r.random::<f64>()).collect();
        for c in [1.0, 2.5] {
            let w = vec![c; 30];
            assert_eq!(dev_score(&w, &l).to_bits(), iwv_score(&w, &l).to_bits());
            let mean_l = l.iter().sum::<f64>() / 30.0;
            assert_abs_diff_eq!(dev_score(&w, &l), c * mean_l, epsilon = 1e-12);
        }
    }

    #[test]
    fn dev_matches_covariance_oracle() {
        let mut r = rng::seeded(11);
        let w: Vec<f64> = (0..50).map(|_| r.random_range(0.0..3.0)).collect();
        for _ in 0..2 {
            let l: Vec<f64> = (0..50).map(|_| r.random_range(0.0..1.0)).collect();
            // Textbook formulas written independently: raw moments.
            let n = 50.0;
            let wl: Vec<f64> = w.iter().zip(&l).map(|(a, b)| a * b).collect();
            let e_w = w.iter().sum::<f64>() / n;
            let e_wl = wl.iter().sum::<f64>() / n;
            let e_wl_w = wl.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / n;
            let e_w2 = w.iter().map(|a| a * a).sum::<f64>() / n;
            let cov = e_wl_w - e_wl * e_w;
            let var = e_w2 - e_w * e_w;
            let eta = -cov / var;
            let expected = e_wl + eta * e_w - eta;
            assert_abs_diff_eq!(dev_score(&w, &l), expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn dev_requires_two_samples() {
        let s = ModelSequence::new(vec![table(vec![0.0])]).unwrap();
        let src = LabeledSample::new(idx(1), Matrix::column(&[0.0]).unwrap()).unwrap();
        assert!(dev_select(&s, &src, &UnitRatio, Loss::Squared).is_err());
    }

    #[test]
    fn zero_one_loss() {
        assert_eq!(Loss::ZeroOne.eval(&[0.2, 0.8], &[0.0, 1.0]), 0.0);
        assert_eq!(Loss::ZeroOne.eval(&[0.6, 0.4], &[0.0, 1.0]), 1.0);
        assert_abs_diff_eq!(
            Loss::Squared.eval(&[0.6, 0.4], &[0.0, 1.0]),
            0.72,
            epsilon = 1e-15
        );
    }

    #[test]
    fn one_hot_aggregation() {
        let sel = SelectionResult::from_scores("iwv", vec![3.0, 2.0, 1.0, 4.0]);
        assert_eq!(
            select_as_aggregation(&sel, 4).unwrap(),
            vec![0.0, 0.0, 1.0, 0.0]
        );
        let sel = SelectionResult::from_scores("iwv", vec![1.0]);
        assert_eq!(select_as_aggregation(&sel, 1).unwrap(), vec![1.0]);
        assert!(select_as_aggregation(&sel, 0).is_err());
    }

    #[test]
    fn ties_pick_lowest_index() {
        let sel = SelectionResult::from_scores("dev", vec![2.0, 1.0, 1.0]);
        assert_eq!(sel.chosen_index, 1);
    }

    #[test]
    fn one_hot_aggregation_predicts_like_chosen_model() {
        let models: Vec<SharedModel> = vec![
            Arc::new(FnModel::new(1, 2, |x: &[f64]| vec![x[0], 1.0])),
            Arc::new(FnModel::new(1, 2, |x: &[f64]| vec![x[0].cos(), x[0] * 3.0])),
            Arc::new(FnModel::new(1, 2, |x: &[f64]| vec![-x[0], 0.5])),
        ];
        let s = ModelSequence::new(models).unwrap();
        let sel = SelectionResult::from_scores("iwv", vec![1.0, 0.0, 2.0]);
        let agg = AggregatedModel::new(s.clone(), select_as_aggregation(&sel, 3).unwrap()).unwrap();
        let mut r = rng::seeded(8);
        for _ in 0..100 {
            let x = [r.random_range(-5.0..5.0)];
            assert_eq!(agg.predict(&x), s.get(1).predict(&x));
        }
    }

    #[test]
    fn json_shape() {
        let sel = SelectionResult::from_scores("iwv", vec![0.5, 0.25]);
        let v: serde_json::Value = serde_json::from_str(&sel.to_json().unwrap()).unwrap();
        assert_eq!(v["method"], "iwv");
        assert_eq!(v["chosen_index"], 1);
        assert_eq!(v["scores"][1], 0.25);
    }
}
