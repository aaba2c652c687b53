//! Linear aggregation `f = Σᵢ cᵢ fᵢ` of a model sequence.
//!
//! [`iwa`] estimates the coefficients that minimize the target risk from
//! labeled source data and unlabeled target inputs: the Gram matrix of model
//! outputs is averaged over target inputs, the moment vector
//! `g̃ᵢ = (1/n) Σₖ β(xₖ) ⟨yₖ, fᵢ(xₖ)⟩` over importance-weighted source
//! samples, and `c̃ = G̃⁺ g̃` is solved with the rcond pseudo-inverse.
//!
//! The remaining functions are the reference and baseline aggregations that
//! reuse the same least-squares core: [`oracle_weights`] (labeled target
//! data, evaluation only), [`sor`] (source-only regression), and the
//! pseudo-labeling regressions [`tmr`] and [`tcr`]. [`tmv`] is plain
//! majority voting and has no weights.

use serde::Serialize;

use crate::datasets::LabeledSample;
use crate::density_ratio::{normalized_weights, DensityRatio};
use crate::error::{Error, Result};
use crate::linalg::{dot, pinv_rcond, Matrix};
use crate::models::{argmax, predict_batch, Model, ModelSequence};

/// Coefficients of a least-squares aggregation and the system they solve.
#[derive(Debug, Clone)]
pub struct AggregationResult {
    pub method: String,
    pub weights: Vec<f64>,
    pub gram: Matrix,
    pub moment: Vec<f64>,
    /// `λ_max / λ_min` over the eigenvalues kept by the pseudo-inverse.
    pub gram_condition: f64,
    pub rank_retained: usize,
}

/// JSON form `{method, weights, gram_condition, rank_retained}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationSummary {
    pub method: String,
    pub weights: Vec<f64>,
    pub gram_condition: Option<f64>,
    pub rank_retained: usize,
}

impl AggregationResult {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// True when the pseudo-inverse dropped at least one direction.
    pub fn is_truncated(&self) -> bool {
        self.rank_retained < self.weights.len()
    }

    pub fn summary(&self) -> AggregationSummary {
        AggregationSummary {
            method: self.method.clone(),
            weights: self.weights.clone(),
            gram_condition: self
                .gram_condition
                .is_finite()
                .then_some(self.gram_condition),
            rank_retained: self.rank_retained,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.summary())?)
    }
}

/// `cᵢ / Σⱼ |cⱼ|`, for display only.
pub fn scaled_weights(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().map(|w| w.abs()).sum();
    if total == 0.0 {
        return weights.to_vec();
    }
    weights.iter().map(|w| w / total).collect()
}

/// `Σᵢ cᵢ fᵢ` as a [`Model`].
#[derive(Clone)]
pub struct AggregatedModel {
    models: ModelSequence,
    weights: Vec<f64>,
}

impl AggregatedModel {
    pub fn new(models: ModelSequence, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != models.len() {
            return Err(Error::Dimension {
                context: "aggregation weights",
                expected: models.len(),
                found: weights.len(),
            });
        }
        Ok(Self { models, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn models(&self) -> &ModelSequence {
        &self.models
    }
}

impl Model for AggregatedModel {
    fn input_dim(&self) -> usize {
        self.models.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.models.output_dim()
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.try_predict(x).expect("model in aggregation failed")
    }

    fn try_predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        for (m, &c) in self.models.iter().zip(&self.weights) {
            for (o, v) in out.iter_mut().zip(m.try_predict(x)?) {
                *o += c * v;
            }
        }
        Ok(out)
    }
}

/// Combines precomputed per-model outputs (`k × d₂` each) with `weights`.
pub fn combine_outputs(outputs: &[Matrix], weights: &[f64]) -> Result<Matrix> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no model outputs".into()))?;
    if weights.len() != outputs.len() {
        return Err(Error::Dimension {
            context: "combine_outputs",
            expected: outputs.len(),
            found: weights.len(),
        });
    }
    let mut acc = vec![0.0; first.rows() * first.cols()];
    for (o, &c) in outputs.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(o.as_slice()) {
            *a += c * v;
        }
    }
    Ok(Matrix::from_raw(first.rows(), first.cols(), acc))
}

fn check_outputs(outputs: &[Matrix], context: &'static str) -> Result<(usize, usize)> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::InvalidArgument(format!("{context}: empty model sequence")))?;
    let (k, d2) = (first.rows(), first.cols());
    for o in outputs {
        if o.rows() != k || o.cols() != d2 {
            return Err(Error::Dimension {
                context,
                expected: k * d2,
                found: o.rows() * o.cols(),
            });
        }
    }
    if k == 0 {
        return Err(Error::InvalidArgument(format!("{context}: empty sample")));
    }
    Ok((k, d2))
}

/// `Gᵢⱼ = (1/k) Σₖ ⟨fᵢ(xₖ), fⱼ(xₖ)⟩` from per-model output matrices.
/// The upper triangle is computed and mirrored, so the result is exactly
/// symmetric.
pub fn gram_from_outputs(outputs: &[Matrix]) -> Result<Matrix> {
    let (k, _) = check_outputs(outputs, "gram")?;
    let l = outputs.len();
    let mut g = Matrix::zeros(l, l);
    for i in 0..l {
        for j in i..l {
            let s = dot(outputs[i].as_slice(), outputs[j].as_slice()) / k as f64;
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    Ok(g)
}

/// `gᵢ = (1/k) Σₖ wₖ ⟨yₖ, fᵢ(xₖ)⟩`.
pub fn moment_from_outputs(
    outputs: &[Matrix],
    y: &Matrix,
    sample_weights: &[f64],
) -> Result<Vec<f64>> {
    let (k, d2) = check_outputs(outputs, "moment")?;
    if y.rows() != k || y.cols() != d2 {
        return Err(Error::Dimension {
            context: "moment labels",
            expected: k,
            found: y.rows(),
        });
    }
    if sample_weights.len() != k {
        return Err(Error::Dimension {
            context: "moment weights",
            expected: k,
            found: sample_weights.len(),
        });
    }
    Ok(outputs
        .iter()
        .map(|o| {
            let s: f64 = (0..k)
                .map(|r| sample_weights[r] * dot(y.row(r), o.row(r)))
                .sum();
            s / k as f64
        })
        .collect())
}

/// Solves `gram · c = moment` with the rcond pseudo-inverse.
pub fn solve_aggregation(
    method: &str,
    gram: Matrix,
    moment: Vec<f64>,
    rcond: f64,
) -> Result<AggregationResult> {
    let pinv = pinv_rcond(&gram, rcond)?;
    if pinv.is_degenerate() {
        return Err(Error::DegenerateGram { rcond });
    }
    let weights = pinv.matrix.matvec(&moment)?;
    if pinv.rank < weights.len() {
        log::info!(
            "{method}: rcond={rcond} kept {} of {} directions (near-collinear models)",
            pinv.rank,
            weights.len()
        );
    }
    Ok(AggregationResult {
        method: method.to_string(),
        weights,
        gram,
        moment,
        gram_condition: pinv.condition,
        rank_retained: pinv.rank,
    })
}

/// Importance weighted least squares aggregation from precomputed outputs.
///
/// `source_outputs[i]` holds model `i` on the source inputs,
/// `target_outputs[i]` on the target inputs, and `beta` the ratio values on
/// the source inputs.
pub fn iwa_from_outputs(
    source_outputs: &[Matrix],
    source_y: &Matrix,
    beta: &[f64],
    target_outputs: &[Matrix],
    rcond: f64,
) -> Result<AggregationResult> {
    if source_outputs.len() != target_outputs.len() {
        return Err(Error::Dimension {
            context: "iwa model count",
            expected: source_outputs.len(),
            found: target_outputs.len(),
        });
    }
    let gram = gram_from_outputs(target_outputs)?;
    let moment = moment_from_outputs(source_outputs, source_y, beta)?;
    solve_aggregation("iwa", gram, moment, rcond)
}

pub fn empirical_gram(models: &ModelSequence, target_x: &Matrix) -> Result<Matrix> {
    if target_x.rows() == 0 {
        return Err(Error::InvalidArgument("empty target sample".into()));
    }
    gram_from_outputs(&models.outputs(target_x)?)
}

pub fn empirical_moment(
    models: &ModelSequence,
    source_x: &Matrix,
    source_y: &Matrix,
    beta: &dyn DensityRatio,
) -> Result<Vec<f64>> {
    if source_x.rows() != source_y.rows() {
        return Err(Error::Dimension {
            context: "source rows",
            expected: source_x.rows(),
            found: source_y.rows(),
        });
    }
    let w = normalized_weights(beta, source_x)?;
    moment_from_outputs(&models.outputs(source_x)?, source_y, &w.weights)
}

/// Importance weighted least squares linear aggregation.
pub fn iwa(
    models: &ModelSequence,
    source: &LabeledSample,
    target_x: &Matrix,
    beta: &dyn DensityRatio,
    rcond: f64,
) -> Result<AggregationResult> {
    let gram = empirical_gram(models, target_x)?;
    let moment = empirical_moment(models, &source.x, &source.y, beta)?;
    solve_aggregation("iwa", gram, moment, rcond)
}

/// Unweighted least squares of `y` onto the model outputs at `x`.
fn ols(
    method: &str,
    models: &ModelSequence,
    x: &Matrix,
    y: &Matrix,
    rcond: f64,
) -> Result<AggregationResult> {
    if x.rows() != y.rows() {
        return Err(Error::Dimension {
            context: "least squares rows",
            expected: x.rows(),
            found: y.rows(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::InvalidArgument(format!("{method}: empty sample")));
    }
    let outputs = models.outputs(x)?;
    ols_from_outputs(method, &outputs, y, rcond)
}

/// Unweighted least squares on precomputed outputs. Uses the same Gram and
/// moment routines as [`iwa_from_outputs`] with unit sample weights.
pub fn ols_from_outputs(
    method: &str,
    outputs: &[Matrix],
    y: &Matrix,
    rcond: f64,
) -> Result<AggregationResult> {
    let gram = gram_from_outputs(outputs)?;
    let ones = vec![1.0; y.rows()];
    let moment = moment_from_outputs(outputs, y, &ones)?;
    solve_aggregation(method, gram, moment, rcond)
}

/// Least-squares aggregation fitted on labeled target data. Needs target
/// labels, so it is an evaluation reference and never a method.
pub fn oracle_weights(
    models: &ModelSequence,
    target: &LabeledSample,
    rcond: f64,
) -> Result<AggregationResult> {
    ols("oracle", models, &target.x, &target.y, rcond)
}

/// Source-only regression: least squares of source labels onto the model
/// outputs at the source inputs.
pub fn sor(
    models: &ModelSequence,
    source: &LabeledSample,
    rcond: f64,
) -> Result<AggregationResult> {
    ols("sor", models, &source.x, &source.y, rcond)
}

/// Majority vote over per-model argmax predictions, from outputs at a
/// single input. Ties go to the lowest class index.
pub fn vote(predictions: &[Vec<f64>]) -> usize {
    let classes = predictions.first().map_or(0, Vec::len);
    let mut counts = vec![0usize; classes];
    for p in predictions {
        counts[argmax(p)] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Target majority voting: the class predicted by the most models at `x`.
pub fn tmv(models: &ModelSequence, x: &[f64]) -> Result<usize> {
    let preds = models
        .iter()
        .map(|m| m.try_predict(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(vote(&preds))
}

/// Majority-vote labels for every row, from per-model output matrices.
pub fn tmv_from_outputs(outputs: &[Matrix]) -> Result<Vec<usize>> {
    let (k, _) = check_outputs(outputs, "tmv")?;
    Ok((0..k)
        .map(|r| {
            let preds: Vec<Vec<f64>> = outputs.iter().map(|o| o.row(r).to_vec()).collect();
            vote(&preds)
        })
        .collect())
}

/// Argmax of the model-averaged output for every row.
pub fn confidence_labels_from_outputs(outputs: &[Matrix]) -> Result<Vec<usize>> {
    let (k, d2) = check_outputs(outputs, "tcr")?;
    Ok((0..k)
        .map(|r| {
            let mut mean = vec![0.0; d2];
            for o in outputs {
                for (m, v) in mean.iter_mut().zip(o.row(r)) {
                    *m += v;
                }
            }
            let l = outputs.len() as f64;
            mean.iter_mut().for_each(|m| *m /= l);
            argmax(&mean)
        })
        .collect())
}

pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut y = Matrix::zeros(labels.len(), classes);
    for (i, &c) in labels.iter().enumerate() {
        y[(i, c)] = 1.0;
    }
    y
}

/// Target majority voting regression: least squares onto one-hot
/// majority-vote pseudo-labels at the target inputs.
pub fn tmr(models: &ModelSequence, target_x: &Matrix, rcond: f64) -> Result<AggregationResult> {
    let outputs = models.outputs(target_x)?;
    tmr_from_outputs(&outputs, rcond)
}

pub fn tmr_from_outputs(outputs: &[Matrix], rcond: f64) -> Result<AggregationResult> {
    let labels = tmv_from_outputs(outputs)?;
    ols_from_outputs("tmr", outputs, &one_hot(&labels, outputs[0].cols()), rcond)
}

/// Target confidence average regression: least squares onto one-hot
/// pseudo-labels from the argmax of the averaged class probabilities.
pub fn tcr(models: &ModelSequence, target_x: &Matrix, rcond: f64) -> Result<AggregationResult> {
    let outputs = models.outputs(target_x)?;
    tcr_from_outputs(&outputs, rcond)
}

pub fn tcr_from_outputs(outputs: &[Matrix], rcond: f64) -> Result<AggregationResult> {
    let labels = confidence_labels_from_outputs(outputs)?;
    ols_from_outputs("tcr", outputs, &one_hot(&labels, outputs[0].cols()), rcond)
}

/// Aggregated predictions `Σᵢ cᵢ fᵢ(x)` for every row of `xs`.
pub fn predict_aggregated(models: &ModelSequence, weights: &[f64], xs: &Matrix) -> Result<Matrix> {
    let agg = AggregatedModel::new(models.clone(), weights.to_vec())?;
    predict_batch(&agg, xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_ratio::{FnRatio, UnitRatio};
    use crate::linalg::DEFAULT_RCOND;
    use crate::models::{ConstantModel, FnModel, SharedModel};
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    fn seq(models: Vec<SharedModel>) -> ModelSequence {
        ModelSequence::new(models).unwrap()
    }

    fn constant(y: &[f64]) -> SharedModel {
        Arc::new(ConstantModel::new(1, y.to_vec()))
    }

    /// Model that returns row `x[0]` of a fixed table.
    fn table(rows: Vec<Vec<f64>>) -> SharedModel {
        let d2 = rows[0].len();
        Arc::new(FnModel::new(1, d2, move |x: &[f64]| {
            rows[x[0] as usize].clone()
        }))
    }

    fn idx(k: usize) -> Matrix {
        Matrix::column(&(0..k).map(|i| i as f64).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn gram_orthonormal_constants() {
        let s = seq(vec![constant(&[1.0, 0.0]), constant(&[0.0, 1.0])]);
        for m in [1, 5] {
            assert_eq!(
                empirical_gram(&s, &Matrix::zeros(m, 1)).unwrap(),
                Matrix::identity(2)
            );
        }
    }

    #[test]
    fn gram_direct_summation() {
        let s = seq(vec![
            table(vec![vec![1.0, 2.0], vec![3.0, 0.0]]),
            table(vec![vec![0.0, 1.0], vec![1.0, 1.0]]),
        ]);
        let g = empirical_gram(&s, &idx(2)).unwrap();
        // Direct oracle: G₁₁ = (1+4 + 9)/2, G₁₂ = (2 + 3)/2, G₂₂ = (1 + 2)/2.
        let expected = Matrix::from_rows(&[[7.0, 2.5], [2.5, 1.5]]).unwrap();
        assert_eq!(g, expected);
    }

    #[test]
    fn gram_single_unit_model() {
        let s = seq(vec![constant(&[0.0, 1.0, 0.0])]);
        assert_eq!(
            empirical_gram(&s, &Matrix::zeros(3, 1)).unwrap(),
            Matrix::identity(1)
        );
    }

    #[test]
    fn gram_empty_target_errors() {
        let s = seq(vec![constant(&[1.0])]);
        assert!(matches!(
            empirical_gram(&s, &Matrix::zeros(0, 1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn moment_perfect_model() {
        let ys = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]];
        let s = seq(vec![table(ys.clone())]);
        let g =
            empirical_moment(&s, &idx(3), &Matrix::from_rows(&ys).unwrap(), &UnitRatio).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn moment_weighted_summation() {
        let ys = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = seq(vec![table(ys.clone())]);
        let beta = FnRatio::new(10.0, |x: &[f64]| if x[0] == 0.0 { 1.0 } else { 2.0 });
        let g = empirical_moment(&s, &idx(2), &Matrix::from_rows(&ys).unwrap(), &beta).unwrap();
        assert_eq!(g, vec![1.5]);
    }

    #[test]
    fn moment_zero_ratio_and_mismatch() {
        let s = seq(vec![constant(&[1.0]), constant(&[2.0])]);
        let zero = FnRatio::new(1.0, |_: &[f64]| 0.0);
        let y = Matrix::column(&[1.0, 2.0]).unwrap();
        assert_eq!(
            empirical_moment(&s, &idx(2), &y, &zero).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(matches!(
            empirical_moment(&s, &idx(3), &y, &zero),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn iwa_single_perfect_model() {
        let ys = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = seq(vec![table(ys.clone())]);
        let src = LabeledSample::new(idx(2), Matrix::from_rows(&ys).unwrap()).unwrap();
        let r = iwa(&s, &src, &idx(2), &UnitRatio, DEFAULT_RCOND).unwrap();
        assert_eq!(r.weights, vec![1.0]);
        assert_eq!(r.rank_retained, 1);
    }

    #[test]
    fn iwa_duplicate_models_split_weight() {
        let f = table(vec![vec![1.0, 0.5], vec![0.2, 0.9], vec![-0.4, 0.3]]);
        let s = seq(vec![f.clone(), f]);
        let y = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        let src = LabeledSample::new(idx(3), y).unwrap();
        let r = iwa(&s, &src, &idx(3), &UnitRatio, DEFAULT_RCOND).unwrap();
        assert_eq!(r.rank_retained, 1);
        assert!(r.is_truncated());
        assert_abs_diff_eq!(r.weights[0], r.weights[1], epsilon = 1e-12);
        // Eigen-oracle: G = a·11ᵀ, g = b·1 ⇒ c = b/(2a)·1.
        let a = r.gram[(0, 0)];
        let b = r.moment[0];
        assert_abs_diff_eq!(r.weights[0], b / (2.0 * a), epsilon = 1e-12);
    }

    #[test]
    fn iwa_degenerate_gram_errors() {
        let s = seq(vec![constant(&[0.0])]);
        let src = LabeledSample::new(idx(1), Matrix::column(&[1.0]).unwrap()).unwrap();
        assert!(matches!(
            iwa(&s, &src, &idx(1), &UnitRatio, DEFAULT_RCOND),
            Err(Error::DegenerateGram { .. })
        ));
    }

    #[test]
    fn oracle_recovers_affine_combination() {
        let s = seq(vec![
            Arc::new(FnModel::new(1, 1, |x: &[f64]| vec![x[0]])),
            Arc::new(FnModel::new(1, 1, |_: &[f64]| vec![1.0])),
        ]);
        let xs: Vec<f64> = vec![-1.0, 0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 2.0).collect();
        let t =
            LabeledSample::new(Matrix::column(&xs).unwrap(), Matrix::column(&ys).unwrap()).unwrap();
        let r = oracle_weights(&s, &t, 1e-10).unwrap();
        assert_abs_diff_eq!(r.weights[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.weights[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn oracle_orthogonal_labels_give_zero() {
        let s = seq(vec![constant(&[1.0, 0.0])]);
        let t = LabeledSample::new(
            idx(3),
            Matrix::from_rows(&[[0.0, 1.0], [0.0, 2.0], [0.0, -1.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(
            oracle_weights(&s, &t, DEFAULT_RCOND).unwrap().weights,
            vec![0.0]
        );
    }

    #[test]
    fn sor_equals_iwa_without_shift() {
        let s = seq(vec![
            Arc::new(FnModel::new(1, 1, |x: &[f64]| vec![x[0].sin()])),
            Arc::new(FnModel::new(1, 1, |x: &[f64]| vec![x[0] * x[0]])),
        ]);
        let xs = Matrix::column(&[0.1, 0.7, 1.3, 2.2]).unwrap();
        let src =
            LabeledSample::new(xs.clone(), Matrix::column(&[0.3, 0.1, 1.0, 2.0]).unwrap()).unwrap();
        let a = iwa(&s, &src, &xs, &UnitRatio, DEFAULT_RCOND).unwrap();
        let b = sor(&s, &src, DEFAULT_RCOND).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(
            sor(
                &seq(vec![table(vec![vec![2.0], vec![3.0]])]),
                &LabeledSample::new(idx(2), Matrix::column(&[2.0, 3.0]).unwrap()).unwrap(),
                DEFAULT_RCOND
            )
            .unwrap()
            .weights,
            vec![1.0]
        );
    }

    #[test]
    fn tmv_examples() {
        let votes = |cls: &[usize]| -> ModelSequence {
            seq(cls
                .iter()
                .map(|&c| {
                    let mut p = vec![0.1, 0.1];
                    p[c] = 0.9;
                    constant(&p)
                })
                .collect())
        };
        assert_eq!(tmv(&votes(&[0, 0, 1]), &[0.0]).unwrap(), 0);
        assert_eq!(tmv(&votes(&[1, 1, 0]), &[0.0]).unwrap(), 1);
        assert_eq!(tmv(&votes(&[0, 1]), &[0.0]).unwrap(), 0);
        assert_eq!(tmv(&votes(&[1, 0]), &[0.0]).unwrap(), 0);
    }

    #[test]
    fn tmv_matches_count_oracle() {
        let mut r = rng::seeded(42);
        let k = 100;
        let tables: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|_| {
                (0..k)
                    .map(|_| (0..3).map(|_| r.random::<f64>()).collect())
                    .collect()
            })
            .collect();
        let s = seq(tables.iter().cloned().map(table).collect());
        for i in 0..k {
            let mut counts = [0usize; 3];
            for t in &tables {
                let row = &t[i];
                let mut best = 0;
                for c in 1..3 {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                counts[best] += 1;
            }
            let max = *counts.iter().max().unwrap();
            let expected = counts.iter().position(|&c| c == max).unwrap();
            assert_eq!(tmv(&s, &[i as f64]).unwrap(), expected);
        }
    }

    #[test]
    fn tmr_consensus_and_single_model() {
        let f = table(vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.95, 0.05]]);
        let single = seq(vec![f.clone()]);
        let r = tmr(&single, &idx(3), DEFAULT_RCOND).unwrap();
        assert_eq!(r.weights.len(), 1);
        let three = seq(vec![f.clone(), f.clone(), f]);
        let r = tmr(&three, &idx(3), DEFAULT_RCOND).unwrap();
        let agg = predict_aggregated(&three, &r.weights, &idx(3)).unwrap();
        for (i, row) in agg.iter_rows().enumerate() {
            assert_eq!(argmax(row), [0, 1, 0][i]);
        }
    }

    #[test]
    fn tcr_pseudo_labels() {
        let a = constant(&[0.8, 0.2]);
        let b = constant(&[0.4, 0.6]);
        let outs = seq(vec![a.clone(), b])
            .outputs(&Matrix::zeros(1, 1))
            .unwrap();
        assert_eq!(confidence_labels_from_outputs(&outs).unwrap(), vec![0]);
        let single = seq(vec![table(vec![vec![0.3, 0.7], vec![0.6, 0.4]])])
            .outputs(&idx(2))
            .unwrap();
        assert_eq!(confidence_labels_from_outputs(&single).unwrap(), vec![1, 0]);
    }

    #[test]
    fn aggregated_model_is_linear() {
        let s = seq(vec![
            Arc::new(FnModel::new(1, 2, |x: &[f64]| vec![x[0], 1.0])),
            Arc::new(FnModel::new(1, 2, |x: &[f64]| vec![x[0] * x[0], -x[0]])),
        ]);
        let agg = AggregatedModel::new(s, vec![2.0, -0.5]).unwrap();
        assert_eq!(agg.predict(&[3.0]), vec![2.0 * 3.0 - 0.5 * 9.0, 2.0 + 1.5]);
        assert_eq!(
            scaled_weights(&[2.0, -0.5, 0.5]),
            vec![2.0 / 3.0, -0.5 / 3.0, 0.5 / 3.0]
        );
    }

    #[test]
    fn summary_json_shape() {
        let s = seq(vec![constant(&[1.0])]);
        let src = LabeledSample::new(idx(2), Matrix::column(&[1.0, 1.0]).unwrap()).unwrap();
        let r = iwa(&s, &src, &idx(2), &UnitRatio, DEFAULT_RCOND).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["method"], "iwa");
        assert_eq!(v["weights"][0], 1.0);
        assert_eq!(v["rank_retained"], 1);
        assert_eq!(v["gram_condition"], 1.0);
    }

    fn random_sequence(seed: u64, l: usize, k: usize) -> (Vec<Vec<Vec<f64>>>, Matrix) {
        let mut r = rng::seeded(seed);
        let tables = (0..l)
            .map(|_| {
                (0..k)
                    .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
                    .collect()
            })
            .collect();
        let y: Vec<[f64; 2]> = (0..k)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        (tables, Matrix::from_rows(&y).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gram_is_symmetric_psd(seed in any::<u64>(), l in 1usize..6, k in 1usize..12, v in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let (tables, _) = random_sequence(seed, l, k);
            let s = seq(tables.into_iter().map(table).collect());
            let g = empirical_gram(&s, &idx(k)).unwrap();
            prop_assert!(g.is_symmetric(0.0));
            let v = &v[..l];
            let gv = g.matvec(v).unwrap();
            prop_assert!(dot(v, &gv) >= -1e-10);
        }

        #[test]
        fn label_scaling_scales_weights(seed in any::<u64>(), scale in -4.0f64..4.0) {
            let (tables, y) = random_sequence(seed, 3, 10);
            let s = seq(tables.into_iter().map(table).collect());
            let beta = FnRatio::new(5.0, |x: &[f64]| 0.5 + (x[0] % 3.0));
            let src = LabeledSample::new(idx(10), y.clone()).unwrap();
            let scaled = LabeledSample::new(idx(10), y.map(|v| v * scale)).unwrap();
            let a = iwa(&s, &src, &idx(10), &beta, DEFAULT_RCOND).unwrap();
            let b = iwa(&s, &scaled, &idx(10), &beta, DEFAULT_RCOND).unwrap();
            for (wa, wb) in a.weights.iter().zip(&b.weights) {
                prop_assert!((wa * scale - wb).abs() <= 1e-9 * (1.0 + wa.abs()));
            }
        }

        #[test]
        fn permuting_models_permutes_weights(seed in any::<u64>()) {
            let (tables, y) = random_sequence(seed, 4, 12);
            let s = seq(tables.into_iter().map(table).collect());
            let src = LabeledSample::new(idx(12), y).unwrap();
            let beta = FnRatio::new(5.0, |x: &[f64]| 1.0 + 0.1 * x[0]);
            let order = [2usize, 0, 3, 1];
            let a = iwa(&s, &src, &idx(12), &beta, DEFAULT_RCOND).unwrap();
            let b = iwa(&s.permuted(&order), &src, &idx(12), &beta, DEFAULT_RCOND).unwrap();
            for (i, &o) in order.iter().enumerate() {
                prop_assert!((b.weights[i] - a.weights[o]).abs() <= 1e-9 * (1.0 + a.weights[o].abs()));
            }
        }

        #[test]
        fn unit_ratio_reduces_iwa_to_sor(seed in any::<u64>()) {
            let (tables, y) = random_sequence(seed, 3, 9);
            let s = seq(tables.into_iter().map(table).collect());
            let src = LabeledSample::new(idx(9), y).unwrap();
            let a = iwa(&s, &src, &idx(9), &UnitRatio, DEFAULT_RCOND).unwrap();
            let b = sor(&s, &src, DEFAULT_RCOND).unwrap();
            prop_assert_eq!(a.weights, b.weights);
        }
    }
}
