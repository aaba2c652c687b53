//! Vector-valued models `f: X → Y` and the concrete families used to build
//! model sequences.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, pinv_rcond, Matrix};
use crate::rng;

/// A deterministic map from input vectors of length [`Model::input_dim`] to
/// output vectors of length [`Model::output_dim`].
pub trait Model: Send + Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    /// Panics if the model cannot answer for `x`; use [`Model::try_predict`]
    /// for models that only cover a fixed set of inputs.
    fn predict(&self, x: &[f64]) -> Vec<f64>;

    fn try_predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(x))
    }
}

pub type SharedModel = Arc<dyn Model>;

/// Row `i` of the result is `model.predict(xs.row(i))`.
pub fn predict_batch(model: &dyn Model, xs: &Matrix) -> Result<Matrix> {
    if xs.cols() != model.input_dim() {
        return Err(Error::Dimension {
            context: "predict_batch",
            expected: model.input_dim(),
            found: xs.cols(),
        });
    }
    let d2 = model.output_dim();
    let mut data = Vec::with_capacity(xs.rows() * d2);
    for x in xs.iter_rows() {
        let y = model.try_predict(x)?;
        if y.len() != d2 {
            return Err(Error::Dimension {
                context: "model output",
                expected: d2,
                found: y.len(),
            });
        }
        data.extend_from_slice(&y);
    }
    Ok(Matrix::from_raw(xs.rows(), d2, data))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// An ordered, dimension-homogeneous list of models with optional labels.
#[derive(Clone)]
pub struct ModelSequence {
    models: Vec<SharedModel>,
    labels: Vec<String>,
}

impl ModelSequence {
    pub fn new(models: Vec<SharedModel>) -> Result<Self> {
        let labels = (0..models.len()).map(|i| format!("f{i}")).collect();
        Self::with_labels(models, labels)
    }

    pub fn with_labels(models: Vec<SharedModel>, labels: Vec<String>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidArgument("model sequence must not be empty".into()))?;
        let (d1, d2) = (first.input_dim(), first.output_dim());
        for m in &models {
            if m.input_dim() != d1 {
                return Err(Error::Dimension {
                    context: "model sequence input dim",
                    expected: d1,
                    found: m.input_dim(),
                });
            }
            if m.output_dim() != d2 {
                return Err(Error::Dimension {
                    context: "model sequence output dim",
                    expected: d2,
                    found: m.output_dim(),
                });
            }
        }
        if labels.len() != models.len() {
            return Err(Error::Dimension {
                context: "model sequence labels",
                expected: models.len(),
                found: labels.len(),
            });
        }
        Ok(Self { models, labels })
    }

    pub fn push(&mut self, model: SharedModel, label: impl Into<String>) -> Result<()> {
        if model.input_dim() != self.input_dim() || model.output_dim() != self.output_dim() {
            return Err(Error::InvalidArgument(
                "appended model has mismatching dimensions".into(),
            ));
        }
        self.models.push(model);
        self.labels.push(label.into());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.models[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.models[0].output_dim()
    }

    pub fn get(&self, i: usize) -> &SharedModel {
        &self.models[i]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &SharedModel> + '_ {
        self.models.iter()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Reordered copy: model `i` of the result is model `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            models: order.iter().map(|&i| self.models[i].clone()).collect(),
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// One `k × d₂` output matrix per model.
    pub fn outputs(&self, xs: &Matrix) -> Result<Vec<Matrix>> {
        self.models
            .iter()
            .map(|m| predict_batch(m.as_ref(), xs))
            .collect()
    }
}

impl fmt::Debug for ModelSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSequence")
            .field("labels", &self.labels)
            .finish()
    }
}

/// Input transformation applied before a linear layer: optional per-coordinate
/// standardization followed by either the identity or all monomials of total
/// degree `1..=degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    input_dim: usize,
    shift: Vec<f64>,
    scale: Vec<f64>,
    exponents: Option<Vec<Vec<u32>>>,
}

impl FeatureMap {
    pub fn identity(input_dim: usize) -> Self {
        Self {
            input_dim,
            shift: vec![0.0; input_dim],
            scale: vec![1.0; input_dim],
            exponents: None,
        }
    }

    pub fn polynomial(input_dim: usize, degree: u32) -> Self {
        let mut exps = Vec::new();
        for total in 1..=degree {
            let mut cur = vec![0u32; input_dim];
            monomials(input_dim, total, 0, &mut cur, &mut exps);
        }
        Self {
            input_dim,
            shift: vec![0.0; input_dim],
            scale: vec![1.0; input_dim],
            exponents: Some(exps),
        }
    }

    /// Standardize each input coordinate by the mean and standard deviation
    /// of `x` before applying the map.
    pub fn standardized(mut self, x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        for j in 0..self.input_dim {
            let mean = x.iter_rows().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            self.shift[j] = mean;
            self.scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.exponents.as_ref().map_or(self.input_dim, Vec::len)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x
            .iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (s, c))| (v - s) / c)
            .collect();
        match &self.exponents {
            None => z,
            Some(exps) => exps
                .iter()
                .map(|e| {
                    e.iter()
                        .zip(&z)
                        .fold(1.0, |acc, (&p, &v)| acc * v.powi(p as i32))
                })
                .collect(),
        }
    }

    pub fn apply_batch(&self, xs: &Matrix) -> Result<Matrix> {
        if xs.cols() != self.input_dim {
            return Err(Error::Dimension {
                context: "feature map",
                expected: self.input_dim,
                found: xs.cols(),
            });
        }
        let p = self.output_dim();
        let mut data = Vec::with_capacity(xs.rows() * p);
        for x in xs.iter_rows() {
            data.extend(self.apply(x));
        }
        Ok(Matrix::from_raw(xs.rows(), p, data))
    }
}

fn monomials(d: usize, remaining: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == d {
        cur[pos] = remaining;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    if d == 0 {
        return;
    }
    for p in (0..=remaining).rev() {
        cur[pos] = p;
        monomials(d, remaining - p, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// `x ↦ Wᵀ φ(x) + b`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    features: FeatureMap,
    weights: Matrix,
    bias: Vec<f64>,
}

impl LinearModel {
    pub fn new(features: FeatureMap, weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != features.output_dim() {
            return Err(Error::Dimension {
                context: "LinearModel weights",
                expected: features.output_dim(),
                found: weights.rows(),
            });
        }
        if bias.len() != weights.cols() {
            return Err(Error::Dimension {
                context: "LinearModel bias",
                expected: weights.cols(),
                found: bias.len(),
            });
        }
        Ok(Self {
            features,
            weights,
            bias,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

impl Model for LinearModel {
    fn input_dim(&self) -> usize {
        self.features.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.bias.len()
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let phi = self.features.apply(x);
        let mut out = self.bias.clone();
        for (k, &p) in phi.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.weights.row(k)) {
                *o += p * w;
            }
        }
        out
    }
}

/// Relative eigenvalue threshold used when `ridge == 0`.
const RIDGE_RCOND: f64 = 1e-12;

/// Ridge regression with an unpenalized intercept on raw inputs.
pub fn fit_ridge(x: &Matrix, y: &Matrix, ridge: f64) -> Result<LinearModel> {
    fit_ridge_with(FeatureMap::identity(x.cols()), x, y, ridge)
}

/// Minimizes `‖Φ W + 1 bᵀ − Y‖² + ridge ‖W‖²` with `Φ = features(x)`.
pub fn fit_ridge_with(
    features: FeatureMap,
    x: &Matrix,
    y: &Matrix,
    ridge: f64,
) -> Result<LinearModel> {
    if x.rows() == 0 {
        return Err(Error::InvalidArgument(
            "fit_ridge needs at least one sample".into(),
        ));
    }
    if x.rows() != y.rows() {
        return Err(Error::Dimension {
            context: "fit_ridge rows",
            expected: x.rows(),
            found: y.rows(),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let phi = features.apply_batch(x)?;
    let (n, p, d2) = (phi.rows(), phi.cols(), y.cols());
    let nf = n as f64;
    let phi_mean: Vec<f64> = (0..p)
        .map(|j| phi.iter_rows().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    let y_mean: Vec<f64> = (0..d2)
        .map(|j| y.iter_rows().map(|r| r[j]).sum::<f64>() / nf)
        .collect();

    let mut a = Matrix::zeros(p, p);
    let mut b = Matrix::zeros(p, d2);
    for (pr, yr) in phi.iter_rows().zip(y.iter_rows()) {
        for i in 0..p {
            let ci = pr[i] - phi_mean[i];
            for j in 0..p {
                a[(i, j)] += ci * (pr[j] - phi_mean[j]);
            }
            for k in 0..d2 {
                b[(i, k)] += ci * (yr[k] - y_mean[k]);
            }
        }
    }
    for i in 0..p {
        a[(i, i)] += ridge;
    }

    let weights = if p == 0 {
        Matrix::zeros(0, d2)
    } else {
        let inv = pinv_rcond(&a, RIDGE_RCOND)?;
        if inv.rank < p {
            return Err(Error::Numerical(format!(
                "ridge design matrix is rank deficient ({} of {p}); use ridge > 0",
                inv.rank
            )));
        }
        inv.matrix.matmul(&b)?
    };
    let bias = (0..d2)
        .map(|k| y_mean[k] - (0..p).map(|i| phi_mean[i] * weights[(i, k)]).sum::<f64>())
        .collect();
    LinearModel::new(features, weights, bias)
}

/// Multinomial logistic regression returning class-probability vectors.
#[derive(Debug, Clone)]
pub struct SoftmaxClassifier {
    features: FeatureMap,
    weights: Matrix,
    bias: Vec<f64>,
}

impl SoftmaxClassifier {
    /// All-zero parameters; predicts the uniform distribution.
    pub fn zeros(features: FeatureMap, classes: usize) -> Self {
        let p = features.output_dim();
        Self {
            features,
            weights: Matrix::zeros(p, classes),
            bias: vec![0.0; classes],
        }
    }

    pub fn with_params(features: FeatureMap, weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != features.output_dim() || weights.cols() != bias.len() {
            return Err(Error::Dimension {
                context: "softmax parameters",
                expected: features.output_dim() * bias.len(),
                found: weights.rows() * weights.cols(),
            });
        }
        Ok(Self {
            features,
            weights,
            bias,
        })
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn logits(&self, phi: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (k, &p) in phi.iter().enumerate() {
            for (o, &w) in z.iter_mut().zip(self.weights.row(k)) {
                *o += p * w;
            }
        }
        z
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl Model for SoftmaxClassifier {
    fn input_dim(&self) -> usize {
        self.features.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.bias.len()
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(&self.features.apply(x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxOptions {
    pub epochs: usize,
    pub lr: f64,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
}

impl Default for SoftmaxOptions {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.5,
            l2: 0.0,
        }
    }
}

/// Mean cross-entropy (plus `l2/2 ‖W‖²`) of `model` on featurized samples
/// and its gradient with respect to `(W, b)`. `phi` holds the featurized
/// inputs, see [`FeatureMap::apply_batch`].
pub fn softmax_loss_grad(
    model: &SoftmaxClassifier,
    phi: &Matrix,
    labels: &[usize],
    sample_weights: Option<&[f64]>,
    l2: f64,
) -> (f64, Matrix, Vec<f64>) {
    let k = model.classes();
    let n = phi.rows() as f64;
    let mut gw = Matrix::zeros(phi.cols(), k);
    let mut gb = vec![0.0; k];
    let mut loss = 0.0;
    for (i, (row, &label)) in phi.iter_rows().zip(labels).enumerate() {
        let w = sample_weights.map_or(1.0, |s| s[i]);
        let p = softmax(&model.logits(row));
        loss -= w * p[label].max(1e-300).ln();
        for c in 0..k {
            let r = w * (p[c] - if c == label { 1.0 } else { 0.0 });
            gb[c] += r;
            for (j, &f) in row.iter().enumerate() {
                gw[(j, c)] += r * f;
            }
        }
    }
    loss /= n;
    gb.iter_mut().for_each(|g| *g /= n);
    let mut sq = 0.0;
    for j in 0..phi.cols() {
        for c in 0..k {
            gw[(j, c)] = gw[(j, c)] / n + l2 * model.weights[(j, c)];
            sq += model.weights[(j, c)].powi(2);
        }
    }
    (loss + 0.5 * l2 * sq, gw, gb)
}

fn check_labels(x: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::InvalidArgument(
            "classifier needs at least one sample".into(),
        ));
    }
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 classes, got {classes}"
        )));
    }
    if labels.len() != x.rows() {
        return Err(Error::Dimension {
            context: "classifier labels",
            expected: x.rows(),
            found: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Full-batch gradient descent on cross-entropy over raw inputs, starting
/// from zero weights.
pub fn fit_softmax_classifier(
    x: &Matrix,
    labels: &[usize],
    classes: usize,
    epochs: usize,
    lr: f64,
) -> Result<SoftmaxClassifier> {
    let opts = SoftmaxOptions {
        epochs,
        lr,
        l2: 0.0,
    };
    fit_softmax_with(
        FeatureMap::identity(x.cols()),
        x,
        labels,
        classes,
        &opts,
        None,
    )
}

/// Like [`fit_softmax_classifier`] with a feature map, L2 penalty and
/// optional per-sample weights.
pub fn fit_softmax_with(
    features: FeatureMap,
    x: &Matrix,
    labels: &[usize],
    classes: usize,
    opts: &SoftmaxOptions,
    sample_weights: Option<&[f64]>,
) -> Result<SoftmaxClassifier> {
    check_labels(x, labels, classes)?;
    if let Some(w) = sample_weights {
        if w.len() != x.rows() {
            return Err(Error::Dimension {
                context: "classifier sample weights",
                expected: x.rows(),
                found: w.len(),
            });
        }
    }
    let phi = features.apply_batch(x)?;
    let model = SoftmaxClassifier::zeros(features, classes);
    Ok(descend(model, &phi, labels, opts, sample_weights, None))
}

/// Source cross-entropy plus `entropy_weight` times the mean prediction
/// entropy on unlabeled `target_x`. Weight 0 is plain source training.
pub fn fit_softmax_entropy(
    features: FeatureMap,
    x: &Matrix,
    labels: &[usize],
    classes: usize,
    opts: &SoftmaxOptions,
    target_x: &Matrix,
    entropy_weight: f64,
) -> Result<SoftmaxClassifier> {
    check_labels(x, labels, classes)?;
    if !(entropy_weight >= 0.0 && entropy_weight.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "entropy weight must be finite and >= 0, got {entropy_weight}"
        )));
    }
    let phi = features.apply_batch(x)?;
    let phi_t = features.apply_batch(target_x)?;
    let model = SoftmaxClassifier::zeros(features, classes);
    let target = (entropy_weight > 0.0 && phi_t.rows() > 0).then_some((&phi_t, entropy_weight));
    Ok(descend(model, &phi, labels, opts, None, target))
}

fn descend(
    mut model: SoftmaxClassifier,
    phi: &Matrix,
    labels: &[usize],
    opts: &SoftmaxOptions,
    sample_weights: Option<&[f64]>,
    target: Option<(&Matrix, f64)>,
) -> SoftmaxClassifier {
    let classes = model.classes();
    for _ in 0..opts.epochs {
        let (_, mut gw, mut gb) = softmax_loss_grad(&model, phi, labels, sample_weights, opts.l2);
        if let Some((phi_t, weight)) = target {
            let (_, ew, eb) = entropy_grad(&model, phi_t);
            for j in 0..gw.rows() {
                for c in 0..classes {
                    gw[(j, c)] += weight * ew[(j, c)];
                }
            }
            for (g, e) in gb.iter_mut().zip(&eb) {
                *g += weight * e;
            }
        }
        for j in 0..gw.rows() {
            for c in 0..classes {
                model.weights[(j, c)] -= opts.lr * gw[(j, c)];
            }
        }
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= opts.lr * g;
        }
    }
    model
}

/// Mean Shannon entropy of the predicted distributions and its gradient.
/// `∂H/∂z_k = −p_k (ln p_k + H)` per sample.
pub(crate) fn entropy_grad(model: &SoftmaxClassifier, phi: &Matrix) -> (f64, Matrix, Vec<f64>) {
    let k = model.classes();
    let n = phi.rows() as f64;
    let mut gw = Matrix::zeros(phi.cols(), k);
    let mut gb = vec![0.0; k];
    let mut total = 0.0;
    for row in phi.iter_rows() {
        let p = softmax(&model.logits(row));
        let logs: Vec<f64> = p.iter().map(|v| v.max(1e-300).ln()).collect();
        let h: f64 = -p.iter().zip(&logs).map(|(a, b)| a * b).sum::<f64>();
        total += h;
        for c in 0..k {
            let r = -p[c] * (logs[c] + h) / n;
            gb[c] += r;
            for (j, &f) in row.iter().enumerate() {
                gw[(j, c)] += r * f;
            }
        }
    }
    (total / n, gw, gb)
}

/// Always returns the same output vector.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    input_dim: usize,
    output: Vec<f64>,
}

impl ConstantModel {
    pub fn new(input_dim: usize, output: Vec<f64>) -> Self {
        Self { input_dim, output }
    }
}

impl Model for ConstantModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output.len()
    }

    fn predict(&self, _x: &[f64]) -> Vec<f64> {
        self.output.clone()
    }
}

/// Adapter turning a closure into a [`Model`].
pub struct FnModel<F> {
    input_dim: usize,
    output_dim: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(input_dim: usize, output_dim: usize, f: F) -> Self {
        Self {
            input_dim,
            output_dim,
            f,
        }
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

/// A model whose output has standard Gaussian noise added to a fixed half of
/// its coordinates. The noise is a deterministic function of the seed and
/// the query point.
#[derive(Clone)]
pub struct CorruptedModel {
    base: SharedModel,
    seed: u64,
    mask: Vec<bool>,
}

impl CorruptedModel {
    pub fn with_mask(base: SharedModel, seed: u64, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != base.output_dim() {
            return Err(Error::Dimension {
                context: "corruption mask",
                expected: base.output_dim(),
                found: mask.len(),
            });
        }
        Ok(Self { base, seed, mask })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Wraps `base` so that `⌈d₂/2⌉` output coordinates, drawn uniformly from
/// `seed`, receive `N(0, 1)` noise.
pub fn corrupt(base: SharedModel, seed: u64) -> CorruptedModel {
    let d2 = base.output_dim();
    let k = d2.div_ceil(2);
    let mut rng = rng::seeded(rng::derive(seed, 0x6d61_736b));
    let mut mask = vec![false; d2];
    for i in sample_indices(&mut rng, d2, k) {
        mask[i] = true;
    }
    CorruptedModel { base, seed, mask }
}

impl Model for CorruptedModel {
    fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.base.output_dim()
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.try_predict(x).expect("base model failed")
    }

    fn try_predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.base.try_predict(x)?;
        if self.mask.iter().any(|&m| m) {
            let mut rng = rng::seeded(rng::hash_floats(self.seed, x));
            for (v, &m) in y.iter_mut().zip(&self.mask) {
                if m {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v += e;
                }
            }
        }
        Ok(y)
    }
}

/// Data split a precomputed prediction belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Source,
    Target,
}

impl Split {
    fn code(self) -> f64 {
        match self {
            Split::Source => 0.0,
            Split::Target => 1.0,
        }
    }

    fn from_code(c: f64) -> Option<Self> {
        if c == 0.0 {
            Some(Split::Source)
        } else if c == 1.0 {
            Some(Split::Target)
        } else {
            None
        }
    }

    fn name(self) -> &'static str {
        match self {
            Split::Source => "source",
            Split::Target => "target",
        }
    }
}

/// Predictions produced elsewhere, keyed by `(split, sample index)`.
///
/// As a [`Model`] it takes the two-element input `[split_code, index]`
/// (source = 0, target = 1); see [`PrecomputedModel::index_inputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedModel {
    output_dim: usize,
    table: BTreeMap<(Split, usize), Vec<f64>>,
}

impl PrecomputedModel {
    pub fn new(output_dim: usize) -> Self {
        Self {
            output_dim,
            table: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, split: Split, index: usize, y: Vec<f64>) -> Result<()> {
        if y.len() != self.output_dim {
            return Err(Error::Dimension {
                context: "precomputed prediction",
                expected: self.output_dim,
                found: y.len(),
            });
        }
        self.table.insert((split, index), y);
        Ok(())
    }

    /// Builds the table from full prediction matrices.
    pub fn from_outputs(source: &Matrix, target: &Matrix) -> Result<Self> {
        let mut m = Self::new(source.cols());
        for (i, r) in source.iter_rows().enumerate() {
            m.insert(Split::Source, i, r.to_vec())?;
        }
        for (i, r) in target.iter_rows().enumerate() {
            m.insert(Split::Target, i, r.to_vec())?;
        }
        Ok(m)
    }

    pub fn get(&self, split: Split, index: usize) -> Option<&[f64]> {
        self.table.get(&(split, index)).map(Vec::as_slice)
    }

    /// Inputs `[split_code, i]` for `i in 0..count`.
    pub fn index_inputs(split: Split, count: usize) -> Matrix {
        let mut data = Vec::with_capacity(2 * count);
        for i in 0..count {
            data.push(split.code());
            data.push(i as f64);
        }
        Matrix::from_raw(count, 2, data)
    }

    /// Prediction matrix for indices `0..count` of `split`.
    pub fn outputs(&self, split: Split, count: usize) -> Result<Matrix> {
        predict_batch(self, &Self::index_inputs(split, count))
    }

    /// Reads the `split,index,y0,y1,...` CSV format.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            });
        }
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
        let header = rdr.headers()?.clone();
        let expected_tail: Vec<String> = (0..header.len().saturating_sub(2))
            .map(|i| format!("y{i}"))
            .collect();
        if header.len() < 3
            || &header[0] != "split"
            || &header[1] != "index"
            || header
                .iter()
                .skip(2)
                .ne(expected_tail.iter().map(String::as_str))
        {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "header must be `split,index,y0,y1,...`".into(),
            });
        }
        let width = header.len();
        let mut model = Self::new(width - 2);
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != width {
                return Err(Error::ColumnCount {
                    path: path.to_path_buf(),
                    line,
                    expected: width,
                    found: rec.len(),
                });
            }
            let split = match &rec[0] {
                "source" => Split::Source,
                "target" => Split::Target,
                other => {
                    return Err(Error::Format {
                        path: path.to_path_buf(),
                        message: format!("line {line}: unknown split {other:?}"),
                    })
                }
            };
            let index: usize = rec[1].trim().parse().map_err(|_| Error::ParseNumber {
                path: path.to_path_buf(),
                line,
                value: rec[1].to_string(),
            })?;
            let y = rec
                .iter()
                .skip(2)
                .map(|v| crate::datasets::parse_number(v, path, line))
                .collect::<Result<Vec<f64>>>()?;
            model.insert(split, index, y)?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["split".to_string(), "index".to_string()];
        header.extend((0..self.output_dim).map(|i| format!("y{i}")));
        w.write_record(&header)?;
        for ((split, idx), y) in &self.table {
            let mut rec = vec![split.name().to_string(), idx.to_string()];
            rec.extend(y.iter().map(|v| crate::datasets::format_number(*v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

impl Model for PrecomputedModel {
    fn input_dim(&self) -> usize {
        2
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.try_predict(x).expect("precomputed prediction missing")
    }

    fn try_predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let bad = || Error::InvalidArgument(format!("no precomputed prediction for input {x:?}"));
        let split = x
            .first()
            .copied()
            .and_then(Split::from_code)
            .ok_or_else(bad)?;
        let idx = x
            .get(1)
            .copied()
            .filter(|v| *v >= 0.0 && v.fract() == 0.0)
            .ok_or_else(bad)?;
        self.get(split, idx as usize)
            .map(<[f64]>::to_vec)
            .ok_or_else(bad)
    }
}

/// Sum of squared coefficients of a linear model, used for shrinkage checks.
pub fn weight_norm_sq(m: &LinearModel) -> f64 {
    dot(m.weights().as_slice(), m.weights().as_slice())
}
