//! Estimators of the density ratio `β(x) = dq/dp(x)` between the target and
//! source input distributions, clipped to `[0, B]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{fit_softmax_with, FeatureMap, Model, SoftmaxClassifier, SoftmaxOptions};

/// Default clipping bound `B`.
pub const DEFAULT_BOUND: f64 = 50.0;

const PROB_CLAMP: f64 = 1e-6;

pub trait DensityRatio: Send + Sync {
    /// Value in `[0, bound()]`.
    fn weight(&self, x: &[f64]) -> f64;

    fn bound(&self) -> f64;
}

/// `β ≡ 1`: no shift.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitRatio;

impl DensityRatio for UnitRatio {
    fn weight(&self, _x: &[f64]) -> f64 {
        1.0
    }

    fn bound(&self) -> f64 {
        1.0
    }
}

/// Wraps a closure; the output is clipped to `[0, bound]`.
pub struct FnRatio<F> {
    f: F,
    bound: f64,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnRatio<F> {
    pub fn new(bound: f64, f: F) -> Self {
        Self { f, bound }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> DensityRatio for FnRatio<F> {
    fn weight(&self, x: &[f64]) -> f64 {
        (self.f)(x).clamp(0.0, self.bound)
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// Ratio of two univariate normal densities, evaluated on `x[0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRatio {
    pub source_mean: f64,
    pub source_std: f64,
    pub target_mean: f64,
    pub target_std: f64,
    pub bound: f64,
}

impl GaussianRatio {
    pub fn new(
        source_mean: f64,
        source_std: f64,
        target_mean: f64,
        target_std: f64,
        bound: f64,
    ) -> Result<Self> {
        if !(source_std > 0.0 && target_std > 0.0) {
            return Err(Error::InvalidArgument(
                "standard deviations must be > 0".into(),
            ));
        }
        check_bound(bound)?;
        Ok(Self {
            source_mean,
            source_std,
            target_mean,
            target_std,
            bound,
        })
    }

    /// `φ_target(x) / φ_source(x)` without clipping.
    pub fn unclipped(&self, x: f64) -> f64 {
        let zt = (x - self.target_mean) / self.target_std;
        let zs = (x - self.source_mean) / self.source_std;
        let log = (self.source_std / self.target_std).ln() - 0.5 * (zt * zt - zs * zs);
        log.exp()
    }
}

impl DensityRatio for GaussianRatio {
    fn weight(&self, x: &[f64]) -> f64 {
        self.unclipped(x[0]).min(self.bound)
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

fn check_bound(bound: f64) -> Result<()> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bound must be > 0, got {bound}"
        )));
    }
    Ok(())
}

/// Settings for [`fit_domain_classifier`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub bound: f64,
    /// Degree of the polynomial feature map on standardized inputs; 1 is a
    /// linear logistic regression.
    #[serde(default = "default_degree")]
    pub degree: u32,
}

fn default_degree() -> u32 {
    1
}

impl Default for DomainClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 0.5,
            bound: DEFAULT_BOUND,
            degree: 1,
        }
    }
}

/// Ratio derived from a probabilistic source-vs-target classifier:
/// `β(x) = clip((n/m) · d(x) / (1 − d(x)), 0, B)` with `d(x) ≈ P(target | x)`.
#[derive(Debug, Clone)]
pub struct LearnedRatio {
    classifier: SoftmaxClassifier,
    prior: f64,
    bound: f64,
}

impl LearnedRatio {
    pub fn classifier(&self) -> &SoftmaxClassifier {
        &self.classifier
    }

    /// The `n/m` class-prior correction.
    pub fn prior(&self) -> f64 {
        self.prior
    }

    /// `d(x)` before clamping.
    pub fn target_probability(&self, x: &[f64]) -> f64 {
        self.classifier.predict(x)[1]
    }
}

impl DensityRatio for LearnedRatio {
    fn weight(&self, x: &[f64]) -> f64 {
        let d = self
            .target_probability(x)
            .clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        (self.prior * d / (1.0 - d)).clamp(0.0, self.bound)
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// Trains a logistic classifier on source (label 0) against target (label 1)
/// inputs by full-batch gradient descent.
pub fn fit_domain_classifier(
    source_x: &Matrix,
    target_x: &Matrix,
    cfg: &DomainClassifierConfig,
) -> Result<LearnedRatio> {
    if source_x.rows() == 0 || target_x.rows() == 0 {
        return Err(Error::InvalidArgument(
            "domain classifier needs non-empty source and target samples".into(),
        ));
    }
    if source_x.cols() != target_x.cols() {
        return Err(Error::Dimension {
            context: "domain classifier inputs",
            expected: source_x.cols(),
            found: target_x.cols(),
        });
    }
    check_bound(cfg.bound)?;
    let (n, m) = (source_x.rows(), target_x.rows());
    let mut rows = Vec::with_capacity((n + m) * source_x.cols());
    rows.extend_from_slice(source_x.as_slice());
    rows.extend_from_slice(target_x.as_slice());
    let pooled = Matrix::new(n + m, source_x.cols(), rows)?;
    let labels: Vec<usize> = (0..n + m).map(|i| usize::from(i >= n)).collect();

    let features = FeatureMap::polynomial(source_x.cols(), cfg.degree.max(1)).standardized(&pooled);
    let opts = SoftmaxOptions {
        epochs: cfg.epochs,
        lr: cfg.lr,
        l2: 0.0,
    };
    let classifier = fit_softmax_with(features, &pooled, &labels, 2, &opts, None)?;
    Ok(LearnedRatio {
        classifier,
        prior: n as f64 / m as f64,
        bound: cfg.bound,
    })
}

/// Ratio values on a sample together with their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioWeights {
    pub weights: Vec<f64>,
    pub mean: f64,
}

pub fn normalized_weights(beta: &dyn DensityRatio, xs: &Matrix) -> Result<RatioWeights> {
    if xs.rows() == 0 {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let weights: Vec<f64> = xs.iter_rows().map(|x| beta.weight(x)).collect();
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    Ok(RatioWeights { weights, mean })
}
