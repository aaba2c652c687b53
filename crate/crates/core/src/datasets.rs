//! Synthetic covariate-shift benchmarks and a CSV loader for external data.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::density_ratio::{DensityRatio, GaussianRatio};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::argmax;
use crate::rng::{self, SeededRng};

/// Inputs with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Matrix,
    pub y: Matrix,
}

impl LabeledSample {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::Dimension {
                context: "labeled sample rows",
                expected: x.rows(),
                found: y.rows(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Argmax class of each label row.
    pub fn class_labels(&self) -> Vec<usize> {
        self.y.iter_rows().map(argmax).collect()
    }
}

/// One unsupervised domain adaptation problem. `target_eval` is labeled
/// target data reserved for evaluation; aggregation and selection code never
/// receives it.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainAdaptationInstance {
    pub source: LabeledSample,
    pub target_x: Matrix,
    pub target_eval: LabeledSample,
    /// Noise-free regression function values on `target_eval.x`, when known.
    pub target_eval_clean: Option<Matrix>,
    pub seed: u64,
}

impl DomainAdaptationInstance {
    pub fn input_dim(&self) -> usize {
        self.source.x.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.source.y.cols()
    }

    fn validate(&self) -> Result<()> {
        let d1 = self.input_dim();
        for (ctx, cols) in [
            ("target inputs", self.target_x.cols()),
            ("eval inputs", self.target_eval.x.cols()),
        ] {
            if cols != d1 {
                return Err(Error::Dimension {
                    context: ctx,
                    expected: d1,
                    found: cols,
                });
            }
        }
        if self.target_eval.y.cols() != self.output_dim() {
            return Err(Error::Dimension {
                context: "eval labels",
                expected: self.output_dim(),
                found: self.target_eval.y.cols(),
            });
        }
        Ok(())
    }
}

/// `sin(πx)/(πx)` with the continuous extension `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// How to read the two `1/4` constants of the sinc shift setting.
///
/// `Variance` reads them as `N(mean, variance)`: source `N(1, 1/4)` has
/// standard deviation `1/2` and target `N(2, (1/4)²)` has standard deviation
/// `1/4`. `BothStd` gives both domains standard deviation `1/4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SincScale {
    Variance,
    #[default]
    BothStd,
}

impl SincScale {
    pub fn source_std(self) -> f64 {
        match self {
            SincScale::Variance => 0.5,
            SincScale::BothStd => 0.25,
        }
    }

    pub fn target_std(self) -> f64 {
        0.25
    }
}

/// One-dimensional regression shift: inputs move from `N(1, ·)` to
/// `N(2, ·)`, labels are `sinc(x) + N(0, 1/16)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SincShift {
    pub n: usize,
    pub m: usize,
    pub eval_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub scale: SincScale,
    #[serde(default = "default_sinc_noise")]
    pub noise_std: f64,
}

fn default_sinc_noise() -> f64 {
    0.25
}

pub const SINC_SOURCE_MEAN: f64 = 1.0;
pub const SINC_TARGET_MEAN: f64 = 2.0;

impl SincShift {
    pub fn new(n: usize, m: usize, eval_size: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            eval_size,
            seed,
            scale: SincScale::default(),
            noise_std: default_sinc_noise(),
        }
    }

    /// Exact density ratio of this setting, clipped at `bound`.
    pub fn density_ratio(&self, bound: f64) -> Result<GaussianRatio> {
        GaussianRatio::new(
            SINC_SOURCE_MEAN,
            self.scale.source_std(),
            SINC_TARGET_MEAN,
            self.scale.target_std(),
            bound,
        )
    }

    pub fn generate(&self) -> Result<DomainAdaptationInstance> {
        make_sinc_shift(self)
    }
}

fn normal_column(rng: &mut SeededRng, count: usize, mean: f64, std: f64) -> Vec<f64> {
    let dist = Normal::new(mean, std).expect("valid normal parameters");
    (0..count).map(|_| dist.sample(rng)).collect()
}

pub fn make_sinc_shift(cfg: &SincShift) -> Result<DomainAdaptationInstance> {
    if cfg.n == 0 || cfg.m == 0 || cfg.eval_size == 0 {
        return Err(Error::InvalidArgument("sinc sizes must be >= 1".into()));
    }
    let (sp, sq) = (cfg.scale.source_std(), cfg.scale.target_std());
    let noise = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::InvalidArgument(format!("noise_std: {e}")))?;

    let mut r = rng::seeded(rng::derive(cfg.seed, 1));
    let sx = normal_column(&mut r, cfg.n, SINC_SOURCE_MEAN, sp);
    let sy: Vec<f64> = sx.iter().map(|&x| sinc(x) + noise.sample(&mut r)).collect();

    let mut r = rng::seeded(rng::derive(cfg.seed, 2));
    let tx = normal_column(&mut r, cfg.m, SINC_TARGET_MEAN, sq);

    let mut r = rng::seeded(rng::derive(cfg.seed, 3));
    let ex = normal_column(&mut r, cfg.eval_size, SINC_TARGET_MEAN, sq);
    let clean: Vec<f64> = ex.iter().map(|&x| sinc(x)).collect();
    let ey: Vec<f64> = clean.iter().map(|&c| c + noise.sample(&mut r)).collect();

    Ok(DomainAdaptationInstance {
        source: LabeledSample::new(Matrix::column(&sx)?, Matrix::column(&sy)?)?,
        target_x: Matrix::column(&tx)?,
        target_eval: LabeledSample::new(Matrix::column(&ex)?, Matrix::column(&ey)?)?,
        target_eval_clean: Some(Matrix::column(&clean)?),
        seed: cfg.seed,
    })
}

/// Rotation by `angle_deg` about `center` followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineShift {
    pub angle_deg: f64,
    pub translation: [f64; 2],
    pub center: [f64; 2],
}

impl Default for AffineShift {
    /// 35° about the population centroid `(0.5, 0.25)` of the two moons,
    /// then a shift by `(0.3, 0.2)`.
    fn default() -> Self {
        Self {
            angle_deg: 35.0,
            translation: [0.3, 0.2],
            center: [0.5, 0.25],
        }
    }
}

impl AffineShift {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        [
            c * dx - s * dy + self.center[0] + self.translation[0],
            s * dx + c * dy + self.center[1] + self.translation[1],
        ]
    }

    pub fn inverse(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let dx = p[0] - self.translation[0] - self.center[0];
        let dy = p[1] - self.translation[1] - self.center[1];
        [
            c * dx + s * dy + self.center[0],
            -s * dx + c * dy + self.center[1],
        ]
    }
}

/// Two-class moons where the target inputs are an affine image of the
/// source generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoonsShift {
    pub n: usize,
    pub m: usize,
    pub eval_size: usize,
    pub noise: f64,
    pub seed: u64,
    #[serde(default)]
    pub transform: AffineShift,
}

impl MoonsShift {
    pub fn new(n: usize, m: usize, eval_size: usize, noise: f64, seed: u64) -> Self {
        Self {
            n,
            m,
            eval_size,
            noise,
            seed,
            transform: AffineShift::default(),
        }
    }

    pub fn generate(&self) -> Result<DomainAdaptationInstance> {
        make_transformed_moons(self)
    }
}

impl MoonsShift {
    /// Exact ratio `q(x)/p(x)` of this setting, clipped at `bound`.
    /// Needs `noise > 0`, otherwise the densities do not exist.
    pub fn density_ratio(&self, bound: f64) -> Result<MoonsRatio> {
        if self.noise.is_nan() || self.noise <= 0.0 {
            return Err(Error::InvalidArgument(
                "exact moons ratio needs noise > 0".into(),
            ));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bound must be > 0, got {bound}"
            )));
        }
        Ok(MoonsRatio {
            noise: self.noise,
            transform: self.transform,
            bound,
        })
    }
}

/// Density ratio of the transformed moons. The source density is the
/// equal-weight mixture of both arcs convolved with isotropic Gaussian
/// jitter. The map is rigid, so the target density is `p(T⁻¹x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoonsRatio {
    noise: f64,
    transform: AffineShift,
    bound: f64,
}

const MOONS_QUADRATURE: usize = 512;

impl MoonsRatio {
    /// `ln p(x)` by the midpoint rule over the arc parameter.
    pub fn log_source_density(&self, x: [f64; 2]) -> f64 {
        let s2 = self.noise * self.noise;
        let mut terms = Vec::with_capacity(2 * MOONS_QUADRATURE);
        for i in 0..MOONS_QUADRATURE {
            let t = PI * (i as f64 + 0.5) / MOONS_QUADRATURE as f64;
            let (sn, c) = t.sin_cos();
            for a in [[c, sn], [1.0 - c, 0.5 - sn]] {
                let d2 = (x[0] - a[0]).powi(2) + (x[1] - a[1]).powi(2);
                terms.push(-d2 / (2.0 * s2));
            }
        }
        let max = terms.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = terms.iter().map(|v| (v - max).exp()).sum();
        max + (sum / terms.len() as f64).ln() - (2.0 * PI * s2).ln()
    }

    pub fn unclipped(&self, x: [f64; 2]) -> f64 {
        let q = self.log_source_density(self.transform.inverse(x));
        (q - self.log_source_density(x)).exp()
    }
}

impl DensityRatio for MoonsRatio {
    fn weight(&self, x: &[f64]) -> f64 {
        self.unclipped([x[0], x[1]]).clamp(0.0, self.bound)
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// `count` points of the standard two moons: class 0 on the upper unit
/// half-circle, class 1 on the lower half-circle centred at `(1, 0.5)`.
/// Class 0 gets `⌈count/2⌉` points. Rows are shuffled.
pub fn moons_points(count: usize, noise: f64, rng: &mut SeededRng) -> (Vec<[f64; 2]>, Vec<usize>) {
    let jitter = Normal::new(0.0, noise.max(0.0)).expect("valid jitter");
    let n0 = count.div_ceil(2);
    let mut pts: Vec<([f64; 2], usize)> = (0..count)
        .map(|i| {
            let t: f64 = rng.random_range(0.0..=PI);
            let (s, c) = t.sin_cos();
            let (p, label) = if i < n0 {
                ([c, s], 0)
            } else {
                ([1.0 - c, 0.5 - s], 1)
            };
            let p = if noise > 0.0 {
                [p[0] + jitter.sample(rng), p[1] + jitter.sample(rng)]
            } else {
                p
            };
            (p, label)
        })
        .collect();
    pts.shuffle(rng);
    pts.into_iter().unzip()
}

fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut y = Matrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }
    y
}

pub fn make_transformed_moons(cfg: &MoonsShift) -> Result<DomainAdaptationInstance> {
    if cfg.n == 0 || cfg.m == 0 || cfg.eval_size == 0 {
        return Err(Error::InvalidArgument("moons sizes must be >= 1".into()));
    }
    if cfg.noise.is_nan() || cfg.noise < 0.0 {
        return Err(Error::InvalidArgument("moons noise must be >= 0".into()));
    }
    let split = |stream: u64, count: usize, shifted: bool| -> Result<LabeledSample> {
        let mut r = rng::seeded(rng::derive(cfg.seed, stream));
        let (pts, labels) = moons_points(count, cfg.noise, &mut r);
        let pts: Vec<[f64; 2]> = if shifted {
            pts.into_iter().map(|p| cfg.transform.apply(p)).collect()
        } else {
            pts
        };
        LabeledSample::new(Matrix::from_rows(&pts)?, one_hot(&labels, 2))
    };
    Ok(DomainAdaptationInstance {
        source: split(1, cfg.n, false)?,
        target_x: split(2, cfg.m, true)?.x,
        target_eval: split(3, cfg.eval_size, true)?,
        target_eval_clean: None,
        seed: cfg.seed,
    })
}

/// Stream id used for the unlabeled target split of the moons generator.
pub const MOONS_TARGET_STREAM: u64 = 2;

/// Files backing a CSV instance. `source` and `target_eval` carry
/// `x0,..,y0,..` headers; `target` carries `x0,..` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvPaths {
    pub source: PathBuf,
    pub target: PathBuf,
    pub target_eval: PathBuf,
}

pub(crate) fn parse_number(v: &str, path: &Path, line: u64) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::ParseNumber {
            path: path.to_path_buf(),
            line,
            value: v.to_string(),
        })
}

/// 17 significant digits; parses back to the identical `f64`.
pub(crate) fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_split(path: &Path, want_labels: bool) -> Result<(Matrix, Option<Matrix>)> {
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    let d1 = header.iter().take_while(|h| h.starts_with('x')).count();
    let d2 = header.len() - d1;
    let names_ok = header
        .iter()
        .take(d1)
        .enumerate()
        .all(|(i, h)| h == format!("x{i}"))
        && header
            .iter()
            .skip(d1)
            .enumerate()
            .all(|(i, h)| h == format!("y{i}"));
    if d1 == 0 || !names_ok || (want_labels && d2 == 0) || (!want_labels && d2 != 0) {
        let want = if want_labels {
            "x0,...,y0,..."
        } else {
            "x0,..."
        };
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("header must be `{want}`"),
        });
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::ColumnCount {
                path: path.to_path_buf(),
                line,
                expected: header.len(),
                found: rec.len(),
            });
        }
        for (j, v) in rec.iter().enumerate() {
            let x = parse_number(v, path, line)?;
            if j < d1 {
                xs.push(x);
            } else {
                ys.push(x);
            }
        }
        rows += 1;
    }
    let x = Matrix::new(rows, d1, xs)?;
    let y = if want_labels {
        Some(Matrix::new(rows, d2, ys)?)
    } else {
        None
    };
    Ok((x, y))
}

pub fn load_csv_instance(paths: &CsvPaths) -> Result<DomainAdaptationInstance> {
    let (sx, sy) = read_split(&paths.source, true)?;
    let (tx, _) = read_split(&paths.target, false)?;
    let (ex, ey) = read_split(&paths.target_eval, true)?;
    let inst = DomainAdaptationInstance {
        source: LabeledSample::new(sx, sy.expect("labels requested"))?,
        target_x: tx,
        target_eval: LabeledSample::new(ex, ey.expect("labels requested"))?,
        target_eval_clean: None,
        seed: 0,
    };
    inst.validate()?;
    Ok(inst)
}

fn write_split(path: &Path, x: &Matrix, y: Option<&Matrix>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..x.cols()).map(|i| format!("x{i}")).collect();
    if let Some(y) = y {
        header.extend((0..y.cols()).map(|i| format!("y{i}")));
    }
    w.write_record(&header)?;
    for i in 0..x.rows() {
        let mut rec: Vec<String> = x.row(i).iter().map(|&v| format_number(v)).collect();
        if let Some(y) = y {
            rec.extend(y.row(i).iter().map(|&v| format_number(v)));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn save_csv_instance(inst: &DomainAdaptationInstance, paths: &CsvPaths) -> Result<()> {
    write_split(&paths.source, &inst.source.x, Some(&inst.source.y))?;
    write_split(&paths.target, &inst.target_x, None)?;
    write_split(
        &paths.target_eval,
        &inst.target_eval.x,
        Some(&inst.target_eval.y),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert_abs_diff_eq!(sinc(1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sinc(0.5), 2.0 / PI, epsilon = 1e-15);
    }

    #[test]
    fn sinc_is_deterministic() {
        let cfg = SincShift::new(50, 40, 30, 11);
        assert_eq!(
            make_sinc_shift(&cfg).unwrap(),
            make_sinc_shift(&cfg).unwrap()
        );
        let other = SincShift::new(50, 40, 30, 12);
        assert_ne!(
            make_sinc_shift(&cfg).unwrap(),
            make_sinc_shift(&other).unwrap()
        );
    }

    #[test]
    fn sinc_source_moments() {
        for scale in [SincScale::Variance, SincScale::BothStd] {
            let cfg = SincShift {
                scale,
                ..SincShift::new(4000, 10, 10, 5)
            };
            let inst = make_sinc_shift(&cfg).unwrap();
            let n = inst.source.len() as f64;
            let mean = inst.source.x.as_slice().iter().sum::<f64>() / n;
            let sd = scale.source_std();
            assert!(
                (mean - 1.0).abs() <= 3.0 * sd / n.sqrt(),
                "{scale:?}: {mean}"
            );
            let var = inst
                .source
                .x
                .as_slice()
                .iter()
                .map(|x| (x - mean).powi(2))
                .sum::<f64>()
                / n;
            assert!((var.sqrt() - sd).abs() < 0.05 * sd);
        }
    }

    #[test]
    fn sinc_clean_labels_are_regression_function() {
        let inst = make_sinc_shift(&SincShift::new(5, 5, 20, 1)).unwrap();
        let clean = inst.target_eval_clean.unwrap();
        for (x, c) in inst.target_eval.x.iter_rows().zip(clean.iter_rows()) {
            assert_eq!(c[0], sinc(x[0]));
        }
    }

    #[test]
    fn noiseless_moons_lie_on_arcs() {
        let mut r = rng::seeded(1);
        let (pts, labels) = moons_points(101, 0.0, &mut r);
        for (p, l) in pts.iter().zip(&labels) {
            let (cx, cy) = if *l == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let rad = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
            assert_abs_diff_eq!(rad, 1.0, epsilon = 1e-12);
            if *l == 0 {
                assert!(p[1] >= -1e-12);
            } else {
                assert!(p[1] <= 0.5 + 1e-12);
            }
        }
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 51);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 50);
    }

    #[test]
    fn moons_target_is_affine_image() {
        let cfg = MoonsShift::new(20, 33, 10, 0.1, 8);
        let inst = make_transformed_moons(&cfg).unwrap();
        let mut r = rng::seeded(rng::derive(cfg.seed, MOONS_TARGET_STREAM));
        let (raw, _) = moons_points(33, 0.1, &mut r);
        for (t, p) in inst.target_x.iter_rows().zip(&raw) {
            let back = cfg.transform.inverse([t[0], t[1]]);
            assert_abs_diff_eq!(back[0], p[0], epsilon = 1e-9);
            assert_abs_diff_eq!(back[1], p[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn moons_labels_follow_the_preimage() {
        // At zero noise the class of a target point is the class of the arc
        // its pre-image lies on.
        let cfg = MoonsShift::new(10, 10, 200, 0.0, 3);
        let inst = make_transformed_moons(&cfg).unwrap();
        for (x, l) in inst
            .target_eval
            .x
            .iter_rows()
            .zip(inst.target_eval.class_labels())
        {
            let p = cfg.transform.inverse([x[0], x[1]]);
            let on_outer = (p[0].hypot(p[1]) - 1.0).abs() < 1e-9 && p[1] >= -1e-9;
            assert_eq!(l == 0, on_outer);
        }
    }

    #[test]
    fn moons_class_balance() {
        for n in [1, 2, 7, 100] {
            let inst = make_transformed_moons(&MoonsShift::new(n, 5, 5, 0.1, 0)).unwrap();
            let c0 = inst
                .source
                .class_labels()
                .iter()
                .filter(|&&l| l == 0)
                .count();
            assert_eq!(c0, n.div_ceil(2));
        }
    }

    fn paths(dir: &Path) -> CsvPaths {
        CsvPaths {
            source: dir.join("source.csv"),
            target: dir.join("target.csv"),
            target_eval: dir.join("eval.csv"),
        }
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = paths(dir.path());
        let inst = make_transformed_moons(&MoonsShift::new(30, 20, 10, 0.1, 4)).unwrap();
        save_csv_instance(&inst, &p).unwrap();
        let back = load_csv_instance(&p).unwrap();
        assert_eq!(back.source, inst.source);
        assert_eq!(back.target_x, inst.target_x);
        assert_eq!(back.target_eval, inst.target_eval);
    }

    #[test]
    fn csv_small_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = paths(dir.path());
        std::fs::write(&p.source, "x0,y0\n1.0,2.0\n3.0,4.0\n").unwrap();
        std::fs::write(&p.target, "x0\n0.5\n").unwrap();
        std::fs::write(&p.target_eval, "x0,y0\n0.5,1.0\n").unwrap();
        let inst = load_csv_instance(&p).unwrap();
        assert_eq!(inst.source.len(), 2);
        assert_eq!(inst.source.y.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn csv_error_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let p = paths(dir.path());
        std::fs::write(&p.target, "x0\n0.5\n").unwrap();
        std::fs::write(&p.target_eval, "x0,y0\n0.5,1.0\n").unwrap();

        std::fs::write(&p.source, "x0,y0\n1.0,2.0\n3.0\n").unwrap();
        match load_csv_instance(&p) {
            Err(Error::ColumnCount { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }

        std::fs::write(&p.source, "x0,y0\n1.0,abc\n").unwrap();
        match load_csv_instance(&p) {
            Err(Error::ParseNumber { line, value, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }

        std::fs::remove_file(&p.source).unwrap();
        assert!(matches!(
            load_csv_instance(&p),
            Err(Error::MissingFile { .. })
        ));

        std::fs::write(&p.source, "x0,x1,y0\n1,2,3\n").unwrap();
        assert!(matches!(
            load_csv_instance(&p),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn moons_density_integrates_to_one() {
        let ratio = MoonsShift::new(10, 10, 10, 0.2, 0)
            .density_ratio(50.0)
            .unwrap();
        let h = 0.02;
        let mut total = 0.0;
        let mut x = -2.0;
        while x < 3.0 {
            let mut y = -1.5;
            while y < 2.0 {
                total += ratio.log_source_density([x + h / 2.0, y + h / 2.0]).exp() * h * h;
                y += h;
            }
            x += h;
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 2e-3);
    }

    #[test]
    fn moons_ratio_matches_fine_quadrature() {
        // Independent evaluation with 8x more nodes and plain summation.
        let fine = |p: [f64; 2], s: f64| {
            let k = 4096;
            let mut tot = 0.0;
            for i in 0..k {
                let t = PI * (i as f64 + 0.5) / k as f64;
                for a in [[t.cos(), t.sin()], [1.0 - t.cos(), 0.5 - t.sin()]] {
                    tot += (-((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)) / (2.0 * s * s)).exp();
                }
            }
            tot
        };
        let cfg = MoonsShift::new(10, 10, 10, 0.25, 0);
        let ratio = cfg.density_ratio(1e6).unwrap();
        for p in [[0.0, 0.5], [1.0, 0.0], [0.5, 0.25], [1.5, 1.0]] {
            let expected = fine(cfg.transform.inverse(p), 0.25) / fine(p, 0.25);
            assert_abs_diff_eq!(ratio.weight(&p) / expected, 1.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn moons_ratio_needs_noise() {
        assert!(MoonsShift::new(10, 10, 10, 0.0, 0)
            .density_ratio(50.0)
            .is_err());
        assert!(MoonsShift::new(10, 10, 10, 0.1, 0)
            .density_ratio(0.0)
            .is_err());
    }
}
