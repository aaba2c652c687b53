use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::{CsvPaths, SincScale};
use crate::density_ratio::DEFAULT_BOUND;
use crate::error::{Error, Result};
use crate::linalg::DEFAULT_RCOND;
use crate::selection::Loss;

/// Hyper-parameter scaling factors; one model per factor.
pub const LAMBDA_GRID: [f64; 14] = [
    0.0, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 5.0, 10.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iwa,
    Sor,
    Tmv,
    Tmr,
    Tcr,
    Iwv,
    Dev,
    Oracle,
    TargetBest,
    SourceOnly,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Iwa,
        Method::Sor,
        Method::Tmv,
        Method::Tmr,
        Method::Tcr,
        Method::Iwv,
        Method::Dev,
        Method::Oracle,
        Method::TargetBest,
        Method::SourceOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Iwa => "iwa",
            Method::Sor => "sor",
            Method::Tmv => "tmv",
            Method::Tmr => "tmr",
            Method::Tcr => "tcr",
            Method::Iwv => "iwv",
            Method::Dev => "dev",
            Method::Oracle => "oracle",
            Method::TargetBest => "target_best",
            Method::SourceOnly => "source_only",
        }
    }

    /// Methods that produce a real-valued weight per model.
    pub fn is_weighting(self) -> bool {
        matches!(self, Method::Iwa | Method::Sor | Method::Tmr | Method::Tcr)
    }

    /// Methods that only make sense with class labels.
    pub fn needs_classes(self) -> bool {
        matches!(self, Method::Tmv | Method::Tmr | Method::Tcr)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| {
                m.name() == s
                    || (s == "so" && *m == Method::SourceOnly)
                    || (s == "tb" && *m == Method::TargetBest)
            })
            .ok_or_else(|| Error::config("methods", format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Sinc,
    Moons,
    Csv,
}

/// How the model sequence is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Ridge regression on polynomial features of degree `0..l`.
    Polynomial,
    /// Softmax classifiers trained for `round(λ · epochs)` epochs.
    Epochs,
    /// Softmax classifiers trained for `epochs` epochs on source
    /// cross-entropy plus `λ · entropy_weight` times the target prediction
    /// entropy.
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BetaKind {
    /// Exact ratio of the synthetic generator.
    #[default]
    Analytic,
    /// Domain-classifier estimate.
    Learned,
    /// `β ≡ 1`.
    Unit,
}

macro_rules! from_str_via_serde {
    ($t:ty, $field:literal) => {
        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                serde_json::from_value(serde_json::Value::String(s.trim().to_ascii_lowercase()))
                    .map_err(|_| Error::config($field, format!("unknown value {s:?}")))
            }
        }
    };
}

from_str_via_serde!(DatasetKind, "dataset");
from_str_via_serde!(Family, "family");
from_str_via_serde!(BetaKind, "beta");

/// Everything a harness run needs. Optional fields fall back to
/// dataset-dependent defaults, see the `resolved_*` accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub n: usize,
    pub m: usize,
    pub eval_size: usize,
    /// Label noise std for sinc, jitter std for moons.
    pub noise: Option<f64>,
    pub sinc_scale: SincScale,
    pub csv: Option<CsvPaths>,

    pub l: Option<usize>,
    pub family: Option<Family>,
    /// Explicit λ values; overrides the grid subset chosen from `l`.
    pub lambdas: Option<Vec<f64>>,
    /// Polynomial degree of the classifier feature map.
    pub degree: u32,
    pub epochs: usize,
    pub lr: f64,
    pub entropy_weight: f64,
    pub ridge: f64,
    /// Loss scored by iwv and dev.
    pub selection_loss: Loss,

    pub beta: BetaKind,
    pub beta_bound: f64,
    pub beta_degree: u32,
    pub beta_epochs: usize,

    pub rcond: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub out: PathBuf,
    /// Replace the target inputs by the source inputs (no-shift protocol).
    pub source_as_target: bool,

    /// Corrupted-model counts of the sensitivity study.
    pub counts: Vec<usize>,
    pub max_redraws: usize,
    /// Sample sizes `n = m` of the rate check.
    pub rate_sizes: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Sinc,
            n: 1000,
            m: 1000,
            eval_size: 10_000,
            noise: None,
            sinc_scale: SincScale::default(),
            csv: None,
            l: None,
            family: None,
            lambdas: None,
            degree: 3,
            epochs: 500,
            lr: 0.5,
            entropy_weight: 5.0,
            ridge: 1e-6,
            selection_loss: Loss::Squared,
            beta: BetaKind::Analytic,
            beta_bound: DEFAULT_BOUND,
            beta_degree: 2,
            beta_epochs: 1000,
            rcond: DEFAULT_RCOND,
            seeds: vec![0],
            methods: Method::ALL.to_vec(),
            out: PathBuf::from("out"),
            source_as_target: false,
            counts: vec![0, 10, 50, 100],
            max_redraws: 10,
            rate_sizes: vec![250, 1000, 4000],
        }
    }
}

pub const SINC_NOISE: f64 = 0.25;
pub const MOONS_NOISE: f64 = 0.2;

impl ExperimentConfig {
    pub fn sinc() -> Self {
        Self::default()
    }

    pub fn moons() -> Self {
        Self {
            dataset: DatasetKind::Moons,
            eval_size: 2000,
            beta: BetaKind::Learned,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(field_of(&e), e.message()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("file", e.to_string()))
    }

    pub fn resolved_noise(&self) -> f64 {
        self.noise.unwrap_or(match self.dataset {
            DatasetKind::Moons => MOONS_NOISE,
            _ => SINC_NOISE,
        })
    }

    pub fn resolved_family(&self) -> Family {
        self.family.unwrap_or(match self.dataset {
            DatasetKind::Moons => Family::Entropy,
            _ => Family::Polynomial,
        })
    }

    pub fn resolved_l(&self) -> usize {
        self.l
            .or(self.lambdas.as_ref().map(Vec::len))
            .unwrap_or(match self.resolved_family() {
                Family::Polynomial => 5,
                _ => LAMBDA_GRID.len(),
            })
    }

    /// One λ per model. Without explicit values, `l` factors spread evenly
    /// over the grid indices, always keeping `0` first.
    pub fn resolved_lambdas(&self) -> Vec<f64> {
        if let Some(l) = &self.lambdas {
            return l.clone();
        }
        let l = self.resolved_l();
        let last = LAMBDA_GRID.len() - 1;
        if l <= 1 {
            return vec![0.0; l];
        }
        (0..l)
            .map(|i| LAMBDA_GRID[((i * last) as f64 / (l - 1) as f64).round() as usize])
            .collect()
    }

    /// Configured methods plus the source-only and target-best reference
    /// rows, sorted and de-duplicated.
    pub fn effective_methods(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        m.push(Method::SourceOnly);
        m.push(Method::TargetBest);
        m.sort();
        m.dedup();
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.n == 0 || self.m == 0 || self.eval_size == 0 {
            return Err(Error::config("n", "n, m and eval_size must be >= 1"));
        }
        let l = self.resolved_l();
        if l == 0 {
            return Err(Error::config("l", "need at least one model"));
        }
        let family = self.resolved_family();
        if let Some(lams) = &self.lambdas {
            if lams.len() != l {
                return Err(Error::config(
                    "lambdas",
                    format!("{} values for l = {l}", lams.len()),
                ));
            }
            if lams.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::config("lambdas", "values must be finite and >= 0"));
            }
        } else if family != Family::Polynomial && l > LAMBDA_GRID.len() {
            return Err(Error::config(
                "l",
                format!(
                    "at most {} models without explicit lambdas",
                    LAMBDA_GRID.len()
                ),
            ));
        }
        match (self.dataset, family) {
            (DatasetKind::Sinc, Family::Epochs | Family::Entropy) => {
                return Err(Error::config(
                    "family",
                    "classifier families need a classification dataset",
                ))
            }
            (DatasetKind::Moons, Family::Polynomial) => {
                return Err(Error::config("family", "moons needs a classifier family"))
            }
            _ => {}
        }
        if self.dataset == DatasetKind::Csv && self.csv.is_none() {
            return Err(Error::config(
                "csv",
                "dataset = \"csv\" needs [csv] source/target/target_eval paths",
            ));
        }
        if self.dataset == DatasetKind::Csv && self.beta == BetaKind::Analytic {
            return Err(Error::config(
                "beta",
                "the analytic ratio exists only for synthetic datasets",
            ));
        }
        if !(self.rcond >= 0.0 && self.rcond < 1.0) {
            return Err(Error::config(
                "rcond",
                format!("must lie in [0, 1), got {}", self.rcond),
            ));
        }
        if !(self.beta_bound > 0.0 && self.beta_bound.is_finite()) {
            return Err(Error::config(
                "beta_bound",
                format!("must be > 0, got {}", self.beta_bound),
            ));
        }
        let noise = self.resolved_noise();
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::config("noise", format!("must be >= 0, got {noise}")));
        }
        if self.dataset == DatasetKind::Moons && self.beta == BetaKind::Analytic && noise == 0.0 {
            return Err(Error::config(
                "noise",
                "the analytic moons ratio needs noise > 0",
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be > 0"));
        }
        if !(self.entropy_weight >= 0.0 && self.entropy_weight.is_finite()) {
            return Err(Error::config("entropy_weight", "must be >= 0"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::config("ridge", "must be >= 0"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "need at least one method"));
        }
        if self.counts.is_empty() {
            return Err(Error::config("counts", "need at least one count"));
        }
        if self.rate_sizes.len() < 2 || self.rate_sizes.contains(&0) {
            return Err(Error::config("rate_sizes", "need at least two sizes >= 1"));
        }
        Ok(())
    }
}

fn field_of(e: &toml::de::Error) -> String {
    // toml reports unknown or mistyped keys in the message; keep the first
    // backquoted word as the field name.
    let msg = e.message();
    msg.split('`').nth(1).unwrap_or("file").to_string()
}

/// Parses `"0..20"`, `"3"` or `"1,4,9"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seeds", format!("cannot parse {s:?}; use a..b or a,b,c"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect()
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    if s.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    s.split(',').map(str::parse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_subsets() {
        let cfg = ExperimentConfig::moons();
        assert_eq!(cfg.resolved_lambdas(), LAMBDA_GRID.to_vec());
        let cfg = ExperimentConfig {
            l: Some(2),
            ..ExperimentConfig::moons()
        };
        assert_eq!(cfg.resolved_lambdas(), vec![0.0, 10.0]);
        let cfg = ExperimentConfig {
            l: Some(1),
            ..ExperimentConfig::moons()
        };
        assert_eq!(cfg.resolved_lambdas(), vec![0.0]);
    }

    #[test]
    fn seeds_and_methods_parse() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("x").is_err());
        assert_eq!(
            parse_methods("iwa,SOR,tb").unwrap(),
            vec![Method::Iwa, Method::Sor, Method::TargetBest]
        );
        assert!(matches!(
            parse_methods("iwa,foo"),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn validation_names_fields() {
        let field = |cfg: ExperimentConfig| match cfg.validate() {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            field(ExperimentConfig {
                seeds: vec![],
                ..Default::default()
            }),
            "seeds"
        );
        assert_eq!(
            field(ExperimentConfig {
                l: Some(0),
                ..Default::default()
            }),
            "l"
        );
        assert_eq!(
            field(ExperimentConfig {
                rcond: 1.5,
                ..Default::default()
            }),
            "rcond"
        );
        assert_eq!(
            field(ExperimentConfig {
                dataset: DatasetKind::Csv,
                ..Default::default()
            }),
            "csv"
        );
        assert_eq!(
            field(ExperimentConfig {
                family: Some(Family::Entropy),
                ..Default::default()
            }),
            "family"
        );
        assert!(ExperimentConfig::default().validate().is_ok());
        assert!(ExperimentConfig::moons().validate().is_ok());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = ExperimentConfig {
            seeds: vec![1, 2],
            l: Some(3),
            ..ExperimentConfig::moons()
        };
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        let parsed = ExperimentConfig::from_toml_str(
            "dataset = \"moons\"\nn = 300\nmethods = [\"iwa\", \"tmv\"]\n",
        )
        .unwrap();
        assert_eq!(parsed.n, 300);
        assert_eq!(parsed.methods, vec![Method::Iwa, Method::Tmv]);
        assert!(matches!(
            ExperimentConfig::from_toml_str("bogus = 1"),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn effective_methods_add_references() {
        let cfg = ExperimentConfig {
            methods: vec![Method::Oracle],
            ..Default::default()
        };
        assert_eq!(
            cfg.effective_methods(),
            vec![Method::Oracle, Method::TargetBest, Method::SourceOnly]
        );
    }
}
