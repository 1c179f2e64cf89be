//! Conditional class-probability models `P(I | F)`: logistic regression,
//! K-nearest-neighbours, quadratic discriminant analysis, and the binary
//! "diverse density" model. Every fitted model maps a feature vector to
//! per-class log-probabilities that exponentiate to a distribution.

pub mod diverse_density;
pub mod knn;
pub mod logistic;
pub(crate) mod optim;
pub mod qda;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use diverse_density::DiverseDensityParams;
pub use knn::KnnParams;
pub use logistic::LogisticParams;
pub use qda::QdaParams;

use crate::error::{MilError, Result};
use crate::labels::{Label, LabelDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Logistic,
    Knn,
    Qda,
    DiverseDensity,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Logistic,
        ClassifierKind::Knn,
        ClassifierKind::Qda,
        ClassifierKind::DiverseDensity,
    ];
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ClassifierKind::Logistic => "lr",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Qda => "qda",
            ClassifierKind::DiverseDensity => "dd",
        };
        f.write_str(name)
    }
}

impl FromStr for ClassifierKind {
    type Err = MilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(ClassifierKind::Logistic),
            "knn" => Ok(ClassifierKind::Knn),
            "qda" => Ok(ClassifierKind::Qda),
            "dd" => Ok(ClassifierKind::DiverseDensity),
            other => Err(MilError::Config(format!(
                "unknown classifier '{other}' (expected lr, knn, qda, or dd)"
            ))),
        }
    }
}

/// Tunables for the classifier fits. The defaults follow the evaluation
/// protocol: `K = 7` neighbours with add-one smoothing, ridge `1e−4`, and up
/// to 25 diverse-density starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub knn_k: usize,
    pub knn_smoothing: f64,
    pub lr_ridge: f64,
    pub lr_tol: f64,
    pub lr_max_iter: usize,
    pub dd_max_starts: usize,
    pub dd_tol: f64,
    pub dd_max_iter: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            knn_k: 7,
            knn_smoothing: 1.0,
            lr_ridge: 1e-4,
            lr_tol: 1e-6,
            lr_max_iter: 10_000,
            dd_max_starts: 25,
            dd_tol: 1e-6,
            dd_max_iter: 2_000,
        }
    }
}

/// A fitted conditional distribution over instance labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ClassProbModel {
    Logistic(LogisticParams),
    Knn(KnnParams),
    Qda(QdaParams),
    DiverseDensity(DiverseDensityParams),
}

impl ClassProbModel {
    pub fn fit(
        kind: ClassifierKind,
        samples: &[&[f64]],
        labels: &[Label],
        domain: LabelDomain,
        config: &ClassifierConfig,
    ) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(MilError::DimensionMismatch {
                context: "classifier labels".into(),
                expected: samples.len(),
                got: labels.len(),
            });
        }
        if samples.len() < domain.size() {
            return Err(MilError::InsufficientData {
                context: format!("{kind} classifier fit"),
                got: samples.len(),
                need: domain.size(),
            });
        }
        let p = samples[0].len();
        for row in samples {
            if row.len() != p {
                return Err(MilError::DimensionMismatch {
                    context: "classifier fit".into(),
                    expected: p,
                    got: row.len(),
                });
            }
        }
        for &l in labels {
            domain.check(l)?;
        }
        match kind {
            ClassifierKind::Logistic => Ok(ClassProbModel::Logistic(logistic::fit_logistic(
                samples,
                labels,
                domain,
                config.lr_ridge,
                config.lr_tol,
                config.lr_max_iter,
            )?)),
            ClassifierKind::Knn => Ok(ClassProbModel::Knn(KnnParams::fit(
                samples,
                labels,
                domain,
                config.knn_k,
                config.knn_smoothing,
            ))),
            ClassifierKind::Qda => Ok(ClassProbModel::Qda(QdaParams::fit(samples, labels, domain)?)),
            ClassifierKind::DiverseDensity => {
                if domain.t() != 2 {
                    return Err(MilError::Unsupported(format!(
                        "diverse density requires exactly 2 classes, domain has {}",
                        domain.t()
                    )));
                }
                Ok(ClassProbModel::DiverseDensity(
                    diverse_density::fit_diverse_density(
                        samples,
                        labels,
                        config.dd_max_starts,
                        config.dd_tol,
                        config.dd_max_iter,
                    )?,
                ))
            }
        }
    }

    /// Per-class log-probabilities (length `t`).
    pub fn predict_log_proba(&self, f: &[f64]) -> Vec<f64> {
        match self {
            ClassProbModel::Logistic(m) => m.predict_log_proba(f),
            ClassProbModel::Knn(m) => m.predict_log_proba(f),
            ClassProbModel::Qda(m) => m.predict_log_proba(f),
            ClassProbModel::DiverseDensity(m) => m.predict_log_proba(f),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            ClassProbModel::Logistic(m) => m.n_classes(),
            ClassProbModel::Knn(m) => m.n_classes(),
            ClassProbModel::Qda(m) => m.n_classes(),
            ClassProbModel::DiverseDensity(_) => 2,
        }
    }
}
