//! Hard expectation-maximization.
//!
//! Every instance label is initialized to its bag label. Each iteration
//! refits the model components on the current labels (M-step), then assigns
//! every instance its single most likely label given the bag label (E-step),
//! until a full E-step changes no label or the iteration cap is reached.
//! Convergence is the exact label fixed point; there is no likelihood-based
//! tolerance stop and no random restarts.
//!
//! The recorded trajectory is the hard-assignment log-likelihood after each
//! full iteration. For BIF with Gaussian components (exact-MLE M-steps) it
//! is non-decreasing; for KDE, copula, KNN, and DD components no such
//! guarantee exists and the trajectory is informational only.

use serde::{Deserialize, Serialize};

use crate::bif::BifParams;
use crate::classify::{ClassifierConfig, ClassifierKind};
use crate::dataset::Dataset;
use crate::density::DensityKind;
use crate::error::{MilError, Result};
use crate::fib::FibParams;
use crate::labels::{Label, LabelDomain};
use crate::Inference;

/// Which structure to train, and its component choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "lowercase")]
pub enum ModelSpec {
    Bif {
        density: DensityKind,
    },
    Fib {
        density: DensityKind,
        classifier: ClassifierKind,
    },
}

impl ModelSpec {
    pub fn bif(density: DensityKind) -> Self {
        ModelSpec::Bif { density }
    }

    /// FIB with the default multi-dimensional KDE feature density.
    pub fn fib(classifier: ClassifierKind) -> Self {
        ModelSpec::Fib {
            density: DensityKind::Kde,
            classifier,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub spec: ModelSpec,
    pub max_iterations: usize,
    pub classifier: ClassifierConfig,
    pub record_trajectory: bool,
}

impl EmConfig {
    pub fn new(spec: ModelSpec) -> Self {
        EmConfig {
            spec,
            max_iterations: 100,
            classifier: ClassifierConfig::default(),
            record_trajectory: true,
        }
    }
}

/// A trained model of either structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "lowercase")]
pub enum FittedModel {
    Bif(BifParams),
    Fib(FibParams),
}

impl FittedModel {
    pub fn infer(&self, instances: &[Vec<f64>]) -> Inference {
        match self {
            FittedModel::Bif(m) => m.infer(instances),
            FittedModel::Fib(m) => m.infer(instances),
        }
    }

    pub fn domain(&self) -> LabelDomain {
        match self {
            FittedModel::Bif(m) => m.domain(),
            FittedModel::Fib(m) => m.domain(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FittedModel::Bif(m) => m.dim(),
            FittedModel::Fib(m) => m.dim(),
        }
    }

    /// Hard-assignment log-likelihood of a labeled dataset under this model.
    pub fn log_likelihood(&self, dataset: &Dataset) -> Result<f64> {
        match self {
            FittedModel::Bif(m) => m.log_likelihood(dataset),
            FittedModel::Fib(m) => m.log_likelihood(dataset),
        }
    }
}

/// Per-iteration telemetry passed to the progress callback.
#[derive(Debug, Clone, Copy)]
pub struct EmProgress {
    pub iteration: usize,
    pub labels_changed: usize,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub model: FittedModel,
    /// Final per-bag instance labels, in dataset order.
    pub labels: Vec<Vec<Label>>,
    pub iterations: usize,
    pub converged: bool,
    pub loglik_trajectory: Vec<f64>,
}

pub fn train(dataset: &Dataset, config: &EmConfig) -> Result<EmResult> {
    train_with_progress(dataset, config, |_| {})
}

pub fn train_with_progress<F>(
    dataset: &Dataset,
    config: &EmConfig,
    mut progress: F,
) -> Result<EmResult>
where
    F: FnMut(&EmProgress),
{
    if config.max_iterations == 0 {
        return Err(MilError::Config("max_iterations must be at least 1".into()));
    }
    if !dataset.fully_labeled() {
        return Err(MilError::InvalidState(
            "training requires a bag label on every bag".into(),
        ));
    }

    // working copy; instance labels initialized to the bag label
    let mut working = dataset.clone();
    for idx in 0..working.len() {
        let bag = &working.bags()[idx];
        let init = vec![bag.bag_label().expect("checked above"); bag.len()];
        working.set_latent_labels(idx, init)?;
    }

    // FIB's feature density is fitted once; features never change
    let mut feature_density = None;
    if let ModelSpec::Fib { density, .. } = config.spec {
        feature_density = Some(FibParams::fit_feature_density(&working, density)?);
    }

    let mut model: Option<FittedModel> = None;
    let mut trajectory = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;
        let wrap = |e: MilError| MilError::EmIteration {
            iteration: iterations,
            source: Box::new(e),
        };

        // M-step
        let current = match config.spec {
            ModelSpec::Bif { density } => {
                FittedModel::Bif(BifParams::estimate(&working, density).map_err(&wrap)?)
            }
            ModelSpec::Fib { classifier, .. } => match model {
                Some(FittedModel::Fib(mut fib)) => {
                    fib.refit_classifier(&working, classifier, &config.classifier)
                        .map_err(&wrap)?;
                    FittedModel::Fib(fib)
                }
                _ => FittedModel::Fib(
                    FibParams::estimate_with_density(
                        &working,
                        classifier,
                        &config.classifier,
                        feature_density.take().expect("fitted before the loop"),
                    )
                    .map_err(&wrap)?,
                ),
            },
        };

        // E-step
        let mut changed = 0;
        for idx in 0..working.len() {
            let bag = &working.bags()[idx];
            let new_labels = match &current {
                FittedModel::Bif(m) => m.e_step(bag).map_err(&wrap)?,
                FittedModel::Fib(m) => m.e_step(bag).map_err(&wrap)?,
            };
            let old = bag.latent_labels().expect("initialized above");
            changed += new_labels
                .iter()
                .zip(old)
                .filter(|(new, old)| new != old)
                .count();
            working.set_latent_labels(idx, new_labels)?;
        }

        let log_likelihood = current.log_likelihood(&working).map_err(&wrap)?;
        if config.record_trajectory {
            trajectory.push(log_likelihood);
        }
        progress(&EmProgress {
            iteration: iterations,
            labels_changed: changed,
            log_likelihood,
        });
        model = Some(current);

        if changed == 0 {
            converged = true;
            break;
        }
    }

    Ok(EmResult {
        model: model.expect("at least one iteration ran"),
        labels: working
            .bags()
            .iter()
            .map(|b| b.latent_labels().expect("set every iteration").to_vec())
            .collect(),
        iterations,
        converged,
        loglik_trajectory: trajectory,
    })
}
