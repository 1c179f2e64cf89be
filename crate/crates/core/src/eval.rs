//! Evaluation protocol: leave-one-bag-out cross-validation with optional
//! per-fold PCA preprocessing, bag- and instance-level accuracy, the
//! full-dataset maximized log-likelihood, and a non-MIL baseline that trains
//! on bag labels directly and votes.
//!
//! PCA is always fitted on training bags only, never on the held-out bag,
//! and gold instance labels are used for scoring exclusively. Folds whose
//! training set lacks one of the dataset's bag classes (or whose component
//! fit runs out of per-class data) are excluded as degenerate and counted in
//! the report rather than failing the run.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::classify::{ClassProbModel, ClassifierConfig, ClassifierKind};
use crate::dataset::{Bag, Dataset};
use crate::error::{MilError, Result};
use crate::labels::{Label, LabelDomain, NORMAL};
use crate::trainer::{train, EmConfig};

/// Features with z-scored standard deviation below this are dropped before
/// the eigendecomposition.
const CONSTANT_FEATURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// When set, z-score + PCA at this retained-variance fraction is fitted
    /// per fold on the training instances.
    pub pca_variance: Option<f64>,
}

/// A z-score + principal-component projection fitted on pooled instances.
#[derive(Debug, Clone)]
pub struct PcaTransform {
    kept: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// `q` orthonormal rows over the kept features.
    components: Vec<Vec<f64>>,
    retained_variance: f64,
    dropped_features: usize,
}

impl PcaTransform {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn retained_variance(&self) -> f64 {
        self.retained_variance
    }

    /// Count of constant features dropped before the decomposition.
    pub fn dropped_features(&self) -> usize {
        self.dropped_features
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .kept
            .iter()
            .enumerate()
            .map(|(i, &k)| (f[k] - self.center[i]) / self.scale[i])
            .collect();
        self.components
            .iter()
            .map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transform_dataset(&self, dataset: &Dataset) -> Result<Dataset> {
        let bags = dataset
            .bags()
            .iter()
            .map(|bag| {
                let instances = bag.instances().iter().map(|f| self.apply(f)).collect();
                let mut out = Bag::new(bag.id(), bag.bag_label(), instances)?;
                if let Some(labels) = bag.latent_labels() {
                    out.set_latent_labels(labels.to_vec())?;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(dataset.domain(), bags)
    }
}

/// Z-scores the pooled instances, eigendecomposes their correlation matrix,
/// and keeps the smallest leading set of components whose cumulative
/// variance fraction reaches `variance_threshold`.
pub fn fit_pca(instances: &[&[f64]], variance_threshold: f64) -> Result<PcaTransform> {
    if instances.len() < 2 {
        return Err(MilError::InsufficientData {
            context: "pca fit".into(),
            got: instances.len(),
            need: 2,
        });
    }
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(MilError::Config(format!(
            "pca variance threshold must lie in (0, 1], got {variance_threshold}"
        )));
    }
    let n = instances.len();
    let p = instances[0].len();

    let mut kept = Vec::new();
    let mut center = Vec::new();
    let mut scale = Vec::new();
    for k in 0..p {
        let mean = instances.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        let var = instances.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd > CONSTANT_FEATURE_TOL {
            kept.push(k);
            center.push(mean);
            scale.push(sd);
        }
    }
    if kept.is_empty() {
        return Err(MilError::InvalidInput(
            "all features are constant; nothing to decompose".into(),
        ));
    }

    let k = kept.len();
    let z = DMatrix::<f64>::from_fn(n, k, |r, c| {
        (instances[r][kept[c]] - center[c]) / scale[c]
    });
    let corr = z.transpose() * &z / n as f64;
    let eigen = SymmetricEigen::new(corr);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let max_eig = eigen.eigenvalues[order[0]].max(0.0);
    let values: Vec<f64> = order
        .iter()
        .map(|&i| {
            let v = eigen.eigenvalues[i];
            // numerical dust in the null space counts as exactly zero
            if v < 1e-12 * max_eig {
                0.0
            } else {
                v
            }
        })
        .collect();
    let total: f64 = values.iter().sum();
    let mut cumulative = 0.0;
    let mut q = values.len();
    for (i, &v) in values.iter().enumerate() {
        cumulative += v;
        if cumulative >= variance_threshold * total {
            q = i + 1;
            break;
        }
    }
    let retained_variance = values[..q].iter().sum::<f64>() / total;

    let components = order[..q]
        .iter()
        .map(|&i| {
            let col = eigen.eigenvectors.column(i);
            let mut row: Vec<f64> = col.iter().copied().collect();
            // canonical sign: the largest-magnitude loading is positive
            let lead = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).expect("finite"))
                .map(|(i, _)| i)
                .expect("non-empty");
            if row[lead] < 0.0 {
                row.iter_mut().for_each(|x| *x = -*x);
            }
            row
        })
        .collect();

    Ok(PcaTransform {
        kept,
        center,
        scale,
        components,
        retained_variance,
        dropped_features: p - k,
    })
}

/// One held-out bag's outcome.
#[derive(Debug, Clone)]
pub struct FoldPrediction {
    pub bag_id: String,
    pub true_label: Label,
    pub predicted_label: Label,
    pub instance_labels: Vec<Label>,
    /// Per-candidate joint log-scores for model folds; vote counts for the
    /// non-MIL baseline.
    pub label_scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub bag_accuracy: f64,
    /// Present when every bag carries gold instance labels.
    pub instance_accuracy: Option<f64>,
    /// Hard log-likelihood of one training run on the full dataset; absent
    /// for the non-MIL baseline.
    pub train_loglik: Option<f64>,
    pub folds: Vec<FoldPrediction>,
    /// Rows are truth, columns are predictions.
    pub bag_confusion: Vec<Vec<usize>>,
    pub instance_confusion: Option<Vec<Vec<usize>>>,
    pub evaluated_folds: usize,
    pub degenerate_folds: usize,
    /// Component count of the full-dataset PCA, when PCA is enabled.
    pub pca_components: Option<usize>,
}

enum FoldOutcome {
    Evaluated(FoldPrediction),
    Degenerate,
}

/// Leave-one-bag-out evaluation of an EM-trained model.
pub fn leave_one_bag_out(
    dataset: &Dataset,
    config: &EmConfig,
    options: &EvalOptions,
) -> Result<EvalReport> {
    check_eval_input(dataset)?;
    let outcomes: Vec<FoldOutcome> = (0..dataset.len())
        .into_par_iter()
        .map(|held_out| run_model_fold(dataset, config, options, held_out))
        .collect::<Result<_>>()?;

    // Table-style reporting uses a single full-dataset fit for the maximized
    // log-likelihood (and the PCA width, when enabled).
    let mut train_loglik = None;
    let mut pca_components = None;
    match prepare_training_view(dataset, None, options) {
        Ok((full, pca)) => {
            pca_components = pca.as_ref().map(PcaTransform::n_components);
            match train(&full, config) {
                Ok(result) => train_loglik = result.loglik_trajectory.last().copied(),
                Err(e) if e.is_insufficient_data() => {}
                Err(e) => return Err(e),
            }
        }
        Err(e) if e.is_insufficient_data() => {}
        Err(e) => return Err(e),
    }

    Ok(assemble_report(
        dataset,
        outcomes,
        train_loglik,
        pca_components,
    ))
}

/// The non-MIL baseline: QDA trained as if every instance carried its bag's
/// label, with held-out bags labelled by majority vote over per-instance
/// predictions (vote ties toward the lower label).
pub fn non_mil_baseline(dataset: &Dataset, options: &EvalOptions) -> Result<EvalReport> {
    check_eval_input(dataset)?;
    let outcomes: Vec<FoldOutcome> = (0..dataset.len())
        .into_par_iter()
        .map(|held_out| run_baseline_fold(dataset, options, held_out))
        .collect::<Result<_>>()?;
    Ok(assemble_report(dataset, outcomes, None, None))
}

fn check_eval_input(dataset: &Dataset) -> Result<()> {
    if !dataset.fully_labeled() {
        return Err(MilError::InvalidState(
            "evaluation requires a bag label on every bag".into(),
        ));
    }
    if dataset.len() < 2 {
        return Err(MilError::InsufficientData {
            context: "leave-one-bag-out".into(),
            got: dataset.len(),
            need: 2,
        });
    }
    Ok(())
}

/// Builds the training dataset for a fold (all bags, or all but one) and
/// applies PCA fitted on those training instances only.
fn prepare_training_view(
    dataset: &Dataset,
    held_out: Option<usize>,
    options: &EvalOptions,
) -> Result<(Dataset, Option<PcaTransform>)> {
    let bags: Vec<Bag> = dataset
        .bags()
        .iter()
        .enumerate()
        .filter(|(idx, _)| Some(*idx) != held_out)
        .map(|(_, bag)| bag.clone())
        .collect();
    let train_set = Dataset::new(dataset.domain(), bags)?;
    match options.pca_variance {
        None => Ok((train_set, None)),
        Some(threshold) => {
            let pca = fit_pca(&train_set.pooled_instances(), threshold)?;
            Ok((pca.transform_dataset(&train_set)?, Some(pca)))
        }
    }
}

fn training_classes_missing(dataset: &Dataset, held_out: usize) -> bool {
    let domain = dataset.domain();
    let mut full = vec![false; domain.size()];
    let mut fold = vec![false; domain.size()];
    for (idx, bag) in dataset.bags().iter().enumerate() {
        let b = domain.index_of(bag.bag_label().expect("checked labeled"));
        full[b] = true;
        if idx != held_out {
            fold[b] = true;
        }
    }
    full.iter().zip(&fold).any(|(f, t)| *f && !*t)
}

fn run_model_fold(
    dataset: &Dataset,
    config: &EmConfig,
    options: &EvalOptions,
    held_out: usize,
) -> Result<FoldOutcome> {
    if training_classes_missing(dataset, held_out) {
        return Ok(FoldOutcome::Degenerate);
    }
    let (train_set, pca) = match prepare_training_view(dataset, Some(held_out), options) {
        Ok(v) => v,
        Err(e) if e.is_insufficient_data() => return Ok(FoldOutcome::Degenerate),
        Err(e) => return Err(e),
    };
    let result = match train(&train_set, config) {
        Ok(r) => r,
        Err(e) if e.is_insufficient_data() => return Ok(FoldOutcome::Degenerate),
        Err(e) => return Err(e),
    };

    let test_bag = &dataset.bags()[held_out];
    let instances: Vec<Vec<f64>> = match &pca {
        Some(pca) => test_bag.instances().iter().map(|f| pca.apply(f)).collect(),
        None => test_bag.instances().to_vec(),
    };
    let inference = result.model.infer(&instances);
    Ok(FoldOutcome::Evaluated(FoldPrediction {
        bag_id: test_bag.id().to_string(),
        true_label: test_bag.bag_label().expect("checked labeled"),
        predicted_label: inference.bag_label,
        instance_labels: inference.instance_labels,
        label_scores: inference.label_scores,
    }))
}

fn run_baseline_fold(
    dataset: &Dataset,
    options: &EvalOptions,
    held_out: usize,
) -> Result<FoldOutcome> {
    if training_classes_missing(dataset, held_out) {
        return Ok(FoldOutcome::Degenerate);
    }
    let (train_set, pca) = match prepare_training_view(dataset, Some(held_out), options) {
        Ok(v) => v,
        Err(e) if e.is_insufficient_data() => return Ok(FoldOutcome::Degenerate),
        Err(e) => return Err(e),
    };

    let domain = dataset.domain();
    let samples = train_set.pooled_instances();
    let labels: Vec<Label> = train_set
        .bags()
        .iter()
        .flat_map(|bag| {
            let b = bag.bag_label().expect("checked labeled");
            std::iter::repeat(b).take(bag.len())
        })
        .collect();
    let qda = match ClassProbModel::fit(
        ClassifierKind::Qda,
        &samples,
        &labels,
        domain,
        &ClassifierConfig::default(),
    ) {
        Ok(m) => m,
        Err(e) if e.is_insufficient_data() => return Ok(FoldOutcome::Degenerate),
        Err(e) => return Err(e),
    };

    let test_bag = &dataset.bags()[held_out];
    let mut votes = vec![0usize; domain.size()];
    let mut instance_labels = Vec::with_capacity(test_bag.len());
    for f in test_bag.instances() {
        let projected;
        let f = match &pca {
            Some(pca) => {
                projected = pca.apply(f);
                projected.as_slice()
            }
            None => f.as_slice(),
        };
        let lp = qda.predict_log_proba(f);
        let mut best = NORMAL;
        let mut best_score = f64::NEG_INFINITY;
        for label in domain.labels() {
            let score = lp[domain.index_of(label)];
            if score > best_score {
                best_score = score;
                best = label;
            }
        }
        votes[domain.index_of(best)] += 1;
        instance_labels.push(best);
    }
    let mut predicted = NORMAL;
    let mut best_votes = 0;
    for label in domain.labels() {
        let v = votes[domain.index_of(label)];
        if v > best_votes {
            best_votes = v;
            predicted = label;
        }
    }

    Ok(FoldOutcome::Evaluated(FoldPrediction {
        bag_id: test_bag.id().to_string(),
        true_label: test_bag.bag_label().expect("checked labeled"),
        predicted_label: predicted,
        instance_labels,
        label_scores: votes.iter().map(|&v| v as f64).collect(),
    }))
}

fn assemble_report(
    dataset: &Dataset,
    outcomes: Vec<FoldOutcome>,
    train_loglik: Option<f64>,
    pca_components: Option<usize>,
) -> EvalReport {
    let domain = dataset.domain();
    let t = domain.size();
    let has_gold = dataset.has_latent_labels();

    let mut folds = Vec::new();
    let mut degenerate_folds = 0;
    let mut bag_correct = 0;
    let mut bag_confusion = vec![vec![0usize; t]; t];
    let mut instance_correct = 0usize;
    let mut instance_total = 0usize;
    let mut instance_confusion = vec![vec![0usize; t]; t];

    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            FoldOutcome::Degenerate => degenerate_folds += 1,
            FoldOutcome::Evaluated(prediction) => {
                bag_confusion[domain.index_of(prediction.true_label)]
                    [domain.index_of(prediction.predicted_label)] += 1;
                if prediction.predicted_label == prediction.true_label {
                    bag_correct += 1;
                }
                if has_gold {
                    let gold = dataset.bags()[idx].latent_labels().expect("has gold");
                    for (&truth, &guess) in gold.iter().zip(&prediction.instance_labels) {
                        instance_confusion[domain.index_of(truth)][domain.index_of(guess)] += 1;
                        if truth == guess {
                            instance_correct += 1;
                        }
                        instance_total += 1;
                    }
                }
                folds.push(prediction);
            }
        }
    }

    let evaluated_folds = folds.len();
    EvalReport {
        bag_accuracy: if evaluated_folds > 0 {
            bag_correct as f64 / evaluated_folds as f64
        } else {
            0.0
        },
        instance_accuracy: (has_gold && instance_total > 0)
            .then(|| instance_correct as f64 / instance_total as f64),
        train_loglik,
        folds,
        bag_confusion,
        instance_confusion: has_gold.then_some(instance_confusion),
        evaluated_folds,
        degenerate_folds,
        pca_components,
    }
}
