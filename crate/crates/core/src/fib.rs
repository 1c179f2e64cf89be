//! The FIB structure: feature vectors generate instance labels through a
//! discriminative classifier, and the joint labelling deterministically
//! yields the bag label (the max rule; infeasible labellings map to the
//! reserved label 0).
//!
//! The model is fully generative: `P(F)` is a density over features (KDE by
//! default, since the pooled marginal is typically multi-modal) and
//! `P(I | F)` is any fitted class-probability model. Features are fully
//! observed, so `P(F)` is fitted once and never changes across EM
//! iterations; only the classifier is refitted.

use serde::{Deserialize, Serialize};

use crate::classify::{ClassProbModel, ClassifierConfig, ClassifierKind};
use crate::dataset::{Bag, Dataset};
use crate::density::{DensityKind, DensityModel};
use crate::error::{MilError, Result};
use crate::labels::{bag_label_of, Label, LabelDomain, NORMAL};
use crate::Inference;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FibParams {
    domain: LabelDomain,
    feature_density: DensityModel,
    classifier: ClassProbModel,
}

impl FibParams {
    /// Fits both components from a dataset with (working or gold) instance
    /// labels. Every bag's labelling must be feasible with the bag's own
    /// label.
    pub fn estimate(
        dataset: &Dataset,
        classifier: ClassifierKind,
        config: &ClassifierConfig,
        density: DensityKind,
    ) -> Result<Self> {
        validate_labelling(dataset)?;
        let feature_density = Self::fit_feature_density(dataset, density)?;
        Ok(FibParams {
            domain: dataset.domain(),
            feature_density,
            classifier: ClassProbModel::fit(
                classifier,
                &dataset.pooled_instances(),
                &pooled_labels(dataset)?,
                dataset.domain(),
                config,
            )?,
        })
    }

    /// Fits `P(F)` on all pooled instances. Features are fully observed, so
    /// this happens once per dataset.
    pub fn fit_feature_density(dataset: &Dataset, density: DensityKind) -> Result<DensityModel> {
        DensityModel::fit(density, &dataset.pooled_instances())
    }

    /// As [`FibParams::estimate`], but reuses a pre-fitted feature density.
    /// The EM loop fits `P(F)` once and threads it through here.
    pub fn estimate_with_density(
        dataset: &Dataset,
        classifier: ClassifierKind,
        config: &ClassifierConfig,
        feature_density: DensityModel,
    ) -> Result<Self> {
        validate_labelling(dataset)?;
        if feature_density.dim() != dataset.dim() {
            return Err(MilError::DimensionMismatch {
                context: "fib feature density".into(),
                expected: dataset.dim(),
                got: feature_density.dim(),
            });
        }
        Ok(FibParams {
            domain: dataset.domain(),
            feature_density,
            classifier: ClassProbModel::fit(
                classifier,
                &dataset.pooled_instances(),
                &pooled_labels(dataset)?,
                dataset.domain(),
                config,
            )?,
        })
    }

    /// Refits the classifier on the dataset's current labels, leaving the
    /// feature density untouched.
    pub fn refit_classifier(
        &mut self,
        dataset: &Dataset,
        classifier: ClassifierKind,
        config: &ClassifierConfig,
    ) -> Result<()> {
        self.classifier = ClassProbModel::fit(
            classifier,
            &dataset.pooled_instances(),
            &pooled_labels(dataset)?,
            self.domain,
            config,
        )?;
        Ok(())
    }

    pub fn domain(&self) -> LabelDomain {
        self.domain
    }

    pub fn feature_density(&self) -> &DensityModel {
        &self.feature_density
    }

    pub fn classifier(&self) -> &ClassProbModel {
        &self.classifier
    }

    pub fn dim(&self) -> usize {
        self.feature_density.dim()
    }

    /// Best feasible labelling for a bag with a known bag label.
    pub fn e_step(&self, bag: &Bag) -> Result<Vec<Label>> {
        let b = bag.bag_label().ok_or_else(|| {
            MilError::InvalidState(format!("bag '{}' has no bag label", bag.id()))
        })?;
        self.domain.check(b)?;
        let log_probs = self.instance_log_probs(bag.instances());
        Ok(best_feasible_labels(&log_probs, b, self.domain).0)
    }

    fn instance_log_probs(&self, instances: &[Vec<f64>]) -> Vec<Vec<f64>> {
        instances
            .iter()
            .map(|f| self.classifier.predict_log_proba(f))
            .collect()
    }

    /// Joint MAP bag and instance labels for an unlabeled bag. Each
    /// candidate bag label is scored by its best feasible labelling's
    /// product of instance probabilities (the deterministic `P(b|i)` factor
    /// is one by construction); ties go to the lower label.
    pub fn infer(&self, instances: &[Vec<f64>]) -> Inference {
        let log_probs = self.instance_log_probs(instances);
        let mut label_scores = Vec::with_capacity(self.domain.size());
        let mut best_labels: Vec<Label> = Vec::new();
        let mut bag_label = NORMAL;
        let mut best = f64::NEG_INFINITY;
        for b in self.domain.labels() {
            let (labels, score) = best_feasible_labels(&log_probs, b, self.domain);
            if score > best {
                best = score;
                bag_label = b;
                best_labels = labels;
            }
            label_scores.push(score);
        }
        Inference {
            bag_label,
            instance_labels: best_labels,
            label_scores,
        }
    }

    /// Hard-assignment log-likelihood `Σ_j [log P(i_j|f_j) + log P(f_j)]`.
    /// Every bag's stored labelling must be feasible with its bag label, so
    /// the deterministic bag-label factor contributes log 1 = 0.
    pub fn log_likelihood(&self, dataset: &Dataset) -> Result<f64> {
        validate_labelling(dataset)?;
        let mut total = 0.0;
        for bag in dataset.bags() {
            let labels = bag.latent_labels().expect("validated above");
            for (&i, f) in labels.iter().zip(bag.instances()) {
                total += self.classifier.predict_log_proba(f)[self.domain.index_of(i)]
                    + self.feature_density.log_pdf(f);
            }
        }
        Ok(total)
    }
}

fn validate_labelling(dataset: &Dataset) -> Result<()> {
    let domain = dataset.domain();
    for bag in dataset.bags() {
        let b = bag.bag_label().ok_or_else(|| {
            MilError::InvalidState(format!("bag '{}' has no bag label", bag.id()))
        })?;
        let labels = bag.latent_labels().ok_or_else(|| {
            MilError::InvalidState(format!("bag '{}' has no instance labels", bag.id()))
        })?;
        if bag_label_of(labels, domain)? != b {
            return Err(MilError::InvalidState(format!(
                "bag '{}' holds an instance labelling that is not feasible for bag label {b}",
                bag.id()
            )));
        }
    }
    Ok(())
}

fn pooled_labels(dataset: &Dataset) -> Result<Vec<Label>> {
    let mut labels = Vec::with_capacity(dataset.n_instances());
    for bag in dataset.bags() {
        let bag_labels = bag.latent_labels().ok_or_else(|| {
            MilError::InvalidState(format!("bag '{}' has no instance labels", bag.id()))
        })?;
        labels.extend_from_slice(bag_labels);
    }
    Ok(labels)
}

/// The best feasible labelling for bag label `b`, maximizing
/// `Σ_j log P(i_j | f_j)` over all labellings with `bag_label_of = b`.
///
/// Two steps: first maximize each instance independently over `{1} ∪ {b}`
/// (ties prefer 1); then, if nothing chose `b`, flip the single instance
/// with the largest gain `log P(b|f_k) − log P(1|f_k)` (ties prefer the
/// lower index). Equivalent to exhaustive search over the feasible set.
///
/// `log_probs[j]` holds the `t` per-class log-probabilities of instance `j`.
pub fn best_feasible_labels(
    log_probs: &[Vec<f64>],
    b: Label,
    domain: LabelDomain,
) -> (Vec<Label>, f64) {
    let normal_idx = domain.index_of(NORMAL);
    if b == NORMAL {
        let score = log_probs.iter().map(|row| row[normal_idx]).sum();
        return (vec![NORMAL; log_probs.len()], score);
    }

    let b_idx = domain.index_of(b);
    let mut labels = Vec::with_capacity(log_probs.len());
    let mut score = 0.0;
    let mut any_b = false;
    for row in log_probs {
        if row[b_idx] > row[normal_idx] {
            labels.push(b);
            score += row[b_idx];
            any_b = true;
        } else {
            labels.push(NORMAL);
            score += row[normal_idx];
        }
    }

    if !any_b {
        // all-normal is infeasible for b ≠ 1: flip the best single instance
        let mut flip = 0;
        let mut best_gain = f64::NEG_INFINITY;
        for (j, row) in log_probs.iter().enumerate() {
            let gain = row[b_idx] - row[normal_idx];
            if gain > best_gain {
                best_gain = gain;
                flip = j;
            }
        }
        labels[flip] = b;
        score += best_gain;
    }
    (labels, score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn domain3() -> LabelDomain {
        LabelDomain::new(3).unwrap()
    }

    fn log3(p: [f64; 3]) -> Vec<f64> {
        p.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn normal_bag_label_forces_all_normal() {
        let probs = vec![log3([0.1, 0.8, 0.1]), log3([0.2, 0.2, 0.6])];
        let (labels, score) = best_feasible_labels(&probs, 1, domain3());
        assert_eq!(labels, vec![1, 1]);
        assert_relative_eq!(score, 0.1f64.ln() + 0.2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn weak_evidence_still_flips_exactly_one_instance() {
        // both instances prefer normal; equal gains tie toward index 0
        let probs = vec![log3([0.9, 0.1, 0.0]), log3([0.9, 0.1, 0.0])];
        let (labels, _) = best_feasible_labels(&probs, 2, domain3());
        assert_eq!(labels, vec![2, 1]);

        // a larger flip gain on the second instance moves the flip there
        let probs = vec![log3([0.9, 0.1, 0.0]), log3([0.8, 0.2, 0.0])];
        let (labels, score) = best_feasible_labels(&probs, 2, domain3());
        assert_eq!(labels, vec![1, 2]);
        assert_relative_eq!(score, 0.9f64.ln() + 0.2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn strong_evidence_keeps_multiple_abnormal_labels() {
        let probs = vec![
            log3([0.1, 0.9, 0.0]),
            log3([0.7, 0.3, 0.0]),
            log3([0.2, 0.8, 0.0]),
        ];
        let (labels, score) = best_feasible_labels(&probs, 2, domain3());
        assert_eq!(labels, vec![2, 1, 2]);
        assert_relative_eq!(
            score,
            0.9f64.ln() + 0.7f64.ln() + 0.8f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn feasible_output_always_matches_the_bag_label() {
        let probs = vec![log3([0.999, 0.0005, 0.0005]); 4];
        for b in 1..=3 {
            let (labels, _) = best_feasible_labels(&probs, b, domain3());
            assert_eq!(bag_label_of(&labels, domain3()).unwrap(), b);
        }
    }
}
