//! Bag and dataset containers.
//!
//! A bag is an observed (or withheld) bag label plus `m ≥ 1` feature vectors
//! of a shared dimension `p`. `latent_labels` holds per-instance labels: the
//! working assignment during EM, or gold labels kept aside for scoring. A
//! dataset is a non-empty collection of bags over one feature dimension and
//! one label domain.

use crate::error::{MilError, Result};
use crate::labels::{Label, LabelDomain};

#[derive(Debug, Clone)]
pub struct Bag {
    id: String,
    bag_label: Option<Label>,
    instances: Vec<Vec<f64>>,
    latent_labels: Option<Vec<Label>>,
}

impl Bag {
    /// Builds a bag, validating that it holds at least one instance and that
    /// all feature vectors are finite and share one dimension.
    pub fn new(
        id: impl Into<String>,
        bag_label: Option<Label>,
        instances: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        if instances.is_empty() {
            return Err(MilError::InvalidInput(format!(
                "bag '{id}' has no instances"
            )));
        }
        let p = instances[0].len();
        if p == 0 {
            return Err(MilError::InvalidInput(format!(
                "bag '{id}' has zero-dimensional instances"
            )));
        }
        for (j, f) in instances.iter().enumerate() {
            if f.len() != p {
                return Err(MilError::DimensionMismatch {
                    context: format!("instance {j} of bag '{id}'"),
                    expected: p,
                    got: f.len(),
                });
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(MilError::InvalidInput(format!(
                    "instance {j} of bag '{id}' contains a non-finite feature"
                )));
            }
        }
        Ok(Bag {
            id,
            bag_label,
            instances,
            latent_labels: None,
        })
    }

    /// Attaches per-instance labels (gold labels or an EM working state).
    pub fn with_latent_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        self.set_latent_labels(labels)?;
        Ok(self)
    }

    pub fn set_latent_labels(&mut self, labels: Vec<Label>) -> Result<()> {
        if labels.len() != self.len() {
            return Err(MilError::DimensionMismatch {
                context: format!("latent labels of bag '{}'", self.id),
                expected: self.len(),
                got: labels.len(),
            });
        }
        self.latent_labels = Some(labels);
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn bag_label(&self) -> Option<Label> {
        self.bag_label
    }

    pub fn set_bag_label(&mut self, label: Option<Label>) {
        self.bag_label = label;
    }

    pub fn instances(&self) -> &[Vec<f64>] {
        &self.instances
    }

    pub fn latent_labels(&self) -> Option<&[Label]> {
        self.latent_labels.as_deref()
    }

    /// Number of instances `m`.
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Feature dimension `p`.
    pub fn dim(&self) -> usize {
        self.instances[0].len()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    bags: Vec<Bag>,
    p: usize,
    domain: LabelDomain,
}

impl Dataset {
    /// Builds a dataset, validating shared dimension and label ranges.
    pub fn new(domain: LabelDomain, bags: Vec<Bag>) -> Result<Self> {
        if bags.is_empty() {
            return Err(MilError::InvalidInput("dataset has no bags".into()));
        }
        let p = bags[0].dim();
        for bag in &bags {
            if bag.dim() != p {
                return Err(MilError::DimensionMismatch {
                    context: format!("bag '{}'", bag.id()),
                    expected: p,
                    got: bag.dim(),
                });
            }
            if let Some(b) = bag.bag_label() {
                domain.check(b)?;
            }
            if let Some(labels) = bag.latent_labels() {
                for &l in labels {
                    domain.check(l)?;
                }
            }
        }
        Ok(Dataset { bags, p, domain })
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn domain(&self) -> LabelDomain {
        self.domain
    }

    /// Shared feature dimension.
    pub fn dim(&self) -> usize {
        self.p
    }

    /// Number of bags `n`.
    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn n_instances(&self) -> usize {
        self.bags.iter().map(Bag::len).sum()
    }

    /// All instances across bags, in bag order.
    pub fn pooled_instances(&self) -> Vec<&[f64]> {
        self.bags
            .iter()
            .flat_map(|b| b.instances().iter().map(Vec::as_slice))
            .collect()
    }

    /// Replaces the latent labels of one bag.
    pub fn set_latent_labels(&mut self, bag_index: usize, labels: Vec<Label>) -> Result<()> {
        for &l in &labels {
            self.domain.check(l)?;
        }
        let bag = self.bags.get_mut(bag_index).ok_or_else(|| {
            MilError::InvalidInput(format!("bag index {bag_index} out of range"))
        })?;
        bag.set_latent_labels(labels)
    }

    /// True when every bag carries a bag label.
    pub fn fully_labeled(&self) -> bool {
        self.bags.iter().all(|b| b.bag_label().is_some())
    }

    /// True when every bag carries per-instance labels.
    pub fn has_latent_labels(&self) -> bool {
        self.bags.iter().all(|b| b.latent_labels().is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bag_rejects_empty_and_ragged() {
        assert!(Bag::new("a", Some(1), vec![]).is_err());
        assert!(Bag::new("a", Some(1), vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Bag::new("a", Some(1), vec![vec![f64::NAN]]).is_err());
        assert!(Bag::new("a", Some(1), vec![vec![1.0, 2.0]]).is_ok());
    }

    #[test]
    fn latent_label_length_is_checked() {
        let bag = Bag::new("a", Some(1), vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(bag.clone().with_latent_labels(vec![1]).is_err());
        assert!(bag.with_latent_labels(vec![1, 2]).is_ok());
    }

    #[test]
    fn dataset_validates_dimensions_and_labels() {
        let domain = LabelDomain::new(2).unwrap();
        let a = Bag::new("a", Some(1), vec![vec![0.0, 0.0]]).unwrap();
        let b = Bag::new("b", Some(2), vec![vec![1.0]]).unwrap();
        assert!(Dataset::new(domain, vec![a.clone(), b]).is_err());

        let c = Bag::new("c", Some(3), vec![vec![1.0, 1.0]]).unwrap();
        assert!(Dataset::new(domain, vec![a.clone(), c]).is_err());

        let d = Bag::new("d", Some(2), vec![vec![1.0, 1.0]]).unwrap();
        let ds = Dataset::new(domain, vec![a, d]).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.n_instances(), 2);
    }
}
