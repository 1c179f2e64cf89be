//! Generative multiple-instance learning (MIL).
//!
//! A *bag* is a set of feature vectors (instances) with one observed label;
//! the per-instance labels are latent. Label `1` is "normal" and is
//! compatible with every bag label; a bag may otherwise contain only
//! instances of its own class. Two generative structures are provided:
//!
//! * [`bif`] — the bag label generates instance labels through a clamped
//!   conditional table, and each instance label generates its feature vector
//!   through a per-class density. Supports sampling, so a fitted model
//!   doubles as a simulator.
//! * [`fib`] — feature vectors generate instance labels through a
//!   discriminative classifier, and the joint labelling determines the bag
//!   label through a deterministic max rule (with `0` marking infeasible
//!   labellings).
//!
//! Both are trained with hard expectation-maximization ([`trainer`]) and
//! evaluated with leave-one-bag-out cross-validation ([`eval`]). Dataset
//! ingestion, synthetic data generation, and model serialization live in
//! [`io`].

pub mod bif;
pub mod classify;
pub mod dataset;
pub mod density;
pub mod error;
pub mod eval;
pub mod fib;
pub mod labels;
pub mod trainer;

pub use dataset::{Bag, Dataset};
pub use error::{MilError, Result};
pub use labels::{bag_label_of, is_compatible, is_feasible, Label, LabelDomain, INFEASIBLE, NORMAL};

/// A joint MAP prediction for one bag: the chosen bag label, its
/// per-instance labels, and the log-score of every candidate bag label.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub bag_label: Label,
    pub instance_labels: Vec<Label>,
    /// Joint log-score per candidate bag label, indexed by label − 1.
    pub label_scores: Vec<f64>,
}
