//! Label alphabet and the compatibility/feasibility rules shared by every
//! model structure.
//!
//! Labels are the integers `1..=t` with `1` meaning "normal". An instance
//! label `i` is *compatible* with a bag label `b` iff `i ∈ {1} ∪ {b}`: a bag
//! may only contain normal instances and instances of its own class. A joint
//! labelling is *feasible* iff some bag label is compatible with all of it,
//! i.e. the non-normal labels take at most one distinct value.

use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};

/// Instance or bag label. Valid labels are `1..=t`; `0` is reserved as the
/// infeasibility marker returned by [`bag_label_of`].
pub type Label = u32;

/// The bag "label" assigned to infeasible labellings. Never a member of the
/// label domain.
pub const INFEASIBLE: Label = 0;

/// The designated normal label, compatible with every bag label.
pub const NORMAL: Label = 1;

/// The label alphabet `{1..t}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDomain {
    t: u32,
}

impl LabelDomain {
    /// A domain with `t` classes. Fails if `t < 2`.
    pub fn new(t: u32) -> Result<Self> {
        if t < 2 {
            return Err(MilError::InvalidInput(format!(
                "label domain needs at least 2 classes, got {t}"
            )));
        }
        Ok(LabelDomain { t })
    }

    /// Number of classes.
    pub fn t(&self) -> u32 {
        self.t
    }

    /// Number of classes as a `usize`, for indexing.
    pub fn size(&self) -> usize {
        self.t as usize
    }

    /// Iterator over all labels `1..=t`.
    pub fn labels(&self) -> impl Iterator<Item = Label> {
        1..=self.t
    }

    pub fn contains(&self, label: Label) -> bool {
        (1..=self.t).contains(&label)
    }

    /// Validates that `label` lies in `1..=t`.
    pub fn check(&self, label: Label) -> Result<()> {
        if self.contains(label) {
            Ok(())
        } else {
            Err(MilError::InvalidLabel {
                label,
                t: self.t,
            })
        }
    }

    /// Zero-based index of a label, for table lookups. The label must be in
    /// the domain.
    pub fn index_of(&self, label: Label) -> usize {
        debug_assert!(self.contains(label));
        (label - 1) as usize
    }

    /// Inverse of [`LabelDomain::index_of`].
    pub fn label_at(&self, index: usize) -> Label {
        debug_assert!(index < self.size());
        index as Label + 1
    }
}

/// True iff instance label `i` may occur in a bag labelled `b`,
/// i.e. `i ∈ {1} ∪ {b}`.
pub fn is_compatible(i: Label, b: Label, domain: LabelDomain) -> Result<bool> {
    domain.check(i)?;
    domain.check(b)?;
    Ok(i == NORMAL || i == b)
}

/// True iff some bag label is compatible with every entry of `labels`.
pub fn is_feasible(labels: &[Label], domain: LabelDomain) -> Result<bool> {
    Ok(bag_label_of(labels, domain)? != INFEASIBLE)
}

/// The bag label determined by a joint instance labelling: the maximum entry
/// when the labelling is feasible, [`INFEASIBLE`] (0) otherwise.
pub fn bag_label_of(labels: &[Label], domain: LabelDomain) -> Result<Label> {
    if labels.is_empty() {
        return Err(MilError::InvalidInput(
            "bag_label_of requires a non-empty label sequence".into(),
        ));
    }
    let mut abnormal: Option<Label> = None;
    for &label in labels {
        domain.check(label)?;
        if label == NORMAL {
            continue;
        }
        match abnormal {
            None => abnormal = Some(label),
            Some(seen) if seen == label => {}
            Some(_) => return Ok(INFEASIBLE),
        }
    }
    Ok(abnormal.unwrap_or(NORMAL))
}
