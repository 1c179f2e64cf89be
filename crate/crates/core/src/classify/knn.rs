//! K-nearest-neighbour class probabilities.
//!
//! Euclidean distance; distance ties break toward the lower support index.
//! Neighbour counts are Laplace-smoothed so no class ever gets probability
//! zero: `P(i) = (count_i + α) / (k + tα)`.

use serde::{Deserialize, Serialize};

use crate::labels::{Label, LabelDomain};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnParams {
    support: Vec<Vec<f64>>,
    labels: Vec<Label>,
    k: usize,
    smoothing: f64,
    n_classes: usize,
}

impl KnnParams {
    pub(crate) fn fit(
        samples: &[&[f64]],
        labels: &[Label],
        domain: LabelDomain,
        k: usize,
        smoothing: f64,
    ) -> Self {
        KnnParams {
            support: samples.iter().map(|r| r.to_vec()).collect(),
            labels: labels.to_vec(),
            k: k.clamp(1, samples.len()),
            smoothing,
            n_classes: domain.size(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn predict_log_proba(&self, f: &[f64]) -> Vec<f64> {
        let mut order: Vec<(f64, usize)> = self
            .support
            .iter()
            .enumerate()
            .map(|(idx, point)| {
                let d2: f64 = point
                    .iter()
                    .zip(f)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, idx)
            })
            .collect();
        order.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));

        let mut counts = vec![0usize; self.n_classes];
        for &(_, idx) in order.iter().take(self.k) {
            counts[(self.labels[idx] - 1) as usize] += 1;
        }
        let denom = self.k as f64 + self.n_classes as f64 * self.smoothing;
        counts
            .iter()
            .map(|&c| ((c as f64 + self.smoothing) / denom).ln())
            .collect()
    }
}
