//! Binary "diverse density" class-probability model.
//!
//! `P(I = 2 | f) = q = exp(−Σ_k s_k² (f_k − w_k)²)`: a bump peaked at the
//! target point `w` with per-dimension scales `s`. Positives are assumed
//! localized near `w`; negatives are only assumed to be far from it. The
//! conditional is Bernoulli, not Gaussian. Fitting maximizes the (clipped)
//! likelihood by gradient ascent from multiple starts, one per positive
//! instance, keeping the best final likelihood (ties: lowest start index).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::classify::optim::minimize;
use crate::error::Result;
use crate::labels::Label;

/// Probability clip applied on both sides, keeping log-likelihoods finite.
pub const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiverseDensityParams {
    target: Vec<f64>,
    scales: Vec<f64>,
}

impl DiverseDensityParams {
    /// The learned target point `w`.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// The learned per-dimension scales `s`.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    fn squared_distance(&self, f: &[f64]) -> f64 {
        self.target
            .iter()
            .zip(&self.scales)
            .zip(f)
            .map(|((&w, &s), &x)| s * s * (x - w) * (x - w))
            .sum()
    }

    /// `[log P(I=1|f), log P(I=2|f)]` with `P(I=2|f)` clipped into
    /// `[1e−12, 1 − 1e−12]`.
    pub fn predict_log_proba(&self, f: &[f64]) -> Vec<f64> {
        let q = (-self.squared_distance(f))
            .exp()
            .clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        vec![(1.0 - q).ln(), q.ln()]
    }
}

pub(crate) fn fit_diverse_density(
    samples: &[&[f64]],
    labels: &[Label],
    max_starts: usize,
    tol: f64,
    max_iter: usize,
) -> Result<DiverseDensityParams> {
    let p = samples[0].len();
    let positive: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 2)
        .map(|(j, _)| j)
        .collect();

    // negative log-likelihood over (w, s) flattened as [w; s]
    let objective = |theta: &DVector<f64>| -> (f64, DVector<f64>) {
        let (w, s) = theta.as_slice().split_at(p);
        let mut value = 0.0;
        let mut grad = DVector::zeros(2 * p);
        for (sample, &label) in samples.iter().zip(labels) {
            let d: f64 = (0..p)
                .map(|k| s[k] * s[k] * (sample[k] - w[k]) * (sample[k] - w[k]))
                .sum();
            let q = (-d).exp();
            // d(loss)/dd, with zero gradient inside the clipped regions
            let dloss_dd = if label == 2 {
                if q <= PROB_CLIP {
                    value += -(PROB_CLIP.ln());
                    0.0
                } else {
                    value += d;
                    1.0
                }
            } else if 1.0 - q <= PROB_CLIP {
                value += -(PROB_CLIP.ln());
                0.0
            } else {
                value -= (1.0 - q).ln();
                -q / (1.0 - q)
            };
            if dloss_dd != 0.0 {
                for k in 0..p {
                    let diff = sample[k] - w[k];
                    grad[k] += dloss_dd * (-2.0 * s[k] * s[k] * diff);
                    grad[p + k] += dloss_dd * (2.0 * s[k] * diff * diff);
                }
            }
        }
        let n = samples.len() as f64;
        (value / n, grad / n)
    };

    // one start per positive instance (evenly strided when there are more
    // positives than starts); all-negative data starts at the feature mean
    let starts: Vec<Vec<f64>> = if positive.is_empty() {
        let mut mean = vec![0.0; p];
        for row in samples {
            for k in 0..p {
                mean[k] += row[k];
            }
        }
        mean.iter_mut().for_each(|m| *m /= samples.len() as f64);
        vec![mean]
    } else {
        let count = positive.len().min(max_starts);
        (0..count)
            .map(|i| samples[positive[i * positive.len() / count]].to_vec())
            .collect()
    };

    let mut best: Option<(f64, DVector<f64>)> = None;
    for start in &starts {
        let mut theta = DVector::zeros(2 * p);
        theta.as_mut_slice()[..p].copy_from_slice(start);
        theta.as_mut_slice()[p..].fill(1.0);
        let outcome = minimize(&objective, theta, tol, max_iter);
        let keep = match &best {
            None => true,
            Some((value, _)) => outcome.value < *value,
        };
        if keep {
            best = Some((outcome.value, outcome.x));
        }
    }
    let (_, theta) = best.expect("at least one start");
    let (w, s) = theta.as_slice().split_at(p);
    Ok(DiverseDensityParams {
        target: w.to_vec(),
        scales: s.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probability_peaks_at_the_target() {
        let dd = DiverseDensityParams {
            target: vec![2.0, 2.0],
            scales: vec![1.0, 0.5],
        };
        let lp = dd.predict_log_proba(&[2.0, 2.0]);
        // q = exp(0) = 1 before clipping
        assert!(lp[1].exp() >= 1.0 - 1e-9);
        let total: f64 = lp.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn q_is_monotone_in_per_axis_distance() {
        let dd = DiverseDensityParams {
            target: vec![1.0, -1.0],
            scales: vec![0.8, 1.3],
        };
        for k in 0..2 {
            let mut prev = f64::INFINITY;
            for step in 0..6 {
                let mut f = vec![1.0, -1.0];
                f[k] += step as f64 * 0.5;
                let q = dd.predict_log_proba(&f)[1];
                assert!(q <= prev);
                prev = q;
            }
        }
    }

    #[test]
    fn recovers_a_planted_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w_true = [2.0, 2.0];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..400 {
            let f = [rng.gen_range(-2.0..6.0), rng.gen_range(-2.0..6.0)];
            let d: f64 = (0..2).map(|k| (f[k] - w_true[k]) * (f[k] - w_true[k])).sum();
            let q = (-d).exp();
            labels.push(if rng.gen_bool(q) { 2 } else { 1 });
            rows.push(f.to_vec());
        }
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let dd = fit_diverse_density(&refs, &labels, 25, 1e-6, 2000).unwrap();
        for k in 0..2 {
            assert!(
                (dd.target()[k] - w_true[k]).abs() <= 0.2,
                "target[{k}] = {} too far from {}",
                dd.target()[k],
                w_true[k]
            );
        }
    }

    #[test]
    fn all_negative_data_still_fits() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let dd = fit_diverse_density(&refs, &vec![1; 10], 25, 1e-6, 500).unwrap();
        assert!(dd.target()[0].is_finite());
    }
}
