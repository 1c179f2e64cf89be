//! Ridge-penalized multinomial logistic regression.
//!
//! Class `t` is the reference class with implicit zero coefficients. The fit
//! minimizes the mean negative log-likelihood plus `λ/2 · ||β||²` over the
//! non-intercept coefficients, by gradient descent. The ridge keeps the
//! optimum unique even on linearly separable data.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::classify::optim::minimize;
use crate::error::{MilError, Result};
use crate::labels::{Label, LabelDomain};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticParams {
    /// `(t − 1) × (p + 1)` coefficient rows: `[intercept, w_1 .. w_p]`.
    weights: Vec<Vec<f64>>,
    /// Ridge strength λ (the intercepts are unpenalized).
    ridge: f64,
}

impl LogisticParams {
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn n_classes(&self) -> usize {
        self.weights.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len() - 1
    }

    /// Log-probabilities for all `t` classes; exponentiates to a
    /// distribution summing to one.
    pub fn predict_log_proba(&self, f: &[f64]) -> Vec<f64> {
        let t = self.n_classes();
        let mut logits = Vec::with_capacity(t);
        for row in &self.weights {
            let mut eta = row[0];
            for (k, &x) in f.iter().enumerate() {
                eta += row[k + 1] * x;
            }
            logits.push(eta);
        }
        logits.push(0.0); // reference class
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|&e| (e - max).exp()).sum::<f64>().ln();
        logits.iter().map(|&e| e - max - (lse - max)).collect()
    }
}

pub(crate) fn fit_logistic(
    samples: &[&[f64]],
    labels: &[Label],
    domain: LabelDomain,
    ridge: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LogisticParams> {
    let n = samples.len();
    let t = domain.size();
    let p = samples[0].len();
    let rows = t - 1;
    let cols = p + 1;

    let targets: Vec<usize> = labels.iter().map(|&l| domain.index_of(l)).collect();

    let objective = |beta: &DVector<f64>| -> (f64, DVector<f64>) {
        let mut value = 0.0;
        let mut grad = DVector::zeros(rows * cols);
        let mut logits = vec![0.0; t];
        let mut probs = vec![0.0; t];
        for (sample, &target) in samples.iter().zip(&targets) {
            for r in 0..rows {
                let base = r * cols;
                let mut eta = beta[base];
                for k in 0..p {
                    eta += beta[base + 1 + k] * sample[k];
                }
                logits[r] = eta;
            }
            logits[t - 1] = 0.0;
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|&e| (e - max).exp()).sum::<f64>().ln();
            value -= logits[target] - lse;
            for r in 0..t {
                probs[r] = (logits[r] - lse).exp();
            }
            for r in 0..rows {
                let resid = probs[r] - if r == target { 1.0 } else { 0.0 };
                let base = r * cols;
                grad[base] += resid;
                for k in 0..p {
                    grad[base + 1 + k] += resid * sample[k];
                }
            }
        }
        value /= n as f64;
        grad /= n as f64;
        // ridge on non-intercept coefficients
        for r in 0..rows {
            let base = r * cols;
            for k in 0..p {
                let w = beta[base + 1 + k];
                value += 0.5 * ridge * w * w;
                grad[base + 1 + k] += ridge * w;
            }
        }
        (value, grad)
    };

    let outcome = minimize(objective, DVector::zeros(rows * cols), tol, max_iter);
    if !outcome.x.iter().all(|w| w.is_finite()) {
        return Err(MilError::InvalidState(
            "logistic regression diverged to non-finite weights".into(),
        ));
    }
    let weights = (0..rows)
        .map(|r| outcome.x.as_slice()[r * cols..(r + 1) * cols].to_vec())
        .collect();
    Ok(LogisticParams { weights, ridge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_weights_give_a_uniform_distribution() {
        let params = LogisticParams {
            weights: vec![vec![0.0; 3]; 2],
            ridge: 1e-4,
        };
        let lp = params.predict_log_proba(&[0.4, -1.0]);
        for &v in &lp {
            assert_relative_eq!(v.exp(), 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn separable_data_still_converges_under_ridge() {
        let domain = LabelDomain::new(2).unwrap();
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![if i < 10 { -1.0 - 0.1 * i as f64 } else { 1.0 + 0.1 * i as f64 }])
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let labels: Vec<Label> = (0..20).map(|i| if i < 10 { 1 } else { 2 }).collect();
        let params = fit_logistic(&refs, &labels, domain, 1e-4, 1e-6, 10_000).unwrap();
        assert!(params.weights()[0].iter().all(|w| w.is_finite()));
        // left points classify as class 1, right as class 2
        assert!(params.predict_log_proba(&[-2.0])[0] > params.predict_log_proba(&[-2.0])[1]);
        assert!(params.predict_log_proba(&[2.0])[1] > params.predict_log_proba(&[2.0])[0]);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let params = LogisticParams {
            weights: vec![vec![0.3, -1.2, 0.7], vec![-0.5, 0.4, 0.1]],
            ridge: 1e-4,
        };
        let lp = params.predict_log_proba(&[2.0, -3.0]);
        let total: f64 = lp.iter().map(|v| v.exp()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-9);
    }
}
