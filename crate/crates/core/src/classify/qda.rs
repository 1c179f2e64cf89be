//! Quadratic discriminant analysis: per-class Gaussian likelihoods with
//! empirical class priors. Classes with a single sample fall back to the
//! pooled within-class covariance; empty classes keep prior zero and can
//! never be predicted.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::gaussian::{fit_gaussian, GaussianParams};
use crate::error::Result;
use crate::labels::{Label, LabelDomain};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QdaParams {
    priors: Vec<f64>,
    components: Vec<Option<GaussianParams>>,
}

impl QdaParams {
    pub(crate) fn fit(samples: &[&[f64]], labels: &[Label], domain: LabelDomain) -> Result<Self> {
        let t = domain.size();
        let n = samples.len();
        let p = samples[0].len();

        let mut by_class: Vec<Vec<&[f64]>> = vec![Vec::new(); t];
        for (row, &label) in samples.iter().zip(labels) {
            by_class[domain.index_of(label)].push(row);
        }

        // pooled within-class covariance, for singleton classes
        let pooled = {
            let mut cov = DMatrix::<f64>::zeros(p, p);
            for rows in &by_class {
                if rows.is_empty() {
                    continue;
                }
                let mut mean = DVector::<f64>::zeros(p);
                for r in rows {
                    for k in 0..p {
                        mean[k] += r[k];
                    }
                }
                mean /= rows.len() as f64;
                for r in rows {
                    let diff =
                        DVector::from_iterator(p, r.iter().zip(mean.iter()).map(|(x, m)| x - m));
                    cov.ger(1.0, &diff, &diff, 1.0);
                }
            }
            cov / n as f64
        };

        let mut priors = Vec::with_capacity(t);
        let mut components = Vec::with_capacity(t);
        for rows in &by_class {
            priors.push(rows.len() as f64 / n as f64);
            components.push(match rows.len() {
                0 => None,
                1 => {
                    let mean = DVector::from_iterator(p, rows[0].iter().copied());
                    Some(GaussianParams::new(mean, pooled.clone(), false)?)
                }
                _ => Some(fit_gaussian(rows, false)?),
            });
        }
        Ok(QdaParams { priors, components })
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn components(&self) -> &[Option<GaussianParams>] {
        &self.components
    }

    pub fn n_classes(&self) -> usize {
        self.priors.len()
    }

    pub fn dim(&self) -> usize {
        self.components
            .iter()
            .flatten()
            .next()
            .map(GaussianParams::dim)
            .unwrap_or(0)
    }

    /// Normalized log-posteriors `log prior + log N(f) − log Z`. Empty
    /// classes get `−∞`.
    pub fn predict_log_proba(&self, f: &[f64]) -> Vec<f64> {
        let joint: Vec<f64> = self
            .priors
            .iter()
            .zip(&self.components)
            .map(|(&prior, component)| match component {
                Some(g) if prior > 0.0 => prior.ln() + g.log_pdf(f),
                _ => f64::NEG_INFINITY,
            })
            .collect();
        let max = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + joint.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        joint.iter().map(|&v| v - lse).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_priors_and_variances_reduce_to_nearest_mean() {
        // class 1 at mean −1, class 2 at mean 2, both population variance 1
        let rows: Vec<Vec<f64>> = vec![vec![-2.0], vec![0.0], vec![1.0], vec![3.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let qda = QdaParams::fit(&refs, &[1, 1, 2, 2], LabelDomain::new(2).unwrap()).unwrap();
        let lp = qda.predict_log_proba(&[0.0]);
        // hand-computed: P(1|0) = 1 / (1 + e^{−3/2})
        let expected = 1.0 / (1.0 + (-1.5f64).exp());
        assert_relative_eq!(lp[0].exp(), expected, epsilon = 1e-12);
        // boundary at the midpoint 0.5
        let mid = qda.predict_log_proba(&[0.5]);
        assert_relative_eq!(mid[0], mid[1], epsilon = 1e-12);
    }

    #[test]
    fn log_posterior_decomposition_matches_the_density_module() {
        let rows: Vec<Vec<f64>> = vec![
            vec![0.0, 0.2],
            vec![1.0, -0.1],
            vec![0.5, 0.4],
            vec![4.0, 4.2],
            vec![5.0, 3.9],
        ];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let labels = [1, 1, 1, 2, 2];
        let qda = QdaParams::fit(&refs, &labels, LabelDomain::new(2).unwrap()).unwrap();

        let f = [2.0, 1.0];
        let joint: Vec<f64> = (0..2)
            .map(|c| {
                qda.priors()[c].ln() + qda.components()[c].as_ref().unwrap().log_pdf(&f)
            })
            .collect();
        let max = joint[0].max(joint[1]);
        let lse = max + ((joint[0] - max).exp() + (joint[1] - max).exp()).ln();
        let lp = qda.predict_log_proba(&f);
        assert_relative_eq!(lp[0], joint[0] - lse, epsilon = 1e-10);
        assert_relative_eq!(lp[1], joint[1] - lse, epsilon = 1e-10);
    }

    #[test]
    fn singleton_class_uses_pooled_covariance() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0], vec![2.0], vec![1.0], vec![10.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let qda = QdaParams::fit(&refs, &[1, 1, 1, 2], LabelDomain::new(2).unwrap()).unwrap();
        let class2 = qda.components()[1].as_ref().unwrap();
        assert_relative_eq!(class2.mean()[0], 10.0);
        assert!(class2.covariance()[(0, 0)] > 0.0);
        assert!(qda.predict_log_proba(&[9.0]).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_class_keeps_prior_zero_and_never_wins() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![5.0], vec![6.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let qda = QdaParams::fit(&refs, &[1, 1, 2, 2], LabelDomain::new(3).unwrap()).unwrap();
        assert_eq!(qda.priors()[2], 0.0);
        let lp = qda.predict_log_proba(&[5.0]);
        assert_eq!(lp[2], f64::NEG_INFINITY);
        let total: f64 = lp.iter().map(|v| v.exp()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-9);
    }
}
