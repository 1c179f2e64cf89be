//! Product-kernel Gaussian KDE with the maximal-smoothing bandwidth.
//!
//! Each dimension gets its own bandwidth `h_k = 1.144 σ̂_k n^(−1/(p+4))`, the
//! oversmoothed Gaussian-kernel width extended to `p` dimensions with the
//! standard multivariate rate exponent. `σ̂_k` is the per-dimension sample
//! standard deviation (denominator `n`, matching the Gaussian fit).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MilError, Result};

/// Oversmoothed bandwidth constant for the Gaussian kernel.
pub const MSP_CONSTANT: f64 = 1.144;

/// Smallest admitted bandwidth; constant-valued dimensions land exactly here.
pub const BANDWIDTH_FLOOR: f64 = 1e-9;

const LN_2PI: f64 = 1.8378770664093453;

/// A fitted kernel density estimate: the support sample plus per-dimension
/// bandwidths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KdeParams {
    support: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
}

impl KdeParams {
    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn dim(&self) -> usize {
        self.bandwidths.len()
    }

    /// Log of the averaged product-kernel density, computed with a
    /// max-shifted log-sum-exp so it is finite for every finite input.
    pub fn log_pdf(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.dim());
        let log_norm: f64 = self
            .bandwidths
            .iter()
            .map(|h| -h.ln() - 0.5 * LN_2PI)
            .sum();
        let mut terms = Vec::with_capacity(self.support.len());
        let mut max = f64::NEG_INFINITY;
        for point in &self.support {
            let mut e = 0.0;
            for (k, (&x, &h)) in f.iter().zip(&self.bandwidths).enumerate() {
                let z = (x - point[k]) / h;
                e -= 0.5 * z * z;
            }
            if e > max {
                max = e;
            }
            terms.push(e);
        }
        let sum: f64 = terms.iter().map(|e| (e - max).exp()).sum();
        max + sum.ln() + log_norm - (self.support.len() as f64).ln()
    }

    /// Averaged kernel CDF. Defined for one-dimensional estimates only.
    pub fn cdf_1d(&self, f: f64) -> Result<f64> {
        if self.dim() != 1 {
            return Err(MilError::DimensionMismatch {
                context: "kde_cdf_1d".into(),
                expected: 1,
                got: self.dim(),
            });
        }
        let normal = Normal::standard();
        let h = self.bandwidths[0];
        let sum: f64 = self
            .support
            .iter()
            .map(|point| normal.cdf((f - point[0]) / h))
            .sum();
        Ok(sum / self.support.len() as f64)
    }

    /// Draws `count` i.i.d. samples: a uniformly chosen support point plus
    /// per-dimension Gaussian noise of the bandwidth.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let point = &self.support[rng.gen_range(0..self.support.len())];
                point
                    .iter()
                    .zip(&self.bandwidths)
                    .map(|(&x, &h)| x + h * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }

    /// Per-dimension support range widened by ten bandwidths; brackets all
    /// but ~1e-23 of the estimated mass.
    pub fn widened_range(&self, k: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for point in &self.support {
            lo = lo.min(point[k]);
            hi = hi.max(point[k]);
        }
        let h = self.bandwidths[k];
        (lo - 10.0 * h, hi + 10.0 * h)
    }
}

/// Fits the KDE: stores the sample and computes the maximal-smoothing
/// bandwidths, floored at [`BANDWIDTH_FLOOR`].
pub fn fit_kde(samples: &[&[f64]]) -> Result<KdeParams> {
    let n = samples.len();
    if n < 2 {
        return Err(MilError::InsufficientData {
            context: "kde fit".into(),
            got: n,
            need: 2,
        });
    }
    let p = samples[0].len();
    for row in samples {
        if row.len() != p {
            return Err(MilError::DimensionMismatch {
                context: "kde fit".into(),
                expected: p,
                got: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(MilError::InvalidInput("kde fit requires finite samples".into()));
        }
    }

    let rate = (n as f64).powf(-1.0 / (p as f64 + 4.0));
    let mut bandwidths = Vec::with_capacity(p);
    for k in 0..p {
        let mean = samples.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        let var = samples.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n as f64;
        bandwidths.push((MSP_CONSTANT * var.sqrt() * rate).max(BANDWIDTH_FLOOR));
    }
    Ok(KdeParams {
        support: samples.iter().map(|r| r.to_vec()).collect(),
        bandwidths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fit(rows: &[Vec<f64>]) -> KdeParams {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        fit_kde(&refs).unwrap()
    }

    #[test]
    fn msp_bandwidth_matches_the_formula() {
        // 32 points with population standard deviation exactly 1
        let rows: Vec<Vec<f64>> = (0..32)
            .map(|i| vec![if i < 16 { -1.0 } else { 1.0 }])
            .collect();
        let kde = fit(&rows);
        // 32^(−1/5) = 1/2, so h = 1.144 / 2
        assert_relative_eq!(kde.bandwidths()[0], 0.572, epsilon = 1e-15);
    }

    #[test]
    fn bandwidth_scales_with_the_data() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, -(i as f64)]).collect();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| vec![3.0 * r[0], 3.0 * r[1]]).collect();
        let a = fit(&rows);
        let b = fit(&scaled);
        for k in 0..2 {
            assert_relative_eq!(b.bandwidths()[k], 3.0 * a.bandwidths()[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_dimension_hits_the_floor_and_stays_finite() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 4.0]).collect();
        let kde = fit(&rows);
        assert_eq!(kde.bandwidths()[1], BANDWIDTH_FLOOR);
        assert!(kde.log_pdf(&[5.0, 4.0]).is_finite());
        assert!(kde.log_pdf(&[5.0, 4.5]).is_finite());
    }

    #[test]
    fn single_kernel_peak_value() {
        let kde = KdeParams {
            support: vec![vec![2.0]],
            bandwidths: vec![0.25],
        };
        assert_relative_eq!(
            kde.log_pdf(&[2.0]),
            -(0.25f64.ln()) - 0.5 * LN_2PI,
            epsilon = 1e-14
        );
    }

    #[test]
    fn far_from_support_is_very_negative_but_finite() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 8.0]).collect();
        let kde = fit(&rows);
        let far = 1.0 + 25.0 * kde.bandwidths()[0];
        let lp = kde.log_pdf(&[far]);
        assert!(lp.is_finite());
        assert!(lp < -100.0);
    }

    #[test]
    fn cdf_at_single_support_point_is_half() {
        let kde = KdeParams {
            support: vec![vec![-3.0]],
            bandwidths: vec![1.0],
        };
        assert_relative_eq!(kde.cdf_1d(-3.0).unwrap(), 0.5, epsilon = 1e-12);
        assert!(kde.cdf_1d(-60.0).unwrap() < 1e-12);
        assert!(kde.cdf_1d(60.0).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn cdf_requires_one_dimension() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0]).collect();
        assert!(fit(&rows).cdf_1d(0.0).is_err());
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let rows: Vec<Vec<f64>> = vec![vec![-1.0], vec![0.5], vec![2.0], vec![0.0]];
            let kde = fit(&rows);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(kde.cdf_1d(lo).unwrap() <= kde.cdf_1d(hi).unwrap());
        }
    }
}
