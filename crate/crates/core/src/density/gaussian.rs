//! Multivariate Gaussian density with full or diagonal covariance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};

/// Smallest admitted variance; degenerate dimensions are floored here so a
/// fit never produces a singular covariance.
pub const VARIANCE_FLOOR: f64 = 1e-9;

const LN_2PI: f64 = 1.8378770664093453;

/// A fitted multivariate Gaussian. The Cholesky factor is cached for
/// log-density evaluation and sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct GaussianParams {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    diagonal_only: bool,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl GaussianParams {
    /// Builds the density from explicit parameters. The covariance is
    /// symmetrized, its diagonal floored at [`VARIANCE_FLOOR`], and a scaled
    /// identity ridge is added (escalating tenfold) only if the Cholesky
    /// factorization fails.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, diagonal_only: bool) -> Result<Self> {
        let p = mean.len();
        if covariance.nrows() != p || covariance.ncols() != p {
            return Err(MilError::DimensionMismatch {
                context: "gaussian covariance".into(),
                expected: p,
                got: covariance.nrows().max(covariance.ncols()),
            });
        }
        if mean.iter().any(|x| !x.is_finite()) || covariance.iter().any(|x| !x.is_finite()) {
            return Err(MilError::InvalidInput(
                "gaussian parameters must be finite".into(),
            ));
        }

        let mut cov = if diagonal_only {
            DMatrix::from_diagonal(&covariance.diagonal())
        } else {
            // exact for symmetric inputs, repairs mild asymmetry otherwise
            (&covariance + covariance.transpose()) * 0.5
        };
        for k in 0..p {
            cov[(k, k)] = cov[(k, k)].max(VARIANCE_FLOOR);
        }

        let mut ridge = 1e-6 * cov.diagonal().mean();
        if !(ridge > 0.0) {
            ridge = 1e-12;
        }
        let chol = loop {
            if let Some(c) = Cholesky::new(cov.clone()) {
                break c;
            }
            for k in 0..p {
                cov[(k, k)] += ridge;
            }
            ridge *= 10.0;
        };
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(GaussianParams {
            mean,
            covariance: cov,
            diagonal_only,
            chol,
            log_det,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn diagonal_only(&self) -> bool {
        self.diagonal_only
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Exact log-density at `f`; finite for every finite input.
    pub fn log_pdf(&self, f: &[f64]) -> f64 {
        let p = self.dim();
        debug_assert_eq!(f.len(), p);
        if self.diagonal_only {
            let mut acc = 0.0;
            for k in 0..p {
                let var = self.covariance[(k, k)];
                let d = f[k] - self.mean[k];
                acc += -0.5 * (LN_2PI + var.ln() + d * d / var);
            }
            return acc;
        }
        let diff = DVector::from_iterator(p, f.iter().zip(self.mean.iter()).map(|(x, m)| x - m));
        let solved = self.chol.solve(&diff);
        let quad = diff.dot(&solved);
        -0.5 * (p as f64 * LN_2PI + self.log_det + quad)
    }

    /// Draws `count` i.i.d. samples.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let p = self.dim();
        let l = self.chol.l_dirty();
        (0..count)
            .map(|_| {
                let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let mut x = self.mean.clone();
                // x = mean + L z, using only the lower triangle of the factor
                for r in 0..p {
                    let mut acc = 0.0;
                    for c in 0..=r {
                        acc += l[(r, c)] * z[c];
                    }
                    x[r] += acc;
                }
                x.iter().copied().collect()
            })
            .collect()
    }
}

/// Maximum-likelihood fit (covariance denominator `n`), with the floor/ridge
/// policy of [`GaussianParams::new`].
pub fn fit_gaussian(samples: &[&[f64]], diagonal_only: bool) -> Result<GaussianParams> {
    let n = samples.len();
    if n < 2 {
        return Err(MilError::InsufficientData {
            context: "gaussian fit".into(),
            got: n,
            need: 2,
        });
    }
    let p = samples[0].len();
    for row in samples {
        if row.len() != p {
            return Err(MilError::DimensionMismatch {
                context: "gaussian fit".into(),
                expected: p,
                got: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(MilError::InvalidInput(
                "gaussian fit requires finite samples".into(),
            ));
        }
    }

    let mut mean = DVector::zeros(p);
    for row in samples {
        for k in 0..p {
            mean[k] += row[k];
        }
    }
    mean /= n as f64;

    let mut cov = DMatrix::zeros(p, p);
    if diagonal_only {
        for row in samples {
            for k in 0..p {
                let d = row[k] - mean[k];
                cov[(k, k)] += d * d;
            }
        }
    } else {
        for row in samples {
            let diff = DVector::from_iterator(p, row.iter().zip(mean.iter()).map(|(x, m)| x - m));
            cov.ger(1.0, &diff, &diff, 1.0);
        }
    }
    cov /= n as f64;

    GaussianParams::new(mean, cov, diagonal_only)
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    diagonal_only: bool,
}

impl From<GaussianParams> for GaussianRepr {
    fn from(g: GaussianParams) -> Self {
        GaussianRepr {
            mean: g.mean.iter().copied().collect(),
            covariance: g
                .covariance
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            diagonal_only: g.diagonal_only,
        }
    }
}

impl TryFrom<GaussianRepr> for GaussianParams {
    type Error = MilError;

    fn try_from(repr: GaussianRepr) -> Result<Self> {
        let p = repr.mean.len();
        if repr.covariance.len() != p || repr.covariance.iter().any(|r| r.len() != p) {
            return Err(MilError::InvalidInput(
                "gaussian covariance rows do not match the mean dimension".into(),
            ));
        }
        let mean = DVector::from_vec(repr.mean);
        let cov = DMatrix::from_fn(p, p, |r, c| repr.covariance[r][c]);
        GaussianParams::new(mean, cov, repr.diagonal_only)
    }
}
