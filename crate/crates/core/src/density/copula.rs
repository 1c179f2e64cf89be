//! Gaussian copula with KDE marginals.
//!
//! The density factors into p one-dimensional marginal KDEs and a copula
//! term over the normal scores `z_k = Φ⁻¹(Ĝ_k(f_k))`. Pseudo-observations
//! are clipped away from {0, 1} so the probit transform stays finite. With
//! an identity correlation the copula term vanishes and the model reduces to
//! a product of the marginals.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::density::kde::{fit_kde, KdeParams};
use crate::error::{MilError, Result};

/// Bisection tolerance for inverting the marginal CDFs when sampling.
const QUANTILE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CopulaRepr", into = "CopulaRepr")]
pub struct CopulaParams {
    marginals: Vec<KdeParams>,
    correlation: DMatrix<f64>,
    clip: f64,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl CopulaParams {
    fn from_parts(marginals: Vec<KdeParams>, correlation: DMatrix<f64>, clip: f64) -> Result<Self> {
        let p = marginals.len();
        if correlation.nrows() != p || correlation.ncols() != p {
            return Err(MilError::DimensionMismatch {
                context: "copula correlation".into(),
                expected: p,
                got: correlation.nrows().max(correlation.ncols()),
            });
        }
        let chol = Cholesky::new(correlation.clone()).ok_or_else(|| {
            MilError::InvalidInput("copula correlation matrix is not positive definite".into())
        })?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(CopulaParams {
            marginals,
            correlation,
            clip,
            chol,
            log_det,
        })
    }

    pub fn marginals(&self) -> &[KdeParams] {
        &self.marginals
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    /// Pseudo-observation clip `ε_u`; CDF values are pulled into
    /// `[ε_u, 1 − ε_u]` before the probit transform.
    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    fn normal_scores(&self, f: &[f64]) -> DVector<f64> {
        let normal = Normal::standard();
        DVector::from_iterator(
            self.dim(),
            f.iter().enumerate().map(|(k, &x)| {
                let u = self.marginals[k]
                    .cdf_1d(x)
                    .expect("marginals are one-dimensional")
                    .clamp(self.clip, 1.0 - self.clip);
                normal.inverse_cdf(u)
            }),
        )
    }

    /// Sum of the marginal log-densities plus the Gaussian copula term
    /// `−½ log|R| − ½ zᵀ(R⁻¹ − I)z`.
    pub fn log_pdf(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.dim());
        let marginal: f64 = f
            .iter()
            .enumerate()
            .map(|(k, &x)| self.marginals[k].log_pdf(&[x]))
            .sum();
        let z = self.normal_scores(f);
        let solved = self.chol.solve(&z);
        marginal - 0.5 * self.log_det - 0.5 * (z.dot(&solved) - z.dot(&z))
    }

    /// Draws `count` samples: correlated normal scores mapped through the
    /// inverse marginal CDFs (bisection over the widened support range).
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let p = self.dim();
        let normal = Normal::standard();
        let l = self.chol.l_dirty();
        (0..count)
            .map(|_| {
                let raw = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
                (0..p)
                    .map(|k| {
                        let mut z = 0.0;
                        for c in 0..=k {
                            z += l[(k, c)] * raw[c];
                        }
                        invert_cdf(&self.marginals[k], normal.cdf(z))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Bisection solve of `Ĝ(x) = u` over the widened support range.
fn invert_cdf(marginal: &KdeParams, u: f64) -> f64 {
    let (mut lo, mut hi) = marginal.widened_range(0);
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if marginal.cdf_1d(mid).expect("1-d marginal") < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fits the copula: one-dimensional KDE marginals, then the sample
/// correlation of the probit-transformed pseudo-observations. Pass
/// `independent = true` to clamp the correlation to the identity (the
/// product-of-marginals model).
pub fn fit_copula(samples: &[&[f64]], independent: bool) -> Result<CopulaParams> {
    let n = samples.len();
    if n < 3 {
        return Err(MilError::InsufficientData {
            context: "copula fit".into(),
            got: n,
            need: 3,
        });
    }
    let p = samples[0].len();
    let mut marginals = Vec::with_capacity(p);
    for k in 0..p {
        let column: Vec<Vec<f64>> = samples.iter().map(|r| vec![r[k]]).collect();
        let refs: Vec<&[f64]> = column.iter().map(Vec::as_slice).collect();
        marginals.push(fit_kde(&refs)?);
    }
    let clip = 1.0 / (2.0 * n as f64);

    if independent || p == 1 {
        return CopulaParams::from_parts(marginals, DMatrix::identity(p, p), clip);
    }

    // normal scores of the clipped pseudo-observations
    let normal = Normal::standard();
    let mut z = DMatrix::zeros(n, p);
    for (j, row) in samples.iter().enumerate() {
        for k in 0..p {
            let u = marginals[k]
                .cdf_1d(row[k])
                .expect("1-d marginal")
                .clamp(clip, 1.0 - clip);
            z[(j, k)] = normal.inverse_cdf(u);
        }
    }

    let mut corr = correlation_of(&z);
    // shrink toward the identity by the smallest step restoring positive
    // definiteness; degenerate score columns already fell back to identity rows
    let mut lambda = 0.0;
    let fitted = loop {
        let shrunk = if lambda == 0.0 {
            corr.clone()
        } else {
            let mut m = corr.clone() * (1.0 - lambda);
            for k in 0..p {
                m[(k, k)] = 1.0;
            }
            m
        };
        if Cholesky::new(shrunk.clone()).is_some() {
            break shrunk;
        }
        lambda += 0.01;
        if lambda >= 1.0 {
            corr = DMatrix::identity(p, p);
            break corr;
        }
    };
    CopulaParams::from_parts(marginals, fitted, clip)
}

fn correlation_of(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows();
    let p = z.ncols();
    let means: Vec<f64> = (0..p).map(|k| z.column(k).sum() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for j in 0..n {
        for a in 0..p {
            let da = z[(j, a)] - means[a];
            for b in a..p {
                cov[(a, b)] += da * (z[(j, b)] - means[b]);
            }
        }
    }
    let mut corr = DMatrix::identity(p, p);
    for a in 0..p {
        for b in (a + 1)..p {
            let denom: f64 = (cov[(a, a)] * cov[(b, b)]).sqrt();
            if denom > 0.0 {
                let r = (cov[(a, b)] / denom).clamp(-1.0, 1.0);
                corr[(a, b)] = r;
                corr[(b, a)] = r;
            }
        }
    }
    corr
}

#[derive(Serialize, Deserialize)]
struct CopulaRepr {
    marginals: Vec<KdeParams>,
    correlation: Vec<Vec<f64>>,
    clip: f64,
}

impl From<CopulaParams> for CopulaRepr {
    fn from(c: CopulaParams) -> Self {
        CopulaRepr {
            marginals: c.marginals,
            correlation: c
                .correlation
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            clip: c.clip,
        }
    }
}

impl TryFrom<CopulaRepr> for CopulaParams {
    type Error = MilError;

    fn try_from(repr: CopulaRepr) -> Result<Self> {
        let p = repr.marginals.len();
        if repr.correlation.len() != p || repr.correlation.iter().any(|r| r.len() != p) {
            return Err(MilError::InvalidInput(
                "copula correlation shape does not match the marginal count".into(),
            ));
        }
        let corr = DMatrix::from_fn(p, p, |r, c| repr.correlation[r][c]);
        CopulaParams::from_parts(repr.marginals, corr, repr.clip)
    }
}
