//! Closed-form conditional entropy for linear-Gaussian data:
//! `H(T|S) = 1/2 (1 + log 2π + logdet Σ_{T∪S} - logdet Σ_S)`, evaluated
//! through Cholesky log-determinants. All entropies are in nats.

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::linalg::{cholesky_in_place, principal_submatrix};
use crate::synth::Dataset;

/// `1/2 (1 + log 2π)`: differential entropy of a standard normal, nats.
pub const STD_NORMAL_ENTROPY: f64 = 0.5 * (1.0 + 1.8378770664093453);

const SYMMETRY_RTOL: f64 = 1e-10;

/// A validated symmetric positive-semidefinite covariance matrix.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    sigma: Array2<f64>,
}

impl CovMatrix {
    /// Validates symmetry (1e-10 relative) and positive semidefiniteness
    /// (Cholesky of `sigma + jitter` succeeds).
    pub fn new(sigma: Array2<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if d == 0 || sigma.ncols() != d {
            return Err(CoreError::InvalidParameter {
                name: "sigma",
                reason: format!("expected square non-empty matrix, got {}x{}", d, sigma.ncols()),
            });
        }
        let scale = sigma.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(CoreError::InvalidParameter {
                        name: "sigma",
                        reason: format!(
                            "asymmetric at ({i},{j}): {} vs {}",
                            sigma[(i, j)],
                            sigma[(j, i)]
                        ),
                    });
                }
            }
        }
        // PSD check: Cholesky with a small diagonal jitter must succeed.
        let mut probe = sigma.clone();
        let jitter = 1e-12 * trace(&sigma).max(1.0);
        for i in 0..d {
            probe[(i, i)] += jitter;
        }
        cholesky_in_place(&mut probe).map_err(|pivot| CoreError::NotPositiveDefinite { pivot })?;
        Ok(CovMatrix { sigma })
    }

    pub fn d(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &Array2<f64> {
        &self.sigma
    }

    /// The correlation matrix `D^{-1/2} Σ D^{-1/2}`.
    pub fn to_correlation(&self) -> Result<CovMatrix> {
        let d = self.d();
        let mut c = self.sigma.clone();
        let stds: Vec<f64> = (0..d).map(|i| self.sigma[(i, i)].sqrt()).collect();
        if stds.iter().any(|&s| !(s > 0.0)) {
            return Err(CoreError::InvalidParameter {
                name: "sigma",
                reason: "zero-variance column cannot be standardized".into(),
            });
        }
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] /= stds[i] * stds[j];
            }
        }
        for i in 0..d {
            c[(i, i)] = 1.0;
        }
        CovMatrix::new(c)
    }
}

fn trace(m: &Array2<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Unbiased sample covariance (1/(N-1) normalization), symmetrized.
pub fn sample_covariance(dataset: &Dataset) -> Result<CovMatrix> {
    let n = dataset.n();
    if n < 2 {
        return Err(CoreError::InvalidDataset(
            "covariance needs at least two samples".into(),
        ));
    }
    let d = dataset.d();
    let nf = n as f64;
    let means: Vec<f64> = (0..d).map(|j| dataset.data.column(j).sum() / nf).collect();
    let mut sigma = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        let ci = dataset.data.column(i);
        for j in i..d {
            let cj = dataset.data.column(j);
            let cov = ci
                .iter()
                .zip(cj.iter())
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .sum::<f64>()
                / (nf - 1.0);
            sigma[(i, j)] = cov;
            sigma[(j, i)] = cov;
        }
    }
    CovMatrix::new(sigma)
}

/// Stable log-determinant of a positive-definite matrix via Cholesky:
/// `2 Σ log diag(L)`. On the first Cholesky failure, `1e-10 * trace/d` is
/// added to the diagonal once; a second failure is reported with the failing
/// pivot index.
pub fn logdet_psd(m: &Array2<f64>) -> Result<f64> {
    let d = m.nrows();
    let mut a = m.clone();
    match cholesky_in_place(&mut a) {
        Ok(()) => Ok(2.0 * (0..d).map(|i| a[(i, i)].ln()).sum::<f64>()),
        Err(_) => {
            let jitter = 1e-10 * trace(m) / d as f64;
            let mut b = m.clone();
            for i in 0..d {
                b[(i, i)] += jitter;
            }
            match cholesky_in_place(&mut b) {
                Ok(()) => Ok(2.0 * (0..d).map(|i| b[(i, i)].ln()).sum::<f64>()),
                Err(pivot) => Err(CoreError::NotPositiveDefinite { pivot }),
            }
        }
    }
}

/// Conditional entropy `H(target | cond)` of a Gaussian with covariance
/// `cov`, in nats. For `cond = ∅` this is the marginal entropy
/// `1/2 log(2πe σ_T²)`.
pub fn gaussian_cond_entropy(cov: &CovMatrix, target: usize, cond: &[usize]) -> Result<f64> {
    let d = cov.d();
    if target >= d {
        return Err(CoreError::IndexOutOfRange { index: target, d });
    }
    for &j in cond {
        if j >= d {
            return Err(CoreError::IndexOutOfRange { index: j, d });
        }
        if j == target {
            return Err(CoreError::InvalidParameter {
                name: "cond",
                reason: format!("conditioning set contains the target {target}"),
            });
        }
    }
    if cond.is_empty() {
        let var = cov.sigma()[(target, target)];
        if var <= 0.0 {
            return Err(CoreError::NotPositiveDefinite { pivot: target });
        }
        return Ok(STD_NORMAL_ENTROPY + 0.5 * var.ln());
    }
    let mut ts: Vec<usize> = Vec::with_capacity(cond.len() + 1);
    ts.push(target);
    ts.extend_from_slice(cond);
    let logdet_ts = logdet_psd(&principal_submatrix(cov.sigma(), &ts))?;
    let logdet_s = logdet_psd(&principal_submatrix(cov.sigma(), cond))?;
    Ok(STD_NORMAL_ENTROPY + 0.5 * (logdet_ts - logdet_s))
}
