//! Error-bound diagnostics for a completed discovery run: the finite-sample
//! gap bound `0 <= H(T|MB⁺) - H(T|MB) <= δ_e + Δ_N` and, for linear-Gaussian
//! data, the ratio bound `1 <= A/A' <= 1/(1 - exp(-λ_min))` where λ_min
//! ranges over principal submatrices of the correlation matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gauss::{gaussian_cond_entropy, CovMatrix, STD_NORMAL_ENTROPY};
use crate::linalg::principal_submatrix;

/// Maximum number of principal submatrices exact mode may enumerate.
pub const EXACT_ENUMERATION_CAP: u128 = 100_000;

/// Diagnostic quantities for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub target: usize,
    /// True boundary size k.
    pub k_true: usize,
    /// Inflated boundary size k' = |MB⁺|.
    pub k_plus: usize,
    /// Sample count N.
    pub n: usize,
    /// Measurement-noise constant γ (user supplied).
    pub gamma: f64,
    /// Precision parameter δ_e.
    pub delta_e: f64,
    /// Δ_N bound term.
    pub delta_n: f64,
    /// H(T|MB⁺) − H(T|MB).
    pub gap: f64,
    /// A/A' (linear-Gaussian only; absent for degenerate boundaries).
    pub ratio: Option<f64>,
    pub lambda_min: Option<f64>,
    /// 1/(1 − exp(−λ_min)).
    pub ratio_bound: Option<f64>,
}

/// `Δ_N = log N [1 − exp(−k'/(k γ max{log N, log(1/δ_e)}))]`, natural logs.
/// `k_plus = 0` yields 0 (the bracket vanishes).
pub fn delta_n(n: usize, k: usize, k_plus: usize, gamma: f64, delta_e: f64) -> Result<f64> {
    if n < 2 || k == 0 {
        return Err(CoreError::InvalidParameter {
            name: "delta_n",
            reason: format!("need N >= 2 and k >= 1, got N={n}, k={k}"),
        });
    }
    if !(gamma > 0.0) || !(delta_e > 0.0) || delta_e >= 1.0 {
        return Err(CoreError::InvalidParameter {
            name: "delta_n",
            reason: format!("need gamma > 0 and 0 < delta_e < 1, got {gamma}, {delta_e}"),
        });
    }
    Ok(delta_n_log((n as f64).ln(), k as f64, k_plus as f64, gamma, delta_e))
}

fn delta_n_log(log_n: f64, k: f64, k_plus: f64, gamma: f64, delta_e: f64) -> f64 {
    let denom = k * gamma * log_n.max((1.0 / delta_e).ln());
    log_n * (1.0 - (-k_plus / denom).exp())
}

/// Eigenvalue evaluation mode for the ratio bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigMode {
    /// Enumerate every `2k'×2k'` principal submatrix (refused above
    /// [`EXACT_ENUMERATION_CAP`]).
    Exact,
    /// Use λ_min of the full matrix, a sound lower bound for every principal
    /// submatrix by eigenvalue interlacing.
    Interlacing,
}

fn smallest_eigenvalue(m: &ndarray::Array2<f64>) -> f64 {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[(i, j)]);
    let eig = dm.symmetric_eigen();
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

fn combinations(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > EXACT_ENUMERATION_CAP * 1000 {
            return acc; // early out; caller only compares against the cap
        }
    }
    acc
}

/// `(λ_min, 1/(1 − exp(−λ_min)))` over `2k'×2k'` principal submatrices of a
/// correlation matrix.
pub fn gauss_ratio_bound(c: &CovMatrix, k_plus: usize, mode: EigMode) -> Result<(f64, f64)> {
    let d = c.d();
    let size = 2 * k_plus;
    if size == 0 || size > d {
        return Err(CoreError::InvalidParameter {
            name: "k_plus",
            reason: format!("need 1 <= 2k' <= d, got 2k'={size}, d={d}"),
        });
    }
    let lambda = match mode {
        EigMode::Interlacing => smallest_eigenvalue(c.sigma()),
        EigMode::Exact => {
            let count = combinations(d, size);
            if count > EXACT_ENUMERATION_CAP {
                return Err(CoreError::EnumerationTooLarge {
                    combinations: count,
                    cap: EXACT_ENUMERATION_CAP,
                });
            }
            let mut min_lambda = f64::INFINITY;
            let mut idx: Vec<usize> = (0..size).collect();
            loop {
                let sub = principal_submatrix(c.sigma(), &idx);
                min_lambda = min_lambda.min(smallest_eigenvalue(&sub));
                if !next_combination(&mut idx, d) {
                    break;
                }
            }
            min_lambda
        }
    };
    Ok((lambda, ratio_bound_from(lambda)))
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic
/// order; returns false when exhausted.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn ratio_bound_from(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - (-lambda).exp())
    }
}

/// Builds a report from oracle quantities: a covariance (sample or
/// analytic), the true boundary, and the grow-phase output MB⁺.
///
/// When the true boundary is empty, `Δ_N` takes its `k → 0⁺` limit `log N`;
/// the ratio clauses are reported only when both boundaries are nonempty and
/// `A'` is meaningfully positive. When `2k'` exceeds d or the enumeration
/// cap, the eigenvalue falls back to interlacing mode on the full matrix.
#[allow(clippy::too_many_arguments)]
pub fn build_report(
    cov: &CovMatrix,
    target: usize,
    true_mb: &[usize],
    mb_plus: &[usize],
    n: usize,
    gamma: f64,
    delta_e: f64,
    mode: EigMode,
) -> Result<BoundReport> {
    let d = cov.d();
    let k = true_mb.len();
    let k_plus = mb_plus.len();
    let sorted = |v: &[usize]| {
        let mut s = v.to_vec();
        s.sort_unstable();
        s
    };
    let h_true = gaussian_cond_entropy(cov, target, &sorted(true_mb))?;
    let h_plus = gaussian_cond_entropy(cov, target, &sorted(mb_plus))?;
    let gap = h_plus - h_true;
    let dn = if k == 0 {
        (n as f64).ln()
    } else {
        delta_n(n, k, k_plus, gamma, delta_e)?
    };

    let mut ratio = None;
    let mut lambda_min = None;
    let mut ratio_bound = None;
    if k > 0 && k_plus > 0 {
        let sigma_t = cov.sigma()[(target, target)];
        let two_pi_e_var = (2.0 * STD_NORMAL_ENTROPY).exp() * sigma_t;
        let a = two_pi_e_var - (2.0 * h_true).exp();
        let a_prime = two_pi_e_var - (2.0 * h_plus).exp();
        if a_prime > 1e-12 * two_pi_e_var {
            ratio = Some(a / a_prime);
            let corr = cov.to_correlation()?;
            let size = (2 * k_plus).min(d);
            let eff_k = size / 2;
            let (lam, rb) = if eff_k == 0 {
                (smallest_eigenvalue(corr.sigma()), f64::INFINITY)
            } else {
                match gauss_ratio_bound(&corr, eff_k, mode) {
                    Ok(v) => v,
                    Err(CoreError::EnumerationTooLarge { .. }) => {
                        gauss_ratio_bound(&corr, eff_k, EigMode::Interlacing)?
                    }
                    Err(e) => return Err(e),
                }
            };
            lambda_min = Some(lam);
            ratio_bound = Some(rb);
        }
    }

    Ok(BoundReport {
        target,
        k_true: k,
        k_plus,
        n,
        gamma,
        delta_e,
        delta_n: dn,
        gap,
        ratio,
        lambda_min,
        ratio_bound,
    })
}

/// Outcome of checking one report, with the violated clauses when any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub pass: bool,
    pub violated: Vec<String>,
}

const LOWER_TOL: f64 = 1e-9;

/// Checks `0 <= gap <= δ_e + Δ_N` and, when present,
/// `1 <= A/A' <= ratio_bound` (the lower bounds with tolerance 1e-9).
pub fn verify_bounds(report: &BoundReport) -> BoundVerdict {
    let mut violated = Vec::new();
    if report.gap < -LOWER_TOL {
        violated.push("gap lower bound (gap >= 0)".to_string());
    }
    if report.gap > report.delta_e + report.delta_n {
        violated.push("gap upper bound (gap <= delta_e + Delta_N)".to_string());
    }
    if let (Some(ratio), Some(rb)) = (report.ratio, report.ratio_bound) {
        if ratio < 1.0 - LOWER_TOL {
            violated.push("ratio lower bound (A/A' >= 1)".to_string());
        }
        if ratio > rb {
            violated.push("ratio upper bound (A/A' <= 1/(1-exp(-lambda_min)))".to_string());
        }
    }
    BoundVerdict {
        pass: violated.is_empty(),
        violated,
    }
}
