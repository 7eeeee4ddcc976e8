//! Small dense linear-algebra helpers shared by the Gaussian scorer and the
//! synthetic generators.

use ndarray::Array2;

use crate::error::{CoreError, Result};

/// In-place lower Cholesky factorization of a symmetric matrix.
///
/// On success the lower triangle of `m` holds `L` with `m = L L^T`; the upper
/// triangle is left untouched. On failure returns the pivot row at which a
/// non-positive diagonal appeared.
pub fn cholesky_in_place(m: &mut Array2<f64>) -> std::result::Result<(), usize> {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= m[(j, k)] * m[(j, k)];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(j);
        }
        let ljj = diag.sqrt();
        m[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= m[(i, k)] * m[(j, k)];
            }
            m[(i, j)] = v / ljj;
        }
    }
    Ok(())
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &Array2<f64>) -> Result<Array2<f64>> {
    let mut a = m.clone();
    cholesky_in_place(&mut a).map_err(|pivot| CoreError::NotPositiveDefinite { pivot })?;
    // Zero the upper triangle so the result is a proper factor.
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            a[(i, j)] = 0.0;
        }
    }
    Ok(a)
}

/// log det of a positive-definite matrix from its Cholesky diagonal.
pub fn logdet_from_cholesky(l: &Array2<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Extracts the principal submatrix of `m` on `idx` (rows and columns).
pub fn principal_submatrix(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let k = idx.len();
    Array2::from_shape_fn((k, k), |(a, b)| m[(idx[a], idx[b])])
}
