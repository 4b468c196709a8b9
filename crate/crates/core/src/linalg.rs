use faer::Mat;
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Thin SVD `m = U diag(s) V^T` with `s` non-increasing.
///
/// Backed by faer: nalgebra's bidiagonal SVD occasionally returns factors
/// that do not reconstruct rank-deficient inputs.
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok((DMatrix::zeros(rows, 0), DVector::zeros(0), DMatrix::zeros(cols, 0)));
    }
    let svd = Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)])
        .thin_svd()
        .map_err(|e| Error::InvalidArgument(format!("SVD did not converge: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    Ok((
        DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
        DVector::from_fn(k, |i, _| s[i]),
        DMatrix::from_fn(cols, k, |i, j| v[(i, j)]),
    ))
}
