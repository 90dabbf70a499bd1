//! Thin SVD of dense real matrices backed by `faer`.

use nalgebra::DMatrix;

use crate::error::{MorError, Result};

/// `A = U diag(σ) Vᵀ` with `σ` nonincreasing and `min(m, n)` columns in
/// `U` and `V`.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(ThinSvd { u: DMatrix::zeros(m, 0), sigma: Vec::new(), v: DMatrix::zeros(n, 0) });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(MorError::Svd("matrix has non-finite entries".into()));
    }
    let fa = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = fa.thin_svd().map_err(|e| MorError::Svd(format!("{e:?}")))?;
    let (fu, fv) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let u = DMatrix::from_fn(m, k, |i, j| fu[(i, j)]);
    let v = DMatrix::from_fn(n, k, |i, j| fv[(i, j)]);
    let sigma: Vec<f64> = (0..k).map(|j| s[j]).collect();
    debug_assert!(sigma.windows(2).all(|w| w[0] >= w[1]));
    Ok(ThinSvd { u, sigma, v })
}
