//! Weighted least-squares plumbing shared by the IRLS loops.
//!
//! Every inner solve goes through a column-pivoted QR of the
//! square-root-weighted design, which is rank-revealing: singularity is
//! judged from the pivoted R diagonal rather than from a failed inversion.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold below which the design is declared singular.
pub(crate) const SINGULAR_TOL: f64 = 1e-10;

/// Minimizes `sum_k w_k (z_k - x_k' b)^2` over `b`.
///
/// Requires `w_k > 0` for every row. Errors with `SingularDesign` when the
/// weighted design has a pivoted R diagonal entry smaller than
/// `SINGULAR_TOL` relative to the largest one.
pub(crate) fn solve_weighted_least_squares(
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (rows, cols) = x.shape();
    if rows < cols {
        return Err(Error::SingularDesign);
    }

    let mut xw = x.clone();
    let mut zw = z.clone();
    for k in 0..rows {
        let s = w[k].sqrt();
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::Domain(format!(
                "working weight must be positive and finite, got {}",
                w[k]
            )));
        }
        xw.row_mut(k).scale_mut(s);
        zw[k] *= s;
    }

    let qr = xw.col_piv_qr();
    let r = qr.r();
    check_rank(&r)?;

    // X_w P = Q R, so the normal equations reduce to R (P' b) = Q' z_w.
    qr.q_tr_mul(&mut zw);
    let mut coefficients = DVector::from_fn(cols, |k, _| zw[k]);
    if !r.solve_upper_triangular_mut(&mut coefficients) {
        return Err(Error::SingularDesign);
    }
    let permutation = permutation_matrix(&qr);
    Ok(&permutation * coefficients)
}

/// `(X' W X)^-1` on its own, for covariance and leverage computations at the
/// final weights of a converged fit.
pub(crate) fn gram_inverse(x: &DMatrix<f64>, w: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = x.shape();
    if rows < cols {
        return Err(Error::SingularDesign);
    }
    let mut xw = x.clone();
    for k in 0..rows {
        xw.row_mut(k).scale_mut(w[k].sqrt());
    }
    let qr = xw.col_piv_qr();
    let r = qr.r();
    check_rank(&r)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(cols, cols))
        .ok_or(Error::SingularDesign)?;
    let permutation = permutation_matrix(&qr);
    Ok(&permutation * (&r_inv * r_inv.transpose()) * permutation.transpose())
}

/// Hat-matrix diagonal of the weighted least-squares smoother:
/// `q_k = w_k x_k' (X' W X)^-1 x_k`.
pub(crate) fn leverages(x: &DMatrix<f64>, w: &DVector<f64>, gram_inv: &DMatrix<f64>) -> Vec<f64> {
    let rows = x.nrows();
    (0..rows)
        .map(|k| {
            let xr = x.row(k);
            w[k] * (xr * gram_inv * xr.transpose())[(0, 0)]
        })
        .collect()
}

fn check_rank(r: &DMatrix<f64>) -> Result<()> {
    let lead = r[(0, 0)].abs();
    if lead == 0.0 || !lead.is_finite() {
        return Err(Error::SingularDesign);
    }
    for k in 1..r.ncols() {
        if r[(k, k)].abs() < SINGULAR_TOL * lead {
            return Err(Error::SingularDesign);
        }
    }
    Ok(())
}

/// Materializes the column permutation as a matrix, mirroring the order of
/// operations nalgebra's own `ColPivQR::solve` applies.
fn permutation_matrix(qr: &nalgebra::ColPivQR<f64, nalgebra::Dyn, nalgebra::Dyn>) -> DMatrix<f64> {
    let cols = qr.r().ncols();
    let mut p = DMatrix::identity(cols, cols);
    qr.p().inv_permute_rows(&mut p);
    p
}
