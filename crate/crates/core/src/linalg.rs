//! Dense linear-algebra helpers shared by the sheaf, harmonic and diffusion code.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. Rank decisions use a
//! singular-value cutoff relative to the largest singular value.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for numerical nullspaces.
pub const NULLSPACE_RTOL: f64 = 1e-10;

/// Orthonormal basis of a numerical nullspace together with rank diagnostics.
#[derive(Debug, Clone)]
pub struct Nullspace {
    /// n × k, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub sigma_max: f64,
    /// True when a singular value sits within a factor 10 of the cutoff on either side.
    pub borderline: bool,
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains non-finite entries")))
    }
}

/// Full SVD of `a` (rows padded with zeros up to the column count so that the
/// right singular vectors span all of ℝⁿ).
fn padded_svd(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = SVD::try_new(padded, false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD failed to converge".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD returned no right singular vectors".into()))?;
    Ok((svd.singular_values, v_t))
}

/// Numerical nullspace of `a` with cutoff `rtol · σ_max`.
pub fn nullspace(a: &DMatrix<f64>, rtol: f64) -> Result<Nullspace> {
    check_finite(a, "matrix")?;
    let n = a.ncols();
    if n == 0 {
        return Ok(Nullspace {
            basis: DMatrix::zeros(0, 0),
            sigma_max: 0.0,
            borderline: false,
        });
    }
    if a.nrows() == 0 || a.iter().all(|&x| x == 0.0) {
        return Ok(Nullspace {
            basis: DMatrix::identity(n, n),
            sigma_max: 0.0,
            borderline: false,
        });
    }
    let (sv, v_t) = padded_svd(a)?;
    let sigma_max = sv.max();
    let cutoff = rtol * sigma_max;
    let mut cols = Vec::new();
    let mut borderline = false;
    for (i, &s) in sv.iter().enumerate() {
        if s <= cutoff {
            cols.push(v_t.row(i).transpose());
        }
        if s > cutoff / 10.0 && s < cutoff * 10.0 {
            borderline = true;
        }
    }
    let basis = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Ok(Nullspace {
        basis,
        sigma_max,
        borderline,
    })
}

/// Orthonormal basis for the column space of `a`.
pub fn range_basis(a: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    check_finite(a, "matrix")?;
    let (m, n) = a.shape();
    if n == 0 || m == 0 {
        return Ok(DMatrix::zeros(m, 0));
    }
    let svd = SVD::try_new(a.clone(), true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD failed to converge".into()))?;
    let u = svd.u.expect("requested U");
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return Ok(DMatrix::zeros(m, 0));
    }
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rtol * sigma_max)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    Ok(if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    })
}

pub fn singular_values(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_finite(a, "matrix")?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    SVD::try_new(a.clone(), false, false, f64::EPSILON, 0)
        .map(|s| s.singular_values)
        .ok_or_else(|| Error::Numeric("SVD failed to converge".into()))
}

/// σ_min / σ_max; zero for singular or empty input.
pub fn reciprocal_condition(a: &DMatrix<f64>) -> Result<f64> {
    let sv = singular_values(a)?;
    if sv.is_empty() {
        return Ok(0.0);
    }
    let max = sv.max();
    if max == 0.0 {
        return Ok(0.0);
    }
    Ok(sv.min() / max)
}

/// True when every column block is linearly independent by the relative rank rule.
pub fn has_full_column_rank(a: &DMatrix<f64>, rtol: f64) -> Result<bool> {
    if a.ncols() == 0 {
        return Ok(true);
    }
    if a.ncols() > a.nrows() {
        return Ok(false);
    }
    let sv = singular_values(a)?;
    let max = sv.max();
    Ok(max > 0.0 && sv.min() > rtol * max)
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_finite(a, "symmetric matrix")?;
    let n = a.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver failed to converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok((values, vectors))
}

/// Largest eigenvalue of a symmetric matrix (eigenvalues only, no vectors).
pub fn lambda_max(a: &DMatrix<f64>) -> Result<f64> {
    check_finite(a, "symmetric matrix")?;
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let vals = a.clone().symmetric_eigenvalues();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigenvalues are not finite".into()));
    }
    Ok(vals.max())
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases. Computed from the sine side so that angles near zero
/// keep full relative precision. Bases of different width are π/2 apart.
pub fn max_principal_angle(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Result<f64> {
    if q1.ncols() != q2.ncols() {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    if q1.ncols() == 0 {
        return Ok(0.0);
    }
    let residual = q1 - q2 * (q2.transpose() * q1);
    let s = singular_values(&residual)?.max().min(1.0);
    Ok(s.asin())
}

/// Block-diagonal matrix from a list of (possibly rectangular, possibly empty) blocks.
pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn frobenius_sq(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_of_rank_one_row() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = nullspace(&a, NULLSPACE_RTOL).unwrap();
        assert_eq!(ns.basis.ncols(), 2);
        assert!((&a * &ns.basis).norm() < 1e-14);
        let gram = ns.basis.transpose() * &ns.basis;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn zero_matrix_has_full_nullspace() {
        let ns = nullspace(&DMatrix::zeros(2, 4), NULLSPACE_RTOL).unwrap();
        assert_eq!(ns.basis.ncols(), 4);
    }

    #[test]
    fn non_finite_rejected() {
        let a = DMatrix::from_row_slice(1, 2, &[f64::NAN, 1.0]);
        assert!(matches!(nullspace(&a, 1e-10), Err(Error::Numeric(_))));
    }

    #[test]
    fn principal_angle_small_is_resolved() {
        let eps: f64 = 1e-9;
        let q1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let q2 = DMatrix::from_column_slice(2, 1, &[eps.cos(), eps.sin()]);
        let angle = max_principal_angle(&q1, &q2).unwrap();
        assert!((angle - eps).abs() < 1e-15);
    }

    #[test]
    fn eigen_sorted_ascending() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - a).norm() < 1e-13);
    }

    #[test]
    fn block_diagonal_handles_empty_blocks() {
        let b = block_diagonal(&[DMatrix::identity(2, 1), DMatrix::zeros(1, 0)]);
        assert_eq!(b.shape(), (3, 1));
    }
}
