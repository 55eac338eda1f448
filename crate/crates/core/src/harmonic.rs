//! Global sections `H⁰ = ker δ = ker Δ`, harmonic projection, and executable
//! checks of the kernel decomposition and harmonic injection statements.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, NULLSPACE_RTOL};
use crate::sheaf::{
    direct_sum_permutation, verify_subrepresentation, CellularSheaf, Subrepresentation,
    SUBREP_TOL,
};

/// Orthonormal basis of `ker δ` (`N₀ × h`).
#[derive(Debug, Clone)]
pub struct HarmonicBasis {
    pub basis: DMatrix<f64>,
    /// Relative singular-value cutoff used for the rank decision.
    pub tol: f64,
    /// Largest singular value of δ.
    pub sigma_max: f64,
    /// A singular value of δ lies within a factor 10 of the cutoff.
    pub borderline: bool,
}

impl HarmonicBasis {
    /// `h = dim H⁰`
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `B Bᵀ x`
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.basis.nrows() {
            return Err(Error::Structural(format!(
                "signal has length {}, basis has {} rows",
                x.len(),
                self.basis.nrows()
            )));
        }
        Ok(&self.basis * (self.basis.tr_mul(x)))
    }

    /// Channel-wise projection of an `N₀ × f` signal.
    pub fn project_multi(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.basis.nrows() {
            return Err(Error::Structural("signal row count does not match N₀".into()));
        }
        Ok(&self.basis * (self.basis.tr_mul(x)))
    }
}

/// Numerical nullspace of the coboundary, cutoff `1e-10 · σ_max(δ)`.
pub fn kernel_basis(sheaf: &CellularSheaf) -> Result<HarmonicBasis> {
    let delta = sheaf.coboundary_matrix();
    let ns = linalg::nullspace(&delta, NULLSPACE_RTOL)?;
    Ok(HarmonicBasis {
        basis: ns.basis,
        tol: NULLSPACE_RTOL,
        sigma_max: ns.sigma_max,
        borderline: ns.borderline,
    })
}

/// Convenience wrapper: `Π_{H⁰} x`.
pub fn harmonic_projection(basis: &HarmonicBasis, x: &DVector<f64>) -> Result<DVector<f64>> {
    basis.project(x)
}

/// Outcome of [`verify_kernel_decomposition`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDecompositionReport {
    pub dim_sum: usize,
    pub dim_f: usize,
    pub dim_g: usize,
    /// Largest principal angle between the embedded `H⁰(f) ⊕ H⁰(g)` and `H⁰(f ⊕ g)`.
    pub max_principal_angle: f64,
    pub borderline: bool,
    pub certified: bool,
}

/// Maximum principal angle accepted by the decomposition and injection checks.
pub const ANGLE_TOL: f64 = 1e-8;

/// Computes `H⁰` of `f`, `g` and `f ⊕ g` and compares the spans.
pub fn verify_kernel_decomposition(
    f: &CellularSheaf,
    g: &CellularSheaf,
) -> Result<KernelDecompositionReport> {
    let sum = f.direct_sum(g)?;
    let (hf, (hg, hs)) = rayon::join(
        || kernel_basis(f),
        || rayon::join(|| kernel_basis(g), || kernel_basis(&sum)),
    );
    let (hf, hg, hs) = (hf?, hg?, hs?);

    let perm = direct_sum_permutation(f.dims(), g.dims());
    let n0f = f.dims().total_vertex();
    let mut embedded = DMatrix::zeros(sum.dims().total_vertex(), hf.dim() + hg.dim());
    for c in 0..hf.dim() {
        for i in 0..n0f {
            embedded[(perm[i], c)] = hf.basis[(i, c)];
        }
    }
    for c in 0..hg.dim() {
        for i in 0..g.dims().total_vertex() {
            embedded[(perm[n0f + i], hf.dim() + c)] = hg.basis[(i, c)];
        }
    }
    let angle = linalg::max_principal_angle(&embedded, &hs.basis)?;
    let additive = hs.dim() == hf.dim() + hg.dim();
    Ok(KernelDecompositionReport {
        dim_sum: hs.dim(),
        dim_f: hf.dim(),
        dim_g: hg.dim(),
        max_principal_angle: angle,
        borderline: hf.borderline || hg.borderline || hs.borderline,
        certified: additive && angle <= ANGLE_TOL,
    })
}

/// Outcome of [`verify_harmonic_injection`].
#[derive(Debug, Clone)]
pub struct InjectionReport {
    /// `dim H⁰(F′)`
    pub sub_dim: usize,
    /// `dim H⁰(F)`
    pub full_dim: usize,
    /// `‖δ_F Q‖_F / σ_max(δ_F)` for an orthonormal basis `Q` of the injected space.
    pub residual: f64,
    pub full_rank: bool,
    /// Injected sections as vertex signals of `F` (`N₀ × sub_dim`).
    pub embedded: DMatrix<f64>,
    pub certified: bool,
}

/// Residual accepted for injected sections.
pub const INJECTION_RESIDUAL_TOL: f64 = 1e-8;

/// Computes `H⁰` of the induced sheaf on `sub`, maps it into `C⁰(G; F)` and
/// checks that it lands in `ker Δ_F` without losing rank.
pub fn verify_harmonic_injection(
    sheaf: &CellularSheaf,
    sub: &Subrepresentation,
) -> Result<InjectionReport> {
    let check = verify_subrepresentation(sheaf, sub, SUBREP_TOL)?;
    if !check.certified {
        return Err(Error::Precondition(format!(
            "not a subrepresentation (worst incidence {:?}, defect {:.3e})",
            check.worst_incidence, check.worst_ratio
        )));
    }
    let induced = sheaf.induced_on(sub)?;
    let sub_h = kernel_basis(&induced)?;
    let full_h = kernel_basis(sheaf)?;

    let embedded = linalg::block_diagonal(&sub.vertex) * &sub_h.basis;
    let full_rank = linalg::has_full_column_rank(&embedded, 1e-10)?;
    let residual = if embedded.ncols() == 0 || full_h.sigma_max == 0.0 {
        0.0
    } else {
        let q = linalg::range_basis(&embedded, 1e-10)?;
        sheaf.apply_coboundary(&q).norm() / full_h.sigma_max
    };
    let certified =
        full_rank && residual <= INJECTION_RESIDUAL_TOL && sub_h.dim() <= full_h.dim();
    Ok(InjectionReport {
        sub_dim: sub_h.dim(),
        full_dim: full_h.dim(),
        residual,
        full_rank,
        embedded,
        certified,
    })
}
