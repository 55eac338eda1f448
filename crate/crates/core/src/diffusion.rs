//! Sheaf heat flow `Ẋ = −Δ_F X`: exact spectral solution, explicit Euler
//! layers with energy tracking, and an oversmoothing probe.
//!
//! Signals are `N₀ × f` matrices (one column per feature channel).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::{kernel_basis, HarmonicBasis};
use crate::linalg;
use crate::sheaf::{find_trivial_lines, CellularSheaf};

/// Eigendecomposition `Δ = U Λ Uᵀ`, reusable across times.
#[derive(Debug, Clone)]
pub struct SpectralDiffuser {
    /// Ascending, clamped at zero.
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDiffuser {
    pub fn new(sheaf: &CellularSheaf) -> Result<Self> {
        let (mut values, vectors) = linalg::symmetric_eigen(&sheaf.laplacian())?;
        values.iter_mut().for_each(|l| *l = l.max(0.0));
        Ok(SpectralDiffuser {
            eigenvalues: values,
            eigenvectors: vectors,
        })
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest eigenvalue above the harmonic part, given `h = dim H⁰`.
    pub fn smallest_positive(&self, h: usize) -> Option<f64> {
        self.eigenvalues.get(h).copied()
    }

    /// `U e^{−tΛ} Uᵀ x₀`; returns `x₀` unchanged at `t = 0`.
    pub fn diffuse(&self, x0: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Precondition(format!("diffusion time must be ≥ 0, got {t}")));
        }
        if x0.nrows() != self.eigenvectors.nrows() {
            return Err(Error::Structural("signal row count does not match N₀".into()));
        }
        if t == 0.0 {
            return Ok(x0.clone());
        }
        let mut coeffs = self.eigenvectors.tr_mul(x0);
        for (i, mut row) in coeffs.row_iter_mut().enumerate() {
            row *= (-t * self.eigenvalues[i]).exp();
        }
        Ok(&self.eigenvectors * coeffs)
    }
}

pub fn spectral_diffuse(sheaf: &CellularSheaf, x0: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    SpectralDiffuser::new(sheaf)?.diffuse(x0, t)
}

/// How the explicit step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `α = 1 / λ_max(Δ)`.
    Auto,
    /// `α = factor / λ_max(Δ)`; factors above 2 diverge.
    Scaled(f64),
    Fixed(f64),
}

impl Default for StepSize {
    fn default() -> Self {
        StepSize::Auto
    }
}

impl std::str::FromStr for StepSize {
    type Err = Error;

    /// `auto`, `scaled:<factor>` or `fixed:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Precondition(format!("step size {s:?}: expected auto, scaled:<f> or fixed:<a>"));
        let number = |v: &str| -> Result<f64> {
            let x: f64 = v.parse().map_err(|_| bad())?;
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(bad())
            }
        };
        match s.split_once(':') {
            None if s == "auto" => Ok(StepSize::Auto),
            Some(("scaled", v)) => Ok(StepSize::Scaled(number(v)?)),
            Some(("fixed", v)) => Ok(StepSize::Fixed(number(v)?)),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for StepSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepSize::Auto => write!(f, "auto"),
            StepSize::Scaled(x) => write!(f, "scaled:{x}"),
            StepSize::Fixed(x) => write!(f, "fixed:{x}"),
        }
    }
}

impl StepSize {
    /// Resolves to a concrete α. A zero Laplacian gets α = factor (any α is inert).
    pub fn resolve(self, lambda_max: f64) -> f64 {
        let scale = |f: f64| if lambda_max > 0.0 { f / lambda_max } else { f };
        match self {
            StepSize::Auto => scale(1.0),
            StepSize::Scaled(f) => scale(f),
            StepSize::Fixed(a) => a,
        }
    }
}

/// `α λ_max` must stay below this for non-divergent Euler steps.
pub const STABLE_STEP_LIMIT: f64 = 2.0 - 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionMode {
    Spectral { time: f64 },
    Euler { step: StepSize, layers: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionConfig {
    pub mode: DiffusionMode,
    pub energy_trace: bool,
}

#[derive(Debug, Clone)]
pub struct DiffusionReport {
    pub final_state: DMatrix<f64>,
    /// `(step, Dirichlet energy)`, starting at step 0.
    pub energy_trace: Vec<(usize, f64)>,
    pub converged: bool,
    /// First step whose state (or energy) was not finite; iteration stops there.
    pub nonfinite_at: Option<usize>,
    pub step_size: f64,
    pub lambda_max: f64,
    /// `α λ_max ≤ 2 − 1e-6`.
    pub stable_step: bool,
}

/// Steps whose update is below this (relative to `‖x₀‖`) count as converged.
pub const CONVERGED_RTOL: f64 = 1e-10;

/// Iterates `x ← x − αΔx` for `layers` steps. Non-finite values end the run
/// and are reported rather than raised.
pub fn euler_diffuse(
    sheaf: &CellularSheaf,
    x0: &DMatrix<f64>,
    step: StepSize,
    layers: usize,
    energy_trace: bool,
) -> Result<DiffusionReport> {
    sheaf.check_cochain0(x0.nrows())?;
    if layers == 0 {
        return Err(Error::Precondition("layer count must be at least 1".into()));
    }
    let lambda_max = linalg::lambda_max(&sheaf.laplacian())?;
    let alpha = step.resolve(lambda_max);
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Precondition(format!("step size must be positive, got {alpha}")));
    }
    let mut trace = Vec::new();
    if energy_trace {
        trace.push((0, sheaf.dirichlet_energy_multi(x0)?));
    }
    let scale = x0.norm().max(f64::MIN_POSITIVE);
    let mut x = x0.clone();
    let mut nonfinite_at = None;
    let mut last_update = f64::INFINITY;
    for l in 1..=layers {
        let update = sheaf.apply_laplacian(&x) * alpha;
        x -= &update;
        if x.iter().any(|v| !v.is_finite()) {
            nonfinite_at = Some(l);
            break;
        }
        if energy_trace {
            let e = sheaf.dirichlet_energy_multi(&x)?;
            if !e.is_finite() {
                nonfinite_at = Some(l);
                break;
            }
            trace.push((l, e));
        }
        last_update = update.norm();
    }
    Ok(DiffusionReport {
        final_state: x,
        energy_trace: trace,
        converged: nonfinite_at.is_none() && last_update <= CONVERGED_RTOL * scale,
        nonfinite_at,
        step_size: alpha,
        lambda_max,
        stable_step: alpha * lambda_max <= STABLE_STEP_LIMIT,
    })
}

/// Runs whichever mode `config` selects and wraps the result in a report.
pub fn diffuse(
    sheaf: &CellularSheaf,
    x0: &DMatrix<f64>,
    config: &DiffusionConfig,
) -> Result<DiffusionReport> {
    match config.mode {
        DiffusionMode::Euler { step, layers } => {
            euler_diffuse(sheaf, x0, step, layers, config.energy_trace)
        }
        DiffusionMode::Spectral { time } => {
            let sd = SpectralDiffuser::new(sheaf)?;
            let out = sd.diffuse(x0, time)?;
            let mut trace = Vec::new();
            if config.energy_trace {
                trace.push((0, sheaf.dirichlet_energy_multi(x0)?));
                trace.push((1, sheaf.dirichlet_energy_multi(&out)?));
            }
            let nonfinite = out.iter().any(|v| !v.is_finite());
            Ok(DiffusionReport {
                final_state: out,
                energy_trace: trace,
                converged: true,
                nonfinite_at: nonfinite.then_some(1),
                step_size: time,
                lambda_max: sd.lambda_max(),
                stable_step: true,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct OversmoothingReport {
    /// `Π_{H⁰} x₀`, the t → ∞ limit.
    pub limit: DVector<f64>,
    /// `dim H⁰`
    pub h: usize,
    /// The limit is (numerically) zero.
    pub sections_vanish: bool,
    /// `dim` of the trivial-line solution space.
    pub trivial_line_dim: usize,
    /// Relative distance from the limit to graph-constant signals
    /// (`x_v = c` for all v). `None` for non-uniform vertex stalks or a vanishing limit.
    pub residual_to_constant: Option<f64>,
    /// Relative distance from the limit to the span of constant-coefficient
    /// trivial-line signals `x_v = c w_v`. `None` without trivial lines or
    /// with a vanishing limit.
    pub residual_to_trivial_lines: Option<f64>,
}

fn relative_residual(x: &DVector<f64>, q: &DMatrix<f64>) -> f64 {
    let r = x - q * q.tr_mul(x);
    r.norm() / x.norm()
}

/// Measures how far the diffusion limit of `x₀` is from collapse onto constants.
pub fn oversmoothing_probe(sheaf: &CellularSheaf, x0: &DVector<f64>) -> Result<OversmoothingReport> {
    sheaf.check_cochain0(x0.len())?;
    let basis: HarmonicBasis = kernel_basis(sheaf)?;
    let limit = basis.project(x0)?;
    let vanish = basis.dim() == 0 || limit.norm() <= 1e-12 * x0.norm();
    let lines = find_trivial_lines(sheaf)?;

    let n = sheaf.graph().num_vertices();
    let residual_to_constant = match (vanish, sheaf.dims().uniform_vertex_dim()) {
        (false, Some(d)) => {
            let scale = 1.0 / (n as f64).sqrt();
            let q = DMatrix::from_fn(n * d, d, |r, c| if r % d == c { scale } else { 0.0 });
            Some(relative_residual(&limit, &q))
        }
        _ => None,
    };
    let residual_to_trivial_lines = if vanish || lines.is_empty() {
        None
    } else {
        let signals = DMatrix::from_columns(
            &(0..lines.dim()).map(|c| lines.vertex_signal(c)).collect::<Vec<_>>(),
        );
        let q = linalg::range_basis(&signals, 1e-10)?;
        Some(relative_residual(&limit, &q))
    };
    Ok(OversmoothingReport {
        limit,
        h: basis.dim(),
        sections_vanish: vanish,
        trivial_line_dim: lines.dim(),
        residual_to_constant,
        residual_to_trivial_lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quiver::Graph;

    fn column(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn time_zero_is_identity() {
        let s = CellularSheaf::identity(Graph::path(3).unwrap(), 1).unwrap();
        let x = column(&[1.0, -2.0, 0.5]);
        assert_eq!(spectral_diffuse(&s, &x, 0.0).unwrap(), x);
    }

    #[test]
    fn long_time_reaches_mean() {
        let s = CellularSheaf::identity(Graph::path(3).unwrap(), 1).unwrap();
        let x = column(&[3.0, 0.0, 0.0]);
        let out = spectral_diffuse(&s, &x, 1e3).unwrap();
        for v in out.iter() {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_time_rejected() {
        let s = CellularSheaf::identity(Graph::path(2).unwrap(), 1).unwrap();
        assert!(spectral_diffuse(&s, &column(&[1.0, 0.0]), -1.0).is_err());
    }

    #[test]
    fn euler_monotone_at_auto_step() {
        let s = CellularSheaf::identity(Graph::cycle(6).unwrap(), 1).unwrap();
        let x = column(&[1.0, -2.0, 0.5, 4.0, 0.0, 1.0]);
        let r = euler_diffuse(&s, &x, StepSize::Auto, 50, true).unwrap();
        assert!(r.stable_step && r.nonfinite_at.is_none());
        for w in r.energy_trace.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
    }

    #[test]
    fn euler_diverges_past_two() {
        let s = CellularSheaf::identity(Graph::cycle(6).unwrap(), 1).unwrap();
        let x = column(&[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        let r = euler_diffuse(&s, &x, StepSize::Scaled(3.0), 40, true).unwrap();
        assert!(!r.stable_step);
        let first = r.energy_trace.first().unwrap().1;
        let last = r.energy_trace.last().unwrap().1;
        assert!(last > 1e20 * first);
    }

    #[test]
    fn euler_reports_nonfinite() {
        let s = CellularSheaf::identity(Graph::cycle(4).unwrap(), 1).unwrap();
        let x = column(&[1.0, -1.0, 1.0, -1.0]);
        let r = euler_diffuse(&s, &x, StepSize::Scaled(1e6), 200, true).unwrap();
        let at = r.nonfinite_at.expect("overflow expected");
        assert_eq!(r.energy_trace.last().unwrap().0, at - 1);
    }

    #[test]
    fn probe_identity_sheaf_is_constant() {
        let s = CellularSheaf::identity(Graph::cycle(5).unwrap(), 2).unwrap();
        let x = DVector::from_fn(10, |i, _| (i as f64 * 0.7).sin());
        let r = oversmoothing_probe(&s, &x).unwrap();
        assert_eq!(r.h, 2);
        assert!(r.residual_to_constant.unwrap() <= 1e-8);
        assert!(r.residual_to_trivial_lines.unwrap() <= 1e-8);
    }

    #[test]
    fn step_size_parses_and_prints() {
        for text in ["auto", "scaled:100", "fixed:0.25"] {
            let step: StepSize = text.parse().unwrap();
            assert_eq!(step.to_string(), text);
        }
        for bad in ["", "scaled", "fixed:-1", "scaled:nan", "half:2"] {
            assert!(bad.parse::<StepSize>().is_err(), "{bad}");
        }
    }
}
