//! Quiver moment maps, the central and θ-shifted moment penalties, admissible
//! stability parameters and the equal-stalk stability wall.
//!
//! Real formulation throughout: adjoints are transposes. Sign convention:
//! `μ_v = −Σ_e AᵀA` (negative semidefinite), `μ_e = Σ_v AAᵀ` (positive
//! semidefinite), and a subrepresentation destabilizes when `θ · dim F′ < 0`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::frobenius_sq;
use crate::quiver::DimensionVector;
use crate::sheaf::{verify_subrepresentation, CellularSheaf, Subrepresentation, SUBREP_TOL};

/// Per-object moment-map components.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMapValue {
    pub vertex: Vec<DMatrix<f64>>,
    pub edge: Vec<DMatrix<f64>>,
}

impl MomentMapValue {
    /// Components in quiver-object order (vertices, then edges).
    pub fn components(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.vertex.iter().chain(&self.edge)
    }

    pub fn traces(&self) -> Vec<f64> {
        self.components().map(|m| m.trace()).collect()
    }
}

pub fn moment_map(sheaf: &CellularSheaf) -> MomentMapValue {
    let dims = sheaf.dims();
    let mut vertex: Vec<DMatrix<f64>> = dims
        .vertex_dims()
        .iter()
        .map(|&d| DMatrix::zeros(d, d))
        .collect();
    let mut edge: Vec<DMatrix<f64>> = dims
        .edge_dims()
        .iter()
        .map(|&d| DMatrix::zeros(d, d))
        .collect();
    for (i, a) in sheaf.maps().iter().enumerate() {
        let v = sheaf.graph().incidence_vertex(i);
        vertex[v] -= a.tr_mul(a);
        edge[i / 2] += a * a.transpose();
    }
    MomentMapValue { vertex, edge }
}

/// Traceless part `μ − (tr μ / d) I`.
pub(crate) fn traceless(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let mut out = m.clone();
    if d > 0 {
        let shift = m.trace() / d as f64;
        for k in 0..d {
            out[(k, k)] -= shift;
        }
    }
    out
}

/// `R_cent = Σ_i ‖μ_i − (tr μ_i / d_i) I‖_F²`
pub fn cent_mm(sheaf: &CellularSheaf) -> f64 {
    cent_mm_of(&moment_map(sheaf))
}

pub fn cent_mm_of(mu: &MomentMapValue) -> f64 {
    mu.components().map(|m| frobenius_sq(&traceless(m))).sum()
}

/// A stability parameter, one scalar per quiver object (vertices, then edges).
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    values: Vec<f64>,
    admissible: bool,
}

/// Relative admissibility tolerance: `|θ·d| ≤ 1e-12 ‖d‖ ‖θ‖`.
pub const ADMISSIBLE_RTOL: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl ThetaVector {
    /// Wraps arbitrary values, recording whether `θ · d = 0` holds to tolerance.
    pub fn new(values: Vec<f64>, dims: &DimensionVector) -> Result<Self> {
        let d = dims_f64(dims);
        if values.len() != d.len() {
            return Err(Error::Structural(format!(
                "θ has {} entries, quiver has {} objects",
                values.len(),
                d.len()
            )));
        }
        let admissible = dot(&values, &d).abs() <= ADMISSIBLE_RTOL * norm(&d) * norm(&values);
        Ok(ThetaVector { values, admissible })
    }

    pub fn zeros(dims: &DimensionVector) -> Self {
        ThetaVector {
            values: vec![0.0; dims.num_objects()],
            admissible: true,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_admissible(&self) -> bool {
        self.admissible
    }

    pub fn vertex_part(&self, n_vertices: usize) -> &[f64] {
        &self.values[..n_vertices]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// `θ · d`
    pub fn pairing(&self, dims: &DimensionVector) -> f64 {
        dot(&self.values, &dims_f64(dims))
    }
}

fn dims_f64(dims: &DimensionVector) -> Vec<f64> {
    dims.object_dims().into_iter().map(|d| d as f64).collect()
}

/// Orthogonal projection onto `{θ : θ · d = 0}`:
/// `θ_i = θ̃_i − (Σ_j d_j θ̃_j / Σ_j d_j²) d_i`.
///
/// A second correction pass removes the rounding residue of the first, so
/// the output is admissible to working precision even when `θ̃` is nearly
/// parallel to `d`.
pub fn project_theta(raw: &[f64], dims: &DimensionVector) -> Result<ThetaVector> {
    let d = dims_f64(dims);
    if raw.len() != d.len() {
        return Err(Error::Structural(format!(
            "raw θ has {} entries, quiver has {} objects",
            raw.len(),
            d.len()
        )));
    }
    let dd = dot(&d, &d);
    let mut values = raw.to_vec();
    for _ in 0..2 {
        let c = dot(&values, &d) / dd;
        for (t, di) in values.iter_mut().zip(&d) {
            *t -= c * di;
        }
    }
    Ok(ThetaVector {
        values,
        admissible: true,
    })
}

fn require_admissible(theta: &ThetaVector, dims: &DimensionVector) -> Result<()> {
    if theta.values.len() != dims.num_objects() {
        return Err(Error::Structural("θ length does not match the quiver".into()));
    }
    if !theta.admissible {
        return Err(Error::Precondition(
            "θ is not admissible (θ·d ≠ 0); pass it through project_theta".into(),
        ));
    }
    Ok(())
}

/// `R_{θ-μ} = Σ_i ‖μ_i − θ_i I‖_F²`
pub fn theta_mm(sheaf: &CellularSheaf, theta: &ThetaVector) -> Result<f64> {
    require_admissible(theta, sheaf.dims())?;
    Ok(theta_mm_of(&moment_map(sheaf), theta.values()))
}

pub(crate) fn shifted(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for k in 0..m.nrows() {
        out[(k, k)] -= t;
    }
    out
}

pub(crate) fn theta_mm_of(mu: &MomentMapValue, theta: &[f64]) -> f64 {
    mu.components()
        .zip(theta)
        .map(|(m, &t)| frobenius_sq(&shifted(m, t)))
        .sum()
}

/// `θ · dim F′ = Σ_i θ_i k_i`.
pub fn theta_weight(theta: &ThetaVector, sub_dims: &[usize]) -> Result<f64> {
    if sub_dims.len() != theta.values.len() {
        return Err(Error::Structural("sub-dimension vector length mismatch".into()));
    }
    Ok(theta
        .values
        .iter()
        .zip(sub_dims)
        .map(|(t, &k)| t * k as f64)
        .sum())
}

/// `θ(F_triv) = Σ_v θ_v + Σ_e θ_e`
pub fn trivial_weight(theta: &ThetaVector) -> f64 {
    theta.values.iter().sum()
}

/// Weights at or above `−1e-12` are treated as non-destabilizing.
pub const SEMISTABLE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateVerdict {
    pub weight: f64,
    pub violates: bool,
}

/// Verdicts for a supplied list of subrepresentations. Passing every
/// candidate does not prove semistability; only the listed candidates are tested.
#[derive(Debug, Clone, PartialEq)]
pub struct KingReport {
    pub verdicts: Vec<CandidateVerdict>,
    pub no_violations: bool,
}

pub fn check_king_semistable(
    sheaf: &CellularSheaf,
    theta: &ThetaVector,
    candidates: &[Subrepresentation],
) -> Result<KingReport> {
    require_admissible(theta, sheaf.dims())?;
    let mut verdicts = Vec::with_capacity(candidates.len());
    for (k, sub) in candidates.iter().enumerate() {
        let rep = verify_subrepresentation(sheaf, sub, SUBREP_TOL)?;
        if !rep.certified {
            return Err(Error::Precondition(format!(
                "candidate {k} is not a subrepresentation"
            )));
        }
        let weight = theta_weight(theta, &sub.object_dims())?;
        verdicts.push(CandidateVerdict {
            weight,
            violates: weight < -SEMISTABLE_SLACK,
        });
    }
    let no_violations = verdicts.iter().all(|v| !v.violates);
    Ok(KingReport {
        verdicts,
        no_violations,
    })
}

/// Result of [`stability_wall_diagnostic`].
#[derive(Debug, Clone)]
pub struct WallReport {
    /// All stalks share one dimension.
    pub uniform: bool,
    /// Every admissible θ gives `θ(F_triv) = 0`.
    pub forced_trivial_weight_zero: bool,
    /// Largest `|θ(F_triv)|` over the random projected draws (uniform case).
    pub max_abs_trivial_weight: f64,
    pub draws: usize,
    /// Admissible θ along the direction of most negative trivial weight,
    /// scaled so its largest entry is 1 (non-uniform case).
    pub escape_theta: Option<ThetaVector>,
    pub escape_weight: Option<f64>,
}

/// Number of random admissible θ tested in the uniform case.
pub const WALL_DRAWS: usize = 100;

/// Decides whether the trivial subrepresentation is pinned to the wall
/// `θ(F_triv) = 0` for this dimension vector.
///
/// For uniform dims every admissible θ satisfies `Σθ_i = 0`; this is checked
/// on random projected draws. Otherwise the all-ones weight vector is
/// projected off `d` and negated, giving the admissible direction with the
/// most negative trivial weight; it is scaled so that `max_i θ_i = 1`. On a
/// graph with `d_v = 3`, `d_e = 2` throughout this yields `θ_v = 1` and
/// `θ(F_triv) = −|V|/2`.
pub fn stability_wall_diagnostic<R: Rng + ?Sized>(
    dims: &DimensionVector,
    rng: &mut R,
) -> Result<WallReport> {
    let n = dims.num_objects();
    if dims.is_uniform() {
        let mut worst: f64 = 0.0;
        for _ in 0..WALL_DRAWS {
            let raw: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let theta = project_theta(&raw, dims)?;
            worst = worst.max(trivial_weight(&theta).abs());
        }
        return Ok(WallReport {
            uniform: true,
            forced_trivial_weight_zero: true,
            max_abs_trivial_weight: worst,
            draws: WALL_DRAWS,
            escape_theta: None,
            escape_weight: None,
        });
    }
    let ones = vec![1.0; n];
    let p = project_theta(&ones, dims)?;
    // Σ d_i p_i = 0 with p ≠ 0 forces a negative entry, so the scale is positive.
    let scale = -p.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let values: Vec<f64> = p.values.iter().map(|x| -x / scale).collect();
    let theta = ThetaVector {
        values,
        admissible: true,
    };
    let w = trivial_weight(&theta);
    Ok(WallReport {
        uniform: false,
        forced_trivial_weight_zero: false,
        max_abs_trivial_weight: 0.0,
        draws: 0,
        escape_theta: Some(theta),
        escape_weight: Some(w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quiver::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_incidence(a: DMatrix<f64>) -> CellularSheaf {
        // One edge; tail carries `a`, head carries zero so only one incidence contributes.
        let (de, dv) = a.shape();
        let g = Graph::path(2).unwrap();
        let dims = DimensionVector::new(vec![dv, dv], vec![de]).unwrap();
        CellularSheaf::new(g, dims, vec![a, DMatrix::zeros(de, dv)]).unwrap()
    }

    #[test]
    fn unit_map_moment() {
        let mu = moment_map(&single_incidence(DMatrix::identity(2, 2)));
        assert_eq!(mu.vertex[0], -DMatrix::<f64>::identity(2, 2));
        assert_eq!(mu.edge[0], DMatrix::<f64>::identity(2, 2));
        assert_eq!(mu.vertex[1], DMatrix::<f64>::zeros(2, 2));
    }

    #[test]
    fn worked_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let s = single_incidence(a);
        let mu = moment_map(&s);
        assert_eq!(mu.vertex[0], -DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]));
        assert_eq!(mu.edge[0], DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 1.0]));
        assert!((cent_mm(&s) - 32.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_stalks_are_central() {
        let s = CellularSheaf::scalar(Graph::cycle(4).unwrap(), &[(1.0, 2.0), (-3.0, 0.5), (0.1, 7.0), (2.0, 2.0)])
            .unwrap();
        assert_eq!(cent_mm(&s), 0.0);
    }

    #[test]
    fn theta_projection_examples() {
        let g = Graph::path(2).unwrap();
        let dims = DimensionVector::uniform(&g, 3, 2).unwrap();
        let t = project_theta(&[1.0, 1.0, -3.0], &dims).unwrap();
        assert_eq!(t.values(), &[1.0, 1.0, -3.0]);
        assert_eq!(theta_weight(&t, &[1, 1, 1]).unwrap(), -1.0);

        let dims = DimensionVector::uniform(&g, 2, 2).unwrap();
        let t = project_theta(&[1.0, 2.0, 6.0], &dims).unwrap();
        for (x, want) in t.values().iter().zip([-2.0, -1.0, 3.0]) {
            assert!((x - want).abs() < 1e-15);
        }
    }

    #[test]
    fn theta_mm_needs_admissible_theta() {
        let s = single_incidence(DMatrix::identity(2, 2));
        let raw = ThetaVector::new(vec![1.0, 0.0, 0.0], s.dims()).unwrap();
        assert!(!raw.is_admissible());
        assert!(matches!(theta_mm(&s, &raw), Err(Error::Precondition(_))));
    }

    #[test]
    fn theta_mm_zero_at_matching_shift() {
        // μ_v0 = −I, μ_v1 = 0, μ_e = I with d = (2, 2, 2): θ = (−1, 0, 1) is admissible.
        let s = single_incidence(DMatrix::identity(2, 2));
        let theta = ThetaVector::new(vec![-1.0, 0.0, 1.0], s.dims()).unwrap();
        assert!(theta.is_admissible());
        assert_eq!(theta_mm(&s, &theta).unwrap(), 0.0);
    }

    #[test]
    fn king_verdicts() {
        let g = Graph::path(2).unwrap();
        let dims = DimensionVector::uniform(&g, 3, 2).unwrap();
        let w3 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let w2 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let a = &w2 * w3.transpose();
        let s = CellularSheaf::new(g, dims.clone(), vec![a.clone(), a]).unwrap();
        let line = Subrepresentation {
            vertex: vec![w3.clone(), w3],
            edge: vec![w2],
        };
        let full = Subrepresentation::full(&dims);
        let theta = project_theta(&[1.0, 1.0, -3.0], &dims).unwrap();
        let r = check_king_semistable(&s, &theta, &[line.clone(), full.clone()]).unwrap();
        assert!(r.verdicts[0].violates && r.verdicts[0].weight == -1.0);
        assert!(!r.verdicts[1].violates && r.verdicts[1].weight.abs() < 1e-12);
        assert!(!r.no_violations);
        let zero = ThetaVector::zeros(&dims);
        assert!(check_king_semistable(&s, &zero, &[line, full]).unwrap().no_violations);
    }

    #[test]
    fn wall_uniform_and_escape() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Graph::cycle(5).unwrap();
        let uni = DimensionVector::uniform(&g, 3, 3).unwrap();
        let r = stability_wall_diagnostic(&uni, &mut rng).unwrap();
        assert!(r.uniform && r.forced_trivial_weight_zero);
        assert!(r.max_abs_trivial_weight <= 1e-12);

        let g = Graph::path(2).unwrap();
        let rect = DimensionVector::uniform(&g, 3, 2).unwrap();
        let r = stability_wall_diagnostic(&rect, &mut rng).unwrap();
        let theta = r.escape_theta.unwrap();
        for (x, want) in theta.values().iter().zip([1.0, 1.0, -3.0]) {
            assert!((x - want).abs() < 1e-14);
        }
        assert!((r.escape_weight.unwrap() + 1.0).abs() < 1e-14);
        assert!(theta.pairing(&rect).abs() < 1e-14);

        let g = Graph::cycle(6).unwrap();
        let rect = DimensionVector::uniform(&g, 3, 2).unwrap();
        let r = stability_wall_diagnostic(&rect, &mut rng).unwrap();
        assert!((r.escape_weight.unwrap() + 3.0).abs() < 1e-12);
    }
}
