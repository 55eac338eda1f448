//! Randomized property suites behind the `verify` command.
//!
//! Each suite draws its instances from a seeded generator and returns a
//! [`PropertyReport`]. A suite passes when it records no failures; an error
//! raised while checking one instance is recorded as a failure of that
//! instance instead of aborting the suite.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::{euler_diffuse, SpectralDiffuser, StepSize};
use crate::error::{Error, Result};
use crate::harmonic::{kernel_basis, verify_harmonic_injection, verify_kernel_decomposition};
use crate::linalg;
use crate::model::{ModelConfig, SheafModel};
use crate::quiver::{DimensionVector, Graph};
use crate::samplers::{
    gaussian_matrix, random_connected_graph, random_dims, random_orthogonal, random_sheaf,
    sheaf_with_sections,
};
use crate::sheaf::{find_trivial_lines, verify_subrepresentation, CellularSheaf, Subrepresentation, SUBREP_TOL};
use crate::stability::{cent_mm, moment_map, project_theta, stability_wall_diagnostic, trivial_weight};

/// Outcome of one property suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub instances: usize,
    pub failures: Vec<String>,
    /// Largest residual observed; its meaning is suite-specific.
    pub max_residual: f64,
}

impl PropertyReport {
    fn new(property: &str) -> Self {
        PropertyReport {
            property: property.into(),
            instances: 0,
            failures: Vec::new(),
            max_residual: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.instances > 0
    }

    fn check(&mut self, residual: f64, ok: bool, detail: impl FnOnce() -> String) {
        self.instances += 1;
        // NaN residuals must surface in the report.
        if residual.is_nan() || residual > self.max_residual {
            self.max_residual = residual;
        }
        if !ok || residual.is_nan() {
            self.failures.push(format!("instance {}: {}", self.instances - 1, detail()));
        }
    }

    fn error(&mut self, e: Error) {
        self.instances += 1;
        self.failures.push(format!("instance {}: {e}", self.instances - 1));
    }

    fn absorb<T>(&mut self, r: Result<T>) -> Option<T> {
        r.map_err(|e| self.error(e)).ok()
    }
}

pub const DECOMPOSITION_PAIRS: usize = 100;
pub const INJECTION_CASES: usize = 50;
pub const TRIVIAL_LINE_CASES: usize = 50;
pub const MOMENT_SHEAVES: usize = 1000;
pub const UNIFORM_WALL_DRAWS: usize = 100;
pub const PROJECTION_DRAWS: usize = 10_000;
pub const DIFFUSION_CASES: usize = 50;
pub const GRADIENT_CASES: usize = 50;

/// Largest vertex count used by the random graph suites.
pub const MAX_VERTICES: usize = 8;
/// Largest stalk dimension used by the random suites.
pub const MAX_STALK_DIM: usize = 3;

pub const SUITES: [&str; 7] = [
    "kernel-decomposition",
    "harmonic-injection",
    "trivial-line-collapse",
    "moment-identities",
    "stability-wall",
    "diffusion-limit",
    "gradient-check",
];

pub fn run_suite(name: &str, seed: u64) -> Result<PropertyReport> {
    Ok(match name {
        "kernel-decomposition" => kernel_decomposition(seed, DECOMPOSITION_PAIRS),
        "harmonic-injection" => harmonic_injection(seed, INJECTION_CASES),
        "trivial-line-collapse" => trivial_line_collapse(seed, TRIVIAL_LINE_CASES),
        "moment-identities" => moment_identities(seed, MOMENT_SHEAVES),
        "stability-wall" => stability_wall(seed),
        "diffusion-limit" => diffusion_limit(seed, DIFFUSION_CASES),
        "gradient-check" => gradient_check(seed, GRADIENT_CASES),
        other => {
            return Err(Error::Precondition(format!(
                "unknown property suite {other:?}; expected one of {}",
                SUITES.join(", ")
            )))
        }
    })
}

/// Every suite, in [`SUITES`] order, each with its own seed stream.
pub fn run_all(seed: u64) -> Vec<PropertyReport> {
    use rayon::prelude::*;
    SUITES
        .par_iter()
        .enumerate()
        .map(|(k, name)| run_suite(name, crate::data::derive_seed(seed, k as u64)).expect("known suite"))
        .collect()
}

fn small_graph<R: Rng>(rng: &mut R, max_n: usize) -> Result<Graph> {
    let n = rng.random_range(2..=max_n);
    random_connected_graph(n, 0.3, rng)
}

fn unit_vector<R: Rng>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// `h(f ⊕ g) = h(f) + h(g)` and the embedded bases span `H⁰(f ⊕ g)`.
/// Residual: largest principal angle.
pub fn kernel_decomposition(seed: u64, pairs: usize) -> PropertyReport {
    let mut report = PropertyReport::new("kernel-decomposition");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..pairs {
        let built = (|| {
            let g = small_graph(&mut rng, MAX_VERTICES)?;
            let summand = |with_sections: bool, rng: &mut ChaCha8Rng| {
                let dims = random_dims(&g, MAX_STALK_DIM, rng)?;
                if with_sections {
                    let kmax = *dims.vertex_dims().iter().min().expect("nonempty");
                    let s = rng.random_range(1..=kmax);
                    sheaf_with_sections(g.clone(), dims, s, rng)
                } else {
                    random_sheaf(g.clone(), dims, rng)
                }
            };
            // Cycle through (random, random), (sections, random), (sections, sections).
            let f = summand(k % 3 != 0, &mut rng)?;
            let h = summand(k % 3 == 2, &mut rng)?;
            verify_kernel_decomposition(&f, &h)
        })();
        let Some(r) = report.absorb(built) else { continue };
        report.check(r.max_principal_angle, r.certified, || {
            format!(
                "h(f+g) = {}, h(f) = {}, h(g) = {}, angle {:.3e}",
                r.dim_sum, r.dim_f, r.dim_g, r.max_principal_angle
            )
        });
    }
    report
}

/// Sheaf carrying the line subrepresentation `(w_v, w_e)`: every map is
/// `c · w_e w_vᵀ + N (I − w_v w_vᵀ)`, so it sends `w_v` to `c · w_e`.
fn planted_line_sheaf<R: Rng>(
    graph: Graph,
    dims: DimensionVector,
    coefficient: &mut dyn FnMut(&mut R) -> f64,
    rng: &mut R,
) -> Result<(CellularSheaf, Subrepresentation)> {
    let wv: Vec<DVector<f64>> = dims.vertex_dims().iter().map(|&d| unit_vector(d, rng)).collect();
    let we: Vec<DVector<f64>> = dims.edge_dims().iter().map(|&d| unit_vector(d, rng)).collect();
    let mut maps = Vec::with_capacity(2 * graph.num_edges());
    for i in 0..2 * graph.num_edges() {
        let (v, e) = (graph.incidence_vertex(i), i / 2);
        let (dv, de) = (dims.vertex_dim(v), dims.edge_dim(e));
        let complement = DMatrix::identity(dv, dv) - &wv[v] * wv[v].transpose();
        let c = coefficient(rng);
        maps.push(&we[e] * wv[v].transpose() * c + gaussian_matrix(de, dv, 1.0, rng) * complement);
    }
    let sub = Subrepresentation {
        vertex: wv.into_iter().map(|w| DMatrix::from_column_slice(w.len(), 1, w.as_slice())).collect(),
        edge: we.into_iter().map(|w| DMatrix::from_column_slice(w.len(), 1, w.as_slice())).collect(),
    };
    Ok((CellularSheaf::new(graph, dims, maps)?, sub))
}

/// Sheaf whose maps keep the leading `k_v` vertex coordinates inside the
/// leading `k_e` edge coordinates. With `aligned`, that block is the leading
/// identity, so the coordinate subsheaf has sections.
fn coordinate_sheaf<R: Rng>(
    graph: Graph,
    dims: DimensionVector,
    aligned: bool,
    rng: &mut R,
) -> Result<(CellularSheaf, Subrepresentation)> {
    let kv: Vec<usize> = dims.vertex_dims().iter().map(|&d| rng.random_range(1..=d)).collect();
    let ke: Vec<usize> = dims.edge_dims().iter().map(|&d| rng.random_range(1..=d)).collect();
    let mut maps = Vec::with_capacity(2 * graph.num_edges());
    for i in 0..2 * graph.num_edges() {
        let (v, e) = (graph.incidence_vertex(i), i / 2);
        let mut a = gaussian_matrix(dims.edge_dim(e), dims.vertex_dim(v), 1.0, rng);
        for r in ke[e]..dims.edge_dim(e) {
            for c in 0..kv[v] {
                a[(r, c)] = 0.0;
            }
        }
        if aligned {
            for r in 0..ke[e] {
                for c in 0..kv[v] {
                    a[(r, c)] = if r == c { 1.0 } else { 0.0 };
                }
            }
        }
        maps.push(a);
    }
    let sub = Subrepresentation::coordinate(&dims, &kv, &ke);
    Ok((CellularSheaf::new(graph, dims, maps)?, sub))
}

/// Sections of a certified subrepresentation inject into `ker Δ_F` with full
/// column rank. Residual: injection residual.
pub fn harmonic_injection(seed: u64, cases: usize) -> PropertyReport {
    let mut report = PropertyReport::new("harmonic-injection");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..cases {
        let built = (|| {
            let g = small_graph(&mut rng, MAX_VERTICES)?;
            let dims = random_dims(&g, MAX_STALK_DIM, &mut rng)?;
            let (sheaf, sub) = match k % 4 {
                0 => planted_line_sheaf(g, dims, &mut |_: &mut ChaCha8Rng| 1.0, &mut rng)?,
                1 => planted_line_sheaf(
                    g,
                    dims,
                    &mut |r: &mut ChaCha8Rng| if r.random::<bool>() { 1.0 } else { -1.0 },
                    &mut rng,
                )?,
                2 => coordinate_sheaf(g, dims, true, &mut rng)?,
                _ => coordinate_sheaf(g, dims, false, &mut rng)?,
            };
            let certified = verify_subrepresentation(&sheaf, &sub, SUBREP_TOL)?.certified;
            if !certified {
                return Err(Error::Precondition("constructed subrepresentation failed certification".into()));
            }
            verify_harmonic_injection(&sheaf, &sub)
        })();
        let Some(r) = report.absorb(built) else { continue };
        report.check(r.residual, r.certified, || {
            format!(
                "h(F') = {}, h(F) = {}, residual {:.3e}, full rank {}",
                r.sub_dim, r.full_dim, r.residual, r.full_rank
            )
        });
    }
    report
}

/// A detected trivial line contributes exactly the constant-coefficient
/// signals `x_v = c w_v`, and the energy of `x_v = c_v w_v` is
/// `Σ_e (c_head − c_tail)² ‖w_e‖²`. Residual: worst of the principal angle
/// and the relative energy error.
pub fn trivial_line_collapse(seed: u64, cases: usize) -> PropertyReport {
    let mut report = PropertyReport::new("trivial-line-collapse");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let built = (|| {
            let g = small_graph(&mut rng, MAX_VERTICES)?;
            let dims = random_dims(&g, MAX_STALK_DIM, &mut rng)?;
            let (sheaf, _) = planted_line_sheaf(g, dims, &mut |_: &mut ChaCha8Rng| 1.0, &mut rng)?;
            let lines = find_trivial_lines(&sheaf)?;
            let mut out = Vec::new();
            for col in 0..lines.dim() {
                let Some(sub) = lines.subrepresentation(col) else { continue };
                let inj = verify_harmonic_injection(&sheaf, &sub)?;
                let constant = DMatrix::from_column_slice(sheaf.dims().total_vertex(), 1, lines.vertex_signal(col).as_slice());
                let q_const = linalg::range_basis(&constant, 1e-10)?;
                let q_inj = linalg::range_basis(&inj.embedded, 1e-10)?;
                let angle = linalg::max_principal_angle(&q_inj, &q_const)?;

                let n = sheaf.graph().num_vertices();
                let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let d = sheaf.dims();
                let w = lines.vertex_signal(col);
                let x = DVector::from_fn(d.total_vertex(), |r, _| {
                    let v = (0..n).rfind(|&v| d.vertex_offset(v) <= r).expect("row in some stalk");
                    c[v] * w[r]
                });
                let we = lines.edge_signal(col);
                let oracle: f64 = sheaf
                    .graph()
                    .edges()
                    .iter()
                    .enumerate()
                    .map(|(e, &(u, v))| {
                        let block = we.rows(d.edge_offset(e), d.edge_dim(e)).norm_squared();
                        (c[v] - c[u]).powi(2) * block
                    })
                    .sum();
                let energy = sheaf.dirichlet_energy(&x)?;
                let energy_err = (energy - oracle).abs() / oracle.max(1.0);
                out.push((inj.sub_dim, inj.certified, angle, energy_err));
            }
            if out.is_empty() {
                return Err(Error::Numeric("planted trivial line was not detected".into()));
            }
            Ok(out)
        })();
        let Some(lines) = report.absorb(built) else { continue };
        for (dim, certified, angle, energy_err) in lines {
            let ok = dim == 1 && certified && angle <= 1e-8 && energy_err <= 1e-10;
            report.check(angle.max(energy_err), ok, || {
                format!("injected dim {dim}, certified {certified}, angle {angle:.3e}, energy error {energy_err:.3e}")
            });
        }
    }
    report
}

/// Trace balance `Σ_i tr μ_i = 0` on random sheaves, vanishing central
/// penalty on scaled-orthogonal sheaves and the worked 2×2 values.
/// Residual: worst relative trace imbalance or central defect.
pub fn moment_identities(seed: u64, sheaves: usize) -> PropertyReport {
    let mut report = PropertyReport::new("moment-identities");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..sheaves {
        let built = (|| {
            let g = small_graph(&mut rng, MAX_VERTICES)?;
            let dims = random_dims(&g, MAX_STALK_DIM, &mut rng)?;
            let scale = 10f64.powf(rng.random_range(-2.0..2.0));
            let mut s = random_sheaf(g, dims, &mut rng)?;
            for i in 0..s.maps().len() {
                let a = s.map(i) * scale;
                s.set_map(i, a)?;
            }
            Ok(moment_map(&s).traces())
        })();
        let Some(traces) = report.absorb(built) else { continue };
        let total: f64 = traces.iter().sum();
        let size: f64 = traces.iter().map(|t| t.abs()).sum();
        let rel = total.abs() / size.max(f64::MIN_POSITIVE);
        report.check(rel, rel <= 1e-10, || format!("Σ tr μ = {total:.3e} against Σ|tr μ| = {size:.3e}"));
    }
    for _ in 0..sheaves / 20 {
        let built = (|| {
            let g = small_graph(&mut rng, MAX_VERTICES)?;
            let d = rng.random_range(1..=MAX_STALK_DIM);
            let dims = DimensionVector::uniform(&g, d, d)?;
            let sheaf = CellularSheaf::from_fn(g, dims, |_, _, _| {
                random_orthogonal(d, &mut rng) * rng.random_range(0.1..3.0)
            })?;
            Ok(cent_mm(&sheaf))
        })();
        let Some(cent) = report.absorb(built) else { continue };
        report.check(cent.sqrt(), cent.sqrt() <= 1e-10, || format!("scaled-orthogonal sheaf has R_cent = {cent:.3e}"));
    }
    let worked = (|| {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let g = Graph::path(2)?;
        let dims = DimensionVector::uniform(&g, 2, 2)?;
        let s = CellularSheaf::new(g, dims, vec![a, DMatrix::zeros(2, 2)])?;
        let mu = moment_map(&s);
        let want_v = -DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let want_e = DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 1.0]);
        let err = (&mu.vertex[0] - want_v).norm().max((&mu.edge[0] - want_e).norm()).max((cent_mm(&s) - 32.0).abs());
        Ok(err)
    })();
    if let Some(err) = report.absorb(worked) {
        report.check(err, err <= 1e-12, || format!("worked 2x2 example off by {err:.3e}"));
    }
    report
}

/// Uniform dims pin `θ(F_triv)` to zero; rectangular `(3, 2)` dims admit an
/// escape with `θ(F_triv) ≤ −0.5`; the projection is admissible and
/// idempotent. Residual: worst of `|θ(F_triv)|` (uniform), `|θ·d|` and the
/// idempotence defect.
pub fn stability_wall(seed: u64) -> PropertyReport {
    let mut report = PropertyReport::new("stability-wall");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..UNIFORM_WALL_DRAWS {
        let built = (|| {
            let g = small_graph(&mut rng, MAX_VERTICES)?;
            let d = rng.random_range(1..=MAX_STALK_DIM);
            let dims = DimensionVector::uniform(&g, d, d)?;
            let raw: Vec<f64> = (0..dims.num_objects()).map(|_| rng.sample(StandardNormal)).collect();
            Ok(trivial_weight(&project_theta(&raw, &dims)?))
        })();
        let Some(w) = report.absorb(built) else { continue };
        report.check(w.abs(), w.abs() <= 1e-12, || format!("uniform dims give θ(F_triv) = {w:.3e}"));
    }
    for k in 0..20 {
        let built = (|| {
            let g = if k == 0 { Graph::path(2)? } else { small_graph(&mut rng, MAX_VERTICES)? };
            let dims = DimensionVector::uniform(&g, 3, 2)?;
            let r = stability_wall_diagnostic(&dims, &mut rng)?;
            let theta = r.escape_theta.ok_or_else(|| Error::Numeric("no escape θ for (3, 2) dims".into()))?;
            Ok((theta.pairing(&dims), trivial_weight(&theta), r.uniform))
        })();
        let Some((pairing, weight, uniform)) = report.absorb(built) else { continue };
        let ok = !uniform && pairing.abs() <= 1e-12 && weight <= -0.5;
        report.check(pairing.abs(), ok, || format!("escape θ has θ·d = {pairing:.3e}, θ(F_triv) = {weight:.3e}"));
    }
    for _ in 0..PROJECTION_DRAWS {
        let built = (|| {
            let g = small_graph(&mut rng, MAX_VERTICES)?;
            let dims = random_dims(&g, MAX_STALK_DIM, &mut rng)?;
            let raw: Vec<f64> = (0..dims.num_objects()).map(|_| rng.sample(StandardNormal)).collect();
            let once = project_theta(&raw, &dims)?;
            let twice = project_theta(once.values(), &dims)?;
            let drift = once
                .values()
                .iter()
                .zip(twice.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok((once.pairing(&dims).abs(), drift))
        })();
        let Some((pairing, drift)) = report.absorb(built) else { continue };
        let ok = pairing <= 1e-12 && drift <= 1e-14;
        report.check(pairing.max(drift), ok, || format!("|θ·d| = {pairing:.3e}, idempotence drift {drift:.3e}"));
    }
    report
}

/// `‖e^{−tΔ}x₀ − Π_{H⁰}x₀‖ ≤ e^{−tλ₊}‖x₀‖` and Euler steps with `α = 1/λ_max`
/// never raise the Dirichlet energy. Residual: worst ratio of the left side
/// to `e^{−tλ₊}‖x₀‖`.
pub fn diffusion_limit(seed: u64, cases: usize) -> PropertyReport {
    let mut report = PropertyReport::new("diffusion-limit");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..cases {
        let built = (|| {
            let g = small_graph(&mut rng, MAX_VERTICES)?;
            let dims = random_dims(&g, MAX_STALK_DIM, &mut rng)?;
            let sheaf = if k % 2 == 0 {
                let kmax = *dims.vertex_dims().iter().min().expect("nonempty");
                let s = rng.random_range(1..=kmax);
                sheaf_with_sections(g, dims, s, &mut rng)?
            } else {
                random_sheaf(g, dims, &mut rng)?
            };
            let n0 = sheaf.dims().total_vertex();
            let x0 = DMatrix::from_fn(n0, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let basis = kernel_basis(&sheaf)?;
            let sd = SpectralDiffuser::new(&sheaf)?;
            let ratio = match sd.smallest_positive(basis.dim()) {
                Some(gap) => {
                    let t = rng.random_range(0.0..10.0) / gap;
                    let lhs = (sd.diffuse(&x0, t)? - basis.project_multi(&x0)?).norm();
                    lhs / ((-t * gap).exp() * x0.norm())
                }
                // Every mode is harmonic: the flow is the identity.
                None => (sd.diffuse(&x0, 1.0)? - &x0).norm() / x0.norm(),
            };
            let euler = euler_diffuse(&sheaf, &x0, StepSize::Auto, 30, true)?;
            let e0 = euler.energy_trace.first().map_or(0.0, |p| p.1);
            let worst_rise = euler
                .energy_trace
                .windows(2)
                .map(|w| w[1].1 - w[0].1)
                .fold(f64::NEG_INFINITY, f64::max);
            let monotone = euler.nonfinite_at.is_none() && worst_rise <= 1e-12 * e0.max(1.0);
            Ok((ratio, monotone, worst_rise))
        })();
        let Some((ratio, monotone, rise)) = report.absorb(built) else { continue };
        let ok = ratio <= 1.0 + 1e-6 && monotone;
        report.check(ratio, ok, || format!("limit ratio {ratio:.6}, Euler energy rise {rise:.3e}"));
    }
    report
}

/// Step of the five-point difference stencil used by the gradient check.
pub const FD_STEP: f64 = 1e-3;
/// Gradient entries smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-6;

/// Largest `|a − n| / max(|a|, |n|, floor)` between the analytic gradient of
/// the total loss and a fourth-order central difference
/// `(8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h` over every scalar
/// parameter. The step size `α` is held fixed, matching the analytic gradient.
pub fn gradient_error(model: &SheafModel, features: &DMatrix<f64>, labels: &[usize], mask: &[usize]) -> Result<f64> {
    let (_, grads) = model.backward(features, labels, mask)?;
    let analytic: Vec<Vec<f64>> = grads.slices().into_iter().map(|(_, s)| s.to_vec()).collect();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (g, col) in analytic.iter().enumerate() {
        for (k, &a) in col.iter().enumerate() {
            let orig = probe.parameters_mut()[g].1[k];
            let mut at = |offset: f64| -> Result<f64> {
                probe.parameters_mut()[g].1[k] = orig + offset;
                Ok(probe.loss(features, labels, mask)?.total)
            };
            let h = FD_STEP;
            let near = at(h)? - at(-h)?;
            let far = at(2.0 * h)? - at(-2.0 * h)?;
            probe.parameters_mut()[g].1[k] = orig;
            let n = (8.0 * near - far) / (12.0 * h);
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR));
        }
    }
    Ok(worst)
}

/// Analytic gradients against finite differences on random small models
/// (≤ 6 vertices, stalk dims ≤ 3, ≤ 3 layers, parameters drawn from
/// `N(0, 0.1²)`). Residual: worst relative error.
pub fn gradient_check(seed: u64, cases: usize) -> PropertyReport {
    let mut report = PropertyReport::new("gradient-check");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let built = (|| {
            let n = rng.random_range(3..=6);
            let g = random_connected_graph(n, 0.4, &mut rng)?;
            let n_features = rng.random_range(1..=4);
            let n_classes = rng.random_range(2..=3);
            let penalty = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { rng.random_range(0.0..0.1) } else { 0.0 };
            let config = ModelConfig {
                vertex_dim: rng.random_range(1..=MAX_STALK_DIM),
                edge_dim: rng.random_range(1..=MAX_STALK_DIM),
                hidden: rng.random_range(1..=3),
                layers: rng.random_range(1..=3),
                step: StepSize::Fixed(rng.random_range(0.02..0.2)),
                lambda_mu: penalty(&mut rng),
                lambda_theta: penalty(&mut rng),
                ..ModelConfig::default()
            };
            let mut model = SheafModel::new(g, n_features, n_classes, config, &mut rng)?;
            for (_, p) in model.parameters_mut() {
                p.iter_mut().for_each(|x| *x = 0.1 * rng.sample::<f64, _>(StandardNormal));
            }
            let features = DMatrix::from_fn(n, n_features, |_, _| rng.sample::<f64, _>(StandardNormal));
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
            let mut mask: Vec<usize> = (0..n).filter(|_| rng.random::<bool>()).collect();
            if mask.is_empty() {
                mask.push(0);
            }
            gradient_error(&model, &features, &labels, &mask)
        })();
        let Some(err) = report.absorb(built) else { continue };
        report.check(err, err <= 1e-5, || format!("relative gradient error {err:.3e}"));
    }
    report
}
