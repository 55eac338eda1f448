//! Randomized invariants of the sheaf operators, harmonic space, moment map
//! and diffusion, each checked against an oracle computed a different way.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quiver_sheaf::diffusion::{euler_diffuse, spectral_diffuse, StepSize};
use quiver_sheaf::harmonic::kernel_basis;
use quiver_sheaf::linalg::{max_principal_angle, symmetric_eigen};
use quiver_sheaf::samplers::{
    gaussian_matrix, random_connected_graph, random_dims, random_gauge, random_orthogonal_gauge,
    random_sheaf, sheaf_with_sections,
};
use quiver_sheaf::sheaf::{apply_gauge, direct_sum_permutation};
use quiver_sheaf::stability::{cent_mm, moment_map, project_theta, trivial_weight};
use quiver_sheaf::{CellularSheaf, DimensionVector, Graph};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sheaf_from(seed: u64, max_n: usize, max_dim: usize) -> CellularSheaf {
    let mut r = rng(seed);
    let n = r.random_range(2..=max_n);
    let g = random_connected_graph(n, 0.3, &mut r).unwrap();
    let dims = random_dims(&g, max_dim, &mut r).unwrap();
    random_sheaf(g, dims, &mut r).unwrap()
}

fn graph_from(seed: u64, max_n: usize) -> Graph {
    let mut r = rng(seed);
    let n = r.random_range(2..=max_n);
    random_connected_graph(n, 0.3, &mut r).unwrap()
}

/// Sheaf on `g` with uniform stalks and at least `k` planted sections.
fn sectioned_on(g: Graph, seed: u64, k: usize) -> CellularSheaf {
    let mut r = rng(seed);
    let d = r.random_range(k.max(1)..=3);
    let dims = DimensionVector::uniform(&g, d, r.random_range(1..=3)).unwrap();
    sheaf_with_sections(g, dims, k, &mut r).unwrap()
}

fn sectioned_sheaf(seed: u64, k: usize) -> CellularSheaf {
    sectioned_on(graph_from(seed, 6), seed ^ 11, k)
}

/// Kernel of the Laplacian from its eigendecomposition, an oracle independent
/// of the SVD of the coboundary used by `kernel_basis`.
fn eigen_kernel(lap: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = symmetric_eigen(lap).unwrap();
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cols: Vec<DVector<f64>> = (0..vals.len())
        .filter(|&i| vals[i] <= 1e-10 * top.max(1.0))
        .map(|i| vecs.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(lap.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn sorted_eigenvalues(sheaf: &CellularSheaf) -> Vec<f64> {
    let (vals, _) = symmetric_eigen(&sheaf.laplacian()).unwrap();
    let mut v: Vec<f64> = vals.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn laplacian_is_symmetric_psd(seed in any::<u64>()) {
        let s = sheaf_from(seed, 8, 3);
        let lap = s.laplacian();
        prop_assert!(max_abs_diff(&lap, &lap.transpose()) <= 1e-12 * lap.abs().max().max(1.0));
        let sym = (&lap + lap.transpose()) * 0.5;
        let (vals, _) = symmetric_eigen(&sym).unwrap();
        prop_assert!(vals.min() >= -1e-10);
    }

    #[test]
    fn laplacian_matches_coboundary_product(seed in any::<u64>()) {
        let s = sheaf_from(seed, 8, 3);
        let d = s.coboundary_matrix();
        let oracle = d.transpose() * &d;
        prop_assert!(max_abs_diff(&s.laplacian(), &oracle) <= 1e-12 * oracle.abs().max().max(1.0));
        let x = gaussian_matrix(s.dims().total_vertex(), 2, 1.0, &mut rng(seed ^ 1));
        prop_assert!(max_abs_diff(&s.apply_laplacian(&x), &(&oracle * &x)) <= 1e-10 * (oracle.norm() * x.norm()).max(1.0));
    }

    #[test]
    fn coboundary_and_laplacian_kernels_agree(seed in any::<u64>(), k in 0usize..3) {
        let s = sectioned_sheaf(seed, k);
        let svd_kernel = kernel_basis(&s).unwrap();
        let eig = eigen_kernel(&s.laplacian());
        prop_assert_eq!(svd_kernel.dim(), eig.ncols());
        prop_assert!(svd_kernel.dim() >= k);
        if eig.ncols() > 0 {
            prop_assert!(max_principal_angle(&svd_kernel.basis, &eig).unwrap() < 1e-8);
        }
        let gram = svd_kernel.basis.tr_mul(&svd_kernel.basis);
        prop_assert!(max_abs_diff(&gram, &DMatrix::identity(gram.nrows(), gram.ncols())) <= 1e-10);
    }

    #[test]
    fn energy_vanishes_exactly_on_sections(seed in any::<u64>()) {
        let s = sectioned_sheaf(seed, 1);
        let basis = kernel_basis(&s).unwrap();
        let mut r = rng(seed ^ 2);
        let c = DVector::from_fn(basis.dim(), |_, _| r.random::<f64>() - 0.5);
        let section = &basis.basis * c;
        let scale = s.laplacian().norm() * section.norm_squared();
        prop_assert!(s.dirichlet_energy(&section).unwrap() <= 1e-10 * scale.max(1.0));

        let x = DVector::from_fn(s.dims().total_vertex(), |_, _| r.random::<f64>() - 0.5);
        let off = &x - basis.project(&x).unwrap();
        if off.norm() > 1e-6 {
            prop_assert!(s.dirichlet_energy(&off).unwrap() > 0.0);
        }
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>()) {
        let s = sectioned_sheaf(seed, 2);
        let basis = kernel_basis(&s).unwrap();
        let mut r = rng(seed ^ 3);
        let x = DVector::from_fn(s.dims().total_vertex(), |_, _| 3.0 * (r.random::<f64>() - 0.5));
        let p = basis.project(&x).unwrap();
        let pp = basis.project(&p).unwrap();
        prop_assert!((pp - &p).norm() <= 1e-10);
    }

    #[test]
    fn direct_sum_laplacian_is_permuted_block_diagonal(a in any::<u64>(), b in any::<u64>()) {
        let graph = graph_from(a, 5);
        let mut r = rng(b);
        let fd = random_dims(&graph, 3, &mut r).unwrap();
        let gd = random_dims(&graph, 3, &mut r).unwrap();
        let f = random_sheaf(graph.clone(), fd, &mut r).unwrap();
        let g = random_sheaf(graph, gd, &mut r).unwrap();
        let sum = f.direct_sum(&g).unwrap();
        let perm = direct_sum_permutation(f.dims(), g.dims());
        let (lf, lg) = (f.laplacian(), g.laplacian());
        let nf = lf.nrows();
        let mut block = DMatrix::zeros(nf + lg.nrows(), nf + lg.nrows());
        block.view_mut((0, 0), lf.shape()).copy_from(&lf);
        block.view_mut((nf, nf), lg.shape()).copy_from(&lg);
        let ls = sum.laplacian();
        let mut worst = 0.0f64;
        for i in 0..block.nrows() {
            for j in 0..block.ncols() {
                worst = worst.max((ls[(perm[i], perm[j])] - block[(i, j)]).abs());
            }
        }
        prop_assert!(worst <= 1e-12 * block.abs().max().max(1.0));
    }

    #[test]
    fn harmonic_dimension_is_additive(a in any::<u64>(), b in any::<u64>(), ka in 0usize..3, kb in 0usize..3) {
        let graph = graph_from(a, 6);
        let (f, g) = (sectioned_on(graph.clone(), b, ka), sectioned_on(graph, b ^ 12, kb));
        let hf = kernel_basis(&f).unwrap().dim();
        let hg = kernel_basis(&g).unwrap().dim();
        let hs = kernel_basis(&f.direct_sum(&g).unwrap()).unwrap().dim();
        prop_assert_eq!(hs, hf + hg);
    }

    #[test]
    fn gauge_action_composes(seed in any::<u64>()) {
        let s = sheaf_from(seed, 6, 3);
        let mut r = rng(seed ^ 4);
        let g = random_gauge(s.dims(), 10.0, &mut r);
        let h = random_gauge(s.dims(), 10.0, &mut r);
        let stepwise = apply_gauge(&apply_gauge(&s, &g).unwrap(), &h).unwrap();
        let composite = apply_gauge(&s, &g.then(&h)).unwrap();
        for (x, y) in stepwise.maps().iter().zip(composite.maps()) {
            prop_assert!(max_abs_diff(x, y) <= 1e-12 * x.abs().max().max(1.0) * 10.0);
        }
    }

    #[test]
    fn harmonic_dimension_is_gauge_invariant(seed in any::<u64>(), k in 0usize..3) {
        let s = sectioned_sheaf(seed, k);
        let g = random_gauge(s.dims(), 1e6, &mut rng(seed ^ 5));
        let moved = apply_gauge(&s, &g).unwrap();
        prop_assert_eq!(kernel_basis(&moved).unwrap().dim(), kernel_basis(&s).unwrap().dim());
    }

    #[test]
    fn orthogonal_gauge_keeps_spectrum(seed in any::<u64>()) {
        let s = sheaf_from(seed, 6, 3);
        let g = random_orthogonal_gauge(s.dims(), &mut rng(seed ^ 6));
        let before = sorted_eigenvalues(&s);
        let after = sorted_eigenvalues(&apply_gauge(&s, &g).unwrap());
        let top = before.last().copied().unwrap_or(0.0).max(1.0);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() <= 1e-10 * top);
        }
    }

    #[test]
    fn moment_traces_match_map_norms(seed in any::<u64>()) {
        let s = sheaf_from(seed, 8, 3);
        let mu = moment_map(&s);
        let mut vertex = vec![0.0; s.graph().num_vertices()];
        let mut edge = vec![0.0; s.graph().num_edges()];
        for (i, a) in s.maps().iter().enumerate() {
            let sq: f64 = a.iter().map(|x| x * x).sum();
            vertex[s.graph().incidence_vertex(i)] -= sq;
            edge[i / 2] += sq;
        }
        let scale: f64 = edge.iter().sum::<f64>().max(1.0);
        for (m, t) in mu.vertex.iter().zip(&vertex).chain(mu.edge.iter().zip(&edge)) {
            prop_assert!((m.trace() - t).abs() <= 1e-12 * scale);
            prop_assert!(max_abs_diff(m, &m.transpose()) <= 1e-12 * scale);
        }
        for m in &mu.vertex {
            prop_assert!(symmetric_eigen(m).unwrap().0.max() <= 1e-10 * scale);
        }
        for m in &mu.edge {
            prop_assert!(symmetric_eigen(m).unwrap().0.min() >= -1e-10 * scale);
        }
        prop_assert!(mu.traces().iter().sum::<f64>().abs() <= 1e-10 * scale);
        prop_assert!(cent_mm(&s) >= 0.0);
    }

    #[test]
    fn theta_projection_is_admissible_and_idempotent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_connected_graph(r.random_range(2..=8), 0.3, &mut r).unwrap();
        let dims = random_dims(&g, 4, &mut r).unwrap();
        let raw: Vec<f64> = (0..dims.num_objects()).map(|_| 10.0 * (r.random::<f64>() - 0.5)).collect();
        let theta = project_theta(&raw, &dims).unwrap();
        let d: Vec<f64> = dims.object_dims().iter().map(|&k| k as f64).collect();
        let pairing: f64 = theta.values().iter().zip(&d).map(|(t, k)| t * k).sum();
        let dnorm = d.iter().map(|k| k * k).sum::<f64>().sqrt();
        prop_assert!(pairing.abs() <= 1e-12 * dnorm * theta.norm().max(1.0));
        let again = project_theta(theta.values(), &dims).unwrap();
        for (a, b) in again.values().iter().zip(theta.values()) {
            prop_assert!((a - b).abs() <= 1e-14 * theta.norm().max(1.0));
        }
    }

    #[test]
    fn uniform_dims_pin_trivial_weight(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let g = random_connected_graph(r.random_range(2..=8), 0.3, &mut r).unwrap();
        let dims = DimensionVector::uniform(&g, d, d).unwrap();
        let raw: Vec<f64> = (0..dims.num_objects()).map(|_| r.random::<f64>() - 0.5).collect();
        let theta = project_theta(&raw, &dims).unwrap();
        prop_assert!(trivial_weight(&theta).abs() <= 1e-12);
    }

    #[test]
    fn spectral_flow_is_a_semigroup(seed in any::<u64>(), t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
        let s = sheaf_from(seed, 6, 2);
        let x0 = gaussian_matrix(s.dims().total_vertex(), 2, 1.0, &mut rng(seed ^ 7));
        let joint = spectral_diffuse(&s, &x0, t1 + t2).unwrap();
        let split = spectral_diffuse(&s, &spectral_diffuse(&s, &x0, t1).unwrap(), t2).unwrap();
        prop_assert!(max_abs_diff(&joint, &split) <= 1e-10 * x0.norm().max(1.0));
    }

    #[test]
    fn exact_flow_energy_never_increases(seed in any::<u64>(), t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
        let s = sheaf_from(seed, 6, 2);
        let x0 = gaussian_matrix(s.dims().total_vertex(), 1, 1.0, &mut rng(seed ^ 8));
        let e1 = s.dirichlet_energy_multi(&spectral_diffuse(&s, &x0, t1).unwrap()).unwrap();
        let e2 = s.dirichlet_energy_multi(&spectral_diffuse(&s, &x0, t1 + dt).unwrap()).unwrap();
        prop_assert!(e2 <= e1 + 1e-10);
    }

    #[test]
    fn euler_boundary_at_twice_the_inverse_spectral_radius(seed in any::<u64>()) {
        let s = sheaf_from(seed, 6, 2);
        let x0 = gaussian_matrix(s.dims().total_vertex(), 1, 1.0, &mut rng(seed ^ 9));
        let stable = euler_diffuse(&s, &x0, StepSize::Scaled(1.9), 400, true).unwrap();
        prop_assert!(stable.nonfinite_at.is_none());
        prop_assert!(stable.final_state.norm() <= x0.norm() * (1.0 + 1e-9));
        let unstable = euler_diffuse(&s, &x0, StepSize::Scaled(2.1), 400, true).unwrap();
        let grew = unstable.nonfinite_at.is_some() || unstable.final_state.norm() > 1e3 * x0.norm();
        prop_assert!(grew);
    }

    #[test]
    fn euler_energy_is_monotone_at_default_step(seed in any::<u64>()) {
        let s = sheaf_from(seed, 8, 3);
        let x0 = gaussian_matrix(s.dims().total_vertex(), 3, 1.0, &mut rng(seed ^ 10));
        let r = euler_diffuse(&s, &x0, StepSize::Auto, 40, true).unwrap();
        prop_assert!(r.nonfinite_at.is_none());
        for w in r.energy_trace.windows(2) {
            prop_assert!(w[1].1 >= 0.0);
            prop_assert!(w[1].1 <= w[0].1 * (1.0 + 1e-12) + 1e-14);
        }
    }
}
