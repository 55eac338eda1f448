//! Random graphs, sheaves and gauges for property checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::quiver::{DimensionVector, GaugeElement, Graph};
use crate::sheaf::CellularSheaf;

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

/// Random spanning tree plus each remaining pair independently with probability `extra`.
pub fn random_connected_graph<R: Rng + ?Sized>(n: usize, extra: f64, rng: &mut R) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut present = vec![vec![false; n]; n];
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v));
        present[u][v] = true;
    }
    for u in 0..n {
        for v in u + 1..n {
            if !present[u][v] && rng.random::<f64>() < extra {
                edges.push((u, v));
            }
        }
    }
    Graph::with_indices(n, &edges)
}

/// Independent stalk dimensions in `1..=max_dim`.
pub fn random_dims<R: Rng + ?Sized>(graph: &Graph, max_dim: usize, rng: &mut R) -> Result<DimensionVector> {
    let vertex = (0..graph.num_vertices())
        .map(|_| rng.random_range(1..=max_dim))
        .collect();
    let edge = (0..graph.num_edges())
        .map(|_| rng.random_range(1..=max_dim))
        .collect();
    DimensionVector::new(vertex, edge)
}

/// Standard-normal restriction maps.
pub fn random_sheaf<R: Rng + ?Sized>(graph: Graph, dims: DimensionVector, rng: &mut R) -> Result<CellularSheaf> {
    let shapes: Vec<_> = (0..2 * graph.num_edges())
        .map(|i| (dims.edge_dim(i / 2), dims.vertex_dim(graph.incidence_vertex(i))))
        .collect();
    CellularSheaf::from_fn(graph, dims, |i, _, _| gaussian_matrix(shapes[i].0, shapes[i].1, 1.0, rng))
}

/// A sheaf with at least `k` planted global sections (`k ≤ min d_v`).
///
/// Picks random vertex data `X_v` (`d_v × k`) and edge targets `Y_e`
/// (`d_e × k`), then sets `A_{v,e} = Y_e X_v⁺ + N (I − X_v X_v⁺)` so that
/// `A_{v,e} X_v = Y_e` at both endpoints.
pub fn sheaf_with_sections<R: Rng + ?Sized>(
    graph: Graph,
    dims: DimensionVector,
    k: usize,
    rng: &mut R,
) -> Result<CellularSheaf> {
    if k == 0 {
        return random_sheaf(graph, dims, rng);
    }
    let xs: Vec<DMatrix<f64>> = dims
        .vertex_dims()
        .iter()
        .map(|&d| gaussian_matrix(d, k, 1.0, rng))
        .collect();
    let ys: Vec<DMatrix<f64>> = dims
        .edge_dims()
        .iter()
        .map(|&d| gaussian_matrix(d, k, 1.0, rng))
        .collect();
    let pinv: Vec<DMatrix<f64>> = xs
        .iter()
        .map(|x| x.clone().pseudo_inverse(1e-12).expect("pseudo-inverse"))
        .collect();
    let shapes: Vec<_> = (0..2 * graph.num_edges())
        .map(|i| (dims.edge_dim(i / 2), dims.vertex_dim(graph.incidence_vertex(i))))
        .collect();
    CellularSheaf::from_fn(graph, dims, |i, v, e| {
        let (de, dv) = shapes[i];
        let complement = DMatrix::identity(dv, dv) - &xs[v] * &pinv[v];
        &ys[e] * &pinv[v] + gaussian_matrix(de, dv, 1.0, rng) * complement
    })
}

/// Haar-ish random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let qr = gaussian_matrix(d, d, 1.0, rng).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            let mut c = q.column_mut(j);
            c *= -1.0;
        }
    }
    q
}

/// Random gauge whose blocks are `Q₁ diag(s) Q₂` with `s ∈ [1, cond]`,
/// so every block has condition number at most `cond`.
pub fn random_gauge<R: Rng + ?Sized>(dims: &DimensionVector, cond: f64, rng: &mut R) -> GaugeElement {
    let mut block = |d: usize| {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| {
            1.0 + (cond - 1.0) * rng.random::<f64>()
        }));
        random_orthogonal(d, rng) * s * random_orthogonal(d, rng)
    };
    GaugeElement {
        vertex: dims.vertex_dims().iter().map(|&d| block(d)).collect(),
        edge: dims.edge_dims().iter().map(|&d| block(d)).collect(),
    }
}

/// Orthogonal gauge (every block orthogonal).
pub fn random_orthogonal_gauge<R: Rng + ?Sized>(dims: &DimensionVector, rng: &mut R) -> GaugeElement {
    GaugeElement {
        vertex: dims.vertex_dims().iter().map(|&d| random_orthogonal(d, rng)).collect(),
        edge: dims.edge_dims().iter().map(|&d| random_orthogonal(d, rng)).collect(),
    }
}
