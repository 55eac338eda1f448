//! Cellular sheaves as points of `Rep(Q_G, d)`: restriction maps, coboundary,
//! sheaf Laplacian, Dirichlet energy, direct sums and subrepresentations.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, NULLSPACE_RTOL};
use crate::quiver::{DimensionVector, GaugeElement, Graph, GraphJson, QuiverObject};

/// A graph, a dimension vector and one `d_e × d_v` matrix per incidence.
///
/// `maps[2e]` is the map of the tail (lower-indexed endpoint) of edge `e`,
/// `maps[2e + 1]` the map of its head.
#[derive(Debug, Clone, PartialEq)]
pub struct CellularSheaf {
    graph: Graph,
    dims: DimensionVector,
    maps: Vec<DMatrix<f64>>,
}

impl CellularSheaf {
    pub fn new(graph: Graph, dims: DimensionVector, maps: Vec<DMatrix<f64>>) -> Result<Self> {
        let sheaf = CellularSheaf { graph, dims, maps };
        sheaf.validate()?;
        Ok(sheaf)
    }

    fn validate(&self) -> Result<()> {
        if !self.dims.matches(&self.graph) {
            return Err(Error::Structural(
                "dimension vector does not match the graph".into(),
            ));
        }
        let m = self.graph.num_edges();
        if self.maps.len() != 2 * m {
            return Err(Error::Structural(format!(
                "expected {} restriction maps, got {}",
                2 * m,
                self.maps.len()
            )));
        }
        for (i, a) in self.maps.iter().enumerate() {
            let want = self.map_shape(i);
            if a.shape() != want {
                return Err(Error::Structural(format!(
                    "map for incidence {i} has shape {:?}, expected {want:?}",
                    a.shape()
                )));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("map for incidence {i} is not finite")));
            }
        }
        Ok(())
    }

    /// Builds every map from a closure `(incidence, vertex, edge) -> matrix`.
    pub fn from_fn(
        graph: Graph,
        dims: DimensionVector,
        mut f: impl FnMut(usize, usize, usize) -> DMatrix<f64>,
    ) -> Result<Self> {
        let maps = (0..2 * graph.num_edges())
            .map(|i| f(i, graph.incidence_vertex(i), i / 2))
            .collect();
        Self::new(graph, dims, maps)
    }

    /// Every stalk ℝᵈ, every map the identity.
    pub fn identity(graph: Graph, d: usize) -> Result<Self> {
        let dims = DimensionVector::uniform(&graph, d, d)?;
        Self::from_fn(graph, dims, |_, _, _| DMatrix::identity(d, d))
    }

    pub fn zeros(graph: Graph, dims: DimensionVector) -> Result<Self> {
        let shapes: Vec<_> = (0..2 * graph.num_edges())
            .map(|i| (dims.edge_dim(i / 2), dims.vertex_dim(graph.incidence_vertex(i))))
            .collect();
        Self::from_fn(graph, dims, |i, _, _| DMatrix::zeros(shapes[i].0, shapes[i].1))
    }

    /// Line-bundle sheaf (all stalks ℝ¹) with `(tail, head)` scalars per edge.
    pub fn scalar(graph: Graph, coefficients: &[(f64, f64)]) -> Result<Self> {
        if coefficients.len() != graph.num_edges() {
            return Err(Error::Structural("one coefficient pair per edge required".into()));
        }
        let dims = DimensionVector::uniform(&graph, 1, 1)?;
        let maps = coefficients
            .iter()
            .flat_map(|&(a, b)| [DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)])
            .collect();
        Self::new(graph, dims, maps)
    }

    pub(crate) fn from_parts_unchecked(
        graph: Graph,
        dims: DimensionVector,
        maps: Vec<DMatrix<f64>>,
    ) -> Self {
        CellularSheaf { graph, dims, maps }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn dims(&self) -> &DimensionVector {
        &self.dims
    }

    pub fn maps(&self) -> &[DMatrix<f64>] {
        &self.maps
    }

    pub fn map(&self, incidence: usize) -> &DMatrix<f64> {
        &self.maps[incidence]
    }

    /// Replace one restriction map, keeping the shape invariant.
    pub fn set_map(&mut self, incidence: usize, a: DMatrix<f64>) -> Result<()> {
        if a.shape() != self.map_shape(incidence) {
            return Err(Error::Structural(format!(
                "map for incidence {incidence} must have shape {:?}",
                self.map_shape(incidence)
            )));
        }
        self.maps[incidence] = a;
        Ok(())
    }

    pub(crate) fn maps_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.maps
    }

    pub fn map_shape(&self, incidence: usize) -> (usize, usize) {
        let v = self.graph.incidence_vertex(incidence);
        (self.dims.edge_dim(incidence / 2), self.dims.vertex_dim(v))
    }

    /// Dense `N₁ × N₀` coboundary. Row block `e = {u, v}` (u the tail) is
    /// `−A_{u,e}` at the u-columns and `+A_{v,e}` at the v-columns.
    pub fn coboundary_matrix(&self) -> DMatrix<f64> {
        let d = &self.dims;
        let mut delta = DMatrix::zeros(d.total_edge(), d.total_vertex());
        for (e, &(u, v)) in self.graph.edges().iter().enumerate() {
            let r = d.edge_offset(e);
            let au = &self.maps[2 * e];
            let av = &self.maps[2 * e + 1];
            delta
                .view_mut((r, d.vertex_offset(u)), au.shape())
                .copy_from(&(-au));
            delta.view_mut((r, d.vertex_offset(v)), av.shape()).copy_from(av);
        }
        delta
    }

    /// `δᵀδ`, symmetric positive semidefinite. Assembled block by block:
    /// `Δ_vv = Σ_e AᵀA` and `Δ_uv = −A_{u,e}ᵀ A_{v,e}` for each edge.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let d = &self.dims;
        let n0 = d.total_vertex();
        let mut lap = DMatrix::zeros(n0, n0);
        for (e, &(u, v)) in self.graph.edges().iter().enumerate() {
            let au = &self.maps[2 * e];
            let av = &self.maps[2 * e + 1];
            let (ou, ov) = (d.vertex_offset(u), d.vertex_offset(v));
            let (du, dv) = (d.vertex_dim(u), d.vertex_dim(v));
            let mut b = lap.view_mut((ou, ou), (du, du));
            b += au.tr_mul(au);
            let mut b = lap.view_mut((ov, ov), (dv, dv));
            b += av.tr_mul(av);
            let cross = au.tr_mul(av);
            let mut b = lap.view_mut((ou, ov), (du, dv));
            b -= &cross;
            let mut b = lap.view_mut((ov, ou), (dv, du));
            b -= cross.transpose();
        }
        lap
    }

    /// Applies δ blockwise to an `N₀ × f` signal.
    pub fn apply_coboundary(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let d = &self.dims;
        let f = x.ncols();
        let mut out = DMatrix::zeros(d.total_edge(), f);
        for (e, &(u, v)) in self.graph.edges().iter().enumerate() {
            let xu = x.rows(d.vertex_offset(u), d.vertex_dim(u));
            let xv = x.rows(d.vertex_offset(v), d.vertex_dim(v));
            let block = &self.maps[2 * e + 1] * xv - &self.maps[2 * e] * xu;
            out.rows_mut(d.edge_offset(e), d.edge_dim(e)).copy_from(&block);
        }
        out
    }

    /// Applies δᵀ blockwise to an `N₁ × f` edge signal.
    pub fn apply_coboundary_transpose(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let d = &self.dims;
        let mut out = DMatrix::zeros(d.total_vertex(), y.ncols());
        for (e, &(u, v)) in self.graph.edges().iter().enumerate() {
            let ye = y.rows(d.edge_offset(e), d.edge_dim(e));
            let tu = self.maps[2 * e].tr_mul(&ye);
            let tv = self.maps[2 * e + 1].tr_mul(&ye);
            let mut ou = out.rows_mut(d.vertex_offset(u), d.vertex_dim(u));
            ou -= tu;
            let mut ov = out.rows_mut(d.vertex_offset(v), d.vertex_dim(v));
            ov += tv;
        }
        out
    }

    /// `Δ x` without forming Δ.
    pub fn apply_laplacian(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_coboundary_transpose(&self.apply_coboundary(x))
    }

    /// `‖δx‖²` accumulated edge by edge as `Σ_e ‖A_{v,e}x_v − A_{u,e}x_u‖²`.
    pub fn dirichlet_energy(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_cochain0(x.len())?;
        let d = &self.dims;
        let mut total = 0.0;
        for (e, &(u, v)) in self.graph.edges().iter().enumerate() {
            let xu = x.rows(d.vertex_offset(u), d.vertex_dim(u));
            let xv = x.rows(d.vertex_offset(v), d.vertex_dim(v));
            total += (&self.maps[2 * e + 1] * xv - &self.maps[2 * e] * xu).norm_squared();
        }
        Ok(total)
    }

    /// Dirichlet energy summed over the channels of an `N₀ × f` signal.
    pub fn dirichlet_energy_multi(&self, x: &DMatrix<f64>) -> Result<f64> {
        self.check_cochain0(x.nrows())?;
        Ok(linalg::frobenius_sq(&self.apply_coboundary(x)))
    }

    pub(crate) fn check_cochain0(&self, len: usize) -> Result<()> {
        if len != self.dims.total_vertex() {
            return Err(Error::Structural(format!(
                "0-cochain has length {len}, expected N₀ = {}",
                self.dims.total_vertex()
            )));
        }
        Ok(())
    }

    /// Stalk-wise direct sum. Both sheaves must live on the same graph.
    pub fn direct_sum(&self, other: &CellularSheaf) -> Result<CellularSheaf> {
        if self.graph != other.graph {
            return Err(Error::Structural("direct sum requires a shared graph".into()));
        }
        let dv = self
            .dims
            .vertex_dims()
            .iter()
            .zip(other.dims.vertex_dims())
            .map(|(a, b)| a + b)
            .collect();
        let de = self
            .dims
            .edge_dims()
            .iter()
            .zip(other.dims.edge_dims())
            .map(|(a, b)| a + b)
            .collect();
        let maps = self
            .maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| linalg::block_diagonal(&[a.clone(), b.clone()]))
            .collect();
        Ok(CellularSheaf::from_parts_unchecked(
            self.graph.clone(),
            DimensionVector::with_zeros(dv, de),
            maps,
        ))
    }

    /// Sheaf induced on a subrepresentation, written in the `W` bases:
    /// `A'_{v,e} = W_e⁺ A_{v,e} W_v`. Zero-dimensional stalks are allowed.
    pub fn induced_on(&self, sub: &Subrepresentation) -> Result<CellularSheaf> {
        sub.check_shapes(&self.dims)?;
        let pinv: Vec<DMatrix<f64>> = sub
            .edge
            .iter()
            .map(|w| {
                if w.ncols() == 0 {
                    Ok(DMatrix::zeros(0, w.nrows()))
                } else {
                    w.clone()
                        .pseudo_inverse(1e-14)
                        .map_err(|e| Error::Numeric(e.to_string()))
                }
            })
            .collect::<Result<_>>()?;
        let maps = (0..self.maps.len())
            .map(|i| {
                let v = self.graph.incidence_vertex(i);
                &pinv[i / 2] * &self.maps[i] * &sub.vertex[v]
            })
            .collect();
        let (kv, ke) = sub.split_dims();
        Ok(CellularSheaf::from_parts_unchecked(
            self.graph.clone(),
            DimensionVector::with_zeros(kv, ke),
            maps,
        ))
    }

    /// Sheaf JSON: `{"graph", "d_v", "d_e", "maps"}`; map keys are
    /// `"<vertex id>|<edge index>"`, matrices row-major with shape `(d_e, d_v)`.
    pub fn to_json_value(&self) -> SheafJson {
        let ids = self.graph.vertex_ids();
        SheafJson {
            graph: self.graph.to_json_value(),
            d_v: ids
                .iter()
                .cloned()
                .zip(self.dims.vertex_dims().iter().copied())
                .collect(),
            d_e: self
                .dims
                .edge_dims()
                .iter()
                .enumerate()
                .map(|(e, &d)| (e.to_string(), d))
                .collect(),
            maps: self
                .maps
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let v = self.graph.incidence_vertex(i);
                    (format!("{}|{}", ids[v], i / 2), row_major(a))
                })
                .collect(),
        }
    }

    pub fn from_json_value(value: SheafJson) -> Result<Self> {
        let graph = Graph::from_json_value(value.graph)?;
        let mut dv = Vec::with_capacity(graph.num_vertices());
        for id in graph.vertex_ids() {
            dv.push(*value.d_v.get(id).ok_or_else(|| {
                Error::Structural(format!("d_v has no entry for vertex {id:?}"))
            })?);
        }
        let mut de = Vec::with_capacity(graph.num_edges());
        for e in 0..graph.num_edges() {
            de.push(*value.d_e.get(&e.to_string()).ok_or_else(|| {
                Error::Structural(format!("d_e has no entry for edge {e}"))
            })?);
        }
        if value.d_v.len() != dv.len() || value.d_e.len() != de.len() {
            return Err(Error::Structural("d_v/d_e contain unknown keys".into()));
        }
        let dims = DimensionVector::new(dv, de)?;
        if value.maps.len() != 2 * graph.num_edges() {
            return Err(Error::Structural(format!(
                "expected {} maps, found {}",
                2 * graph.num_edges(),
                value.maps.len()
            )));
        }
        let ids = graph.vertex_ids().to_vec();
        let mut maps = Vec::with_capacity(2 * graph.num_edges());
        for i in 0..2 * graph.num_edges() {
            let v = graph.incidence_vertex(i);
            let key = format!("{}|{}", ids[v], i / 2);
            let data = value
                .maps
                .get(&key)
                .ok_or_else(|| Error::Structural(format!("missing map {key:?}")))?;
            let (r, c) = (dims.edge_dim(i / 2), dims.vertex_dim(v));
            if data.len() != r * c {
                return Err(Error::Structural(format!(
                    "map {key:?} has {} entries, expected {r}×{c}",
                    data.len()
                )));
            }
            maps.push(DMatrix::from_row_slice(r, c, data));
        }
        Self::new(graph, dims, maps)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("sheaf serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::parse(path, j.line(), j.to_string()),
            other => other,
        })
    }
}

/// Entries of `m` in row-major order.
pub fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SheafJson {
    pub(crate) graph: GraphJson,
    pub(crate) d_v: BTreeMap<String, usize>,
    pub(crate) d_e: BTreeMap<String, usize>,
    pub(crate) maps: BTreeMap<String, Vec<f64>>,
}

/// Position of each coordinate of `[C⁰(f); C⁰(g)]` inside `C⁰(f ⊕ g)`.
///
/// In the direct sum the stalk at `v` is `[f_v; g_v]`, so the two summands'
/// coordinates interleave vertex by vertex.
pub fn direct_sum_permutation(f: &DimensionVector, g: &DimensionVector) -> Vec<usize> {
    let n = f.vertex_dims().len();
    let mut out = vec![0; f.total_vertex() + g.total_vertex()];
    let mut sum_offset = 0;
    for v in 0..n {
        let (df, dg) = (f.vertex_dim(v), g.vertex_dim(v));
        for i in 0..df {
            out[f.vertex_offset(v) + i] = sum_offset + i;
        }
        for i in 0..dg {
            out[f.total_vertex() + g.vertex_offset(v) + i] = sum_offset + df + i;
        }
        sum_offset += df + dg;
    }
    out
}

/// Gauge action `A_{v,e} ↦ g_e A_{v,e} g_v⁻¹`.
pub fn apply_gauge(sheaf: &CellularSheaf, gauge: &GaugeElement) -> Result<CellularSheaf> {
    gauge.validate(sheaf.dims())?;
    let inv_v: Vec<DMatrix<f64>> = gauge
        .vertex
        .iter()
        .map(|g| {
            g.clone()
                .try_inverse()
                .ok_or_else(|| Error::Conditioning("vertex gauge block is singular".into()))
        })
        .collect::<Result<_>>()?;
    let maps = sheaf
        .maps()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let v = sheaf.graph().incidence_vertex(i);
            &gauge.edge[i / 2] * a * &inv_v[v]
        })
        .collect();
    CellularSheaf::new(sheaf.graph().clone(), sheaf.dims().clone(), maps)
}

/// Per-object subspace bases `W_v` (`d_v × k_v`) and `W_e` (`d_e × k_e`).
#[derive(Debug, Clone, PartialEq)]
pub struct Subrepresentation {
    pub vertex: Vec<DMatrix<f64>>,
    pub edge: Vec<DMatrix<f64>>,
}

/// Relative singular-value threshold for a basis to count as full rank.
pub const BASIS_RANK_RTOL: f64 = 1e-10;

/// Default relative tolerance for the closure test.
pub const SUBREP_TOL: f64 = 1e-8;

impl Subrepresentation {
    /// The improper subrepresentation `F ⊂ F`.
    pub fn full(dims: &DimensionVector) -> Self {
        Subrepresentation {
            vertex: dims
                .vertex_dims()
                .iter()
                .map(|&d| DMatrix::identity(d, d))
                .collect(),
            edge: dims.edge_dims().iter().map(|&d| DMatrix::identity(d, d)).collect(),
        }
    }

    /// Span of the first `k_v` / `k_e` coordinate axes at every object.
    pub fn coordinate(dims: &DimensionVector, k_vertex: &[usize], k_edge: &[usize]) -> Self {
        let axes = |d: usize, k: usize| DMatrix::identity(d, k);
        Subrepresentation {
            vertex: dims
                .vertex_dims()
                .iter()
                .zip(k_vertex)
                .map(|(&d, &k)| axes(d, k))
                .collect(),
            edge: dims
                .edge_dims()
                .iter()
                .zip(k_edge)
                .map(|(&d, &k)| axes(d, k))
                .collect(),
        }
    }

    /// `(k_v, k_e)` per object.
    pub fn split_dims(&self) -> (Vec<usize>, Vec<usize>) {
        (
            self.vertex.iter().map(|w| w.ncols()).collect(),
            self.edge.iter().map(|w| w.ncols()).collect(),
        )
    }

    /// Sub-dimension vector in quiver-object order.
    pub fn object_dims(&self) -> Vec<usize> {
        self.vertex.iter().chain(&self.edge).map(|w| w.ncols()).collect()
    }

    /// Transport the bases along a gauge: `W_i ↦ g_i W_i`.
    pub fn transformed(&self, gauge: &GaugeElement) -> Self {
        Subrepresentation {
            vertex: self.vertex.iter().zip(&gauge.vertex).map(|(w, g)| g * w).collect(),
            edge: self.edge.iter().zip(&gauge.edge).map(|(w, g)| g * w).collect(),
        }
    }

    pub(crate) fn check_shapes(&self, dims: &DimensionVector) -> Result<()> {
        if self.vertex.len() != dims.vertex_dims().len() || self.edge.len() != dims.edge_dims().len()
        {
            return Err(Error::Structural("subrepresentation object count mismatch".into()));
        }
        for (v, w) in self.vertex.iter().enumerate() {
            if w.nrows() != dims.vertex_dim(v) || w.ncols() > w.nrows() {
                return Err(Error::Structural(format!(
                    "vertex basis {v} has shape {:?} for stalk dimension {}",
                    w.shape(),
                    dims.vertex_dim(v)
                )));
            }
        }
        for (e, w) in self.edge.iter().enumerate() {
            if w.nrows() != dims.edge_dim(e) || w.ncols() > w.nrows() {
                return Err(Error::Structural(format!(
                    "edge basis {e} has shape {:?} for stalk dimension {}",
                    w.shape(),
                    dims.edge_dim(e)
                )));
            }
        }
        Ok(())
    }

    fn check_rank(&self) -> Result<()> {
        let all = self
            .vertex
            .iter()
            .enumerate()
            .map(|(i, w)| (w, QuiverObject::Vertex(i)))
            .chain(
                self.edge
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (w, QuiverObject::Edge(i))),
            );
        for (w, obj) in all {
            if !linalg::has_full_column_rank(w, BASIS_RANK_RTOL)? {
                return Err(Error::Precondition(format!(
                    "basis at {obj:?} is rank deficient"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of [`verify_subrepresentation`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubrepReport {
    pub certified: bool,
    /// Incidence with the largest relative closure defect, if there are incidences.
    pub worst_incidence: Option<usize>,
    /// `‖(I − P_{W_e}) A W_v‖_F / ‖A W_v‖_F` at the worst incidence.
    pub worst_ratio: f64,
}

/// Checks `A_{v,e} col(W_v) ⊆ col(W_e)` at every incidence to relative tolerance `tol`.
pub fn verify_subrepresentation(
    sheaf: &CellularSheaf,
    sub: &Subrepresentation,
    tol: f64,
) -> Result<SubrepReport> {
    sub.check_shapes(sheaf.dims())?;
    sub.check_rank()?;
    let projectors: Vec<DMatrix<f64>> = sub
        .edge
        .iter()
        .map(|w| linalg::range_basis(w, BASIS_RANK_RTOL))
        .collect::<Result<_>>()?;
    let mut worst: Option<(usize, f64)> = None;
    let mut certified = true;
    for (i, a) in sheaf.maps().iter().enumerate() {
        let v = sheaf.graph().incidence_vertex(i);
        let image = a * &sub.vertex[v];
        let q = &projectors[i / 2];
        let defect = &image - q * (q.transpose() * &image);
        let (dn, inorm) = (defect.norm(), image.norm());
        let ratio = if inorm > 0.0 { dn / inorm } else { 0.0 };
        if dn > tol * inorm {
            certified = false;
        }
        if worst.is_none_or(|(_, r)| ratio > r) {
            worst = Some((i, ratio));
        }
    }
    Ok(SubrepReport {
        certified,
        worst_incidence: worst.map(|(i, _)| i),
        worst_ratio: worst.map_or(0.0, |(_, r)| r),
    })
}

/// Threshold below which a block of a trivial-line solution counts as zero.
pub const DEGENERATE_BLOCK_TOL: f64 = 1e-10;

/// Solution space of `{A_{v,e} w_v = w_e}` over all incidences.
#[derive(Debug, Clone)]
pub struct TrivialLines {
    /// `(N₀ + N₁) × k`, orthonormal; rows are `[w_v stacked; w_e stacked]`.
    pub basis: DMatrix<f64>,
    /// Objects whose block is (numerically) zero, per basis column.
    pub degenerate: Vec<Vec<QuiverObject>>,
    pub borderline: bool,
    n0: usize,
    dims: DimensionVector,
}

impl TrivialLines {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    /// Stacked vertex blocks `(w_v)` of a solution column.
    pub fn vertex_signal(&self, col: usize) -> DVector<f64> {
        self.basis.column(col).rows(0, self.n0).into_owned()
    }

    /// Stacked edge blocks `(w_e)` of a solution column.
    pub fn edge_signal(&self, col: usize) -> DVector<f64> {
        let n1 = self.basis.nrows() - self.n0;
        self.basis.column(col).rows(self.n0, n1).into_owned()
    }

    /// The line subrepresentation spanned by solution `col`, or `None` when
    /// some block vanishes.
    pub fn subrepresentation(&self, col: usize) -> Option<Subrepresentation> {
        if !self.degenerate[col].is_empty() {
            return None;
        }
        let c = self.basis.column(col);
        let d = &self.dims;
        let vertex = (0..d.vertex_dims().len())
            .map(|v| DMatrix::from_column_slice(d.vertex_dim(v), 1, c.rows(d.vertex_offset(v), d.vertex_dim(v)).as_slice()))
            .collect();
        let edge = (0..d.edge_dims().len())
            .map(|e| {
                let start = self.n0 + d.edge_offset(e);
                DMatrix::from_column_slice(d.edge_dim(e), 1, c.rows(start, d.edge_dim(e)).as_slice())
            })
            .collect();
        Some(Subrepresentation { vertex, edge })
    }
}

/// Solves the homogeneous system `A_{v,e} w_v − w_e = 0` for all incidences.
pub fn find_trivial_lines(sheaf: &CellularSheaf) -> Result<TrivialLines> {
    let d = sheaf.dims();
    let (n0, n1) = (d.total_vertex(), d.total_edge());
    let rows: usize = (0..sheaf.maps().len()).map(|i| d.edge_dim(i / 2)).sum();
    let mut system = DMatrix::zeros(rows, n0 + n1);
    let mut r = 0;
    for (i, a) in sheaf.maps().iter().enumerate() {
        let v = sheaf.graph().incidence_vertex(i);
        let e = i / 2;
        system.view_mut((r, d.vertex_offset(v)), a.shape()).copy_from(a);
        for k in 0..d.edge_dim(e) {
            system[(r + k, n0 + d.edge_offset(e) + k)] = -1.0;
        }
        r += d.edge_dim(e);
    }
    let ns = linalg::nullspace(&system, NULLSPACE_RTOL)?;
    let degenerate = ns
        .basis
        .column_iter()
        .map(|c| {
            let vertices = (0..d.vertex_dims().len()).filter_map(|v| {
                (c.rows(d.vertex_offset(v), d.vertex_dim(v)).norm() < DEGENERATE_BLOCK_TOL)
                    .then_some(QuiverObject::Vertex(v))
            });
            let edges = (0..d.edge_dims().len()).filter_map(|e| {
                (c.rows(n0 + d.edge_offset(e), d.edge_dim(e)).norm() < DEGENERATE_BLOCK_TOL)
                    .then_some(QuiverObject::Edge(e))
            });
            vertices.chain(edges).collect()
        })
        .collect();
    Ok(TrivialLines {
        basis: ns.basis,
        degenerate,
        borderline: ns.borderline,
        n0,
        dims: d.clone(),
    })
}
