//! Graphs, their incidence quivers, dimension vectors and the gauge group.
//!
//! Vertex order is the order in which vertices were declared and defines the
//! canonical indexing used everywhere else. Each edge stores its endpoints
//! sorted by vertex index; the lower-indexed endpoint is the "tail" `u` of the
//! coboundary convention `(δx)_e = A_{v,e} x_v − A_{u,e} x_u`.
//!
//! Incidences are numbered `2e` (tail) and `2e + 1` (head) for edge `e`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Undirected simple graph with stable vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    vertex_ids: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub vertices: Vec<String>,
    pub edges: Vec<[String; 2]>,
}

impl Graph {
    /// Build a graph from vertex ids and index pairs. Endpoint order inside a
    /// pair is irrelevant; edge order is kept.
    pub fn new(vertex_ids: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(vertex_ids.len());
        for (i, id) in vertex_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Structural(format!("duplicate vertex id {id:?}")));
            }
        }
        let n = vertex_ids.len();
        let mut seen = HashSet::with_capacity(edges.len());
        let mut canon = Vec::with_capacity(edges.len());
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::Structural(format!(
                    "edge {k} references vertex index {} but the graph has {n} vertices",
                    a.max(b)
                )));
            }
            if a == b {
                return Err(Error::Structural(format!(
                    "edge {k} is a self-loop on {:?}",
                    vertex_ids[a]
                )));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::Structural(format!(
                    "edge {k} duplicates {{{:?}, {:?}}}",
                    vertex_ids[e.0], vertex_ids[e.1]
                )));
            }
            canon.push(e);
        }
        Ok(Graph {
            vertex_ids,
            index,
            edges: canon,
        })
    }

    /// Graph on vertices named `"0"`, `"1"`, ….
    pub fn with_indices(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()).collect(), edges)
    }

    pub fn from_named_edges(vertex_ids: Vec<String>, edges: &[(String, String)]) -> Result<Self> {
        let index: HashMap<&str, usize> = vertex_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut idx = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            let lookup = |s: &String| {
                index
                    .get(s.as_str())
                    .copied()
                    .ok_or_else(|| Error::Structural(format!("edge endpoint {s:?} is not a declared vertex")))
            };
            idx.push((lookup(u)?, lookup(v)?));
        }
        Self::new(vertex_ids, &idx)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::with_indices(n, &edges)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((n - 1, 0));
        Self::with_indices(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::with_indices(n, &edges)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertex_ids
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Edges as `(tail, head)` with `tail < head`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Incident `(edge, incidence)` pairs of each vertex.
    pub fn incidences_of_vertices(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.num_vertices()];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            out[u].push((e, 2 * e));
            out[v].push((e, 2 * e + 1));
        }
        out
    }

    /// Vertex at the given incidence index.
    pub fn incidence_vertex(&self, incidence: usize) -> usize {
        let (u, v) = self.edges[incidence / 2];
        if incidence % 2 == 0 {
            u
        } else {
            v
        }
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_vertices();
        if n == 0 {
            return true;
        }
        self.component_labels().iter().all(|&c| c == 0)
    }

    /// Connected-component label per vertex, labels in order of first vertex.
    pub fn component_labels(&self) -> Vec<usize> {
        let n = self.num_vertices();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(x) = stack.pop() {
                for &y in &adj[x] {
                    if label[y] == usize::MAX {
                        label[y] = next;
                        stack.push(y);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub(crate) fn to_json_value(&self) -> GraphJson {
        GraphJson {
            vertices: self.vertex_ids.clone(),
            edges: self
                .edges
                .iter()
                .map(|&(u, v)| [self.vertex_ids[u].clone(), self.vertex_ids[v].clone()])
                .collect(),
        }
    }

    pub(crate) fn from_json_value(g: GraphJson) -> Result<Self> {
        let edges: Vec<_> = g.edges.into_iter().map(|[u, v]| (u, v)).collect();
        Self::from_named_edges(g.vertices, &edges)
    }

    /// `{"vertices": [...], "edges": [["u","v"], ...]}`
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(text)?)
    }

    /// Tab-separated edge list, one `u<TAB>v` pair per line. Vertices are
    /// created in first-appearance order. Blank lines and `#` comments are skipped.
    pub fn from_edge_tsv(text: &str, file: &Path) -> Result<Self> {
        let mut ids: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 || fields.iter().any(|f| f.trim().is_empty()) {
                return Err(Error::parse(file, lineno + 1, "expected `u<TAB>v`"));
            }
            let mut ends = [0usize; 2];
            for (slot, raw) in ends.iter_mut().zip(&fields) {
                let id = raw.trim().to_string();
                *slot = *index.entry(id.clone()).or_insert_with(|| {
                    ids.push(id);
                    ids.len() - 1
                });
            }
            if ends[0] == ends[1] {
                return Err(Error::parse(file, lineno + 1, "self-loop"));
            }
            let key = (ends[0].min(ends[1]), ends[0].max(ends[1]));
            if !seen.insert(key) {
                return Err(Error::parse(file, lineno + 1, "duplicate edge"));
            }
            edges.push((ends[0], ends[1]));
        }
        Self::new(ids, &edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|x| x == "json") {
            Self::from_json(&text).map_err(|e| match e {
                Error::Json(j) => Error::parse(path, j.line(), j.to_string()),
                other => other,
            })
        } else {
            Self::from_edge_tsv(&text, path)
        }
    }
}

/// An object of the incidence quiver: a graph vertex or a graph edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuiverObject {
    Vertex(usize),
    Edge(usize),
}

/// Arrow `a_{v,e}: v → e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrow {
    pub source: usize,
    pub target: usize,
}

/// Bipartite quiver with one object per vertex and per edge, and one arrow per incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceQuiver {
    pub objects: Vec<QuiverObject>,
    /// Indexed by incidence number.
    pub arrows: Vec<Arrow>,
}

impl IncidenceQuiver {
    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn num_arrows(&self) -> usize {
        self.arrows.len()
    }

    /// Arrows entering the given edge-object.
    pub fn arrows_into(&self, edge: usize) -> impl Iterator<Item = &Arrow> {
        self.arrows.iter().filter(move |a| a.target == edge)
    }
}

/// Objects are vertices `0..n` followed by edges `0..m`.
pub fn build_incidence_quiver(graph: &Graph) -> IncidenceQuiver {
    let objects = (0..graph.num_vertices())
        .map(QuiverObject::Vertex)
        .chain((0..graph.num_edges()).map(QuiverObject::Edge))
        .collect();
    let arrows = graph
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(e, &(u, v))| {
            [
                Arrow { source: u, target: e },
                Arrow { source: v, target: e },
            ]
        })
        .collect();
    IncidenceQuiver { objects, arrows }
}

/// Stalk dimensions `d = ((d_v), (d_e))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionVector {
    vertex: Vec<usize>,
    edge: Vec<usize>,
    vertex_offsets: Vec<usize>,
    edge_offsets: Vec<usize>,
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &d in dims {
        acc += d;
        out.push(acc);
    }
    out
}

impl DimensionVector {
    pub fn new(vertex: Vec<usize>, edge: Vec<usize>) -> Result<Self> {
        if let Some(i) = vertex.iter().position(|&d| d == 0) {
            return Err(Error::Structural(format!("vertex {i} has stalk dimension 0")));
        }
        if let Some(i) = edge.iter().position(|&d| d == 0) {
            return Err(Error::Structural(format!("edge {i} has stalk dimension 0")));
        }
        Ok(Self::with_zeros(vertex, edge))
    }

    /// Like [`new`](Self::new) but allows zero-dimensional stalks; used for
    /// sheaves induced on subrepresentations.
    pub(crate) fn with_zeros(vertex: Vec<usize>, edge: Vec<usize>) -> Self {
        DimensionVector {
            vertex_offsets: offsets(&vertex),
            edge_offsets: offsets(&edge),
            vertex,
            edge,
        }
    }

    pub fn uniform(graph: &Graph, d_v: usize, d_e: usize) -> Result<Self> {
        Self::new(vec![d_v; graph.num_vertices()], vec![d_e; graph.num_edges()])
    }

    pub fn vertex_dims(&self) -> &[usize] {
        &self.vertex
    }

    pub fn edge_dims(&self) -> &[usize] {
        &self.edge
    }

    pub fn vertex_dim(&self, v: usize) -> usize {
        self.vertex[v]
    }

    pub fn edge_dim(&self, e: usize) -> usize {
        self.edge[e]
    }

    /// N₀ = Σ d_v
    pub fn total_vertex(&self) -> usize {
        *self.vertex_offsets.last().unwrap_or(&0)
    }

    /// N₁ = Σ d_e
    pub fn total_edge(&self) -> usize {
        *self.edge_offsets.last().unwrap_or(&0)
    }

    pub fn vertex_offset(&self, v: usize) -> usize {
        self.vertex_offsets[v]
    }

    pub fn edge_offset(&self, e: usize) -> usize {
        self.edge_offsets[e]
    }

    /// Dimensions in quiver-object order: vertices, then edges.
    pub fn object_dims(&self) -> Vec<usize> {
        self.vertex.iter().chain(&self.edge).copied().collect()
    }

    pub fn num_objects(&self) -> usize {
        self.vertex.len() + self.edge.len()
    }

    /// True when every stalk (vertex and edge) has the same dimension.
    pub fn is_uniform(&self) -> bool {
        let mut all = self.vertex.iter().chain(&self.edge);
        match all.next() {
            Some(&first) => all.all(|&d| d == first),
            None => true,
        }
    }

    /// The common vertex dimension if all vertex stalks agree.
    pub fn uniform_vertex_dim(&self) -> Option<usize> {
        let first = *self.vertex.first()?;
        self.vertex.iter().all(|&d| d == first).then_some(first)
    }

    pub fn matches(&self, graph: &Graph) -> bool {
        self.vertex.len() == graph.num_vertices() && self.edge.len() == graph.num_edges()
    }
}

/// Reciprocal condition number below which a gauge block counts as singular.
pub const GAUGE_RCOND_MIN: f64 = 1e-10;

/// An element of `G_d = Π GL(d_v) × Π GL(d_e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeElement {
    pub vertex: Vec<DMatrix<f64>>,
    pub edge: Vec<DMatrix<f64>>,
}

impl GaugeElement {
    pub fn identity(dims: &DimensionVector) -> Self {
        GaugeElement {
            vertex: dims.vertex.iter().map(|&d| DMatrix::identity(d, d)).collect(),
            edge: dims.edge.iter().map(|&d| DMatrix::identity(d, d)).collect(),
        }
    }

    /// Checks block shapes against `dims` and the conditioning of every block.
    pub fn validate(&self, dims: &DimensionVector) -> Result<()> {
        if self.vertex.len() != dims.vertex.len() || self.edge.len() != dims.edge.len() {
            return Err(Error::Structural(format!(
                "gauge has {}+{} blocks, dimension vector has {}+{}",
                self.vertex.len(),
                self.edge.len(),
                dims.vertex.len(),
                dims.edge.len()
            )));
        }
        let blocks = self
            .vertex
            .iter()
            .zip(&dims.vertex)
            .map(|(g, &d)| (g, d, "vertex"))
            .chain(self.edge.iter().zip(&dims.edge).map(|(g, &d)| (g, d, "edge")));
        for (i, (g, d, kind)) in blocks.enumerate() {
            if g.shape() != (d, d) {
                return Err(Error::Structural(format!(
                    "{kind} gauge block {i} has shape {:?}, expected ({d}, {d})",
                    g.shape()
                )));
            }
            let rc = linalg::reciprocal_condition(g)?;
            if rc < GAUGE_RCOND_MIN {
                return Err(Error::Conditioning(format!(
                    "{kind} gauge block {i} has reciprocal condition {rc:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// The element acting as "first `self`, then `next`": blockwise `next · self`.
    pub fn then(&self, next: &GaugeElement) -> GaugeElement {
        GaugeElement {
            vertex: self.vertex.iter().zip(&next.vertex).map(|(g, h)| h * g).collect(),
            edge: self.edge.iter().zip(&next.edge).map(|(g, h)| h * g).collect(),
        }
    }

    pub fn inverse(&self) -> Result<GaugeElement> {
        let inv = |m: &DMatrix<f64>| {
            m.clone()
                .try_inverse()
                .ok_or_else(|| Error::Conditioning("gauge block is singular".into()))
        };
        Ok(GaugeElement {
            vertex: self.vertex.iter().map(inv).collect::<Result<_>>()?,
            edge: self.edge.iter().map(inv).collect::<Result<_>>()?,
        })
    }
}
