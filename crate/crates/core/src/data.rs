//! Node-classification datasets: directory loading, random splits, edge
//! homophily, a planted two-block heterophilic generator and a WebKB-shaped
//! fixture generator.
//!
//! Directory layout:
//!
//! * `graph.json` (graph JSON) or `edges.tsv` (`u<TAB>v` per line, integer
//!   node indices into the feature rows)
//! * `features.csv`: no header, one row per node
//! * `labels.csv`: one class index per line
//! * `splits.json` (optional): `{"splits": [{"train": [...], "val": [...], "test": [...]}]}`
//! * `manifest.json` (optional): generator manifest; its `classes` field
//!   bounds the labels

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quiver::Graph;
use crate::sheaf::CellularSheaf;

/// Fractions used for generated splits.
pub const TRAIN_FRACTION: f64 = 0.48;
pub const VAL_FRACTION: f64 = 0.32;
/// Splits generated when a dataset directory has no `splits.json`.
pub const DEFAULT_SPLIT_COUNT: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitsFile {
    splits: Vec<Split>,
}

/// Shuffles `0..n` and cuts it 48 / 32 / 20 (rounded; test takes the rest).
pub fn random_split<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Split {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
    let n_val = ((VAL_FRACTION * n as f64).round() as usize).min(n - n_train);
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Split {
        train: order,
        val,
        test,
    }
}

/// `count` independent splits from one seed.
pub fn random_splits(n: usize, count: usize, seed: u64) -> Vec<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_split(n, &mut rng)).collect()
}

/// Fraction of edges whose endpoints share a label; `None` without edges.
pub fn edge_homophily(graph: &Graph, labels: &[usize]) -> Option<f64> {
    let edges = graph.edges();
    if edges.is_empty() {
        return None;
    }
    let same = edges.iter().filter(|&&(u, v)| labels[u] == labels[v]).count();
    Some(same as f64 / edges.len() as f64)
}

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub graph: Graph,
    /// `|V| × f`, rows in vertex order.
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub splits: Vec<Split>,
}

/// Counts reported by `inspect-dataset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    pub edge_homophily: Option<f64>,
    pub splits: usize,
}

impl DatasetBundle {
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_vertices();
        if self.features.nrows() != n || self.labels.len() != n {
            return Err(Error::Structural(format!(
                "{n} vertices but {} feature rows and {} labels",
                self.features.nrows(),
                self.labels.len()
            )));
        }
        if let Some((i, &y)) = self.labels.iter().enumerate().find(|(_, &y)| y >= self.n_classes) {
            return Err(Error::Structural(format!(
                "label {y} at node {i} exceeds class count {}",
                self.n_classes
            )));
        }
        for (k, s) in self.splits.iter().enumerate() {
            check_split(s, n).map_err(|m| Error::Structural(format!("split {k}: {m}")))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            nodes: self.graph.num_vertices(),
            edges: self.graph.num_edges(),
            features: self.features.ncols(),
            classes: self.n_classes,
            edge_homophily: edge_homophily(&self.graph, &self.labels),
            splits: self.splits.len(),
        }
    }

    pub fn split(&self, k: usize) -> Result<&Split> {
        self.splits
            .get(k)
            .ok_or_else(|| Error::Precondition(format!("split {k} requested, dataset has {}", self.splits.len())))
    }

    /// Writes the directory layout described in the module docs.
    pub fn write_dir(&self, dir: &Path, format: GraphFormat, with_splits: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        match format {
            GraphFormat::Json => write("graph.json", self.graph.to_json())?,
            GraphFormat::Tsv => {
                let mut s = String::new();
                for &(u, v) in self.graph.edges() {
                    s.push_str(&format!("{u}\t{v}\n"));
                }
                write("edges.tsv", s)?
            }
        }
        let mut s = String::with_capacity(self.features.len() * 4);
        for row in self.features.row_iter() {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        write("features.csv", s)?;
        let labels: String = self.labels.iter().map(|y| format!("{y}\n")).collect();
        write("labels.csv", labels)?;
        if with_splits {
            let file = SplitsFile {
                splits: self.splits.clone(),
            };
            write("splits.json", serde_json::to_string(&file)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Json,
    Tsv,
}

fn check_split(s: &Split, n: usize) -> std::result::Result<(), String> {
    let mut seen = HashSet::new();
    for (name, mask) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        for &i in mask {
            if i >= n {
                return Err(format!("{name} index {i} out of range (n = {n})"));
            }
            if !seen.insert(i) {
                return Err(format!("node {i} appears twice ({name})"));
            }
        }
    }
    Ok(())
}

/// Generator manifest written next to generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    pub seed: u64,
    /// Generator-specific details.
    #[serde(default)]
    pub details: serde_json::Value,
}

impl DatasetManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join("manifest.json");
        std::fs::write(&p, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&p, e))
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_features(text: &str, file: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(file, k + 1, format!("bad number: {e}")))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(
                    file,
                    k + 1,
                    format!("row has {} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(file, k + 1, "non-finite feature"));
        }
        rows.push(row);
    }
    let n = rows.len();
    let f = rows.first().map_or(0, |r| r.len());
    if n == 0 || f == 0 {
        return Err(Error::parse(file, 1, "no feature rows"));
    }
    Ok(DMatrix::from_fn(n, f, |r, c| rows[r][c]))
}

fn parse_labels(text: &str, file: &Path, classes: Option<usize>) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let y: usize = t
            .parse()
            .map_err(|_| Error::parse(file, k + 1, format!("label {t:?} is not a class index")))?;
        if let Some(c) = classes {
            if y >= c {
                return Err(Error::parse(file, k + 1, format!("label {y} out of range (classes = {c})")));
            }
        }
        labels.push(y);
    }
    Ok(labels)
}

/// Edge list over node indices `0..n`. Self-loops are dropped and repeated
/// pairs (in either orientation) are merged, since WebKB-style exports list
/// links in both directions.
fn parse_index_edges(text: &str, file: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(file, k + 1, "expected `u<TAB>v`"));
        }
        let mut ends = [0usize; 2];
        for (slot, raw) in ends.iter_mut().zip(&fields) {
            let i: usize = raw
                .parse()
                .map_err(|_| Error::parse(file, k + 1, format!("endpoint {raw:?} is not a node index")))?;
            if i >= n {
                return Err(Error::parse(
                    file,
                    k + 1,
                    format!("edge references unknown vertex {i} (features.csv has {n} rows)"),
                ));
            }
            *slot = i;
        }
        let (u, v) = (ends[0].min(ends[1]), ends[0].max(ends[1]));
        if u != v && seen.insert((u, v)) {
            edges.push((u, v));
        }
    }
    Ok(edges)
}

/// Loads a dataset directory. Without `splits.json`, ten random 48/32/20
/// splits are drawn from seed 0.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let manifest_path = dir.join("manifest.json");
    let classes_hint = if manifest_path.exists() {
        let m: DatasetManifest = serde_json::from_str(&read(&manifest_path)?)
            .map_err(|e| Error::parse(&manifest_path, e.line(), e.to_string()))?;
        Some(m.classes)
    } else {
        None
    };

    let fpath = dir.join("features.csv");
    let features = parse_features(&read(&fpath)?, &fpath)?;
    let n = features.nrows();

    let json_path = dir.join("graph.json");
    let tsv_path = dir.join("edges.tsv");
    let graph = if json_path.exists() {
        let g = Graph::load(&json_path)?;
        if g.num_vertices() != n {
            return Err(Error::parse(
                &fpath,
                n.min(g.num_vertices()) + 1,
                format!("{n} feature rows but graph.json declares {} vertices", g.num_vertices()),
            ));
        }
        g
    } else if tsv_path.exists() {
        let edges = parse_index_edges(&read(&tsv_path)?, &tsv_path, n)?;
        Graph::with_indices(n, &edges)?
    } else {
        return Err(Error::io(
            &tsv_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "neither graph.json nor edges.tsv found"),
        ));
    };

    let lpath = dir.join("labels.csv");
    let labels = parse_labels(&read(&lpath)?, &lpath, classes_hint)?;
    if labels.len() != n {
        return Err(Error::parse(
            &lpath,
            labels.len().min(n) + 1,
            format!("{} labels for {n} nodes", labels.len()),
        ));
    }
    let n_classes = classes_hint.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));

    let spath = dir.join("splits.json");
    let splits = if spath.exists() {
        let file: SplitsFile =
            serde_json::from_str(&read(&spath)?).map_err(|e| Error::parse(&spath, e.line(), e.to_string()))?;
        for (k, s) in file.splits.iter().enumerate() {
            check_split(s, n).map_err(|m| Error::parse(&spath, 1, format!("split {k}: {m}")))?;
        }
        file.splits
    } else {
        random_splits(n, DEFAULT_SPLIT_COUNT, 0)
    };

    let bundle = DatasetBundle {
        graph,
        features,
        labels,
        n_classes,
        splits,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Pure-noise feature columns appended after the two indicator columns.
pub const TWO_BLOCK_DISTRACTORS: usize = 6;
/// Standard deviation of the Gaussian noise on every feature column.
pub const TWO_BLOCK_NOISE: f64 = 1.0;
const GENERATION_RETRIES: u64 = 10;

/// Planted structure of a two-block dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBlockDetails {
    pub n_per_block: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Graph draws discarded for disconnection before this one.
    pub retries: u64,
    pub intra_edges: usize,
    pub inter_edges: usize,
    pub edge_homophily: Option<f64>,
    /// `d = 1` signed sheaf: maps `(1, 1)` on intra-block edges and `(1, −1)`
    /// on inter-block edges; the ±1 block indicator is a global section.
    pub planted_section: String,
    pub noise_std: f64,
    pub distractors: usize,
}

fn mix(seed: u64, k: u64) -> u64 {
    // SplitMix64 finalizer over (seed, k).
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed of `seed` for stream `k`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    mix(seed, k)
}

fn blocks_connected(graph: &Graph, n_per_block: usize, p_inter: f64) -> bool {
    if p_inter > 0.0 {
        return graph.is_connected();
    }
    let comp = graph.component_labels();
    comp[..n_per_block].iter().all(|&c| c == comp[0])
        && comp[n_per_block..].iter().all(|&c| c == comp[n_per_block])
}

/// Two equal blocks; block `b` nodes carry label `b`. Pairs inside a block
/// are joined with probability `p_intra`, across blocks with `p_inter`.
///
/// Features are the class one-hot plus Gaussian noise, followed by
/// [`TWO_BLOCK_DISTRACTORS`] noise columns. The graph must be connected
/// (with `p_inter = 0`: each block connected); up to ten fresh draws are made.
pub fn generate_two_block(
    n_per_block: usize,
    p_intra: f64,
    p_inter: f64,
    seed: u64,
) -> Result<(DatasetBundle, DatasetManifest)> {
    generate_two_block_with_noise(n_per_block, p_intra, p_inter, TWO_BLOCK_NOISE, seed)
}

/// [`generate_two_block`] with an explicit feature noise level.
pub fn generate_two_block_with_noise(
    n_per_block: usize,
    p_intra: f64,
    p_inter: f64,
    noise_std: f64,
    seed: u64,
) -> Result<(DatasetBundle, DatasetManifest)> {
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::Precondition("noise_std must be finite and non-negative".into()));
    }
    if n_per_block < 4 {
        return Err(Error::Precondition("n_per_block must be at least 4".into()));
    }
    if !(p_intra > 0.0 && p_intra <= 1.0) || !(0.0..=1.0).contains(&p_inter) {
        return Err(Error::Precondition("p_intra must lie in (0, 1], p_inter in [0, 1]".into()));
    }
    let n = 2 * n_per_block;
    let labels: Vec<usize> = (0..n).map(|i| i / n_per_block).collect();
    for attempt in 0..=GENERATION_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, attempt));
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if labels[u] == labels[v] { p_intra } else { p_inter };
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let graph = Graph::with_indices(n, &edges)?;
        if !blocks_connected(&graph, n_per_block, p_inter) {
            continue;
        }
        let f = 2 + TWO_BLOCK_DISTRACTORS;
        let features = DMatrix::from_fn(n, f, |r, c| {
            let signal = if c == labels[r] { 1.0 } else { 0.0 };
            signal + noise_std * rng.sample::<f64, _>(StandardNormal)
        });
        let splits = random_splits(n, DEFAULT_SPLIT_COUNT, mix(seed, 1000 + attempt));
        let intra = edges.iter().filter(|&&(u, v)| labels[u] == labels[v]).count();
        let details = TwoBlockDetails {
            n_per_block,
            p_intra,
            p_inter,
            retries: attempt,
            intra_edges: intra,
            inter_edges: edges.len() - intra,
            edge_homophily: edge_homophily(&graph, &labels),
            planted_section: "signed d=1 sheaf: intra (1,1), inter (1,-1); section = block indicator (+1, -1)"
                .into(),
            noise_std,
            distractors: TWO_BLOCK_DISTRACTORS,
        };
        let manifest = DatasetManifest {
            name: "two-block".into(),
            nodes: n,
            edges: edges.len(),
            features: f,
            classes: 2,
            seed,
            details: serde_json::to_value(&details)?,
        };
        let bundle = DatasetBundle {
            graph,
            features,
            labels,
            n_classes: 2,
            splits,
        };
        return Ok((bundle, manifest));
    }
    Err(Error::Generation(format!(
        "two-block graph still disconnected after {GENERATION_RETRIES} retries (n_per_block {n_per_block}, p_intra {p_intra}, p_inter {p_inter})"
    )))
}

/// The signed `d = 1` sheaf that agrees inside blocks and flips sign across them.
pub fn planted_signed_sheaf(graph: &Graph, labels: &[usize]) -> Result<CellularSheaf> {
    let coeffs: Vec<(f64, f64)> = graph
        .edges()
        .iter()
        .map(|&(u, v)| (1.0, if labels[u] == labels[v] { 1.0 } else { -1.0 }))
        .collect();
    CellularSheaf::scalar(graph.clone(), &coeffs)
}

/// `+1` on label-0 nodes, `−1` elsewhere.
pub fn community_indicator(labels: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), 1, |r, _| if labels[r] == 0 { 1.0 } else { -1.0 })
}

/// Counts of a WebKB-style benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebKbShape {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
}

impl WebKbShape {
    /// Texas: 183 nodes, 325 edges, 1703 features, 5 classes.
    pub const TEXAS: WebKbShape = WebKbShape {
        nodes: 183,
        edges: 325,
        features: 1703,
        classes: 5,
    };
}

/// Synthetic stand-in with exactly the given counts: random distinct edges,
/// sparse binary bag-of-words features with a few class-leaning words, and
/// skewed class sizes. Every class is used at least once.
pub fn generate_webkb_like(shape: WebKbShape, seed: u64) -> Result<(DatasetBundle, DatasetManifest)> {
    let WebKbShape {
        nodes: n,
        edges: m,
        features: f,
        classes: c,
    } = shape;
    if c == 0 || n < c || f == 0 || m > n * (n - 1) / 2 {
        return Err(Error::Precondition("infeasible WebKB shape".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..c).map(|k| 1.0 / (k + 1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut labels: Vec<usize> = (0..c).collect();
    while labels.len() < n {
        let mut r = rng.random::<f64>() * total;
        let mut k = 0;
        while k + 1 < c && r >= weights[k] {
            r -= weights[k];
            k += 1;
        }
        labels.push(k);
    }
    labels.shuffle(&mut rng);

    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && seen.insert((u.min(v), u.max(v))) {
            edges.push((u.min(v), u.max(v)));
        }
    }
    let graph = Graph::with_indices(n, &edges)?;

    let topic = 20.min(f / c.max(1)).max(1);
    let features = DMatrix::from_fn(n, f, |r, j| {
        let leaning = j / topic == labels[r] && j < topic * c;
        let p = if leaning { 0.15 } else { 0.01 };
        if rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    });
    let manifest = DatasetManifest {
        name: "webkb-like".into(),
        nodes: n,
        edges: m,
        features: f,
        classes: c,
        seed,
        details: serde_json::json!({ "edge_homophily": edge_homophily(&graph, &labels) }),
    };
    let bundle = DatasetBundle {
        graph,
        features,
        labels,
        n_classes: c,
        splits: random_splits(n, DEFAULT_SPLIT_COUNT, mix(seed, 1)),
    };
    Ok((bundle, manifest))
}
