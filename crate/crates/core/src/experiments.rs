//! Experiment orchestration: architecture × regularizer grids, depth sweeps,
//! and CSV/JSON result files.
//!
//! Every (spec, split, seed) cell derives its own RNG streams from its seed
//! and split index, so cells run in parallel and results come back in a
//! fixed order.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, DatasetBundle};
use crate::diffusion::StepSize;
use crate::error::{Error, Result};
use crate::model::{evaluate, train, HaltReason, History, MapInit, ModelConfig, SheafModel, TrainConfig};
use crate::stability;

pub const DEFAULT_LAMBDA_MU: f64 = 2e-3;
pub const DEFAULT_LAMBDA_THETA: f64 = 1e-4;

/// Uniform stalk dimensions of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub vertex_dim: usize,
    pub edge_dim: usize,
}

impl Architecture {
    pub const SQUARE: Architecture = Architecture {
        vertex_dim: 3,
        edge_dim: 3,
    };
    pub const RECT: Architecture = Architecture {
        vertex_dim: 3,
        edge_dim: 2,
    };

    /// `"square-3x3"`, `"rect-3to2"`, or `"<d_v>x<d_e>"` / `"<d_v>to<d_e>"` generally.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "square-3x3" => Ok(Self::SQUARE),
            "rect-3to2" => Ok(Self::RECT),
            other => Err(Error::Precondition(format!(
                "unknown architecture {other:?} (expected square-3x3 or rect-3to2)"
            ))),
        }
    }

    pub fn is_square(&self) -> bool {
        self.vertex_dim == self.edge_dim
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_square() {
            write!(f, "square-{}x{}", self.vertex_dim, self.edge_dim)
        } else {
            write!(f, "rect-{}to{}", self.vertex_dim, self.edge_dim)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    None,
    Cent,
    Theta,
}

impl Regularizer {
    pub const ALL: [Regularizer; 3] = [Regularizer::None, Regularizer::Cent, Regularizer::Theta];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Regularizer::None),
            "cent" => Ok(Regularizer::Cent),
            "theta" => Ok(Regularizer::Theta),
            other => Err(Error::Precondition(format!("unknown regularizer {other:?}"))),
        }
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::None => "none",
            Regularizer::Cent => "cent",
            Regularizer::Theta => "theta",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub architecture: Architecture,
    pub regularizer: Regularizer,
    pub lambda_mu: f64,
    pub lambda_theta: f64,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub step: StepSize,
    /// Maps fixed at the leading-block identity and never trained.
    pub frozen_identity: bool,
    pub seeds: Vec<u64>,
    /// Indices into the bundle's splits.
    pub splits: Vec<usize>,
}

impl ExperimentSpec {
    /// Regularizer weights default to 2e-3 (central) and 1e-4 (θ-shifted).
    pub fn new(architecture: Architecture, regularizer: Regularizer) -> Self {
        ExperimentSpec {
            name: format!("{architecture}/{regularizer}"),
            architecture,
            regularizer,
            lambda_mu: if regularizer == Regularizer::Cent { DEFAULT_LAMBDA_MU } else { 0.0 },
            lambda_theta: if regularizer == Regularizer::Theta { DEFAULT_LAMBDA_THETA } else { 0.0 },
            layers: 4,
            hidden: 8,
            dropout: 0.0,
            step: StepSize::Auto,
            frozen_identity: false,
            seeds: vec![0],
            splits: vec![0],
        }
    }

    /// Square `d = 3` identity maps, frozen, run deep: classical diffusion.
    pub fn identity_baseline(layers: usize) -> Self {
        ExperimentSpec {
            name: format!("identity-frozen/L{layers}"),
            frozen_identity: true,
            layers,
            ..Self::new(Architecture::SQUARE, Regularizer::None)
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            vertex_dim: self.architecture.vertex_dim,
            edge_dim: self.architecture.edge_dim,
            hidden: self.hidden,
            layers: self.layers,
            step: self.step,
            lambda_mu: self.lambda_mu,
            lambda_theta: self.lambda_theta,
            dropout: self.dropout,
            learn_maps: !self.frozen_identity,
            init: if self.frozen_identity { MapInit::Identity } else { MapInit::WarmStart },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if self.seeds.is_empty() || self.splits.is_empty() {
            return Err(Error::Precondition(format!("spec {:?} has no seeds or splits", self.name)));
        }
        Ok(())
    }
}

/// The 2 × 3 grid of architectures and regularizers.
pub fn standard_grid(seeds: &[u64], splits: &[usize]) -> Vec<ExperimentSpec> {
    let mut out = Vec::new();
    for arch in [Architecture::SQUARE, Architecture::RECT] {
        for reg in Regularizer::ALL {
            out.push(ExperimentSpec {
                seeds: seeds.to_vec(),
                splits: splits.to_vec(),
                ..ExperimentSpec::new(arch, reg)
            });
        }
    }
    out
}

/// Square spec whose width is the largest that keeps its parameter count at
/// or below `target`'s on `bundle`. When even width 1 is over budget (map
/// parameters dominate on small, dense graphs) width 1 is used.
pub fn parameter_matched_square(target: &ExperimentSpec, bundle: &DatasetBundle) -> ExperimentSpec {
    let (n, m, f, c) = (
        bundle.graph.num_vertices(),
        bundle.graph.num_edges(),
        bundle.features.ncols(),
        bundle.n_classes,
    );
    let budget = target.model_config().parameter_count(n, m, f, c);
    let mut spec = ExperimentSpec {
        architecture: Architecture::SQUARE,
        regularizer: Regularizer::None,
        lambda_mu: 0.0,
        lambda_theta: 0.0,
        ..target.clone()
    };
    spec.hidden = (1..=target.hidden.max(1))
        .rev()
        .find(|&h| {
            let probe = ExperimentSpec { hidden: h, ..spec.clone() };
            probe.model_config().parameter_count(n, m, f, c) <= budget
        })
        .unwrap_or(1);
    spec.name = format!("square-matched-h{}/none", spec.hidden);
    spec
}

/// Outcome of one (spec, split, seed) cell. Loss fields are `None` when not finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub spec: String,
    pub architecture: String,
    pub regularizer: String,
    pub layers: usize,
    pub split: usize,
    pub seed: u64,
    pub test_acc: f64,
    pub best_val_acc: Option<f64>,
    /// Training loss of the last epoch run.
    pub task: Option<f64>,
    pub cent: Option<f64>,
    pub theta_mm: Option<f64>,
    pub total: Option<f64>,
    /// Penalties of the restored parameters.
    pub r_cent: Option<f64>,
    pub r_theta_mm: Option<f64>,
    /// Dirichlet energy of the diffused features under the restored parameters.
    pub dirichlet_energy: Option<f64>,
    pub halt: String,
    pub epochs: usize,
    pub parameters: usize,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// `x` rounded to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().expect("formatted float parses")
}

impl ResultRecord {
    /// Copy with every float at 6 significant digits (the emitted precision).
    pub fn rounded(&self) -> Self {
        let r = |x: f64| round_sig(x, 6);
        let o = |x: Option<f64>| x.map(r);
        ResultRecord {
            test_acc: r(self.test_acc),
            best_val_acc: o(self.best_val_acc),
            task: o(self.task),
            cent: o(self.cent),
            theta_mm: o(self.theta_mm),
            total: o(self.total),
            r_cent: o(self.r_cent),
            r_theta_mm: o(self.r_theta_mm),
            dirichlet_energy: o(self.dirichlet_energy),
            ..self.clone()
        }
    }

    pub fn is_nonfinite(&self) -> bool {
        self.halt == HaltReason::NonFinite.as_str()
    }
}

/// Trains and evaluates one cell.
pub fn run_cell(
    spec: &ExperimentSpec,
    bundle: &DatasetBundle,
    split: usize,
    seed: u64,
    train_config: &TrainConfig,
) -> Result<ResultRecord> {
    train_cell(spec, bundle, split, seed, train_config).map(|c| c.record)
}

/// A trained cell: its record, the restored model and the training history.
#[derive(Debug, Clone)]
pub struct TrainedCell {
    pub record: ResultRecord,
    pub model: SheafModel,
    pub history: History,
}

/// [`run_cell`], keeping the model and history.
pub fn train_cell(
    spec: &ExperimentSpec,
    bundle: &DatasetBundle,
    split: usize,
    seed: u64,
    train_config: &TrainConfig,
) -> Result<TrainedCell> {
    let s = bundle.split(split)?;
    let cell_seed = derive_seed(seed, split as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
    let mut model = SheafModel::new(
        bundle.graph.clone(),
        bundle.features.ncols(),
        bundle.n_classes,
        spec.model_config(),
        &mut rng,
    )?;
    let tc = TrainConfig {
        seed: derive_seed(cell_seed, 1),
        ..train_config.clone()
    };
    let history = train(&mut model, &bundle.features, &bundle.labels, s, &tc)?;
    let test_acc = evaluate(&model, &bundle.features, &bundle.labels, &s.test)?;
    let last = history.epochs.last();
    let theta = stability::ThetaVector::new(model.theta(), model.sheaf().dims());
    let r_theta_mm = theta.ok().and_then(|t| stability::theta_mm(model.sheaf(), &t).ok());
    let energy = model.diffused_energy(&bundle.features).ok().and_then(finite);
    let record = ResultRecord {
        spec: spec.name.clone(),
        architecture: spec.architecture.to_string(),
        regularizer: spec.regularizer.to_string(),
        layers: spec.layers,
        split,
        seed,
        test_acc,
        best_val_acc: finite(history.best_val_acc),
        task: last.and_then(|r| finite(r.loss.task)),
        cent: last.and_then(|r| finite(r.loss.cent)),
        theta_mm: last.and_then(|r| finite(r.loss.theta_mm)),
        total: last.and_then(|r| finite(r.loss.total)),
        r_cent: finite(stability::cent_mm(model.sheaf())),
        r_theta_mm: r_theta_mm.and_then(finite),
        dirichlet_energy: energy,
        halt: history.halt.as_str().to_string(),
        epochs: history.epochs.len(),
        parameters: model.num_parameters(),
    };
    Ok(TrainedCell { record, model, history })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `"80.00 ± 5.01"` from fractions (printed as percentages).
pub fn pm_percent(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std)
}

/// One row per spec: accuracy aggregated over its splits and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub spec: String,
    pub architecture: String,
    pub regularizer: String,
    pub layers: usize,
    pub runs: usize,
    pub mean_test: f64,
    pub std_test: f64,
    pub mean_val: f64,
    pub std_val: f64,
    pub halt_count: usize,
    /// Human-readable test accuracy in percent, e.g. `"80.00 ± 5.01"`.
    pub test: String,
    pub val: String,
}

fn aggregate(spec: &ExperimentSpec, records: &[&ResultRecord]) -> AggregateRow {
    let tests: Vec<f64> = records.iter().map(|r| r.test_acc).collect();
    let vals: Vec<f64> = records.iter().filter_map(|r| r.best_val_acc).collect();
    let (mt, st) = mean_std(&tests);
    let (mv, sv) = mean_std(&vals);
    AggregateRow {
        spec: spec.name.clone(),
        architecture: spec.architecture.to_string(),
        regularizer: spec.regularizer.to_string(),
        layers: spec.layers,
        runs: records.len(),
        mean_test: round_sig(mt, 6),
        std_test: round_sig(st, 6),
        mean_val: round_sig(mv, 6),
        std_val: round_sig(sv, 6),
        halt_count: records.iter().filter(|r| r.is_nonfinite()).count(),
        test: pm_percent(mt, st),
        val: pm_percent(mv, sv),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub train: TrainConfig,
    /// Append a square control whose width matches the first rectangular spec.
    pub parameter_matched_control: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            train: TrainConfig::default(),
            parameter_matched_control: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutput {
    pub specs: Vec<ExperimentSpec>,
    pub records: Vec<ResultRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl GridOutput {
    /// Markdown table, one row per spec: architecture, regularizer, test, val.
    pub fn table(&self) -> String {
        let mut s = String::from("| Architecture | Regularizer | Test (%) | Val (%) |\n|---|---|---|---|\n");
        for a in &self.aggregates {
            let arch = if a.spec.starts_with("square-matched") || a.spec.starts_with("identity-frozen") {
                a.spec.split('/').next().unwrap_or(&a.spec).to_string()
            } else {
                a.architecture.clone()
            };
            s.push_str(&format!("| {arch} | {} | {} | {} |\n", a.regularizer, a.test, a.val));
        }
        s
    }
}

fn run_cells(specs: &[ExperimentSpec], bundle: &DatasetBundle, tc: &TrainConfig) -> Result<Vec<ResultRecord>> {
    let cells: Vec<(usize, usize, u64)> = specs
        .iter()
        .enumerate()
        .flat_map(|(k, s)| {
            s.splits
                .iter()
                .flat_map(move |&sp| s.seeds.iter().map(move |&seed| (k, sp, seed)))
        })
        .collect();
    cells
        .par_iter()
        .map(|&(k, split, seed)| run_cell(&specs[k], bundle, split, seed, tc))
        .collect()
}

/// Runs every cell of every spec and aggregates per spec.
pub fn run_grid(specs: &[ExperimentSpec], bundle: &DatasetBundle, config: &GridConfig) -> Result<GridOutput> {
    let mut specs = specs.to_vec();
    if config.parameter_matched_control {
        let target = specs
            .iter()
            .find(|s| !s.architecture.is_square())
            .ok_or_else(|| Error::Precondition("parameter-matched control needs a rectangular spec".into()))?;
        specs.push(parameter_matched_square(target, bundle));
    }
    for s in &specs {
        s.validate()?;
    }
    let records = run_cells(&specs, bundle, &config.train)?;
    let aggregates = specs
        .iter()
        .map(|s| {
            let mine: Vec<&ResultRecord> = records.iter().filter(|r| r.spec == s.name).collect();
            aggregate(s, &mine)
        })
        .collect();
    Ok(GridOutput {
        specs,
        records,
        aggregates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub mean_test: f64,
    pub std_test: f64,
    pub halt_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthAblation {
    pub rows: Vec<DepthRow>,
    pub records: Vec<ResultRecord>,
}

impl DepthAblation {
    /// `depth, mean_test, std_test, halt_count`
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(DepthRow {
                mean_test: round_sig(r.mean_test, 6),
                std_test: round_sig(r.std_test, 6),
                ..r.clone()
            })
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

/// Runs `spec` at each depth. Non-finite runs are recorded (halt reason
/// `"nonfinite"`) and the sweep carries on.
pub fn run_depth_ablation(
    spec: &ExperimentSpec,
    bundle: &DatasetBundle,
    depths: &[usize],
    config: &GridConfig,
) -> Result<DepthAblation> {
    if depths.is_empty() || depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("depths must be nonempty and strictly ascending".into()));
    }
    let specs: Vec<ExperimentSpec> = depths
        .iter()
        .map(|&d| ExperimentSpec {
            name: format!("{}@L{d}", spec.name),
            layers: d,
            ..spec.clone()
        })
        .collect();
    for s in &specs {
        s.validate()?;
    }
    let records = run_cells(&specs, bundle, &config.train)?;
    let rows = specs
        .iter()
        .map(|s| {
            let tests: Vec<f64> = records.iter().filter(|r| r.spec == s.name).map(|r| r.test_acc).collect();
            let (mean_test, std_test) = mean_std(&tests);
            DepthRow {
                depth: s.layers,
                mean_test,
                std_test,
                halt_count: records.iter().filter(|r| r.spec == s.name && r.is_nonfinite()).count(),
            }
        })
        .collect();
    Ok(DepthAblation { rows, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::Precondition(format!("unknown format {other:?} (json or csv)"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numeric(format!("csv encoding failed: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordsFile {
    config: serde_json::Value,
    records: Vec<ResultRecord>,
}

/// Serializes records (floats at 6 significant digits). JSON wraps them as
/// `{"config": <echo>, "records": [...]}`; CSV has one row per record with a
/// fixed column order.
pub fn render_records(records: &[ResultRecord], format: OutputFormat, config: &serde_json::Value) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Precondition("no records to emit".into()));
    }
    let rounded: Vec<ResultRecord> = records.iter().map(ResultRecord::rounded).collect();
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(&RecordsFile {
            config: config.clone(),
            records: rounded,
        })?),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rounded {
                w.serialize(r).map_err(csv_err)?;
            }
            finish_csv(w)
        }
    }
}

pub fn emit_results(
    records: &[ResultRecord],
    format: OutputFormat,
    path: &Path,
    config: &serde_json::Value,
) -> Result<()> {
    let text = render_records(records, format, config)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`emit_results`].
pub fn parse_results(text: &str, format: OutputFormat, file: &Path) -> Result<Vec<ResultRecord>> {
    match format {
        OutputFormat::Json => {
            let f: RecordsFile = serde_json::from_str(text).map_err(|e| Error::parse(file, e.line(), e.to_string()))?;
            Ok(f.records)
        }
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let mut out = Vec::new();
            for (k, row) in r.deserialize().enumerate() {
                out.push(row.map_err(|e| Error::parse(file, k + 2, e.to_string()))?);
            }
            Ok(out)
        }
    }
}

/// Aggregate rows as JSON or CSV.
pub fn render_aggregates(rows: &[AggregateRow], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(rows)?),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(csv_err)?;
            }
            finish_csv(w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_two_block;

    fn record() -> ResultRecord {
        ResultRecord {
            spec: "rect-3to2/theta".into(),
            architecture: "rect-3to2".into(),
            regularizer: "theta".into(),
            layers: 4,
            split: 0,
            seed: 3,
            test_acc: 0.916666666666,
            best_val_acc: Some(1.0),
            task: Some(0.123456789),
            cent: Some(12.3456789e-7),
            theta_mm: None,
            total: Some(1.0 / 3.0),
            r_cent: Some(2.0),
            r_theta_mm: Some(3.14159265),
            dirichlet_energy: Some(98765.4321),
            halt: "patience".into(),
            epochs: 321,
            parameters: 1000,
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(round_sig(0.123456789, 6), 0.123457);
        assert_eq!(round_sig(98765.4321, 6), 98765.4);
        assert_eq!(round_sig(-1.0e-9 / 3.0, 6), -3.33333e-10);
    }

    #[test]
    fn pm_format() {
        assert_eq!(pm_percent(0.8, 0.0501), "80.00 ± 5.01");
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }

    #[test]
    fn csv_round_trip() {
        let rec = record();
        let text = render_records(&[rec.clone()], OutputFormat::Csv, &serde_json::Value::Null).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("spec,architecture,regularizer,layers,split,seed,test_acc"));
        let back = parse_results(&text, OutputFormat::Csv, Path::new("r.csv")).unwrap();
        assert_eq!(back, vec![rec.rounded()]);
    }

    #[test]
    fn json_round_trip_with_config_echo() {
        let rec = record();
        let echo = serde_json::json!({"lr": 0.01});
        let text = render_records(&[rec.clone()], OutputFormat::Json, &echo).unwrap();
        assert!(text.contains("\"lr\": 0.01"));
        let back = parse_results(&text, OutputFormat::Json, Path::new("r.json")).unwrap();
        assert_eq!(back, vec![rec.rounded()]);
    }

    #[test]
    fn empty_records_rejected() {
        assert!(render_records(&[], OutputFormat::Csv, &serde_json::Value::Null).is_err());
    }

    #[test]
    fn presets_exist() {
        assert_eq!(Architecture::preset("square-3x3").unwrap(), Architecture::SQUARE);
        assert_eq!(Architecture::preset("rect-3to2").unwrap(), Architecture::RECT);
        assert_eq!(Architecture::RECT.to_string(), "rect-3to2");
        assert_eq!(standard_grid(&[0], &[0]).len(), 6);
    }

    #[test]
    fn matched_control_fits_budget() {
        let shape = crate::data::WebKbShape {
            nodes: 40,
            edges: 60,
            features: 200,
            classes: 3,
        };
        let (b, _) = crate::data::generate_webkb_like(shape, 1).unwrap();
        let rect = ExperimentSpec::new(Architecture::RECT, Regularizer::None);
        let sq = parameter_matched_square(&rect, &b);
        assert!(sq.hidden < rect.hidden);
        let count = |s: &ExperimentSpec| s.model_config().parameter_count(40, 60, 200, 3);
        assert!(count(&sq) <= count(&rect));
        let wider = ExperimentSpec { hidden: sq.hidden + 1, ..sq.clone() };
        assert!(sq.hidden == rect.hidden || count(&wider) > count(&rect));
    }

    #[test]
    fn unsorted_depths_rejected() {
        let (b, _) = generate_two_block(5, 0.5, 0.5, 1).unwrap();
        let spec = ExperimentSpec::new(Architecture::RECT, Regularizer::None);
        let r = run_depth_ablation(&spec, &b, &[4, 2], &GridConfig::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
