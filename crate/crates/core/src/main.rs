//! `quiver-sheaf`: property suites, diffusion, moment maps, training and
//! experiment runners on the command line.
//!
//! Exit codes: 0 success, 2 parse error, 3 numeric error, 4 property-suite
//! failure, 1 anything else.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use quiver_sheaf::data::{
    generate_two_block_with_noise, generate_webkb_like, load_dataset, GraphFormat, WebKbShape, TWO_BLOCK_NOISE,
};
use quiver_sheaf::diffusion::{euler_diffuse, oversmoothing_probe, SpectralDiffuser, StepSize};
use quiver_sheaf::experiments::{
    render_aggregates, render_records, run_depth_ablation, run_grid, standard_grid, train_cell, Architecture,
    ExperimentSpec, GridConfig, OutputFormat, Regularizer,
};
use quiver_sheaf::harmonic::kernel_basis;
use quiver_sheaf::model::TrainConfig;
use quiver_sheaf::sheaf::row_major;
use quiver_sheaf::stability::{cent_mm_of, moment_map, project_theta, stability_wall_diagnostic, theta_mm, trivial_weight};
use quiver_sheaf::verify::{run_all, run_suite, PropertyReport, SUITES};
use quiver_sheaf::{CellularSheaf, Error, Result};

#[derive(Parser)]
#[command(name = "quiver-sheaf", version, about = "Cellular sheaf diffusion as incidence-quiver representations")]
struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (directory for gen-synth). Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run property suites; exit 4 when any fails.
    Verify {
        /// Suites to run (default: all).
        #[arg(long = "suite", value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
        suites: Vec<String>,
    },
    /// Diffuse a signal on a sheaf and report energies.
    Diffuse(DiffuseArgs),
    /// Moment map, regularizer values and the stability-wall diagnostic of a sheaf.
    Moment {
        /// Sheaf JSON file.
        sheaf: PathBuf,
        /// Unprojected per-object θ values, comma separated (default: zeros).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
    },
    /// Train one model on one split.
    Train(TrainArgs),
    /// Architecture × regularizer grid.
    Grid(GridArgs),
    /// Sweep the layer count of one spec.
    AblateDepth(AblateArgs),
    /// Write a synthetic dataset directory.
    GenSynth(GenArgs),
    /// Counts and homophily of a dataset directory.
    InspectDataset {
        dir: PathBuf,
    },
}

#[derive(Args)]
struct DiffuseArgs {
    /// Sheaf JSON file.
    sheaf: PathBuf,
    /// Signal CSV (N₀ rows, one column per channel, no header). Random when absent.
    #[arg(long)]
    signal: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Euler)]
    mode: Mode,
    /// Diffusion time (spectral mode).
    #[arg(long, default_value_t = 1.0)]
    time: f64,
    /// Step count (euler mode).
    #[arg(long, default_value_t = 16)]
    layers: usize,
    /// auto, scaled:<f> or fixed:<a> (euler mode).
    #[arg(long, default_value = "auto")]
    step: StepSize,
    /// Also report the diffusion limit and its distance to constants (first channel).
    #[arg(long)]
    probe: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Euler,
    Spectral,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "rect-3to2")]
    arch: String,
    /// none, cent or theta.
    #[arg(long = "reg", default_value = "theta")]
    regularizer: String,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long)]
    lambda_mu: Option<f64>,
    #[arg(long)]
    lambda_theta: Option<f64>,
    #[arg(long, default_value = "auto")]
    step: StepSize,
    /// Identity maps, never trained (square 3x3).
    #[arg(long)]
    frozen_identity: bool,
}

impl ModelArgs {
    fn spec(&self) -> Result<ExperimentSpec> {
        let base = if self.frozen_identity {
            ExperimentSpec::identity_baseline(self.layers)
        } else {
            ExperimentSpec::new(Architecture::preset(&self.arch)?, Regularizer::parse(&self.regularizer)?)
        };
        let spec = ExperimentSpec {
            layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
            lambda_mu: self.lambda_mu.unwrap_or(base.lambda_mu),
            lambda_theta: self.lambda_theta.unwrap_or(base.lambda_theta),
            step: self.step,
            ..base
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Clone)]
struct TrainingArgs {
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 5e-3)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1500)]
    epochs: usize,
    /// Epochs without validation improvement before stopping (default: min(200, epochs)).
    #[arg(long)]
    patience: Option<usize>,
}

impl TrainingArgs {
    fn config(&self) -> Result<TrainConfig> {
        let tc = TrainConfig {
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            max_epochs: self.epochs,
            patience: self.patience.unwrap_or(TrainConfig::default().patience.min(self.epochs)),
            ..TrainConfig::default()
        };
        tc.validate()?;
        Ok(tc)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory.
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    split: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    training: TrainingArgs,
    /// Write the restored model checkpoint here.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Write the per-epoch history CSV here.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    data: PathBuf,
    /// Seeds per cell (default: the global seed).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Split indices.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    splits: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    /// Add a square spec with about the rectangular parameter count.
    #[arg(long)]
    matched_control: bool,
    /// Also write the aggregate table (markdown) here.
    #[arg(long)]
    table: Option<PathBuf>,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args)]
struct AblateArgs {
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    depths: Vec<usize>,
    /// Seeds per cell (default: the global seed).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    splits: Vec<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    TwoBlock,
    Webkb,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFile {
    Json,
    Tsv,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 30)]
    n_per_block: usize,
    #[arg(long, default_value_t = 0.1)]
    p_intra: f64,
    #[arg(long, default_value_t = 0.3)]
    p_inter: f64,
    #[arg(long, default_value_t = TWO_BLOCK_NOISE)]
    noise: f64,
    /// WebKB-like counts (defaults: Texas).
    #[arg(long, default_value_t = WebKbShape::TEXAS.nodes)]
    nodes: usize,
    #[arg(long, default_value_t = WebKbShape::TEXAS.edges)]
    edges: usize,
    #[arg(long, default_value_t = WebKbShape::TEXAS.features)]
    features: usize,
    #[arg(long, default_value_t = WebKbShape::TEXAS.classes)]
    classes: usize,
    #[arg(long, value_enum, default_value_t = GraphFile::Tsv)]
    graph_format: GraphFile,
    /// Omit splits.json (loaders then draw splits from seed 0).
    #[arg(long)]
    no_splits: bool,
}

/// Where results go: a file when `--out` is set, stdout otherwise.
fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            // A closed pipe is not an error worth reporting.
            let _ = stdout.write_all(text.as_bytes());
            let _ = stdout.write_all(b"\n");
            Ok(())
        }
    }
}

fn read_signal(path: &Path, rows: usize) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, k + 1, e.to_string()))?;
        let row = rec
            .iter()
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::parse(path, k + 1, format!("{t:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = data.first() {
            if row.len() != first.len() {
                return Err(Error::parse(path, k + 1, "ragged row"));
            }
        }
        data.push(row);
    }
    if data.len() != rows {
        return Err(Error::parse(path, data.len(), format!("signal has {} rows, sheaf has N₀ = {rows}", data.len())));
    }
    let cols = data.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows, cols, |r, c| data[r][c]))
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    json!({"rows": m.nrows(), "cols": m.ncols(), "data": row_major(m)})
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn cmd_verify(seed: u64, suites: &[String], out: Option<&Path>) -> Result<bool> {
    let reports: Vec<PropertyReport> = if suites.is_empty() {
        run_all(seed)
    } else {
        suites.iter().map(|s| run_suite(s, seed)).collect::<Result<_>>()?
    };
    for r in &reports {
        eprintln!(
            "{} {:<22} instances {:>6}  failures {:>3}  max residual {:.3e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.property,
            r.instances,
            r.failures.len(),
            r.max_residual
        );
    }
    write_output(out, &serde_json::to_string_pretty(&reports)?)?;
    Ok(reports.iter().all(PropertyReport::passed))
}

fn cmd_diffuse(cli: &Cli, a: &DiffuseArgs) -> Result<()> {
    let sheaf = CellularSheaf::load(&a.sheaf)?;
    let n0 = sheaf.dims().total_vertex();
    let x0 = match &a.signal {
        Some(p) => read_signal(p, n0)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            DMatrix::from_fn(n0, 1, |_, _| StandardNormal.sample(&mut rng))
        }
    };
    let (final_state, trace, extra) = match a.mode {
        Mode::Euler => {
            let r = euler_diffuse(&sheaf, &x0, a.step, a.layers, true)?;
            let extra = json!({
                "mode": "euler",
                "layers": a.layers,
                "step_size": r.step_size,
                "lambda_max": r.lambda_max,
                "stable_step": r.stable_step,
                "converged": r.converged,
                "nonfinite_at": r.nonfinite_at,
            });
            (r.final_state, r.energy_trace, extra)
        }
        Mode::Spectral => {
            let sd = SpectralDiffuser::new(&sheaf)?;
            let h = kernel_basis(&sheaf)?.dim();
            let out = sd.diffuse(&x0, a.time)?;
            let trace = vec![(0, sheaf.dirichlet_energy_multi(&x0)?), (1, sheaf.dirichlet_energy_multi(&out)?)];
            let extra = json!({
                "mode": "spectral",
                "time": a.time,
                "lambda_max": sd.lambda_max(),
                "h": h,
                "spectral_gap": sd.smallest_positive(h),
            });
            (out, trace, extra)
        }
    };
    match cli.format {
        Format::Csv => {
            let mut s = String::from("step,energy\n");
            for (k, e) in &trace {
                s.push_str(&format!("{k},{e}\n"));
            }
            write_output(cli.out.as_deref(), s.trim_end())
        }
        Format::Json => {
            let mut report = extra;
            report["energy_trace"] = json!(trace.iter().map(|&(k, e)| json!([k, finite_or_null(e)])).collect::<Vec<_>>());
            report["final_state"] = json!(final_state.iter().map(|&x| finite_or_null(x)).collect::<Vec<_>>());
            report["final_shape"] = json!([final_state.nrows(), final_state.ncols()]);
            if a.probe {
                let p = oversmoothing_probe(&sheaf, &x0.column(0).into_owned())?;
                report["probe"] = json!({
                    "h": p.h,
                    "sections_vanish": p.sections_vanish,
                    "trivial_line_dim": p.trivial_line_dim,
                    "residual_to_constant": p.residual_to_constant,
                    "residual_to_trivial_lines": p.residual_to_trivial_lines,
                    "limit": p.limit.as_slice(),
                });
            }
            write_output(cli.out.as_deref(), &serde_json::to_string_pretty(&report)?)
        }
    }
}

fn cmd_moment(cli: &Cli, sheaf_path: &Path, theta: Option<&[f64]>) -> Result<()> {
    let sheaf = CellularSheaf::load(sheaf_path)?;
    let dims = sheaf.dims();
    let mu = moment_map(&sheaf);
    let raw = theta.map_or_else(|| vec![0.0; dims.num_objects()], <[f64]>::to_vec);
    let theta = project_theta(&raw, dims)?;
    let r_theta = theta_mm(&sheaf, &theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let wall = stability_wall_diagnostic(dims, &mut rng)?;
    let n = sheaf.graph().num_vertices();
    let traces = mu.traces();
    let objects: Vec<(String, usize, &DMatrix<f64>)> = mu
        .vertex
        .iter()
        .enumerate()
        .map(|(v, m)| (format!("v{v}"), dims.vertex_dim(v), m))
        .chain(mu.edge.iter().enumerate().map(|(e, m)| (format!("e{e}"), dims.edge_dim(e), m)))
        .collect();
    let defect = |d: usize, m: &DMatrix<f64>| (m - DMatrix::identity(d, d) * (m.trace() / d as f64)).norm();
    match cli.format {
        Format::Csv => {
            let mut s = String::from("object,dim,trace,central_defect,theta\n");
            for (k, (name, d, m)) in objects.iter().enumerate() {
                s.push_str(&format!("{name},{d},{},{},{}\n", traces[k], defect(*d, m), theta.values()[k]));
            }
            write_output(cli.out.as_deref(), s.trim_end())
        }
        Format::Json => {
            let report = json!({
                "vertices": n,
                "edges": sheaf.graph().num_edges(),
                "moment_map": objects.iter().map(|(name, d, m)| json!({
                    "object": name,
                    "dim": d,
                    "value": matrix_json(m),
                    "central_defect": defect(*d, m),
                })).collect::<Vec<_>>(),
                "trace_sum": traces.iter().sum::<f64>(),
                "cent_mm": cent_mm_of(&mu),
                "theta": theta.values(),
                "theta_mm": r_theta,
                "trivial_weight": trivial_weight(&theta),
                "wall": {
                    "uniform": wall.uniform,
                    "forced_trivial_weight_zero": wall.forced_trivial_weight_zero,
                    "max_abs_trivial_weight": wall.max_abs_trivial_weight,
                    "draws": wall.draws,
                    "escape_theta": wall.escape_theta.as_ref().map(|t| t.values().to_vec()),
                    "escape_weight": wall.escape_weight,
                },
            });
            write_output(cli.out.as_deref(), &serde_json::to_string_pretty(&report)?)
        }
    }
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let bundle = load_dataset(&a.data)?;
    let spec = a.model.spec()?;
    let tc = a.training.config()?;
    let cell = train_cell(&spec, &bundle, a.split, cli.seed, &tc)?;
    if let Some(p) = &a.save_model {
        cell.model.save(p)?;
    }
    if let Some(p) = &a.history {
        cell.history.write_csv(p)?;
    }
    eprintln!(
        "test accuracy {:.4} (halt {}, {} epochs, best epoch {:?})",
        cell.record.test_acc,
        cell.record.halt,
        cell.record.epochs,
        cell.history.best_epoch
    );
    let echo = json!({"data": a.data, "spec": spec, "train": tc, "split": a.split, "seed": cli.seed});
    write_output(cli.out.as_deref(), &render_records(&[cell.record], cli.format.into(), &echo)?)
}

fn cmd_grid(cli: &Cli, a: &GridArgs) -> Result<()> {
    let bundle = load_dataset(&a.data)?;
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![cli.seed]);
    let specs: Vec<ExperimentSpec> = standard_grid(&seeds, &a.splits)
        .into_iter()
        .map(|s| ExperimentSpec { layers: a.layers, hidden: a.hidden, ..s })
        .collect();
    let config = GridConfig {
        train: a.training.config()?,
        parameter_matched_control: a.matched_control,
    };
    let out = run_grid(&specs, &bundle, &config)?;
    let table = out.table();
    eprint!("{table}");
    if let Some(p) = &a.table {
        std::fs::write(p, &table).map_err(|e| Error::io(p, e))?;
    }
    let echo = json!({"data": a.data, "specs": out.specs, "grid": config, "aggregates": out.aggregates});
    match (cli.format, cli.out.as_deref()) {
        (Format::Csv, Some(p)) => {
            // Records go to the requested file, aggregates next to it.
            write_output(Some(p), &render_records(&out.records, OutputFormat::Csv, &echo)?)?;
            let agg = p.with_extension("aggregates.csv");
            write_output(Some(&agg), &render_aggregates(&out.aggregates, OutputFormat::Csv)?)
        }
        (format, out_path) => write_output(out_path, &render_records(&out.records, format.into(), &echo)?),
    }
}

fn cmd_ablate(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let bundle = load_dataset(&a.data)?;
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![cli.seed]);
    let spec = ExperimentSpec {
        seeds,
        splits: a.splits.clone(),
        ..a.model.spec()?
    };
    let config = GridConfig {
        train: a.training.config()?,
        parameter_matched_control: false,
    };
    let result = run_depth_ablation(&spec, &bundle, &a.depths, &config)?;
    for r in &result.rows {
        eprintln!("L = {:>4}: test {:.4} ± {:.4}, non-finite halts {}", r.depth, r.mean_test, r.std_test, r.halt_count);
    }
    let text = match cli.format {
        Format::Csv => result.to_csv()?,
        Format::Json => serde_json::to_string_pretty(&json!({
            "config": {"data": a.data, "spec": spec, "depths": a.depths, "train": config.train},
            "rows": result.rows,
            "records": result.records.iter().map(|r| r.rounded()).collect::<Vec<_>>(),
        }))?,
    };
    write_output(cli.out.as_deref(), text.trim_end())
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let dir = cli
        .out
        .as_deref()
        .ok_or_else(|| Error::Precondition("gen-synth needs --out <directory>".into()))?;
    let (bundle, manifest) = match a.kind {
        SynthKind::TwoBlock => generate_two_block_with_noise(a.n_per_block, a.p_intra, a.p_inter, a.noise, cli.seed)?,
        SynthKind::Webkb => generate_webkb_like(
            WebKbShape {
                nodes: a.nodes,
                edges: a.edges,
                features: a.features,
                classes: a.classes,
            },
            cli.seed,
        )?,
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let format = match a.graph_format {
        GraphFile::Json => GraphFormat::Json,
        GraphFile::Tsv => GraphFormat::Tsv,
    };
    bundle.write_dir(dir, format, !a.no_splits)?;
    manifest.write(dir)?;
    eprintln!(
        "wrote {} ({} nodes, {} edges, {} features, {} classes) to {}",
        manifest.name,
        manifest.nodes,
        manifest.edges,
        manifest.features,
        manifest.classes,
        dir.display()
    );
    Ok(())
}

fn cmd_inspect(cli: &Cli, dir: &Path) -> Result<()> {
    let summary = load_dataset(dir)?.summary();
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(&summary)?,
        Format::Csv => format!(
            "nodes,edges,features,classes,edge_homophily,splits\n{},{},{},{},{},{}",
            summary.nodes,
            summary.edges,
            summary.features,
            summary.classes,
            summary.edge_homophily.map_or(String::new(), |h| h.to_string()),
            summary.splits
        ),
    };
    write_output(cli.out.as_deref(), &text)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Verify { suites } => return cmd_verify(cli.seed, suites, cli.out.as_deref()),
        Command::Diffuse(a) => cmd_diffuse(cli, a)?,
        Command::Moment { sheaf, theta } => cmd_moment(cli, sheaf, theta.as_deref())?,
        Command::Train(a) => cmd_train(cli, a)?,
        Command::Grid(a) => cmd_grid(cli, a)?,
        Command::AblateDepth(a) => cmd_ablate(cli, a)?,
        Command::GenSynth(a) => cmd_gen(cli, a)?,
        Command::InspectDataset { dir } => cmd_inspect(cli, dir)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
