//! Trainable sheaf-diffusion node classifier.
//!
//! Layer form: node features are encoded into vertex stalks
//! (`Z = F W_enc + b_enc`, reshaped to an `N₀ × h` signal), pushed through
//! `L` explicit diffusion steps `X ← X − αΔ_F X`, flattened back to one row
//! per node and read out linearly. The restriction maps of `Δ_F` are free
//! parameters, one matrix per incidence. Gradients are derived by hand and
//! checked against central finite differences in the tests.

mod checkpoint;
mod train;

pub use checkpoint::ModelCheckpoint;
pub use train::{evaluate, predict, train, Adam, EpochRecord, HaltReason, History, TrainConfig};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::diffusion::StepSize;
use crate::error::{Error, Result};
use crate::linalg;
use crate::quiver::{DimensionVector, Graph};
use crate::sheaf::CellularSheaf;
use crate::stability::{self, moment_map, project_theta, MomentMapValue};

/// How restriction maps start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapInit {
    /// Gaussian entries with standard deviation `1/√(d_v d_e)` plus half the
    /// identity on the leading `min(d_e, d_v)` block.
    WarmStart,
    /// Exactly the leading-block identity `[I 0]`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vertex_dim: usize,
    pub edge_dim: usize,
    /// Channels per stalk coordinate.
    pub hidden: usize,
    pub layers: usize,
    pub step: StepSize,
    /// Weight of the central moment penalty.
    pub lambda_mu: f64,
    /// Weight of the θ-shifted moment penalty.
    pub lambda_theta: f64,
    /// Dropout probability on the encoder output during training.
    pub dropout: f64,
    /// When false the restriction maps stay at their initial values.
    pub learn_maps: bool,
    pub init: MapInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vertex_dim: 3,
            edge_dim: 3,
            hidden: 20,
            layers: 4,
            step: StepSize::Auto,
            lambda_mu: 0.0,
            lambda_theta: 0.0,
            dropout: 0.0,
            learn_maps: true,
            init: MapInit::WarmStart,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vertex_dim == 0 || self.edge_dim == 0 || self.hidden == 0 {
            return Err(Error::Structural("stalk dimensions and width must be positive".into()));
        }
        if !(self.lambda_mu >= 0.0 && self.lambda_theta >= 0.0) {
            return Err(Error::Precondition("regularizer weights must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Precondition("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learnable scalar count of a model built from this config; agrees with
    /// [`SheafModel::num_parameters`].
    pub fn parameter_count(&self, n_vertices: usize, n_edges: usize, n_features: usize, n_classes: usize) -> usize {
        let width = self.vertex_dim * self.hidden;
        let maps = if self.learn_maps { 2 * n_edges * self.vertex_dim * self.edge_dim } else { 0 };
        let theta = if self.lambda_theta > 0.0 { n_vertices + n_edges } else { 0 };
        maps + theta + (n_features + 1) * width + (width + 1) * n_classes
    }
}

/// Task loss, penalties and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task: f64,
    pub cent: f64,
    pub theta_mm: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.task.is_finite() && self.cent.is_finite() && self.theta_mm.is_finite() && self.total.is_finite()
    }
}

/// Parameter blocks, in the order used by [`SheafModel::parameters_mut`] and
/// [`Gradients::slices`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Map(usize),
    Theta,
    Encoder,
    EncoderBias,
    Readout,
    ReadoutBias,
}

/// Gradient of the total loss with respect to every parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub maps: Vec<DMatrix<f64>>,
    pub raw_theta: Vec<f64>,
    pub encoder: DMatrix<f64>,
    pub encoder_bias: DVector<f64>,
    pub readout: DMatrix<f64>,
    pub readout_bias: DVector<f64>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<(ParamGroup, &[f64])> {
        let mut out: Vec<(ParamGroup, &[f64])> = self
            .maps
            .iter()
            .enumerate()
            .map(|(i, m)| (ParamGroup::Map(i), m.as_slice()))
            .collect();
        out.push((ParamGroup::Theta, &self.raw_theta));
        out.push((ParamGroup::Encoder, self.encoder.as_slice()));
        out.push((ParamGroup::EncoderBias, self.encoder_bias.as_slice()));
        out.push((ParamGroup::Readout, self.readout.as_slice()));
        out.push((ParamGroup::ReadoutBias, self.readout_bias.as_slice()));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|(_, s)| s.iter().all(|x| x.is_finite()))
    }
}

/// Intermediate values of one forward pass.
struct Trace {
    /// `X_0 … X_L`, each `N₀ × h`.
    states: Vec<DMatrix<f64>>,
    /// `n × C`
    scores: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SheafModel {
    sheaf: CellularSheaf,
    raw_theta: Vec<f64>,
    encoder: DMatrix<f64>,
    encoder_bias: DVector<f64>,
    readout: DMatrix<f64>,
    readout_bias: DVector<f64>,
    config: ModelConfig,
    n_classes: usize,
    alpha: f64,
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(dist))
}

fn leading_identity(rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |r, c| if r == c { 1.0 } else { 0.0 })
}

impl SheafModel {
    /// Initializes every parameter from `rng`. The sheaf uses uniform stalks
    /// `config.vertex_dim` / `config.edge_dim` on `graph`.
    pub fn new<R: Rng + ?Sized>(
        graph: Graph,
        n_features: usize,
        n_classes: usize,
        config: ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if n_features == 0 || n_classes == 0 {
            return Err(Error::Structural("need at least one feature and one class".into()));
        }
        let (dv, de, h) = (config.vertex_dim, config.edge_dim, config.hidden);
        let dims = DimensionVector::uniform(&graph, dv, de)?;
        let std = 1.0 / ((dv * de) as f64).sqrt();
        let init = config.init;
        let sheaf = CellularSheaf::from_fn(graph, dims, |_, _, _| match init {
            MapInit::Identity => leading_identity(de, dv),
            MapInit::WarmStart => {
                leading_identity(de, dv) * 0.5
                    + DMatrix::from_fn(de, dv, |_, _| std * rng.sample::<f64, _>(StandardNormal))
            }
        })?;
        let n_objects = sheaf.dims().num_objects();
        let mut model = SheafModel {
            raw_theta: vec![0.0; n_objects],
            encoder: glorot(n_features, dv * h, rng),
            encoder_bias: DVector::zeros(dv * h),
            readout: glorot(dv * h, n_classes, rng),
            readout_bias: DVector::zeros(n_classes),
            sheaf,
            config,
            n_classes,
            alpha: 0.0,
        };
        model.refresh_step()?;
        Ok(model)
    }

    /// Assembles a model from explicit parameters (checkpoints, tests).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        sheaf: CellularSheaf,
        raw_theta: Vec<f64>,
        encoder: DMatrix<f64>,
        encoder_bias: DVector<f64>,
        readout: DMatrix<f64>,
        readout_bias: DVector<f64>,
        config: ModelConfig,
    ) -> Result<Self> {
        config.validate()?;
        let (dv, h) = (config.vertex_dim, config.hidden);
        let dims = sheaf.dims();
        if dims.uniform_vertex_dim() != Some(dv) || dims.edge_dims().iter().any(|&d| d != config.edge_dim) {
            return Err(Error::Structural("sheaf stalks do not match the model config".into()));
        }
        if raw_theta.len() != dims.num_objects() {
            return Err(Error::Structural("raw θ length does not match the quiver".into()));
        }
        if encoder.ncols() != dv * h || encoder_bias.len() != dv * h || readout.nrows() != dv * h {
            return Err(Error::Structural("encoder/readout shapes do not match d_v·hidden".into()));
        }
        if readout_bias.len() != readout.ncols() {
            return Err(Error::Structural("readout bias length does not match class count".into()));
        }
        let n_classes = readout.ncols();
        let mut model = SheafModel {
            sheaf,
            raw_theta,
            encoder,
            encoder_bias,
            readout,
            readout_bias,
            config,
            n_classes,
            alpha: 0.0,
        };
        model.refresh_step()?;
        Ok(model)
    }

    pub fn sheaf(&self) -> &CellularSheaf {
        &self.sheaf
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.encoder.nrows()
    }

    pub fn raw_theta(&self) -> &[f64] {
        &self.raw_theta
    }

    /// The admissible θ entering the loss.
    pub fn theta(&self) -> Vec<f64> {
        project_theta(&self.raw_theta, self.sheaf.dims())
            .expect("raw θ length is an invariant")
            .values()
            .to_vec()
    }

    pub fn encoder(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.encoder, &self.encoder_bias)
    }

    pub fn readout(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.readout, &self.readout_bias)
    }

    /// Current explicit step size.
    pub fn step_size(&self) -> f64 {
        self.alpha
    }

    /// Recomputes α from `λ_max(Δ_F)` under the configured policy.
    pub fn refresh_step(&mut self) -> Result<f64> {
        let lambda = match self.config.step {
            StepSize::Fixed(a) => {
                self.alpha = a;
                return Ok(a);
            }
            _ => linalg::lambda_max(&self.sheaf.laplacian())?,
        };
        self.alpha = self.config.step.resolve(lambda);
        Ok(self.alpha)
    }

    /// Number of learnable scalars (frozen maps and an unused θ excluded).
    pub fn num_parameters(&self) -> usize {
        let maps: usize = self.sheaf.maps().iter().map(|m| m.len()).sum();
        let theta = if self.config.lambda_theta > 0.0 { self.raw_theta.len() } else { 0 };
        (if self.config.learn_maps { maps } else { 0 })
            + theta
            + self.encoder.len()
            + self.encoder_bias.len()
            + self.readout.len()
            + self.readout_bias.len()
    }

    /// Mutable views of all parameters, in [`ParamGroup`] order.
    pub fn parameters_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out: Vec<(ParamGroup, &mut [f64])> = self
            .sheaf
            .maps_mut()
            .iter_mut()
            .enumerate()
            .map(|(i, m)| (ParamGroup::Map(i), m.as_mut_slice()))
            .collect();
        out.push((ParamGroup::Theta, self.raw_theta.as_mut_slice()));
        out.push((ParamGroup::Encoder, self.encoder.as_mut_slice()));
        out.push((ParamGroup::EncoderBias, self.encoder_bias.as_mut_slice()));
        out.push((ParamGroup::Readout, self.readout.as_mut_slice()));
        out.push((ParamGroup::ReadoutBias, self.readout_bias.as_mut_slice()));
        out
    }

    fn check_inputs(&self, features: &DMatrix<f64>) -> Result<()> {
        let n = self.sheaf.graph().num_vertices();
        if features.nrows() != n {
            return Err(Error::Structural(format!(
                "feature matrix has {} rows, graph has {n} vertices",
                features.nrows()
            )));
        }
        if features.ncols() != self.n_features() {
            return Err(Error::Structural(format!(
                "feature matrix has {} columns, model expects {}",
                features.ncols(),
                self.n_features()
            )));
        }
        Ok(())
    }

    fn check_labels(&self, labels: &[usize], mask: &[usize]) -> Result<()> {
        if mask.is_empty() {
            return Err(Error::Precondition("node mask is empty".into()));
        }
        for &i in mask {
            let y = *labels
                .get(i)
                .ok_or_else(|| Error::Structural(format!("mask index {i} has no label")))?;
            if y >= self.n_classes {
                return Err(Error::Structural(format!("label {y} at node {i} is out of range")));
            }
        }
        Ok(())
    }

    /// `n × d·h` rows → `N₀ × h` stalk signal.
    fn to_stalks(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let (d, h) = (self.config.vertex_dim, self.config.hidden);
        DMatrix::from_fn(z.nrows() * d, h, |r, c| z[(r / d, (r % d) * h + c)])
    }

    fn from_stalks(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (d, h) = (self.config.vertex_dim, self.config.hidden);
        DMatrix::from_fn(x.nrows() / d, d * h, |v, k| x[(v * d + k / h, k % h)])
    }

    fn run_forward(&self, features: &DMatrix<f64>, dropout: Option<&DMatrix<f64>>) -> Trace {
        let mut encoded = features * &self.encoder;
        for mut row in encoded.row_iter_mut() {
            row += self.encoder_bias.transpose();
        }
        if let Some(mask) = dropout {
            encoded.component_mul_assign(mask);
        }
        let mut states = Vec::with_capacity(self.config.layers + 1);
        states.push(self.to_stalks(&encoded));
        for l in 0..self.config.layers {
            let x = &states[l];
            let next = x - self.sheaf.apply_laplacian(x) * self.alpha;
            states.push(next);
        }
        let mut scores = self.from_stalks(states.last().expect("X_0 exists")) * &self.readout;
        for mut row in scores.row_iter_mut() {
            row += self.readout_bias.transpose();
        }
        Trace { states, scores }
    }

    /// Class scores for every node (no dropout).
    pub fn scores(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_inputs(features)?;
        Ok(self.run_forward(features, None).scores)
    }

    /// Class scores for the nodes in `mask`, in mask order.
    pub fn forward(&self, features: &DMatrix<f64>, mask: &[usize]) -> Result<DMatrix<f64>> {
        let all = self.scores(features)?;
        let n = all.nrows();
        if let Some(&bad) = mask.iter().find(|&&i| i >= n) {
            return Err(Error::Structural(format!("mask index {bad} out of range")));
        }
        Ok(all.select_rows(mask))
    }

    /// Diffused vertex signal `X_L` (`N₀ × h`).
    pub fn diffused(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_inputs(features)?;
        let mut states = self.run_forward(features, None).states;
        Ok(states.pop().expect("X_0 exists"))
    }

    /// Dirichlet energy of the diffused features.
    pub fn diffused_energy(&self, features: &DMatrix<f64>) -> Result<f64> {
        let x = self.diffused(features)?;
        Ok(linalg::frobenius_sq(&self.sheaf.apply_coboundary(&x)))
    }

    fn penalties(&self) -> (MomentMapValue, f64, f64, Vec<f64>) {
        let mu = moment_map(&self.sheaf);
        let theta = self.theta();
        let cent = stability::cent_mm_of(&mu);
        let tmm = stability::theta_mm_of(&mu, &theta);
        (mu, cent, tmm, theta)
    }

    fn breakdown(&self, task: f64, cent: f64, theta_mm: f64) -> LossBreakdown {
        LossBreakdown {
            task,
            cent,
            theta_mm,
            total: task + self.config.lambda_mu * cent + self.config.lambda_theta * theta_mm,
        }
    }

    /// Mean softmax cross-entropy over `mask` and `∂/∂scores` (nonzero on the mask only).
    fn cross_entropy(scores: &DMatrix<f64>, labels: &[usize], mask: &[usize]) -> (f64, DMatrix<f64>) {
        let m = mask.len() as f64;
        let mut grad = DMatrix::zeros(scores.nrows(), scores.ncols());
        let mut total = 0.0;
        for &i in mask {
            let row = scores.row(i);
            let top = row.max();
            let sum: f64 = row.iter().map(|s| (s - top).exp()).sum();
            let lse = top + sum.ln();
            total += lse - row[labels[i]];
            for c in 0..scores.ncols() {
                grad[(i, c)] = (row[c] - lse).exp() / m;
            }
            grad[(i, labels[i])] -= 1.0 / m;
        }
        (total / m, grad)
    }

    /// Loss on `mask` without dropout.
    pub fn loss(&self, features: &DMatrix<f64>, labels: &[usize], mask: &[usize]) -> Result<LossBreakdown> {
        self.check_inputs(features)?;
        self.check_labels(labels, mask)?;
        let trace = self.run_forward(features, None);
        let (task, _) = Self::cross_entropy(&trace.scores, labels, mask);
        let (_, cent, tmm, _) = self.penalties();
        Ok(self.breakdown(task, cent, tmm))
    }

    /// Loss and gradient of the total loss without dropout.
    pub fn backward(
        &self,
        features: &DMatrix<f64>,
        labels: &[usize],
        mask: &[usize],
    ) -> Result<(LossBreakdown, Gradients)> {
        let (loss, grads) = self.loss_and_grad(features, labels, mask, None)?;
        grads.map(|g| (loss, g)).ok_or_else(|| {
            Error::Numeric(format!(
                "forward pass is not finite (task {}, cent {}, θ-penalty {}); gradient refused",
                loss.task, loss.cent, loss.theta_mm
            ))
        })
    }

    /// Loss and, when the loss is finite, its gradient. `dropout` multiplies
    /// the encoder output elementwise.
    pub(crate) fn loss_and_grad(
        &self,
        features: &DMatrix<f64>,
        labels: &[usize],
        mask: &[usize],
        dropout: Option<&DMatrix<f64>>,
    ) -> Result<(LossBreakdown, Option<Gradients>)> {
        self.check_inputs(features)?;
        self.check_labels(labels, mask)?;
        let trace = self.run_forward(features, dropout);
        let (task, g_scores) = Self::cross_entropy(&trace.scores, labels, mask);
        let (mu, cent, tmm, theta) = self.penalties();
        let loss = self.breakdown(task, cent, tmm);
        if !loss.is_finite() {
            return Ok((loss, None));
        }

        // Readout.
        let z_last = self.from_stalks(trace.states.last().expect("X_0 exists"));
        let readout = z_last.tr_mul(&g_scores);
        let readout_bias = g_scores.row_sum().transpose();
        let mut g_x = self.to_stalks(&(&g_scores * self.readout.transpose()));

        // Diffusion layers, last to first. Δ is symmetric, so the state
        // gradient follows the same update; the maps collect
        // −α ∂/∂A ⟨δG_{l+1}, δX_l⟩.
        let mut maps: Vec<DMatrix<f64>> = self
            .sheaf
            .maps()
            .iter()
            .map(|a| DMatrix::zeros(a.nrows(), a.ncols()))
            .collect();
        let alpha = self.alpha;
        let dims = self.sheaf.dims();
        for l in (0..self.config.layers).rev() {
            let x = &trace.states[l];
            if self.config.learn_maps {
                let dx = self.sheaf.apply_coboundary(x);
                let dg = self.sheaf.apply_coboundary(&g_x);
                for (e, &(u, v)) in self.sheaf.graph().edges().iter().enumerate() {
                    let (ro, rd) = (dims.edge_offset(e), dims.edge_dim(e));
                    let dx_e = dx.rows(ro, rd);
                    let dg_e = dg.rows(ro, rd);
                    for (inc, w, sign) in [(2 * e, u, alpha), (2 * e + 1, v, -alpha)] {
                        let (co, cd) = (dims.vertex_offset(w), dims.vertex_dim(w));
                        let term = dg_e * x.rows(co, cd).transpose() + dx_e * g_x.rows(co, cd).transpose();
                        maps[inc] += term * sign;
                    }
                }
            }
            g_x = &g_x - self.sheaf.apply_laplacian(&g_x) * alpha;
        }

        // Encoder.
        let mut g_enc = self.from_stalks(&g_x);
        if let Some(mask) = dropout {
            g_enc.component_mul_assign(mask);
        }
        let encoder = features.tr_mul(&g_enc);
        let encoder_bias = g_enc.row_sum().transpose();

        // Moment penalties: ∂‖μ_e − s I‖²/∂A = 4 D_e A and ∂‖μ_v − s I‖²/∂A = −4 A D_v
        // for D the shifted (or traceless) component.
        let mut raw_theta = vec![0.0; theta.len()];
        let (lm, lt) = (self.config.lambda_mu, self.config.lambda_theta);
        if self.config.learn_maps && (lm > 0.0 || lt > 0.0) {
            let cv: Vec<_> = mu.vertex.iter().map(stability::traceless).collect();
            let ce: Vec<_> = mu.edge.iter().map(stability::traceless).collect();
            let nv = mu.vertex.len();
            let dv: Vec<_> = mu.vertex.iter().zip(&theta).map(|(m, &t)| stability::shifted(m, t)).collect();
            let de: Vec<_> = mu
                .edge
                .iter()
                .zip(&theta[nv..])
                .map(|(m, &t)| stability::shifted(m, t))
                .collect();
            for (i, a) in self.sheaf.maps().iter().enumerate() {
                let v = self.sheaf.graph().incidence_vertex(i);
                let e = i / 2;
                let g = (&ce[e] * a - a * &cv[v]) * (4.0 * lm) + (&de[e] * a - a * &dv[v]) * (4.0 * lt);
                maps[i] += g;
            }
        }
        if lt > 0.0 {
            let d_theta: Vec<f64> = mu
                .components()
                .zip(&theta)
                .map(|(m, &t)| -2.0 * lt * stability::shifted(m, t).trace())
                .collect();
            // θ = P θ̃ with P the orthogonal projector onto d⊥, so ∂/∂θ̃ = P ∂/∂θ.
            raw_theta = project_theta(&d_theta, dims)?.values().to_vec();
        }

        Ok((
            loss,
            Some(Gradients {
                maps,
                raw_theta,
                encoder,
                encoder_bias,
                readout,
                readout_bias,
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_setup(config: ModelConfig, seed: u64) -> (SheafModel, DMatrix<f64>, Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Graph::with_indices(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]).unwrap();
        let mut model = SheafModel::new(g, 3, 2, config, &mut rng).unwrap();
        for (_, p) in model.parameters_mut() {
            for x in p.iter_mut() {
                *x = 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        model.refresh_step().unwrap();
        let f = DMatrix::from_fn(5, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        (model, f, vec![0, 1, 0, 1, 1], vec![0, 1, 2, 4])
    }

    /// Central differences of the total loss over every scalar parameter.
    fn finite_difference(model: &SheafModel, f: &DMatrix<f64>, y: &[usize], mask: &[usize]) -> Vec<Vec<f64>> {
        let h = 1e-5;
        let mut probe = model.clone();
        let sizes: Vec<usize> = probe.parameters_mut().iter().map(|(_, s)| s.len()).collect();
        let mut out = Vec::new();
        for (g, &len) in sizes.iter().enumerate() {
            let mut col = Vec::with_capacity(len);
            for k in 0..len {
                let orig = probe.parameters_mut()[g].1[k];
                probe.parameters_mut()[g].1[k] = orig + h;
                let up = probe.loss(f, y, mask).unwrap().total;
                probe.parameters_mut()[g].1[k] = orig - h;
                let down = probe.loss(f, y, mask).unwrap().total;
                probe.parameters_mut()[g].1[k] = orig;
                col.push((up - down) / (2.0 * h));
            }
            out.push(col);
        }
        out
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let config = ModelConfig {
            vertex_dim: 3,
            edge_dim: 2,
            hidden: 2,
            layers: 3,
            step: StepSize::Fixed(0.1),
            lambda_mu: 0.05,
            lambda_theta: 0.07,
            ..ModelConfig::default()
        };
        let (mut model, f, y, mask) = tiny_setup(config, 3);
        model.raw_theta.iter_mut().enumerate().for_each(|(i, t)| *t = 0.2 * i as f64 - 0.5);
        let (_, grads) = model.backward(&f, &y, &mask).unwrap();
        let fd = finite_difference(&model, &f, &y, &mask);
        for ((group, analytic), numeric) in grads.slices().into_iter().zip(fd) {
            for (a, n) in analytic.iter().zip(&numeric) {
                let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                assert!(err < 1e-5, "{group:?}: analytic {a}, numeric {n}");
            }
        }
    }

    #[test]
    fn zero_layers_is_encode_then_readout() {
        let config = ModelConfig {
            layers: 0,
            hidden: 2,
            ..ModelConfig::default()
        };
        let (model, f, _, _) = tiny_setup(config, 1);
        let mut z = &f * &model.encoder;
        for mut r in z.row_iter_mut() {
            r += model.encoder_bias.transpose();
        }
        let mut want = z * &model.readout;
        for mut r in want.row_iter_mut() {
            r += model.readout_bias.transpose();
        }
        assert!((model.scores(&f).unwrap() - want).norm() < 1e-12);
    }

    #[test]
    fn reshape_round_trips() {
        let (model, _, _, _) = tiny_setup(ModelConfig { hidden: 4, ..ModelConfig::default() }, 2);
        let z = DMatrix::from_fn(5, 12, |r, c| (r * 12 + c) as f64);
        let x = model.to_stalks(&z);
        assert_eq!(x.shape(), (15, 4));
        assert_eq!(x[(4, 1)], z[(1, 5)]);
        assert_eq!(model.from_stalks(&x), z);
    }

    #[test]
    fn zero_parameters_only_readout_bias_moves() {
        let (mut model, _, y, mask) = tiny_setup(ModelConfig { hidden: 2, ..ModelConfig::default() }, 4);
        for (_, p) in model.parameters_mut() {
            p.fill(0.0);
        }
        let f = DMatrix::zeros(5, 3);
        let (loss, g) = model.backward(&f, &y, &mask).unwrap();
        assert!((loss.task - 2f64.ln()).abs() < 1e-15);
        for (group, s) in g.slices() {
            if group != ParamGroup::ReadoutBias {
                assert!(s.iter().all(|&x| x == 0.0), "{group:?}");
            }
        }
        // Mask labels are [0, 1, 0, 1]: balanced, so the bias gradient is 1/2 − 1/2.
        assert!(g.readout_bias.iter().all(|x| x.abs() < 1e-15));
        let skewed = [1, 2, 3, 4];
        let (_, g) = model.backward(&f, &y, &skewed).unwrap();
        let freq1 = 0.75;
        assert!((g.readout_bias[1] - (0.5 - freq1)).abs() < 1e-15);
        assert!((g.readout_bias[0] - (0.5 - (1.0 - freq1))).abs() < 1e-15);
    }

    #[test]
    fn total_is_weighted_sum() {
        let config = ModelConfig {
            lambda_mu: 2e-3,
            lambda_theta: 1e-4,
            hidden: 2,
            ..ModelConfig::default()
        };
        let (mut model, f, y, mask) = tiny_setup(config, 5);
        model.raw_theta[0] = 1.0;
        let l = model.loss(&f, &y, &mask).unwrap();
        assert!(l.cent > 0.0 && l.theta_mm > 0.0);
        assert!((l.total - (l.task + 2e-3 * l.cent + 1e-4 * l.theta_mm)).abs() <= 1e-12);
    }

    #[test]
    fn identical_seeds_give_identical_scores() {
        let a = tiny_setup(ModelConfig::default(), 9);
        let b = tiny_setup(ModelConfig::default(), 9);
        assert_eq!(a.0.scores(&a.1).unwrap(), b.0.scores(&b.1).unwrap());
    }

    #[test]
    fn nonfinite_forward_refuses_gradient() {
        let (mut model, f, y, mask) = tiny_setup(ModelConfig { hidden: 2, ..ModelConfig::default() }, 6);
        model.encoder[(0, 0)] = f64::NAN;
        assert!(matches!(model.backward(&f, &y, &mask), Err(Error::Numeric(_))));
    }

    #[test]
    fn empty_mask_rejected() {
        let (model, f, y, _) = tiny_setup(ModelConfig::default(), 7);
        assert!(matches!(model.loss(&f, &y, &[]), Err(Error::Precondition(_))));
    }
}
