//! Adam with L2 weight decay, early stopping on validation loss, and accuracy.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, LossBreakdown, ParamGroup, SheafModel};
use crate::data::Split;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Added to the gradient as `wd · p` for every parameter except raw θ.
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            weight_decay: 5e-3,
            max_epochs: 1500,
            patience: 200,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Precondition("learning rate must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Precondition("patience exceeds max epochs".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Precondition("invalid Adam moments".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Precondition("weight decay must be nonnegative".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(model: &mut SheafModel) -> Self {
        let sizes: Vec<usize> = model.parameters_mut().iter().map(|(_, s)| s.len()).collect();
        Adam {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut SheafModel, grads: &Gradients, config: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - config.beta1.powi(self.t);
        let bc2 = 1.0 - config.beta2.powi(self.t);
        let learn_maps = model.config.learn_maps;
        let learn_theta = model.config.lambda_theta > 0.0;
        let grad_slices = grads.slices();
        for (k, (group, params)) in model.parameters_mut().into_iter().enumerate() {
            let frozen = match group {
                ParamGroup::Map(_) => !learn_maps,
                ParamGroup::Theta => !learn_theta,
                _ => false,
            };
            if frozen {
                continue;
            }
            let decay = if group == ParamGroup::Theta { 0.0 } else { config.weight_decay };
            let g = grad_slices[k].1;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..params.len() {
                let gi = g[i] + decay * params[i];
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
                params[i] -= config.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + config.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Patience,
    MaxEpochs,
    #[serde(rename = "nonfinite")]
    NonFinite,
}

impl HaltReason {
    pub fn as_str(self) -> &'static str {
        match self {
            HaltReason::Patience => "patience",
            HaltReason::MaxEpochs => "max_epochs",
            HaltReason::NonFinite => "nonfinite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training loss (with dropout when enabled).
    pub loss: LossBreakdown,
    /// Validation cross-entropy.
    pub val_loss: f64,
    pub val_acc: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were restored; `None` if no epoch produced a
    /// finite validation loss.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub best_val_acc: f64,
    pub halt: HaltReason,
}

impl History {
    /// `epoch, task, cent, theta_mm, total, val_acc`
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Numeric(format!("csv encoding failed: {e}"));
        w.write_record(["epoch", "task", "cent", "theta_mm", "total", "val_acc"]).map_err(io)?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.loss.task.to_string(),
                r.loss.cent.to_string(),
                r.loss.theta_mm.to_string(),
                r.loss.total.to_string(),
                r.val_acc.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, p: f64, rng: &mut R) -> DMatrix<f64> {
    let keep = 1.0 / (1.0 - p);
    DMatrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < p { 0.0 } else { keep })
}

/// Trains in place and restores the parameters of the best validation epoch.
///
/// Each epoch: α is recomputed from the current maps, the training loss and
/// gradient are evaluated, the validation loss of the same parameters is
/// recorded, then one Adam step is taken. Training stops `patience` epochs
/// after the last improvement, at `max_epochs`, or at the first non-finite
/// loss; the last case is reported through [`HaltReason::NonFinite`] with the
/// partial history.
pub fn train(
    model: &mut SheafModel,
    features: &DMatrix<f64>,
    labels: &[usize],
    split: &Split,
    config: &TrainConfig,
) -> Result<History> {
    config.validate()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Precondition("train and validation masks must be nonempty".into()));
    }
    model.check_inputs(features)?;
    model.check_labels(labels, &split.train)?;
    model.check_labels(labels, &split.val)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model);
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, f64, SheafModel)> = None;
    let mut halt = HaltReason::MaxEpochs;
    let width = model.encoder.ncols();
    let p = model.config.dropout;

    for epoch in 0..config.max_epochs {
        let step_size = match model.refresh_step() {
            Ok(a) if a.is_finite() => a,
            Ok(_) | Err(Error::Numeric(_)) => {
                halt = HaltReason::NonFinite;
                break;
            }
            Err(e) => return Err(e),
        };
        let mask = (p > 0.0).then(|| dropout_mask(features.nrows(), width, p, &mut rng));
        let (loss, grads) = model.loss_and_grad(features, labels, &split.train, mask.as_ref())?;
        let val_loss = model.loss(features, labels, &split.val)?.task;
        let val_acc = evaluate(model, features, labels, &split.val)?;
        epochs.push(EpochRecord {
            epoch,
            loss,
            val_loss,
            val_acc,
            step_size,
        });
        let grads = match grads {
            Some(g) if val_loss.is_finite() && g.is_finite() => g,
            _ => {
                halt = HaltReason::NonFinite;
                break;
            }
        };
        if best.as_ref().is_none_or(|b| val_loss < b.1) {
            best = Some((epoch, val_loss, val_acc, model.clone()));
        }
        let best_epoch = best.as_ref().expect("set above").0;
        if epoch >= best_epoch + config.patience {
            halt = HaltReason::Patience;
            break;
        }
        adam.step(model, &grads, config);
    }

    let (best_epoch, best_val_loss, best_val_acc) = match best {
        Some((e, l, a, snapshot)) => {
            *model = snapshot;
            (Some(e), l, a)
        }
        None => (None, f64::NAN, f64::NAN),
    };
    Ok(History {
        epochs,
        best_epoch,
        best_val_loss,
        best_val_acc,
        halt,
    })
}

/// Predicted class per node: argmax of the scores, ties (and NaN rows) going
/// to the lowest class index.
pub fn predict(model: &SheafModel, features: &DMatrix<f64>) -> Result<Vec<usize>> {
    let scores = model.scores(features)?;
    Ok(scores
        .row_iter()
        .map(|row| {
            let mut arg = 0;
            for c in 1..row.len() {
                if row[c] > row[arg] {
                    arg = c;
                }
            }
            arg
        })
        .collect())
}

/// Fraction of nodes in `mask` whose prediction equals the label.
pub fn evaluate(model: &SheafModel, features: &DMatrix<f64>, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Precondition("evaluation mask is empty".into()));
    }
    let pred = predict(model, features)?;
    let mut correct = 0usize;
    for &i in mask {
        let y = *labels
            .get(i)
            .ok_or_else(|| Error::Structural(format!("mask index {i} has no label")))?;
        if pred.get(i) == Some(&y) {
            correct += 1;
        }
    }
    Ok(correct as f64 / mask.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::quiver::Graph;
    use rand_distr::StandardNormal;

    fn setup(config: ModelConfig) -> (SheafModel, DMatrix<f64>, Vec<usize>, Split) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Graph::cycle(8).unwrap();
        let model = SheafModel::new(g, 2, 2, config, &mut rng).unwrap();
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
        let f = DMatrix::from_fn(8, 2, |r, c| {
            (if r % 2 == c { 1.0 } else { 0.0 }) + 0.1 * rng.sample::<f64, _>(StandardNormal)
        });
        let split = Split {
            train: vec![0, 1, 2, 3],
            val: vec![4, 5],
            test: vec![6, 7],
        };
        (model, f, labels, split)
    }

    #[test]
    fn flat_validation_stops_at_best_plus_patience() {
        // A zero learning rate keeps the validation loss flat, so epoch 0 stays best.
        let (mut model, f, y, split) = setup(ModelConfig { hidden: 2, ..ModelConfig::default() });
        let config = TrainConfig {
            learning_rate: 1e-300,
            weight_decay: 0.0,
            max_epochs: 50,
            patience: 7,
            ..TrainConfig::default()
        };
        let h = train(&mut model, &f, &y, &split, &config).unwrap();
        assert_eq!(h.best_epoch, Some(0));
        assert_eq!(h.halt, HaltReason::Patience);
        assert_eq!(h.epochs.last().unwrap().epoch, 7);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let config = ModelConfig {
            hidden: 2,
            dropout: 0.3,
            lambda_mu: 2e-3,
            ..ModelConfig::default()
        };
        let tc = TrainConfig {
            max_epochs: 120,
            patience: 120,
            ..TrainConfig::default()
        };
        let (mut a, f, y, split) = setup(config.clone());
        let (mut b, _, _, _) = setup(config);
        let ha = train(&mut a, &f, &y, &split, &tc).unwrap();
        let hb = train(&mut b, &f, &y, &split, &tc).unwrap();
        assert_eq!(ha, hb);
        assert!(ha.epochs.last().unwrap().loss.task < ha.epochs[0].loss.task);
        assert_eq!(ha.best_val_acc, 1.0);
        assert_eq!(evaluate(&a, &f, &y, &split.val).unwrap(), 1.0);
    }

    #[test]
    fn nonfinite_loss_halts_with_reason() {
        let (mut model, f, y, split) = setup(ModelConfig {
            hidden: 2,
            layers: 200,
            step: crate::diffusion::StepSize::Scaled(50.0),
            ..ModelConfig::default()
        });
        let h = train(&mut model, &f, &y, &split, &TrainConfig::default()).unwrap();
        assert_eq!(h.halt, HaltReason::NonFinite);
        assert_eq!(h.epochs.len(), 1);
        assert_eq!(h.best_epoch, None);
    }

    #[test]
    fn evaluate_tie_breaks_to_class_zero() {
        let (mut model, f, _, _) = setup(ModelConfig { hidden: 2, ..ModelConfig::default() });
        for (group, p) in model.parameters_mut() {
            if matches!(group, ParamGroup::Readout | ParamGroup::ReadoutBias) {
                p.fill(0.0);
            }
        }
        let labels = vec![0, 1, 1, 0, 0, 1, 1, 1];
        let all: Vec<usize> = (0..8).collect();
        assert_eq!(evaluate(&model, &f, &labels, &all).unwrap(), 3.0 / 8.0);
        assert!(evaluate(&model, &f, &labels, &[]).is_err());
    }

    #[test]
    fn history_csv_header() {
        let (mut model, f, y, split) = setup(ModelConfig { hidden: 2, ..ModelConfig::default() });
        let tc = TrainConfig {
            max_epochs: 3,
            patience: 3,
            ..TrainConfig::default()
        };
        let csv = train(&mut model, &f, &y, &split, &tc).unwrap().to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,task,cent,theta_mm,total,val_acc"));
        assert_eq!(lines.count(), 3);
    }
}
