//! Model checkpoints: the sheaf JSON object with `raw_theta`, `encoder`,
//! `readout` and `config` added alongside.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, SheafModel};
use crate::error::{Error, Result};
use crate::sheaf::{row_major, CellularSheaf, SheafJson};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major weights.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn from_parts(w: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        DenseLayer {
            rows: w.nrows(),
            cols: w.ncols(),
            weights: row_major(w),
            bias: b.as_slice().to_vec(),
        }
    }

    fn into_parts(self, what: &str) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if self.weights.len() != self.rows * self.cols || self.bias.len() != self.cols {
            return Err(Error::Structural(format!("{what} layer has inconsistent shapes")));
        }
        Ok((
            DMatrix::from_row_slice(self.rows, self.cols, &self.weights),
            DVector::from_vec(self.bias),
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    #[serde(flatten)]
    pub sheaf: SheafJson,
    pub raw_theta: Vec<f64>,
    pub encoder: DenseLayer,
    pub readout: DenseLayer,
    pub config: ModelConfig,
}

impl SheafModel {
    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            sheaf: self.sheaf.to_json_value(),
            raw_theta: self.raw_theta.clone(),
            encoder: DenseLayer::from_parts(&self.encoder, &self.encoder_bias),
            readout: DenseLayer::from_parts(&self.readout, &self.readout_bias),
            config: self.config.clone(),
        }
    }

    pub fn from_checkpoint(cp: ModelCheckpoint) -> Result<Self> {
        let sheaf = CellularSheaf::from_json_value(cp.sheaf)?;
        let (encoder, encoder_bias) = cp.encoder.into_parts("encoder")?;
        let (readout, readout_bias) = cp.readout.into_parts("readout")?;
        SheafModel::from_parts(sheaf, cp.raw_theta, encoder, encoder_bias, readout, readout_bias, cp.config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_checkpoint())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cp: ModelCheckpoint = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        Self::from_checkpoint(cp)
    }
}
