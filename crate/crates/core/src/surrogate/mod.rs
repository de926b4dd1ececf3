//! Strength surrogates: regression baselines and multilayer perceptrons
//! with exact input gradients, shared metrics, and a versioned model file.
//!
//! All public prediction APIs take raw compliance vectors; each model
//! stores the standardization applied at fit time and undoes it in its
//! gradients, so the designer never sees scaled coordinates.

pub mod cv;
pub mod mlp;
pub mod regression;

pub use cv::{kfold_cv_grid, CvOutcome, CvRow};
pub use mlp::{
    mlp_train, write_train_log, LrSchedule, MlpModel, Optimizer, TrainConfig, TrainLogRow,
    TrainOutcome,
};
pub use regression::{fit_linear, fit_polynomial3, fit_rbf, RegressionModel};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter};
use std::path::Path;

/// Model file schema version.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Input scaling z = (c - mean) / mean, stored with every model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean_c: f64,
}

impl Standardizer {
    pub fn new(mean_c: f64) -> Result<Self> {
        if !(mean_c.is_finite() && mean_c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "standardizer mean must be finite and > 0, got {mean_c}"
            )));
        }
        Ok(Standardizer { mean_c })
    }

    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        c.iter().map(|&v| (v - self.mean_c) / self.mean_c).collect()
    }

    /// dz/dc, the factor converting standardized-space gradients to raw.
    pub fn input_scale(&self) -> f64 {
        1.0 / self.mean_c
    }
}

/// A frozen strength model: scalar prediction plus the exact gradient of
/// that prediction with respect to the raw compliance vector.
pub trait Predictor: Sync {
    fn input_width(&self) -> usize;
    fn predict(&self, c: &[f64]) -> Result<f64>;
    fn input_gradient(&self, c: &[f64]) -> Result<Vec<f64>>;
}

/// Fit quality on one split. `r2` is `None` when the labels have zero
/// variance (the score is undefined there).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub r2: Option<f64>,
}

/// Mean squared error and coefficient of determination.
pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "metrics need equal nonempty lengths, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let n = y_true.len() as f64;
    let mse = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p) * (t - p))
        .sum::<f64>()
        / n;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot = y_true.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>();
    let r2 = if y_true.len() < 2 || ss_tot <= 0.0 {
        None
    } else {
        Some(1.0 - mse * n / ss_tot)
    };
    Ok(Metrics { mse, r2 })
}

/// Extract (inputs, labels) for the given sample indices.
pub fn design_matrix(dataset: &Dataset, indices: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = indices
        .iter()
        .map(|&i| dataset.samples[i].c.as_slice().to_vec())
        .collect();
    let y = indices.iter().map(|&i| dataset.samples[i].strength).collect();
    (x, y)
}

/// Any trained model, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SavedModel {
    Mlp(MlpModel),
    Regression(RegressionModel),
}

impl Predictor for SavedModel {
    fn input_width(&self) -> usize {
        match self {
            SavedModel::Mlp(m) => m.input_width(),
            SavedModel::Regression(m) => m.input_width(),
        }
    }

    fn predict(&self, c: &[f64]) -> Result<f64> {
        match self {
            SavedModel::Mlp(m) => m.predict(c),
            SavedModel::Regression(m) => m.predict(c),
        }
    }

    fn input_gradient(&self, c: &[f64]) -> Result<Vec<f64>> {
        match self {
            SavedModel::Mlp(m) => m.input_gradient(c),
            SavedModel::Regression(m) => m.input_gradient(c),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    model: SavedModel,
}

pub fn save_model(model: &SavedModel, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        model: model.clone(),
    };
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &file)
        .map_err(|e| Error::io(path, e.into()))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile =
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
    if file.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::UnsupportedVersion {
            found: file.schema_version,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    match &file.model {
        SavedModel::Mlp(m) => m.validate()?,
        SavedModel::Regression(m) => m.validate()?,
    }
    Ok(file.model)
}
