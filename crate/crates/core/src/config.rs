//! Declarative run configuration for the command-line pipeline.
//!
//! One JSON document drives every stage; unknown keys are rejected so a
//! typo'd field fails loudly instead of silently falling back to a default.

use crate::array_geometry::{FibrilArray, FibrilMaterial};
use crate::dataset::SampleStyle;
use crate::error::{Error, Result};
use crate::surrogate::LrSchedule;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub layout: LayoutConfig,
    /// Worker-thread cap; `None` lets the runtime decide. `Some(1)` is the
    /// single-threaded reference mode.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub train: Option<TrainStageConfig>,
    #[serde(default)]
    pub design: Option<DesignStageConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutShape {
    Circle,
    Square,
    Triangle,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(default = "one")]
    pub radius_ratio: f64,
    #[serde(default = "five")]
    pub length_ratio: f64,
    #[serde(default = "template_modulus")]
    pub modulus_ratio: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        MaterialConfig {
            radius_ratio: 1.0,
            length_ratio: 5.0,
            modulus_ratio: 0.75,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub kind: LayoutShape,
    /// Radius for circles, half-side for squares, circumradius for
    /// triangles (in units of the mean fibril radius).
    pub shape: f64,
    #[serde(default = "three")]
    pub spacing: f64,
    #[serde(default)]
    pub material: MaterialConfig,
}

impl LayoutConfig {
    pub fn material(&self) -> Result<FibrilMaterial> {
        FibrilMaterial::new(
            self.material.radius_ratio,
            self.material.length_ratio,
            self.material.modulus_ratio,
        )
    }

    pub fn build(&self) -> Result<FibrilArray> {
        let m = self.material()?;
        match self.kind {
            LayoutShape::Circle => FibrilArray::build_circle(self.shape, self.spacing, m),
            LayoutShape::Square => FibrilArray::build_square(self.shape, self.spacing, m),
            LayoutShape::Triangle => FibrilArray::build_triangle(self.shape, self.spacing, m),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub beta_x: f64,
    #[serde(default)]
    pub beta_y: f64,
    /// Uniform compliance level; defaults to the layout's template value.
    #[serde(default)]
    pub mean_c: Option<f64>,
    /// Optional per-fibril compliance file (single `compliance` column)
    /// overriding the uniform design.
    #[serde(default)]
    pub compliance_csv: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            beta_x: 0.0,
            beta_y: 0.0,
            mean_c: None,
            compliance_csv: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    /// Defaults to the layout's template compliance.
    #[serde(default)]
    pub mean_c: Option<f64>,
    /// Defaults to `[mean_c / 10, 10 * mean_c]`.
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
    #[serde(default = "default_ceiling")]
    pub filter_ceiling: f64,
    #[serde(default = "default_style")]
    pub style: SampleStyle,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_acceptance_floor")]
    pub acceptance_floor: f64,
    #[serde(default = "default_probe_batch")]
    pub probe_batch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    /// Training epochs per fold (usually shorter than the final fit).
    pub epochs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainStageConfig {
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_rbf_centers")]
    pub rbf_centers: usize,
    /// Kernel width in standardized input space; `None` uses the median
    /// pairwise distance of the training inputs.
    #[serde(default)]
    pub rbf_width: Option<f64>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Per-epoch rate schedule; a constant rate by default. Cosine
    /// annealing trades a little late-run progress for smoother
    /// convergence and tends to lose at the epoch budgets used here.
    #[serde(default = "default_schedule")]
    pub lr_schedule: LrSchedule,
    /// Optional architecture search; when present it overrides `hidden`.
    #[serde(default)]
    pub cv: Option<CvConfig>,
    /// Fraction of the training split held out for checkpoint selection.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

impl Default for TrainStageConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignStageConfig {
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "yes")]
    pub enforce_mean: bool,
    /// How many ranked designs get per-design profile files.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Append this many top designs to a copy of the dataset (0 disables).
    #[serde(default)]
    pub feedback_k: usize,
    /// Retrain-and-redesign cycles driven by the feedback set (0 keeps
    /// the single-shot behaviour). Requires `feedback_k > 0`; each round
    /// appends the top designs, refits the predictor on the grown dataset,
    /// and restarts the ascent against the refreshed model.
    #[serde(default)]
    pub feedback_rounds: usize,
    /// Epochs per feedback refit; defaults to the train stage's `epochs`.
    #[serde(default)]
    pub feedback_epochs: Option<usize>,
}

impl Default for DesignStageConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

fn one() -> f64 {
    1.0
}
fn three() -> f64 {
    3.0
}
fn five() -> f64 {
    5.0
}
fn template_modulus() -> f64 {
    0.75
}
fn yes() -> bool {
    true
}
fn default_ceiling() -> f64 {
    0.7
}
fn default_style() -> SampleStyle {
    SampleStyle::Mixed
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_acceptance_floor() -> f64 {
    0.01
}
fn default_probe_batch() -> usize {
    200
}
fn default_folds() -> usize {
    5
}
fn default_ridge() -> f64 {
    1e-6
}
fn default_rbf_centers() -> usize {
    200
}
fn default_hidden() -> Vec<usize> {
    vec![64; 6]
}
fn default_epochs() -> usize {
    400
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_schedule() -> LrSchedule {
    LrSchedule::Constant
}
fn default_val_fraction() -> f64 {
    0.1
}
fn default_starts() -> usize {
    100
}
fn default_max_iters() -> usize {
    2000
}
fn default_step() -> f64 {
    100.0
}
fn default_tol() -> f64 {
    1e-7
}
fn default_top_k() -> usize {
    5
}

/// Parse and minimally validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "config file {} not found",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir must not be empty".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1 when given".into()));
        }
        if !(self.layout.shape.is_finite() && self.layout.shape >= 0.0) {
            return Err(Error::Config(format!(
                "layout.shape must be finite and non-negative, got {}",
                self.layout.shape
            )));
        }
        if let Some(d) = &self.design {
            if d.feedback_rounds > 0 && d.feedback_k == 0 {
                return Err(Error::Config(
                    "design.feedback_rounds needs design.feedback_k > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Hash of the canonicalized (re-serialized) config, so formatting and
    /// key order in the source file do not matter.
    pub fn sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
