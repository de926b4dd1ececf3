//! Regression baselines: linear with bias, per-coordinate cubic
//! polynomial, and Gaussian radial basis functions, all solved by
//! ridge-stabilized normal equations.

use super::{Predictor, Standardizer};
use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Feature construction of a fitted regression model. RBF centers live in
/// standardized input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    Linear,
    /// Per-coordinate powers z, z^2, z^3; no cross terms.
    Polynomial3,
    GaussianRbf { centers: Vec<Vec<f64>>, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub feature_map: FeatureMap,
    input_width: usize,
    /// One weight per feature, bias last.
    weights: Vec<f64>,
    standardizer: Standardizer,
}

impl RegressionModel {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::ModelShape("non-finite regression weight".into()));
        }
        let expect = match &self.feature_map {
            FeatureMap::Linear => self.input_width + 1,
            FeatureMap::Polynomial3 => 3 * self.input_width + 1,
            FeatureMap::GaussianRbf { centers, width } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::ModelShape(format!("rbf width {width} invalid")));
                }
                if centers.iter().any(|c| c.len() != self.input_width) {
                    return Err(Error::ModelShape("rbf center width mismatch".into()));
                }
                centers.len() + 1
            }
        };
        if self.weights.len() != expect {
            return Err(Error::ModelShape(format!(
                "{} weights for {expect} features",
                self.weights.len()
            )));
        }
        Ok(())
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.len()
    }

    fn features(&self, z: &[f64]) -> Vec<f64> {
        feature_row(&self.feature_map, z)
    }
}

/// One feature row (bias excluded; the solver appends it).
fn feature_row(map: &FeatureMap, z: &[f64]) -> Vec<f64> {
    match map {
        FeatureMap::Linear => z.to_vec(),
        FeatureMap::Polynomial3 => {
            let mut out = Vec::with_capacity(3 * z.len());
            for &v in z {
                out.push(v);
                out.push(v * v);
                out.push(v * v * v);
            }
            out
        }
        FeatureMap::GaussianRbf { centers, width } => {
            let inv = 1.0 / (2.0 * width * width);
            centers
                .iter()
                .map(|c| {
                    let d2: f64 = c.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 * inv).exp()
                })
                .collect()
        }
    }
}

impl Predictor for RegressionModel {
    fn input_width(&self) -> usize {
        self.input_width
    }

    fn predict(&self, c: &[f64]) -> Result<f64> {
        if c.len() != self.input_width {
            return Err(Error::ModelShape(format!(
                "input width {} does not match model width {}",
                c.len(),
                self.input_width
            )));
        }
        let z = self.standardizer.apply(c);
        let phi = self.features(&z);
        let (w, bias) = self.weights.split_at(phi.len());
        Ok(phi.iter().zip(w).map(|(f, w)| f * w).sum::<f64>() + bias[0])
    }

    fn input_gradient(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.input_width {
            return Err(Error::ModelShape(format!(
                "input width {} does not match model width {}",
                c.len(),
                self.input_width
            )));
        }
        let z = self.standardizer.apply(c);
        let scale = self.standardizer.input_scale();
        let grad_z: Vec<f64> = match &self.feature_map {
            FeatureMap::Linear => self.weights[..z.len()].to_vec(),
            FeatureMap::Polynomial3 => (0..z.len())
                .map(|i| {
                    let w = &self.weights[3 * i..3 * i + 3];
                    w[0] + 2.0 * w[1] * z[i] + 3.0 * w[2] * z[i] * z[i]
                })
                .collect(),
            FeatureMap::GaussianRbf { centers, width } => {
                let inv = 1.0 / (2.0 * width * width);
                let mut g = vec![0.0; z.len()];
                for (c_m, &w_m) in centers.iter().zip(&self.weights) {
                    let d2: f64 = c_m.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                    let phi = (-d2 * inv).exp();
                    // d phi / d z_j = phi * (c_j - z_j) / width^2
                    let k = w_m * phi / (width * width);
                    for (gj, (cj, zj)) in g.iter_mut().zip(c_m.iter().zip(&z)) {
                        *gj += k * (cj - zj);
                    }
                }
                g
            }
        };
        Ok(grad_z.into_iter().map(|g| g * scale).collect())
    }
}

/// Ridge-regularized least squares on a feature matrix with an appended
/// bias column (the bias is never regularized). `ridge = 0` demands a
/// well-posed system and errors otherwise.
fn solve_normal_equations(
    rows: &[Vec<f64>],
    y: &[f64],
    ridge: f64,
) -> Result<Vec<f64>> {
    let n = rows.len();
    let p_raw = rows[0].len();
    let p = p_raw + 1;
    let mut phi = DMatrix::zeros(n, p);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            phi[(i, j)] = v;
        }
        phi[(i, p_raw)] = 1.0;
    }
    let yv = DVector::from_column_slice(y);
    let mut gram = phi.transpose() * &phi;
    for j in 0..p_raw {
        gram[(j, j)] += ridge;
    }
    let rhs = phi.transpose() * yv;
    let solve = |g: &DMatrix<f64>| -> Option<Vec<f64>> {
        Cholesky::new(g.clone()).map(|ch| ch.solve(&rhs).as_slice().to_vec())
    };
    if let Some(w) = solve(&gram) {
        return Ok(w);
    }
    if ridge == 0.0 {
        return Err(Error::SingularSolve(
            "normal equations are rank-deficient; pass a positive ridge term".into(),
        ));
    }
    // Escalate the ridge a few decades before giving up.
    let mut boosted = ridge;
    for _ in 0..6 {
        boosted *= 10.0;
        let mut g = gram.clone();
        for j in 0..p_raw {
            g[(j, j)] += boosted - ridge;
        }
        if let Some(w) = solve(&g) {
            log::warn!("ill-conditioned normal equations; ridge escalated to {boosted:e}");
            return Ok(w);
        }
    }
    Err(Error::SingularSolve(format!(
        "normal equations unsolvable even with ridge {boosted:e}"
    )))
}

fn check_training_set(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidParameter(format!(
            "training set sizes {} and {} invalid",
            x.len(),
            y.len()
        )));
    }
    let width = x[0].len();
    if width == 0 || x.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidParameter("ragged training inputs".into()));
    }
    Ok(width)
}

fn fit_with_map(
    standardizer: &Standardizer,
    x: &[Vec<f64>],
    y: &[f64],
    map: FeatureMap,
    ridge: f64,
) -> Result<RegressionModel> {
    let width = check_training_set(x, y)?;
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|c| feature_row(&map, &standardizer.apply(c)))
        .collect();
    let weights = solve_normal_equations(&rows, y, ridge)?;
    let model = RegressionModel {
        feature_map: map,
        input_width: width,
        weights,
        standardizer: *standardizer,
    };
    model.validate()?;
    Ok(model)
}

/// Least-squares linear model with bias.
pub fn fit_linear(
    standardizer: &Standardizer,
    x: &[Vec<f64>],
    y: &[f64],
    ridge: f64,
) -> Result<RegressionModel> {
    fit_with_map(standardizer, x, y, FeatureMap::Linear, ridge)
}

/// Per-coordinate cubic polynomial (powers 1..3 of each input, no cross
/// terms) with bias.
pub fn fit_polynomial3(
    standardizer: &Standardizer,
    x: &[Vec<f64>],
    y: &[f64],
    ridge: f64,
) -> Result<RegressionModel> {
    fit_with_map(standardizer, x, y, FeatureMap::Polynomial3, ridge)
}

/// Gaussian RBF regression. Centers are a seeded random subset of the
/// training inputs (standardized); `width` is measured in standardized
/// space.
pub fn fit_rbf(
    standardizer: &Standardizer,
    x: &[Vec<f64>],
    y: &[f64],
    n_centers: usize,
    width: f64,
    ridge: f64,
    seed: u64,
) -> Result<RegressionModel> {
    check_training_set(x, y)?;
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rbf width must be finite and > 0, got {width}"
        )));
    }
    if n_centers == 0 {
        return Err(Error::InvalidParameter("need at least one rbf center".into()));
    }
    let m = n_centers.min(x.len());
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut rng = crate::seeding::stream_rng(seed, 0);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let centers: Vec<Vec<f64>> = order[..m]
        .iter()
        .map(|&i| standardizer.apply(&x[i]))
        .collect();
    fit_with_map(
        standardizer,
        x,
        y,
        FeatureMap::GaussianRbf { centers, width },
        ridge,
    )
}
