//! Gradient-based compliance design against a frozen strength predictor.
//!
//! The trained predictor's weights are fixed and the compliance vector
//! itself becomes the learnable object: multi-start projected gradient
//! ascent climbs the predicted strength while staying on the fixed-mean,
//! box-bounded constraint set, and every converged candidate is verified
//! with the exact detachment simulator.

use crate::array_geometry::FibrilArray;
use crate::contact_mechanics::{simulate_detachment, DesignVector};
use crate::dataset::{sample_design, Dataset, Sample, SampleStyle};
use crate::error::{Error, Result};
use crate::seeding::stream_rng;
use crate::surrogate::Predictor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Predicted−verified gap beyond which a result is flagged.
pub const DISCREPANCY_TOL: f64 = 0.03;
/// Accepted-iteration window for the convergence check.
const CONVERGENCE_WINDOW: usize = 5;
/// Maximum step halvings in the backtracking line search.
const MAX_HALVINGS: usize = 20;
/// Feedback designs closer than this (Euclidean) to an existing sample are
/// treated as duplicates.
const DUPLICATE_TOL: f64 = 1e-9;

/// Euclidean projection of `c` onto `{ mean(x) = mean_c } ∩ [c_lo, c_hi]^N`.
///
/// The projection has the closed form `clamp(c + mu)` for the scalar shift
/// `mu` solving the mean constraint; `mu` is found by bisection (the mean of
/// the clamped vector is non-decreasing in `mu`). Any sub-1e-12 mean
/// residual left by the bisection is distributed over the strictly interior
/// coordinates so the constraint holds to machine precision.
pub fn project(c: &[f64], mean_c: f64, bounds: (f64, f64)) -> Result<DesignVector> {
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && mean_c.is_finite()) || lo > hi {
        return Err(Error::InfeasibleProjection(format!(
            "bounds [{lo}, {hi}] malformed"
        )));
    }
    if mean_c < lo || mean_c > hi {
        return Err(Error::InfeasibleProjection(format!(
            "target mean {mean_c} outside bounds [{lo}, {hi}]"
        )));
    }
    if c.is_empty() {
        return Err(Error::InfeasibleProjection("empty design vector".into()));
    }
    let n = c.len() as f64;
    let clamped_mean = |mu: f64| {
        c.iter().map(|&v| (v + mu).clamp(lo, hi)).sum::<f64>() / n
    };

    // Bracket the shift: at mu_lo everything clamps to lo, at mu_hi to hi.
    let c_min = c.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_max = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut mu_lo = lo - c_max;
    let mut mu_hi = hi - c_min;
    for _ in 0..200 {
        let mu = 0.5 * (mu_lo + mu_hi);
        if clamped_mean(mu) < mean_c {
            mu_lo = mu;
        } else {
            mu_hi = mu;
        }
        if (mu_hi - mu_lo).abs() < 1e-15 * (1.0 + mu_hi.abs()) {
            break;
        }
    }
    let mu = 0.5 * (mu_lo + mu_hi);
    let mut out: Vec<f64> = c.iter().map(|&v| (v + mu).clamp(lo, hi)).collect();

    // Spread the leftover mean defect over interior coordinates.
    let free: Vec<usize> = (0..out.len())
        .filter(|&i| out[i] > lo && out[i] < hi)
        .collect();
    if !free.is_empty() {
        let defect = mean_c * n - out.iter().sum::<f64>();
        let per = defect / free.len() as f64;
        for &i in &free {
            out[i] = (out[i] + per).clamp(lo, hi);
        }
    }
    let residual = (out.iter().sum::<f64>() / n - mean_c).abs();
    if residual > 1e-9 * (1.0 + mean_c.abs()) {
        return Err(Error::InfeasibleProjection(format!(
            "mean residual {residual:e} after projection"
        )));
    }
    DesignVector::new(out)
}

/// One inverse-design task: maximize the frozen predictor's strength over
/// the fixed-mean, box-bounded compliance set of a given layout.
pub struct DesignProblem<'a> {
    pub layout: &'a FibrilArray,
    pub predictor: &'a dyn Predictor,
    pub mean_c: f64,
    pub bounds: (f64, f64),
    pub n_starts: usize,
    pub max_iters: usize,
    /// Initial ascent step; the line search only shrinks it.
    pub step_size: f64,
    /// Convergence threshold on the predicted strength.
    pub tol: f64,
    /// Keep the mean constraint active during ascent (default). When false
    /// the ascent only respects the box and the mean is restored by one
    /// final projection.
    pub enforce_mean: bool,
    pub seed: u64,
}

impl<'a> DesignProblem<'a> {
    pub fn new(
        layout: &'a FibrilArray,
        predictor: &'a dyn Predictor,
        mean_c: f64,
        bounds: (f64, f64),
    ) -> Self {
        DesignProblem {
            layout,
            predictor,
            mean_c,
            bounds,
            n_starts: 100,
            max_iters: 2000,
            step_size: 100.0,
            tol: 1e-7,
            enforce_mean: true,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        if !(lo > 0.0 && lo < self.mean_c && self.mean_c < hi) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < c_lo < mean_c < c_hi, got [{lo}, {hi}] around {}",
                self.mean_c
            )));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidParameter("n_starts must be >= 1".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) || self.tol < 0.0 {
            return Err(Error::InvalidParameter(
                "step_size must be positive and tol non-negative".into(),
            ));
        }
        if self.predictor.input_width() != self.layout.n() {
            return Err(Error::ModelShape(format!(
                "predictor width {} does not match layout size {}",
                self.predictor.input_width(),
                self.layout.n()
            )));
        }
        Ok(())
    }
}

/// One optimized candidate, simulator-verified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub c_opt: DesignVector,
    pub predicted_strength: f64,
    pub verified_strength: f64,
    pub start_id: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl DesignResult {
    /// Predictor optimism: predicted minus verified strength.
    pub fn discrepancy(&self) -> f64 {
        self.predicted_strength - self.verified_strength
    }

    pub fn discrepancy_flagged(&self) -> bool {
        self.discrepancy().abs() > DISCREPANCY_TOL
    }
}

/// Exact simulator strength of a design on a layout under normal loading.
pub fn verify(layout: &FibrilArray, c: &DesignVector) -> Result<f64> {
    Ok(simulate_detachment(layout, c, 0.0, 0.0)?.strength)
}

struct AscentOutcome {
    c: DesignVector,
    predicted: f64,
    iterations: usize,
    converged: bool,
}

/// Projected gradient ascent from one seeded feasible start.
fn ascend_one(problem: &DesignProblem, start_id: usize) -> Result<AscentOutcome> {
    let mut rng = stream_rng(problem.seed, start_id as u64);
    let (lo, hi) = problem.bounds;
    let start = sample_design(
        problem.layout,
        problem.mean_c,
        problem.bounds,
        SampleStyle::Mixed,
        &mut rng,
    )?;
    let mut c = start.as_slice().to_vec();
    let mut predicted = problem.predictor.predict(&c)?;
    if !predicted.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "start {start_id}: predictor returned a non-finite value"
        )));
    }

    let mut history = vec![predicted];
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..problem.max_iters {
        let grad = problem.predictor.input_gradient(&c)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "start {start_id}: non-finite gradient at iteration {it}"
            )));
        }

        // Backtracking line search: shrink the step until the predicted
        // strength does not decrease.
        let mut eta = problem.step_size;
        let mut accepted: Option<(DesignVector, f64)> = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = c.iter().zip(&grad).map(|(&v, &g)| v + eta * g).collect();
            let next = if problem.enforce_mean {
                project(&trial, problem.mean_c, problem.bounds)?
            } else {
                DesignVector::new(trial.iter().map(|v| v.clamp(lo, hi)).collect())?
            };
            let y = problem.predictor.predict(next.as_slice())?;
            if y.is_finite() && y >= predicted {
                accepted = Some((next, y));
                break;
            }
            eta *= 0.5;
        }
        let Some((next, y)) = accepted else {
            // No non-decreasing step at any scale: stationary.
            converged = true;
            break;
        };
        if y == predicted && next.as_slice() == c.as_slice() {
            converged = true;
            break;
        }
        debug_assert!(y >= predicted, "line search accepted a descent step");
        c = next.as_slice().to_vec();
        predicted = y;
        iterations = it + 1;
        history.push(predicted);
        if history.len() > CONVERGENCE_WINDOW {
            let past = history[history.len() - 1 - CONVERGENCE_WINDOW];
            if (predicted - past).abs() < problem.tol {
                converged = true;
                break;
            }
        }
    }

    let c = if problem.enforce_mean {
        DesignVector::new(c)?
    } else {
        let restored = project(&c, problem.mean_c, problem.bounds)?;
        predicted = problem.predictor.predict(restored.as_slice())?;
        restored
    };
    Ok(AscentOutcome {
        c,
        predicted,
        iterations,
        converged,
    })
}

/// Multi-start projected gradient ascent; every candidate is verified with
/// the exact simulator and results are ranked by verified strength
/// (descending), ties by predicted strength, then by start id.
pub fn optimize(problem: &DesignProblem) -> Result<Vec<DesignResult>> {
    problem.validate()?;
    let outcomes: Vec<(usize, Result<AscentOutcome>)> = (0..problem.n_starts)
        .into_par_iter()
        .map(|s| (s, ascend_one(problem, s)))
        .collect();

    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (start_id, outcome) in outcomes {
        match outcome {
            Ok(o) => ok.push((start_id, o)),
            Err(e) => failures.push((start_id, e)),
        }
    }
    if ok.is_empty() {
        let (sid, first) = &failures[0];
        return Err(Error::EmptyResults(format!(
            "all {} starts failed; first failure (start {sid}): {first}",
            problem.n_starts
        )));
    }
    if !failures.is_empty() {
        log::warn!(
            "{} of {} design starts failed; continuing with the rest",
            failures.len(),
            problem.n_starts
        );
    }

    let mut results: Vec<DesignResult> = ok
        .into_par_iter()
        .map(|(start_id, o)| {
            let verified_strength = verify(problem.layout, &o.c)?;
            Ok(DesignResult {
                c_opt: o.c,
                predicted_strength: o.predicted,
                verified_strength,
                start_id,
                iterations: o.iterations,
                converged: o.converged,
            })
        })
        .collect::<Result<_>>()?;

    results.sort_by(|a, b| {
        b.verified_strength
            .total_cmp(&a.verified_strength)
            .then(b.predicted_strength.total_cmp(&a.predicted_strength))
            .then(a.start_id.cmp(&b.start_id))
    });
    Ok(results)
}

/// Append the top-`k` verified designs to the dataset as new training
/// samples. Feedback samples are exempt from the strength ceiling and are
/// recorded in `feedback_indices`; near-duplicates of existing samples
/// (Euclidean distance < 1e-9) are skipped with a notice. Samples join the
/// training side of any existing split.
pub fn feedback(mut dataset: Dataset, results: &[DesignResult], k: usize) -> Dataset {
    for r in results.iter().take(k) {
        let duplicate = dataset.samples.iter().any(|s| {
            let d2: f64 = s
                .c
                .as_slice()
                .iter()
                .zip(r.c_opt.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() < DUPLICATE_TOL
        });
        if duplicate {
            log::info!(
                "feedback: skipping start {} (duplicate of an existing sample)",
                r.start_id
            );
            continue;
        }
        dataset.samples.push(Sample {
            c: r.c_opt.clone(),
            strength: r.verified_strength,
        });
        dataset.feedback_indices.push(dataset.samples.len() - 1);
        if let Some(split) = &mut dataset.split {
            split.test.push(false);
        }
    }
    dataset
}

/// One fibril of the radial compliance profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub fibril_id: usize,
    /// Center distance over the characteristic radius (0 for a lone fibril).
    pub r_over_r: f64,
    pub compliance: f64,
    /// `(C - C_min) / (C_max - C_min)`; `None` when the design has no
    /// spread to normalize by.
    pub normalized: Option<f64>,
}

/// Radial organization summary of one design on one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub rows: Vec<ProfileRow>,
    /// Mean raw compliance over fibrils with r/R < 0.2 (None when empty).
    pub inner_mean: Option<f64>,
    /// Mean raw compliance over fibrils with r/R > 0.8 (None when empty).
    pub outer_mean: Option<f64>,
    /// Spearman rank correlation between r/R and compliance.
    pub spearman: Option<f64>,
}

impl ProfileReport {
    /// CSV rows `fibril_id,r_over_R,compliance,compliance_normalized`; the
    /// normalized field is left empty when undefined.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "fibril_id,r_over_R,compliance,compliance_normalized")?;
        for row in &self.rows {
            match row.normalized {
                Some(nz) => writeln!(
                    w,
                    "{},{},{},{}",
                    row.fibril_id, row.r_over_r, row.compliance, nz
                )?,
                None => writeln!(w, "{},{},{},", row.fibril_id, row.r_over_r, row.compliance)?,
            }
        }
        Ok(())
    }
}

/// Radial profile of a design: per-fibril r/R, raw and range-normalized
/// compliance, inner/outer means, and the rank correlation between radius
/// and compliance.
pub fn profile_report(c: &DesignVector, layout: &FibrilArray) -> Result<ProfileReport> {
    if c.len() != layout.n() {
        return Err(Error::InvalidDesign(format!(
            "design length {} does not match layout size {}",
            c.len(),
            layout.n()
        )));
    }
    let big_r = layout.characteristic_radius();
    let radii: Vec<f64> = layout
        .positions()
        .iter()
        .map(|p| {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if big_r > 0.0 {
                r / big_r
            } else {
                0.0
            }
        })
        .collect();

    let vals = c.as_slice();
    let c_min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = c_max - c_min;
    let normalizable = range > f64::EPSILON * c_max.abs().max(1.0);

    let rows: Vec<ProfileRow> = vals
        .iter()
        .enumerate()
        .map(|(i, &v)| ProfileRow {
            fibril_id: i,
            r_over_r: radii[i],
            compliance: v,
            normalized: normalizable.then(|| (v - c_min) / range),
        })
        .collect();

    let region_mean = |pred: &dyn Fn(f64) -> bool| {
        let picked: Vec<f64> = rows
            .iter()
            .filter(|r| pred(r.r_over_r))
            .map(|r| r.compliance)
            .collect();
        if picked.is_empty() {
            None
        } else {
            Some(picked.iter().sum::<f64>() / picked.len() as f64)
        }
    };
    Ok(ProfileReport {
        inner_mean: region_mean(&|r| r < 0.2),
        outer_mean: region_mean(&|r| r > 0.8),
        spearman: spearman(&radii, vals),
        rows,
    })
}

/// Midranks with average ties.
fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied values share the average of their span.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` when fewer than two points or either
/// variable has no rank variance.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (midranks(x), midranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
