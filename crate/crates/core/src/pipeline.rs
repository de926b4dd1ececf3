//! Stage orchestration behind the command-line tool.
//!
//! Each command reads the previous stage's files from the configured output
//! directory, so a full run is `simulate`/`dataset` → `train` → `design` →
//! `report`. All randomness derives from the master seed via fixed per-stage
//! tags, and no output embeds a timestamp, so a rerun with the same config
//! reproduces every artifact byte for byte.

use crate::config::{RunConfig, TrainStageConfig};
use crate::contact_mechanics::DesignVector;
use crate::dataset::{self, Dataset, GenerateOptions};
use crate::error::{Error, Result};
use crate::inverse_design::{
    feedback, optimize, profile_report, DesignProblem, DesignResult,
};
use crate::seeding::{stage_seed, stream_rng, Stage};
use crate::surrogate::{
    design_matrix, fit_linear, fit_polynomial3, fit_rbf, kfold_cv_grid, load_model, metrics,
    mlp_train, save_model, write_train_log, Metrics, Predictor, SavedModel, Standardizer,
    TrainConfig, TrainOutcome,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Absolute predicted-vs-actual band used in the scatter report.
pub const SCATTER_BAND: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    command: String,
    config_sha256: String,
    master_seed: u64,
    tool_version: String,
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        config_sha256: cfg.sha256(),
        master_seed: cfg.master_seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    save_json(&dir.join("manifest.json"), &manifest)
}

fn stage_path(cfg: &RunConfig, stage: &str) -> PathBuf {
    cfg.output_dir.join(stage)
}

fn require_stage(cfg: &RunConfig, stage: &str, marker: &str) -> Result<PathBuf> {
    let dir = stage_path(cfg, stage);
    if !dir.join(marker).exists() {
        return Err(Error::MissingStage {
            stage: stage.to_string(),
            path: dir.display().to_string(),
        });
    }
    Ok(dir)
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

fn write_csv(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    body(&mut w).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Single-column compliance file: header `compliance`, one value per line.
fn read_compliance_csv(path: &Path, expected_len: usize) -> Result<DesignVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "compliance" => {}
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                location: "line 1".into(),
                message: "expected header `compliance`".into(),
            })
        }
    }
    let mut values = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line.trim().parse().map_err(|e| Error::Parse {
            path: path.display().to_string(),
            location: format!("line {}", i + 1),
            message: format!("bad compliance value: {e}"),
        })?;
        values.push(v);
    }
    if values.len() != expected_len {
        return Err(Error::Parse {
            path: path.display().to_string(),
            location: "end of file".into(),
            message: format!(
                "expected {expected_len} compliance values, found {}",
                values.len()
            ),
        });
    }
    DesignVector::new(values)
}

/// Simulate one detachment trace and write its event, polyline, layout, and
/// summary files.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let sim = cfg.simulate.clone().unwrap_or_default();
    let layout = cfg.layout.build()?;
    let design = match &sim.compliance_csv {
        Some(path) => read_compliance_csv(path, layout.n())?,
        None => match sim.mean_c {
            Some(c) => DesignVector::uniform(c, layout.n())?,
            None => DesignVector::new(layout.template_compliances())?,
        },
    };
    let trace = crate::contact_mechanics::simulate_detachment(
        &layout,
        &design,
        sim.beta_x,
        sim.beta_y,
    )?;

    let dir = stage_path(cfg, "simulate");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_csv(&dir.join("events.csv"), |w| trace.write_events_csv(w))?;
    write_csv(&dir.join("polyline.csv"), |w| trace.write_polyline_csv(w))?;
    write_csv(&dir.join("layout.csv"), |w| layout.write_layout_csv(w))?;
    save_json(&dir.join("summary.json"), &trace.summary())?;
    write_manifest(&dir, "simulate", cfg)
}

/// Generate, split, and persist the labeled dataset.
pub fn cmd_dataset(cfg: &RunConfig) -> Result<()> {
    let dcfg = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `dataset` section".into()))?;
    let layout = cfg.layout.build()?;
    let mean_c = dcfg
        .mean_c
        .unwrap_or_else(|| layout.template_compliances()[0]);
    let bounds = dcfg
        .bounds
        .map(|b| (b[0], b[1]))
        .unwrap_or((mean_c / 10.0, mean_c * 10.0));
    let opts = GenerateOptions {
        n_target: dcfg.n_samples,
        mean_c,
        bounds,
        filter_ceiling: dcfg.filter_ceiling,
        style: dcfg.style,
        acceptance_floor: dcfg.acceptance_floor,
        probe_batch: dcfg.probe_batch,
    };
    let mut ds = dataset::generate(&layout, &opts, stage_seed(cfg.master_seed, Stage::Dataset))?;
    if dcfg.test_fraction > 0.0 {
        dataset::split(
            &mut ds,
            dcfg.test_fraction,
            stage_seed(cfg.master_seed, Stage::Split),
        )?;
    }
    let dir = stage_path(cfg, "dataset");
    dataset::save(&ds, &dir)?;
    write_manifest(&dir, "dataset", cfg)
}

/// Median pairwise distance between (at most 256) standardized inputs; the
/// default RBF kernel width.
pub fn median_pairwise_distance(std: &Standardizer, x: &[Vec<f64>]) -> f64 {
    let m = x.len().min(256);
    let z: Vec<Vec<f64>> = x[..m].iter().map(|r| std.apply(r)).collect();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let d2: f64 = z[i]
                .iter()
                .zip(&z[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let median = dists[dists.len() / 2];
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

struct ComparisonRow {
    name: &'static str,
    parameters: usize,
    train: Metrics,
    test: Option<Metrics>,
}

fn comparison_row(
    name: &'static str,
    parameters: usize,
    model: &dyn Predictor,
    x_train: &[Vec<f64>],
    y_train: &[f64],
    x_test: &[Vec<f64>],
    y_test: &[f64],
) -> Result<ComparisonRow> {
    let predict_all = |xs: &[Vec<f64>]| -> Result<Vec<f64>> {
        xs.iter().map(|r| model.predict(r)).collect()
    };
    let train = metrics(y_train, &predict_all(x_train)?)?;
    let test = if x_test.is_empty() {
        None
    } else {
        Some(metrics(y_test, &predict_all(x_test)?)?)
    };
    Ok(ComparisonRow {
        name,
        parameters,
        train,
        test,
    })
}

/// Fit the four predictor families, select the MLP architecture (optionally
/// by cross-validation), and write models plus a comparison table.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let tcfg = cfg.train.clone().unwrap_or_default();
    let ds_dir = require_stage(cfg, "dataset", "meta.json")?;
    let ds = dataset::load(&ds_dir)?;
    let (train_idx, test_idx) = ds.train_test_indices();
    if train_idx.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 training samples, have {}",
            train_idx.len()
        )));
    }
    let std = Standardizer::new(ds.mean_compliance)?;
    let (x_train, y_train) = design_matrix(&ds, &train_idx);
    let (x_test, y_test) = design_matrix(&ds, &test_idx);
    let train_seed = stage_seed(cfg.master_seed, Stage::Train);

    let linear = fit_linear(&std, &x_train, &y_train, tcfg.ridge)?;
    let poly3 = fit_polynomial3(&std, &x_train, &y_train, tcfg.ridge)?;
    let rbf_width = tcfg
        .rbf_width
        .unwrap_or_else(|| median_pairwise_distance(&std, &x_train));
    log::info!("rbf: {} centers, width {rbf_width:.4}", tcfg.rbf_centers);
    let rbf = fit_rbf(
        &std,
        &x_train,
        &y_train,
        tcfg.rbf_centers,
        rbf_width,
        tcfg.ridge,
        train_seed.wrapping_add(1),
    )?;

    let dir = stage_path(cfg, "train");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            idx.iter().map(|&i| x_train[i].clone()).collect(),
            idx.iter().map(|&i| y_train[i]).collect(),
        )
    };

    // Architecture search over depth x width when requested.
    struct Cell {
        depth: usize,
        width: usize,
    }
    impl std::fmt::Display for Cell {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            write!(f, "{}x{}", self.depth, self.width)
        }
    }
    let hidden = match &tcfg.cv {
        None => tcfg.hidden.clone(),
        Some(cv) => {
            let cells: Vec<Cell> = cv
                .depths
                .iter()
                .flat_map(|&depth| cv.widths.iter().map(move |&width| Cell { depth, width }))
                .collect();
            let n_in = ds.n_features();
            let mlp_params = |c: &Cell| {
                let mut sizes = vec![n_in];
                sizes.extend(std::iter::repeat(c.width).take(c.depth));
                sizes.push(1);
                sizes.windows(2).map(|s| s[0] * s[1] + s[1]).sum::<usize>()
            };
            let cv_cfg = TrainConfig {
                epochs: cv.epochs,
                batch_size: tcfg.batch_size,
                learning_rate: tcfg.learning_rate,
                schedule: tcfg.lr_schedule,
                seed: train_seed.wrapping_add(3),
                ..TrainConfig::default()
            };
            let outcome = kfold_cv_grid(
                &cells,
                x_train.len(),
                cv.folds,
                train_seed.wrapping_add(4),
                mlp_params,
                |c, tr, val| {
                    let (xs, ys) = pick(tr);
                    let (xv, yv) = pick(val);
                    let out =
                        mlp_train(&std, &xs, &ys, &xv, &yv, &vec![c.width; c.depth], &cv_cfg)?;
                    Ok(out.val_metrics.mse)
                },
            )?;
            write_csv(&dir.join("cv_table.csv"), |w| outcome.write_csv(w))?;
            let best = &cells[outcome.best_cell];
            vec![best.width; best.depth]
        }
    };

    let out = fit_stage_mlp(&ds, &tcfg, &hidden, tcfg.epochs, train_seed)?;
    write_csv(&dir.join("mlp_training_log.csv"), |w| {
        write_train_log(&out.log, w)
    })?;

    let rows = [
        comparison_row(
            "linear",
            linear.n_parameters(),
            &linear,
            &x_train,
            &y_train,
            &x_test,
            &y_test,
        )?,
        comparison_row(
            "poly3",
            poly3.n_parameters(),
            &poly3,
            &x_train,
            &y_train,
            &x_test,
            &y_test,
        )?,
        comparison_row(
            "rbf",
            rbf.n_parameters(),
            &rbf,
            &x_train,
            &y_train,
            &x_test,
            &y_test,
        )?,
        comparison_row(
            "mlp",
            out.model.n_parameters(),
            &out.model,
            &x_train,
            &y_train,
            &x_test,
            &y_test,
        )?,
    ];
    write_csv(&dir.join("comparison.csv"), |w| {
        writeln!(w, "model,parameters,train_mse,train_r2,test_mse,test_r2")?;
        for row in &rows {
            let fmt_r2 = |m: &Metrics| m.r2.map(|v| v.to_string()).unwrap_or_default();
            let (test_mse, test_r2) = match &row.test {
                Some(m) => (m.mse.to_string(), fmt_r2(m)),
                None => (String::new(), String::new()),
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.name,
                row.parameters,
                row.train.mse,
                fmt_r2(&row.train),
                test_mse,
                test_r2
            )?;
        }
        Ok(())
    })?;

    save_model(&SavedModel::Regression(linear), &dir.join("linear.json"))?;
    save_model(&SavedModel::Regression(poly3), &dir.join("poly3.json"))?;
    save_model(&SavedModel::Regression(rbf), &dir.join("rbf.json"))?;
    save_model(&SavedModel::Mlp(out.model), &dir.join("mlp.json"))?;
    write_manifest(&dir, "train", cfg)
}

/// Carve a validation subset off the dataset's training split and fit an
/// MLP on the remainder, checkpointing on validation loss. One `seed`
/// drives both the carve shuffle and the weight initialization, so a
/// single value pins the whole fit; the train stage passes the stage seed
/// and design-feedback refits pass per-round offsets of it.
pub fn fit_stage_mlp(
    ds: &Dataset,
    tcfg: &TrainStageConfig,
    hidden: &[usize],
    epochs: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    let (train_idx, _) = ds.train_test_indices();
    if train_idx.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 training samples, have {}",
            train_idx.len()
        )));
    }
    let std = Standardizer::new(ds.mean_compliance)?;
    let (x_train, y_train) = design_matrix(ds, &train_idx);

    let mut order: Vec<usize> = (0..x_train.len()).collect();
    let mut rng = stream_rng(seed, 2);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_val = ((tcfg.val_fraction * x_train.len() as f64).round() as usize)
        .clamp(1, x_train.len() - 1);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            idx.iter().map(|&i| x_train[i].clone()).collect(),
            idx.iter().map(|&i| y_train[i]).collect(),
        )
    };
    let (x_val, y_val) = pick(&order[..n_val]);
    let (x_fit, y_fit) = pick(&order[n_val..]);

    let cfg = TrainConfig {
        epochs,
        batch_size: tcfg.batch_size,
        learning_rate: tcfg.learning_rate,
        schedule: tcfg.lr_schedule,
        seed,
        ..TrainConfig::default()
    };
    mlp_train(&std, &x_fit, &y_fit, &x_val, &y_val, hidden, &cfg)
}

fn write_ranked_csv(path: &Path, results: &[DesignResult]) -> Result<()> {
    write_csv(path, |w| {
        writeln!(w, "rank,predicted,verified")?;
        for (i, r) in results.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                i + 1,
                r.predicted_strength,
                r.verified_strength
            )?;
        }
        Ok(())
    })
}

fn write_profiles(dir: &Path, results: &[DesignResult], ds: &Dataset, top_k: usize) -> Result<()> {
    for (i, r) in results.iter().take(top_k).enumerate() {
        let report = profile_report(&r.c_opt, &ds.layout)?;
        write_csv(&dir.join(format!("profile_rank_{}.csv", i + 1)), |w| {
            report.write_csv(w)
        })?;
    }
    Ok(())
}

/// Run multi-start projected gradient ascent against the trained MLP and
/// write ranked, verified results.
pub fn cmd_design(cfg: &RunConfig) -> Result<()> {
    let dcfg = cfg.design.clone().unwrap_or_default();
    let ds_dir = require_stage(cfg, "dataset", "meta.json")?;
    let ds = dataset::load(&ds_dir)?;
    let train_dir = require_stage(cfg, "train", "mlp.json")?;
    let model = load_model(&train_dir.join("mlp.json"))?;

    let mut problem = DesignProblem::new(&ds.layout, &model, ds.mean_compliance, ds.bounds);
    problem.n_starts = dcfg.n_starts;
    problem.max_iters = dcfg.max_iters;
    problem.step_size = dcfg.step_size;
    problem.tol = dcfg.tol;
    problem.enforce_mean = dcfg.enforce_mean;
    problem.seed = stage_seed(cfg.master_seed, Stage::Design);
    let results = optimize(&problem)?;

    let dir = stage_path(cfg, "design");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    save_json(&dir.join("results.json"), &results)?;
    write_ranked_csv(&dir.join("ranked.csv"), &results)?;
    write_profiles(&dir, &results, &ds, dcfg.top_k)?;

    if dcfg.feedback_k > 0 {
        let grown = feedback(ds, &results, dcfg.feedback_k);
        let fb_dir = dir.join("dataset_feedback");
        dataset::save(&grown, &fb_dir)?;
    }
    write_manifest(&dir, "design", cfg)
}

/// Emit the figure-data files: predicted-vs-actual scatter with the 3%
/// band, ranked strengths, per-rank radial profiles, and a summary.
pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let ds_dir = require_stage(cfg, "dataset", "meta.json")?;
    let ds = dataset::load(&ds_dir)?;
    let train_dir = require_stage(cfg, "train", "mlp.json")?;
    let model = load_model(&train_dir.join("mlp.json"))?;
    let design_dir = require_stage(cfg, "design", "results.json")?;
    let results: Vec<DesignResult> = load_json(&design_dir.join("results.json"))?;
    if results.is_empty() {
        return Err(Error::EmptyResults(
            "design produced no results; nothing to report".into(),
        ));
    }

    let (_, test_idx) = ds.train_test_indices();
    if test_idx.is_empty() {
        return Err(Error::EmptyResults(
            "dataset has no held-out samples; rerun the dataset stage with test_fraction > 0"
                .into(),
        ));
    }
    let (x_test, y_test) = design_matrix(&ds, &test_idx);

    let dir = stage_path(cfg, "report");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut n_within = 0usize;
    write_csv(&dir.join("scatter.csv"), |w| {
        writeln!(w, "sample_index,actual,predicted,within_band")?;
        for (pos, &idx) in test_idx.iter().enumerate() {
            let predicted = model
                .predict(&x_test[pos])
                .map_err(std::io::Error::other)?;
            let within = (predicted - y_test[pos]).abs() <= SCATTER_BAND;
            n_within += within as usize;
            writeln!(w, "{idx},{},{predicted},{within}", y_test[pos])?;
        }
        Ok(())
    })?;

    write_ranked_csv(&dir.join("ranked.csv"), &results)?;
    let top_k = cfg.design.clone().unwrap_or_default().top_k;
    write_profiles(&dir, &results, &ds, top_k)?;

    let top = &results[0];
    let profile = profile_report(&top.c_opt, &ds.layout)?;
    let softer_periphery = match (profile.inner_mean, profile.outer_mean, profile.spearman) {
        (Some(inner), Some(outer), Some(rho)) => outer > inner && rho > 0.0,
        _ => false,
    };
    let summary = serde_json::json!({
        "n_test": test_idx.len(),
        "n_within_band": n_within,
        "fraction_within_band": n_within as f64 / test_idx.len() as f64,
        "band": SCATTER_BAND,
        "n_results": results.len(),
        "top": {
            "verified_strength": top.verified_strength,
            "predicted_strength": top.predicted_strength,
            "discrepancy": top.discrepancy(),
            "discrepancy_flagged": top.discrepancy_flagged(),
            "spearman_radius_compliance": profile.spearman,
            "inner_mean_compliance": profile.inner_mean,
            "outer_mean_compliance": profile.outer_mean,
            "softer_periphery": softer_periphery,
        },
    });
    save_json(&dir.join("summary.json"), &summary)?;
    write_manifest(&dir, "report", cfg)
}
