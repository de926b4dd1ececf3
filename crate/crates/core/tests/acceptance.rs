//! Numbered acceptance checks for the whole workspace: exact small-system
//! oracles, equivalence of the two matrix-update paths, full-scale uniform
//! baselines, simulator convergence, surrogate quality and ordering,
//! inverse-design efficacy, designed-profile structure, and byte-level
//! determinism of the CLI pipeline.
//!
//! Each check prints `criterion N: PASS` (or FAIL) with a short summary;
//! run `cargo test --test acceptance -- --nocapture` to see every line.

use fibril_core::array_geometry::{FibrilArray, FibrilMaterial, FibrilSpec, SELF_TERM_COEF};
use fibril_core::contact_mechanics::{
    simulate_detachment, simulate_detachment_with, stepped_simulate, ComplianceSystem,
    DesignVector, SimOptions, UpdateMode,
};
use fibril_core::dataset::{self, sample_design, Dataset, GenerateOptions, SampleStyle};
use fibril_core::inverse_design::{self, DesignProblem, DesignResult};
use fibril_core::pipeline::median_pairwise_distance;
use fibril_core::seeding::{stage_seed, stream_rng, Stage};
use fibril_core::surrogate::{
    design_matrix, fit_linear, fit_polynomial3, fit_rbf, metrics, mlp_train, LrSchedule, MlpModel,
    Predictor, Standardizer, TrainConfig,
};
use once_cell::sync::Lazy;
use rand::Rng;
use std::time::Instant;

/// Master seed for every shared artifact; the bundled desk configs use the
/// same value so numbers here match a CLI run of those configs.
const MASTER_SEED: u64 = 2024;
/// Epoch budgets for the two reference architectures.
const MLP6_EPOCHS: usize = 3000;
const MLP1_EPOCHS: usize = 2000;

/// Criteria run one at a time even if the harness is multithreaded, so the
/// per-criterion runtime budgets measure the work and not the contention.
static GATE: std::sync::Mutex<()> = std::sync::Mutex::new(());

fn report(id: u32, what: &str, body: impl FnOnce()) {
    let _serial = GATE.lock().unwrap_or_else(std::sync::PoisonError::into_inner);
    let t0 = Instant::now();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(body)) {
        Ok(()) => println!(
            "criterion {id}: PASS ({:.1}s) — {what}",
            t0.elapsed().as_secs_f64()
        ),
        Err(e) => {
            println!("criterion {id}: FAIL — {what}");
            std::panic::resume_unwind(e);
        }
    }
}

fn template_material() -> FibrilMaterial {
    FibrilMaterial::new(1.0, 5.0, 0.75).expect("template material")
}

// ---------------------------------------------------------------------------
// Shared desk-scale artifacts: labeled dataset + the full surrogate ladder.
// Built once and reused by criteria 6 through 9.
// ---------------------------------------------------------------------------

struct TrainedDesk {
    layout: FibrilArray,
    mean_c: f64,
    bounds: (f64, f64),
    dataset: Dataset,
    test_idx: Vec<usize>,
    uniform_strength: f64,
    mlp6: MlpModel,
    /// Comparison-model scores (linear, poly3, RBF, shallow MLP); only the
    /// circle build pays for these — the other layouts just need the deep MLP.
    ladder_r2: Option<[f64; 4]>,
    mlp6_r2: f64,
    build_seconds: f64,
}

fn build_trained(layout: FibrilArray, with_ladder: bool) -> TrainedDesk {
    let t0 = Instant::now();
    let mean_c = layout.template_compliances()[0];
    let opts = GenerateOptions {
        style: SampleStyle::RadialSmooth,
        ..GenerateOptions::around_mean(2500, mean_c)
    };
    let mut ds = dataset::generate(&layout, &opts, stage_seed(MASTER_SEED, Stage::Dataset))
        .expect("dataset generation");
    dataset::split(&mut ds, 0.2, stage_seed(MASTER_SEED, Stage::Split)).expect("split");
    let (train_idx, test_idx) = ds.train_test_indices();
    let (x_train, y_train) = design_matrix(&ds, &train_idx);
    let (x_test, y_test) = design_matrix(&ds, &test_idx);

    let std = Standardizer::new(mean_c).expect("standardizer");
    let train_seed = stage_seed(MASTER_SEED, Stage::Train);

    // Validation carve-out, same scheme as the train stage of the CLI.
    let mut order: Vec<usize> = (0..x_train.len()).collect();
    let mut rng = stream_rng(train_seed, 2);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_val = ((0.1 * x_train.len() as f64).round() as usize).clamp(1, x_train.len() - 1);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            idx.iter().map(|&i| x_train[i].clone()).collect(),
            idx.iter().map(|&i| y_train[i]).collect(),
        )
    };
    let (x_val, y_val) = pick(&order[..n_val]);
    let (x_fit, y_fit) = pick(&order[n_val..]);

    let cfg6 = TrainConfig {
        epochs: MLP6_EPOCHS,
        batch_size: 32,
        learning_rate: 1e-3,
        schedule: LrSchedule::Constant,
        seed: train_seed,
        ..TrainConfig::default()
    };
    let cfg1 = TrainConfig {
        epochs: MLP1_EPOCHS,
        ..cfg6.clone()
    };
    let mlp6 = mlp_train(&std, &x_fit, &y_fit, &x_val, &y_val, &[64; 6], &cfg6)
        .expect("deep mlp training")
        .model;

    let test_r2 = |p: &dyn Predictor| -> f64 {
        let preds: Vec<f64> = x_test
            .iter()
            .map(|c| p.predict(c).expect("prediction"))
            .collect();
        metrics(&y_test, &preds)
            .expect("metrics")
            .r2
            .expect("label variance")
    };
    let mlp6_r2 = test_r2(&mlp6);

    let ladder_r2 = with_ladder.then(|| {
        let linear = fit_linear(&std, &x_train, &y_train, 1e-6).expect("linear fit");
        let poly3 = fit_polynomial3(&std, &x_train, &y_train, 1e-6).expect("poly3 fit");
        let width = median_pairwise_distance(&std, &x_train);
        let rbf = fit_rbf(
            &std,
            &x_train,
            &y_train,
            200,
            width,
            1e-6,
            train_seed.wrapping_add(1),
        )
        .expect("rbf fit");
        let mlp1 = mlp_train(&std, &x_fit, &y_fit, &x_val, &y_val, &[64], &cfg1)
            .expect("shallow mlp training")
            .model;
        [
            test_r2(&linear),
            test_r2(&poly3),
            test_r2(&rbf),
            test_r2(&mlp1),
        ]
    });

    let n = layout.n();
    let uniform_strength = simulate_detachment(
        &layout,
        &DesignVector::uniform(mean_c, n).expect("uniform design"),
        0.0,
        0.0,
    )
    .expect("uniform simulation")
    .strength;

    TrainedDesk {
        layout,
        mean_c,
        bounds: opts.bounds,
        dataset: ds,
        test_idx,
        uniform_strength,
        mlp6,
        ladder_r2,
        mlp6_r2,
        build_seconds: t0.elapsed().as_secs_f64(),
    }
}

static CIRCLE: Lazy<TrainedDesk> = Lazy::new(|| {
    build_trained(
        FibrilArray::build_circle(16.5, 3.0, template_material()).unwrap(),
        true,
    )
});
static SQUARE: Lazy<TrainedDesk> = Lazy::new(|| {
    build_trained(
        FibrilArray::build_square(13.5, 3.0, template_material()).unwrap(),
        false,
    )
});
static TRIANGLE: Lazy<TrainedDesk> = Lazy::new(|| {
    build_trained(
        FibrilArray::build_triangle(24.0, 3.0, template_material()).unwrap(),
        false,
    )
});

fn run_design(d: &TrainedDesk) -> (Vec<DesignResult>, f64) {
    let t0 = Instant::now();
    let mut problem = DesignProblem::new(&d.layout, &d.mlp6, d.mean_c, d.bounds);
    problem.seed = stage_seed(MASTER_SEED, Stage::Design);
    let results = inverse_design::optimize(&problem).expect("design optimization");
    (results, t0.elapsed().as_secs_f64())
}

static CIRCLE_DESIGNS: Lazy<(Vec<DesignResult>, f64)> = Lazy::new(|| run_design(&CIRCLE));
static SQUARE_DESIGNS: Lazy<(Vec<DesignResult>, f64)> = Lazy::new(|| run_design(&SQUARE));
static TRIANGLE_DESIGNS: Lazy<(Vec<DesignResult>, f64)> = Lazy::new(|| run_design(&TRIANGLE));

// ---------------------------------------------------------------------------
// 1. Exact small-system oracles.
// ---------------------------------------------------------------------------

#[test]
fn c01_small_system_oracles() {
    report(1, "single fibril and symmetric pair closed forms", || {
        let t0 = Instant::now();
        let mat = template_material();
        let c_ext = 20.0 / 3.0;

        let single = FibrilArray::build_circle(0.5, 3.0, mat).expect("single layout");
        assert_eq!(single.n(), 1);
        assert!((single.template_compliances()[0] - c_ext).abs() < 1e-12);
        let tr = simulate_detachment(
            &single,
            &DesignVector::uniform(c_ext, 1).unwrap(),
            0.0,
            0.0,
        )
        .expect("single simulation");
        assert_eq!(tr.strength, 1.0, "single-fibril strength must be exact");
        assert_eq!(tr.events.len(), 1);

        let pair = FibrilArray::from_fibrils(vec![
            FibrilSpec::at(-1.5, 0.0, mat),
            FibrilSpec::at(1.5, 0.0, mat),
        ])
        .expect("pair layout");
        let tr = simulate_detachment(
            &pair,
            &DesignVector::uniform(c_ext, 2).unwrap(),
            0.0,
            0.0,
        )
        .expect("pair simulation");
        assert!(
            (tr.strength - 1.0).abs() < 1e-12,
            "pair strength {} should be 1",
            tr.strength
        );
        // Closed form from the 2x2 system: both fibrils let go at
        // D = C11 + C12 with C11 = self-term + extension, C12 = 1/r12.
        let d_expect = (SELF_TERM_COEF + c_ext) + 1.0 / 3.0;
        for e in &tr.events {
            assert!(
                (e.d_event - d_expect).abs() < 1e-10,
                "detachment separation {} vs {}",
                e.d_event,
                d_expect
            );
        }
        assert!(t0.elapsed().as_secs_f64() < 1.0, "oracle runtime budget");
    });
}

// ---------------------------------------------------------------------------
// 2. Schur downdates match full re-inversion.
// ---------------------------------------------------------------------------

/// Random overlap-free layout on a jittered grid, 2..=50 fibrils.
fn random_small_array(rng: &mut impl Rng) -> FibrilArray {
    let mat = template_material();
    let n: usize = rng.gen_range(2..=50);
    let side = 8usize; // 64 candidate cells on a spacing-3 grid
    let mut cells: Vec<usize> = (0..side * side).collect();
    for i in (1..cells.len()).rev() {
        let j = rng.gen_range(0..=i);
        cells.swap(i, j);
    }
    let fibrils = cells[..n]
        .iter()
        .map(|&cell| {
            let gx = (cell % side) as f64 * 3.0;
            let gy = (cell / side) as f64 * 3.0;
            FibrilSpec::at(
                gx + rng.gen_range(-0.4..0.4),
                gy + rng.gen_range(-0.4..0.4),
                mat,
            )
        })
        .collect();
    FibrilArray::from_fibrils(fibrils).expect("random layout")
}

fn frobenius(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn c02_downdates_match_reinversion() {
    report(2, "100 random arrays: downdate vs refactor to 1e-8", || {
        let t0 = Instant::now();
        let mut rng = stream_rng(4242, 0);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let arr = random_small_array(&mut rng);
            let n = arr.n();
            let design = DesignVector::new(
                (0..n).map(|_| rng.gen_range(2.0..15.0)).collect(),
            )
            .unwrap();

            // Identical random removal sequence through both update paths.
            let mut down = ComplianceSystem::assemble(&arr, &design).unwrap();
            down.set_update_mode(UpdateMode::SchurDowndate);
            let mut full = ComplianceSystem::assemble(&arr, &design).unwrap();
            full.set_update_mode(UpdateMode::Refactor);
            let mut ids: Vec<usize> = (0..n).collect();
            for i in (1..ids.len()).rev() {
                let j = rng.gen_range(0..=i);
                ids.swap(i, j);
            }
            for &id in &ids[..n - 1] {
                down.detach(id).unwrap();
                full.detach(id).unwrap();
                let ka = down.stiffness_matrix();
                let kb = full.stiffness_matrix();
                let rel = frobenius(&(ka - &kb)) / frobenius(&kb);
                worst = worst.max(rel);
                assert!(rel < 1e-8, "stiffness drift {rel} after removing {id}");
            }

            // Event-driven traces agree between the two paths.
            let opts_down = SimOptions {
                update: UpdateMode::SchurDowndate,
                ..SimOptions::default()
            };
            let opts_full = SimOptions {
                update: UpdateMode::Refactor,
                ..SimOptions::default()
            };
            let ta = simulate_detachment_with(&arr, &design, 0.0, 0.0, &opts_down).unwrap();
            let tb = simulate_detachment_with(&arr, &design, 0.0, 0.0, &opts_full).unwrap();
            assert_eq!(ta.detachment_order(), tb.detachment_order());
            assert!((ta.strength - tb.strength).abs() <= 1e-10 * tb.strength);
            for (ea, eb) in ta.events.iter().zip(&tb.events) {
                assert!((ea.d_event - eb.d_event).abs() <= 1e-8 * (1.0 + eb.d_event));
            }
        }
        let dt = t0.elapsed().as_secs_f64();
        assert!(dt < 30.0, "downdate sweep took {dt:.1}s (budget 30s)");
        println!("  worst stiffness deviation {worst:.2e}");
    });
}

// ---------------------------------------------------------------------------
// 3. Full-scale uniform baselines.
// ---------------------------------------------------------------------------

#[test]
fn c03_full_scale_uniform_baselines() {
    report(3, "uniform circle 0.58 and square 0.53 within 0.05", || {
        // Aspect ratio h = 7a lands both baselines (see README notes); the
        // effective modulus keeps nu = 0.5 and matching half-space moduli.
        let mat = FibrilMaterial::new(1.0, 7.0, 0.75).expect("baseline material");

        let t0 = Instant::now();
        let circle = FibrilArray::build_circle(75.0, 3.0, mat).unwrap();
        assert_eq!(circle.n(), 1961);
        let c = circle.template_compliances()[0];
        let tr = simulate_detachment(
            &circle,
            &DesignVector::uniform(c, circle.n()).unwrap(),
            0.0,
            0.0,
        )
        .unwrap();
        let circle_secs = t0.elapsed().as_secs_f64();
        assert!(
            (tr.strength - 0.58).abs() <= 0.05,
            "circle strength {} vs 0.58 +/- 0.05",
            tr.strength
        );
        assert!(circle_secs < 600.0, "circle took {circle_secs:.0}s");

        let t0 = Instant::now();
        let square = FibrilArray::build_square(75.0, 3.0, mat).unwrap();
        assert_eq!(square.n(), 2601);
        let tr = simulate_detachment(
            &square,
            &DesignVector::uniform(c, square.n()).unwrap(),
            0.0,
            0.0,
        )
        .unwrap();
        let square_secs = t0.elapsed().as_secs_f64();
        assert!(
            (tr.strength - 0.53).abs() <= 0.05,
            "square strength {} vs 0.53 +/- 0.05",
            tr.strength
        );
        assert!(square_secs < 600.0, "square took {square_secs:.0}s");
    });
}

// ---------------------------------------------------------------------------
// 4. Stepped simulation converges to the event-driven result.
// ---------------------------------------------------------------------------

#[test]
fn c04_stepped_simulation_matches_event_driven() {
    report(4, "stepped dD=1e-4 within 1e-3 on 20 desk arrays", || {
        let layout = FibrilArray::build_circle(16.5, 3.0, template_material()).unwrap();
        let mean_c = layout.template_compliances()[0];
        let bounds = (mean_c / 10.0, 10.0 * mean_c);
        let mut rng = stream_rng(777, 0);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let c = sample_design(&layout, mean_c, bounds, SampleStyle::Mixed, &mut rng).unwrap();
            let exact = simulate_detachment(&layout, &c, 0.0, 0.0).unwrap();
            let stepped = stepped_simulate(&layout, &c, 0.0, 0.0, 1e-4).unwrap();
            let diff = (exact.strength - stepped.strength).abs();
            worst = worst.max(diff);
            assert!(
                diff <= 1e-3,
                "stepped vs event strength differ by {diff} (exact {})",
                exact.strength
            );
        }
        println!("  worst stepped deviation {worst:.2e}");
    });
}

// ---------------------------------------------------------------------------
// 5. MLP input gradients against finite differences.
// ---------------------------------------------------------------------------

#[test]
fn c05_mlp_gradients_match_finite_differences() {
    report(5, "100 random model/point pairs, rel err < 1e-4", || {
        let t0 = Instant::now();
        let mut rng = stream_rng(70, 0);
        let mut worst = 0.0f64;
        for trial in 0..100 {
            let dim = rng.gen_range(2..12);
            let depth = rng.gen_range(1..4);
            let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(4..32)).collect();
            let std = Standardizer::new(rng.gen_range(0.5..8.0)).unwrap();
            let model = MlpModel::new_random(dim, &hidden, std, 9000 + trial).unwrap();
            let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.2..8.0)).collect();
            let grad = model.input_gradient(&c).unwrap();
            for j in 0..dim {
                let h = 1e-5 * c[j].abs().max(1.0);
                let mut hi = c.clone();
                let mut lo = c.clone();
                hi[j] += h;
                lo[j] -= h;
                let fd =
                    (model.predict(&hi).unwrap() - model.predict(&lo).unwrap()) / (2.0 * h);
                let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst gradient error {worst:.2e}");
        let dt = t0.elapsed().as_secs_f64();
        assert!(dt < 10.0, "gradient sweep took {dt:.1}s (budget 10s)");
    });
}

// ---------------------------------------------------------------------------
// 6. Surrogate quality ladder on the desk-scale dataset.
// ---------------------------------------------------------------------------

#[test]
fn c06_surrogate_accuracy_ordering() {
    report(6, "test R2 ladder with deep MLP >= 0.99", || {
        let d = &*CIRCLE;
        let [linear_r2, poly3_r2, rbf_r2, mlp1_r2] =
            d.ladder_r2.expect("circle build includes the ladder");
        println!(
            "  R2: linear {:.4}, poly3 {:.4}, rbf {:.4}, mlp 1x64 {:.4}, mlp 6x64 {:.4}",
            linear_r2, poly3_r2, rbf_r2, mlp1_r2, d.mlp6_r2
        );
        assert!(linear_r2 < poly3_r2, "linear should trail poly3");
        assert!(poly3_r2 < rbf_r2, "poly3 should trail rbf");
        assert!(rbf_r2 < mlp1_r2, "rbf should trail the shallow mlp");
        assert!(mlp1_r2 <= d.mlp6_r2, "shallow mlp should not beat deep");
        assert!(
            d.mlp6_r2 >= 0.99,
            "deep mlp test R2 {} below 0.99",
            d.mlp6_r2
        );
        assert!(
            d.build_seconds < 1800.0,
            "dataset + training took {:.0}s (budget 30min)",
            d.build_seconds
        );
    });
}

// ---------------------------------------------------------------------------
// 7. Held-out prediction band.
// ---------------------------------------------------------------------------

#[test]
fn c07_heldout_predictions_within_band() {
    report(7, ">=95% of held-out predictions within 0.03", || {
        let d = &*CIRCLE;
        let (x_test, y_test) = design_matrix(&d.dataset, &d.test_idx);
        let mut within = 0usize;
        for (c, &y) in x_test.iter().zip(&y_test) {
            let p = d.mlp6.predict(c).expect("prediction");
            if (p - y).abs() <= 0.03 {
                within += 1;
            }
        }
        let frac = within as f64 / y_test.len() as f64;
        println!("  {within}/{} within the band ({frac:.3})", y_test.len());
        assert!(frac >= 0.95, "band fraction {frac:.3} below 0.95");
    });
}

// ---------------------------------------------------------------------------
// 8. Inverse-design efficacy on the three desk layouts.
// ---------------------------------------------------------------------------

fn check_design(
    name: &str,
    desk: &TrainedDesk,
    results: &[DesignResult],
    best_floor: f64,
    check_span: bool,
) {
    assert!(!results.is_empty(), "{name}: no design results");
    let best = &results[0];
    println!(
        "  {name}: best verified {:.4} (predicted {:.4}), uniform {:.4}",
        best.verified_strength, best.predicted_strength, desk.uniform_strength
    );
    assert!(
        best.verified_strength >= best_floor,
        "{name}: best verified {} below {best_floor}",
        best.verified_strength
    );
    assert!(
        best.verified_strength > desk.dataset.filter_ceiling,
        "{name}: design should beat every training label"
    );
    assert!(
        best.verified_strength > desk.uniform_strength,
        "{name}: design should beat the uniform baseline"
    );
    let top: Vec<f64> = results
        .iter()
        .take(5)
        .map(|r| r.verified_strength)
        .collect();
    assert_eq!(top.len(), 5, "{name}: need at least five ranked designs");
    for w in top.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{name}: ranking not monotone");
    }
    if check_span {
        let span = top[0] - top[4];
        assert!(span < 0.06, "{name}: top-5 span {span:.3} too wide");
    }
}

#[test]
fn c08_inverse_design_efficacy() {
    report(8, "optimized designs beat ceiling and baselines", || {
        check_design("circle", &CIRCLE, &CIRCLE_DESIGNS.0, 0.95, true);
        check_design("square", &SQUARE, &SQUARE_DESIGNS.0, 0.95, true);
        check_design("triangle", &TRIANGLE, &TRIANGLE_DESIGNS.0, 0.88, false);
        let secs = SQUARE.build_seconds
            + TRIANGLE.build_seconds
            + CIRCLE_DESIGNS.1
            + SQUARE_DESIGNS.1
            + TRIANGLE_DESIGNS.1;
        assert!(secs < 1800.0, "design stages took {secs:.0}s (budget 30min)");
    });
}

// ---------------------------------------------------------------------------
// 9. Softer periphery in the optimized designs.
// ---------------------------------------------------------------------------

#[test]
fn c09_softer_periphery_structure() {
    report(9, "outer compliance above inner, positive rank corr", || {
        for (name, desk, designs) in [
            ("circle", &*CIRCLE, &*CIRCLE_DESIGNS),
            ("square", &*SQUARE, &*SQUARE_DESIGNS),
        ] {
            let best = &designs.0[0];
            let profile =
                inverse_design::profile_report(&best.c_opt, &desk.layout).expect("profile");
            let inner = profile.inner_mean.expect("inner fibrils");
            let outer = profile.outer_mean.expect("outer fibrils");
            let rho = profile.spearman.expect("rank correlation");
            println!("  {name}: inner {inner:.3}, outer {outer:.3}, spearman {rho:.3}");
            assert!(
                outer > inner,
                "{name}: outer mean {outer} not above inner {inner}"
            );
            assert!(rho > 0.0, "{name}: spearman {rho} not positive");
        }
    });
}

// ---------------------------------------------------------------------------
// 10. Byte-identical rerun of the CLI pipeline.
// ---------------------------------------------------------------------------

fn run_stage(bin: &str, config: &std::path::Path, stage: &str) {
    let status = std::process::Command::new(bin)
        .args([stage, "--config"])
        .arg(config)
        .env("RUST_LOG", "warn")
        .status()
        .expect("spawn CLI");
    assert!(status.success(), "stage {stage} failed: {status}");
}

fn snapshot(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut files = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("read output dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .expect("relative path")
                    .to_string_lossy()
                    .into_owned();
                files.insert(rel, std::fs::read(&path).expect("read artifact"));
            }
        }
    }
    files
}

#[test]
fn c10_pipeline_reruns_byte_identical() {
    report(10, "single-threaded pipeline rerun is byte-identical", || {
        let bin = env!("CARGO_BIN_EXE_fibril");
        let scratch = tempfile::tempdir().expect("scratch dir");
        let out_dir = scratch.path().join("out");
        let config_path = scratch.path().join("config.json");
        let config = serde_json::json!({
            "output_dir": out_dir,
            "master_seed": MASTER_SEED,
            "threads": 1,
            "layout": { "kind": "circle", "shape": 16.5 },
            "simulate": {},
            "dataset": { "n_samples": 400, "style": "radial_smooth" },
            "train": { "epochs": 40 },
            "design": { "n_starts": 8, "max_iters": 300, "top_k": 3 }
        });
        std::fs::write(
            &config_path,
            serde_json::to_string_pretty(&config).unwrap(),
        )
        .expect("write config");

        let stages = ["simulate", "dataset", "train", "design", "report"];
        for stage in stages {
            run_stage(bin, &config_path, stage);
        }
        let first = snapshot(&out_dir);
        assert!(
            first.len() >= 15,
            "expected a full artifact tree, found {} files",
            first.len()
        );
        std::fs::remove_dir_all(&out_dir).expect("clear outputs");
        for stage in stages {
            run_stage(bin, &config_path, stage);
        }
        let second = snapshot(&out_dir);

        assert_eq!(
            first.keys().collect::<Vec<_>>(),
            second.keys().collect::<Vec<_>>(),
            "file sets differ between runs"
        );
        for (path, bytes) in &first {
            assert_eq!(
                Some(bytes),
                second.get(path),
                "artifact {path} differs between identical runs"
            );
        }
        println!("  {} files byte-stable", first.len());
    });
}
