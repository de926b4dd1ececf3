//! Labeled-dataset generation: random fixed-mean compliance distributions,
//! exact-simulator strength labels, rejection filtering, train/test
//! splitting, and a stable on-disk format.
//!
//! Every candidate design draws from its own counter-derived RNG stream, so
//! generation is deterministic under the master seed and independent of
//! thread scheduling; candidates are accepted in index order.

use crate::array_geometry::FibrilArray;
use crate::contact_mechanics::{simulate_detachment, DesignVector};
use crate::error::{Error, Result};
use crate::inverse_design::project;
use crate::seeding::stream_rng;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// On-disk format version for `meta.json` + `samples.csv`.
pub const FORMAT_VERSION: u32 = 1;

/// Candidates processed per parallel block during generation.
const GENERATE_BLOCK: usize = 64;
/// Hard cap on candidates before generation gives up.
const GENERATE_CAP: usize = 10_000_000;
/// Spot-check stride on load: every 100th stored label is re-simulated.
const SPOT_CHECK_STRIDE: usize = 100;
const SPOT_CHECK_TOL: f64 = 1e-9;

/// How raw candidate designs are drawn before mean projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStyle {
    /// Independent uniform entries on the bounds.
    IidUniform,
    /// Random cubic polynomial in r/R, clamped to the bounds.
    RadialSmooth,
    /// Even split: each candidate picks one of the two styles from its own
    /// stream.
    Mixed,
}

impl std::fmt::Display for SampleStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SampleStyle::IidUniform => "iid_uniform",
            SampleStyle::RadialSmooth => "radial_smooth",
            SampleStyle::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

/// One labeled design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub c: DesignVector,
    pub strength: f64,
}

/// Train/test tag per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub test_fraction: f64,
    /// `true` marks a test sample.
    pub test: Vec<bool>,
}

/// A labeled dataset plus everything needed to reproduce and validate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: FibrilArray,
    pub mean_compliance: f64,
    pub bounds: (f64, f64),
    pub filter_ceiling: f64,
    pub style: SampleStyle,
    pub master_seed: u64,
    /// Accepted / processed candidates during generation.
    pub acceptance_rate: f64,
    pub samples: Vec<Sample>,
    /// Indices of samples appended by design feedback (exempt from the
    /// strength ceiling).
    pub feedback_indices: Vec<usize>,
    pub split: Option<SplitAssignment>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_features(&self) -> usize {
        self.layout.n()
    }

    /// (train, test) index lists under the current split; everything is
    /// train when no split has been assigned.
    pub fn train_test_indices(&self) -> (Vec<usize>, Vec<usize>) {
        match &self.split {
            None => ((0..self.samples.len()).collect(), Vec::new()),
            Some(split) => {
                let mut train = Vec::new();
                let mut test = Vec::new();
                for (i, &is_test) in split.test.iter().enumerate() {
                    if is_test {
                        test.push(i);
                    } else {
                        train.push(i);
                    }
                }
                (train, test)
            }
        }
    }
}

/// Draw one feasible design: raw entries by `style`, then Euclidean
/// projection onto the fixed-mean box.
pub fn sample_design(
    array: &FibrilArray,
    mean_c: f64,
    bounds: (f64, f64),
    style: SampleStyle,
    rng: &mut ChaCha12Rng,
) -> Result<DesignVector> {
    let (lo, hi) = bounds;
    if !(lo > 0.0 && lo < mean_c && mean_c < hi) {
        return Err(Error::InfeasibleSampling(format!(
            "need 0 < c_lo < mean_c < c_hi, got bounds [{lo}, {hi}], mean {mean_c}"
        )));
    }
    let n = array.n();
    if n == 1 {
        return DesignVector::new(vec![mean_c]);
    }
    let chosen = match style {
        SampleStyle::Mixed => {
            if rng.gen_bool(0.5) {
                SampleStyle::IidUniform
            } else {
                SampleStyle::RadialSmooth
            }
        }
        s => s,
    };
    let raw: Vec<f64> = match chosen {
        SampleStyle::IidUniform => (0..n).map(|_| rng.gen_range(lo..hi)).collect(),
        SampleStyle::RadialSmooth => {
            let r_scale = array.characteristic_radius().max(f64::MIN_POSITIVE);
            let half_span = 0.5 * (hi - lo);
            let coef: [f64; 4] = [
                rng.gen_range(-half_span..half_span),
                rng.gen_range(-half_span..half_span),
                rng.gen_range(-half_span..half_span),
                rng.gen_range(-half_span..half_span),
            ];
            array
                .fibrils()
                .iter()
                .map(|f| {
                    let r = f.x_hat.hypot(f.y_hat) / r_scale;
                    let poly = coef[0] + r * (coef[1] + r * (coef[2] + r * coef[3]));
                    (mean_c + poly).clamp(lo, hi)
                })
                .collect()
        }
        SampleStyle::Mixed => unreachable!(),
    };
    project(&raw, mean_c, bounds)
}

/// Generation parameters; bounds and floors have library defaults.
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub n_target: usize,
    pub mean_c: f64,
    pub bounds: (f64, f64),
    /// Candidates with strength >= ceiling are rejected.
    pub filter_ceiling: f64,
    pub style: SampleStyle,
    /// Minimum acceptance rate checked after the probe batch.
    pub acceptance_floor: f64,
    pub probe_batch: usize,
}

impl GenerateOptions {
    /// Defaults around a fixed mean: bounds one decade each way, ceiling at
    /// 70% of the theoretical maximum, mixed sampling.
    pub fn around_mean(n_target: usize, mean_c: f64) -> Self {
        GenerateOptions {
            n_target,
            mean_c,
            bounds: (mean_c / 10.0, 10.0 * mean_c),
            filter_ceiling: 0.7,
            style: SampleStyle::Mixed,
            acceptance_floor: 0.01,
            probe_batch: 200,
        }
    }
}

/// Generate a labeled dataset: candidate designs are drawn from
/// per-candidate RNG streams, labeled with the exact simulator at zero tilt,
/// and accepted in candidate order while their strength stays below the
/// ceiling.
pub fn generate(
    array: &FibrilArray,
    opts: &GenerateOptions,
    master_seed: u64,
) -> Result<Dataset> {
    if opts.n_target == 0 {
        return Err(Error::InvalidParameter("n_target must be >= 1".into()));
    }
    if !(opts.filter_ceiling > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "filter_ceiling must be > 0, got {}",
            opts.filter_ceiling
        )));
    }

    let mut samples: Vec<Sample> = Vec::with_capacity(opts.n_target);
    let mut next_candidate = 0usize;
    let mut probe_checked = false;
    // Index of the candidate that produced the last accepted sample; the
    // acceptance rate is measured on the prefix ending there so it does not
    // depend on the block size.
    let mut last_accept_idx = 0usize;

    while samples.len() < opts.n_target {
        if next_candidate >= GENERATE_CAP {
            return Err(Error::InfeasibleSampling(format!(
                "accepted only {} of {} samples after {} candidates",
                samples.len(),
                opts.n_target,
                next_candidate
            )));
        }
        let block: Vec<usize> = (next_candidate
            ..(next_candidate + GENERATE_BLOCK).min(GENERATE_CAP))
            .collect();
        next_candidate += block.len();

        let labeled: Vec<(usize, Result<Sample>)> = block
            .par_iter()
            .map(|&idx| {
                let mut rng = stream_rng(master_seed, idx as u64);
                let out = sample_design(array, opts.mean_c, opts.bounds, opts.style, &mut rng)
                    .and_then(|c| {
                        let strength = simulate_detachment(array, &c, 0.0, 0.0)?.strength;
                        Ok(Sample { c, strength })
                    });
                (idx, out)
            })
            .collect();

        for (idx, result) in labeled {
            let sample = result?;
            if sample.strength < opts.filter_ceiling && samples.len() < opts.n_target {
                samples.push(sample);
                last_accept_idx = idx;
            }
        }

        if !probe_checked && next_candidate >= opts.probe_batch {
            probe_checked = true;
            let rate = samples.len() as f64 / next_candidate as f64;
            if rate < opts.acceptance_floor && samples.len() < opts.n_target {
                return Err(Error::LowAcceptanceRate {
                    rate,
                    floor: opts.acceptance_floor,
                    probed: next_candidate,
                });
            }
        }
    }

    let acceptance_rate = opts.n_target as f64 / (last_accept_idx + 1) as f64;
    Ok(Dataset {
        layout: array.clone(),
        mean_compliance: opts.mean_c,
        bounds: opts.bounds,
        filter_ceiling: opts.filter_ceiling,
        style: opts.style,
        master_seed,
        acceptance_rate,
        samples,
        feedback_indices: Vec::new(),
        split: None,
    })
}

/// Assign a uniformly random test subset of size round(n * test_fraction).
pub fn split(dataset: &mut Dataset, test_fraction: f64, seed: u64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.samples.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, 0);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut test = vec![false; n];
    for &i in order.iter().take(n_test) {
        test[i] = true;
    }
    dataset.split = Some(SplitAssignment {
        seed,
        test_fraction,
        test,
    });
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    format_version: u32,
    layout: FibrilArray,
    mean_compliance: f64,
    bounds: [f64; 2],
    filter_ceiling: f64,
    style: SampleStyle,
    master_seed: u64,
    acceptance_rate: f64,
    n_samples: usize,
    n_features: usize,
    feedback_indices: Vec<usize>,
    split: Option<SplitAssignment>,
}

/// Write `meta.json` + `samples.csv` into `dir` (created if missing).
/// Floats are written in shortest round-trip decimal form, so
/// save -> load -> save is byte-identical.
pub fn save(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        layout: dataset.layout.clone(),
        mean_compliance: dataset.mean_compliance,
        bounds: [dataset.bounds.0, dataset.bounds.1],
        filter_ceiling: dataset.filter_ceiling,
        style: dataset.style,
        master_seed: dataset.master_seed,
        acceptance_rate: dataset.acceptance_rate,
        n_samples: dataset.samples.len(),
        n_features: dataset.layout.n(),
        feedback_indices: dataset.feedback_indices.clone(),
        split: dataset.split.clone(),
    };
    let meta_path = dir.join("meta.json");
    let f = std::fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &meta)
        .map_err(|e| Error::io(&meta_path, e.into()))?;

    let csv_path = dir.join("samples.csv");
    let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = BufWriter::new(f);
    let n = dataset.layout.n();
    let header: Vec<String> = (0..n).map(|i| format!("c_{i}")).collect();
    writeln!(w, "{},strength", header.join(",")).map_err(|e| Error::io(&csv_path, e))?;
    for s in &dataset.samples {
        let row: Vec<String> = s.c.as_slice().iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{},{}", row.join(","), s.strength).map_err(|e| Error::io(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

/// Load a dataset and spot-check 1% of labels against the simulator.
pub fn load(dir: &Path) -> Result<Dataset> {
    let dataset = load_unchecked(dir)?;
    let check: Vec<usize> = (0..dataset.samples.len())
        .step_by(SPOT_CHECK_STRIDE)
        .collect();
    let errs: Vec<String> = check
        .par_iter()
        .filter_map(|&i| {
            let s = &dataset.samples[i];
            match simulate_detachment(&dataset.layout, &s.c, 0.0, 0.0) {
                Ok(trace) if (trace.strength - s.strength).abs() <= SPOT_CHECK_TOL => None,
                Ok(trace) => Some(format!(
                    "sample {i}: stored strength {} but simulator gives {}",
                    s.strength, trace.strength
                )),
                Err(e) => Some(format!("sample {i}: {e}")),
            }
        })
        .collect();
    if let Some(msg) = errs.into_iter().next() {
        return Err(Error::Parse {
            path: dir.join("samples.csv").display().to_string(),
            location: "label spot-check".into(),
            message: msg,
        });
    }
    Ok(dataset)
}

/// Load without the label spot-check.
pub fn load_unchecked(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join("meta.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: meta_path.display().to_string(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: meta.format_version,
            expected: FORMAT_VERSION,
        });
    }
    meta.layout.validate()?;
    if meta.n_features != meta.layout.n() {
        return Err(Error::Parse {
            path: meta_path.display().to_string(),
            location: "n_features".into(),
            message: format!(
                "n_features {} does not match layout size {}",
                meta.n_features,
                meta.layout.n()
            ),
        });
    }
    if let Some(split) = &meta.split {
        if split.test.len() != meta.n_samples {
            return Err(Error::Parse {
                path: meta_path.display().to_string(),
                location: "split.test".into(),
                message: format!(
                    "split length {} does not match n_samples {}",
                    split.test.len(),
                    meta.n_samples
                ),
            });
        }
    }

    let csv_path = dir.join("samples.csv");
    let file = std::fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let reader = BufReader::new(file);
    let n = meta.layout.n();
    let parse_err = |line: usize, field: usize, message: String| Error::Parse {
        path: csv_path.display().to_string(),
        location: format!("line {line}, field {field}"),
        message,
    };

    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        Some((_, Err(e))) => return Err(Error::io(&csv_path, e)),
        None => return Err(parse_err(1, 1, "empty file".into())),
    };
    let expect_header = {
        let cols: Vec<String> = (0..n).map(|i| format!("c_{i}")).collect();
        format!("{},strength", cols.join(","))
    };
    if header != expect_header {
        return Err(parse_err(1, 1, "header does not match layout width".into()));
    }

    let mut samples = Vec::with_capacity(meta.n_samples);
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(&csv_path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut values = Vec::with_capacity(n + 1);
        for (f, tok) in line.split(',').enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|e| parse_err(lineno + 1, f + 1, format!("bad float {tok:?}: {e}")))?;
            values.push(v);
        }
        if values.len() != n + 1 {
            return Err(parse_err(
                lineno + 1,
                values.len(),
                format!("expected {} fields, got {}", n + 1, values.len()),
            ));
        }
        let strength = values.pop().unwrap();
        if !(strength > 0.0 && strength <= 1.0 + 1e-9) {
            return Err(parse_err(
                lineno + 1,
                n + 1,
                format!("strength {strength} outside (0, 1]"),
            ));
        }
        let c = DesignVector::new(values)
            .map_err(|e| parse_err(lineno + 1, 1, e.to_string()))?;
        let mean = c.mean();
        if (mean - meta.mean_compliance).abs() > 1e-9 * (1.0 + meta.mean_compliance.abs()) {
            return Err(parse_err(
                lineno + 1,
                1,
                format!(
                    "sample mean {mean} deviates from dataset mean {}",
                    meta.mean_compliance
                ),
            ));
        }
        samples.push(Sample { c, strength });
    }
    if samples.len() != meta.n_samples {
        return Err(parse_err(
            samples.len() + 2,
            1,
            format!("expected {} samples, found {}", meta.n_samples, samples.len()),
        ));
    }

    Ok(Dataset {
        layout: meta.layout,
        mean_compliance: meta.mean_compliance,
        bounds: (meta.bounds[0], meta.bounds[1]),
        filter_ceiling: meta.filter_ceiling,
        style: meta.style,
        master_seed: meta.master_seed,
        acceptance_rate: meta.acceptance_rate,
        samples,
        feedback_indices: meta.feedback_indices,
        split: meta.split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_geometry::FibrilMaterial;

    fn desk_array() -> FibrilArray {
        let mat = FibrilMaterial::new(1.0, 5.0, 0.75).unwrap();
        FibrilArray::build_circle(7.5, 3.0, mat).unwrap()
    }

    #[test]
    fn sample_design_fixed_mean_and_bounds() {
        let array = desk_array();
        let mean_c = 20.0 / 3.0;
        let bounds = (mean_c / 10.0, 10.0 * mean_c);
        for (stream, style) in [
            (0u64, SampleStyle::IidUniform),
            (1, SampleStyle::RadialSmooth),
            (2, SampleStyle::Mixed),
        ] {
            let mut rng = stream_rng(40, stream);
            for _ in 0..20 {
                let c = sample_design(&array, mean_c, bounds, style, &mut rng).unwrap();
                assert_eq!(c.len(), array.n());
                assert!((c.mean() - mean_c).abs() < 1e-9);
                for &v in c.as_slice() {
                    assert!(v >= bounds.0 - 1e-12 && v <= bounds.1 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn sample_design_single_fibril() {
        let mat = FibrilMaterial::new(1.0, 5.0, 0.75).unwrap();
        let array = FibrilArray::build_circle(1.0, 3.0, mat).unwrap();
        let mut rng = stream_rng(41, 0);
        let c = sample_design(&array, 5.0, (1.0, 9.0), SampleStyle::Mixed, &mut rng).unwrap();
        assert_eq!(c.as_slice(), &[5.0]);
    }

    #[test]
    fn sample_design_rejects_infeasible_mean() {
        let array = desk_array();
        let mut rng = stream_rng(42, 0);
        assert!(sample_design(&array, 20.0, (1.0, 10.0), SampleStyle::IidUniform, &mut rng)
            .is_err());
    }

    #[test]
    fn sample_design_reproducible_across_runs() {
        let array = desk_array();
        let a = sample_design(
            &array,
            5.0,
            (1.0, 20.0),
            SampleStyle::IidUniform,
            &mut stream_rng(43, 7),
        )
        .unwrap();
        let b = sample_design(
            &array,
            5.0,
            (1.0, 20.0),
            SampleStyle::IidUniform,
            &mut stream_rng(43, 7),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generate_respects_ceiling_and_target() {
        let array = desk_array();
        let mut opts = GenerateOptions::around_mean(40, 20.0 / 3.0);
        opts.filter_ceiling = 1.01;
        let ds = generate(&array, &opts, 77).unwrap();
        assert_eq!(ds.n_samples(), 40);
        assert!((ds.acceptance_rate - 1.0).abs() < 1e-12);
        for s in &ds.samples {
            assert!(s.strength > 0.0 && s.strength <= 1.0 + 1e-9);
            assert!((s.c.mean() - opts.mean_c).abs() < 1e-9);
        }
    }

    #[test]
    fn generate_deterministic_under_seed() {
        let array = desk_array();
        let opts = GenerateOptions::around_mean(25, 20.0 / 3.0);
        let a = generate(&array, &opts, 123).unwrap();
        let b = generate(&array, &opts, 123).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.acceptance_rate, b.acceptance_rate);
        let c = generate(&array, &opts, 124).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn generate_low_acceptance_errors() {
        let array = desk_array();
        let mut opts = GenerateOptions::around_mean(50, 20.0 / 3.0);
        // Nothing can have strength below zero-point-zero-one of the maximum.
        opts.filter_ceiling = 1e-6;
        opts.probe_batch = 128;
        match generate(&array, &opts, 5) {
            Err(Error::LowAcceptanceRate { rate, probed, .. }) => {
                assert_eq!(rate, 0.0);
                assert!(probed >= 128);
            }
            other => panic!("expected LowAcceptanceRate, got {other:?}"),
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let array = desk_array();
        let mut opts = GenerateOptions::around_mean(25, 20.0 / 3.0);
        opts.filter_ceiling = 1.01;
        let mut ds = generate(&array, &opts, 9).unwrap();
        split(&mut ds, 0.2, 555).unwrap();
        let (train, test) = ds.train_test_indices();
        assert_eq!(test.len(), 5);
        assert_eq!(train.len(), 20);

        let first = ds.split.clone().unwrap();
        split(&mut ds, 0.2, 555).unwrap();
        assert_eq!(ds.split.unwrap(), first);
    }

    #[test]
    fn split_tiny_dataset() {
        let array = desk_array();
        let mut opts = GenerateOptions::around_mean(5, 20.0 / 3.0);
        opts.filter_ceiling = 1.01;
        let mut ds = generate(&array, &opts, 10).unwrap();
        split(&mut ds, 0.2, 1).unwrap();
        let (_, test) = ds.train_test_indices();
        assert_eq!(test.len(), 1);
        assert!(split(&mut ds, 0.0, 1).is_err());
        assert!(split(&mut ds, 1.0, 1).is_err());
    }

    #[test]
    fn save_load_round_trip_exact() {
        let array = desk_array();
        let mut opts = GenerateOptions::around_mean(30, 20.0 / 3.0);
        opts.filter_ceiling = 1.01;
        let mut ds = generate(&array, &opts, 2024).unwrap();
        split(&mut ds, 0.2, 3).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save(&ds, dir.path()).unwrap();
        let back = load(dir.path()).unwrap();
        assert_eq!(ds, back);

        // Byte-stability: saving the loaded dataset reproduces the files.
        let dir2 = tempfile::tempdir().unwrap();
        save(&back, dir2.path()).unwrap();
        for name in ["meta.json", "samples.csv"] {
            let a = std::fs::read(dir.path().join(name)).unwrap();
            let b = std::fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn load_rejects_truncated_csv() {
        let array = desk_array();
        let mut opts = GenerateOptions::around_mean(10, 20.0 / 3.0);
        opts.filter_ceiling = 1.01;
        let ds = generate(&array, &opts, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(&ds, dir.path()).unwrap();

        let csv_path = dir.path().join("samples.csv");
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let truncated: Vec<&str> = text.lines().take(5).collect();
        std::fs::write(&csv_path, truncated.join("\n")).unwrap();
        match load_unchecked(dir.path()) {
            Err(Error::Parse { .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_bad_float_with_location() {
        let array = desk_array();
        let mut opts = GenerateOptions::around_mean(5, 20.0 / 3.0);
        opts.filter_ceiling = 1.01;
        let ds = generate(&array, &opts, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(&ds, dir.path()).unwrap();

        let csv_path = dir.path().join("samples.csv");
        let mut text = std::fs::read_to_string(&csv_path).unwrap();
        text = text.replacen("0.", "0x.", 1);
        std::fs::write(&csv_path, text).unwrap();
        match load_unchecked(dir.path()) {
            Err(Error::Parse { location, .. }) => assert!(location.contains("line")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_version_mismatch() {
        let array = desk_array();
        let mut opts = GenerateOptions::around_mean(5, 20.0 / 3.0);
        opts.filter_ceiling = 1.01;
        let ds = generate(&array, &opts, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(&ds, dir.path()).unwrap();

        let meta_path = dir.path().join("meta.json");
        let text = std::fs::read_to_string(&meta_path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        std::fs::write(&meta_path, text).unwrap();
        match load_unchecked(dir.path()) {
            Err(Error::UnsupportedVersion { found: 99, .. }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn load_spot_check_catches_corrupt_label() {
        let array = desk_array();
        let mut opts = GenerateOptions::around_mean(5, 20.0 / 3.0);
        opts.filter_ceiling = 1.01;
        let mut ds = generate(&array, &opts, 6).unwrap();
        ds.samples[0].strength = (ds.samples[0].strength * 0.5).max(1e-3);
        let dir = tempfile::tempdir().unwrap();
        save(&ds, dir.path()).unwrap();
        match load(dir.path()) {
            Err(Error::Parse { location, .. }) => assert!(location.contains("spot-check")),
            other => panic!("expected spot-check failure, got {other:?}"),
        }
        assert!(load_unchecked(dir.path()).is_ok());
    }
}
