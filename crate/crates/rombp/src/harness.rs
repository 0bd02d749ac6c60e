//! Experiment orchestration: configuration, the simulate → noise →
//! regularize → reduce → image pipeline, condition reports, and image
//! comparison metrics.
//!
//! Every numeric knob that affects the output lives in the configuration
//! and is echoed into the manifest together with stage timings, so a run
//! can be reproduced bit-identically from its manifest alone.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::imaging::{
    backprojection_from_parts, composite_image, depth_scale, kinematic_basis_regularized, model_hash,
    rtm_image, Image, SubArrayFailurePolicy, SubArrayPartition,
};
use crate::io;
use crate::linalg::sym_eigen;
use crate::media::{
    gaussian_smooth_velocity, make_phantom, Edge, PhantomKind, PhantomParams, TransducerArray,
    VelocityModel, WaveletSpec,
};
use crate::propagate::simulate_data;
use crate::regularization::{add_noise, regularize, MuSchedule, NoiseSpec};
use crate::rom::{assemble_mass, reduce_with, verify_structure, DiagonalConvention, MassMatrix};
use crate::{Error, Result};

/// Where the true velocity model comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ModelSpec {
    Phantom {
        #[serde(flatten)]
        kind: PhantomKind,
        params: PhantomParams,
    },
    File {
        path: PathBuf,
    },
}

impl ModelSpec {
    pub fn load(&self) -> Result<VelocityModel> {
        match self {
            ModelSpec::Phantom { kind, params } => make_phantom(*kind, params),
            ModelSpec::File { path } => io::read_velocity_model(path),
        }
    }
}

/// Where the smooth kinematic model comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum KinematicSpec {
    /// Constant velocity over the true model's grid.
    Constant { c: f64 },
    /// Gaussian smoothing of the true model with the given width (meters).
    Smoothed { width: f64 },
    /// Load from a velocity model file.
    File { path: PathBuf },
}

impl KinematicSpec {
    pub fn load(&self, truth: &VelocityModel) -> Result<VelocityModel> {
        match self {
            KinematicSpec::Constant { c } => {
                VelocityModel::constant(truth.grid.clone(), *c, truth.boundary)
            }
            KinematicSpec::Smoothed { width } => gaussian_smooth_velocity(truth, *width, *width),
            KinematicSpec::File { path } => io::read_velocity_model(path),
        }
    }
}

/// Transducer array placement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArraySpec {
    pub edge: Edge,
    pub m: usize,
    /// Nodes left free at each end of the edge.
    #[serde(default)]
    pub margin: usize,
}

impl ArraySpec {
    pub fn build(&self, model: &VelocityModel) -> Result<TransducerArray> {
        TransducerArray::uniform_on_edge(model, self.edge, self.m, self.margin)
    }
}

/// Wavelet and sampling parameters. When `sigma` is absent it follows the
/// recommended pairing with `tau`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveletConfig {
    #[serde(default)]
    pub sigma: Option<f64>,
    pub tau: f64,
    pub n2: usize,
}

impl WaveletConfig {
    pub fn build(&self) -> Result<WaveletSpec> {
        match self.sigma {
            Some(sigma) => WaveletSpec::new(sigma, self.tau, self.n2),
            None => WaveletSpec::from_tau(self.tau, self.n2),
        }
    }
}

/// Imaging methods to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    Bp,
    Rtm,
    Composite,
}

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub kinematic: KinematicSpec,
    pub array: ArraySpec,
    pub wavelet: WaveletConfig,
    #[serde(default)]
    pub substeps: Option<usize>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub schedule: Option<MuSchedule>,
    #[serde(default)]
    pub partition: Option<SubArrayPartition>,
    pub methods: Vec<MethodSpec>,
    /// `(a0, a1)`; when absent, images are left unscaled.
    #[serde(default)]
    pub depth_scaling: Option<(f64, f64)>,
    #[serde(default)]
    pub convention: DiagonalConvention,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One stage's timing entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Run manifest: everything needed to audit or reproduce the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub crate_version: String,
    pub kinematic_hash: String,
    pub substeps: usize,
    pub mu: f64,
    pub tolerances: Toleranced,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<String>,
    /// Stage name of a failure, if the run aborted.
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

/// The fixed numerical tolerances of the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Toleranced {
    pub eps_pd: f64,
    pub exp_series_tol: f64,
    pub stability_target: f64,
    pub regularization_delta: f64,
}

impl Default for Toleranced {
    fn default() -> Self {
        Toleranced {
            eps_pd: crate::rom::EPS_PD,
            exp_series_tol: crate::media::EXP_SERIES_TOL,
            stability_target: crate::propagate::STABILITY_TARGET,
            regularization_delta: MuSchedule::default().delta,
        }
    }
}

struct StageClock {
    timings: Vec<StageTiming>,
}

impl StageClock {
    fn new() -> Self {
        StageClock { timings: Vec::new() }
    }

    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Execute the configured pipeline and write all artifacts plus
/// `manifest.json` into the output directory.
///
/// On failure the manifest is still written with the failed stage recorded,
/// and the error is returned.
pub fn run(config: &ExperimentConfig) -> Result<Manifest> {
    std::fs::create_dir_all(&config.output_dir)?;
    let mut manifest = Manifest {
        config_hash: config.hash(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        kinematic_hash: String::new(),
        substeps: 0,
        mu: 1.0,
        tolerances: Toleranced::default(),
        timings: Vec::new(),
        outputs: Vec::new(),
        failed_stage: None,
        error: None,
    };
    let result = run_stages(config, &mut manifest);
    if let Err(e) = &result {
        manifest.error = Some(e.to_string());
        if manifest.failed_stage.is_none() {
            manifest.failed_stage = Some("unknown".into());
        }
    }
    let manifest_path = config.output_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    result.map(|_| manifest)
}

fn run_stages(config: &ExperimentConfig, manifest: &mut Manifest) -> Result<()> {
    let out = &config.output_dir;
    let mut clock = StageClock::new();
    let record = |manifest: &mut Manifest, name: &str| {
        manifest.outputs.push(name.to_string());
    };

    let stage = |manifest: &mut Manifest, name: &'static str| {
        manifest.failed_stage = Some(name.to_string());
    };

    // Model construction.
    stage(manifest, "model");
    let truth = clock.run("model", || config.model.load())?;
    stage(manifest, "kinematic");
    let kinematic = clock.run("kinematic", || config.kinematic.load(&truth))?;
    manifest.kinematic_hash = model_hash(&kinematic);
    io::write_velocity_model(&out.join("model.vel"), &truth, false)?;
    io::write_velocity_model(&out.join("kinematic.vel"), &kinematic, false)?;
    record(manifest, "model.vel");
    record(manifest, "kinematic.vel");

    let array = config.array.build(&truth)?;
    let w = config.wavelet.build()?;

    // Simulation.
    stage(manifest, "simulate");
    let clean = clock.run("simulate", || {
        simulate_data(&truth, &array, &w, config.substeps)
    })?;
    let op = crate::media::build_symmetrized_operator(&truth)?;
    manifest.substeps = config
        .substeps
        .unwrap_or_else(|| crate::propagate::default_substeps(&op, w.tau));
    io::write_data(&out.join("data.romd"), &clean)?;
    record(manifest, "data.romd");

    // Noise and regularization.
    stage(manifest, "noise");
    let mut data = clean;
    if let Some(noise) = &config.noise {
        data = clock.run("noise", || Ok(add_noise(&data, noise)))?;
        io::write_data(&out.join("data_noisy.romd"), &data)?;
        record(manifest, "data_noisy.romd");
    }
    if let Some(schedule) = &config.schedule {
        stage(manifest, "regularize");
        let reg = clock.run("regularize", || regularize(&data, schedule))?;
        manifest.mu = reg.mu;
        write_mu_history(&out.join("regularization.csv"), schedule, &reg.min_eig_history)?;
        record(manifest, "regularization.csv");
        data = reg.data;
        io::write_data(&out.join("data_regularized.romd"), &data)?;
        record(manifest, "data_regularized.romd");
    }

    // Reduction: consumes only the data file, never grid fields.
    stage(manifest, "reduce");
    let data_for_rom = io::read_data(&out.join(if config.schedule.is_some() {
        "data_regularized.romd"
    } else if config.noise.is_some() {
        "data_noisy.romd"
    } else {
        "data.romd"
    }))?;
    let rm = clock.run("reduce", || reduce_with(&data_for_rom, config.convention))?;
    manifest.mu = rm.mu;
    io::write_model(&out.join("rom.romp"), &rm)?;
    record(manifest, "rom.romp");

    stage(manifest, "verify");
    let report = verify_structure(&rm, 1e-8);
    std::fs::write(out.join("structure.txt"), format!("{report}\n"))?;
    record(manifest, "structure.txt");

    // Imaging.
    let maybe_scale = |img: Image| -> Result<Image> {
        match config.depth_scaling {
            Some((a0, a1)) => depth_scale(&img, &array, a0, a1),
            None => Ok(img),
        }
    };
    for method in &config.methods {
        match method {
            MethodSpec::Bp => {
                stage(manifest, "image-bp");
                let img = clock.run("image-bp", || {
                    let (basis, rm_o) = kinematic_basis_regularized(
                        &kinematic,
                        &array,
                        &w,
                        config.substeps,
                        config.convention,
                        rm.mu,
                    )?;
                    backprojection_from_parts(&basis, &rm, &rm_o, &kinematic)
                })?;
                let img = maybe_scale(img)?;
                io::write_image_csv(&out.join("image_bp.csv"), &img)?;
                io::write_field_pgm(&out.join("image_bp.pgm"), &img.grid, &img.values)?;
                record(manifest, "image_bp.csv");
                record(manifest, "image_bp.pgm");
            }
            MethodSpec::Rtm => {
                stage(manifest, "image-rtm");
                let img = clock.run("image-rtm", || {
                    rtm_image(&data, &kinematic, &array, &w, config.substeps)
                })?;
                let img = maybe_scale(img)?;
                io::write_image_csv(&out.join("image_rtm.csv"), &img)?;
                io::write_field_pgm(&out.join("image_rtm.pgm"), &img.grid, &img.values)?;
                record(manifest, "image_rtm.csv");
                record(manifest, "image_rtm.pgm");
            }
            MethodSpec::Composite => {
                stage(manifest, "image-composite");
                let partition = config.partition.clone().ok_or_else(|| {
                    Error::Validation("composite imaging requires a partition".into())
                })?;
                let (img, skipped) = clock.run("image-composite", || {
                    composite_image(
                        &data,
                        &partition,
                        &kinematic,
                        &array,
                        &w,
                        config.substeps,
                        config.convention,
                        SubArrayFailurePolicy::Skip,
                    )
                })?;
                if !skipped.is_empty() {
                    std::fs::write(
                        out.join("composite_skipped.txt"),
                        format!("skipped sub-arrays: {skipped:?}\n"),
                    )?;
                    record(manifest, "composite_skipped.txt");
                }
                let img = maybe_scale(img)?;
                io::write_image_csv(&out.join("image_composite.csv"), &img)?;
                io::write_field_pgm(&out.join("image_composite.pgm"), &img.grid, &img.values)?;
                record(manifest, "image_composite.csv");
                record(manifest, "image_composite.pgm");
            }
        }
    }

    manifest.failed_stage = None;
    manifest.timings = clock.timings;
    Ok(())
}

fn write_mu_history(path: &Path, schedule: &MuSchedule, history: &[f64]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "iteration,mu,min_eig")?;
    let mut mu = schedule.mu_start;
    for (i, &lam) in history.iter().enumerate() {
        writeln!(w, "{i},{mu:.17e},{lam:.17e}")?;
        mu *= schedule.mu_factor;
    }
    w.flush()?;
    Ok(())
}

/// One row of the condition report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionRow {
    pub n: usize,
    pub cond: f64,
    pub min_eig: f64,
    pub max_eig: f64,
}

/// Condition numbers of the leading `m n' x m n'` principal mass
/// submatrices for each requested `n'`.
pub fn report_condition(data: &crate::propagate::SampledData, n_list: &[usize]) -> Result<Vec<ConditionRow>> {
    let mass = assemble_mass(data);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 || n > mass.n {
            return Err(Error::Validation(format!(
                "condition report n = {n} outside 1..={}",
                mass.n
            )));
        }
        rows.push(condition_of(&mass, n));
    }
    Ok(rows)
}

fn condition_of(mass: &MassMatrix, n: usize) -> ConditionRow {
    let eig = sym_eigen(&mass.leading(n));
    let min = eig.min();
    let max = eig.max();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    ConditionRow {
        n,
        cond,
        min_eig: min,
        max_eig: max,
    }
}

/// Write a condition report as CSV.
pub fn write_condition_csv(path: &Path, rows: &[ConditionRow]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,cond,min_eig,max_eig")?;
    for r in rows {
        writeln!(w, "{},{:.17e},{:.17e},{:.17e}", r.n, r.cond, r.min_eig, r.max_eig)?;
    }
    w.flush()?;
    Ok(())
}

/// Metrics comparing two images on the same grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageComparison {
    pub peak_a: (usize, usize),
    pub peak_b: (usize, usize),
    /// Normalized cross-correlation; 0 when either image is identically
    /// zero, flagged below.
    pub correlation: f64,
    pub correlation_defined: bool,
    /// Spurious-to-true peak ratios when a ground-truth mask is supplied.
    pub ratio_a: Option<f64>,
    pub ratio_b: Option<f64>,
}

/// Spurious-to-true peak ratio: the largest magnitude outside the mask over
/// the largest inside it.
pub fn peak_ratio(img: &Image, truth_mask: &[bool]) -> Result<f64> {
    if truth_mask.len() != img.values.len() {
        return Err(Error::Mismatch(format!(
            "mask has {} entries for {} nodes",
            truth_mask.len(),
            img.values.len()
        )));
    }
    let mut inside = 0.0f64;
    let mut outside = 0.0f64;
    for (v, &m) in img.values.iter().zip(truth_mask) {
        if m {
            inside = inside.max(v.abs());
        } else {
            outside = outside.max(v.abs());
        }
    }
    if inside == 0.0 {
        return Err(Error::Validation("mask captures no image energy".into()));
    }
    Ok(outside / inside)
}

/// Compare two images; the optional mask marks true reflector nodes
/// (including any halo the caller wants to excuse).
pub fn compare_images(
    a: &Image,
    b: &Image,
    truth_mask: Option<&[bool]>,
) -> Result<ImageComparison> {
    if a.grid.nx != b.grid.nx || a.grid.ny != b.grid.ny {
        return Err(Error::Mismatch(format!(
            "grids differ: {}x{} vs {}x{}",
            a.grid.nx, a.grid.ny, b.grid.nx, b.grid.ny
        )));
    }
    let na = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (correlation, defined) = if na > 0.0 && nb > 0.0 {
        let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
        (dot / (na * nb), true)
    } else {
        (0.0, false)
    };
    let (ratio_a, ratio_b) = match truth_mask {
        Some(mask) => (Some(peak_ratio(a, mask)?), Some(peak_ratio(b, mask)?)),
        None => (None, None),
    };
    Ok(ImageComparison {
        peak_a: a.argmax_abs(),
        peak_b: b.argmax_abs(),
        correlation,
        correlation_defined: defined,
        ratio_a,
        ratio_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{BoundaryLabels, Grid2D};
    use crate::propagate::{Provenance, SampledData};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use tempfile::tempdir;

    fn basic_config(out: PathBuf) -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSpec::Phantom {
                kind: PhantomKind::Point {
                    at: (0.5, 0.4),
                    contrast: 1.3,
                },
                params: PhantomParams {
                    nx: 14,
                    ny: 14,
                    h: 1.0,
                    origin: (0.0, 0.0),
                    background: 1.0,
                    background_gradient: 0.0,
                    reflector_velocity: 1.3,
                    accessible: None,
                },
            },
            kinematic: KinematicSpec::Constant { c: 1.0 },
            array: ArraySpec {
                edge: Edge::Top,
                m: 3,
                margin: 2,
            },
            wavelet: WaveletConfig {
                sigma: Some(0.1),
                tau: 0.8,
                n2: 12,
            },
            substeps: None,
            noise: None,
            schedule: None,
            partition: None,
            methods: vec![MethodSpec::Bp],
            depth_scaling: None,
            convention: DiagonalConvention::SpdSqrt,
            output_dir: out,
        }
    }

    #[test]
    fn run_writes_expected_artifacts() {
        let dir = tempdir().unwrap();
        let config = basic_config(dir.path().to_path_buf());
        let manifest = run(&config).unwrap();
        assert!(manifest.failed_stage.is_none());
        assert_eq!(manifest.config_hash, config.hash());
        for f in [
            "model.vel",
            "kinematic.vel",
            "data.romd",
            "rom.romp",
            "structure.txt",
            "image_bp.csv",
            "image_bp.pgm",
            "manifest.json",
        ] {
            assert!(dir.path().join(f).exists(), "missing {f}");
        }
        assert!(manifest.timings.iter().any(|t| t.stage == "simulate"));
        assert_abs_diff_eq!(manifest.mu, 1.0);
    }

    #[test]
    fn run_is_deterministic() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let mut c1 = basic_config(d1.path().to_path_buf());
        let mut c2 = basic_config(d2.path().to_path_buf());
        c1.noise = Some(NoiseSpec::new(0.05, 7).unwrap());
        c2.noise = Some(NoiseSpec::new(0.05, 7).unwrap());
        c1.schedule = Some(MuSchedule::default());
        c2.schedule = Some(MuSchedule::default());
        run(&c1).unwrap();
        run(&c2).unwrap();
        for f in ["data.romd", "data_noisy.romd", "data_regularized.romd", "rom.romp", "image_bp.csv"] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "artifact {f} differs between identical runs");
        }
    }

    #[test]
    fn failed_stage_is_recorded() {
        let dir = tempdir().unwrap();
        let mut config = basic_config(dir.path().to_path_buf());
        // Composite without a partition is a validation failure.
        config.methods = vec![MethodSpec::Composite];
        let err = run(&config).unwrap_err();
        assert!(err.is_validation());
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.failed_stage.as_deref(), Some("image-composite"));
        assert!(manifest.error.is_some());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let config = basic_config(PathBuf::from("/tmp/x"));
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.hash(), config.hash());
    }

    #[test]
    fn condition_scalar_is_one() {
        let data = SampledData::new(
            vec![DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 0.5)],
            0.1,
            Provenance::Clean,
        )
        .unwrap();
        let rows = report_condition(&data, &[1]).unwrap();
        assert_abs_diff_eq!(rows[0].cond, 1.0);
        assert!(report_condition(&data, &[2]).is_err());
    }

    #[test]
    fn condition_grows_with_n() {
        let model = {
            let grid = Grid2D::new(12, 12, 1.0, (0.0, 0.0)).unwrap();
            let c: Vec<f64> = (0..grid.n_nodes())
                .map(|i| 1.0 + 0.05 * (i / 12) as f64)
                .collect();
            VelocityModel::new(grid, c, BoundaryLabels::top_accessible()).unwrap()
        };
        let array = TransducerArray::uniform_on_edge(&model, Edge::Top, 3, 2).unwrap();
        let w = WaveletSpec::new(0.1, 0.8, 12).unwrap();
        let data = simulate_data(&model, &array, &w, None).unwrap();
        let rows = report_condition(&data, &[1, 2, 4, 6]).unwrap();
        for pair in rows.windows(2) {
            assert!(
                pair[1].cond >= pair[0].cond,
                "cond not monotone: {} then {}",
                pair[0].cond,
                pair[1].cond
            );
        }
    }

    #[test]
    fn compare_self_and_zero() {
        let grid = Grid2D::new(5, 5, 1.0, (0.0, 0.0)).unwrap();
        let values: Vec<f64> = (0..25).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let img = crate::imaging::Image {
            grid: grid.clone(),
            values,
            method: crate::imaging::ImageMethod::Backprojection,
            kinematic_hash: String::new(),
            data_hash: String::new(),
            depth_scaling: None,
            partition: None,
        };
        let cmp = compare_images(&img, &img, None).unwrap();
        assert!(cmp.correlation_defined);
        assert_abs_diff_eq!(cmp.correlation, 1.0, epsilon = 1e-14);
        assert_eq!(cmp.peak_a, cmp.peak_b);

        let zero = crate::imaging::Image {
            values: vec![0.0; 25],
            ..img.clone()
        };
        let cmp = compare_images(&img, &zero, None).unwrap();
        assert!(!cmp.correlation_defined);
        assert_eq!(cmp.correlation, 0.0);
    }

    #[test]
    fn peak_ratio_uses_mask() {
        let grid = Grid2D::new(3, 3, 1.0, (0.0, 0.0)).unwrap();
        let mut values = vec![0.0; 9];
        values[4] = 10.0; // true peak
        values[0] = 2.0; // spurious
        let img = crate::imaging::Image {
            grid,
            values,
            method: crate::imaging::ImageMethod::Backprojection,
            kinematic_hash: String::new(),
            data_hash: String::new(),
            depth_scaling: None,
            partition: None,
        };
        let mut mask = vec![false; 9];
        mask[4] = true;
        assert_abs_diff_eq!(peak_ratio(&img, &mask).unwrap(), 0.2);
        assert!(peak_ratio(&img, &vec![false; 9]).is_err());
    }
}
