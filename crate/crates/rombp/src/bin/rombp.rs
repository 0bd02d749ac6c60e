//! Command line harness for the imaging workbench.
//!
//! Exit codes: 0 on success, 2 for rejected inputs (validation), 3 for
//! numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rombp::harness::{
    compare_images, report_condition, write_condition_csv, ExperimentConfig,
};
use rombp::imaging::{
    backprojection_image, composite_image, delta_diagnostic, depth_scale, kinematic_basis,
    rtm_image, schrodinger_potential, Image, SubArrayFailurePolicy,
};
use rombp::io;
use rombp::propagate::simulate_data;
use rombp::regularization::{add_noise, regularize, MuSchedule, NoiseSpec};
use rombp::rom::{reduce_with, verify_structure};
use rombp::{Error, Result};

#[derive(Parser)]
#[command(name = "rombp", version, about = "ROM backprojection imaging workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate array data on the configured true model.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output data file ("ROMD").
        #[arg(long)]
        out: PathBuf,
        /// Also write a CSV export next to the binary file.
        #[arg(long)]
        csv: bool,
    },
    /// Add multiplicative noise to a data file.
    Noise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Relative noise level, e.g. 0.10.
        #[arg(long = "noise-eps", allow_hyphen_values = true)]
        noise_eps: f64,
        /// RNG seed.
        #[arg(long = "noise-seed", default_value_t = 0)]
        noise_seed: u64,
    },
    /// Regularize noisy data by scaling the zero-lag sample.
    Regularize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "mu-start", default_value_t = 1.0)]
        mu_start: f64,
        #[arg(long = "mu-factor", default_value_t = 1.05)]
        mu_factor: f64,
        #[arg(long = "mu-cap", default_value_t = 100.0)]
        mu_cap: f64,
        /// Optional CSV report of the mu / eigenvalue history.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build a reduced model from a data file alone.
    Reduce {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Diagonal block convention: spd_sqrt, cholesky, or eig.
        #[arg(long, default_value = "spd_sqrt")]
        convention: String,
    },
    /// Verify the block structure of a reduced model.
    Verify {
        #[arg(long)]
        rom: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Backprojection image from a data file and the configured kinematic
    /// model.
    ImageBp {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        /// Output prefix; writes `<prefix>.csv` and `<prefix>.pgm`.
        #[arg(long = "out-prefix")]
        out_prefix: PathBuf,
    },
    /// RTM baseline image.
    ImageRtm {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "out-prefix")]
        out_prefix: PathBuf,
    },
    /// Composite sub-array backprojection image.
    ImageComposite {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "out-prefix")]
        out_prefix: PathBuf,
    },
    /// Kinematic delta-approximation diagnostic at a probe node.
    DiagnoseDelta {
        #[command(flatten)]
        config: ConfigArg,
        /// Probe node as `ix,iy`.
        #[arg(long)]
        probe: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Schrödinger potential of a velocity model and impedance field.
    Potential {
        #[arg(long)]
        model: PathBuf,
        /// Impedance field (CSV grid format).
        #[arg(long)]
        sigma: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Condition numbers of leading mass submatrices.
    ReportCond {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated list of block counts n'.
        #[arg(long = "n-list")]
        n_list: String,
        /// CSV output; prints to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two images (CSV grid format).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Optional ground-truth mask (CSV grid, nonzero = true reflector).
        #[arg(long)]
        mask: Option<PathBuf>,
    },
}

fn parse_convention(s: &str) -> Result<rombp::rom::DiagonalConvention> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Validation(format!("unknown convention {s}")))
}

fn parse_probe(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Validation(format!("probe must be ix,iy: {s}")));
    }
    let ix = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("bad probe x: {s}")))?;
    let iy = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("bad probe y: {s}")))?;
    Ok((ix, iy))
}

fn load_image_csv(path: &PathBuf) -> Result<Image> {
    let (grid, values) = io::read_field_csv(path)?;
    Ok(Image {
        grid,
        values,
        method: rombp::imaging::ImageMethod::Backprojection,
        kinematic_hash: String::new(),
        data_hash: String::new(),
        depth_scaling: None,
        partition: None,
    })
}

fn write_image_outputs(prefix: &PathBuf, img: &Image) -> Result<()> {
    io::write_image_csv(&prefix.with_extension("csv"), img)?;
    io::write_field_pgm(&prefix.with_extension("pgm"), &img.grid, &img.values)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, csv } => {
            let cfg = ExperimentConfig::from_file(&config.config)?;
            let truth = cfg.model.load()?;
            let array = cfg.array.build(&truth)?;
            let w = cfg.wavelet.build()?;
            let data = simulate_data(&truth, &array, &w, cfg.substeps)?;
            io::write_data(&out, &data)?;
            if csv {
                io::write_data_csv(&out.with_extension("csv"), &data)?;
            }
            println!("simulated m = {}, 2n = {} -> {}", data.m(), data.n2(), out.display());
        }
        Command::Noise {
            input,
            out,
            noise_eps,
            noise_seed,
        } => {
            let data = io::read_data(&input)?;
            let spec = NoiseSpec::new(noise_eps, noise_seed)?;
            let noisy = add_noise(&data, &spec);
            io::write_data(&out, &noisy)?;
            println!("noise eps = {noise_eps}, seed = {noise_seed} -> {}", out.display());
        }
        Command::Regularize {
            input,
            out,
            mu_start,
            mu_factor,
            mu_cap,
            report,
        } => {
            let data = io::read_data(&input)?;
            let schedule = MuSchedule {
                mu_start,
                mu_factor,
                mu_cap,
                ..MuSchedule::default()
            };
            let result = regularize(&data, &schedule)?;
            io::write_data(&out, &result.data)?;
            if let Some(report_path) = report {
                use std::io::Write;
                let mut w = std::io::BufWriter::new(std::fs::File::create(report_path)?);
                writeln!(w, "iteration,mu,min_eig")?;
                let mut mu = schedule.mu_start;
                for (i, lam) in result.min_eig_history.iter().enumerate() {
                    writeln!(w, "{i},{mu:.17e},{lam:.17e}")?;
                    mu *= schedule.mu_factor;
                }
            }
            println!(
                "regularized with mu = {} after {} iterations -> {}",
                result.mu,
                result.iterations,
                out.display()
            );
        }
        Command::Reduce {
            input,
            out,
            convention,
        } => {
            let data = io::read_data(&input)?;
            let conv = parse_convention(&convention)?;
            let rm = reduce_with(&data, conv)?;
            io::write_model(&out, &rm)?;
            println!(
                "reduced model m = {}, n = {}, mu = {} -> {}",
                rm.m,
                rm.n,
                rm.mu,
                out.display()
            );
        }
        Command::Verify { rom, tol } => {
            let rm = io::read_model(&rom)?;
            let report = verify_structure(&rm, tol);
            println!("{report}");
        }
        Command::ImageBp {
            config,
            data,
            out_prefix,
        } => {
            let cfg = ExperimentConfig::from_file(&config.config)?;
            let truth = cfg.model.load()?;
            let kinematic = cfg.kinematic.load(&truth)?;
            let array = cfg.array.build(&truth)?;
            let w = cfg.wavelet.build()?;
            let samples = io::read_data(&data)?;
            let mut img =
                backprojection_image(&samples, &kinematic, &array, &w, cfg.substeps, cfg.convention)?;
            if let Some((a0, a1)) = cfg.depth_scaling {
                img = depth_scale(&img, &array, a0, a1)?;
            }
            write_image_outputs(&out_prefix, &img)?;
            println!("backprojection image -> {}.csv/.pgm", out_prefix.display());
        }
        Command::ImageRtm {
            config,
            data,
            out_prefix,
        } => {
            let cfg = ExperimentConfig::from_file(&config.config)?;
            let truth = cfg.model.load()?;
            let kinematic = cfg.kinematic.load(&truth)?;
            let array = cfg.array.build(&truth)?;
            let w = cfg.wavelet.build()?;
            let samples = io::read_data(&data)?;
            let mut img = rtm_image(&samples, &kinematic, &array, &w, cfg.substeps)?;
            if let Some((a0, a1)) = cfg.depth_scaling {
                img = depth_scale(&img, &array, a0, a1)?;
            }
            write_image_outputs(&out_prefix, &img)?;
            println!("rtm image -> {}.csv/.pgm", out_prefix.display());
        }
        Command::ImageComposite {
            config,
            data,
            out_prefix,
        } => {
            let cfg = ExperimentConfig::from_file(&config.config)?;
            let partition = cfg
                .partition
                .clone()
                .ok_or_else(|| Error::Validation("composite imaging requires a partition".into()))?;
            let truth = cfg.model.load()?;
            let kinematic = cfg.kinematic.load(&truth)?;
            let array = cfg.array.build(&truth)?;
            let w = cfg.wavelet.build()?;
            let samples = io::read_data(&data)?;
            let (mut img, skipped) = composite_image(
                &samples,
                &partition,
                &kinematic,
                &array,
                &w,
                cfg.substeps,
                cfg.convention,
                SubArrayFailurePolicy::Skip,
            )?;
            if !skipped.is_empty() {
                eprintln!("warning: skipped sub-arrays {skipped:?}");
            }
            if let Some((a0, a1)) = cfg.depth_scaling {
                img = depth_scale(&img, &array, a0, a1)?;
            }
            write_image_outputs(&out_prefix, &img)?;
            println!("composite image -> {}.csv/.pgm", out_prefix.display());
        }
        Command::DiagnoseDelta { config, probe, out } => {
            let cfg = ExperimentConfig::from_file(&config.config)?;
            let truth = cfg.model.load()?;
            let kinematic = cfg.kinematic.load(&truth)?;
            let array = cfg.array.build(&truth)?;
            let w = cfg.wavelet.build()?;
            let (ix, iy) = parse_probe(&probe)?;
            if ix >= kinematic.grid.nx || iy >= kinematic.grid.ny {
                return Err(Error::Validation(format!(
                    "probe ({ix}, {iy}) outside {}x{} grid",
                    kinematic.grid.nx, kinematic.grid.ny
                )));
            }
            let (basis, _) =
                kinematic_basis(&kinematic, &array, &w, cfg.substeps, cfg.convention)?;
            let field = delta_diagnostic(&basis, &basis, kinematic.grid.idx(ix, iy))?;
            io::write_field_csv(&out, &kinematic.grid, &field)?;
            println!("delta diagnostic at ({ix}, {iy}) -> {}", out.display());
        }
        Command::Potential { model, sigma, out } => {
            let vm = io::read_velocity_model(&model)?;
            let (grid, sigma_values) = io::read_field_csv(&sigma)?;
            if grid.nx != vm.grid.nx || grid.ny != vm.grid.ny {
                return Err(Error::Mismatch(format!(
                    "impedance grid {}x{} does not match model {}x{}",
                    grid.nx, grid.ny, vm.grid.nx, vm.grid.ny
                )));
            }
            let q = schrodinger_potential(&vm, &sigma_values)?;
            io::write_field_csv(&out, &vm.grid, &q)?;
            println!("potential -> {}", out.display());
        }
        Command::ReportCond { data, n_list, out } => {
            let samples = io::read_data(&data)?;
            let list: Vec<usize> = n_list
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Validation(format!("bad n value {s}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let rows = report_condition(&samples, &list)?;
            match out {
                Some(path) => {
                    write_condition_csv(&path, &rows)?;
                    println!("condition report -> {}", path.display());
                }
                None => {
                    println!("n,cond,min_eig,max_eig");
                    for r in &rows {
                        println!("{},{:.6e},{:.6e},{:.6e}", r.n, r.cond, r.min_eig, r.max_eig);
                    }
                }
            }
        }
        Command::Compare { a, b, mask } => {
            let img_a = load_image_csv(&a)?;
            let img_b = load_image_csv(&b)?;
            let mask_values = match &mask {
                Some(path) => {
                    let (_, values) = io::read_field_csv(path)?;
                    Some(values.iter().map(|&v| v != 0.0).collect::<Vec<bool>>())
                }
                None => None,
            };
            let metrics = compare_images(&img_a, &img_b, mask_values.as_deref())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&metrics).expect("metrics serialize")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
