//! 2D acoustic imaging workbench built around data-driven reduced order models
//! of the wave propagator.
//!
//! The pipeline is: simulate array data on a velocity model, optionally add
//! noise and regularize, build a reduced order model (ROM) of the propagator
//! purely from the sampled data, and backproject the ROM onto an orthonormal
//! snapshot basis computed for a smooth kinematic model to image reflectors.
//! A conventional reverse time migration (RTM) baseline is included for
//! comparison.
//!
//! A minimal end-to-end run on a tiny constant-velocity medium:
//!
//! ```
//! use rombp::media::{
//!     build_symmetrized_operator, BoundaryLabels, Edge, Grid2D, TransducerArray,
//!     VelocityModel, WaveletSpec,
//! };
//! use rombp::propagate::simulate;
//! use rombp::rom::{reduce, verify_structure};
//!
//! let grid = Grid2D::new(12, 12, 1.0, (0.0, 0.0))?;
//! let model = VelocityModel::constant(grid, 1.0, BoundaryLabels::top_accessible())?;
//! let array = TransducerArray::uniform_on_edge(&model, Edge::Top, 2, 2)?;
//! let wavelet = WaveletSpec::from_tau(1.0, 8)?;
//!
//! let op = build_symmetrized_operator(&model)?;
//! let sim = simulate(&op, &array, &wavelet, None)?;
//! let rom = reduce(&sim.data)?;
//! assert!(verify_structure(&rom, 1e-8).pass);
//! # Ok::<(), rombp::Error>(())
//! ```
//!
//! Modules follow the pipeline stages:
//!
//! - [`media`]: grids, velocity models, transducer arrays, wavelets, and the
//!   discrete symmetrized wave operator.
//! - [`propagate`]: the discrete propagator, snapshot generation by Chebyshev
//!   recursion, and sampled data synthesis.
//! - [`rom`]: mass/stiffness assembly from data, block Cholesky, projection,
//!   resimulation, and structure verification.
//! - [`regularization`]: multiplicative noise injection and the spectral-shift
//!   data regularization loop.
//! - [`imaging`]: ROM backprojection, composite sub-array imaging, the RTM
//!   baseline, depth scaling, and diagnostics.
//! - [`linalg`]: a robust dense symmetric eigensolver for small matrices.
//! - [`io`]: file formats ("ROMD" data, "ROMP" models, velocity models,
//!   images) and reports.
//! - [`harness`]: experiment configuration and pipeline orchestration behind
//!   the CLI.

pub mod chebyshev;
pub mod harness;
pub mod imaging;
pub mod io;
pub mod linalg;
pub mod media;
pub mod propagate;
pub mod regularization;
pub mod rom;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
