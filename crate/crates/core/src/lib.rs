//! Simulation and analysis toolkit for heralded single-photon sources that
//! are synchronized by a low-loss quantum memory.
//!
//! * [`model`]: parameters and the elementary probability kernels.
//! * [`analytic`]: closed-form synchronization probabilities and enhancement.
//! * [`sim`]: seeded, deterministic Monte Carlo of the two-source experiment.
//! * [`interference`]: spectral purity from joint spectral intensities and
//!   Hong-Ou-Mandel dip fitting.
//! * [`qkd`]: gain/QBER extraction and MDI-QKD secure key rates.
//! * [`cli`]: the `qmsync` command-line front end.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod interference;
pub mod model;
pub mod qkd;
pub mod sim;

pub use error::{Error, Result};
