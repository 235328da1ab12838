//! Spectral purity and indistinguishability from joint spectral intensities,
//! and the two-photon interference dip model.

mod homi;
mod jsi;

pub use homi::{
    fit_homi, homi_curve, scan_delays, synthetic_scan, Background, HomiFit, HomiParams, HomiScan, HomiUncertainties,
    FWHM_PER_SIGMA,
};
pub use jsi::{
    gaussian_jsi, indistinguishability, purity, GaussianJsi, GridSpec, JsiGrid, SpectralState, MIN_GAUSSIAN_POINTS,
};
