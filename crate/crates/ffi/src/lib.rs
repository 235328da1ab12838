//! C ABI over `qmsync`.
//!
//! Objects cross the boundary as opaque pointers created and released by the
//! matching `*_new`/`*_free` calls. Every fallible function returns a
//! [`QmsStatus`] and writes its result through an out-pointer; on failure the
//! message is kept per thread and can be copied out with
//! [`qms_last_error_message`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use qmsync::analytic::{Normalization, SyncModel};
use qmsync::interference::{self, JsiGrid};
use qmsync::model::ExperimentConfig;
use qmsync::qkd::{self, BoundMode, QkdDeltas, QkdStats};
use qmsync::sim::{RngContract, SimOptions, SimStats, Simulator};
use qmsync::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    ParseError = 3,
    Unsupported = 4,
    ResourceLimit = 5,
    ConvergenceFailure = 6,
    NoData = 7,
    DegenerateGrid = 8,
    AxisMismatch = 9,
    Io = 10,
    InvalidUtf8 = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmsNormalization {
    PerAttemptFrame = 0,
    PerNSlots = 1,
}

/// Opaque experiment configuration.
pub struct QmsConfig(ExperimentConfig);

/// Opaque Monte Carlo result.
pub struct QmsSimStats(SimStats);

/// Plain-data view of a Monte Carlo result.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QmsSimSummary {
    pub n_frames: u64,
    pub herald_counts_a: u64,
    pub herald_counts_b: u64,
    pub sync_successes: u64,
    pub single_pair_deliveries: u64,
    pub coincidence_count: u64,
    pub mean_storage_cycles: f64,
    pub sync_rate: f64,
    pub sync_rate_se: f64,
    pub single_pair_rate: f64,
    pub single_pair_rate_se: f64,
}

/// Gains, QBERs (negative when undefined) and bound offsets of one run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QmsQkdStats {
    pub gain_z: f64,
    pub gain_x: f64,
    pub qber_z: f64,
    pub qber_x: f64,
    pub delta_gain_z: f64,
    pub delta_gain_x: f64,
    pub delta_qber_z: f64,
    pub delta_qber_x: f64,
    pub n_pulses: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QmsKeyRate {
    pub rate_per_pulse: f64,
    pub gain_z_lower: f64,
    pub qber_x_upper: f64,
    pub qber_z_upper: f64,
    pub h_qber_x: f64,
    pub ec_leak: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(err: &Error) -> QmsStatus {
    match err {
        Error::InvalidParameter(_) => QmsStatus::InvalidParameter,
        Error::Parse { .. } => QmsStatus::ParseError,
        Error::UnsupportedConfiguration(_) => QmsStatus::Unsupported,
        Error::ResourceLimit(_) => QmsStatus::ResourceLimit,
        Error::ConvergenceFailure(_) => QmsStatus::ConvergenceFailure,
        Error::NoData(_) => QmsStatus::NoData,
        Error::DegenerateGrid(_) => QmsStatus::DegenerateGrid,
        Error::AxisMismatch(_) => QmsStatus::AxisMismatch,
        Error::Io(_) => QmsStatus::Io,
    }
}

/// Internal failure carrying its status.
struct Failure(QmsStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(QmsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> QmsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            QmsStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QmsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(QmsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn config_ref<'a>(config: *const QmsConfig) -> Result<&'a ExperimentConfig, Failure> {
    config.as_ref().map(|c| &c.0).ok_or_else(|| null("config"))
}

/// New configuration holding the default parameters. Free with
/// [`qms_config_free`].
#[no_mangle]
pub extern "C" fn qms_config_new() -> *mut QmsConfig {
    Box::into_raw(Box::new(QmsConfig(ExperimentConfig::default())))
}

/// Parses a TOML configuration into a new handle stored in `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn qms_config_from_toml(text: *const c_char, out: *mut *mut QmsConfig) -> QmsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let config = ExperimentConfig::from_toml_str(text)?;
        out.write(Box::into_raw(Box::new(QmsConfig(config))));
        Ok(())
    })
}

/// Sets one parameter addressed as `section.field`. The configuration is
/// left unchanged when the new value is invalid.
///
/// # Safety
/// `config` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qms_config_set(config: *mut QmsConfig, key: *const c_char, value: *const c_char) -> QmsStatus {
    guard(|| {
        let config = config.as_mut().ok_or_else(|| null("config"))?;
        let (key, value) = (str_arg(key, "key")?, str_arg(value, "value")?);
        let mut updated = config.0;
        updated.set(key, value)?;
        updated.validate()?;
        config.0 = updated;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards; null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn qms_config_free(config: *mut QmsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Probability that `m` sources each deliver one photon within `n` slots.
///
/// # Safety
/// `config` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qms_sync_prob(config: *const QmsConfig, m: u32, n: u32, out: *mut f64) -> QmsStatus {
    guard(|| {
        let p = SyncModel::new(config_ref(config)?)?.sync_prob(m, n)?;
        write_out(out, p)
    })
}

/// Probability of delivering `k_a` and `k_b` photons in a synchronized frame.
///
/// # Safety
/// `config` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qms_joint_pair_dist(
    config: *const QmsConfig,
    k_a: u32,
    k_b: u32,
    n: u32,
    out: *mut f64,
) -> QmsStatus {
    guard(|| {
        let p = SyncModel::new(config_ref(config)?)?.joint_pair_dist(k_a, k_b, n)?;
        write_out(out, p)
    })
}

/// Coincidence-rate enhancement over unsynchronized operation.
///
/// # Safety
/// `config` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qms_enhancement(
    config: *const QmsConfig,
    n: u32,
    normalization: QmsNormalization,
    out: *mut f64,
) -> QmsStatus {
    guard(|| {
        let norm = match normalization {
            QmsNormalization::PerAttemptFrame => Normalization::PerAttemptFrame,
            QmsNormalization::PerNSlots => Normalization::PerNSlots,
        };
        let e = SyncModel::new(config_ref(config)?)?.enhancement_factor(n, norm)?;
        write_out(out, e)
    })
}

/// Runs `n_frames` frames; results depend only on the configuration, frame
/// count and seed, never on `workers` (0 = all cores).
///
/// # Safety
/// `config` must come from this library; `out` must be writable. Free the
/// result with [`qms_sim_stats_free`].
#[no_mangle]
pub unsafe extern "C" fn qms_simulate(
    config: *const QmsConfig,
    n_frames: u64,
    seed: u64,
    workers: u32,
    out: *mut *mut QmsSimStats,
) -> QmsStatus {
    guard(|| {
        let config = config_ref(config)?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let options = SimOptions {
            workers: workers as usize,
            ..SimOptions::default()
        };
        let stats = Simulator::new(config, options)?.run(n_frames, RngContract::new(seed))?;
        out.write(Box::into_raw(Box::new(QmsSimStats(stats))));
        Ok(())
    })
}

/// # Safety
/// `stats` must come from [`qms_simulate`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qms_sim_stats_get(stats: *const QmsSimStats, out: *mut QmsSimSummary) -> QmsStatus {
    guard(|| {
        let s = &stats.as_ref().ok_or_else(|| null("stats"))?.0;
        let sync = s.sync_rate();
        let single = s.single_pair_rate();
        write_out(
            out,
            QmsSimSummary {
                n_frames: s.n_frames,
                herald_counts_a: s.herald_counts[0],
                herald_counts_b: s.herald_counts[1],
                sync_successes: s.sync_successes,
                single_pair_deliveries: s.single_pair_deliveries,
                coincidence_count: s.coincidence_count,
                mean_storage_cycles: s.mean_storage_cycles().value,
                sync_rate: sync.value,
                sync_rate_se: sync.std_err,
                single_pair_rate: single.value,
                single_pair_rate_se: single.std_err,
            },
        )
    })
}

/// # Safety
/// `stats` must come from [`qms_simulate`] and not be used afterwards; null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn qms_sim_stats_free(stats: *mut QmsSimStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

/// Base-2 binary entropy.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qms_binary_entropy(x: f64, out: *mut f64) -> QmsStatus {
    guard(|| write_out(out, qkd::binary_entropy(x)?))
}

/// Secure key rate. `n_sigma < 0` uses the offsets in `stats`; otherwise
/// the offsets are `n_sigma` Poisson standard errors.
///
/// # Safety
/// `stats` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qms_secure_key_rate(
    stats: *const QmsQkdStats,
    f_e: f64,
    n_sigma: f64,
    out: *mut QmsKeyRate,
) -> QmsStatus {
    guard(|| {
        let s = stats.as_ref().ok_or_else(|| null("stats"))?;
        let qber = |e: f64| (e >= 0.0).then_some(e);
        let stats = QkdStats {
            gain_z: s.gain_z,
            gain_x: s.gain_x,
            qber_z: qber(s.qber_z),
            qber_x: qber(s.qber_x),
            deltas: QkdDeltas {
                gain_z: s.delta_gain_z,
                gain_x: s.delta_gain_x,
                qber_z: s.delta_qber_z,
                qber_x: s.delta_qber_x,
            },
            n_pulses: s.n_pulses,
        };
        stats.validate()?;
        let mode = if n_sigma < 0.0 {
            BoundMode::ReportedOffsets
        } else {
            BoundMode::PoissonNSigma(n_sigma)
        };
        let r = qkd::secure_key_rate(&stats, f_e, mode)?;
        write_out(
            out,
            QmsKeyRate {
                rate_per_pulse: r.rate_per_pulse,
                gain_z_lower: r.gain_z_lower,
                qber_x_upper: r.qber_x_upper,
                qber_z_upper: r.qber_z_upper,
                h_qber_x: r.h_qber_x,
                ec_leak: r.ec_leak,
            },
        )
    })
}

unsafe fn grid_arg(intensity: *const f64, rows: usize, cols: usize) -> Result<JsiGrid, Failure> {
    if intensity.is_null() {
        return Err(null("intensity"));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(QmsStatus::InvalidParameter, "grid size overflows".into()))?;
    let values = std::slice::from_raw_parts(intensity, len);
    Ok(JsiGrid::from_matrix(DMatrix::from_row_slice(rows, cols, values))?)
}

/// Purity of the heralded photon from a row-major `rows x cols` intensity
/// grid (rows along the heralded photon's axis).
///
/// # Safety
/// `intensity` must point to `rows * cols` readable values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn qms_purity(intensity: *const f64, rows: usize, cols: usize, out: *mut f64) -> QmsStatus {
    guard(|| {
        let grid = grid_arg(intensity, rows, cols)?;
        write_out(out, interference::purity(&grid)?)
    })
}

/// Trace overlap of the heralded states of two grids sampled identically.
///
/// # Safety
/// Both grids must point to `rows * cols` readable values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn qms_indistinguishability(
    a: *const f64,
    b: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> QmsStatus {
    guard(|| {
        let (ga, gb) = (grid_arg(a, rows, cols)?, grid_arg(b, rows, cols)?);
        write_out(out, interference::indistinguishability(&ga, &gb)?)
    })
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn qms_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            buf.add(n).write(0);
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
