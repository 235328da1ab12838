//! Physical parameters and the elementary probability kernels: thermal pair
//! statistics, bucket-detector heralding through a detector cascade, and
//! binomial survival through the channel and memory.
//!
//! All kernels are pure functions. Defaults reproduce the experimental
//! operating point (µ = 0.013, η_t = 0.18, T_c = 0.083, T_QM = 0.988,
//! η_d = 0.75, τ = 10 ns, 100-slot frames, N = 40).

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Absolute tail bound used to truncate sums over the pair number.
pub const SERIES_TOLERANCE: f64 = 1e-15;

/// Hard cap on the number of pair-number terms, reached only for µ close to
/// the point where the thermal tail stops decaying usefully.
const MAX_SERIES_TERMS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceParams {
    /// Mean pair number per pump pulse.
    pub mu: f64,
    /// Trigger-mode system detection efficiency.
    pub eta_t: f64,
    /// Number of trigger detectors in the cascade.
    pub cascade_size: u32,
    /// Dark-click probability of the trigger per slot.
    pub trigger_dark_prob: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            mu: 0.013,
            eta_t: 0.18,
            cascade_size: 1,
            trigger_dark_prob: 1e-6,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be finite and >= 0, got {}", self.mu)));
        }
        check_probability("eta_t", self.eta_t)?;
        if self.cascade_size == 0 {
            return Err(Error::invalid("cascade_size must be >= 1"));
        }
        check_probability("trigger_dark_prob", self.trigger_dark_prob)
    }

    /// Probability that this source heralds in a single slot (photon heralds only).
    pub fn herald_prob_per_slot(&self) -> Result<f64> {
        Ok(HeraldedPairs::new(self, SERIES_TOLERANCE)?.total())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Transmission of the heralded photon excluding the memory (T_c).
    pub t_channel: f64,
    /// Memory transmission per cycle of duration τ (T_QM).
    pub t_memory_cycle: f64,
    /// Efficiency of the final HOMI/BSM detectors (η_d).
    pub eta_det: f64,
    /// Dark probability of a final detector per coincidence window.
    pub det_dark_prob: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            t_channel: 0.083,
            t_memory_cycle: 0.988,
            eta_det: 0.75,
            det_dark_prob: 1e-6,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("t_channel", self.t_channel)?;
        check_probability("t_memory_cycle", self.t_memory_cycle)?;
        check_probability("eta_det", self.eta_det)?;
        check_probability("det_dark_prob", self.det_dark_prob)
    }

    /// Per-photon transmission for a photon that makes `passes` trips through
    /// the memory. A photon released in its own herald slot makes one pass.
    pub fn transmission(&self, passes: u32) -> f64 {
        self.t_channel * self.t_memory_cycle.powi(passes as i32)
    }
}

/// Which part of a frame may contain usable heralds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeraldWindow {
    /// Only the first N slots of each frame; the rest is switch dead time.
    Storage,
    /// Any of the F slots, with storage gaps bounded by N.
    Frame,
}

impl std::str::FromStr for HeraldWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "storage" => Ok(HeraldWindow::Storage),
            "frame" => Ok(HeraldWindow::Frame),
            other => Err(Error::invalid(format!(
                "unknown herald window '{other}' (expected storage or frame)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingParams {
    /// Pump period in nanoseconds.
    pub tau_ns: f64,
    /// Pump pulses per synchronization frame (F).
    pub slots_per_frame: u32,
    /// Maximum number of memory passes of a stored photon (N).
    pub max_storage: u32,
    /// Source B runs τ/2 behind source A; only affects tie labelling.
    pub interleave_offset: bool,
    pub herald_window: HeraldWindow,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            tau_ns: 10.0,
            slots_per_frame: 100,
            max_storage: 40,
            interleave_offset: true,
            herald_window: HeraldWindow::Storage,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_ns > 0.0 && self.tau_ns.is_finite()) {
            return Err(Error::invalid(format!("tau_ns must be > 0, got {}", self.tau_ns)));
        }
        if self.max_storage == 0 {
            return Err(Error::invalid("max_storage must be >= 1"));
        }
        if self.slots_per_frame < self.max_storage {
            return Err(Error::invalid(format!(
                "slots_per_frame ({}) must be >= max_storage ({})",
                self.slots_per_frame, self.max_storage
            )));
        }
        Ok(())
    }

    /// Number of slots in which heralds are collected each frame.
    pub fn window_len(&self) -> u32 {
        match self.herald_window {
            HeraldWindow::Storage => self.max_storage,
            HeraldWindow::Frame => self.slots_per_frame,
        }
    }

    /// Frames (synchronization attempts) per second.
    pub fn attempt_rate_hz(&self) -> f64 {
        1e9 / (self.tau_ns * f64::from(self.slots_per_frame))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_sources: u32,
    pub source_a: SourceParams,
    pub source_b: SourceParams,
    pub channel: ChannelParams,
    pub timing: TimingParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_sources: 2,
            source_a: SourceParams::default(),
            source_b: SourceParams::default(),
            channel: ChannelParams::default(),
            timing: TimingParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sources < 2 {
            return Err(Error::invalid(format!("n_sources must be >= 2, got {}", self.n_sources)));
        }
        self.source_a.validate()?;
        self.source_b.validate()?;
        self.channel.validate()?;
        self.timing.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|span| line_col(text, span.start))
                .unwrap_or((0, 0));
            Error::parse("config", line, column, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Overrides a single parameter addressed as `section.field`. The pseudo
    /// section `source` writes both sources at once.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| Error::invalid(format!("parameter key '{key}' must be section.field")))?;
        let float = || {
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("{key}: '{value}' is not a number")))
        };
        let int = || {
            value
                .trim()
                .parse::<u32>()
                .map_err(|_| Error::invalid(format!("{key}: '{value}' is not a non-negative integer")))
        };
        let unknown = || Error::invalid(format!("unknown parameter '{key}'"));
        match section {
            "source" | "source_a" | "source_b" => {
                let mut targets: Vec<&mut SourceParams> = match section {
                    "source_a" => vec![&mut self.source_a],
                    "source_b" => vec![&mut self.source_b],
                    _ => vec![&mut self.source_a, &mut self.source_b],
                };
                for src in targets.iter_mut() {
                    match field {
                        "mu" => src.mu = float()?,
                        "eta_t" => src.eta_t = float()?,
                        "cascade_size" => src.cascade_size = int()?,
                        "trigger_dark_prob" => src.trigger_dark_prob = float()?,
                        _ => return Err(unknown()),
                    }
                }
            }
            "channel" => match field {
                "t_channel" => self.channel.t_channel = float()?,
                "t_memory_cycle" => self.channel.t_memory_cycle = float()?,
                "eta_det" => self.channel.eta_det = float()?,
                "det_dark_prob" => self.channel.det_dark_prob = float()?,
                _ => return Err(unknown()),
            },
            "timing" => match field {
                "tau_ns" => self.timing.tau_ns = float()?,
                "slots_per_frame" => self.timing.slots_per_frame = int()?,
                "max_storage" => self.timing.max_storage = int()?,
                "interleave_offset" => {
                    self.timing.interleave_offset = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::invalid(format!("{key}: expected true or false")))?
                }
                "herald_window" => self.timing.herald_window = value.trim().parse()?,
                _ => return Err(unknown()),
            },
            "experiment" if field == "n_sources" => self.n_sources = int()?,
            _ => return Err(unknown()),
        }
        Ok(())
    }
}

pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

/// Thermal pair-number distribution µ^k / (1+µ)^(k+1).
pub fn pair_number_pmf(mu: f64, k: u32) -> Result<f64> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be finite and >= 0, got {mu}")));
    }
    Ok(thermal(mu, k))
}

fn thermal(mu: f64, k: u32) -> f64 {
    if k == 0 {
        return 1.0 / (1.0 + mu);
    }
    (mu / (1.0 + mu)).powi(k as i32) / (1.0 + mu)
}

/// Probability that exactly one detector of a `cascade_size`-detector cascade
/// fires (a herald) when `k` photons reach the trigger arm with per-photon
/// transmission `eta`.
pub fn herald_prob_given_k(k: u32, eta: f64, cascade_size: u32) -> Result<f64> {
    check_probability("eta", eta)?;
    if cascade_size == 0 {
        return Err(Error::invalid("cascade size must be >= 1"));
    }
    Ok(cascade_click(k, eta, cascade_size))
}

fn cascade_click(k: u32, eta: f64, cascade_size: u32) -> f64 {
    let split = 1.0 / f64::from(cascade_size);
    (1..=k)
        .map(|l| {
            binomial_coefficient(k, l)
                * eta.powi(l as i32)
                * (1.0 - eta).powi((k - l) as i32)
                * split.powi(l as i32 - 1)
        })
        .sum()
}

/// Probability that `k_out` of `k_in` photons heralded in slot `j_prime`
/// survive to release in slot `j`. A photon always makes `j - j_prime + 1`
/// memory passes.
pub fn survival_pmf(
    k_out: u32,
    k_in: u32,
    j: u32,
    j_prime: u32,
    channel: &ChannelParams,
) -> Result<f64> {
    if k_out > k_in {
        return Err(Error::invalid(format!("k_out ({k_out}) exceeds k_in ({k_in})")));
    }
    if j_prime == 0 || j_prime > j {
        return Err(Error::invalid(format!(
            "herald slot j' = {j_prime} must satisfy 1 <= j' <= j = {j}"
        )));
    }
    channel.validate()?;
    Ok(binomial_pmf(k_in, k_out, channel.transmission(j - j_prime + 1)))
}

/// Probability that a source heralds at least once within `j` slots.
pub fn herald_prob_within(j: u32, source: &SourceParams) -> Result<f64> {
    source.validate()?;
    let per_slot = source.herald_prob_per_slot()?;
    Ok(herald_within(per_slot, j))
}

pub(crate) fn herald_within(per_slot: f64, j: u32) -> f64 {
    if j == 0 {
        return 0.0;
    }
    // 1 - (1-p)^j without cancellation for small p
    -(f64::from(j) * (-per_slot).ln_1p()).exp_m1()
}

pub(crate) fn binomial_coefficient(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (1..=k).fold(1.0, |acc, i| acc * f64::from(n - k + i) / f64::from(i))
}

pub(crate) fn binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    binomial_coefficient(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// The heralded pair-number weights P_c(k)·P_d(k) of one source, truncated
/// once the thermal tail mass drops below the tolerance.
#[derive(Debug, Clone)]
pub struct HeraldedPairs {
    weights: Vec<f64>,
}

impl HeraldedPairs {
    pub fn new(source: &SourceParams, tolerance: f64) -> Result<Self> {
        source.validate()?;
        if !(tolerance > 0.0) {
            return Err(Error::invalid("series tolerance must be > 0"));
        }
        let k_max = truncation_point(source.mu, tolerance)?;
        let weights = (0..=k_max as u32)
            .map(|k| thermal(source.mu, k) * cascade_click(k, source.eta_t, source.cascade_size))
            .collect();
        Ok(Self { weights })
    }

    /// Weight of pair number `k` (zero beyond the truncation point).
    pub fn weight(&self, k: u32) -> f64 {
        self.weights.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn max_pairs(&self) -> u32 {
        (self.weights.len() - 1) as u32
    }

    /// Single-slot herald probability, Σ_k P_c(k) P_d(k).
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Σ_k' P_c(k') P_d(k') P(k of k' survive) for per-photon transmission `t`.
    pub fn emitted(&self, k: u32, t: f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .skip(k as usize)
            .map(|(k_in, w)| w * binomial_pmf(k_in as u32, k, t))
            .sum()
    }
}

/// Smallest K whose thermal tail P(k > K) = r^(K+1) is below `tolerance`.
fn truncation_point(mu: f64, tolerance: f64) -> Result<usize> {
    if mu == 0.0 {
        return Ok(1);
    }
    let ratio = mu / (1.0 + mu);
    let needed = (tolerance.ln() / ratio.ln()).ceil();
    if !needed.is_finite() || needed > MAX_SERIES_TERMS as f64 {
        return Err(Error::invalid(format!(
            "mu = {mu} needs more than {MAX_SERIES_TERMS} series terms"
        )));
    }
    Ok((needed as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pair_pmf_examples() {
        assert_eq!(pair_number_pmf(0.0, 0).unwrap(), 1.0);
        // µ/(1+µ)^2 and 1/(1+µ) at µ = 0.013
        assert!(close(pair_number_pmf(0.013, 1).unwrap(), 0.013 / 1.013f64.powi(2), 1e-15));
        assert!(close(pair_number_pmf(0.013, 1).unwrap(), 0.012668, 5e-7));
        assert!(close(pair_number_pmf(0.013, 0).unwrap(), 0.987167, 5e-7));
        assert!(pair_number_pmf(-0.1, 0).is_err());
        assert!(pair_number_pmf(f64::NAN, 0).is_err());
    }

    #[test]
    fn pair_pmf_normalization() {
        for mu in [0.001, 0.013, 0.05, 0.1] {
            let s: f64 = (0..=50).map(|k| pair_number_pmf(mu, k).unwrap()).sum();
            assert!(close(s, 1.0, 1e-12), "mu = {mu}: {s}");
        }
    }

    #[test]
    fn herald_examples() {
        assert_eq!(herald_prob_given_k(0, 0.18, 1).unwrap(), 0.0);
        assert!(close(herald_prob_given_k(1, 0.18, 1).unwrap(), 0.18, 1e-15));
        assert!(close(herald_prob_given_k(2, 1.0, 2).unwrap(), 0.5, 1e-15));
        assert!(herald_prob_given_k(1, 1.2, 1).is_err());
        assert!(herald_prob_given_k(1, 0.5, 0).is_err());
    }

    #[test]
    fn single_detector_is_bucket_click() {
        for eta in [0.0, 0.18, 0.5, 0.93, 1.0] {
            for k in 0..=20 {
                let direct = 1.0 - (1.0f64 - eta).powi(k as i32);
                assert!(close(herald_prob_given_k(k, eta, 1).unwrap(), direct, 1e-13));
            }
        }
    }

    #[test]
    fn cascade_matches_same_detector_closed_form() {
        // all l arriving photons on one of D detectors: D[(1-η+η/D)^k - (1-η)^k]
        for d in 2..=5u32 {
            let df = f64::from(d);
            for k in 0..=12 {
                let eta = 0.37;
                let closed = df * ((1.0 - eta + eta / df).powi(k as i32) - (1.0 - eta).powi(k as i32));
                assert!(close(herald_prob_given_k(k, eta, d).unwrap(), closed, 1e-13));
            }
        }
    }

    #[test]
    fn survival_examples() {
        let lossless = ChannelParams {
            t_channel: 1.0,
            t_memory_cycle: 1.0,
            ..ChannelParams::default()
        };
        assert_eq!(survival_pmf(1, 1, 1, 1, &lossless).unwrap(), 1.0);
        let table = ChannelParams::default();
        assert!(close(survival_pmf(1, 1, 1, 1, &table).unwrap(), 0.083 * 0.988, 1e-15));
        assert!(close(survival_pmf(1, 1, 1, 1, &table).unwrap(), 0.082004, 5e-7));
        // two photons, three passes, both lost
        let t = 0.083 * 0.988f64.powi(3);
        let v = survival_pmf(0, 2, 3, 1, &table).unwrap();
        assert!(close(v, (1.0 - t) * (1.0 - t), 1e-15));
        assert!(close(v, 0.846312, 5e-7));
        assert!(survival_pmf(2, 1, 1, 1, &table).is_err());
        assert!(survival_pmf(0, 1, 1, 2, &table).is_err());
        assert!(survival_pmf(0, 1, 1, 0, &table).is_err());
    }

    #[test]
    fn survival_sums_to_one() {
        let ch = ChannelParams::default();
        for k_in in 0..=10 {
            for (j, jp) in [(1, 1), (5, 2), (40, 1)] {
                let s: f64 = (0..=k_in).map(|k| survival_pmf(k, k_in, j, jp, &ch).unwrap()).sum();
                assert!(close(s, 1.0, 1e-13));
            }
        }
    }

    #[test]
    fn herald_within_examples() {
        let src = SourceParams::default();
        assert_eq!(herald_prob_within(0, &src).unwrap(), 0.0);
        // geometric sum Σ_k P_c(k)(1-(1-η)^k) = ηµ/(1+ηµ) for a single detector
        let exact = 0.18 * 0.013 / (1.0 + 0.18 * 0.013);
        let p1 = herald_prob_within(1, &src).unwrap();
        assert!(close(p1, exact, 1e-15));
        assert!(close(p1, 0.00233454, 5e-9));
        let p40 = herald_prob_within(40, &src).unwrap();
        assert!(close(p40, 1.0 - (1.0 - exact).powi(40), 1e-14));
        assert!(close(p40, 0.0892535, 5e-7));
    }

    #[test]
    fn herald_within_monotone() {
        let base = SourceParams::default();
        let mut last = 0.0;
        for j in 0..=60 {
            let v = herald_prob_within(j, &base).unwrap();
            assert!(v >= last);
            last = v;
        }
        for (lo, hi) in [(0.005, 0.01), (0.01, 0.05), (0.05, 0.2)] {
            let a = herald_prob_within(10, &SourceParams { mu: lo, ..base }).unwrap();
            let b = herald_prob_within(10, &SourceParams { mu: hi, ..base }).unwrap();
            assert!(b > a);
            let a = herald_prob_within(10, &SourceParams { eta_t: lo, ..base }).unwrap();
            let b = herald_prob_within(10, &SourceParams { eta_t: hi, ..base }).unwrap();
            assert!(b > a);
        }
    }

    #[test]
    fn heralded_pairs_truncation_meets_tolerance() {
        let src = SourceParams { mu: 0.3, eta_t: 0.4, ..SourceParams::default() };
        let pairs = HeraldedPairs::new(&src, 1e-15).unwrap();
        let tail: f64 = (pairs.max_pairs() + 1..pairs.max_pairs() + 400)
            .map(|k| thermal(src.mu, k))
            .sum();
        assert!(tail < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        cfg.timing.max_storage = 101;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.n_sources = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.channel.t_channel = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_set_and_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("source.mu", "0.02").unwrap();
        cfg.set("timing.herald_window", "frame").unwrap();
        cfg.set("channel.t_channel", "1").unwrap();
        assert_eq!(cfg.source_a.mu, 0.02);
        assert_eq!(cfg.source_b.mu, 0.02);
        assert_eq!(cfg.timing.herald_window, HeraldWindow::Frame);
        assert!(cfg.set("channel.nope", "1").is_err());
        assert!(cfg.set("mu", "1").is_err());
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[timing]\nmax_storage = 20\n").unwrap();
        assert_eq!(cfg.timing.max_storage, 20);
        assert_eq!(cfg.source_a, SourceParams::default());
        let err = ExperimentConfig::from_toml_str("[timing]\nmax_storage = \"x\"\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
