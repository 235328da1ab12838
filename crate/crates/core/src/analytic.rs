//! Closed-form synchronization model.
//!
//! Each source is described by two slot-resolved distributions over the
//! number `k` of photons it delivers when an attempt completes at slot `j`:
//!
//! * `p_load(k, j)`: the source heralds for the first time at slot `j` and its
//!   fresh photon makes a single memory pass;
//! * `p_emit(k, j)`: the source already heralded within slots `1..j`; the
//!   latest herald at `j' <= j` is released at `j` after `j - j' + 1` passes.
//!
//! An attempt completes at the slot where the last source heralds for the
//! first time. The window holds N slots, so every stored photon makes at most
//! N passes.

use serde::Serialize;

use crate::error::{check_probability, Error, Result};
use crate::model::{
    binomial_coefficient, herald_within, ChannelParams, ExperimentConfig, HeraldedPairs,
    SourceParams, SERIES_TOLERANCE,
};

/// Which source of the two-source experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Source {
    A,
    B,
}

/// Slot-resolved load/emit probabilities of one source.
#[derive(Debug, Clone)]
pub struct SourceSync {
    pairs: HeraldedPairs,
    herald: f64,
    channel: ChannelParams,
}

impl SourceSync {
    pub fn new(source: &SourceParams, channel: &ChannelParams) -> Result<Self> {
        Self::with_tolerance(source, channel, SERIES_TOLERANCE)
    }

    pub fn with_tolerance(
        source: &SourceParams,
        channel: &ChannelParams,
        tolerance: f64,
    ) -> Result<Self> {
        channel.validate()?;
        let pairs = HeraldedPairs::new(source, tolerance)?;
        let herald = pairs.total();
        Ok(Self {
            pairs,
            herald,
            channel: *channel,
        })
    }

    /// Herald probability per slot.
    pub fn herald_per_slot(&self) -> f64 {
        self.herald
    }

    /// Largest delivered photon number with nonzero weight.
    pub fn max_photons(&self) -> u32 {
        self.pairs.max_pairs()
    }

    pub fn p_load(&self, k: u32, j: u32) -> Result<f64> {
        if j == 0 {
            return Err(Error::invalid("slot index j must be >= 1"));
        }
        Ok(self.load(k, j))
    }

    pub fn p_emit(&self, k: u32, j: u32) -> Result<f64> {
        if j < 2 {
            return Err(Error::invalid(format!("p_emit needs slot j >= 2, got {j}")));
        }
        Ok(self.emit(k, j))
    }

    fn load(&self, k: u32, j: u32) -> f64 {
        let no_earlier = 1.0 - herald_within(self.herald, j - 1);
        no_earlier * self.pairs.emitted(k, self.channel.transmission(1))
    }

    fn emit(&self, k: u32, j: u32) -> f64 {
        if j < 2 {
            return 0.0;
        }
        let quiet_now = 1.0 - self.herald;
        // latest herald at j' < j, nothing in j'+1..=j
        let stored: f64 = (1..j)
            .map(|jp| {
                let quiet_between = 1.0 - herald_within(self.herald, j - 1 - jp);
                let passes = j - jp + 1;
                quiet_between * self.pairs.emitted(k, self.channel.transmission(passes)) * quiet_now
            })
            .sum();
        // heralded before and again at j: the fresh photon is used
        let reheralded =
            herald_within(self.herald, j - 1) * self.pairs.emitted(k, self.channel.transmission(1));
        stored + reheralded
    }
}

/// Enhancement normalization: pump pulses charged to one attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Every pulse of the F-slot frame.
    PerAttemptFrame,
    /// Only the N slots of the herald window.
    PerNSlots,
}

impl Normalization {
    pub fn pulses_per_attempt(self, config: &ExperimentConfig, n: u32) -> u32 {
        match self {
            Normalization::PerAttemptFrame => config.timing.slots_per_frame,
            Normalization::PerNSlots => n,
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-attempt-frame" | "frame" => Ok(Normalization::PerAttemptFrame),
            "per-n-slots" | "n-slots" => Ok(Normalization::PerNSlots),
            other => Err(Error::invalid(format!(
                "unknown normalization '{other}' (expected per-attempt-frame or per-n-slots)"
            ))),
        }
    }
}

/// Photon-number distribution of the two delivered outputs, indexed
/// `[k_a][k_b]` up to `k_max` inclusive.
#[derive(Debug, Clone, Serialize)]
pub struct JointPairTable {
    pub k_max: u32,
    pub n_max: u32,
    values: Vec<f64>,
}

impl JointPairTable {
    pub fn get(&self, k_a: u32, k_b: u32) -> f64 {
        if k_a > self.k_max || k_b > self.k_max {
            return 0.0;
        }
        self.values[(k_a * (self.k_max + 1) + k_b) as usize]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        let width = self.k_max + 1;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (i as u32 / width, i as u32 % width, v))
    }

    /// Mass of deliveries with more than one photon in total, other than the
    /// single-photon pair, relative to the (1,1) cell.
    pub fn multiphoton_ratio(&self) -> f64 {
        let multi: f64 = self
            .iter()
            .filter(|&(a, b, _)| a + b >= 2 && !(a == 1 && b == 1))
            .map(|(_, _, v)| v)
            .sum();
        multi / self.get(1, 1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SyncProbabilityReport {
    pub n_max: u32,
    pub p_sync: f64,
    pub joint_pair_dist: JointPairTable,
    pub enhancement: f64,
    pub normalization: Normalization,
    pub nonsync_prob_per_pulse: f64,
    pub sync_coincidence_per_pulse: f64,
}

/// Analytic model of the two-source experiment.
#[derive(Debug, Clone)]
pub struct SyncModel {
    config: ExperimentConfig,
    a: SourceSync,
    b: SourceSync,
}

impl SyncModel {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: *config,
            a: SourceSync::new(&config.source_a, &config.channel)?,
            b: SourceSync::new(&config.source_b, &config.channel)?,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn source(&self, which: Source) -> &SourceSync {
        match which {
            Source::A => &self.a,
            Source::B => &self.b,
        }
    }

    /// Probability that `m` sources each deliver exactly one photon within an
    /// `n`-slot window. Two sources may differ; more than two must share the
    /// parameters of source A and B.
    pub fn sync_prob(&self, m: u32, n: u32) -> Result<f64> {
        check_window(m, n)?;
        if m == 2 {
            let single = |s: &SourceSync, j: u32| (s.load(1, j), s.emit(1, j));
            return Ok((1..=n)
                .map(|j| {
                    let (la, ea) = single(&self.a, j);
                    let (lb, eb) = single(&self.b, j);
                    (la + ea) * (lb + eb) - ea * eb
                })
                .sum());
        }
        if self.config.source_a != self.config.source_b {
            return Err(Error::UnsupportedConfiguration(
                "more than two sources require identical source parameters".into(),
            ));
        }
        sync_prob_homogeneous(&self.a, m, n)
    }

    pub fn joint_pair_dist(&self, k_a: u32, k_b: u32, n: u32) -> Result<f64> {
        check_window(2, n)?;
        Ok((1..=n)
            .map(|j| {
                let (la, ea) = (self.a.load(k_a, j), self.a.emit(k_a, j));
                let (lb, eb) = (self.b.load(k_b, j), self.b.emit(k_b, j));
                la * eb + ea * lb + la * lb
            })
            .sum())
    }

    pub fn joint_pair_table(&self, n: u32) -> Result<JointPairTable> {
        check_window(2, n)?;
        let k_max = self.a.max_photons().max(self.b.max_photons());
        let width = (k_max + 1) as usize;
        let slot_table = |s: &SourceSync| -> Vec<(Vec<f64>, Vec<f64>)> {
            (1..=n)
                .map(|j| {
                    let load = (0..=k_max).map(|k| s.load(k, j)).collect();
                    let emit = (0..=k_max).map(|k| s.emit(k, j)).collect();
                    (load, emit)
                })
                .collect()
        };
        let ta = slot_table(&self.a);
        let tb = slot_table(&self.b);
        let mut values = vec![0.0; width * width];
        for ((la, ea), (lb, eb)) in ta.iter().zip(&tb) {
            for ka in 0..width {
                for kb in 0..width {
                    values[ka * width + kb] += la[ka] * eb[kb] + ea[ka] * lb[kb] + la[ka] * lb[kb];
                }
            }
        }
        Ok(JointPairTable {
            k_max,
            n_max: n,
            values,
        })
    }

    /// Per-pulse coincidence probability without synchronization: both
    /// sources herald in the same pulse and both photons are detected.
    pub fn nonsync_prob_per_pulse(&self) -> f64 {
        let ch = &self.config.channel;
        let arm = ch.transmission(1) * ch.eta_det;
        (self.a.herald * arm) * (self.b.herald * arm)
    }

    /// Synchronized single-photon coincidence probability per attempt.
    pub fn sync_coincidence_per_attempt(&self, n: u32) -> Result<f64> {
        Ok(self.sync_prob(2, n)? * self.config.channel.eta_det.powi(2))
    }

    pub fn enhancement_factor(&self, n: u32, normalization: Normalization) -> Result<f64> {
        let pulses = normalization.pulses_per_attempt(&self.config, n);
        if pulses < n {
            return Err(Error::invalid(format!(
                "a {n}-slot window does not fit into a {pulses}-slot frame"
            )));
        }
        let per_pulse = self.sync_coincidence_per_attempt(n)? / f64::from(pulses);
        Ok(per_pulse / self.nonsync_prob_per_pulse())
    }

    pub fn report(&self, n: u32, normalization: Normalization) -> Result<SyncProbabilityReport> {
        let pulses = normalization.pulses_per_attempt(&self.config, n);
        Ok(SyncProbabilityReport {
            n_max: n,
            p_sync: self.sync_prob(2, n)?,
            joint_pair_dist: self.joint_pair_table(n)?,
            enhancement: self.enhancement_factor(n, normalization)?,
            normalization,
            nonsync_prob_per_pulse: self.nonsync_prob_per_pulse(),
            sync_coincidence_per_pulse: self.sync_coincidence_per_attempt(n)? / f64::from(pulses),
        })
    }
}

fn check_window(m: u32, n: u32) -> Result<()> {
    if m < 2 {
        return Err(Error::invalid(format!("need at least two sources, got {m}")));
    }
    if n == 0 {
        return Err(Error::invalid("window length N must be >= 1"));
    }
    Ok(())
}

/// M identical sources, summed over the number `q` of sources that herald for
/// the first time in the completing slot.
pub fn sync_prob_homogeneous(source: &SourceSync, m: u32, n: u32) -> Result<f64> {
    check_window(m, n)?;
    let mut total = source.load(1, 1).powi(m as i32);
    for j in 2..=n {
        let load = source.load(1, j);
        let emit = source.emit(1, j);
        total += (1..=m)
            .map(|q| {
                binomial_coefficient(m, q) * load.powi(q as i32) * emit.powi((m - q) as i32)
            })
            .sum::<f64>();
    }
    Ok(total)
}

/// Lossless M-fold success probability {1 - (1-p)^N}^M.
pub fn ideal_sync_prob(p: f64, n: u32, m: u32) -> Result<f64> {
    check_probability("p", p)?;
    Ok(herald_within(p, n).powi(m as i32))
}

/// Small-p limit (pN)^M of [`ideal_sync_prob`].
pub fn ideal_sync_prob_small_p(p: f64, n: u32, m: u32) -> f64 {
    (p * f64::from(n)).powi(m as i32)
}

/// Largest attainable enhancement over simultaneous heralding, N^(M-1).
pub fn enhancement_bound(n: u32, m: u32) -> f64 {
    f64::from(n).powi(m as i32 - 1)
}

/// Lossless enhancement {1-(1-p)^N}^M / (p^M N).
pub fn ideal_enhancement(p: f64, n: u32, m: u32) -> Result<f64> {
    Ok(ideal_sync_prob(p, n, m)? / (p.powi(m as i32) * f64::from(n)))
}
