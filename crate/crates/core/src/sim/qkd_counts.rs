//! Synthetic MDI-QKD coincidence tables from the two-source simulation.
//!
//! Each synchronized frame sends one qubit per source into a beam-splitter
//! Bell-state measurement; a coincidence between the two output detectors
//! projects onto the singlet. A single photon from each source reaches
//! different outputs with probability ½ when the qubits are orthogonal and
//! ½·(1 − V) when they are identical. Every other delivery is routed
//! classically, photon by photon, and so adds background independent of the
//! qubit values.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::engine::{SimOptions, Simulator};
use super::rng::RngContract;
use crate::analytic::{JointPairTable, Normalization};
use crate::error::{check_probability, Error, Result};
use crate::model::ExperimentConfig;
use crate::qkd::{Basis, CoincidenceTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Qubit {
    /// Early time bin, |e⟩.
    E,
    /// Late time bin, |l⟩.
    L,
    Plus,
    Minus,
}

impl Qubit {
    pub fn basis(self) -> Basis {
        match self {
            Qubit::E | Qubit::L => Basis::Z,
            Qubit::Plus | Qubit::Minus => Basis::X,
        }
    }

    /// Bit value: 0 for |e⟩ and |+⟩.
    pub fn bit(self) -> usize {
        match self {
            Qubit::E | Qubit::Plus => 0,
            Qubit::L | Qubit::Minus => 1,
        }
    }

    fn from_char(c: char) -> Option<Self> {
        match c {
            'e' | 'E' => Some(Qubit::E),
            'l' | 'L' => Some(Qubit::L),
            '+' => Some(Qubit::Plus),
            '-' | '−' => Some(Qubit::Minus),
            _ => None,
        }
    }

    fn symbol(self) -> char {
        match self {
            Qubit::E => 'e',
            Qubit::L => 'l',
            Qubit::Plus => '+',
            Qubit::Minus => '-',
        }
    }
}

/// Input pairs cycled frame by frame: frame `i` uses entry `i mod len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QubitSchedule {
    pairs: Vec<(Qubit, Qubit)>,
}

impl QubitSchedule {
    pub fn new(pairs: Vec<(Qubit, Qubit)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("qubit schedule is empty"));
        }
        if let Some((a, b)) = pairs.iter().find(|(a, b)| a.basis() != b.basis()) {
            return Err(Error::invalid(format!(
                "input pair {}{} mixes bases",
                a.symbol(),
                b.symbol()
            )));
        }
        Ok(Self { pairs })
    }

    /// All four input pairs of one basis.
    pub fn uniform(basis: Basis) -> Self {
        let (zero, one) = match basis {
            Basis::Z => (Qubit::E, Qubit::L),
            Basis::X => (Qubit::Plus, Qubit::Minus),
        };
        Self {
            pairs: vec![(zero, zero), (zero, one), (one, zero), (one, one)],
        }
    }

    /// The eight basis-matched pairs, Z first.
    pub fn both_bases() -> Self {
        let mut pairs = Self::uniform(Basis::Z).pairs;
        pairs.extend(Self::uniform(Basis::X).pairs);
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(Qubit, Qubit)] {
        &self.pairs
    }

    pub fn get(&self, frame: u64) -> (Qubit, Qubit) {
        self.pairs[(frame % self.pairs.len() as u64) as usize]
    }
}

impl FromStr for QubitSchedule {
    type Err = Error;

    /// Comma-separated two-symbol pairs over `e`, `l`, `+`, `-`, e.g.
    /// `ee,el,le,ll`.
    fn from_str(s: &str) -> Result<Self> {
        let pairs = s
            .split(',')
            .map(|token| {
                let token = token.trim();
                let symbols: Vec<Qubit> = token.chars().map(Qubit::from_char).collect::<Option<_>>().ok_or_else(
                    || Error::invalid(format!("'{token}' contains a symbol other than e, l, +, -")),
                )?;
                match symbols[..] {
                    [a, b] => Ok((a, b)),
                    _ => Err(Error::invalid(format!("'{token}' is not a pair of qubits"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }
}

impl fmt::Display for QubitSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (a, b)) in self.pairs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}{}", a.symbol(), b.symbol())?;
        }
        Ok(())
    }
}

/// Detector model of the Bell-state measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BsmModel {
    /// Two-photon interference visibility.
    pub visibility: f64,
    pub eta_det: f64,
    /// Dark-click probability per detector and attempt.
    pub dark_prob: f64,
}

impl BsmModel {
    pub fn validate(&self) -> Result<()> {
        check_probability("visibility", self.visibility)?;
        check_probability("eta_det", self.eta_det)?;
        check_probability("dark_prob", self.dark_prob)
    }

    /// Probability that both detectors click when `n_a` and `n_b` photons
    /// arrive with the given qubit relation.
    pub fn coincidence_prob(&self, n_a: u32, n_b: u32, identical: bool) -> f64 {
        let eta = self.eta_det;
        let keep = 1.0 - self.dark_prob;
        if n_a == 1 && n_b == 1 {
            let split = if identical { 0.5 * (1.0 - self.visibility) } else { 0.5 };
            let one = 1.0 - (1.0 - eta) * keep;
            let apart = one * one;
            // photons bunched in one output: that detector clicks unless
            // both photons are missed, the other only by a dark click
            let together = (1.0 - keep * (1.0 - eta).powi(2)) * (1.0 - keep);
            return split * apart + (1.0 - split) * together;
        }
        let n = n_a + n_b;
        1.0 - 2.0 * keep * (1.0 - eta / 2.0).powi(n as i32) + keep * keep * (1.0 - eta).powi(n as i32)
    }

    /// Samples one measurement; the outcome has the law of
    /// [`coincidence_prob`](Self::coincidence_prob).
    pub fn sample(&self, rng: &mut ChaCha8Rng, n_a: u32, n_b: u32, identical: bool) -> bool {
        let mut hits = [false; 2];
        if n_a == 1 && n_b == 1 {
            let split = if identical { 0.5 * (1.0 - self.visibility) } else { 0.5 };
            if rng.random::<f64>() < split {
                hits[0] = rng.random::<f64>() < self.eta_det;
                hits[1] = rng.random::<f64>() < self.eta_det;
            } else {
                let port = usize::from(rng.random::<bool>());
                hits[port] = (0..2).any(|_| rng.random::<f64>() < self.eta_det);
            }
        } else {
            for _ in 0..n_a + n_b {
                let port = usize::from(rng.random::<bool>());
                hits[port] |= rng.random::<f64>() < self.eta_det;
            }
        }
        if self.dark_prob > 0.0 {
            for hit in hits.iter_mut() {
                *hit |= rng.random::<f64>() < self.dark_prob;
            }
        }
        hits[0] && hits[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QkdCountOptions {
    pub visibility: f64,
    /// Count coincidences from deliveries other than one photon per source.
    pub include_multiphoton: bool,
    /// Pump pulses charged per synchronization attempt.
    pub normalization: Normalization,
}

impl Default for QkdCountOptions {
    fn default() -> Self {
        Self {
            visibility: 0.92,
            include_multiphoton: true,
            normalization: Normalization::PerNSlots,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QkdCounts {
    pub z: CoincidenceTable,
    pub x: CoincidenceTable,
    pub n_frames: u64,
    pub sync_successes: u64,
    /// Coincidences from single-photon deliveries, by qubit relation:
    /// `[identical, orthogonal]`.
    pub single_photon: [u64; 2],
    /// Coincidences from every other delivery.
    pub background: u64,
    /// Synchronized frames by qubit relation, `[identical, orthogonal]`.
    pub frames_by_relation: [u64; 2],
}

impl QkdCounts {
    /// Identical-qubit over orthogonal-qubit coincidences per frame of each
    /// kind.
    pub fn identical_to_orthogonal(&self) -> f64 {
        let per = |c: u64, f: u64| c as f64 / f as f64;
        let ident = self.z.errors() + self.x.errors();
        let orth = self.z.total() + self.x.total() - ident;
        per(ident, self.frames_by_relation[0]) / per(orth, self.frames_by_relation[1])
    }
}

#[derive(Clone)]
struct Tally {
    cells: [[[u64; 2]; 2]; 2],
    sync: u64,
    single: [u64; 2],
    background: u64,
    frames: [u64; 2],
}

pub fn generate_qkd_counts(
    config: &ExperimentConfig,
    schedule: &QubitSchedule,
    options: QkdCountOptions,
    sim_options: SimOptions,
    n_frames: u64,
    seed: RngContract,
) -> Result<QkdCounts> {
    let bsm = BsmModel {
        visibility: options.visibility,
        eta_det: config.channel.eta_det,
        dark_prob: if sim_options.dark_counts { config.channel.det_dark_prob } else { 0.0 },
    };
    bsm.validate()?;
    let sim = Simulator::new(config, sim_options)?;
    let empty = Tally {
        cells: [[[0; 2]; 2]; 2],
        sync: 0,
        single: [0; 2],
        background: 0,
        frames: [0; 2],
    };
    let tally = sim.run_chunks(
        n_frames,
        seed,
        empty,
        |acc, sim, index, rng| {
            let outcome = sim.frame_with(index, rng);
            if outcome.chosen_pair.is_none() {
                return;
            }
            acc.sync += 1;
            let (qa, qb) = schedule.get(index);
            let identical = qa == qb;
            let relation = usize::from(!identical);
            acc.frames[relation] += 1;
            let (ka, kb) = outcome.photons_delivered;
            let single = ka == 1 && kb == 1;
            if !single && !options.include_multiphoton {
                return;
            }
            if bsm.sample(rng, ka, kb, identical) {
                acc.cells[qa.basis() as usize][qa.bit()][qb.bit()] += 1;
                if single {
                    acc.single[relation] += 1;
                } else {
                    acc.background += 1;
                }
            }
        },
        |mut acc, part| {
            for b in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        acc.cells[b][i][j] += part.cells[b][i][j];
                    }
                }
                acc.single[b] += part.single[b];
                acc.frames[b] += part.frames[b];
            }
            acc.sync += part.sync;
            acc.background += part.background;
            acc
        },
    )?;
    let pulses = options.normalization.pulses_per_attempt(config, config.timing.max_storage);
    let n_pulses = n_frames
        .checked_mul(u64::from(pulses))
        .ok_or_else(|| Error::ResourceLimit("pulse count overflows".into()))?;
    Ok(QkdCounts {
        z: CoincidenceTable::new(Basis::Z, tally.cells[0], n_pulses)?,
        x: CoincidenceTable::new(Basis::X, tally.cells[1], n_pulses)?,
        n_frames,
        sync_successes: tally.sync,
        single_photon: tally.single,
        background: tally.background,
        frames_by_relation: tally.frames,
    })
}

/// Expected coincidence probability per attempt for one qubit relation,
/// summing the BSM response over the delivered photon-number distribution.
pub fn expected_coincidence(table: &JointPairTable, bsm: &BsmModel, identical: bool, include_multiphoton: bool) -> f64 {
    table
        .iter()
        .filter(|&(a, b, _)| include_multiphoton || (a == 1 && b == 1))
        .map(|(a, b, p)| p * bsm.coincidence_prob(a, b, identical))
        .sum()
}
