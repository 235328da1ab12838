//! MDI-QKD bookkeeping: coincidence tables, gain and QBER, binary entropy and
//! the single-photon secure-key-rate lower bound.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::model::line_col;

/// Error-correction inefficiency used by default.
pub const DEFAULT_EC_INEFFICIENCY: f64 = 1.16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
        })
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            other => Err(Error::invalid(format!("unknown basis '{other}', expected Z or X"))),
        }
    }
}

/// Coincidence counts `counts[i][j]` for input qubits |ij⟩ in one basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoincidenceTable {
    pub basis: Basis,
    pub counts: [[u64; 2]; 2],
    pub n_pulses: u64,
}

impl CoincidenceTable {
    pub fn new(basis: Basis, counts: [[u64; 2]; 2], n_pulses: u64) -> Result<Self> {
        let table = Self { basis, counts, n_pulses };
        if table.total() > n_pulses {
            return Err(Error::invalid(format!(
                "{basis} table holds {} coincidences but only {n_pulses} pulses",
                table.total()
            )));
        }
        Ok(table)
    }

    /// A table reproducing `gain` and `qber` up to integer rounding.
    pub fn synthetic(basis: Basis, gain: f64, qber: f64, n_pulses: u64) -> Result<Self> {
        check_probability("gain", gain)?;
        check_probability("qber", qber)?;
        let total = (gain * n_pulses as f64).round() as u64;
        let errors = (qber * total as f64).round() as u64;
        let right = total - errors;
        Self::new(
            basis,
            [[errors / 2, right - right / 2], [right / 2, errors - errors / 2]],
            n_pulses,
        )
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Coincidences from identical inputs |00⟩ and |11⟩.
    pub fn errors(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }
}

/// Reads tables from `n_pulses,<int>` followed by `basis,i,j,count` rows.
/// Blank lines and `#` comments are ignored; rows for the same cell add up.
pub fn parse_tables(text: &str, source_name: &str) -> Result<(CoincidenceTable, CoincidenceTable)> {
    let mut n_pulses = None;
    let mut cells = [[[0u64; 2]; 2]; 2];
    let mut seen = [false; 2];
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(line);
        let err = |col: usize, msg: String| Error::parse(source_name, line_no, col, msg);
        if fields[0].1.eq_ignore_ascii_case("n_pulses") {
            if fields.len() != 2 {
                return Err(err(1, "expected 'n_pulses,<count>'".into()));
            }
            let (col, value) = fields[1];
            let value = value.parse::<u64>().map_err(|_| err(col, format!("'{value}' is not a pulse count")))?;
            n_pulses = Some(value);
            continue;
        }
        if fields.len() != 4 {
            return Err(err(1, format!("expected 4 fields 'basis,i,j,count', found {}", fields.len())));
        }
        let basis: Basis = fields[0].1.parse().map_err(|e: Error| err(fields[0].0, e.to_string()))?;
        let bit = |(col, v): (usize, &str)| match v {
            "0" => Ok(0usize),
            "1" => Ok(1usize),
            _ => Err(err(col, format!("qubit label '{v}' must be 0 or 1"))),
        };
        let (i, j) = (bit(fields[1])?, bit(fields[2])?);
        let (col, count) = fields[3];
        let count = count.parse::<u64>().map_err(|_| err(col, format!("'{count}' is not a non-negative count")))?;
        let b = basis as usize;
        cells[b][i][j] += count;
        seen[b] = true;
    }
    let n_pulses = n_pulses.ok_or_else(|| Error::parse(source_name, 1, 1, "missing 'n_pulses,<count>' header"))?;
    for (b, name) in [(0, "Z"), (1, "X")] {
        if !seen[b] {
            return Err(Error::parse(source_name, text.lines().count().max(1), 1, format!("no {name} rows")));
        }
    }
    Ok((
        CoincidenceTable::new(Basis::Z, cells[0], n_pulses)?,
        CoincidenceTable::new(Basis::X, cells[1], n_pulses)?,
    ))
}

/// Comma-separated fields with their 1-based starting columns, trimmed.
fn split_fields(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for part in line.split(',') {
        let lead = part.len() - part.trim_start().len();
        out.push((start + lead + 1, part.trim()));
        start += part.len() + 1;
    }
    out
}

pub fn format_tables(z: &CoincidenceTable, x: &CoincidenceTable) -> String {
    let mut out = format!("n_pulses,{}\n", z.n_pulses);
    for t in [z, x] {
        for i in 0..2 {
            for j in 0..2 {
                out.push_str(&format!("{},{i},{j},{}\n", t.basis, t.counts[i][j]));
            }
        }
    }
    out
}

/// Offsets turning a measured quantity into its bound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QkdDeltas {
    pub gain_z: f64,
    pub gain_x: f64,
    pub qber_z: f64,
    pub qber_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QkdStats {
    pub gain_z: f64,
    pub gain_x: f64,
    /// `None` when the basis recorded no coincidence at all.
    pub qber_z: Option<f64>,
    pub qber_x: Option<f64>,
    pub deltas: QkdDeltas,
    pub n_pulses: u64,
}

impl QkdStats {
    /// Poisson standard errors implied by the gains, QBERs and pulse count.
    pub fn poisson_deltas(&self) -> QkdDeltas {
        let np = self.n_pulses as f64;
        let gain_err = |q: f64| (q * np).sqrt() / np;
        let qber_err = |q: f64, e: Option<f64>| match e {
            Some(e) if q > 0.0 => (e * (1.0 - e) / (q * np)).sqrt(),
            _ => 0.0,
        };
        QkdDeltas {
            gain_z: gain_err(self.gain_z),
            gain_x: gain_err(self.gain_x),
            qber_z: qber_err(self.gain_z, self.qber_z),
            qber_x: qber_err(self.gain_x, self.qber_x),
        }
    }

    /// QBERs above one half leave no key in any basis assignment.
    pub fn qber_above_half(&self) -> bool {
        [self.qber_z, self.qber_x].into_iter().flatten().any(|e| e > 0.5)
    }
}

pub fn gain_and_qber(table_z: &CoincidenceTable, table_x: &CoincidenceTable) -> Result<QkdStats> {
    if table_z.basis != Basis::Z || table_x.basis != Basis::X {
        return Err(Error::invalid("expected one Z table and one X table"));
    }
    if table_z.n_pulses != table_x.n_pulses {
        return Err(Error::invalid(format!(
            "tables disagree on the pulse count ({} vs {})",
            table_z.n_pulses, table_x.n_pulses
        )));
    }
    if table_z.n_pulses == 0 {
        return Err(Error::NoData("zero pump pulses".into()));
    }
    let np = table_z.n_pulses as f64;
    let qber = |t: &CoincidenceTable| (t.total() > 0).then(|| t.errors() as f64 / t.total() as f64);
    let mut stats = QkdStats {
        gain_z: table_z.total() as f64 / np,
        gain_x: table_x.total() as f64 / np,
        qber_z: qber(table_z),
        qber_x: qber(table_x),
        deltas: QkdDeltas::default(),
        n_pulses: table_z.n_pulses,
    };
    stats.deltas = stats.poisson_deltas();
    Ok(stats)
}

/// Base-2 binary entropy.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_probability("entropy argument", x)?;
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BoundMode {
    /// Use the deltas stored in the statistics as they are.
    ReportedOffsets,
    /// Use `n` Poisson standard errors recomputed from the statistics.
    PoissonNSigma(f64),
}

impl FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "reported" || s == "reported-offsets" {
            return Ok(BoundMode::ReportedOffsets);
        }
        let n = s
            .strip_prefix("poisson:")
            .or_else(|| s.strip_prefix("poisson-n-sigma:"))
            .ok_or_else(|| Error::invalid(format!("unknown bound mode '{s}', expected reported or poisson:<n>")))?;
        let n: f64 = n.parse().map_err(|_| Error::invalid(format!("'{n}' is not a sigma multiple")))?;
        if !(n >= 0.0 && n.is_finite()) {
            return Err(Error::invalid("sigma multiple must be finite and >= 0"));
        }
        Ok(BoundMode::PoissonNSigma(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateResult {
    pub rate_per_pulse: f64,
    /// Set once a pulse rate is supplied.
    pub rate_per_second: Option<f64>,
    pub gain_z_lower: f64,
    pub qber_x_upper: f64,
    pub qber_z_upper: f64,
    pub h_qber_x: f64,
    /// `f_e · h(e_Z^U)`.
    pub ec_leak: f64,
    pub f_e: f64,
}

impl KeyRateResult {
    pub fn with_pulse_rate(mut self, pulses_per_second: f64) -> Self {
        self.rate_per_second = Some(self.rate_per_pulse * pulses_per_second);
        self
    }

    pub fn secure(&self) -> bool {
        self.rate_per_pulse > 0.0
    }

    /// Flat `key=value` record, one field per line.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let mut field = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        field("rate_per_pulse", format!("{:e}", self.rate_per_pulse));
        if let Some(r) = self.rate_per_second {
            field("rate_per_second", format!("{r}"));
        }
        field("secure_key", self.secure().to_string());
        field("gain_z_lower", format!("{:e}", self.gain_z_lower));
        field("qber_x_upper", format!("{}", self.qber_x_upper));
        field("qber_z_upper", format!("{}", self.qber_z_upper));
        field("h_qber_x", format!("{}", self.h_qber_x));
        field("ec_leak", format!("{}", self.ec_leak));
        field("f_e", format!("{}", self.f_e));
        out
    }
}

pub fn secure_key_rate(stats: &QkdStats, f_e: f64, bound_mode: BoundMode) -> Result<KeyRateResult> {
    if !(f_e >= 1.0 && f_e.is_finite()) {
        return Err(Error::invalid(format!("f_e must be finite and >= 1, got {f_e}")));
    }
    let (e_x, e_z) = match (stats.qber_x, stats.qber_z) {
        (Some(x), Some(z)) => (x, z),
        _ => return Err(Error::NoData("a basis recorded no coincidences, so its QBER is undefined".into())),
    };
    let d = match bound_mode {
        BoundMode::ReportedOffsets => stats.deltas,
        BoundMode::PoissonNSigma(n) => {
            let p = stats.poisson_deltas();
            QkdDeltas {
                gain_z: n * p.gain_z,
                gain_x: n * p.gain_x,
                qber_z: n * p.qber_z,
                qber_x: n * p.qber_x,
            }
        }
    };
    let gain_z_lower = (stats.gain_z - d.gain_z).max(0.0);
    let qber_x_upper = (e_x + d.qber_x).min(1.0);
    let qber_z_upper = (e_z + d.qber_z).min(1.0);
    let h_qber_x = binary_entropy(qber_x_upper)?;
    let ec_leak = f_e * binary_entropy(qber_z_upper)?;
    Ok(KeyRateResult {
        rate_per_pulse: gain_z_lower * (1.0 - h_qber_x - ec_leak),
        rate_per_second: None,
        gain_z_lower,
        qber_x_upper,
        qber_z_upper,
        h_qber_x,
        ec_leak,
        f_e,
    })
}

/// Statistics after scaling each arm's transmission by `scale_per_arm` and,
/// optionally, replacing e_Z by `new_e_z` taken as an upper bound.
pub fn projected_stats(stats: &QkdStats, scale_per_arm: f64, new_e_z: Option<f64>) -> Result<QkdStats> {
    if !(scale_per_arm > 0.0 && scale_per_arm.is_finite()) {
        return Err(Error::invalid(format!("transmission scale must be positive, got {scale_per_arm}")));
    }
    let g = scale_per_arm * scale_per_arm;
    let mut out = *stats;
    out.gain_z *= g;
    out.gain_x *= g;
    out.deltas.gain_z *= g;
    out.deltas.gain_x *= g;
    if out.gain_z > 1.0 || out.gain_x > 1.0 {
        return Err(Error::invalid("projected gain exceeds one coincidence per pulse"));
    }
    if let Some(e) = new_e_z {
        check_probability("new_e_z", e)?;
        out.qber_z = Some(e);
        out.deltas.qber_z = 0.0;
    }
    Ok(out)
}

pub fn project_improvements(
    stats: &QkdStats,
    scale_per_arm: f64,
    new_e_z: Option<f64>,
    f_e: f64,
    bound_mode: BoundMode,
) -> Result<KeyRateResult> {
    secure_key_rate(&projected_stats(stats, scale_per_arm, new_e_z)?, f_e, bound_mode)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsFile {
    gain_z: f64,
    gain_x: f64,
    qber_z: Option<f64>,
    qber_x: Option<f64>,
    n_pulses: u64,
    #[serde(default)]
    delta_gain_z: f64,
    #[serde(default)]
    delta_gain_x: f64,
    #[serde(default)]
    delta_qber_z: f64,
    #[serde(default)]
    delta_qber_x: f64,
}

impl QkdStats {
    /// Reads `key = value` statistics: gains, QBERs, `n_pulses` and optional
    /// `delta_*` bound offsets.
    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let f: StatsFile = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            Error::parse(source_name, line, column, e.message().to_string())
        })?;
        let stats = QkdStats {
            gain_z: f.gain_z,
            gain_x: f.gain_x,
            qber_z: f.qber_z,
            qber_x: f.qber_x,
            deltas: QkdDeltas {
                gain_z: f.delta_gain_z,
                gain_x: f.delta_gain_x,
                qber_z: f.delta_qber_z,
                qber_x: f.delta_qber_x,
            },
            n_pulses: f.n_pulses,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("gain_z = {:e}\ngain_x = {:e}\n", self.gain_z, self.gain_x);
        if let Some(e) = self.qber_z {
            out.push_str(&format!("qber_z = {e}\n"));
        }
        if let Some(e) = self.qber_x {
            out.push_str(&format!("qber_x = {e}\n"));
        }
        out.push_str(&format!("n_pulses = {}\n", self.n_pulses));
        let d = &self.deltas;
        out.push_str(&format!(
            "delta_gain_z = {:e}\ndelta_gain_x = {:e}\ndelta_qber_z = {}\ndelta_qber_x = {}\n",
            d.gain_z, d.gain_x, d.qber_z, d.qber_x
        ));
        out
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("gain_z", self.gain_z)?;
        check_probability("gain_x", self.gain_x)?;
        for (name, e) in [("qber_z", self.qber_z), ("qber_x", self.qber_x)] {
            if let Some(e) = e {
                check_probability(name, e)?;
            }
        }
        let d = &self.deltas;
        if [d.gain_z, d.gain_x, d.qber_z, d.qber_x].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("bound offsets must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Measured statistics with and without synchronization, with the reported
/// ± figures as bound offsets.
pub fn reference_stats(synchronized: bool) -> QkdStats {
    let (gz, gx, ez, ex, dgz, dgx, dez, dex) = if synchronized {
        (1.976e-7, 1.969e-7, 0.0771, 0.0797, 0.033e-7, 0.033e-7, 0.0045, 0.0046)
    } else {
        (0.0688e-7, 0.0718e-7, 0.0747, 0.0791, 0.0060e-7, 0.0062e-7, 0.0237, 0.0239)
    };
    QkdStats {
        gain_z: gz,
        gain_x: gx,
        qber_z: Some(ez),
        qber_x: Some(ex),
        deltas: QkdDeltas {
            gain_z: dgz,
            gain_x: dgx,
            qber_z: dez,
            qber_x: dex,
        },
        n_pulses: 4_000_000_000,
    }
}
