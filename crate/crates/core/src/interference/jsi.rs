use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Joint spectral intensity sampled on a rectangular grid. Rows follow the
/// signal axis, which carries the heralded photon; columns follow the idler.
#[derive(Debug, Clone, PartialEq)]
pub struct JsiGrid {
    signal_axis: Vec<f64>,
    idler_axis: Vec<f64>,
    intensity: DMatrix<f64>,
}

/// Relative tolerance for two axes to count as the same sampling.
const AXIS_MATCH_TOL: f64 = 1e-9;

impl JsiGrid {
    pub fn new(signal_axis: Vec<f64>, idler_axis: Vec<f64>, intensity: DMatrix<f64>) -> Result<Self> {
        if signal_axis.len() < 2 || idler_axis.len() < 2 {
            return Err(Error::invalid("a JSI grid needs at least 2x2 samples"));
        }
        if intensity.shape() != (signal_axis.len(), idler_axis.len()) {
            return Err(Error::invalid(format!(
                "intensity is {}x{} but the axes have {} and {} samples",
                intensity.nrows(),
                intensity.ncols(),
                signal_axis.len(),
                idler_axis.len()
            )));
        }
        check_axis("signal", &signal_axis)?;
        check_axis("idler", &idler_axis)?;
        if let Some(v) = intensity.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("intensity values must be finite and >= 0, found {v}")));
        }
        Ok(Self {
            signal_axis,
            idler_axis,
            intensity,
        })
    }

    /// Grid with unit-spaced integer axes.
    pub fn from_matrix(intensity: DMatrix<f64>) -> Result<Self> {
        let s = (0..intensity.nrows()).map(|i| i as f64).collect();
        let i = (0..intensity.ncols()).map(|i| i as f64).collect();
        Self::new(s, i, intensity)
    }

    pub fn signal_axis(&self) -> &[f64] {
        &self.signal_axis
    }

    pub fn idler_axis(&self) -> &[f64] {
        &self.idler_axis
    }

    pub fn intensity(&self) -> &DMatrix<f64> {
        &self.intensity
    }

    /// Elementwise square root of the intensity (flat spectral phase),
    /// scaled to unit Frobenius norm.
    pub fn amplitude(&self) -> Result<DMatrix<f64>> {
        let total: f64 = self.intensity.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateGrid("intensity is zero everywhere".into()));
        }
        Ok(self.intensity.map(|v| (v / total).sqrt()))
    }

    pub fn is_aligned_with(&self, other: &JsiGrid) -> bool {
        axes_match(&self.signal_axis, &other.signal_axis) && axes_match(&self.idler_axis, &other.idler_axis)
    }

    /// Bilinear interpolation onto new axes; zero outside the sampled area.
    pub fn resample(&self, signal_axis: Vec<f64>, idler_axis: Vec<f64>) -> Result<JsiGrid> {
        check_axis("signal", &signal_axis)?;
        check_axis("idler", &idler_axis)?;
        let values = DMatrix::from_fn(signal_axis.len(), idler_axis.len(), |r, c| {
            match (bracket(&self.signal_axis, signal_axis[r]), bracket(&self.idler_axis, idler_axis[c])) {
                (Some((r0, fr)), Some((c0, fc))) => {
                    let m = &self.intensity;
                    let at = |i: usize, j: usize| m[(i, j)];
                    let top = at(r0, c0) * (1.0 - fc) + at(r0, c0 + 1) * fc;
                    let bottom = at(r0 + 1, c0) * (1.0 - fc) + at(r0 + 1, c0 + 1) * fc;
                    top * (1.0 - fr) + bottom * fr
                }
                _ => 0.0,
            }
        });
        JsiGrid::new(signal_axis, idler_axis, values)
    }

    /// Text form: `signal:` and `idler:` axis lines, then one row of
    /// comma-separated intensities per signal sample.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = format!("signal: {}\nidler: {}\n", join(&self.signal_axis), join(&self.idler_axis));
        for r in 0..self.intensity.nrows() {
            let row: Vec<f64> = self.intensity.row(r).iter().copied().collect();
            let _ = writeln!(out, "{}", join(&row));
        }
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut signal = None;
        let mut idler = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            let (offset, body, slot) = if let Some(rest) = header(line, "signal:") {
                (line.len() - rest.len(), rest, Some(&mut signal))
            } else if let Some(rest) = header(line, "idler:") {
                (line.len() - rest.len(), rest, Some(&mut idler))
            } else {
                (0, line, None)
            };
            let values = parse_numbers(body, offset, source_name, line_no)?;
            match slot {
                Some(target) => *target = Some(values),
                None => {
                    if signal.is_none() || idler.is_none() {
                        return Err(Error::parse(source_name, line_no, 1, "intensity row before the signal/idler headers"));
                    }
                    rows.push(values);
                }
            }
        }
        let missing = |what: &str| Error::parse(source_name, 1, 1, format!("missing '{what}' header"));
        let signal = signal.ok_or_else(|| missing("signal:"))?;
        let idler = idler.ok_or_else(|| missing("idler:"))?;
        if rows.len() != signal.len() {
            return Err(Error::parse(
                source_name,
                text.lines().count(),
                1,
                format!("{} intensity rows for {} signal samples", rows.len(), signal.len()),
            ));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != idler.len()) {
            return Err(Error::invalid(format!(
                "intensity row {} has {} values for {} idler samples",
                r + 1,
                rows[r].len(),
                idler.len()
            )));
        }
        let matrix = DMatrix::from_fn(signal.len(), idler.len(), |r, c| rows[r][c]);
        JsiGrid::new(signal, idler, matrix)
    }
}

fn header<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let trimmed = line.trim_start();
    trimmed
        .get(..key.len())
        .filter(|head| head.eq_ignore_ascii_case(key))
        .map(|_| &trimmed[key.len()..])
}

fn parse_numbers(body: &str, offset: usize, source_name: &str, line_no: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut col = offset;
    for part in body.split(',') {
        let lead = part.len() - part.trim_start().len();
        let token = part.trim();
        let value = token
            .parse::<f64>()
            .map_err(|_| Error::parse(source_name, line_no, col + lead + 1, format!("'{token}' is not a number")))?;
        out.push(value);
        col += part.len() + 1;
    }
    Ok(out)
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} axis has non-finite samples")));
    }
    let up = axis.windows(2).all(|w| w[1] > w[0]);
    let down = axis.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::invalid(format!("{name} axis must be strictly monotonic")));
    }
    Ok(())
}

fn axes_match(a: &[f64], b: &[f64]) -> bool {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= AXIS_MATCH_TOL * scale)
}

/// Lower sample index and fractional position of `x` on a monotonic axis.
fn bracket(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    let ascending = axis[n - 1] > axis[0];
    let pos = |v: f64| if ascending { v } else { -v };
    let (lo, hi) = (pos(axis[0]), pos(axis[n - 1]));
    let t = pos(x);
    if t < lo || t > hi {
        return None;
    }
    let k = axis.partition_point(|&v| pos(v) <= t).clamp(1, n - 1) - 1;
    let frac = (t - pos(axis[k])) / (pos(axis[k + 1]) - pos(axis[k]));
    Some((k, frac))
}

/// Reduced spectral state of the heralded photon.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub density_matrix: DMatrix<f64>,
}

impl SpectralState {
    pub fn from_jsi(jsi: &JsiGrid) -> Result<Self> {
        let a = jsi.amplitude()?;
        Ok(Self {
            density_matrix: &a * a.transpose(),
        })
    }

    pub fn trace(&self) -> f64 {
        self.density_matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.density_matrix * &self.density_matrix).trace()
    }
}

/// Purity of the heralded photon, Σ σᵢ⁴ over the Schmidt coefficients σᵢ of
/// the normalized amplitude.
pub fn purity(jsi: &JsiGrid) -> Result<f64> {
    let a = jsi.amplitude()?;
    let sv = a.singular_values();
    Ok(sv.iter().map(|s| s.powi(4)).sum())
}

/// Trace overlap tr(ρ_a ρ_b) of the heralded states of two sources.
pub fn indistinguishability(jsi_a: &JsiGrid, jsi_b: &JsiGrid) -> Result<f64> {
    if !jsi_a.is_aligned_with(jsi_b) {
        return Err(Error::AxisMismatch(
            "the two grids are sampled differently; resample one onto the other's axes".into(),
        ));
    }
    let a = jsi_a.amplitude()?;
    let b = jsi_b.amplitude()?;
    // tr(A Aᵀ B Bᵀ) = ‖Aᵀ B‖²_F
    let cross = a.transpose() * b;
    Ok(cross.norm_squared())
}

/// Correlated two-dimensional Gaussian JSI. The intensity has standard
/// deviation `pump_width` along the axis rotated by `correlation_angle` from
/// the signal axis and `phasematch_width` across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianJsi {
    pub center_s: f64,
    pub center_i: f64,
    pub pump_width: f64,
    pub phasematch_width: f64,
    pub correlation_angle: f64,
}

impl Default for GaussianJsi {
    fn default() -> Self {
        Self {
            center_s: 1554.0,
            center_i: 1546.0,
            pump_width: 0.8,
            phasematch_width: 0.5,
            correlation_angle: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Samples per axis.
    pub points: usize,
    /// Half-width of each axis in units of the larger intensity width.
    pub half_span: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 64,
            half_span: 6.0,
        }
    }
}

pub const MIN_GAUSSIAN_POINTS: usize = 32;

impl GaussianJsi {
    pub fn grid(&self, spec: &GridSpec) -> Result<JsiGrid> {
        if !(self.pump_width > 0.0 && self.phasematch_width > 0.0) {
            return Err(Error::invalid("Gaussian JSI widths must be positive"));
        }
        if spec.points < MIN_GAUSSIAN_POINTS {
            return Err(Error::invalid(format!(
                "grid resolution must be at least {MIN_GAUSSIAN_POINTS} points per axis"
            )));
        }
        if !(spec.half_span > 0.0 && spec.half_span.is_finite()) || !self.correlation_angle.is_finite() {
            return Err(Error::invalid("grid span and correlation angle must be finite, span > 0"));
        }
        let half = spec.half_span * self.pump_width.max(self.phasematch_width);
        let axis = |center: f64| -> Vec<f64> {
            (0..spec.points)
                .map(|k| center - half + 2.0 * half * k as f64 / (spec.points - 1) as f64)
                .collect()
        };
        let signal = axis(self.center_s);
        let idler = axis(self.center_i);
        let (sin, cos) = self.correlation_angle.sin_cos();
        let intensity = DMatrix::from_fn(spec.points, spec.points, |r, c| {
            let ds = signal[r] - self.center_s;
            let di = idler[c] - self.center_i;
            let u = cos * ds + sin * di;
            let v = -sin * ds + cos * di;
            (-0.5 * (u / self.pump_width).powi(2) - 0.5 * (v / self.phasematch_width).powi(2)).exp()
        });
        JsiGrid::new(signal, idler, intensity)
    }

    /// Purity of the continuous Gaussian state; grids converge to it.
    pub fn continuum_purity(&self) -> f64 {
        let (a, b) = (self.pump_width.powi(2), self.phasematch_width.powi(2));
        let u = (self.correlation_angle.sin() * self.correlation_angle.cos()).powi(2);
        (a * b / (a * b + u * (a - b).powi(2))).sqrt()
    }
}

pub fn gaussian_jsi(
    center_s: f64,
    center_i: f64,
    pump_width: f64,
    phasematch_width: f64,
    correlation_angle: f64,
    grid_spec: &GridSpec,
) -> Result<JsiGrid> {
    GaussianJsi {
        center_s,
        center_i,
        pump_width,
        phasematch_width,
        correlation_angle,
    }
    .grid(grid_spec)
}
