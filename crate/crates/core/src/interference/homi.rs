//! Two-photon interference dip: model, Poisson-weighted fit and scan files.
//!
//! The dip is Gaussian in the delay δ:
//! `B + A·[1 − V·exp(−(δ − δ₀)²/(2σ²))]`. Widths are quoted as the full width
//! at half maximum of the dip, `FWHM = 2·√(2 ln 2)·σ`.

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{check_probability, Error, Result};

/// FWHM of a Gaussian in units of its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

const MAX_ITERATIONS: usize = 500;
const MIN_POINTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Background {
    Constant(f64),
    PerPoint(Vec<f64>),
}

impl Background {
    fn at(&self, i: usize) -> f64 {
        match self {
            Background::Constant(b) => *b,
            Background::PerPoint(v) => v[i],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Background::Constant(b) => *b,
            Background::PerPoint(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomiScan {
    pub delay_ps: Vec<f64>,
    pub counts: Vec<f64>,
    pub background: Background,
}

impl HomiScan {
    pub fn new(delay_ps: Vec<f64>, counts: Vec<f64>, background: Background) -> Result<Self> {
        if delay_ps.len() != counts.len() {
            return Err(Error::invalid("delay and count columns differ in length"));
        }
        if delay_ps.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("delays must be finite"));
        }
        let up = delay_ps.windows(2).all(|w| w[1] > w[0]);
        let down = delay_ps.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::invalid("delays must be strictly monotonic"));
        }
        if counts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::invalid("counts must be finite and >= 0"));
        }
        match &background {
            Background::Constant(b) if !(*b >= 0.0 && b.is_finite()) => {
                return Err(Error::invalid("background must be finite and >= 0"))
            }
            Background::PerPoint(v) if v.len() != counts.len() => {
                return Err(Error::invalid("background column length differs from the counts"))
            }
            Background::PerPoint(v) if v.iter().any(|b| !(*b >= 0.0 && b.is_finite())) => {
                return Err(Error::invalid("background must be finite and >= 0"))
            }
            _ => {}
        }
        Ok(Self {
            delay_ps,
            counts,
            background,
        })
    }

    /// Parses `delay_ps,counts[,background]` rows; `#` starts a comment.
    /// Two-column files take `background` as the constant background.
    pub fn from_text(text: &str, source_name: &str, background: f64) -> Result<Self> {
        let mut delays = Vec::new();
        let mut counts = Vec::new();
        let mut per_point = Vec::new();
        let mut columns = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            let mut values = Vec::new();
            let mut col = 0;
            for part in line.split(',') {
                let lead = part.len() - part.trim_start().len();
                let token = part.trim();
                let v = token.parse::<f64>().map_err(|_| {
                    Error::parse(source_name, line_no, col + lead + 1, format!("'{token}' is not a number"))
                })?;
                values.push(v);
                col += part.len() + 1;
            }
            if !(2..=3).contains(&values.len()) {
                return Err(Error::parse(source_name, line_no, 1, format!("expected 2 or 3 columns, found {}", values.len())));
            }
            if *columns.get_or_insert(values.len()) != values.len() {
                return Err(Error::parse(source_name, line_no, 1, "column count changes within the file"));
            }
            delays.push(values[0]);
            counts.push(values[1]);
            if let Some(&b) = values.get(2) {
                per_point.push(b);
            }
        }
        let bg = if columns == Some(3) {
            Background::PerPoint(per_point)
        } else {
            Background::Constant(background)
        };
        HomiScan::new(delays, counts, bg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# delay_ps,counts");
        if matches!(self.background, Background::PerPoint(_)) {
            out.push_str(",background");
        }
        out.push('\n');
        for i in 0..self.counts.len() {
            out.push_str(&format!("{},{}", self.delay_ps[i], self.counts[i]));
            if let Background::PerPoint(v) = &self.background {
                out.push_str(&format!(",{}", v[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Default delay grid: −20 ps to 20 ps in 0.5 ps steps.
pub fn scan_delays() -> Vec<f64> {
    (-40..=40).map(|k| f64::from(k) * 0.5).collect()
}

/// Generating parameters of a dip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomiParams {
    pub visibility: f64,
    /// FWHM of the dip.
    pub dip_width_ps: f64,
    pub amplitude: f64,
    pub center_ps: f64,
}

impl HomiParams {
    fn validate(&self) -> Result<()> {
        check_probability("visibility", self.visibility)?;
        if !(self.dip_width_ps > 0.0 && self.dip_width_ps.is_finite()) {
            return Err(Error::invalid(format!("dip width must be positive, got {}", self.dip_width_ps)));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite() && self.center_ps.is_finite()) {
            return Err(Error::invalid("amplitude must be >= 0 and the center finite"));
        }
        Ok(())
    }
}

/// Expected counts at `delay_ps` for a dip centered at zero delay.
pub fn homi_curve(delay_ps: f64, visibility: f64, dip_width_ps: f64, amplitude: f64, background: f64) -> Result<f64> {
    let p = HomiParams {
        visibility,
        dip_width_ps,
        amplitude,
        center_ps: 0.0,
    };
    p.validate()?;
    Ok(background + model(&p, delay_ps))
}

fn model(p: &HomiParams, delay: f64) -> f64 {
    let sigma = p.dip_width_ps / FWHM_PER_SIGMA;
    let x = delay - p.center_ps;
    p.amplitude * (1.0 - p.visibility * (-0.5 * (x / sigma).powi(2)).exp())
}

/// Poisson realization of a dip on the given delays.
pub fn synthetic_scan(params: &HomiParams, delay_ps: &[f64], background: f64, seed: u64) -> Result<HomiScan> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = delay_ps
        .iter()
        .map(|&d| {
            let mean = background + model(params, d);
            if mean <= 0.0 {
                return Ok(0.0);
            }
            Poisson::new(mean)
                .map(|p| p.sample(&mut rng))
                .map_err(|e| Error::invalid(format!("bad Poisson mean {mean}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    HomiScan::new(delay_ps.to_vec(), counts, Background::Constant(background))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomiUncertainties {
    pub visibility: f64,
    pub dip_width_ps: f64,
    pub amplitude: f64,
    pub center_ps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomiFit {
    /// Dip depth over the background-free amplitude.
    pub visibility_net: f64,
    /// Dip depth over the full far-delay level, background included.
    pub visibility_raw: f64,
    pub dip_width_ps: f64,
    pub sigma_ps: f64,
    pub center_ps: f64,
    pub amplitude: f64,
    /// Mean background held fixed during the fit.
    pub background: f64,
    /// One-standard-deviation errors from the Poisson-weighted curvature.
    pub uncertainties: HomiUncertainties,
    pub chi_square: f64,
    pub dof: usize,
    pub iterations: usize,
}

/// Poisson-weighted Levenberg–Marquardt fit with the background held at the
/// scan's estimate. Weights come from a first pass on the data, then from the
/// fitted curve.
pub fn fit_homi(scan: &HomiScan) -> Result<HomiFit> {
    let n = scan.counts.len();
    if n < MIN_POINTS {
        return Err(Error::invalid(format!("a dip fit needs at least {MIN_POINTS} points, got {n}")));
    }
    let start = initial_guess(scan);
    let data_weights: Vec<f64> = scan.counts.iter().map(|&c| 1.0 / c.max(1.0)).collect();
    let (first, _) = levenberg_marquardt(scan, start, &data_weights)?;
    let model_weights: Vec<f64> = (0..n)
        .map(|i| 1.0 / (scan.background.at(i) + model(&from_vec(&first), scan.delay_ps[i])).max(1.0))
        .collect();
    let (p, iterations) = levenberg_marquardt(scan, first, &model_weights)?;
    let params = from_vec(&p);
    let (jtj, _, chi_square) = normal_equations(scan, &p, &model_weights);
    let cov = jtj.try_inverse();
    let err = |k: usize| cov.map_or(f64::INFINITY, |c| c[(k, k)].max(0.0).sqrt());
    let background = scan.background.mean();
    let depth = params.amplitude * params.visibility;
    Ok(HomiFit {
        visibility_net: params.visibility,
        visibility_raw: depth / (params.amplitude + background),
        dip_width_ps: params.dip_width_ps.abs(),
        sigma_ps: params.dip_width_ps.abs() / FWHM_PER_SIGMA,
        center_ps: params.center_ps,
        amplitude: params.amplitude,
        background,
        uncertainties: HomiUncertainties {
            amplitude: err(0),
            visibility: err(1),
            dip_width_ps: err(2),
            center_ps: err(3),
        },
        chi_square,
        dof: n.saturating_sub(4),
        iterations,
    })
}

fn from_vec(p: &Vector4<f64>) -> HomiParams {
    HomiParams {
        amplitude: p[0],
        visibility: p[1],
        dip_width_ps: p[2],
        center_ps: p[3],
    }
}

fn initial_guess(scan: &HomiScan) -> Vector4<f64> {
    let n = scan.counts.len();
    let net: Vec<f64> = (0..n).map(|i| scan.counts[i] - scan.background.at(i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let d0 = scan.delay_ps.iter().sum::<f64>() / n as f64;
    order.sort_by(|&a, &b| {
        let (da, db) = ((scan.delay_ps[a] - d0).abs(), (scan.delay_ps[b] - d0).abs());
        db.total_cmp(&da)
    });
    let wings = &order[..(n / 4).max(2)];
    let amplitude = (wings.iter().map(|&i| net[i]).sum::<f64>() / wings.len() as f64).max(1.0);
    // three-point smoothing before locating the minimum
    let smooth = |i: usize| {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(n - 1);
        net[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
    };
    let i_min = (0..n).min_by(|&a, &b| smooth(a).total_cmp(&smooth(b))).unwrap_or(0);
    let visibility = ((amplitude - smooth(i_min)) / amplitude).clamp(0.05, 1.0);
    let half = amplitude * (1.0 - visibility / 2.0);
    let below: Vec<f64> = (0..n).filter(|&i| smooth(i) <= half).map(|i| scan.delay_ps[i]).collect();
    let span = (scan.delay_ps[n - 1] - scan.delay_ps[0]).abs();
    let step = span / (n - 1) as f64;
    let width = match (below.iter().cloned().reduce(f64::min), below.iter().cloned().reduce(f64::max)) {
        (Some(lo), Some(hi)) if hi > lo => hi - lo + step,
        _ => span / 6.0,
    };
    Vector4::new(amplitude, visibility, width, scan.delay_ps[i_min])
}

/// Returns JᵀWJ, JᵀWr and χ² at `p`.
fn normal_equations(scan: &HomiScan, p: &Vector4<f64>, weights: &[f64]) -> (Matrix4<f64>, Vector4<f64>, f64) {
    let params = from_vec(p);
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    let mut chi = 0.0;
    let sigma = params.dip_width_ps / FWHM_PER_SIGMA;
    for i in 0..scan.counts.len() {
        let x = scan.delay_ps[i] - params.center_ps;
        let g = (-0.5 * (x / sigma).powi(2)).exp();
        let m = scan.background.at(i) + params.amplitude * (1.0 - params.visibility * g);
        let r = scan.counts[i] - m;
        let av = params.amplitude * params.visibility * g;
        let j = Vector4::new(
            1.0 - params.visibility * g,
            -params.amplitude * g,
            -av * x * x / (sigma.powi(3) * FWHM_PER_SIGMA),
            -av * x / (sigma * sigma),
        );
        let w = weights[i];
        jtj += w * j * j.transpose();
        jtr += w * r * j;
        chi += w * r * r;
    }
    (jtj, jtr, chi)
}

fn levenberg_marquardt(scan: &HomiScan, start: Vector4<f64>, weights: &[f64]) -> Result<(Vector4<f64>, usize)> {
    let span = (scan.delay_ps[scan.delay_ps.len() - 1] - scan.delay_ps[0]).abs();
    let mut p = start;
    let mut lambda = 1e-3;
    let (mut jtj, mut jtr, mut chi) = normal_equations(scan, &p, weights);
    for iteration in 1..=MAX_ITERATIONS {
        let mut damped = jtj;
        for k in 0..4 {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial = p + step;
        // keep the width physical and the center inside the scan
        trial[2] = trial[2].abs().clamp(span * 1e-4, span * 10.0);
        let (tj, tr, tchi) = normal_equations(scan, &trial, weights);
        if !tchi.is_finite() {
            return Err(Error::ConvergenceFailure("non-finite residuals during the fit".into()));
        }
        if tchi <= chi {
            let gain = chi - tchi;
            let small_step = step.iter().zip(p.iter()).all(|(s, v)| s.abs() <= 1e-10 * (v.abs() + 1e-10));
            p = trial;
            jtj = tj;
            jtr = tr;
            chi = tchi;
            lambda = (lambda / 10.0).max(1e-12);
            if gain <= 1e-14 * chi.max(1e-300) || small_step {
                return Ok((p, iteration));
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // no downhill direction left: at a minimum
                return Ok((p, iteration));
            }
        }
    }
    Err(Error::ConvergenceFailure(format!(
        "residuals still decreasing after {MAX_ITERATIONS} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delays() -> Vec<f64> {
        (-30..=30).map(f64::from).collect()
    }

    #[test]
    fn curve_values() {
        let far = homi_curve(1e6, 0.957, 6.0, 100.0, 23.2).unwrap();
        assert!((far - 123.2).abs() < 1e-12);
        assert_eq!(homi_curve(0.0, 1.0, 6.0, 100.0, 0.0).unwrap(), 0.0);
        assert!((homi_curve(0.0, 0.957, 6.0, 100.0, 23.2).unwrap() - 27.5).abs() < 1e-9);
        let half = homi_curve(3.0, 1.0, 6.0, 100.0, 0.0).unwrap();
        assert!((half - 50.0).abs() < 1e-9, "FWHM convention: {half}");
        assert_eq!(homi_curve(2.5, 0.7, 6.0, 1.0, 0.0).unwrap(), homi_curve(-2.5, 0.7, 6.0, 1.0, 0.0).unwrap());
        assert!(homi_curve(0.0, 1.1, 6.0, 1.0, 0.0).is_err());
        assert!(homi_curve(0.0, 0.5, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let truth = HomiParams {
            visibility: 0.957,
            dip_width_ps: 6.0,
            amplitude: 400.0,
            center_ps: 0.7,
        };
        let counts: Vec<f64> = delays().iter().map(|&d| 23.2 + model(&truth, d)).collect();
        let scan = HomiScan::new(delays(), counts, Background::Constant(23.2)).unwrap();
        let fit = fit_homi(&scan).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.visibility_net, 0.957) < 1e-6);
        assert!(rel(fit.dip_width_ps, 6.0) < 1e-6);
        assert!(rel(fit.amplitude, 400.0) < 1e-6);
        assert!(rel(fit.center_ps, 0.7) < 1e-6);
        assert!(rel(fit.visibility_raw, 0.957 * 400.0 / 423.2) < 1e-6);
    }

    #[test]
    fn noisy_fit_recovers_parameters() {
        let truth = HomiParams {
            visibility: 0.957,
            dip_width_ps: 6.0,
            amplitude: 400.0,
            center_ps: 0.0,
        };
        let scan = synthetic_scan(&truth, &delays(), 23.2, 42).unwrap();
        let fit = fit_homi(&scan).unwrap();
        assert!((fit.visibility_net - 0.957).abs() < 4.0 * fit.uncertainties.visibility);
        assert!((fit.dip_width_ps - 6.0).abs() < 4.0 * fit.uncertainties.dip_width_ps);
        assert!(fit.uncertainties.visibility > 0.0 && fit.uncertainties.visibility < 0.05);
    }

    #[test]
    fn flat_scan_has_no_visibility() {
        let truth = HomiParams {
            visibility: 0.0,
            dip_width_ps: 6.0,
            amplitude: 400.0,
            center_ps: 0.0,
        };
        let scan = synthetic_scan(&truth, &delays(), 23.2, 7).unwrap();
        let fit = fit_homi(&scan).unwrap();
        assert!(fit.visibility_net.abs() < 3.0 * fit.uncertainties.visibility.max(0.02), "{fit:?}");
    }

    #[test]
    fn scan_io() {
        let truth = HomiParams {
            visibility: 0.9,
            dip_width_ps: 6.0,
            amplitude: 50.0,
            center_ps: 0.0,
        };
        let scan = synthetic_scan(&truth, &delays(), 2.0, 1).unwrap();
        let back = HomiScan::from_text(&scan.to_text(), "s", 2.0).unwrap();
        assert_eq!(back, scan);
        let three = HomiScan::from_text("-1,5,1\n0,2,1.5\n1,6,1\n", "s", 0.0).unwrap();
        assert_eq!(three.background, Background::PerPoint(vec![1.0, 1.5, 1.0]));
        assert!(matches!(HomiScan::from_text("0,1\n1,a\n", "s", 0.0), Err(Error::Parse { line: 2, column: 3, .. })));
        assert!(matches!(HomiScan::from_text("0,1\n1,2,3\n", "s", 0.0), Err(Error::Parse { line: 2, .. })));
        assert!(HomiScan::from_text("0,1\n0,2\n", "s", 0.0).is_err());
        let short = HomiScan::from_text("0,1\n1,2\n2,3\n", "s", 0.0).unwrap();
        assert!(matches!(fit_homi(&short), Err(Error::InvalidParameter(_))));
    }
}
