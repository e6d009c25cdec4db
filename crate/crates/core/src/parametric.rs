//! One-dimensional robust location: the location M-estimator, data-driven
//! Huber scale, and Huber's least-favorable scale `γ_r` for the
//! contamination neighbourhood of the standard normal.

use serde::Serialize;

use crate::contrast::ContrastSpec;
use crate::error::{Error, Result};
use crate::special::normal_pdf;
use crate::variance::{variance_from_residuals, VarianceReport};

pub const GAMMA_R_TOLERANCE: f64 = 1e-12;
pub const LOCATION_TOLERANCE: f64 = 1e-12;

const GAMMA_LO: f64 = 1e-6;
const GAMMA_HI: f64 = 50.0;

/// `RHS(γ) − (1−r)^{−1}` with `RHS(γ) = 2∫₀^γ φ + 2φ(γ)/γ`, written through
/// `erfc` so that the small-`r` regime keeps its digits.
pub fn gamma_r_residual(gamma: f64, r: f64) -> f64 {
    2.0 * normal_pdf(gamma) / gamma - libm::erfc(gamma / std::f64::consts::SQRT_2) - r / (1.0 - r)
}

/// Solves `(1−r)^{−1} = 2∫₀^γ φ(z)dz + √2/(γ√π)·e^{−γ²/2}` for γ.
///
/// The right side is strictly decreasing in γ with derivative `−2φ(γ)/γ²`;
/// Newton steps are taken when they stay inside the current bracket,
/// bisection otherwise.
pub fn solve_gamma_r(r: f64, tol: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("contamination level must lie in (0, 1), got {r}")));
    }
    let (mut lo, mut hi) = (GAMMA_LO, GAMMA_HI);
    if !(gamma_r_residual(lo, r) > 0.0 && gamma_r_residual(hi, r) < 0.0) {
        return Err(Error::NoBracket { lo, hi });
    }
    let mut g = 1.0;
    for _ in 0..400 {
        let f = gamma_r_residual(g, r);
        if f == 0.0 {
            return Ok(g);
        }
        if f > 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        if hi - lo <= 2.0 * f64::EPSILON * g {
            break;
        }
        let slope = -2.0 * normal_pdf(g) / (g * g);
        let newton = g - f / slope;
        g = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let f = gamma_r_residual(g, r);
    if f.abs() <= tol {
        Ok(g)
    } else {
        Err(Error::Domain(format!("γ_r residual {f:e} above tolerance {tol:e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContaminationSpec {
    pub r: f64,
    pub gamma_r: f64,
    pub tolerance: f64,
}

impl ContaminationSpec {
    pub fn new(r: f64) -> Result<Self> {
        Self::with_tolerance(r, GAMMA_R_TOLERANCE)
    }

    pub fn with_tolerance(r: f64, tolerance: f64) -> Result<Self> {
        Ok(Self { r, gamma_r: solve_gamma_r(r, tolerance)?, tolerance })
    }

    /// The least-favorable Huber contrast.
    pub fn contrast(&self) -> ContrastSpec {
        ContrastSpec::huber(self.gamma_r)
    }
}

/// `argmin_{t ∈ [−M, M]} Σ ρ(v_i − t)` by bisection on the nondecreasing
/// criterion derivative, stopping once the bracket is shorter than `tol`.
pub fn fit_location(values: &[f64], c: &ContrastSpec, m: f64, tol: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(m > 0.0) {
        return Err(Error::Domain("box half-width must be positive".into()));
    }
    let derivative = |t: f64| -> f64 { -values.iter().map(|v| c.rho_prime(v - t)).sum::<f64>() };
    if derivative(-m) >= 0.0 {
        return Ok(-m);
    }
    if derivative(m) <= 0.0 {
        return Ok(m);
    }
    let (mut lo, mut hi) = (-m, m);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let dm = derivative(mid);
        if dm == 0.0 {
            return Ok(mid);
        }
        if dm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // a data value inside the final bracket may be an exact root
    if let Some(v) = values.iter().copied().filter(|v| *v >= lo && *v <= hi).find(|v| derivative(*v) == 0.0) {
        return Ok(v);
    }
    Ok(0.5 * (lo + hi))
}

/// `V̂` of a location fit: the local formula with `h = 1`, `K ≡ 1`.
pub fn location_variance(values: &[f64], c: &ContrastSpec, estimate: f64) -> VarianceReport {
    let residuals: Vec<f64> = values.iter().map(|v| v - estimate).collect();
    let ones = vec![1.0; values.len()];
    variance_from_residuals(c, &residuals, &ones, values.len(), 1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleTrace {
    pub gamma: f64,
    pub estimate: f64,
    pub report: VarianceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveLocation {
    pub estimate: f64,
    pub gamma: f64,
    pub traces: Vec<ScaleTrace>,
}

/// Fits every Huber scale of the grid, keeps the one with the smallest valid
/// `V̂` (ties to the smaller scale).
pub fn adaptive_scale_location(values: &[f64], gamma_grid: &[f64], m: f64, tol: f64) -> Result<AdaptiveLocation> {
    if gamma_grid.is_empty() {
        return Err(Error::Config("Huber scale grid is empty".into()));
    }
    let mut traces = Vec::with_capacity(gamma_grid.len());
    for &g in gamma_grid {
        let c = ContrastSpec::new(crate::contrast::ContrastKind::Huber, g)?;
        let estimate = fit_location(values, &c, m, tol)?;
        traces.push(ScaleTrace { gamma: g, estimate, report: location_variance(values, &c, estimate) });
    }
    let best = traces
        .iter()
        .filter(|t| t.report.valid)
        .min_by(|a, b| a.report.v_hat.total_cmp(&b.report.v_hat).then(a.gamma.total_cmp(&b.gamma)))
        .ok_or(Error::AllInvalid)?;
    Ok(AdaptiveLocation { estimate: best.estimate, gamma: best.gamma, traces: traces.clone() })
}

/// Geometric Huber scale grid over `[lo, hi]`, widened so that it brackets 1.
pub fn geometric_gamma_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let lo = lo.min(1.0);
    let hi = hi.max(1.0);
    if points <= 1 || lo == hi {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { hi } else { lo * (ratio * i as f64).exp() }).collect()
}

/// Median absolute deviation about the median (no consistency factor).
pub fn mad(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&dev)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Default Huber grid: 12 geometric points on `[0.25·MAD, 16·MAD]`, MAD
/// replaced by 1 when it vanishes.
pub fn default_gamma_grid(values: &[f64]) -> Vec<f64> {
    let s = mad(values);
    let s = if s > 0.0 && s.is_finite() { s } else { 1.0 };
    geometric_gamma_grid(0.25 * s, 16.0 * s, 12)
}
