//! Regression model `Y = f*(X) + σ(X)·ξ`: target library, designs, noise
//! levels, noise laws (including contaminated normals and Huber's least
//! favourable density g₀), sample generation and CSV export.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parametric::{solve_gamma_r, GAMMA_R_TOLERANCE};
use crate::quadrature::{integrate_to_infinity, QuadratureRule, Tolerance};
use crate::rng::{design_stream, noise_stream, StreamRng};
use crate::special::{normal_cdf, normal_pdf};

pub const SCHEMA_VERSION: u32 = 1;

/// Hölder smoothness metadata `(β, L, M)` of a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderClass {
    pub beta: f64,
    pub lipschitz: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Constant {
        value: f64,
    },
    /// `Σ_k c_k (x_axis − center)^k`.
    Polynomial {
        coefficients: Vec<f64>,
        #[serde(default)]
        center: f64,
        #[serde(default)]
        axis: usize,
    },
    /// `scale · |x_axis − center|^β`, Hölder-β at the center for β ≤ 1.
    Cusp {
        center: f64,
        beta: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        axis: usize,
    },
    /// `amplitude · sin(2π·frequency·x_axis + phase)`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        axis: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl TargetSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            TargetSpec::Constant { value } => value,
            TargetSpec::Polynomial { ref coefficients, center, axis } => {
                let u = x[axis] - center;
                coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c)
            }
            TargetSpec::Cusp { center, beta, scale, axis } => scale * (x[axis] - center).abs().powf(beta),
            TargetSpec::Sinusoid { amplitude, frequency, phase, axis } => amplitude * (2.0 * PI * frequency * x[axis] + phase).sin(),
        }
    }

    fn axis(&self) -> Option<usize> {
        match *self {
            TargetSpec::Constant { .. } => None,
            TargetSpec::Polynomial { axis, .. } | TargetSpec::Cusp { axis, .. } | TargetSpec::Sinusoid { axis, .. } => Some(axis),
        }
    }

    /// Smoothness metadata on `[0, 1]^d`. Polynomials and constants report an
    /// infinite β; the sinusoid reports β = 2, the largest order a local
    /// linear fit exploits, with `L = amplitude·(2π·frequency)²`.
    pub fn holder(&self) -> HolderClass {
        match *self {
            TargetSpec::Constant { value } => HolderClass { beta: f64::INFINITY, lipschitz: 0.0, bound: value.abs() },
            TargetSpec::Polynomial { ref coefficients, center, .. } => {
                let r = center.abs().max((1.0 - center).abs());
                let bound = coefficients.iter().enumerate().map(|(k, c)| c.abs() * r.powi(k as i32)).sum();
                HolderClass { beta: f64::INFINITY, lipschitz: 0.0, bound }
            }
            TargetSpec::Cusp { center, beta, scale, .. } => {
                let r = center.abs().max((1.0 - center).abs());
                HolderClass { beta, lipschitz: scale.abs(), bound: scale.abs() * r.powf(beta) }
            }
            TargetSpec::Sinusoid { amplitude, frequency, .. } => {
                HolderClass { beta: 2.0, lipschitz: amplitude.abs() * (2.0 * PI * frequency).powi(2), bound: amplitude.abs() }
            }
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if let Some(a) = self.axis() {
            if a >= d {
                return Err(Error::Config(format!("target axis {a} out of range for d = {d}")));
            }
        }
        if let TargetSpec::Cusp { beta, .. } = *self {
            if !(beta > 0.0) {
                return Err(Error::Config("cusp exponent must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    Uniform,
    /// Density `(s+1)/(x0^{s+1} + (1−x0)^{s+1}) · |x − x0|^s` on `[0, 1]` (d = 1).
    DegenerateS {
        s: f64,
        x0: f64,
    },
}

impl DesignSpec {
    fn validate(&self, d: usize) -> Result<()> {
        if let DesignSpec::DegenerateS { s, x0 } = *self {
            if d != 1 {
                return Err(Error::Config("degenerate design is one-dimensional".into()));
            }
            if !(s > -1.0) {
                return Err(Error::Config(format!("degenerate design needs s > -1, got {s}")));
            }
            if !(0.0..=1.0).contains(&x0) {
                return Err(Error::Config(format!("design center {x0} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn normalizer(s: f64, x0: f64) -> f64 {
        x0.powf(s + 1.0) + (1.0 - x0).powf(s + 1.0)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return 0.0;
        }
        match *self {
            DesignSpec::Uniform => 1.0,
            DesignSpec::DegenerateS { s, x0 } => (s + 1.0) / Self::normalizer(s, x0) * (x[0] - x0).abs().powf(s),
        }
    }

    /// One-dimensional distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match *self {
            DesignSpec::Uniform => x,
            DesignSpec::DegenerateS { s, x0 } => {
                let e = s + 1.0;
                let a = x0.powf(e);
                let num = if x <= x0 { a - (x0 - x).powf(e) } else { a + (x - x0).powf(e) };
                num / Self::normalizer(s, x0)
            }
        }
    }

    pub fn cdf_inverse(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        Ok(match *self {
            DesignSpec::Uniform => p,
            DesignSpec::DegenerateS { s, x0 } => {
                let e = s + 1.0;
                let a = x0.powf(e);
                let target = p * Self::normalizer(s, x0);
                let x = if target <= a { x0 - (a - target).max(0.0).powf(1.0 / e) } else { x0 + (target - a).powf(1.0 / e) };
                x.clamp(0.0, 1.0)
            }
        })
    }

    /// Row-major `n × d` design points.
    pub fn sample(&self, d: usize, n: usize, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            out.push(self.cdf_inverse(rng.next_f64())?);
        }
        Ok(out)
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            DesignSpec::Uniform => Vec::new(),
            DesignSpec::DegenerateS { x0, .. } => vec![x0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseLevelSpec {
    Constant {
        sigma: f64,
    },
    /// σ(x) = ‖x − center‖^α.
    PowerDistance {
        alpha: f64,
        center: Vec<f64>,
    },
    /// σ(x) = 1 + ‖x − center‖^α.
    OnePlusPower {
        alpha: f64,
        center: Vec<f64>,
    },
}

impl NoiseLevelSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let dist = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        match self {
            NoiseLevelSpec::Constant { sigma } => *sigma,
            NoiseLevelSpec::PowerDistance { alpha, center } => power(dist(center), *alpha),
            NoiseLevelSpec::OnePlusPower { alpha, center } => 1.0 + power(dist(center), *alpha),
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            NoiseLevelSpec::Constant { sigma } if !(*sigma >= 0.0) => {
                Err(Error::Config(format!("noise level must be nonnegative, got {sigma}")))
            }
            NoiseLevelSpec::PowerDistance { alpha, center } | NoiseLevelSpec::OnePlusPower { alpha, center } => {
                if !(*alpha >= 0.0) {
                    return Err(Error::Config("noise level exponent must be nonnegative".into()));
                }
                if center.len() != d {
                    return Err(Error::Config(format!("noise level center has {} coordinates, d = {d}", center.len())));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        match self {
            NoiseLevelSpec::Constant { .. } => Vec::new(),
            NoiseLevelSpec::PowerDistance { center, .. } | NoiseLevelSpec::OnePlusPower { center, .. } => vec![center[axis]],
        }
    }
}

// 0^0 = 1 so that α = 0 gives a constant level.
fn power(r: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else {
        r.powf(alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian {
        sd: f64,
    },
    StudentT {
        dof: f64,
    },
    Cauchy {
        scale: f64,
    },
    /// `(1 − r)·N(0, 1) + r·contaminant`.
    ContaminatedNormal {
        r: f64,
        contaminant: Box<NoiseSpec>,
    },
    /// Huber's least favourable density g₀ for contamination level r.
    LeastFavorable {
        r: f64,
    },
}

impl NoiseSpec {
    pub fn resolve(&self) -> Result<NoiseLaw> {
        Ok(match self {
            NoiseSpec::Gaussian { sd } => {
                if !(*sd >= 0.0 && sd.is_finite()) {
                    return Err(Error::Config(format!("gaussian sd must be nonnegative, got {sd}")));
                }
                NoiseLaw::Gaussian { sd: *sd }
            }
            NoiseSpec::StudentT { dof } => {
                if !(*dof > 0.0) {
                    return Err(Error::Config("student-t degrees of freedom must be positive".into()));
                }
                let log_c = libm::lgamma(0.5 * (dof + 1.0)) - libm::lgamma(0.5 * dof) - 0.5 * (dof * PI).ln();
                NoiseLaw::StudentT { dof: *dof, log_norm: log_c }
            }
            NoiseSpec::Cauchy { scale } => {
                if !(*scale > 0.0) {
                    return Err(Error::Config("cauchy scale must be positive".into()));
                }
                NoiseLaw::Cauchy { scale: *scale }
            }
            NoiseSpec::ContaminatedNormal { r, contaminant } => {
                if !(0.0..1.0).contains(r) {
                    return Err(Error::Config(format!("contamination level {r} outside [0, 1)")));
                }
                NoiseLaw::Contaminated { r: *r, contaminant: Box::new(contaminant.resolve()?) }
            }
            NoiseSpec::LeastFavorable { r } => NoiseLaw::LeastFavorable(LeastFavorable::new(*r)?),
        })
    }
}

/// g₀ with its clipping scale γ_r solved once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeastFavorable {
    pub r: f64,
    pub gamma_r: f64,
}

impl LeastFavorable {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Domain(format!("least favourable density needs 0 < r < 1, got {r}")));
        }
        Ok(Self { r, gamma_r: solve_gamma_r(r, GAMMA_R_TOLERANCE)? })
    }

    pub fn density(&self, t: f64) -> f64 {
        let c = (1.0 - self.r) / (2.0 * PI).sqrt();
        let g = self.gamma_r;
        let a = t.abs();
        if a <= g {
            c * (-0.5 * t * t).exp()
        } else {
            c * (-g * a + 0.5 * g * g).exp()
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t > 0.0 {
            return 1.0 - self.cdf(-t);
        }
        let c = (1.0 - self.r) / (2.0 * PI).sqrt();
        let g = self.gamma_r;
        let tail_mass = c / g * (-0.5 * g * g).exp();
        if t <= -g {
            c / g * (g * t + 0.5 * g * g).exp()
        } else {
            tail_mass + (1.0 - self.r) * (normal_cdf(t) - normal_cdf(-g))
        }
    }

    /// Inverse distribution function by bisection to a 1e-12 bracket.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        let (mut lo, mut hi) = (-1.0, 1.0);
        while self.cdf(lo) > p {
            lo *= 2.0;
        }
        while self.cdf(hi) < p {
            hi *= 2.0;
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// g₀(t) for contamination level r.
pub fn g0_density(t: f64, r: f64) -> Result<f64> {
    if r >= 1.0 {
        return Err(Error::Domain(format!("contamination level {r} must be below 1")));
    }
    Ok(LeastFavorable::new(r)?.density(t))
}

/// A noise specification with all derived constants computed.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseLaw {
    Gaussian { sd: f64 },
    StudentT { dof: f64, log_norm: f64 },
    Cauchy { scale: f64 },
    Contaminated { r: f64, contaminant: Box<NoiseLaw> },
    LeastFavorable(LeastFavorable),
}

impl NoiseLaw {
    pub fn density(&self, t: f64) -> f64 {
        match self {
            NoiseLaw::Gaussian { sd } => {
                if *sd == 0.0 {
                    if t == 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else {
                    normal_pdf(t / sd) / sd
                }
            }
            NoiseLaw::StudentT { dof, log_norm } => (log_norm - 0.5 * (dof + 1.0) * (t * t / dof).ln_1p()).exp(),
            NoiseLaw::Cauchy { scale } => 1.0 / (PI * scale * (1.0 + (t / scale).powi(2))),
            NoiseLaw::Contaminated { r, contaminant } => (1.0 - r) * normal_pdf(t) + r * contaminant.density(t),
            NoiseLaw::LeastFavorable(g0) => g0.density(t),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            NoiseLaw::Gaussian { sd } => {
                if *sd == 0.0 {
                    if t >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    normal_cdf(t / sd)
                }
            }
            NoiseLaw::StudentT { .. } => {
                let half = integrate_to_infinity(|z| self.density(z), t.abs(), QuadratureRule::GaussKronrod, Tolerance::rel(1e-10))
                    .unwrap_or(f64::NAN);
                if t >= 0.0 {
                    1.0 - half
                } else {
                    half
                }
            }
            NoiseLaw::Cauchy { scale } => 0.5 + (t / scale).atan() / PI,
            NoiseLaw::Contaminated { r, contaminant } => (1.0 - r) * normal_cdf(t) + r * contaminant.cdf(t),
            NoiseLaw::LeastFavorable(g0) => g0.cdf(t),
        }
    }

    /// Positive points where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            NoiseLaw::LeastFavorable(g0) => vec![g0.gamma_r],
            NoiseLaw::Contaminated { contaminant, .. } => contaminant.breakpoints(),
            _ => Vec::new(),
        }
    }

    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        match self {
            NoiseLaw::Gaussian { sd } => Normal::new(0.0, *sd).expect("validated sd").sample(rng),
            NoiseLaw::StudentT { dof, .. } => StudentT::new(*dof).expect("validated dof").sample(rng),
            NoiseLaw::Cauchy { scale } => Cauchy::new(0.0, *scale).expect("validated scale").sample(rng),
            NoiseLaw::Contaminated { r, contaminant } => {
                if rng.gen::<f64>() < *r {
                    contaminant.draw(rng)
                } else {
                    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
                }
            }
            NoiseLaw::LeastFavorable(g0) => g0.quantile(rng.next_f64()),
        }
    }

    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

pub fn sample_noise(spec: &NoiseSpec, n: usize, rng: &mut StreamRng) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    Ok(spec.resolve()?.sample(n, rng))
}

pub fn sample_design(spec: &DesignSpec, d: usize, n: usize, rng: &mut StreamRng) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    spec.validate(d).map_err(|e| Error::Domain(e.to_string()))?;
    spec.sample(d, n, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    pub target: TargetSpec,
    pub design: DesignSpec,
    pub noise_level: NoiseLevelSpec,
    pub noise: NoiseSpec,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        self.target.validate(self.d)?;
        self.design.validate(self.d)?;
        self.noise_level.validate(self.d)?;
        self.noise.resolve().map(|_| ())
    }

    pub fn resolve(&self) -> Result<Model> {
        self.validate()?;
        Ok(Model { spec: self.clone(), noise: self.noise.resolve()? })
    }
}

/// A validated model with its noise law resolved.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub noise: NoiseLaw,
}

/// The closed-form quantities the oracle integrals need.
pub trait RegressionLaw: Sync {
    fn dim(&self) -> usize;
    fn design_density(&self, x: &[f64]) -> f64;
    fn noise_level(&self, x: &[f64]) -> f64;
    fn noise_density(&self, z: f64) -> f64;
    /// Positive points where the noise density is not smooth.
    fn noise_breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    /// Coordinates along `axis` where μ or σ is not smooth.
    fn design_breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }
    /// `(c, s)` when μ behaves like `|x_axis − c|^s` with `s < 0` near `c`.
    fn design_singularity(&self, _axis: usize) -> Option<(f64, f64)> {
        None
    }
}

impl RegressionLaw for Model {
    fn dim(&self) -> usize {
        self.spec.d
    }
    fn design_density(&self, x: &[f64]) -> f64 {
        self.spec.design.density(x)
    }
    fn noise_level(&self, x: &[f64]) -> f64 {
        self.spec.noise_level.eval(x)
    }
    fn noise_density(&self, z: f64) -> f64 {
        self.noise.density(z)
    }
    fn noise_breakpoints(&self) -> Vec<f64> {
        self.noise.breakpoints()
    }
    fn design_breakpoints(&self, axis: usize) -> Vec<f64> {
        let mut b = self.spec.noise_level.breakpoints(axis);
        if axis == 0 {
            b.extend(self.spec.design.breakpoints());
        }
        b
    }
    fn design_singularity(&self, axis: usize) -> Option<(f64, f64)> {
        match self.spec.design {
            DesignSpec::DegenerateS { s, x0 } if axis == 0 && s < 0.0 => Some((x0, s)),
            _ => None,
        }
    }
}

/// `n` design/response pairs; design points are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub d: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub seed: Option<u64>,
}

impl SampleSet {
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if d == 0 || x.len() != d * y.len() {
            return Err(Error::Dimension { expected: d * y.len(), got: x.len() });
        }
        Ok(Self { d, x, y, seed: None })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        wr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| format!("{v:?}")).collect();
            row.push(format!("{:?}", self.y[i]));
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a CSV with header `x1,...,xd,y`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let d = cols.len().checked_sub(1).filter(|d| *d >= 1).ok_or_else(|| Error::Parse("need x and y columns".into()))?;
        for (j, c) in cols[..d].iter().enumerate() {
            if *c != format!("x{}", j + 1) {
                return Err(Error::Parse(format!("unexpected column '{c}'")));
            }
        }
        if cols[d] != "y" {
            return Err(Error::Parse(format!("last column must be 'y', got '{}'", cols[d])));
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != d + 1 {
                return Err(Error::Parse(format!("row {} has {} fields", line + 2, rec.len())));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse(format!("row {}: bad number '{field}'", line + 2)))?;
                if j < d {
                    x.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        if y.is_empty() {
            return Err(Error::Parse("dataset has no rows".into()));
        }
        Ok(Self { d, x, y, seed: None })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Structured sidecar describing how a dataset was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMetadata {
    pub schema_version: u32,
    pub n: usize,
    pub seed: u64,
    pub replication: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    pub model: ModelSpec,
}

impl SampleMetadata {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Replication 0 of `model` at sample size `n`.
pub fn generate_sample(model: &ModelSpec, n: usize, seed: u64) -> Result<SampleSet> {
    generate_replication(model, n, seed, 0)
}

/// Replication `rep` draws the design from stream `2·rep` and the noise from `2·rep + 1`.
pub fn generate_replication(model: &ModelSpec, n: usize, seed: u64, rep: u64) -> Result<SampleSet> {
    let mut s = generate_with_streams(&model.resolve()?, n, design_stream(seed, rep), noise_stream(seed, rep))?;
    s.seed = Some(seed);
    Ok(s)
}

pub fn generate_with_streams(model: &Model, n: usize, design_key: u64, noise_key: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let d = model.spec.d;
    let x = model.spec.design.sample(d, n, &mut StreamRng::new(design_key))?;
    let xi = model.noise.sample(n, &mut StreamRng::new(noise_key));
    let y = (0..n)
        .map(|i| {
            let p = &x[i * d..(i + 1) * d];
            let s = model.spec.noise_level.eval(p);
            // σ = 0 must give exact targets even for heavy-tailed ξ
            if s == 0.0 {
                model.spec.target.eval(p)
            } else {
                model.spec.target.eval(p) + s * xi[i]
            }
        })
        .collect();
    Ok(SampleSet { d, x, y, seed: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn gaussian_model(d: usize) -> ModelSpec {
        ModelSpec {
            d,
            target: TargetSpec::Constant { value: 0.0 },
            design: DesignSpec::Uniform,
            noise_level: NoiseLevelSpec::Constant { sigma: 1.0 },
            noise: NoiseSpec::Gaussian { sd: 1.0 },
        }
    }

    fn ks_statistic(mut v: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        v.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }
    // two-sided 1% critical value
    fn ks_critical(n: usize) -> f64 {
        1.628 / (n as f64).sqrt()
    }

    // numeric inversion of the closed-form CDF
    fn invert_by_bisection(f: impl Fn(f64) -> f64, p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if f(m) < p {
                lo = m
            } else {
                hi = m
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn design_inverse_cdf_examples() {
        assert_eq!(DesignSpec::Uniform.cdf_inverse(0.3).unwrap(), 0.3);
        let d = DesignSpec::DegenerateS { s: 1.0, x0: 0.5 };
        assert!((d.cdf_inverse(0.5).unwrap() - 0.5).abs() < 1e-15);
        // F(0.25) = (0.25 - 0.0625)/0.5 = 0.375
        assert!((d.cdf(0.25) - 0.375).abs() < 1e-15);
        assert!((d.cdf_inverse(0.375).unwrap() - 0.25).abs() < 1e-12);
        let oracle = invert_by_bisection(|x| d.cdf(x), 0.125);
        assert!((d.cdf_inverse(0.125).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - (0.5 - 0.1875f64.sqrt())).abs() < 1e-12);
        assert!(d.cdf_inverse(1.5).is_err());
        assert!(d.cdf_inverse(-0.1).is_err());
    }

    #[test]
    fn inverse_cdf_round_trips_on_grid() {
        for design in [
            DesignSpec::Uniform,
            DesignSpec::DegenerateS { s: 1.0, x0: 0.5 },
            DesignSpec::DegenerateS { s: -0.5, x0: 0.3 },
            DesignSpec::DegenerateS { s: 2.0, x0: 0.8 },
        ] {
            for k in 0..1000 {
                let x = (k as f64 + 0.5) / 1000.0;
                let back = design.cdf_inverse(design.cdf(x)).unwrap();
                assert!((back - x).abs() <= 1e-10, "{design:?} at {x}: {back}");
            }
        }
    }

    #[test]
    fn design_density_integrates_to_one() {
        for design in [DesignSpec::DegenerateS { s: 1.0, x0: 0.5 }, DesignSpec::DegenerateS { s: -0.5, x0: 0.3 }] {
            let x0 = match design {
                DesignSpec::DegenerateS { x0, .. } => x0,
                _ => unreachable!(),
            };
            // x = x0 ± t² removes the power singularity at x0
            let left = integrate(
                |t: f64| 2.0 * t * design.density(&[x0 - t * t]),
                0.0,
                x0.sqrt(),
                QuadratureRule::GaussKronrod,
                Tolerance::rel(1e-10),
            )
            .unwrap();
            let right = integrate(
                |t: f64| 2.0 * t * design.density(&[x0 + t * t]),
                0.0,
                (1.0 - x0).sqrt(),
                QuadratureRule::GaussKronrod,
                Tolerance::rel(1e-10),
            )
            .unwrap();
            assert!((left + right - 1.0).abs() < 1e-8, "{design:?}: {}", left + right);
        }
    }

    #[test]
    fn degenerate_design_mass_near_center() {
        let design = DesignSpec::DegenerateS { s: 2.0, x0: 0.5 };
        let n = 100_000;
        let x = sample_design(&design, 1, n, &mut StreamRng::new(5)).unwrap();
        let frac = x.iter().filter(|v| (0.45..=0.55).contains(*v)).count() as f64 / n as f64;
        let expected = integrate(|t| design.density(&[t]), 0.45, 0.55, QuadratureRule::GaussKronrod, Tolerance::rel(1e-12)).unwrap();
        // expected = 2·0.05³/0.25 = 0.001
        assert!((expected - 0.001).abs() < 1e-12);
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((frac - expected).abs() <= 4.0 * se, "{frac} vs {expected}");
    }

    #[test]
    fn exploding_design_passes_ks_and_peaks_at_center() {
        let design = DesignSpec::DegenerateS { s: -0.5, x0: 0.5 };
        let n = 100_000;
        let x = sample_design(&design, 1, n, &mut StreamRng::new(6)).unwrap();
        assert!(ks_statistic(x.clone(), |t| design.cdf(t)) < ks_critical(n));
        let mut bins = [0usize; 20];
        for v in &x {
            bins[((v * 20.0) as usize).min(19)] += 1;
        }
        let peak = (0..20).max_by_key(|&b| bins[b]).unwrap();
        assert!(peak == 9 || peak == 10, "peak bin {peak}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_design(&DesignSpec::Uniform, 1, 3, &mut StreamRng::new(42)).unwrap();
        let b = sample_design(&DesignSpec::Uniform, 1, 3, &mut StreamRng::new(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_noise_mean() {
        let n = 100_000;
        let v = sample_noise(&NoiseSpec::Gaussian { sd: 1.0 }, n, &mut StreamRng::new(8)).unwrap();
        let mean = v.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn uncontaminated_mixture_is_standard_normal() {
        let spec = NoiseSpec::ContaminatedNormal { r: 0.0, contaminant: Box::new(NoiseSpec::Cauchy { scale: 1.0 }) };
        let n = 50_000;
        let v = sample_noise(&spec, n, &mut StreamRng::new(9)).unwrap();
        assert!(ks_statistic(v, normal_cdf) < ks_critical(n));
    }

    #[test]
    fn cauchy_quartiles() {
        let n = 100_000;
        let mut v = sample_noise(&NoiseSpec::Cauchy { scale: 1.0 }, n, &mut StreamRng::new(10)).unwrap();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[(p * n as f64) as usize];
        // sd of a sample quantile: sqrt(p(1-p)/n)/f(q_p)
        let se_med = (0.25 / n as f64).sqrt() * PI;
        assert!(q(0.5).abs() <= 3.0 * se_med);
        let se_q = (0.1875 / n as f64).sqrt() * 2.0 * PI;
        assert!((q(0.25) + 1.0).abs() <= 3.0 * se_q);
        assert!((q(0.75) - 1.0).abs() <= 3.0 * se_q);
    }

    #[test]
    fn least_favorable_samples_match_cdf() {
        let spec = NoiseSpec::LeastFavorable { r: 0.1 };
        let law = spec.resolve().unwrap();
        let n = 50_000;
        let v = law.sample(n, &mut StreamRng::new(12));
        assert!(ks_statistic(v, |t| law.cdf(t)) < ks_critical(n));
    }

    #[test]
    fn student_t_cdf_consistent() {
        let law = NoiseSpec::StudentT { dof: 3.0 }.resolve().unwrap();
        // t_3 CDF at 1: 0.5 + (atan(1/√3) + (1/√3)/(1+1/3))/π
        let a = 1.0 / 3f64.sqrt();
        let exact = 0.5 + (a.atan() + a / (1.0 + a * a)) / PI;
        assert!((law.cdf(1.0) - exact).abs() < 1e-9);
        let n = 50_000;
        let v = law.sample(n, &mut StreamRng::new(13));
        assert!(ks_statistic(v, |t| law.cdf(t)) < ks_critical(n));
    }

    #[test]
    fn densities_are_symmetric() {
        let specs = [
            NoiseSpec::Gaussian { sd: 2.0 },
            NoiseSpec::StudentT { dof: 2.5 },
            NoiseSpec::Cauchy { scale: 0.7 },
            NoiseSpec::ContaminatedNormal { r: 0.3, contaminant: Box::new(NoiseSpec::StudentT { dof: 1.5 }) },
            NoiseSpec::LeastFavorable { r: 0.2 },
        ];
        for s in specs {
            let law = s.resolve().unwrap();
            for k in 0..200 {
                let t = k as f64 * 0.05;
                assert_eq!(law.density(t), law.density(-t), "{s:?} at {t}");
            }
        }
    }

    #[test]
    fn g0_values() {
        let v = g0_density(0.0, 0.1).unwrap();
        assert!((v - 0.9 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((v - 0.359_048_0).abs() < 1e-7);
        assert_eq!(g0_density(1.7, 0.3).unwrap(), g0_density(-1.7, 0.3).unwrap());
        assert!(g0_density(0.0, 1.0).is_err());
    }

    #[test]
    fn g0_normalization() {
        let g0 = LeastFavorable::new(0.1).unwrap();
        let t = Tolerance::rel(1e-12);
        let core = integrate(|z| g0.density(z), 0.0, g0.gamma_r, QuadratureRule::GaussKronrod, t).unwrap();
        let tail = integrate_to_infinity(|z| g0.density(z), g0.gamma_r, QuadratureRule::GaussKronrod, t).unwrap();
        let total = 2.0 * (core + tail);
        assert!((total - 1.0).abs() <= 1e-6, "{total}");
        assert!((g0.cdf(f64::MAX.sqrt()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_gives_exact_targets() {
        let model = ModelSpec {
            d: 1,
            target: TargetSpec::Constant { value: 2.5 },
            design: DesignSpec::Uniform,
            noise_level: NoiseLevelSpec::Constant { sigma: 0.0 },
            noise: NoiseSpec::Cauchy { scale: 1.0 },
        };
        let s = generate_sample(&model, 100, 1).unwrap();
        assert!(s.y.iter().all(|&y| y == 2.5));
    }

    #[test]
    fn response_variance_matches_model() {
        let s = generate_sample(&gaussian_model(1), 10_000, 3).unwrap();
        let n = s.n() as f64;
        let mean = s.y.iter().sum::<f64>() / n;
        let var = s.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn power_distance_level_bounds_residuals() {
        let model = ModelSpec {
            d: 1,
            target: TargetSpec::Constant { value: 0.0 },
            design: DesignSpec::Uniform,
            noise_level: NoiseLevelSpec::PowerDistance { alpha: 1.0, center: vec![0.5] },
            noise: NoiseSpec::Gaussian { sd: 1.0 },
        };
        let resolved = model.resolve().unwrap();
        let s = generate_with_streams(&resolved, 500, 1, 2).unwrap();
        let xi = resolved.noise.sample(500, &mut StreamRng::new(2));
        for ((y, x), z) in s.y.iter().zip(&s.x).zip(&xi) {
            assert!(y.abs() <= (x - 0.5).abs() * z.abs() * (1.0 + 1e-15));
        }
    }

    #[test]
    fn streams_are_independent() {
        let model = gaussian_model(2).resolve().unwrap();
        let a = generate_with_streams(&model, 50, 100, 200).unwrap();
        let b = generate_with_streams(&model, 50, 100, 201).unwrap();
        assert_eq!(a.x, b.x);
        assert_ne!(a.y, b.y);
        let c = generate_replication(&gaussian_model(2), 50, 7, 3).unwrap();
        let d = generate_replication(&gaussian_model(2), 50, 7, 3).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn invalid_models_rejected() {
        let mut m = gaussian_model(2);
        m.design = DesignSpec::DegenerateS { s: 1.0, x0: 0.5 };
        assert!(m.validate().is_err());
        let mut m = gaussian_model(1);
        m.noise = NoiseSpec::ContaminatedNormal { r: 1.0, contaminant: Box::new(NoiseSpec::Cauchy { scale: 1.0 }) };
        assert!(m.validate().is_err());
        let mut m = gaussian_model(1);
        m.target = TargetSpec::Cusp { center: 0.5, beta: 0.5, scale: 1.0, axis: 1 };
        assert!(m.validate().is_err());
        assert!(generate_sample(&gaussian_model(1), 0, 1).is_err());
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let s = generate_sample(&gaussian_model(2), 64, 17).unwrap();
        let mut first = Vec::new();
        s.write_csv(&mut first).unwrap();
        let back = SampleSet::read_csv(first.as_slice()).unwrap();
        assert_eq!(back.x, s.x);
        assert_eq!(back.y, s.y);
        let mut second = Vec::new();
        back.write_csv(&mut second).unwrap();
        assert_eq!(first, second);
        assert!(String::from_utf8(first).unwrap().starts_with("x1,x2,y\n"));
    }

    #[test]
    fn csv_errors() {
        assert!(SampleSet::read_csv("a,y\n1,2\n".as_bytes()).is_err());
        assert!(SampleSet::read_csv("x1,y\n1,zz\n".as_bytes()).is_err());
        assert!(SampleSet::read_csv("x1,y\n".as_bytes()).is_err());
    }

    #[test]
    fn target_library() {
        let cusp = TargetSpec::Cusp { center: 0.5, beta: 0.5, scale: 2.0, axis: 0 };
        assert!((cusp.eval(&[0.75]) - 1.0).abs() < 1e-15);
        assert_eq!(cusp.holder().beta, 0.5);
        let poly = TargetSpec::Polynomial { coefficients: vec![1.0, -2.0, 3.0], center: 0.5, axis: 1 };
        assert!((poly.eval(&[0.0, 1.5]) - (1.0 - 2.0 + 3.0)).abs() < 1e-15);
        let sine = TargetSpec::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: 0.0, axis: 0 };
        assert!((sine.eval(&[0.25]) - 1.0).abs() < 1e-15);
    }
}
