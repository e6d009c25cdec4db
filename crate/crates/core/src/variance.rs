//! Nonasymptotic variance: its empirical estimate `V̂(λ)`, the oracle value
//! by quadrature, D-adaptive choice of `λ = (ρ, K)`, the entropy constants
//! and the sufficient-condition diagnostics.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::contrast::{ContrastKind, ContrastSpec};
use crate::error::{Error, Result};
use crate::kernel::{check_dim, default_kernels, Bandwidth, KernelSpec};
use crate::lpa::{fit_local, LocalDesign, LpaConfig, LpaFit, MultiIndexSet};
use crate::parametric::default_gamma_grid;
use crate::quadrature::{integrate, integrate_pieces, integrate_to_infinity, QuadratureRule, Tolerance};
use crate::simulate::{RegressionLaw, SampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceReport {
    pub numerator_core: f64,
    pub penalty: f64,
    pub denominator: f64,
    pub denom_floor: f64,
    /// `+∞` when the report is invalid.
    pub v_hat: f64,
    pub valid: bool,
}

/// `V̂` from residuals of the window points and their kernel weights `K_h(X_i)`.
pub fn variance_from_residuals(
    c: &ContrastSpec,
    residuals: &[f64],
    weights: &[f64],
    n_total: usize,
    volume: f64,
    kernel_sup: f64,
) -> VarianceReport {
    let n = n_total as f64;
    let mut second_moment = 0.0;
    let mut curvature = 0.0;
    for (r, w) in residuals.iter().zip(weights) {
        let d = c.rho_prime(*r);
        second_moment += d * d * w * w;
        curvature += c.rho_second(*r) * w;
    }
    let numerator_core = (volume * second_moment / n).sqrt();
    let penalty = c.rho_prime_sup() * kernel_sup * n.ln().powi(2) / (n * volume).sqrt();
    let denominator = curvature / n;
    let denom_floor = (kernel_sup / (n * volume)).max(1e-12);
    let valid = denominator > denom_floor;
    let v_hat = if valid { ((numerator_core + penalty) / denominator).powi(2) } else { f64::INFINITY };
    VarianceReport { numerator_core, penalty, denominator, denom_floor, v_hat, valid }
}

pub fn empirical_variance(
    sample: &SampleSet,
    c: &ContrastSpec,
    k: &KernelSpec,
    h: &Bandwidth,
    cfg: &LpaConfig,
    fit: &LpaFit,
) -> Result<VarianceReport> {
    let local = LocalDesign::build(sample, k, h, cfg)?;
    check_dim(local.p, fit.coeffs.len())?;
    let res = local.residuals(&fit.coeffs);
    Ok(variance_from_residuals(c, &res, &local.weights, local.n_total, local.volume, k.sup_norm()))
}

/// Which fit supplies the residuals inside `V̂(λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// Residuals of `f̂_λ` itself.
    #[default]
    Own,
    /// Residuals of a single arctan (γ = 1) fit per kernel, shared by all contrasts.
    PreEstimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub contrasts: Vec<ContrastSpec>,
    pub kernels: Vec<KernelSpec>,
}

impl LambdaGrid {
    pub fn new(contrasts: Vec<ContrastSpec>, kernels: Vec<KernelSpec>) -> Result<Self> {
        let g = Self { contrasts, kernels };
        g.validate()?;
        Ok(g)
    }

    pub fn huber(gammas: &[f64], kernels: Vec<KernelSpec>) -> Result<Self> {
        let contrasts = gammas.iter().map(|&g| ContrastSpec::new(ContrastKind::Huber, g)).collect::<Result<_>>()?;
        Self::new(contrasts, kernels)
    }

    pub fn single(c: ContrastSpec, k: KernelSpec) -> Self {
        Self { contrasts: vec![c], kernels: vec![k] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.contrasts.is_empty() || self.kernels.is_empty() {
            return Err(Error::Config("λ grid needs at least one contrast and one kernel".into()));
        }
        let d = self.kernels[0].dim();
        for k in &self.kernels {
            check_dim(d, k.dim())?;
        }
        for c in &self.contrasts {
            ContrastSpec::new(c.kind, c.gamma)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.contrasts.len() * self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(γ₋, γ⁺)` over the contrast scales.
    pub fn gamma_range(&self) -> (f64, f64) {
        self.contrasts.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), c| (lo.min(c.gamma), hi.max(c.gamma)))
    }
}

/// Default grid: Huber scales from the in-window MAD (symmetric kernel) and
/// the default kernel family.
pub fn default_lambda_grid(sample: &SampleSet, h: &Bandwidth, cfg: &LpaConfig) -> Result<LambdaGrid> {
    let local = LocalDesign::build(sample, &KernelSpec::symmetric(sample.d), h, cfg)?;
    LambdaGrid::huber(&default_gamma_grid(&local.y), default_kernels(sample.d))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaTrace {
    pub contrast: ContrastSpec,
    pub kernel: KernelSpec,
    /// `None` when the kernel window holds no sample point.
    pub fit: Option<LpaFit>,
    pub report: Option<VarianceReport>,
}

impl LambdaTrace {
    pub fn is_valid(&self) -> bool {
        self.report.is_some_and(|r| r.valid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSelection {
    pub contrast: ContrastSpec,
    pub kernel: KernelSpec,
    pub fit: LpaFit,
    pub report: VarianceReport,
    pub traces: Vec<LambdaTrace>,
}

impl LambdaSelection {
    pub fn estimate(&self) -> f64 {
        self.fit.estimate
    }
}

pub fn select_lambda(sample: &SampleSet, grid: &LambdaGrid, h: &Bandwidth, cfg: &LpaConfig) -> Result<LambdaSelection> {
    select_lambda_with(sample, grid, h, cfg, ResidualMode::Own)
}

fn selection_key_cmp(a: &LambdaTrace, b: &LambdaTrace) -> std::cmp::Ordering {
    let va = a.report.map_or(f64::INFINITY, |r| r.v_hat);
    let vb = b.report.map_or(f64::INFINITY, |r| r.v_hat);
    va.total_cmp(&vb).then(a.contrast.gamma.total_cmp(&b.contrast.gamma)).then(a.contrast.kind.cmp(&b.contrast.kind)).then_with(|| {
        a.kernel.shift.iter().zip(&b.kernel.shift).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// `λ̂ = argmin V̂(λ)` over the valid reports; ties go to the smaller scale,
/// then to the lexicographically smaller kernel shift.
pub fn select_lambda_with(
    sample: &SampleSet,
    grid: &LambdaGrid,
    h: &Bandwidth,
    cfg: &LpaConfig,
    mode: ResidualMode,
) -> Result<LambdaSelection> {
    grid.validate()?;
    cfg.validate()?;
    let mut traces = Vec::with_capacity(grid.len());
    for k in &grid.kernels {
        let local = LocalDesign::build(sample, k, h, cfg)?;
        if local.effective_n() == 0 {
            traces.extend(grid.contrasts.iter().map(|c| LambdaTrace { contrast: *c, kernel: k.clone(), fit: None, report: None }));
            continue;
        }
        let pre = match mode {
            ResidualMode::Own => None,
            ResidualMode::PreEstimator => Some(local.residuals(&fit_local(&local, &ContrastSpec::arctan(1.0), cfg, None)?.coeffs)),
        };
        for c in &grid.contrasts {
            let fit = fit_local(&local, c, cfg, None)?;
            let res = match &pre {
                Some(r) => r.clone(),
                None => local.residuals(&fit.coeffs),
            };
            let report = variance_from_residuals(c, &res, &local.weights, local.n_total, local.volume, k.sup_norm());
            traces.push(LambdaTrace { contrast: *c, kernel: k.clone(), fit: Some(fit), report: Some(report) });
        }
    }
    let best = traces.iter().filter(|t| t.is_valid()).min_by(|a, b| selection_key_cmp(a, b)).ok_or(Error::AllInvalid)?;
    Ok(LambdaSelection {
        contrast: best.contrast,
        kernel: best.kernel.clone(),
        fit: best.fit.clone().expect("valid trace carries a fit"),
        report: best.report.expect("valid trace carries a report"),
        traces: traces.clone(),
    })
}

/// One row per λ: kind, γ, kernel shift, estimate and the `V̂` pieces.
pub fn write_lambda_trace_csv<W: Write>(traces: &[LambdaTrace], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["kind", "gamma", "kernel_shift", "estimate", "numerator_core", "penalty", "denominator", "v_hat", "valid"])
        .map_err(err)?;
    for t in traces {
        let kind = match t.contrast.kind {
            ContrastKind::Huber => "huber",
            ContrastKind::Arctan => "arctan",
        };
        let shift = t.kernel.shift.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";");
        let estimate = t.fit.as_ref().map_or(String::new(), |f| format!("{:?}", f.estimate));
        let (num, pen, den, v, ok) = match t.report {
            Some(r) => (
                format!("{:?}", r.numerator_core),
                format!("{:?}", r.penalty),
                format!("{:?}", r.denominator),
                format!("{:?}", r.v_hat),
                r.valid,
            ),
            None => (String::new(), String::new(), String::new(), String::new(), false),
        };
        out.write_record([kind.to_string(), format!("{:?}", t.contrast.gamma), shift, estimate, num, pen, den, v, ok.to_string()])
            .map_err(err)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub rule: QuadratureRule,
    pub tol: Tolerance,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { rule: QuadratureRule::GaussKronrod, tol: Tolerance::rel(1e-8) }
    }
}

impl OracleConfig {
    pub fn with_rule(rule: QuadratureRule) -> Self {
        Self { rule, ..Self::default() }
    }
}

/// `A(σ) = ∫ρ′(σz)²g(z)dz` and `B(σ) = ∫ρ″(σz)g(z)dz`, memoized by σ.
struct NoiseMoments<'a, L: ?Sized> {
    law: &'a L,
    c: ContrastSpec,
    rule: QuadratureRule,
    tol: Tolerance,
    cache: RefCell<HashMap<u64, (f64, f64)>>,
}

impl<'a, L: RegressionLaw + ?Sized> NoiseMoments<'a, L> {
    fn new(law: &'a L, c: ContrastSpec, oc: &OracleConfig) -> Self {
        Self {
            law,
            c,
            rule: oc.rule,
            tol: Tolerance { rel: oc.tol.rel * 1e-3, abs: oc.tol.abs * 1e-3, ..oc.tol },
            cache: RefCell::new(HashMap::new()),
        }
    }

    fn get(&self, sigma: f64) -> Result<(f64, f64)> {
        if let Some(v) = self.cache.borrow().get(&sigma.to_bits()) {
            return Ok(*v);
        }
        let v = if sigma == 0.0 {
            (0.0, self.c.rho_second(0.0))
        } else {
            let mut pts = vec![0.0];
            pts.extend(self.c.kinks().into_iter().filter(|k| *k > 0.0).map(|k| k / sigma));
            pts.extend(self.law.noise_breakpoints().into_iter().filter(|b| *b > 0.0));
            // dyadic points keep a far kink from hiding the bulk of g in one coarse panel
            let far = pts.iter().cloned().fold(0.0, f64::max).min(1e12);
            pts.extend(std::iter::successors(Some(0.5), |v| Some(v * 2.0)).take_while(|v| *v < far));
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let last = *pts.last().expect("nonempty breakpoints");
            let g = |z: f64| self.law.noise_density(z);
            let fa = |z: f64| self.c.rho_prime(sigma * z).powi(2) * g(z);
            let fb = |z: f64| self.c.rho_second(sigma * z) * g(z);
            let a = integrate_pieces(fa, &pts, self.rule, self.tol)? + integrate_to_infinity(fa, last, self.rule, self.tol)?;
            let b = integrate_pieces(fb, &pts, self.rule, self.tol)? + integrate_to_infinity(fb, last, self.rule, self.tol)?;
            (2.0 * a, 2.0 * b)
        };
        self.cache.borrow_mut().insert(sigma.to_bits(), v);
        Ok(v)
    }
}

/// Per-axis integration limits in kernel coordinates: `S ∩ (unit cube − x0)/h`
/// with interior breakpoints.
struct AxisLimits {
    lo: f64,
    hi: f64,
    breakpoints: Vec<f64>,
    /// Singular point in u-coordinates and the power `p` of the substitution `u = c ± L t^p`.
    singular: Option<(f64, f64)>,
}

fn window_limits<L: RegressionLaw + ?Sized>(law: &L, k: &KernelSpec, h: &Bandwidth, x0: &[f64]) -> Vec<AxisLimits> {
    (0..k.dim())
        .map(|j| {
            let (a, b) = k.support(j);
            let lo = a.max(-x0[j] / h.0[j]);
            let hi = b.min((1.0 - x0[j]) / h.0[j]);
            let to_u = |x: f64| (x - x0[j]) / h.0[j];
            let singular = law.design_singularity(j).map(|(c, s)| (to_u(c), 1.0 / (1.0 + s))).filter(|(c, _)| *c >= lo && *c <= hi);
            let mut breakpoints: Vec<f64> = law.design_breakpoints(j).into_iter().map(to_u).collect();
            breakpoints.push(0.0);
            breakpoints.extend(singular.map(|(c, _)| c));
            breakpoints.retain(|u| *u > lo && *u < hi);
            AxisLimits { lo, hi, breakpoints, singular }
        })
        .collect()
}

/// ∫ over `[a, b]`; a panel ending at the singular point `c` is integrated in `t` with `u = c ± (b − a) t^p`.
fn panel<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, singular: Option<(f64, f64)>, rule: QuadratureRule, tol: Tolerance) -> Result<f64> {
    let finite = |v: f64| if v.is_infinite() { 0.0 } else { v };
    match singular {
        Some((c, p)) if a == c || b == c => {
            let (len, sign) = if a == c { (b - a, 1.0) } else { (b - a, -1.0) };
            integrate(
                |t| if t <= 0.0 { 0.0 } else { finite(f(c + sign * len * t.powf(p)) * len * p * t.powf(p - 1.0)) },
                0.0,
                1.0,
                rule,
                tol,
            )
        }
        _ => integrate(f, a, b, rule, tol),
    }
}

fn window_integral(limits: &[AxisLimits], f: &dyn Fn(&[f64]) -> f64, rule: QuadratureRule, tol: Tolerance) -> Result<f64> {
    fn rec(
        axis: usize,
        prefix: &[f64],
        limits: &[AxisLimits],
        f: &dyn Fn(&[f64]) -> f64,
        rule: QuadratureRule,
        tol: Tolerance,
    ) -> Result<f64> {
        let lim = &limits[axis];
        if lim.lo >= lim.hi {
            return Ok(0.0);
        }
        let mut pts = vec![lim.lo, lim.hi];
        pts.extend(lim.breakpoints.iter().copied());
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let point = |v: f64| {
            let mut u = prefix.to_vec();
            u.push(v);
            u
        };
        let mut sum = 0.0;
        for w in pts.windows(2) {
            sum += if axis + 1 == limits.len() {
                panel(|v| f(&point(v)), w[0], w[1], lim.singular, rule, tol)?
            } else {
                let inner = tol.inner();
                panel(|v| rec(axis + 1, &point(v), limits, f, rule, inner).unwrap_or(f64::NAN), w[0], w[1], lim.singular, rule, tol)?
            };
        }
        Ok(sum)
    }
    rec(0, &[], limits, f, rule, tol)
}

fn to_design(x0: &[f64], h: &Bandwidth, u: &[f64]) -> Vec<f64> {
    x0.iter().zip(&h.0).zip(u).map(|((x, hj), uj)| x + hj * uj).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleVariance {
    /// `Π_h 𝔼P_n[λ′(f*)]²`.
    pub numerator: f64,
    /// `𝔼P_nλ″(f*)`.
    pub denominator: f64,
    pub penalty: f64,
    pub v: f64,
}

pub fn oracle_variance<L: RegressionLaw + ?Sized>(
    law: &L,
    c: &ContrastSpec,
    k: &KernelSpec,
    h: &Bandwidth,
    cfg: &LpaConfig,
    n: usize,
    oc: &OracleConfig,
) -> Result<OracleVariance> {
    let d = law.dim();
    check_dim(d, k.dim())?;
    check_dim(d, h.dim())?;
    check_dim(d, cfg.x0.len())?;
    let moments = NoiseMoments::new(law, *c, oc);
    let limits = window_limits(law, k, h, &cfg.x0);
    let ksup = k.sup_norm();
    let x0 = &cfg.x0;
    let num_f = |u: &[f64]| {
        let x = to_design(x0, h, u);
        let mu = law.design_density(&x);
        if mu == 0.0 {
            return 0.0;
        }
        moments.get(law.noise_level(&x)).map_or(f64::NAN, |(a, _)| mu * ksup * ksup * a)
    };
    let den_f = |u: &[f64]| {
        let x = to_design(x0, h, u);
        let mu = law.design_density(&x);
        if mu == 0.0 {
            return 0.0;
        }
        moments.get(law.noise_level(&x)).map_or(f64::NAN, |(_, b)| mu * ksup * b)
    };
    let numerator = window_integral(&limits, &num_f, oc.rule, oc.tol)?;
    let denominator = window_integral(&limits, &den_f, oc.rule, oc.tol)?;
    let nf = n as f64;
    let penalty = c.rho_prime_sup() * ksup * nf.ln().powi(2) / (nf * h.volume()).sqrt();
    let v = if denominator > 0.0 { ((numerator.max(0.0).sqrt() + penalty) / denominator).powi(2) } else { f64::INFINITY };
    Ok(OracleVariance { numerator, denominator, penalty, v })
}

/// Inputs of the metric-entropy bound of the class `𝓕 × Υ_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    pub box_bound: f64,
    pub p: usize,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    #[serde(default = "default_g_inf")]
    pub g_inf: f64,
    pub n: usize,
}

fn default_g_inf() -> f64 {
    1.0
}

impl EntropyConfig {
    pub fn new(box_bound: f64, p: usize, gamma_minus: f64, gamma_plus: f64, n: usize) -> Result<Self> {
        let c = Self { box_bound, p, gamma_minus, gamma_plus, g_inf: default_g_inf(), n };
        c.validate()?;
        Ok(c)
    }

    /// Scale range of `grid` widened to contain 1.
    pub fn for_grid(grid: &LambdaGrid, cfg: &LpaConfig, n: usize) -> Result<Self> {
        let (lo, hi) = grid.gamma_range();
        Self::new(cfg.box_bound, cfg.multi_indices().len(), lo.min(1.0), hi.max(1.0), n)
    }

    pub fn with_g_inf(mut self, g_inf: f64) -> Result<Self> {
        self.g_inf = g_inf;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_minus > 0.0 && self.gamma_minus <= 1.0 && self.gamma_plus >= 1.0) {
            return Err(Error::Domain(format!("entropy bound needs γ₋ ≤ 1 ≤ γ⁺, got [{}, {}]", self.gamma_minus, self.gamma_plus)));
        }
        if !(self.g_inf > 0.0) || !(self.box_bound > 0.0) || self.p == 0 {
            return Err(Error::Domain("entropy bound needs g_inf > 0, M > 0 and |𝒫| ≥ 1".into()));
        }
        Ok(())
    }

    fn log_n_sq(&self) -> Result<f64> {
        if self.n < 3 {
            return Err(Error::Domain(format!("entropy constants need n ≥ 3, got {}", self.n)));
        }
        Ok((self.n as f64).ln().powi(2))
    }
}

pub fn entropy_bound(cfg: &EntropyConfig, v: f64) -> Result<f64> {
    cfg.validate()?;
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::Domain(format!("entropy radius must lie in (0, 1], got {v}")));
    }
    let gp = cfg.gamma_plus;
    let arg = 16.0 * cfg.g_inf.max(12.0) * (2.0 * cfg.box_bound).max(gp) * gp * gp / (cfg.gamma_minus.powi(4) * v * v);
    Ok(((1 + cfg.p) as f64 * arg.ln()).max(0.0))
}

/// `∫₀¹ √H(u) du` through `u = e^{−t}`, which removes the logarithmic singularity at 0.
pub fn entropy_integral_with<F: Fn(f64) -> f64>(entropy: F) -> Result<f64> {
    integrate_to_infinity(|t| entropy((-t).exp()).max(0.0).sqrt() * (-t).exp(), 0.0, QuadratureRule::GaussKronrod, Tolerance::rel(1e-10))
}

pub fn entropy_integral(cfg: &EntropyConfig) -> Result<f64> {
    cfg.validate()?;
    entropy_integral_with(|u| entropy_bound(cfg, u).unwrap_or(f64::NAN))
}

/// `27∫₀¹√H + 4H(1)/ln²n` for an arbitrary entropy function.
pub fn b0_from_entropy<F: Fn(f64) -> f64>(entropy: F, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!("entropy constants need n ≥ 3, got {n}")));
    }
    let h1 = entropy(1.0);
    let integral = entropy_integral_with(&entropy)?;
    Ok(27.0 * integral + 4.0 * h1 / (n as f64).ln().powi(2))
}

pub fn b0_constant(cfg: &EntropyConfig) -> Result<f64> {
    cfg.validate()?;
    cfg.log_n_sq()?;
    b0_from_entropy(|u| entropy_bound(cfg, u).unwrap_or(f64::NAN), cfg.n)
}

pub fn b_z(cfg: &EntropyConfig, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("deviation level must be nonnegative, got {z}")));
    }
    Ok(b0_constant(cfg)? + 7.0 * (2.0 * z).sqrt() + 2.0 * z / cfg.log_n_sq()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub phi_h: f64,
    pub delta_h: f64,
    pub delta_star_h: f64,
    pub s_h: f64,
    pub c_lambda: f64,
    /// `Π_h 𝔼P_n[λ′(f*)]²`.
    pub numerator: f64,
    pub bias_proxy: f64,
    /// Infimum over the window of `∫ρ″(σ(x)z)g(z)dz`.
    pub curvature_inf: f64,
    pub n_volume: f64,
    pub condition1_ok: bool,
    pub condition2_ok: bool,
    pub condition3_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessSpec {
    pub beta: f64,
    pub lipschitz: f64,
}

impl SmoothnessSpec {
    /// `b_h ≤ L Σ_j h_j^β`.
    pub fn bias_proxy(&self, h: &Bandwidth) -> f64 {
        if self.lipschitz == 0.0 {
            return 0.0;
        }
        self.lipschitz * h.0.iter().map(|v| v.powf(self.beta)).sum::<f64>()
    }
}

const CURVATURE_GRID: usize = 11;

#[allow(clippy::too_many_arguments)]
pub fn diagnostics<L: RegressionLaw + ?Sized>(
    law: &L,
    c: &ContrastSpec,
    k: &KernelSpec,
    h: &Bandwidth,
    cfg: &LpaConfig,
    entropy: &EntropyConfig,
    smoothness: &SmoothnessSpec,
    oc: &OracleConfig,
) -> Result<DiagnosticsReport> {
    let d = law.dim();
    check_dim(d, k.dim())?;
    check_dim(d, h.dim())?;
    check_dim(d, cfg.x0.len())?;
    let n = entropy.n;
    entropy.log_n_sq()?;
    let x0 = &cfg.x0;
    let set = MultiIndexSet::new(d, cfg.degree);
    let p = set.len();
    let moments = NoiseMoments::new(law, *c, oc);
    let limits = window_limits(law, k, h, x0);
    let ksup = k.sup_norm();

    let mut gram = DMatrix::<f64>::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let f = |u: &[f64]| {
                let x = to_design(x0, h, u);
                let mu = law.design_density(&x);
                if mu == 0.0 {
                    return 0.0;
                }
                let m = set.monomial_vector(u).expect("window point has dimension d");
                moments.get(law.noise_level(&x)).map_or(f64::NAN, |(_, bb)| m[a] * m[b] * mu * ksup * bb)
            };
            let v = window_integral(&limits, &f, oc.rule, oc.tol)?;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let phi_h = SymmetricEigen::new(gram).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);

    let mass = window_integral(&limits, &|u: &[f64]| law.design_density(&to_design(x0, h, u)), oc.rule, oc.tol)?;
    let oracle = oracle_variance(law, c, k, h, cfg, n, oc)?;

    let mut curvature_inf = f64::INFINITY;
    let axes: Vec<Vec<f64>> = limits
        .iter()
        .map(|AxisLimits { lo, hi, .. }| {
            let mut v: Vec<f64> = (0..CURVATURE_GRID).map(|i| lo + (hi - lo) * i as f64 / (CURVATURE_GRID - 1) as f64).collect();
            if *lo < 0.0 && *hi > 0.0 {
                v.push(0.0);
            }
            v
        })
        .collect();
    let mut idx = vec![0usize; d];
    loop {
        let u: Vec<f64> = idx.iter().enumerate().map(|(j, &i)| axes[j][i]).collect();
        let x = to_design(x0, h, &u);
        curvature_inf = curvature_inf.min(moments.get(law.noise_level(&x))?.1);
        let mut j = 0;
        while j < d {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == d {
            break;
        }
    }

    let nf = n as f64;
    let n_volume = nf * h.volume();
    let root = n_volume.sqrt();
    let h1 = entropy_bound(entropy, 1.0)?;
    let complexity = (nf * p as f64).ln() + entropy_integral(entropy)? + h1;
    let bias = smoothness.bias_proxy(h);
    let rho_sup = c.rho_prime_sup();
    let delta_h = if phi_h > 0.0 {
        2.0 * (p * p) as f64 / phi_h * (mass * bias + 54.0 * rho_sup * (mass.sqrt() * ksup + ksup / root) * complexity / root)
    } else {
        f64::INFINITY
    };
    let delta_star_h = delta_h;
    let s_h = (2.0 * ksup).max(1.0) * (delta_star_h + bias) + 27.0 * (ksup * rho_sup * rho_sup).max(1.0) / root * complexity;
    let c_lambda = oracle.denominator;
    let condition1_ok = phi_h > 0.0 && n_volume >= 1.0 && 4.0 * (bias + delta_h) <= curvature_inf;
    let condition2_ok = phi_h > 0.0 && n_volume >= nf.ln().powi(4) && 4.0 * (bias + delta_star_h) <= curvature_inf;
    let condition3_ok = s_h <= c_lambda.min(oracle.numerator) / (2.0 * ksup);
    Ok(DiagnosticsReport {
        phi_h,
        delta_h,
        delta_star_h,
        s_h,
        c_lambda,
        numerator: oracle.numerator,
        bias_proxy: bias,
        curvature_inf,
        n_volume,
        condition1_ok,
        condition2_ok,
        condition3_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpa::fit_lpa;
    use crate::simulate::{DesignSpec, ModelSpec, NoiseLevelSpec, NoiseSpec, TargetSpec};
    use crate::special::normal_cdf;

    fn gaussian_model(d: usize, sd: f64) -> ModelSpec {
        ModelSpec {
            d,
            target: TargetSpec::Constant { value: 0.0 },
            design: DesignSpec::Uniform,
            noise_level: NoiseLevelSpec::Constant { sigma: 1.0 },
            noise: NoiseSpec::Gaussian { sd },
        }
    }

    #[test]
    fn hand_computed_report() {
        let r = variance_from_residuals(&ContrastSpec::huber(10.0), &[1.0, -1.0], &[2.0, 2.0], 2, 0.5, 1.0);
        assert!((r.numerator_core - 2f64.sqrt()).abs() < 1e-14);
        assert!((r.denominator - 2.0).abs() < 1e-14);
        let pen = 10.0 * 2f64.ln().powi(2);
        assert!((r.penalty - pen).abs() < 1e-14);
        assert!(r.valid);
        assert!((r.v_hat - ((2f64.sqrt() + pen) / 2.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn zero_residuals_and_degenerate_denominator() {
        let c = ContrastSpec::huber(0.5);
        let r = variance_from_residuals(&c, &[0.0; 4], &[2.0; 4], 10, 0.5, 1.0);
        assert_eq!(r.numerator_core, 0.0);
        assert!((r.denominator - 0.8).abs() < 1e-15);
        assert!((r.v_hat - (r.penalty / r.denominator).powi(2)).abs() < 1e-12);
        let bad = variance_from_residuals(&c, &[1.0, -2.0, 3.0], &[2.0; 3], 10, 0.5, 1.0);
        assert_eq!(bad.denominator, 0.0);
        assert!(!bad.valid);
    }

    #[test]
    fn empirical_variance_uses_fit_residuals() {
        let s = SampleSet::new(1, vec![0.4, 0.6], vec![1.0, 3.0]).unwrap();
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.5]).unwrap();
        let c = ContrastSpec::huber(10.0);
        let fit = fit_lpa(&s, &c, &KernelSpec::symmetric(1), &h, &cfg).unwrap();
        let r = empirical_variance(&s, &c, &KernelSpec::symmetric(1), &h, &cfg, &fit).unwrap();
        let oracle = variance_from_residuals(&c, &[-1.0, 1.0], &[2.0, 2.0], 2, 0.5, 1.0);
        assert!((r.v_hat - oracle.v_hat).abs() < 1e-9);
    }

    #[test]
    fn oracle_large_scale_gaussian() {
        let m = gaussian_model(1, 1.0).resolve().unwrap();
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.2]).unwrap();
        let o =
            oracle_variance(&m, &ContrastSpec::huber(1e6), &KernelSpec::symmetric(1), &h, &cfg, 1000, &OracleConfig::default()).unwrap();
        assert!((o.numerator - 1.0).abs() < 1e-8, "{}", o.numerator);
        assert!((o.denominator - 1.0).abs() < 1e-8);
        assert!((o.v / (1.0 + o.penalty).powi(2) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn oracle_huber_closed_form() {
        // σ = 1, uniform: B = P(|ξ| ≤ γ), A = E[min(ξ², γ²)]
        let m = gaussian_model(1, 1.0).resolve().unwrap();
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.3]).unwrap();
        let g = 1.3;
        let o = oracle_variance(&m, &ContrastSpec::huber(g), &KernelSpec::symmetric(1), &h, &cfg, 100, &OracleConfig::default()).unwrap();
        let tail = 1.0 - normal_cdf(g);
        let phi = (-g * g / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let a = (1.0 - 2.0 * tail - 2.0 * g * phi) + 2.0 * g * g * tail;
        assert!((o.denominator - (1.0 - 2.0 * tail)).abs() < 1e-9);
        assert!((o.numerator - a).abs() < 1e-9);
    }

    #[test]
    fn oracle_zero_noise() {
        let mut spec = gaussian_model(1, 1.0);
        spec.noise_level = NoiseLevelSpec::Constant { sigma: 0.0 };
        let m = spec.resolve().unwrap();
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.4]).unwrap();
        let o =
            oracle_variance(&m, &ContrastSpec::arctan(1.0), &KernelSpec::symmetric(1), &h, &cfg, 100, &OracleConfig::default()).unwrap();
        assert_eq!(o.numerator, 0.0);
        assert!((o.denominator - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_window_clipped_by_cube() {
        let m = gaussian_model(1, 1.0).resolve().unwrap();
        let cfg = LpaConfig::new(vec![0.1], 0);
        let h = Bandwidth::new(vec![0.4]).unwrap();
        let o = oracle_variance(&m, &ContrastSpec::huber(1e6), &KernelSpec::symmetric(1), &h, &cfg, 100, &OracleConfig::default()).unwrap();
        // only x ∈ [0, 0.3] carries design mass: u ∈ [−1/4, 1/2]
        assert!((o.denominator - 0.75).abs() < 1e-9);
    }

    #[test]
    fn rules_agree() {
        let spec = ModelSpec {
            d: 1,
            target: TargetSpec::Constant { value: 0.0 },
            design: DesignSpec::DegenerateS { s: 1.0, x0: 0.5 },
            noise_level: NoiseLevelSpec::PowerDistance { alpha: 0.5, center: vec![0.5] },
            noise: NoiseSpec::Cauchy { scale: 1.0 },
        };
        let m = spec.resolve().unwrap();
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.3]).unwrap();
        for c in [ContrastSpec::huber(0.3), ContrastSpec::arctan(2.0)] {
            let gk =
                oracle_variance(&m, &c, &KernelSpec::symmetric(1), &h, &cfg, 500, &OracleConfig::with_rule(QuadratureRule::GaussKronrod))
                    .unwrap();
            let si = oracle_variance(&m, &c, &KernelSpec::symmetric(1), &h, &cfg, 500, &OracleConfig::with_rule(QuadratureRule::Simpson))
                .unwrap();
            assert!((gk.v - si.v).abs() <= 1e-6 * gk.v, "{c:?}: {} vs {}", gk.v, si.v);
        }
    }

    fn unit_entropy(n: usize) -> EntropyConfig {
        EntropyConfig::new(1.0, 1, 1.0, 1.0, n).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let cfg = unit_entropy(100);
        assert!((entropy_bound(&cfg, 1.0).unwrap() - 2.0 * 384f64.ln()).abs() < 1e-12);
        let diff = entropy_bound(&cfg, 0.25).unwrap() - entropy_bound(&cfg, 0.5).unwrap();
        assert!((diff - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert!(entropy_bound(&cfg, 0.0).is_err());
        assert!(entropy_bound(&cfg, 1.5).is_err());
        assert!(EntropyConfig::new(1.0, 1, 2.0, 4.0, 100).is_err());
    }

    #[test]
    fn b0_matches_closed_form() {
        // ∫₀¹√(a ln(C/u²))du = √a · √C·√2 · Γ(3/2, ln(C)/2)
        let n = 4f64.exp().round() as usize;
        let cfg = unit_entropy(n);
        let a: f64 = 2.0;
        let big_c: f64 = 384.0;
        let x = big_c.ln() / 2.0;
        let upper_gamma = x.sqrt() * (-x).exp() + std::f64::consts::PI.sqrt() / 2.0 * libm::erfc(x.sqrt());
        let integral = a.sqrt() * big_c.sqrt() * 2f64.sqrt() * upper_gamma;
        assert!((entropy_integral(&cfg).unwrap() - integral).abs() < 1e-8);
        let expected = 27.0 * integral + 4.0 * 2.0 * big_c.ln() / (n as f64).ln().powi(2);
        assert!((b0_constant(&cfg).unwrap() - expected).abs() < 1e-4);
        assert_eq!(b0_from_entropy(|_| 0.0, 100).unwrap(), 0.0);
        let z = 2.0 * (n as f64).ln();
        let gap = b_z(&cfg, z).unwrap() - b0_constant(&cfg).unwrap();
        assert!((gap - (7.0 * (2.0 * z).sqrt() + 2.0 * z / (n as f64).ln().powi(2))).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_deterministic() {
        let cfg = EntropyConfig::new(3.0, 3, 0.2, 8.0, 4096).unwrap();
        assert_eq!(b0_constant(&cfg).unwrap().to_bits(), b0_constant(&cfg).unwrap().to_bits());
    }

    #[test]
    fn selection_picks_minimum() {
        let s = SampleSet::new(1, vec![0.45, 0.5, 0.55, 0.52], vec![0.1, -0.2, 0.3, 0.0]).unwrap();
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.3]).unwrap();
        let one = select_lambda(&s, &LambdaGrid::single(ContrastSpec::huber(2.0), KernelSpec::symmetric(1)), &h, &cfg).unwrap();
        assert_eq!(one.contrast, ContrastSpec::huber(2.0));
        // above the data range the Huber fits coincide; the report depends on γ only via the penalty
        let grid = LambdaGrid::huber(&[5.0, 3.0, 4.0], vec![KernelSpec::symmetric(1)]).unwrap();
        let sel = select_lambda(&s, &grid, &h, &cfg).unwrap();
        assert_eq!(sel.contrast.gamma, 3.0);
        assert!(sel.traces.iter().all(|t| t.report.unwrap().v_hat >= sel.report.v_hat));
    }

    #[test]
    fn all_invalid() {
        let s = SampleSet::new(1, vec![0.45, 0.55], vec![-5.0, 5.0]).unwrap();
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.3]).unwrap();
        let grid = LambdaGrid::huber(&[0.1, 0.2], vec![KernelSpec::symmetric(1)]).unwrap();
        assert_eq!(select_lambda(&s, &grid, &h, &cfg).unwrap_err(), Error::AllInvalid);
    }

    #[test]
    fn trace_csv_has_one_row_per_lambda() {
        let s = SampleSet::new(1, vec![0.45, 0.5, 0.55], vec![0.1, -0.2, 0.3]).unwrap();
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.3]).unwrap();
        let grid = LambdaGrid::huber(&[1.0, 2.0], default_kernels(1)).unwrap();
        let sel = select_lambda(&s, &grid, &h, &cfg).unwrap();
        let mut buf = Vec::new();
        write_lambda_trace_csv(&sel.traces, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 6);
    }

    #[test]
    fn diagnostics_local_constant_arctan() {
        let m = gaussian_model(1, 1.0).resolve().unwrap();
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.3]).unwrap();
        let ent = EntropyConfig::new(10.0, 1, 1.0, 1.0, 10_000).unwrap();
        let sm = SmoothnessSpec { beta: 1.0, lipschitz: 1.0 };
        let c = ContrastSpec::arctan(1.0);
        let rep = diagnostics(&m, &c, &KernelSpec::symmetric(1), &h, &cfg, &ent, &sm, &OracleConfig::default()).unwrap();
        let expected = crate::quadrature::integrate(
            |z: f64| 1.0 / (1.0 + z * z) * (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -40.0,
            40.0,
            QuadratureRule::GaussKronrod,
            Tolerance::rel(1e-12),
        )
        .unwrap();
        assert!((rep.phi_h - expected).abs() < 1e-8, "{} vs {expected}", rep.phi_h);
        assert!((rep.c_lambda - expected).abs() < 1e-8);
        assert!((rep.bias_proxy - 0.3).abs() < 1e-15);

        let big = EntropyConfig { n: 40_000, ..ent };
        let rep4 = diagnostics(
            &m,
            &c,
            &KernelSpec::symmetric(1),
            &h,
            &cfg,
            &big,
            &SmoothnessSpec { beta: 1.0, lipschitz: 0.0 },
            &OracleConfig::default(),
        )
        .unwrap();
        let rep1 = diagnostics(
            &m,
            &c,
            &KernelSpec::symmetric(1),
            &h,
            &cfg,
            &ent,
            &SmoothnessSpec { beta: 1.0, lipschitz: 0.0 },
            &OracleConfig::default(),
        )
        .unwrap();
        assert!(rep4.delta_h < rep1.delta_h);
    }

    struct GapNoise;

    impl RegressionLaw for GapNoise {
        fn dim(&self) -> usize {
            1
        }
        fn design_density(&self, x: &[f64]) -> f64 {
            if (0.0..=1.0).contains(&x[0]) {
                1.0
            } else {
                0.0
            }
        }
        fn noise_level(&self, _x: &[f64]) -> f64 {
            1.0
        }
        fn noise_density(&self, z: f64) -> f64 {
            if (5.0..=6.0).contains(&z.abs()) {
                0.5
            } else {
                0.0
            }
        }
        fn noise_breakpoints(&self) -> Vec<f64> {
            vec![5.0, 6.0]
        }
    }

    #[test]
    fn gap_noise_kills_curvature() {
        let cfg = LpaConfig::new(vec![0.5], 0);
        let h = Bandwidth::new(vec![0.3]).unwrap();
        let ent = EntropyConfig::new(10.0, 1, 1.0, 1.0, 1000).unwrap();
        let rep = diagnostics(
            &GapNoise,
            &ContrastSpec::huber(1.0),
            &KernelSpec::symmetric(1),
            &h,
            &cfg,
            &ent,
            &SmoothnessSpec { beta: 1.0, lipschitz: 1.0 },
            &OracleConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.phi_h, 0.0);
        assert!(!rep.condition1_ok);
    }
}
