//! Local polynomial M-estimation at a point.
//!
//! The estimator minimizes `(1/n) Σ ρ(Y_i − tᵀU((X_i − x0)/h)) K_h(X_i)` over
//! the box `[−M, M]^{|𝒫|}`. The criterion is convex and its gradient is
//! Lipschitz (ρ″ ≤ 1), so a monotone projected gradient method with Armijo
//! backtracking converges from any feasible start.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::contrast::ContrastSpec;
use crate::error::{Error, Result};
use crate::kernel::{check_dim, Bandwidth, KernelSpec};
use crate::simulate::SampleSet;

/// Multi-indices `p ∈ ℕ^d` with `|p| ≤ m` in graded lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    d: usize,
    m: usize,
    indices: Vec<Vec<u32>>,
}

impl MultiIndexSet {
    pub fn new(d: usize, m: usize) -> Self {
        let mut indices = Vec::new();
        for degree in 0..=m {
            let mut cur = vec![0u32; d];
            push_degree(&mut indices, &mut cur, 0, degree as u32);
        }
        Self { d, m, indices }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    /// `U(u)` with `0⁰ = 1`.
    pub fn monomial_vector(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d, u.len())?;
        let mut out = vec![0.0; self.len()];
        self.fill_monomials(u, &mut out);
        Ok(out)
    }

    fn fill_monomials(&self, u: &[f64], out: &mut [f64]) {
        for (slot, p) in out.iter_mut().zip(&self.indices) {
            *slot = p.iter().zip(u).map(|(&e, &v)| v.powi(e as i32)).product();
        }
    }
}

fn push_degree(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, axis: usize, remaining: u32) {
    if axis + 1 == cur.len() {
        cur[axis] = remaining;
        out.push(cur.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        cur[axis] = e;
        push_degree(out, cur, axis + 1, remaining - e);
    }
    cur[axis] = 0;
}

/// Number of monomials of total degree at most `m` in `d` variables, `C(m + d, d)`.
pub fn monomial_count(d: usize, m: usize) -> usize {
    (1..=d).fold(1usize, |acc, k| acc * (m + k) / k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpaConfig {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub degree: usize,
    /// Half-width M of the coefficient box.
    #[serde(default = "default_box_bound")]
    pub box_bound: f64,
    #[serde(default = "default_tol_grad")]
    pub tol_grad: f64,
    #[serde(default = "default_tol_step")]
    pub tol_step: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_box_bound() -> f64 {
    10.0
}
fn default_tol_grad() -> f64 {
    1e-8
}
fn default_tol_step() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    20_000
}

impl LpaConfig {
    pub fn new(x0: Vec<f64>, degree: usize) -> Self {
        Self {
            x0,
            degree,
            box_bound: default_box_bound(),
            tol_grad: default_tol_grad(),
            tol_step: default_tol_step(),
            max_iter: default_max_iter(),
        }
    }

    pub fn with_box_bound(mut self, m: f64) -> Self {
        self.box_bound = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.box_bound > 0.0) {
            return Err(Error::Config("coefficient box half-width must be positive".into()));
        }
        if !(self.tol_grad > 0.0 && self.tol_step > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.x0.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::Config("estimation point must lie in (0, 1)^d".into()));
        }
        Ok(())
    }

    pub fn multi_indices(&self) -> MultiIndexSet {
        MultiIndexSet::new(self.x0.len(), self.degree)
    }
}

/// Sample points falling in `V_h`, with their monomial vectors and kernel weights.
#[derive(Debug, Clone)]
pub struct LocalDesign {
    pub n_total: usize,
    pub volume: f64,
    pub p: usize,
    /// Row-major `effective_n × p` monomial vectors.
    pub monomials: Vec<f64>,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
    /// Positions of the window points in the original sample.
    pub indices: Vec<usize>,
}

impl LocalDesign {
    pub fn build(sample: &SampleSet, kernel: &KernelSpec, h: &Bandwidth, cfg: &LpaConfig) -> Result<Self> {
        check_dim(sample.d, kernel.dim())?;
        check_dim(sample.d, h.dim())?;
        check_dim(sample.d, cfg.x0.len())?;
        let set = cfg.multi_indices();
        let p = set.len();
        let inv_volume = 1.0 / h.volume();
        let mut local = LocalDesign {
            n_total: sample.n(),
            volume: h.volume(),
            p,
            monomials: Vec::new(),
            y: Vec::new(),
            weights: Vec::new(),
            indices: Vec::new(),
        };
        let mut u = vec![0.0; sample.d];
        let mut row = vec![0.0; p];
        for i in 0..sample.n() {
            let x = sample.point(i);
            if !kernel.contains_scaled(h, &cfg.x0, x) {
                continue;
            }
            for j in 0..sample.d {
                u[j] = (x[j] - cfg.x0[j]) / h.0[j];
            }
            set.fill_monomials(&u, &mut row);
            local.monomials.extend_from_slice(&row);
            local.y.push(sample.y[i]);
            local.weights.push(kernel.sup_norm() * inv_volume);
            local.indices.push(i);
        }
        Ok(local)
    }

    pub fn effective_n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.monomials[i * self.p..(i + 1) * self.p]
    }

    /// `Y_i − tᵀU_i` for every window point.
    pub fn residuals(&self, t: &[f64]) -> Vec<f64> {
        (0..self.effective_n()).map(|i| self.y[i] - dot(self.row(i), t)).collect()
    }

    pub fn criterion(&self, c: &ContrastSpec, t: &[f64]) -> f64 {
        let s: f64 = (0..self.effective_n()).map(|i| c.rho(self.y[i] - dot(self.row(i), t)) * self.weights[i]).sum();
        s / self.n_total as f64
    }

    pub fn gradient(&self, c: &ContrastSpec, t: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.p];
        self.gradient_into(c, t, &mut g);
        g
    }

    fn gradient_into(&self, c: &ContrastSpec, t: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.effective_n() {
            let row = self.row(i);
            let psi = c.rho_prime(self.y[i] - dot(row, t)) * self.weights[i];
            for (gk, uk) in g.iter_mut().zip(row) {
                *gk -= psi * uk;
            }
        }
        let n = self.n_total as f64;
        g.iter_mut().for_each(|v| *v /= n);
    }

    /// Largest eigenvalue of `(1/n) Σ K_h(X_i) U_i U_iᵀ`, a Lipschitz constant of the gradient.
    pub fn gradient_lipschitz(&self) -> f64 {
        let mut h = DMatrix::<f64>::zeros(self.p, self.p);
        for i in 0..self.effective_n() {
            let row = self.row(i);
            let w = self.weights[i] / self.n_total as f64;
            for a in 0..self.p {
                for b in 0..self.p {
                    h[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        SymmetricEigen::new(h).eigenvalues.iter().cloned().fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Projected-gradient sup-norm below `tol_grad`.
    Gradient,
    /// Accepted step sup-norm below `tol_step`.
    Step,
    /// The line search could not decrease the criterion at floating-point resolution.
    Stalled,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpaFit {
    pub coeffs: Vec<f64>,
    /// Point estimate `t̂_{0…0}`.
    pub estimate: f64,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub termination: Termination,
    pub effective_n: usize,
    pub objective: f64,
}

pub fn criterion_value(sample: &SampleSet, c: &ContrastSpec, k: &KernelSpec, h: &Bandwidth, cfg: &LpaConfig, t: &[f64]) -> Result<f64> {
    let local = LocalDesign::build(sample, k, h, cfg)?;
    check_dim(local.p, t.len())?;
    Ok(local.criterion(c, t))
}

/// Gradient of the criterion in `t`, i.e. the negated criterion derivative.
pub fn criterion_gradient(
    sample: &SampleSet,
    c: &ContrastSpec,
    k: &KernelSpec,
    h: &Bandwidth,
    cfg: &LpaConfig,
    t: &[f64],
) -> Result<Vec<f64>> {
    let local = LocalDesign::build(sample, k, h, cfg)?;
    check_dim(local.p, t.len())?;
    Ok(local.gradient(c, t))
}

pub fn fit_lpa(sample: &SampleSet, c: &ContrastSpec, k: &KernelSpec, h: &Bandwidth, cfg: &LpaConfig) -> Result<LpaFit> {
    cfg.validate()?;
    let local = LocalDesign::build(sample, k, h, cfg)?;
    fit_local(&local, c, cfg, None)
}

const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 80;
const MAX_STEP_RATIO: f64 = 1e12;

/// Projected gradient descent with Armijo backtracking from `t = 0`.
///
/// The first trial step of each iteration is the Barzilai–Borwein step,
/// bounded below by `1/L`; a step of `1/L` always satisfies the Armijo test,
/// so every accepted iterate decreases the criterion.
pub fn fit_local(local: &LocalDesign, c: &ContrastSpec, cfg: &LpaConfig, mut history: Option<&mut Vec<f64>>) -> Result<LpaFit> {
    if local.effective_n() == 0 {
        return Err(Error::EmptyWindow);
    }
    let m = cfg.box_bound;
    let project = |v: f64| v.clamp(-m, m);
    let lipschitz = local.gradient_lipschitz().max(f64::MIN_POSITIVE);
    let alpha_min = 1.0 / lipschitz;

    let p = local.p;
    let mut t = vec![0.0; p];
    let mut f = local.criterion(c, &t);
    let mut g = local.gradient(c, &t);
    let mut g_new = vec![0.0; p];
    let mut trial = vec![0.0; p];
    let mut alpha = alpha_min;
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;
    if let Some(h) = history.as_deref_mut() {
        h.push(f);
    }

    let projected_gradient =
        |t: &[f64], g: &[f64]| -> f64 { t.iter().zip(g).map(|(ti, gi)| (ti - project(ti - gi)).abs()).fold(0.0, f64::max) };

    while iterations < cfg.max_iter {
        if projected_gradient(&t, &g) <= cfg.tol_grad {
            termination = Termination::Gradient;
            break;
        }
        iterations += 1;
        let mut a = alpha.clamp(alpha_min, MAX_STEP_RATIO * alpha_min);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for k in 0..p {
                trial[k] = project(t[k] - a * g[k]);
            }
            let slope: f64 = (0..p).map(|k| g[k] * (trial[k] - t[k])).sum();
            let f_trial = local.criterion(c, &trial);
            if f_trial <= f + ARMIJO_SLOPE * slope {
                accepted = Some(f_trial);
                break;
            }
            a *= BACKTRACK;
        }
        let Some(f_trial) = accepted else {
            termination = Termination::Stalled;
            break;
        };
        debug_assert!(f_trial <= f, "criterion increased: {f} -> {f_trial}");

        local.gradient_into(c, &trial, &mut g_new);
        let mut ss = 0.0;
        let mut sy = 0.0;
        let mut step = 0.0f64;
        for k in 0..p {
            let s = trial[k] - t[k];
            let yk = g_new[k] - g[k];
            ss += s * s;
            sy += s * yk;
            step = step.max(s.abs());
        }
        alpha = if sy > 0.0 { ss / sy } else { MAX_STEP_RATIO * alpha_min };
        std::mem::swap(&mut t, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        f = f_trial;
        if let Some(h) = history.as_deref_mut() {
            h.push(f);
        }
        if step <= cfg.tol_step {
            termination = Termination::Step;
            break;
        }
    }

    Ok(LpaFit {
        estimate: t[0],
        final_grad_norm: projected_gradient(&t, &g),
        converged: termination != Termination::MaxIter,
        termination,
        iterations,
        effective_n: local.effective_n(),
        objective: f,
        coeffs: t,
    })
}
