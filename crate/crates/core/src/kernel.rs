//! Shifted-hypercube indicator kernels and bandwidth scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Indicator of the closed unit box `S(u) = Π_j [−1/2 + u_j, 1/2 + u_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub shift: Vec<f64>,
}

impl KernelSpec {
    pub fn new(shift: Vec<f64>) -> Result<Self> {
        if shift.is_empty() {
            return Err(Error::Domain("kernel shift must have at least one coordinate".into()));
        }
        if let Some(u) = shift.iter().find(|u| !(-0.5..=0.5).contains(*u)) {
            return Err(Error::Domain(format!("kernel shift {u} outside [-1/2, 1/2]")));
        }
        Ok(Self { shift })
    }

    pub fn symmetric(d: usize) -> Self {
        Self { shift: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// ‖K‖∞ of an indicator kernel.
    pub fn sup_norm(&self) -> f64 {
        1.0
    }

    /// Lower and upper corner of the support along axis `j`.
    pub fn support(&self, j: usize) -> (f64, f64) {
        (-0.5 + self.shift[j], 0.5 + self.shift[j])
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        check_dim(self.dim(), u.len())?;
        Ok(if self.contains(u) { 1.0 } else { 0.0 })
    }

    #[inline]
    pub(crate) fn contains(&self, u: &[f64]) -> bool {
        u.iter().zip(&self.shift).all(|(&v, &s)| v >= -0.5 + s && v <= 0.5 + s)
    }

    /// `K((x − x0)/h) / Π_h`.
    pub fn eval_scaled(&self, h: &Bandwidth, x0: &[f64], x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), h.dim())?;
        check_dim(self.dim(), x0.len())?;
        check_dim(self.dim(), x.len())?;
        Ok(if self.contains_scaled(h, x0, x) { 1.0 / h.volume() } else { 0.0 })
    }

    #[inline]
    pub(crate) fn contains_scaled(&self, h: &Bandwidth, x0: &[f64], x: &[f64]) -> bool {
        (0..self.dim()).all(|j| {
            let v = (x[j] - x0[j]) / h.0[j];
            v >= -0.5 + self.shift[j] && v <= 0.5 + self.shift[j]
        })
    }

    /// Whether `x` lies in the window `V_h` around `x0`.
    pub fn in_neighborhood(&self, h: &Bandwidth, x0: &[f64], x: &[f64]) -> Result<bool> {
        Ok(self.eval_scaled(h, x0, x)? > 0.0)
    }

    /// Whether `V_h ⊆ [0, 1]^d`. Candidates failing this are excluded from selection.
    pub fn window_inside_unit_cube(&self, h: &Bandwidth, x0: &[f64]) -> bool {
        (0..self.dim()).all(|j| {
            let (lo, hi) = self.support(j);
            x0[j] + h.0[j] * lo >= 0.0 && x0[j] + h.0[j] * hi <= 1.0
        })
    }
}

/// Default kernel set: the symmetric box, plus quarter shifts in one dimension.
pub fn default_kernels(d: usize) -> Vec<KernelSpec> {
    if d == 1 {
        vec![KernelSpec { shift: vec![-0.25] }, KernelSpec { shift: vec![0.0] }, KernelSpec { shift: vec![0.25] }]
    } else {
        vec![KernelSpec::symmetric(d)]
    }
}

/// Per-axis bandwidth `h ∈ (0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bandwidth(pub Vec<f64>);

impl Bandwidth {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::Domain("bandwidth must have at least one coordinate".into()));
        }
        if let Some(v) = h.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::Domain(format!("bandwidth component {v} outside (0, 1]")));
        }
        Ok(Self(h))
    }

    pub fn isotropic(h: f64, d: usize) -> Result<Self> {
        Self::new(vec![h; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Π_h.
    pub fn volume(&self) -> f64 {
        self.0.iter().product()
    }

    /// Coordinatewise maximum h ∨ h′.
    pub fn join(&self, other: &Bandwidth) -> Bandwidth {
        Bandwidth(self.0.iter().zip(&other.0).map(|(a, b)| a.max(*b)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::Dimension { expected, got })
    } else {
        Ok(())
    }
}
