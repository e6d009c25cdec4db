//! Convex symmetric contrasts with a 1-Lipschitz, bounded derivative and a
//! second derivative in [0, 1].
//!
//! The family is closed (Huber, arctan). A new contrast must pass
//! [`validate_contrast_fn`] through the [`ContrastFn`] trait before it can be
//! trusted by the estimators.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    Huber,
    Arctan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastSpec {
    pub kind: ContrastKind,
    pub gamma: f64,
}

impl ContrastSpec {
    pub fn new(kind: ContrastKind, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("contrast scale must be positive, got {gamma}")));
        }
        Ok(Self { kind, gamma })
    }

    pub fn huber(gamma: f64) -> Self {
        Self::new(ContrastKind::Huber, gamma).expect("positive Huber scale")
    }

    pub fn arctan(gamma: f64) -> Self {
        Self::new(ContrastKind::Arctan, gamma).expect("positive arctan scale")
    }

    pub fn rho(&self, z: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            ContrastKind::Huber => {
                let a = z.abs();
                if a <= g {
                    0.5 * z * z
                } else {
                    g * (a - 0.5 * g)
                }
            }
            ContrastKind::Arctan => {
                let s = z / g;
                g * z * s.atan() - 0.5 * g * g * (s * s).ln_1p()
            }
        }
    }

    pub fn rho_prime(&self, z: f64) -> f64 {
        match self.kind {
            ContrastKind::Huber => z.clamp(-self.gamma, self.gamma),
            ContrastKind::Arctan => self.gamma * (z / self.gamma).atan(),
        }
    }

    /// Huber uses the closed indicator of [−γ, γ].
    pub fn rho_second(&self, z: f64) -> f64 {
        match self.kind {
            ContrastKind::Huber => {
                if z.abs() <= self.gamma {
                    1.0
                } else {
                    0.0
                }
            }
            ContrastKind::Arctan => {
                let s = z / self.gamma;
                1.0 / (1.0 + s * s)
            }
        }
    }

    /// ‖ρ′‖∞.
    pub fn rho_prime_sup(&self) -> f64 {
        match self.kind {
            ContrastKind::Huber => self.gamma,
            ContrastKind::Arctan => self.gamma * FRAC_PI_2,
        }
    }

    /// Points where ρ″ is discontinuous.
    pub fn kinks(&self) -> Vec<f64> {
        match self.kind {
            ContrastKind::Huber => vec![-self.gamma, self.gamma],
            ContrastKind::Arctan => Vec::new(),
        }
    }
}

/// The evaluation contract a contrast has to satisfy.
pub trait ContrastFn {
    fn rho(&self, z: f64) -> f64;
    fn rho_prime(&self, z: f64) -> f64;
    fn rho_second(&self, z: f64) -> f64;
    fn rho_prime_sup(&self) -> f64;
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl ContrastFn for ContrastSpec {
    fn rho(&self, z: f64) -> f64 {
        ContrastSpec::rho(self, z)
    }
    fn rho_prime(&self, z: f64) -> f64 {
        ContrastSpec::rho_prime(self, z)
    }
    fn rho_second(&self, z: f64) -> f64 {
        ContrastSpec::rho_second(self, z)
    }
    fn rho_prime_sup(&self) -> f64 {
        ContrastSpec::rho_prime_sup(self)
    }
    fn kinks(&self) -> Vec<f64> {
        ContrastSpec::kinks(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    ZeroAtOrigin,
    Symmetry,
    Convexity,
    DerivativeOdd,
    DerivativeMonotone,
    DerivativeLipschitz,
    DerivativeBounded,
    SecondDerivativeRange,
    FirstDerivativeConsistent,
    SecondDerivativeConsistent,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub passed: bool,
    /// Largest violation found (0 when none).
    pub worst_violation: f64,
    pub worst_at: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContrastValidation {
    pub checks: Vec<AxiomCheck>,
    /// max |ρ′(z₁) − ρ′(z₂)| / |z₁ − z₂| over neighbouring grid points.
    pub worst_lipschitz_ratio: f64,
}

impl ContrastValidation {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, axiom: Axiom) -> &AxiomCheck {
        self.checks.iter().find(|c| c.axiom == axiom).expect("every axiom is checked")
    }
}

/// Grid-based violation tolerance for the exact axioms.
pub const AXIOM_TOLERANCE: f64 = 1e-10;
/// Step and tolerance of the central-difference derivative checks.
pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn validate_contrast(c: &ContrastSpec, grid_halfwidth: f64, grid_points: usize) -> Result<ContrastValidation> {
    validate_contrast_fn(c, grid_halfwidth, grid_points)
}

/// Numerically checks every contrast axiom on a symmetric grid of
/// `grid_points` points spanning `[−grid_halfwidth, grid_halfwidth]`.
/// Derivative consistency is skipped within `2·FD_STEP` of a kink.
pub fn validate_contrast_fn<C: ContrastFn + ?Sized>(c: &C, grid_halfwidth: f64, grid_points: usize) -> Result<ContrastValidation> {
    if grid_points < 3 {
        return Err(Error::Domain(format!("need at least 3 grid points, got {grid_points}")));
    }
    if !(grid_halfwidth > 0.0) {
        return Err(Error::Domain("grid half-width must be positive".into()));
    }
    let step = 2.0 * grid_halfwidth / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|k| -grid_halfwidth + k as f64 * step).collect();
    let kinks = c.kinks();
    let near_kink = |z: f64| kinks.iter().any(|k| (z - k).abs() <= 2.0 * FD_STEP);

    let mut checks = Vec::new();
    let mut record = |axiom: Axiom, violations: &mut dyn Iterator<Item = (f64, f64)>, tol: f64| {
        let (mut worst, mut at) = (0.0f64, 0.0);
        for (z, v) in violations {
            if v > worst || v.is_nan() {
                worst = if v.is_nan() { f64::INFINITY } else { v };
                at = z;
            }
        }
        checks.push(AxiomCheck { axiom, passed: worst <= tol, worst_violation: worst, worst_at: at });
    };

    record(Axiom::ZeroAtOrigin, &mut std::iter::once((0.0, c.rho(0.0).abs())), AXIOM_TOLERANCE);
    record(Axiom::Symmetry, &mut grid.iter().map(|&z| (z, (c.rho(z) - c.rho(-z)).abs())), AXIOM_TOLERANCE);
    record(
        Axiom::Convexity,
        &mut grid.windows(3).map(|w| {
            let mid = c.rho(w[1]);
            let chord = 0.5 * (c.rho(w[0]) + c.rho(w[2]));
            (w[1], (mid - chord).max(0.0))
        }),
        AXIOM_TOLERANCE,
    );
    record(Axiom::DerivativeOdd, &mut grid.iter().map(|&z| (z, (c.rho_prime(z) + c.rho_prime(-z)).abs())), AXIOM_TOLERANCE);
    record(
        Axiom::DerivativeMonotone,
        &mut grid.windows(2).map(|w| (w[1], (c.rho_prime(w[0]) - c.rho_prime(w[1])).max(0.0))),
        AXIOM_TOLERANCE,
    );
    let ratios: Vec<(f64, f64)> = grid.windows(2).map(|w| (w[1], (c.rho_prime(w[1]) - c.rho_prime(w[0])).abs() / (w[1] - w[0]))).collect();
    let worst_lipschitz_ratio = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    record(Axiom::DerivativeLipschitz, &mut ratios.iter().map(|&(z, r)| (z, (r - 1.0).max(0.0))), AXIOM_TOLERANCE);
    let sup = c.rho_prime_sup();
    record(Axiom::DerivativeBounded, &mut grid.iter().map(|&z| (z, (c.rho_prime(z).abs() - sup).max(0.0))), AXIOM_TOLERANCE);
    record(
        Axiom::SecondDerivativeRange,
        &mut grid.iter().map(|&z| {
            let s = c.rho_second(z);
            (z, (s - 1.0).max(0.0).max(-s))
        }),
        AXIOM_TOLERANCE,
    );
    let e = FD_STEP;
    record(
        Axiom::FirstDerivativeConsistent,
        &mut grid.iter().filter(|&&z| !near_kink(z)).map(|&z| {
            let fd = (c.rho(z + e) - c.rho(z - e)) / (2.0 * e);
            (z, (fd - c.rho_prime(z)).abs())
        }),
        FD_TOLERANCE,
    );
    record(
        Axiom::SecondDerivativeConsistent,
        &mut grid.iter().filter(|&&z| !near_kink(z)).map(|&z| {
            let fd = (c.rho_prime(z + e) - c.rho_prime(z - e)) / (2.0 * e);
            (z, (fd - c.rho_second(z)).abs())
        }),
        FD_TOLERANCE,
    );

    Ok(ContrastValidation { checks, worst_lipschitz_ratio })
}
