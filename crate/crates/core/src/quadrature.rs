//! Globally adaptive one-dimensional quadrature.
//!
//! Two independent local rules share the same bisection driver: a 7/15-point
//! Gauss–Kronrod pair (the embedded 7-point rule is Gauss–Legendre) and a
//! Richardson-extrapolated Simpson pair. The oracle integrals are computed with
//! either, which lets tests cross-check one against the other.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    #[default]
    GaussKronrod,
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-8, abs: 1e-14, max_intervals: 20_000 }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Self { rel, ..Self::default() }
    }

    /// Tolerance for an integral nested inside another one.
    pub fn inner(&self) -> Self {
        Self { rel: self.rel * 1e-2, abs: self.abs * 1e-2, max_intervals: self.max_intervals }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * hl, ((kronrod - gauss) * hl).abs())
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let h = b - a;
    let f0 = f(a);
    let f1 = f(a + 0.25 * h);
    let f2 = f(a + 0.5 * h);
    let f3 = f(a + 0.75 * h);
    let f4 = f(b);
    let coarse = h / 6.0 * (f0 + 4.0 * f2 + f4);
    let fine = h / 12.0 * (f0 + 4.0 * f1 + 2.0 * f2 + 4.0 * f3 + f4);
    let diff = (fine - coarse) / 15.0;
    (fine + diff, diff.abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// ∫_a^b f with the chosen rule; fails if the error estimate does not reach
/// `max(tol.abs, tol.rel·|I|)` within `tol.max_intervals` subintervals.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rule: QuadratureRule, tol: Tolerance) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, rule, tol).map(|v| -v);
    }
    let local = |lo: f64, hi: f64| match rule {
        QuadratureRule::GaussKronrod => gauss_kronrod(&f, lo, hi),
        QuadratureRule::Simpson => simpson(&f, lo, hi),
    };
    let (v0, e0) = local(a, b);
    let mut total = v0;
    let mut total_err = e0;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v0, err: e0 });
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::QuadratureFailure { tolerance: tol.rel, estimate: f64::INFINITY });
        }
        if total_err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(total);
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::QuadratureFailure { tolerance: tol.rel, estimate: total_err });
        }
        let worst = heap.pop().expect("heap holds at least one piece");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine precision
            return Err(Error::QuadratureFailure { tolerance: tol.rel, estimate: total_err });
        }
        let (vl, el) = local(worst.a, mid);
        let (vr, er) = local(mid, worst.b);
        total += vl + vr - worst.value;
        total_err += el + er - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: vl, err: el });
        heap.push(Piece { a: mid, b: worst.b, value: vr, err: er });
        if heap.len() % 64 == 0 {
            // refresh the running sums to stop cancellation drift
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
}

/// Sum of integrals over consecutive breakpoints (sorted and deduplicated first).
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], rule: QuadratureRule, tol: Tolerance) -> Result<f64> {
    let mut pts: Vec<f64> = points.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut sum = 0.0;
    for w in pts.windows(2) {
        sum += integrate(&f, w[0], w[1], rule, tol)?;
    }
    Ok(sum)
}

/// ∫_a^∞ f through z = a + t/(1−t), t ∈ [0, 1). The integrand must vanish at infinity.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, rule: QuadratureRule, tol: Tolerance) -> Result<f64> {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        let v = f(a + t / s) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, rule, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn both(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64) -> (f64, f64) {
        let t = Tolerance::rel(1e-10);
        (integrate(f, a, b, QuadratureRule::GaussKronrod, t).unwrap(), integrate(f, a, b, QuadratureRule::Simpson, t).unwrap())
    }

    #[test]
    fn polynomial_and_transcendental() {
        let (g, s) = both(|x| x * x * x - x, 0.0, 2.0);
        assert!((g - 2.0).abs() < 1e-12 && (s - 2.0).abs() < 1e-12);
        let (g, s) = both(f64::sin, 0.0, std::f64::consts::PI);
        assert!((g - 2.0).abs() < 1e-9 && (s - 2.0).abs() < 1e-9);
    }

    #[test]
    fn kinked_integrand() {
        let (g, s) = both(|x: f64| (x - 0.3).abs(), 0.0, 1.0);
        let exact = 0.5 * (0.09 + 0.49);
        assert!((g - exact).abs() < 1e-9, "{g}");
        assert!((s - exact).abs() < 1e-9, "{s}");
    }

    #[test]
    fn half_line_gaussian() {
        let v = integrate_to_infinity(crate::special::normal_pdf, 0.0, QuadratureRule::GaussKronrod, Tolerance::rel(1e-10)).unwrap();
        assert!((v - 0.5).abs() < 1e-10);
        let v = integrate_to_infinity(crate::special::normal_pdf, 0.0, QuadratureRule::Simpson, Tolerance::rel(1e-10)).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let v = integrate(|x| x, 1.0, 0.0, QuadratureRule::GaussKronrod, Tolerance::default()).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn singular_integrand_reports_failure() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, QuadratureRule::Simpson, Tolerance::default());
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }
}
