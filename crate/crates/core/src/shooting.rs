//! Exact stationary states on star graphs with a `δ` vertex.
//!
//! On a half-line the decaying solutions of `φ″ = ωφ + |φ|^{p−1}φ` are
//!
//! * `ω > 0`: `φ(x) = ((p+1)ω/2)^{1/(p−1)} · sinh((p−1)√ω x/2 + a)^{−2/(p−1)}`,
//! * `ω = 0`, `p < 5`: `φ(x) = (2(p+1)/(p−1)²)^{1/(p−1)} · (x + b)^{−2/(p−1)}`,
//!
//! with a free shift `a, b > 0`. On a star every edge carries such a profile;
//! continuity at the vertex plus the flux condition `Σ φ′_e(0) = α φ(0)` fixes
//! the shift.

use thiserror::Error;

use crate::quad::{integrate, integrate_to_infinity, QuadError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShootingError {
    #[error("frequency must be non-negative, got {0}")]
    NegativeOmega(f64),
    #[error("ω = 0 profiles need p < 5, got p = {0}")]
    OmegaZeroSupercritical(f64),
    #[error("ω = 0 profile has infinite mass for p = {0}")]
    DivergentMass(f64),
    #[error("shift must be positive, got {0}")]
    NonPositiveShift(f64),
    #[error("exponent must exceed 1, got {0}")]
    InvalidExponent(f64),
    #[error("evaluation point must be non-negative, got {0}")]
    NegativeCoordinate(f64),
    #[error("frequency {omega} outside (0, {upper})")]
    FrequencyOutOfRange { omega: f64, upper: f64 },
    #[error("star needs at least one edge")]
    NoEdges,
    #[error("matching iteration did not converge")]
    NoConvergence,
    #[error("need at least {needed} samples in the asymptotic window, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// `ln sinh(y)` for `y > 0` without overflow.
fn ln_sinh(y: f64) -> f64 {
    if y > 1.0 {
        y + (-(-2.0 * y).exp()).ln_1p() - std::f64::consts::LN_2
    } else {
        y.sinh().ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalflineProfile {
    pub omega: f64,
    pub p: f64,
    /// `a` for `ω > 0`, `b` for `ω = 0`.
    pub shift: f64,
}

impl HalflineProfile {
    pub fn new(omega: f64, p: f64, shift: f64) -> Result<Self, ShootingError> {
        if !(p > 1.0) {
            return Err(ShootingError::InvalidExponent(p));
        }
        if omega < 0.0 {
            return Err(ShootingError::NegativeOmega(omega));
        }
        if omega == 0.0 && p >= 5.0 {
            return Err(ShootingError::OmegaZeroSupercritical(p));
        }
        if !(shift > 0.0) {
            return Err(ShootingError::NonPositiveShift(shift));
        }
        Ok(Self { omega, p, shift })
    }

    fn ln_amplitude(&self) -> f64 {
        let p = self.p;
        if self.omega > 0.0 {
            ((p + 1.0) * self.omega / 2.0).ln() / (p - 1.0)
        } else {
            (2.0 * (p + 1.0) / ((p - 1.0) * (p - 1.0))).ln() / (p - 1.0)
        }
    }

    /// `(φ(x), φ′(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let k = 2.0 / (self.p - 1.0);
        if self.omega > 0.0 {
            let sw = self.omega.sqrt();
            let y = (self.p - 1.0) * sw / 2.0 * x + self.shift;
            let value = (self.ln_amplitude() - k * ln_sinh(y)).exp();
            (value, -sw * value / y.tanh())
        } else {
            let y = x + self.shift;
            let value = (self.ln_amplitude() - k * y.ln()).exp();
            (value, -k * value / y)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// `|φ′|² − ω|φ|² − 2|φ|^{p+1}/(p+1)`, relative to `max(1, |φ′|²)`.
    pub fn decay_identity_residual(&self, x: f64) -> f64 {
        let (v, d) = self.eval(x);
        let lhs = d * d;
        let rhs = self.omega * v * v + 2.0 * v.abs().powf(self.p + 1.0) / (self.p + 1.0);
        (lhs - rhs).abs() / lhs.max(1.0)
    }

    /// `∫₀^∞ φ²` in closed form where one exists (`p = 3`, or `ω = 0`).
    pub fn tail_mass_closed_form(&self) -> Option<f64> {
        if self.omega > 0.0 && self.p == 3.0 {
            // 2√ω (coth a − 1), with coth a − 1 = 2/(e^{2a} − 1)
            Some(2.0 * self.omega.sqrt() * 2.0 / (2.0 * self.shift).exp_m1())
        } else if self.omega == 0.0 {
            let q = 4.0 / (self.p - 1.0);
            Some((2.0 * self.ln_amplitude() + (1.0 - q) * self.shift.ln()).exp() / (q - 1.0))
        } else {
            None
        }
    }

    /// `∫₀^∞ φ²` by adaptive quadrature, split at `x = 10/√ω`.
    pub fn tail_mass_quadrature(&self) -> Result<f64, ShootingError> {
        if self.omega == 0.0 {
            if self.p >= 5.0 {
                return Err(ShootingError::DivergentMass(self.p));
            }
            // power-law tail: integrate in s = ln(x + b)
            let q = 4.0 / (self.p - 1.0);
            let b = self.shift;
            let f = |s: f64| {
                let v = self.value((s.exp() - b).max(0.0));
                v * v * s.exp()
            };
            let scale = self.value(0.0).powi(2).max(1.0);
            let span = 40.0 / (q - 1.0);
            return Ok(integrate(f, b.ln(), b.ln() + span, 1e-12 * scale)?);
        }
        let split = 10.0 / self.omega.sqrt();
        let scale = self.value(0.0).powi(2).max(1.0);
        let f = |x: f64| self.value(x).powi(2);
        let head = integrate(f, 0.0, split, 1e-12 * scale)?;
        let tail = integrate_to_infinity(f, split, 1e-13 * scale)?;
        Ok(head + tail)
    }
}

/// `(φ(x), φ′(x))` of the decaying half-line profile.
pub fn halfline_state(omega: f64, p: f64, shift: f64, x: f64) -> Result<(f64, f64), ShootingError> {
    if x < 0.0 {
        return Err(ShootingError::NegativeCoordinate(x));
    }
    Ok(HalflineProfile::new(omega, p, shift)?.eval(x))
}

/// Squared `L²` norm of a half-line profile.
pub fn halfline_tail_mass(omega: f64, p: f64, shift: f64) -> Result<f64, ShootingError> {
    if omega == 0.0 && p >= 5.0 {
        return Err(ShootingError::DivergentMass(p));
    }
    let prof = HalflineProfile::new(omega, p, shift)?;
    match prof.tail_mass_closed_form() {
        Some(m) => Ok(m),
        None => prof.tail_mass_quadrature(),
    }
}

/// Bottom of the spectrum and `‖φ₀‖_{p+1}^{p+1}` of the linear ground state
/// `φ₀ = c e^{−κx}` on an `E`-edge star with `α < 0`.
pub fn star_linear_ground_state(edges: usize, alpha: f64, p: f64) -> (f64, f64) {
    let e = edges as f64;
    let kappa = -alpha / e;
    let c = (2.0 * kappa / e).sqrt();
    (-kappa * kappa, e * c.powf(p + 1.0) / ((p + 1.0) * kappa))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingSolution {
    pub edges: usize,
    pub alpha: f64,
    pub omega: f64,
    pub p: f64,
    /// Shift on every edge; equal by symmetry.
    pub shifts: Vec<f64>,
    pub vertex_value: f64,
    /// `L²` norm (not squared).
    pub total_mass: f64,
    pub flux_residual: f64,
    pub iterations: usize,
}

impl ShootingSolution {
    pub fn profile(&self, edge: usize) -> HalflineProfile {
        HalflineProfile { omega: self.omega, p: self.p, shift: self.shifts[edge] }
    }

    /// `φ_e(x)`.
    pub fn value(&self, edge: usize, x: f64) -> f64 {
        self.profile(edge).value(x)
    }

    pub fn mass_squared(&self) -> f64 {
        self.total_mass * self.total_mass
    }
}

/// Solves the vertex matching on an `E`-star for `0 < ω < (α/E)²`.
pub fn solve_star_delta(edges: usize, alpha: f64, p: f64, omega: f64) -> Result<ShootingSolution, ShootingError> {
    solve_star_delta_from(edges, alpha, p, omega, 0.5)
}

/// As [`solve_star_delta`], starting the Newton iteration at `t0 = tanh(a) ∈ (0, 1)`.
///
/// With `t = tanh a` the flux condition reads `−E√ω/t = α`; Newton runs on
/// that residual with a bisection safeguard on `(0, 1)`.
pub fn solve_star_delta_from(
    edges: usize,
    alpha: f64,
    p: f64,
    omega: f64,
    t0: f64,
) -> Result<ShootingSolution, ShootingError> {
    if edges == 0 {
        return Err(ShootingError::NoEdges);
    }
    if !(p > 1.0) {
        return Err(ShootingError::InvalidExponent(p));
    }
    let e = edges as f64;
    let upper = if alpha < 0.0 { (alpha / e).powi(2) } else { 0.0 };
    if !(omega > 0.0 && omega < upper) {
        return Err(ShootingError::FrequencyOutOfRange { omega, upper });
    }
    let sw = omega.sqrt();
    let residual = |t: f64| -e * sw / t - alpha;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut t = if t0 > 0.0 && t0 < 1.0 { t0 } else { 0.5 };
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..200 {
        iterations = it + 1;
        let r = residual(t);
        if r == 0.0 {
            converged = true;
            break;
        }
        if r < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - r / (e * sw / (t * t));
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - t).abs();
        t = next;
        if step <= 4.0 * f64::EPSILON * t || residual(t).abs() <= 4.0 * f64::EPSILON * alpha.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ShootingError::NoConvergence);
    }
    let a = t.atanh();
    let prof = HalflineProfile::new(omega, p, a)?;
    let (v0, d0) = prof.eval(0.0);
    let tail = halfline_tail_mass(omega, p, a)?;
    Ok(ShootingSolution {
        edges,
        alpha,
        omega,
        p,
        shifts: vec![a; edges],
        vertex_value: v0,
        total_mass: (e * tail).sqrt(),
        flux_residual: (e * d0 - alpha * v0).abs(),
        iterations,
    })
}

/// `m(ω) = ‖φ(ω)‖²` along a frequency grid.
pub fn mass_frequency_curve(
    edges: usize,
    alpha: f64,
    p: f64,
    omega_grid: &[f64],
) -> Result<Vec<(f64, f64)>, ShootingError> {
    omega_grid.iter().map(|&w| solve_star_delta(edges, alpha, p, w).map(|s| (w, s.mass_squared()))).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in points {
        num += (x.ln() - mx) * (y.ln() - my);
        den += (x.ln() - mx).powi(2);
    }
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationOptions {
    /// Samples with `0 < −ω − l_H ≤ window·|l_H|` enter the fit.
    pub window: f64,
    pub min_samples: usize,
    pub slope_tol: f64,
    pub ratio_tol: f64,
}

impl Default for BifurcationOptions {
    fn default() -> Self {
        Self { window: 0.1, min_samples: 4, slope_tol: 0.02, ratio_tol: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub expected_slope: f64,
    pub slope: f64,
    /// `m(ω)` over the leading term, per window sample `(ω, ratio)`.
    pub ratios: Vec<(f64, f64)>,
    /// Ratio at the sample closest to `−l_H`.
    pub ratio_closest: f64,
    pub window_samples: usize,
    pub pass: bool,
}

/// Leading small-amplitude term `(−(ω + l_H)/‖φ₀‖_{p+1}^{p+1})^{2/(p−1)}`.
pub fn bifurcation_leading_term(omega: f64, l_h: f64, phi0_lp1: f64, p: f64) -> f64 {
    (-(omega + l_h) / phi0_lp1).powf(2.0 / (p - 1.0))
}

/// Compares a computed `(ω, m(ω))` curve with the leading term near `ω = −l_H`.
pub fn check_bifurcation(
    curve: &[(f64, f64)],
    l_h: f64,
    phi0_lp1: f64,
    p: f64,
    opts: &BifurcationOptions,
) -> Result<FitReport, ShootingError> {
    let width = opts.window * l_h.abs();
    let mut window: Vec<(f64, f64)> = curve
        .iter()
        .copied()
        .filter(|&(w, m)| {
            let s = -w - l_h;
            s > 0.0 && s <= width && m > 0.0
        })
        .collect();
    if window.len() < opts.min_samples {
        return Err(ShootingError::InsufficientSamples { needed: opts.min_samples, got: window.len() });
    }
    window.sort_by(|a, b| b.0.total_cmp(&a.0));
    let slope = fit_loglog_slope(&window.iter().map(|&(w, m)| (-w - l_h, m)).collect::<Vec<_>>());
    let ratios: Vec<(f64, f64)> =
        window.iter().map(|&(w, m)| (w, m / bifurcation_leading_term(w, l_h, phi0_lp1, p))).collect();
    let ratio_closest = ratios[0].1;
    let expected_slope = 2.0 / (p - 1.0);
    let pass = (slope - expected_slope).abs() <= opts.slope_tol * expected_slope
        && (ratio_closest - 1.0).abs() <= opts.ratio_tol;
    Ok(FitReport { expected_slope, slope, ratios, ratio_closest, window_samples: window.len(), pass })
}
