//! Multiple stationary states at fixed frequency or fixed mass.
//!
//! Each negative eigenpair `(λ_j, φ_j)` seeds a Newton solve at the amplitude
//! where `t ↦ S_ω(tφ_j)` is stationary. Converged states are deduplicated up
//! to sign.

use nalgebra::DVector;
use thiserror::Error;

use crate::discretize::{DiscreteSystem, DiscretizeError, GraphFunction};
use crate::linalg::{ChainFactor, LinalgError, SymSparse};
use crate::spectral::{bottom_of_spectrum, SpectralError, SpectralResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiplicityError {
    #[error("Newton iterate collapsed to the trivial solution")]
    ConvergedToZero,
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("frequency {omega} outside (0, {upper})")]
    FrequencyOutOfRange { omega: f64, upper: f64 },
    #[error("frequency must be positive, got {0}")]
    InvalidFrequency(f64),
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct StationaryState {
    pub psi: GraphFunction,
    pub omega: f64,
    pub action: f64,
    pub energy: f64,
    /// `L²` norm.
    pub mass: f64,
    /// `‖F(ψ)‖` relative to `‖|K+B||ψ| + |ω||M||ψ| + |N(ψ)|‖`.
    pub newton_residual: f64,
    pub nehari_residual: f64,
    pub iterations: usize,
    /// Eigenpair that seeded the solve, if any.
    pub seed_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Distinct states differ by at least this relative `L²` distance.
    pub dedup_tol: f64,
    /// Worker threads for independent seeds.
    pub jobs: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, dedup_tol: 1e-4, jobs: 1 }
    }
}

/// `S_ω(ψ) = E(ψ) + (ω/2)‖ψ‖²`.
pub fn action(sys: &DiscreteSystem, psi: &GraphFunction, omega: f64) -> Result<f64, MultiplicityError> {
    let f = sys.functionals(psi)?;
    Ok(f.energy + 0.5 * omega * f.mass * f.mass)
}

fn residual(sys: &DiscreteSystem, x: &DVector<f64>, omega: f64) -> (DVector<f64>, f64) {
    let n = sys.nonlinear_term(x);
    let mx = sys.mass_matrix().matvec(x);
    let f = sys.hamiltonian().matvec(x) + mx * omega + &n;
    let ax = x.abs();
    let scale = (sys.hamiltonian().abs_matvec(&ax) + sys.mass_matrix().abs_matvec(&ax) * omega.abs() + n.abs()).norm();
    (f, scale)
}

/// Relative stationarity residual of `ψ` at frequency `ω`.
pub fn stationarity_residual(sys: &DiscreteSystem, psi: &GraphFunction, omega: f64) -> Result<f64, MultiplicityError> {
    sys.check(psi)?;
    let (f, scale) = residual(sys, psi.values(), omega);
    Ok(if scale == 0.0 { 0.0 } else { f.norm() / scale })
}

struct NewtonOutcome {
    x: DVector<f64>,
    omega: f64,
    iterations: usize,
    rel: f64,
}

/// Damped Newton on `F(ψ) = (K+B)ψ + ωMψ + N(ψ)`; with `mu` set, `ω` is an
/// unknown and the row `(ψᵀMψ − μ²)/2 = 0` borders the system.
fn newton_core(
    sys: &DiscreteSystem,
    x0: DVector<f64>,
    omega0: f64,
    mu: Option<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, MultiplicityError> {
    let m = sys.mass_matrix();
    let start_mass = m.bilinear(&x0, &x0).max(0.0).sqrt();
    if start_mass == 0.0 {
        return Err(MultiplicityError::ConvergedToZero);
    }
    let merit = |x: &DVector<f64>, w: f64| -> (f64, f64) {
        let (f, scale) = residual(sys, x, w);
        let g = mu.map_or(0.0, |mu| 0.5 * (m.bilinear(x, x) - mu * mu));
        ((f.norm_squared() + g * g).sqrt(), if scale == 0.0 { f64::INFINITY } else { f.norm() / scale })
    };
    let (mut x, mut w) = (x0, omega0);
    let (mut phi, mut rel) = merit(&x, w);
    let mut polished = false;
    for it in 0..opts.max_iter {
        let mass = m.bilinear(&x, &x).max(0.0).sqrt();
        if mass <= 1e-8 * start_mass {
            return Err(MultiplicityError::ConvergedToZero);
        }
        let g_ok = mu.is_none_or(|mu| (mass * mass - mu * mu).abs() <= opts.tol * mu * mu);
        if rel <= opts.tol && g_ok {
            if polished {
                return Ok(NewtonOutcome { x, omega: w, iterations: it, rel });
            }
            polished = true;
        }
        let jn = sys.nonlinear_jacobian(&x);
        let j = SymSparse::combination(&[(1.0, sys.hamiltonian()), (w, m), (1.0, &jn)]);
        let factor = ChainFactor::new(&j, sys.layout())?;
        let (f, _) = residual(sys, &x, w);
        let a = factor.solve(&f)?;
        let (dx, dw) = match mu {
            None => (-a, 0.0),
            Some(mu) => {
                let mx = m.matvec(&x);
                let b = factor.solve(&mx)?;
                let c = 0.5 * (x.dot(&mx) - mu * mu);
                let dw = (c - mx.dot(&a)) / mx.dot(&b);
                (-(a + b * dw), dw)
            }
        };
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let xn = &x + &dx * lam;
            let wn = w + dw * lam;
            let (pn, rn) = merit(&xn, wn);
            if pn.is_finite() && (pn <= (1.0 - 1e-4 * lam) * phi || (polished && pn <= phi)) {
                x = xn;
                w = wn;
                phi = pn;
                rel = rn;
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if !accepted {
            if polished {
                return Ok(NewtonOutcome { x, omega: w, iterations: it, rel });
            }
            return Err(MultiplicityError::NoConvergence { iterations: it, residual: rel });
        }
    }
    Err(MultiplicityError::NoConvergence { iterations: opts.max_iter, residual: rel })
}

fn build_state(
    sys: &DiscreteSystem,
    out: NewtonOutcome,
    seed_index: Option<usize>,
) -> Result<StationaryState, MultiplicityError> {
    let psi = sys.function(out.x)?.sign_normalized();
    let f = sys.functionals(&psi)?;
    Ok(StationaryState {
        action: f.energy + 0.5 * out.omega * f.mass * f.mass,
        energy: f.energy,
        mass: f.mass,
        newton_residual: out.rel,
        nehari_residual: {
            let m2 = f.mass * f.mass;
            (f.q + out.omega * m2 + f.lp1).abs() / (f.q.abs() + m2 + f.lp1)
        },
        omega: out.omega,
        iterations: out.iterations,
        seed_index,
        psi,
    })
}

/// Solves `F(ψ) = 0` at fixed `ω ∈ (0, −l_H)`. The seed is first moved along
/// its ray to the point where `t ↦ S_ω(t·seed)` is stationary, when such a
/// point exists.
pub fn newton_stationary(
    sys: &DiscreteSystem,
    omega: f64,
    seed: &GraphFunction,
    opts: &NewtonOptions,
) -> Result<StationaryState, MultiplicityError> {
    newton_seeded(sys, omega, seed, None, opts)
}

fn newton_seeded(
    sys: &DiscreteSystem,
    omega: f64,
    seed: &GraphFunction,
    seed_index: Option<usize>,
    opts: &NewtonOptions,
) -> Result<StationaryState, MultiplicityError> {
    sys.check(seed)?;
    let (l_h, _) = bottom_of_spectrum(sys)?;
    if !(omega > 0.0 && omega < -l_h) {
        return Err(MultiplicityError::FrequencyOutOfRange { omega, upper: -l_h });
    }
    let f = sys.functionals(seed)?;
    if f.mass == 0.0 {
        return Err(MultiplicityError::ConvergedToZero);
    }
    let quad = f.q + omega * f.mass * f.mass;
    let t = if quad < 0.0 && f.lp1 > 0.0 { (-quad / f.lp1).powf(1.0 / (sys.p() - 1.0)) } else { 1.0 };
    let out = newton_core(sys, seed.values() * t, omega, None, opts)?;
    build_state(sys, out, seed_index)
}

/// Relative `L²` distance between two states after sign alignment.
pub fn orbit_distance(sys: &DiscreteSystem, a: &GraphFunction, b: &GraphFunction) -> f64 {
    let m = sys.mass_matrix();
    let (x, y) = (a.values(), b.values());
    let dm = m.bilinear(&(x - y), &(x - y)).min(m.bilinear(&(x + y), &(x + y))).max(0.0).sqrt();
    let scale = m.bilinear(x, x).max(m.bilinear(y, y)).max(0.0).sqrt();
    if scale == 0.0 {
        0.0
    } else {
        dm / scale
    }
}

#[derive(Debug, Clone)]
pub struct SeedFailure {
    pub seed_index: usize,
    /// `+1` or `−1`.
    pub sign: i8,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BranchReport {
    /// Distinct states sorted by ascending action (or energy, for fixed mass).
    pub states: Vec<StationaryState>,
    pub failures: Vec<SeedFailure>,
    /// Set by [`normalized_family`] when a converged multiplier is `≤ 0`.
    pub smallness_violated: bool,
}

fn run_seeds<F>(count: usize, jobs: usize, solve: F) -> Vec<(usize, i8, Result<StationaryState, MultiplicityError>)>
where
    F: Fn(usize, i8) -> Result<StationaryState, MultiplicityError> + Sync,
{
    let tasks: Vec<(usize, i8)> = (0..count).flat_map(|j| [(j, 1i8), (j, -1i8)]).collect();
    if jobs <= 1 || tasks.len() <= 1 {
        return tasks.into_iter().map(|(j, s)| (j, s, solve(j, s))).collect();
    }
    let chunk = tasks.len().div_ceil(jobs);
    let solve = &solve;
    std::thread::scope(|scope| {
        let handles: Vec<_> = tasks
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&(j, s)| (j, s, solve(j, s))).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("seed worker panicked")).collect()
    })
}

fn dedup(
    sys: &DiscreteSystem,
    mut found: Vec<StationaryState>,
    tol: f64,
    key: impl Fn(&StationaryState) -> f64,
) -> Vec<StationaryState> {
    found.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.seed_index.cmp(&b.seed_index)));
    let mut out: Vec<StationaryState> = Vec::new();
    for s in found {
        if out.iter().all(|o| orbit_distance(sys, &o.psi, &s.psi) >= tol) {
            out.push(s);
        }
    }
    out
}

/// Newton from `±ε_j φ_j` for every eigenpair with `λ_j < −ω`, where
/// `ε_j = ((−λ_j − ω)/‖φ_j‖_{p+1}^{p+1})^{1/(p−1)}`.
pub fn enumerate_branches(
    sys: &DiscreteSystem,
    omega: f64,
    spectral: &SpectralResult,
    opts: &NewtonOptions,
) -> Result<BranchReport, MultiplicityError> {
    if !(omega > 0.0) {
        return Err(MultiplicityError::InvalidFrequency(omega));
    }
    let pairs: Vec<&(f64, GraphFunction)> = spectral.eigenpairs.iter().filter(|(l, _)| *l < -omega).collect();
    let p = sys.p();
    let results = run_seeds(pairs.len(), opts.jobs, |j, sign| {
        let (lam, phi) = pairs[j];
        let eps = ((-lam - omega) / sys.lp1(phi)).powf(1.0 / (p - 1.0));
        newton_seeded(sys, omega, &phi.scaled(f64::from(sign) * eps), Some(j), opts)
    });
    let mut found = Vec::new();
    let mut failures = Vec::new();
    for (j, sign, r) in results {
        match r {
            Ok(s) if s.action < 0.0 => found.push(s),
            Ok(s) => {
                failures.push(SeedFailure { seed_index: j, sign, reason: format!("non-negative action {}", s.action) })
            }
            Err(e) => failures.push(SeedFailure { seed_index: j, sign, reason: e.to_string() }),
        }
    }
    Ok(BranchReport { states: dedup(sys, found, opts.dedup_tol, |s| s.action), failures, smallness_violated: false })
}

/// Bordered Newton on `(ψ, ω)` from `±μ φ_j` for every negative eigenpair.
pub fn normalized_family(
    sys: &DiscreteSystem,
    mu: f64,
    spectral: &SpectralResult,
    opts: &NewtonOptions,
) -> Result<BranchReport, MultiplicityError> {
    if !(mu > 0.0) {
        return Err(MultiplicityError::NonPositiveMass(mu));
    }
    let upper = -spectral.l_h;
    let results = run_seeds(spectral.eigenpairs.len(), opts.jobs, |j, sign| {
        let (_, phi) = &spectral.eigenpairs[j];
        let x0 = phi.values() * (f64::from(sign) * mu / sys.mass_squared(phi).sqrt());
        let f = sys.functionals(&sys.function(x0.clone())?)?;
        let w0 = -(f.q + f.lp1) / (mu * mu);
        let out = newton_core(sys, x0, w0, Some(mu), opts)?;
        build_state(sys, out, Some(j))
    });
    let mut found = Vec::new();
    let mut failures = Vec::new();
    let mut smallness_violated = false;
    for (j, sign, r) in results {
        match r {
            Ok(s) if s.omega <= 0.0 => {
                smallness_violated = true;
                failures.push(SeedFailure {
                    seed_index: j,
                    sign,
                    reason: format!("non-positive multiplier {}", s.omega),
                });
            }
            Ok(s) if s.energy < 0.0 && s.omega < upper => found.push(s),
            Ok(s) => failures.push(SeedFailure {
                seed_index: j,
                sign,
                reason: format!("energy {} or multiplier {} outside the admissible range", s.energy, s.omega),
            }),
            Err(e) => failures.push(SeedFailure { seed_index: j, sign, reason: e.to_string() }),
        }
    }
    Ok(BranchReport { states: dedup(sys, found, opts.dedup_tol, |s| s.energy), failures, smallness_violated })
}
