//! Lowest eigenpairs of the discrete Hamiltonian `(K+B) φ = λ M φ`.
//!
//! Eigenvalue counts come from Sylvester inertia of `K + B − σM`. The lowest
//! eigenvalue is bracketed by bisection on that count, and shift-invert
//! subspace iteration with a shift just below it converges the requested
//! pairs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::discretize::{DiscreteSystem, DiscretizeError, GraphFunction};
use crate::linalg::{ChainFactor, LinalgError, SymSparse};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("eigensolver did not converge: {0}")]
    EigensolveFailure(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Residual bound `‖(K+B)φ − λMφ‖ ≤ tol·‖φ‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, seed: 0 }
    }
}

/// `(λ, φ)` pairs, ascending in `λ`.
pub type Eigenpairs = Vec<(f64, GraphFunction)>;

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub l_h: f64,
    /// M-orthonormal, ascending.
    pub eigenpairs: Vec<(f64, GraphFunction)>,
    pub k_negative: usize,
    pub residuals: Vec<f64>,
    pub eps_zero: f64,
}

impl SpectralResult {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigenpairs.iter().map(|(l, _)| *l).collect()
    }
}

/// Separates genuine negative eigenvalues from the discretized edge of the
/// essential spectrum: `10⁻⁸ / h²`.
pub fn default_eps_zero(h: f64) -> f64 {
    1e-8 / (h * h)
}

fn shifted(sys: &DiscreteSystem, sigma: f64) -> SymSparse {
    SymSparse::combination(&[(1.0, sys.hamiltonian()), (-sigma, sys.mass_matrix())])
}

/// Number of eigenvalues strictly below `sigma`.
pub fn count_below(sys: &DiscreteSystem, sigma: f64) -> Result<usize, SpectralError> {
    let mut s = sigma;
    for _ in 0..8 {
        match ChainFactor::new(&shifted(sys, s), sys.layout()) {
            Ok(f) => return Ok(f.inertia().negative),
            Err(LinalgError::Singular { .. }) => s -= 1e-12 * sigma.abs().max(1.0),
            Err(e) => return Err(e.into()),
        }
    }
    Err(SpectralError::EigensolveFailure(format!("singular shift at {sigma}")))
}

/// Brackets the lowest eigenvalue: returns `(lo, hi)` with no eigenvalue
/// below `lo` and at least one below `hi`.
fn bracket_lowest(sys: &DiscreteSystem) -> Result<(f64, f64), SpectralError> {
    let mut lo = -1.0;
    let mut guard = 0;
    while count_below(sys, lo)? > 0 {
        lo *= 2.0;
        guard += 1;
        if guard > 80 {
            return Err(SpectralError::EigensolveFailure("spectrum unbounded below".into()));
        }
    }
    let mut hi = if count_below(sys, 0.0)? > 0 { 0.0 } else { 1.0 };
    guard = 0;
    while count_below(sys, hi)? == 0 {
        hi *= 2.0;
        guard += 1;
        if guard > 80 {
            return Err(SpectralError::EigensolveFailure("no eigenvalue found".into()));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-7 * lo.abs().max(hi.abs()).max(1e-3) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if count_below(sys, mid)? > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

fn m_orthonormalize(x: &mut DMatrix<f64>, m: &SymSparse, rng: &mut ChaCha8Rng) {
    let n = x.nrows();
    for j in 0..x.ncols() {
        for attempt in 0..3 {
            for _ in 0..2 {
                let mx = m.matvec(&x.column(j).into_owned());
                for i in 0..j {
                    let c = x.column(i).dot(&mx);
                    let ci = x.column(i).into_owned();
                    x.column_mut(j).axpy(-c, &ci, 1.0);
                }
            }
            let col = x.column(j).into_owned();
            let nrm = m.bilinear(&col, &col).max(0.0).sqrt();
            if nrm > 1e-300 && (attempt > 0 || nrm.is_finite()) {
                x.column_mut(j).scale_mut(1.0 / nrm);
                break;
            }
            let fresh = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            x.set_column(j, &fresh);
        }
    }
}

/// Lowest `count` eigenpairs, M-normalized, each with its largest-magnitude
/// entry positive.
pub fn lowest_eigenpairs(
    sys: &DiscreteSystem,
    count: usize,
    opts: &EigenOptions,
) -> Result<(Eigenpairs, Vec<f64>), SpectralError> {
    if count == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let n = sys.dim();
    if count > n {
        return Err(SpectralError::EigensolveFailure(format!("{count} eigenpairs requested, dimension {n}")));
    }
    let (lo, hi) = bracket_lowest(sys)?;
    let sigma = lo - (hi - lo).max(1e-10 * lo.abs().max(1.0));
    let factor = ChainFactor::new(&shifted(sys, sigma), sys.layout())?;
    let a = sys.hamiltonian();
    let m = sys.mass_matrix();

    let block = (count + 4).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, block, |_, _| rng.gen_range(-1.0..1.0));
    m_orthonormalize(&mut x, m, &mut rng);

    let mut last_res = vec![f64::INFINITY; count];
    for _ in 0..opts.max_iter {
        for j in 0..block {
            let rhs = m.matvec(&x.column(j).into_owned());
            let y = factor.solve(&rhs)?;
            x.set_column(j, &y);
        }
        m_orthonormalize(&mut x, m, &mut rng);

        // Rayleigh–Ritz in the M-orthonormal basis
        let ax = DMatrix::from_columns(&(0..block).map(|j| a.matvec(&x.column(j).into_owned())).collect::<Vec<_>>());
        let ar = x.transpose() * &ax;
        let ar = (&ar + ar.transpose()) * 0.5;
        let eig = ar.symmetric_eigen();
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let y =
            DMatrix::from_columns(&order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect::<Vec<_>>());
        x = &x * &y;
        let lambdas: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();

        let mut done = true;
        for j in 0..count {
            let phi = x.column(j).into_owned();
            let r = a.matvec(&phi) - m.matvec(&phi) * lambdas[j];
            last_res[j] = r.norm() / phi.norm();
            if last_res[j] > opts.tol {
                done = false;
            }
        }
        if done {
            let mut pairs = Vec::with_capacity(count);
            for (j, &lam) in lambdas.iter().enumerate().take(count) {
                let phi = sys.function(x.column(j).into_owned())?.sign_normalized();
                pairs.push((lam, phi));
            }
            return Ok((pairs, last_res));
        }
    }
    Err(SpectralError::EigensolveFailure(format!(
        "residuals {last_res:?} above {} after {} iterations",
        opts.tol, opts.max_iter
    )))
}

/// Smallest eigenvalue `l_H` and its M-normalized eigenvector. Cached on the
/// system after the first call.
pub fn bottom_of_spectrum(sys: &DiscreteSystem) -> Result<(f64, GraphFunction), SpectralError> {
    if let Some((l, v)) = sys.bottom.get() {
        return Ok((*l, sys.function(v.clone())?));
    }
    let (pairs, _) = lowest_eigenpairs(sys, 1, &EigenOptions::default())?;
    let (l, phi) = pairs.into_iter().next().expect("one pair requested");
    let _ = sys.bottom.set((l, phi.values().clone()));
    Ok((l, phi))
}

/// All eigenpairs below `−eps_zero` (default [`default_eps_zero`]).
pub fn negative_spectrum(sys: &DiscreteSystem, eps_zero: Option<f64>) -> Result<SpectralResult, SpectralError> {
    negative_spectrum_with(sys, eps_zero, &EigenOptions::default())
}

pub fn negative_spectrum_with(
    sys: &DiscreteSystem,
    eps_zero: Option<f64>,
    opts: &EigenOptions,
) -> Result<SpectralResult, SpectralError> {
    let eps = eps_zero.unwrap_or_else(|| default_eps_zero(sys.h()));
    let k = count_below(sys, -eps)?;
    if k == 0 {
        let (l_h, _) = bottom_of_spectrum(sys)?;
        return Ok(SpectralResult { l_h, eigenpairs: Vec::new(), k_negative: 0, residuals: Vec::new(), eps_zero: eps });
    }
    let (pairs, residuals) = lowest_eigenpairs(sys, k, opts)?;
    let l_h = pairs[0].0;
    let _ = sys.bottom.set((l_h, pairs[0].1.values().clone()));
    Ok(SpectralResult { l_h, eigenpairs: pairs, k_negative: k, residuals, eps_zero: eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble, truncate, TruncationPolicy};
    use crate::graph::MetricGraph;

    fn star(edges: usize, alpha: f64, l: f64, h: f64) -> DiscreteSystem {
        let g = MetricGraph::delta_star(edges, alpha, 3.0).unwrap();
        assemble(&truncate(&g, TruncationPolicy::Fixed(l)).unwrap(), h).unwrap()
    }

    #[test]
    fn agrees_with_dense_solver_on_small_mesh() {
        let sys = star(3, -3.0, 4.0, 0.2);
        let (pairs, res) = lowest_eigenpairs(&sys, 3, &EigenOptions::default()).unwrap();
        let a = sys.hamiltonian().to_dense();
        let m = sys.mass_matrix().to_dense();
        let l = m.clone().cholesky().unwrap().l();
        let linv = l.clone().try_inverse().unwrap();
        let c = &linv * a * linv.transpose();
        let mut dense: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        for (j, (lam, _)) in pairs.iter().enumerate() {
            assert!((lam - dense[j]).abs() < 1e-9, "{lam} vs {}", dense[j]);
        }
        assert!(res.iter().all(|r| *r <= 1e-8));
    }

    #[test]
    fn eigenvectors_are_m_orthonormal() {
        let sys = star(3, -3.0, 4.0, 0.1);
        let (pairs, _) = lowest_eigenpairs(&sys, 3, &EigenOptions::default()).unwrap();
        let m = sys.mass_matrix();
        for (i, (_, a)) in pairs.iter().enumerate() {
            for (j, (_, b)) in pairs.iter().enumerate() {
                let g = m.bilinear(a.values(), b.values());
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((g - expected).abs() < 1e-10);
            }
            let v = a.values();
            assert!(v[v.iamax()] > 0.0);
        }
    }

    #[test]
    fn count_below_is_monotone() {
        let sys = star(2, -2.0, 10.0, 0.05);
        assert_eq!(count_below(&sys, -2.0).unwrap(), 0);
        assert_eq!(count_below(&sys, -0.5).unwrap(), 1);
        assert!(count_below(&sys, 0.5).unwrap() > 1);
    }

    #[test]
    fn repulsive_star_has_positive_bottom() {
        let sys = star(2, 1.0, 20.0, 0.02);
        let (l, _) = bottom_of_spectrum(&sys).unwrap();
        assert!(l > 0.0 && l < 0.05, "{l}");
        let res = negative_spectrum(&sys, None).unwrap();
        assert_eq!(res.k_negative, 0);
        assert!(res.eigenpairs.is_empty());
    }
}
