//! Sparse symmetric matrices on graph meshes and a direct solver that exploits
//! their structure.
//!
//! Every discretized graph operator has the same shape: each edge contributes a
//! tridiagonal block over its interior nodes, and those blocks only talk to each
//! other through a handful of vertex degrees of freedom. [`ChainFactor`] runs an
//! LDLᵀ sweep along every chain and condenses the rest into a small dense Schur
//! complement on the vertex unknowns. The same sweep yields the inertia of the
//! matrix, which the eigensolver uses for spectrum slicing.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular (pivot {pivot:.3e})")]
    Singular { pivot: f64 },
    #[error("entry ({row}, {col}) is not part of the sparsity pattern")]
    OutsidePattern { row: usize, col: usize },
    #[error("chain {chain} couples directly to chain {other}")]
    ChainCoupling { chain: usize, other: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Compressed-row sparsity pattern, storing both triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl Pattern {
    /// Builds a symmetric pattern from `(row, col)` pairs. Both `(i, j)` and
    /// `(j, i)` end up in the pattern, as does every diagonal entry.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (i, j) in pairs {
            rows[i].push(j);
            rows[j].push(i);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.cols[range.clone()].binary_search(&col).ok().map(|k| range.start + k)
    }

    fn row(&self, i: usize) -> Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }
}

/// Symmetric sparse matrix sharing a [`Pattern`] with its siblings, so linear
/// combinations are plain value-array arithmetic.
#[derive(Debug, Clone)]
pub struct SymSparse {
    pattern: Arc<Pattern>,
    vals: Vec<f64>,
}

impl SymSparse {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let vals = vec![0.0; pattern.nnz()];
        Self { pattern, vals }
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Adds `v` at `(i, j)` and, off the diagonal, at `(j, i)`.
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) -> Result<(), LinalgError> {
        let k = self.pattern.position(i, j).ok_or(LinalgError::OutsidePattern { row: i, col: j })?;
        self.vals[k] += v;
        if i != j {
            let k = self.pattern.position(j, i).ok_or(LinalgError::OutsidePattern { row: j, col: i })?;
            self.vals[k] += v;
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| self.vals[k])
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            let mut acc = 0.0;
            for k in self.pattern.row(i) {
                acc += self.vals[k] * x[self.pattern.cols[k]];
            }
            y[i] = acc;
        }
        y
    }

    /// `|A| x` with entrywise absolute values.
    pub fn abs_matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            let mut acc = 0.0;
            for k in self.pattern.row(i) {
                acc += self.vals[k].abs() * x[self.pattern.cols[k]];
            }
            y[i] = acc;
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&self.matvec(y))
    }

    /// `Σ cᵢ Aᵢ` over matrices that share one pattern.
    pub fn combination(terms: &[(f64, &SymSparse)]) -> Self {
        let pattern = terms[0].1.pattern.clone();
        let mut vals = vec![0.0; pattern.nnz()];
        for (c, m) in terms {
            debug_assert!(Arc::ptr_eq(&pattern, &m.pattern) || *pattern == *m.pattern);
            for (v, w) in vals.iter_mut().zip(&m.vals) {
                *v += c * w;
            }
        }
        Self { pattern, vals }
    }

    /// Largest elementwise asymmetry `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            for k in self.pattern.row(i) {
                let j = self.pattern.cols[k];
                worst = worst.max((self.vals[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in self.pattern.row(i) {
                d[(i, self.pattern.cols[k])] = self.vals[k];
            }
        }
        d
    }
}

/// How unknowns are grouped: each chain is a contiguous run of mesh nodes along
/// one edge, and all remaining unknowns (at `n_chain..n`) live on vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub chains: Vec<Range<usize>>,
    pub n_chain: usize,
    pub n_vertex: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.n_chain + self.n_vertex
    }
}

/// Counts of negative, zero and positive eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

#[derive(Debug, Clone)]
struct ChainLdl {
    start: usize,
    pivots: Vec<f64>,
    mult: Vec<f64>,
}

impl ChainLdl {
    fn factor(diag: &[f64], off: &[f64], scale: f64) -> Result<Self, LinalgError> {
        let n = diag.len();
        let mut pivots = Vec::with_capacity(n);
        let mut mult = Vec::with_capacity(n.saturating_sub(1));
        let tiny = f64::EPSILON * scale;
        let mut d = diag.first().copied().unwrap_or(0.0);
        for i in 0..n {
            if d.abs() <= tiny {
                return Err(LinalgError::Singular { pivot: d });
            }
            pivots.push(d);
            if i + 1 < n {
                let l = off[i] / d;
                mult.push(l);
                d = diag[i + 1] - l * off[i];
            }
        }
        Ok(Self { start: 0, pivots, mult })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.pivots.len();
        for i in 1..n {
            x[i] -= self.mult[i - 1] * x[i - 1];
        }
        for (xi, d) in x.iter_mut().zip(&self.pivots) {
            *xi /= d;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.mult[i] * x[i + 1];
        }
    }
}

/// Direct factorization `A = [T C; Cᵀ A_vv]` with block-tridiagonal `T`,
/// condensed onto the vertex unknowns.
#[derive(Debug, Clone)]
pub struct ChainFactor {
    layout: Layout,
    chains: Vec<ChainLdl>,
    /// Sparse chain-to-vertex coupling: for every vertex unknown, the chain rows it touches.
    coupling: Vec<Vec<(usize, f64)>>,
    /// `T⁻¹ C`, one dense column per vertex unknown (restricted to the chains it touches).
    fill: Vec<Vec<(usize, f64)>>,
    schur: Option<SymmetricEigen<f64, nalgebra::Dyn>>,
    inertia: Inertia,
}

impl ChainFactor {
    pub fn new(a: &SymSparse, layout: &Layout) -> Result<Self, LinalgError> {
        if a.dim() != layout.dim() {
            return Err(LinalgError::Dimension { expected: layout.dim(), got: a.dim() });
        }
        let scale = a.vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let nc = layout.n_chain;
        let nv = layout.n_vertex;

        let mut chain_of = vec![usize::MAX; nc];
        for (c, r) in layout.chains.iter().enumerate() {
            for i in r.clone() {
                chain_of[i] = c;
            }
        }

        let mut chains = Vec::with_capacity(layout.chains.len());
        let mut inertia = Inertia::default();
        for (c, r) in layout.chains.iter().enumerate() {
            let diag: Vec<f64> = r.clone().map(|i| a.get(i, i)).collect();
            let off: Vec<f64> = r.clone().skip(1).map(|i| a.get(i - 1, i)).collect();
            for i in r.clone() {
                for k in a.pattern.row(i) {
                    let j = a.pattern.cols[k];
                    if j < nc && chain_of[j] != c && a.vals[k] != 0.0 {
                        return Err(LinalgError::ChainCoupling { chain: c, other: chain_of[j] });
                    }
                }
            }
            let mut ldl = ChainLdl::factor(&diag, &off, scale)?;
            ldl.start = r.start;
            for &p in &ldl.pivots {
                if p < 0.0 {
                    inertia.negative += 1;
                } else {
                    inertia.positive += 1;
                }
            }
            chains.push(ldl);
        }

        let mut coupling = vec![Vec::new(); nv];
        for (jv, col) in coupling.iter_mut().enumerate() {
            let j = nc + jv;
            for k in a.pattern.row(j) {
                let i = a.pattern.cols[k];
                if i < nc && a.vals[k] != 0.0 {
                    col.push((i, a.vals[k]));
                }
            }
        }

        let mut fill = Vec::with_capacity(nv);
        for col in &coupling {
            let mut touched: Vec<usize> = col.iter().map(|&(i, _)| chain_of[i]).collect();
            touched.sort_unstable();
            touched.dedup();
            let mut sparse = Vec::new();
            for c in touched {
                let ldl = &chains[c];
                let r = layout.chains[c].clone();
                let mut x = vec![0.0; r.len()];
                for &(i, v) in col {
                    if chain_of[i] == c {
                        x[i - r.start] += v;
                    }
                }
                ldl.solve_in_place(&mut x);
                sparse.extend(x.into_iter().enumerate().map(|(k, v)| (r.start + k, v)));
            }
            fill.push(sparse);
        }

        let schur = if nv > 0 {
            let mut s = DMatrix::zeros(nv, nv);
            for a_ in 0..nv {
                for b in 0..nv {
                    s[(a_, b)] = a.get(nc + a_, nc + b);
                }
            }
            for (b, wcol) in fill.iter().enumerate() {
                for (a_, ccol) in coupling.iter().enumerate() {
                    let mut acc = 0.0;
                    // both lists are sorted by row; merge
                    let (mut p, mut q) = (0, 0);
                    while p < ccol.len() && q < wcol.len() {
                        match ccol[p].0.cmp(&wcol[q].0) {
                            std::cmp::Ordering::Less => p += 1,
                            std::cmp::Ordering::Greater => q += 1,
                            std::cmp::Ordering::Equal => {
                                acc += ccol[p].1 * wcol[q].1;
                                p += 1;
                                q += 1;
                            }
                        }
                    }
                    s[(a_, b)] -= acc;
                }
            }
            let s = (&s + s.transpose()) * 0.5;
            let eig = s.symmetric_eigen();
            let tiny = f64::EPSILON * scale * nv as f64;
            for &l in eig.eigenvalues.iter() {
                if l.abs() <= tiny {
                    inertia.zero += 1;
                } else if l < 0.0 {
                    inertia.negative += 1;
                } else {
                    inertia.positive += 1;
                }
            }
            Some(eig)
        } else {
            None
        };

        Ok(Self { layout: layout.clone(), chains, coupling, fill, schur, inertia })
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        let nc = self.layout.n_chain;
        let nv = self.layout.n_vertex;
        if b.len() != nc + nv {
            return Err(LinalgError::Dimension { expected: nc + nv, got: b.len() });
        }
        let mut x = b.clone();
        for ldl in &self.chains {
            let n = ldl.pivots.len();
            ldl.solve_in_place(&mut x.as_mut_slice()[ldl.start..ldl.start + n]);
        }
        if let Some(eig) = &self.schur {
            let mut rhs = DVector::zeros(nv);
            for (jv, col) in self.coupling.iter().enumerate() {
                let cy: f64 = col.iter().map(|&(i, v)| v * x[i]).sum();
                rhs[jv] = b[nc + jv] - cy;
            }
            let qt_r = eig.eigenvectors.transpose() * rhs;
            let mut scaled = qt_r;
            for (k, l) in eig.eigenvalues.iter().enumerate() {
                if *l == 0.0 {
                    return Err(LinalgError::Singular { pivot: 0.0 });
                }
                scaled[k] /= l;
            }
            let xv = &eig.eigenvectors * scaled;
            for (jv, col) in self.fill.iter().enumerate() {
                for &(i, w) in col {
                    x[i] -= w * xv[jv];
                }
            }
            x.rows_mut(nc, nv).copy_from(&xv);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star_like() -> (SymSparse, Layout) {
        // two chains of 3 nodes each, joined by one vertex unknown at index 6
        let pairs = vec![(0, 1), (1, 2), (2, 6), (3, 4), (4, 5), (5, 6)];
        let pat = Arc::new(Pattern::from_pairs(7, pairs.clone()));
        let mut a = SymSparse::zeros(pat);
        for i in 0..7 {
            a.add_sym(i, i, 2.5).unwrap();
        }
        for (i, j) in pairs {
            a.add_sym(i, j, -1.0).unwrap();
        }
        let layout = Layout { chains: vec![0..3, 3..6], n_chain: 6, n_vertex: 1 };
        (a, layout)
    }

    #[test]
    fn solve_matches_dense() {
        let (a, layout) = star_like();
        let f = ChainFactor::new(&a, &layout).unwrap();
        let b = DVector::from_fn(7, |i, _| (i as f64 * 0.7).sin());
        let x = f.solve(&b).unwrap();
        let dense = a.to_dense().lu().solve(&b).unwrap();
        assert!((x - dense).norm() < 1e-12);
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        let (a, layout) = star_like();
        let dense = a.to_dense().symmetric_eigen();
        for shift in [-1.0, 0.5, 1.0, 2.0, 3.3, 5.0] {
            let mut s = a.clone();
            for i in 0..7 {
                s.add_sym(i, i, -shift).unwrap();
            }
            let expected = dense.eigenvalues.iter().filter(|&&l| l < shift).count();
            let f = ChainFactor::new(&s, &layout).unwrap();
            assert_eq!(f.inertia().negative, expected, "shift {shift}");
        }
    }

    #[test]
    fn rejects_entry_outside_pattern() {
        let (mut a, _) = star_like();
        assert!(matches!(a.add_sym(0, 5, 1.0), Err(LinalgError::OutsidePattern { .. })));
    }
}
