//! Truncation of half-lines, piecewise-linear finite elements on every edge,
//! and discrete versions of the quadratic form, mass, energy and `L^{p+1}`
//! functionals.
//!
//! Unknowns are the interior mesh nodes of every edge followed by reduced
//! vertex coordinates. At a continuous (`δ` or Kirchhoff) vertex the endpoint
//! nodes of all incident edges share one unknown. At a general vertex the
//! endpoint values `Ψ(v)` are `N c` with `N` an orthonormal basis of
//! `ker P_D`, so the Dirichlet part of the condition holds exactly. Truncated
//! far ends are homogeneous Dirichlet.
//!
//! The consistent mass matrix is used for `‖ψ‖²` and eigenproblems; the
//! nonlinear term uses lumped (trapezoidal) weights so its gradient is local.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::{projector_range, validate_vertex_condition, MetricGraph, VertexCondition, DEFAULT_CONDITION_TOL};
use crate::linalg::{Layout, LinalgError, Pattern, SymSparse};

pub const DEFAULT_MESH: f64 = 0.01;
pub const DEFAULT_TRUNCATION: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("truncation length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("mesh size {h} exceeds the shortest edge length {shortest}")]
    MeshTooCoarse { h: f64, shortest: f64 },
    #[error("mesh size must be positive, got {0}")]
    NonPositiveMesh(f64),
    #[error("vertex {vertex}: {msg}")]
    InvalidCondition { vertex: String, msg: String },
    #[error("function does not belong to this discrete system")]
    SystemMismatch,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Default truncation length `20/√ω` for a known frequency scale, else 40.
pub fn default_truncation(omega_scale: Option<f64>) -> f64 {
    match omega_scale {
        Some(w) if w > 0.0 => 20.0 / w.sqrt(),
        _ => DEFAULT_TRUNCATION,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationPolicy {
    Fixed(f64),
    /// Start at `initial` and let the solver double the length until its
    /// observable moves by less than `tail_tol`.
    Adaptive {
        initial: f64,
        tail_tol: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGraph {
    base: MetricGraph,
    /// Length used for each infinite edge; `None` for finite edges.
    trunc_length: Vec<Option<f64>>,
    policy: TruncationPolicy,
}

impl TruncatedGraph {
    pub fn base(&self) -> &MetricGraph {
        &self.base
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    pub fn trunc_length(&self, e: usize) -> Option<f64> {
        self.trunc_length[e]
    }

    /// Effective length of edge `e` on the computational domain.
    pub fn length(&self, e: usize) -> f64 {
        self.trunc_length[e].unwrap_or(self.base.edges()[e].length)
    }

    /// Same graph with every truncated edge twice as long.
    pub fn doubled(&self) -> Self {
        let mut out = self.clone();
        for l in out.trunc_length.iter_mut().flatten() {
            *l *= 2.0;
        }
        out
    }

    /// Far ends of truncated edges are Dirichlet.
    pub fn has_dirichlet_far_end(&self, e: usize) -> bool {
        self.trunc_length[e].is_some()
    }
}

pub fn truncate(g: &MetricGraph, policy: TruncationPolicy) -> Result<TruncatedGraph, DiscretizeError> {
    let l = match policy {
        TruncationPolicy::Fixed(l) => l,
        TruncationPolicy::Adaptive { initial, tail_tol } => {
            if !(tail_tol > 0.0) {
                return Err(DiscretizeError::NonPositiveLength(tail_tol));
            }
            initial
        }
    };
    if !(l > 0.0 && l.is_finite()) {
        return Err(DiscretizeError::NonPositiveLength(l));
    }
    let trunc_length = g.edges().iter().map(|e| e.is_infinite().then_some(l)).collect();
    Ok(TruncatedGraph { base: g.clone(), trunc_length, policy })
}

/// Linear functional giving one mesh node value in terms of the unknowns.
type NodeMap = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct EdgeMesh {
    pub n_elem: usize,
    pub h: f64,
    pub length: f64,
    pub truncated: bool,
    pub interior: Range<usize>,
    start: NodeMap,
    end: NodeMap,
}

impl EdgeMesh {
    fn node_map(&self, i: usize) -> NodeMap {
        if i == 0 {
            self.start.clone()
        } else if i == self.n_elem {
            self.end.clone()
        } else {
            vec![(self.interior.start + i - 1, 1.0)]
        }
    }

    /// Lumped quadrature weight of node `i`.
    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_elem {
            0.5 * self.h
        } else {
            self.h
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

#[derive(Debug, Clone)]
pub struct VertexDofs {
    pub dofs: Range<usize>,
    /// `Ψ(v) = basis · c`, shape `d_v × r_v`.
    pub basis: DMatrix<f64>,
}

/// A discrete function on one [`DiscreteSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFunction {
    values: DVector<f64>,
    system: u64,
}

impl GraphFunction {
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn system_id(&self) -> u64 {
        self.system
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { values: &self.values * t, system: self.system }
    }

    pub fn with_values(&self, values: DVector<f64>) -> Self {
        Self { values, system: self.system }
    }

    /// Flips the sign so the largest-magnitude entry is positive.
    pub fn sign_normalized(mut self) -> Self {
        let imax = self.values.iamax();
        if !self.values.is_empty() && self.values[imax] < 0.0 {
            self.values.neg_mut();
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functionals {
    /// `ψᵀ(K+B)ψ`.
    pub q: f64,
    /// `Q/2 + ‖ψ‖_{p+1}^{p+1}/(p+1)`.
    pub energy: f64,
    /// `‖ψ‖_{L²}`.
    pub mass: f64,
    /// `‖ψ‖_{p+1}^{p+1}`, lumped quadrature.
    pub lp1: f64,
}

static NEXT_SYSTEM_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
pub struct DiscreteSystem {
    id: u64,
    graph: MetricGraph,
    h: f64,
    edges: Vec<EdgeMesh>,
    vertices: Vec<VertexDofs>,
    layout: Layout,
    k: SymSparse,
    b: SymSparse,
    m: SymSparse,
    kb: SymSparse,
    pub(crate) bottom: OnceLock<(f64, DVector<f64>)>,
}

pub fn assemble(tg: &TruncatedGraph, h: f64) -> Result<DiscreteSystem, DiscretizeError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DiscretizeError::NonPositiveMesh(h));
    }
    let g = tg.base();
    let n_edges = g.edges().len();
    let shortest = (0..n_edges).map(|e| tg.length(e)).fold(f64::INFINITY, f64::min);
    if h > shortest * (1.0 + 1e-12) {
        return Err(DiscretizeError::MeshTooCoarse { h, shortest });
    }

    // chains first, in edge order
    let mut next = 0;
    let mut shapes = Vec::with_capacity(n_edges);
    for e in 0..n_edges {
        let length = tg.length(e);
        let n_elem = ((length / h) - 1e-9).ceil().max(1.0) as usize;
        let interior = next..next + n_elem - 1;
        next = interior.end;
        shapes.push((length, n_elem, interior));
    }
    let n_chain = next;

    let mut vertices = Vec::with_capacity(g.vertex_count());
    for v in 0..g.vertex_count() {
        let d = g.degree(v);
        let basis = match g.condition(v) {
            VertexCondition::Delta { .. } | VertexCondition::Kirchhoff => DMatrix::from_element(d, 1, 1.0),
            cond @ VertexCondition::General { p_d, .. } => {
                let report = validate_vertex_condition(cond, DEFAULT_CONDITION_TOL).map_err(|e| {
                    DiscretizeError::InvalidCondition { vertex: g.vertex_id(v).into(), msg: e.to_string() }
                })?;
                if !report.valid {
                    return Err(DiscretizeError::InvalidCondition {
                        vertex: g.vertex_id(v).into(),
                        msg: report.to_string(),
                    });
                }
                projector_range(&(DMatrix::identity(d, d) - p_d))
            }
        };
        let r = basis.ncols();
        vertices.push(VertexDofs { dofs: next..next + r, basis });
        next += r;
    }
    let n = next;

    let endpoint = |v: usize, e: usize| -> NodeMap {
        let slot = g.slot(v, e).expect("edge is incident to its endpoint");
        let vd = &vertices[v];
        vd.dofs.clone().enumerate().map(|(k, dof)| (dof, vd.basis[(slot, k)])).filter(|(_, c)| *c != 0.0).collect()
    };
    let mut edges = Vec::with_capacity(n_edges);
    for (e, (length, n_elem, interior)) in shapes.into_iter().enumerate() {
        let edge = &g.edges()[e];
        let start = endpoint(edge.from, e);
        let end = match edge.to {
            Some(w) => endpoint(w, e),
            None => Vec::new(),
        };
        edges.push(EdgeMesh {
            n_elem,
            h: length / n_elem as f64,
            length,
            truncated: tg.has_dirichlet_far_end(e),
            interior,
            start,
            end,
        });
    }

    let mut pairs = Vec::new();
    for em in &edges {
        for i in 0..em.n_elem {
            let (a, b) = (em.node_map(i), em.node_map(i + 1));
            for &(da, _) in a.iter().chain(&b) {
                for &(db, _) in a.iter().chain(&b) {
                    pairs.push((da, db));
                }
            }
        }
    }
    for vd in &vertices {
        for a in vd.dofs.clone() {
            for b in vd.dofs.clone() {
                pairs.push((a, b));
            }
        }
    }
    let pattern = Arc::new(Pattern::from_pairs(n, pairs));
    let mut k = SymSparse::zeros(pattern.clone());
    let mut m = SymSparse::zeros(pattern.clone());
    let mut b = SymSparse::zeros(pattern);

    for em in &edges {
        let kl = 1.0 / em.h;
        let ml = em.h / 6.0;
        let local_k = [[kl, -kl], [-kl, kl]];
        let local_m = [[2.0 * ml, ml], [ml, 2.0 * ml]];
        for i in 0..em.n_elem {
            let maps = [em.node_map(i), em.node_map(i + 1)];
            for (la, ma) in maps.iter().enumerate() {
                for (lb, mb) in maps.iter().enumerate() {
                    for &(da, ca) in ma {
                        for &(db, cb) in mb {
                            // add_sym would double off-diagonal entries; add one triangle at a time
                            if da <= db {
                                let scale = if da == db { 1.0 } else { 0.5 };
                                k.add_sym(da, db, scale * ca * cb * local_k[la][lb])?;
                                m.add_sym(da, db, scale * ca * cb * local_m[la][lb])?;
                            } else {
                                k.add_sym(db, da, 0.5 * ca * cb * local_k[la][lb])?;
                                m.add_sym(db, da, 0.5 * ca * cb * local_m[la][lb])?;
                            }
                        }
                    }
                }
            }
        }
    }

    for (v, vd) in vertices.iter().enumerate() {
        let block = match g.condition(v) {
            VertexCondition::Delta { alpha } => DMatrix::from_element(1, 1, *alpha),
            VertexCondition::Kirchhoff => continue,
            VertexCondition::General { p_r, lambda, .. } => {
                let core = p_r * lambda * p_r;
                let core = (&core + core.transpose()) * 0.5;
                vd.basis.transpose() * core * &vd.basis
            }
        };
        let base = vd.dofs.start;
        for a in 0..block.nrows() {
            for c in a..block.ncols() {
                b.add_sym(base + a, base + c, block[(a, c)])?;
            }
        }
    }

    let kb = SymSparse::combination(&[(1.0, &k), (1.0, &b)]);
    let layout = Layout { chains: edges.iter().map(|e| e.interior.clone()).collect(), n_chain, n_vertex: n - n_chain };
    Ok(DiscreteSystem {
        id: NEXT_SYSTEM_ID.fetch_add(1, Ordering::Relaxed),
        graph: g.clone(),
        h,
        edges,
        vertices,
        layout,
        k,
        b,
        m,
        kb,
        bottom: OnceLock::new(),
    })
}

impl DiscreteSystem {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn p(&self) -> f64 {
        self.graph.p()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn edge_mesh(&self, e: usize) -> &EdgeMesh {
        &self.edges[e]
    }

    pub fn vertex_dofs(&self, v: usize) -> &VertexDofs {
        &self.vertices[v]
    }

    pub fn stiffness(&self) -> &SymSparse {
        &self.k
    }

    pub fn coupling(&self) -> &SymSparse {
        &self.b
    }

    pub fn mass_matrix(&self) -> &SymSparse {
        &self.m
    }

    /// `K + B`, the discrete Hamiltonian.
    pub fn hamiltonian(&self) -> &SymSparse {
        &self.kb
    }

    pub fn function(&self, values: DVector<f64>) -> Result<GraphFunction, DiscretizeError> {
        if values.len() != self.dim() {
            return Err(DiscretizeError::SystemMismatch);
        }
        Ok(GraphFunction { values, system: self.id })
    }

    pub fn zero(&self) -> GraphFunction {
        GraphFunction { values: DVector::zeros(self.dim()), system: self.id }
    }

    pub fn check(&self, psi: &GraphFunction) -> Result<(), DiscretizeError> {
        if psi.system != self.id || psi.values.len() != self.dim() {
            return Err(DiscretizeError::SystemMismatch);
        }
        Ok(())
    }

    fn node_value(map: &NodeMap, x: &DVector<f64>) -> f64 {
        map.iter().map(|&(d, c)| c * x[d]).sum()
    }

    /// Nodal values along edge `e`, endpoints included (far Dirichlet ends are 0).
    pub fn edge_values(&self, e: usize, psi: &GraphFunction) -> Vec<f64> {
        let em = &self.edges[e];
        let x = &psi.values;
        let mut out = Vec::with_capacity(em.n_elem + 1);
        out.push(Self::node_value(&em.start, x));
        out.extend(em.interior.clone().map(|i| x[i]));
        out.push(Self::node_value(&em.end, x));
        out
    }

    /// Node coordinates along edge `e`, measured from its first vertex.
    pub fn edge_nodes(&self, e: usize) -> Vec<f64> {
        let em = &self.edges[e];
        (0..=em.n_elem).map(|i| em.x(i)).collect()
    }

    /// Nodal interpolant of `f(edge, x)`. At a continuous vertex the value of
    /// its first incident edge is used; at a general vertex the endpoint values
    /// are projected onto `ker P_D`.
    pub fn interpolate(&self, f: impl Fn(usize, f64) -> f64) -> GraphFunction {
        let mut x = DVector::zeros(self.dim());
        for (e, em) in self.edges.iter().enumerate() {
            for (k, i) in em.interior.clone().enumerate() {
                x[i] = f(e, em.x(k + 1));
            }
        }
        for (v, vd) in self.vertices.iter().enumerate() {
            if vd.dofs.is_empty() {
                continue;
            }
            let inc = self.graph.incident_edges(v);
            let vals = DVector::from_iterator(
                inc.len(),
                inc.iter().map(|&e| {
                    let em = &self.edges[e];
                    if self.graph.edges()[e].from == v {
                        f(e, 0.0)
                    } else {
                        f(e, em.length)
                    }
                }),
            );
            let c = if self.graph.condition(v).is_continuous() {
                DVector::from_element(1, vals[0])
            } else {
                vd.basis.transpose() * vals
            };
            x.rows_mut(vd.dofs.start, vd.dofs.len()).copy_from(&c);
        }
        GraphFunction { values: x, system: self.id }
    }

    /// `Σ w_i |ψ_i|^{p+1}` with lumped weights.
    pub fn lp1(&self, psi: &GraphFunction) -> f64 {
        self.lp1_values(&psi.values)
    }

    /// [`Self::lp1`] on a raw coefficient vector.
    pub fn lp1_values(&self, x: &DVector<f64>) -> f64 {
        let p = self.p();
        let mut acc = 0.0;
        for em in &self.edges {
            for i in 0..=em.n_elem {
                let u = match i {
                    0 => Self::node_value(&em.start, x),
                    i if i == em.n_elem => Self::node_value(&em.end, x),
                    i => x[em.interior.start + i - 1],
                };
                acc += em.weight(i) * u.abs().powf(p + 1.0);
            }
        }
        acc
    }

    /// Gradient of `lp1/(p+1)`: the lumped nonlinear term `N(ψ)`.
    pub fn nonlinear_term(&self, psi: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        let mut g = DVector::zeros(self.dim());
        for em in &self.edges {
            for (k, i) in em.interior.clone().enumerate() {
                let u = psi[i];
                g[i] += em.weight(k + 1) * u.abs().powf(p - 1.0) * u;
            }
            for (map, node) in [(&em.start, 0), (&em.end, em.n_elem)] {
                if map.is_empty() {
                    continue;
                }
                let u = Self::node_value(map, psi);
                let s = em.weight(node) * u.abs().powf(p - 1.0) * u;
                for &(d, c) in map {
                    g[d] += c * s;
                }
            }
        }
        g
    }

    /// Jacobian of [`Self::nonlinear_term`], on the shared sparsity pattern.
    pub fn nonlinear_jacobian(&self, psi: &DVector<f64>) -> SymSparse {
        let p = self.p();
        let mut j = SymSparse::zeros(self.k.pattern().clone());
        for em in &self.edges {
            for (k, i) in em.interior.clone().enumerate() {
                let w = em.weight(k + 1) * p * psi[i].abs().powf(p - 1.0);
                j.add_sym(i, i, w).expect("diagonal in pattern");
            }
            for (map, node) in [(&em.start, 0), (&em.end, em.n_elem)] {
                if map.is_empty() {
                    continue;
                }
                let u = Self::node_value(map, psi);
                let w = em.weight(node) * p * u.abs().powf(p - 1.0);
                for &(da, ca) in map {
                    for &(db, cb) in map {
                        if da < db {
                            j.add_sym(da, db, w * ca * cb).expect("vertex block in pattern");
                        } else if da == db {
                            j.add_sym(da, da, w * ca * cb).expect("diagonal in pattern");
                        }
                    }
                }
            }
        }
        j
    }

    pub fn mass_squared(&self, psi: &GraphFunction) -> f64 {
        self.m.bilinear(&psi.values, &psi.values)
    }

    pub fn functionals(&self, psi: &GraphFunction) -> Result<Functionals, DiscretizeError> {
        self.check(psi)?;
        let q = self.kb.bilinear(&psi.values, &psi.values);
        let mass = self.mass_squared(psi).max(0.0).sqrt();
        let lp1 = self.lp1(psi);
        let p = self.p();
        Ok(Functionals { q, energy: 0.5 * q + lp1 / (p + 1.0), mass, lp1 })
    }

    /// Fraction of `‖ψ‖²` carried by the outer 10% of every truncated edge.
    pub fn boundary_mass_fraction(&self, psi: &GraphFunction) -> f64 {
        let total: f64 = self.lumped_mass_squared(psi);
        if total == 0.0 {
            return 0.0;
        }
        let mut outer = 0.0;
        for (e, em) in self.edges.iter().enumerate() {
            if !em.truncated {
                continue;
            }
            let vals = self.edge_values(e, psi);
            let cut = 0.9 * em.length;
            for (i, u) in vals.iter().enumerate() {
                if em.x(i) >= cut - 1e-12 {
                    outer += em.weight(i) * u * u;
                }
            }
        }
        outer / total
    }

    fn lumped_mass_squared(&self, psi: &GraphFunction) -> f64 {
        (0..self.edges.len())
            .map(|e| {
                let em = &self.edges[e];
                self.edge_values(e, psi).iter().enumerate().map(|(i, u)| em.weight(i) * u * u).sum::<f64>()
            })
            .sum()
    }

    /// Dense map from unknowns to every mesh node value (edge by edge,
    /// endpoints included). Intended for inspection on small meshes.
    pub fn constraint_basis(&self) -> DMatrix<f64> {
        let rows: usize = self.edges.iter().map(|e| e.n_elem + 1).sum();
        let mut c = DMatrix::zeros(rows, self.dim());
        let mut r = 0;
        for em in &self.edges {
            for i in 0..=em.n_elem {
                for (d, v) in em.node_map(i) {
                    c[(r, d)] = v;
                }
                r += 1;
            }
        }
        c
    }
}

/// Outcome of an adaptive-truncation solve.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome<T> {
    pub value: T,
    pub truncation: f64,
    /// `(L, observable)` for every length tried.
    pub history: Vec<(f64, f64)>,
    pub converged: bool,
}

/// Solves on successively doubled truncation lengths until the scalar
/// observable returned by `solve` changes by less than `tail_tol`.
pub fn solve_adaptive<T, E>(
    g: &MetricGraph,
    h: f64,
    initial: f64,
    tail_tol: f64,
    max_doublings: usize,
    mut solve: impl FnMut(&DiscreteSystem) -> Result<(T, f64), E>,
) -> Result<AdaptiveOutcome<T>, E>
where
    E: From<DiscretizeError>,
{
    let mut tg = truncate(g, TruncationPolicy::Adaptive { initial, tail_tol })?;
    let mut history = Vec::new();
    let mut l = initial;
    loop {
        let sys = assemble(&tg, h)?;
        let (value, obs) = solve(&sys)?;
        let converged = history.last().is_some_and(|&(_, prev): &(f64, f64)| (obs - prev).abs() < tail_tol);
        history.push((l, obs));
        if converged || history.len() > max_doublings || g.infinite_edge_count() == 0 {
            return Ok(AdaptiveOutcome { value, truncation: l, history, converged });
        }
        tg = tg.doubled();
        l *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{delta_as_general, MetricGraph};
    use crate::io::{ConditionSpec, EdgeLength, EdgeSpec, GraphSpec, VertexSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn star(alpha: f64, l: f64, h: f64) -> DiscreteSystem {
        let g = MetricGraph::delta_star(2, alpha, 3.0).unwrap();
        assemble(&truncate(&g, TruncationPolicy::Fixed(l)).unwrap(), h).unwrap()
    }

    fn dirichlet_interval() -> MetricGraph {
        let dir = |id: &str| VertexSpec {
            id: id.into(),
            condition: ConditionSpec::General {
                p_d: vec![vec![1.0.into()]],
                p_n: vec![vec![0.0.into()]],
                p_r: vec![vec![0.0.into()]],
                lambda: vec![vec![0.0.into()]],
                edge_order: None,
            },
        };
        let spec = GraphSpec {
            p: 3.0,
            vertices: vec![dir("a"), dir("b")],
            edges: vec![EdgeSpec {
                id: "e".into(),
                from: "a".into(),
                to: Some("b".into()),
                length: EdgeLength::Finite(1.0),
            }],
        };
        crate::graph::build_graph(&spec).unwrap()
    }

    #[test]
    fn truncation_policies() {
        let g = MetricGraph::delta_star(2, -2.0, 3.0).unwrap();
        let tg = truncate(&g, TruncationPolicy::Fixed(20.0)).unwrap();
        assert_eq!(tg.trunc_length(0), Some(20.0));
        assert_eq!(tg.length(1), 20.0);
        assert!(tg.has_dirichlet_far_end(0));
        assert_eq!(truncate(&g, TruncationPolicy::Fixed(-1.0)), Err(DiscretizeError::NonPositiveLength(-1.0)));

        let compact = dirichlet_interval();
        let tg = truncate(&compact, TruncationPolicy::Fixed(5.0)).unwrap();
        assert_eq!(tg.trunc_length(0), None);
        assert_eq!(tg.length(0), 1.0);
        assert_eq!(tg.base(), &compact);
    }

    #[test]
    fn dirichlet_interval_textbook_matrix() {
        let g = dirichlet_interval();
        let sys = assemble(&truncate(&g, TruncationPolicy::Fixed(1.0)).unwrap(), 0.25).unwrap();
        assert_eq!(sys.dim(), 3);
        let k = sys.hamiltonian().to_dense();
        let expected = DMatrix::from_row_slice(3, 3, &[8.0, -4.0, 0.0, -4.0, 8.0, -4.0, 0.0, -4.0, 8.0]);
        assert!((k - expected).norm() < 1e-12);
    }

    #[test]
    fn mesh_too_coarse() {
        let g = dirichlet_interval();
        let tg = truncate(&g, TruncationPolicy::Fixed(1.0)).unwrap();
        assert!(matches!(assemble(&tg, 1.5), Err(DiscretizeError::MeshTooCoarse { .. })));
    }

    #[test]
    fn hat_function_form_value() {
        // hat of height 1 with unit slopes on both edges: Q = 2·1 + (−2)·1 = 0
        let sys = star(-2.0, 20.0, 0.01);
        let hat = sys.interpolate(|_, x| (1.0 - x).max(0.0));
        let f = sys.functionals(&hat).unwrap();
        assert!(f.q.abs() < 1e-10, "{}", f.q);
        let k_only = sys.stiffness().bilinear(hat.values(), hat.values());
        assert!((k_only - 2.0).abs() < 1e-10);
    }

    #[test]
    fn form_is_symmetric_on_random_pairs() {
        let sys = star(-2.0, 5.0, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = sys.hamiltonian();
        for _ in 0..100 {
            let x = DVector::from_fn(sys.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let y = DVector::from_fn(sys.dim(), |_, _| rng.gen_range(-1.0..1.0));
            assert!((a.bilinear(&x, &y) - a.bilinear(&y, &x)).abs() < 1e-12);
        }
        assert!(a.asymmetry() < 1e-12);
        assert!(sys.mass_matrix().asymmetry() < 1e-12);
    }

    #[test]
    fn zero_function() {
        let sys = star(-2.0, 5.0, 0.05);
        let f = sys.functionals(&sys.zero()).unwrap();
        assert_eq!((f.q, f.energy, f.mass, f.lp1), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn foreign_function_rejected() {
        let a = star(-2.0, 5.0, 0.05);
        let b = star(-2.0, 5.0, 0.05);
        assert_eq!(a.functionals(&b.zero()), Err(DiscretizeError::SystemMismatch));
    }

    #[test]
    fn quadratic_homogeneity() {
        let sys = star(-2.0, 5.0, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi = sys.function(DVector::from_fn(sys.dim(), |_, _| rng.gen_range(-1.0..1.0))).unwrap();
        let q1 = sys.functionals(&psi).unwrap().q;
        let q2 = sys.functionals(&psi.scaled(2.0)).unwrap().q;
        assert!((q2 - 4.0 * q1).abs() < 1e-12 * q2.abs().max(1.0));
    }

    #[test]
    fn general_delta_image_matches_delta() {
        // same star with the δ vertex written as a general condition
        let general = |alpha: f64| {
            let crate::graph::VertexCondition::General { p_d, p_n, p_r, lambda } = delta_as_general(alpha, 2).unwrap()
            else {
                unreachable!()
            };
            let rows = |m: &DMatrix<f64>| (0..2).map(|i| (0..2).map(|j| m[(i, j)].into()).collect()).collect();
            ConditionSpec::General {
                p_d: rows(&p_d),
                p_n: rows(&p_n),
                p_r: rows(&p_r),
                lambda: rows(&lambda),
                edge_order: None,
            }
        };
        let spec = GraphSpec {
            p: 3.0,
            vertices: vec![VertexSpec { id: "v".into(), condition: general(-2.0) }],
            edges: (0..2)
                .map(|k| EdgeSpec { id: format!("e{k}"), from: "v".into(), to: None, length: EdgeLength::Infinite })
                .collect(),
        };
        let g = crate::graph::build_graph(&spec).unwrap();
        let gen = assemble(&truncate(&g, TruncationPolicy::Fixed(5.0)).unwrap(), 0.05).unwrap();
        let del = star(-2.0, 5.0, 0.05);
        let f = |_: usize, x: f64| (-x).exp();
        let a = gen.functionals(&gen.interpolate(f)).unwrap();
        let b = del.functionals(&del.interpolate(f)).unwrap();
        assert!((a.q - b.q).abs() < 1e-12);
        assert!((a.mass - b.mass).abs() < 1e-12);
        assert!((a.lp1 - b.lp1).abs() < 1e-12);
    }

    #[test]
    fn exponential_interpolant_converges_at_second_order() {
        // ∫₀^∞ e^{−2x} = 1/2 per edge, vertex term −2·1: Q → −1
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| {
                let sys = star(-2.0, 20.0, h);
                let psi = sys.interpolate(|_, x| (-x).exp());
                (sys.functionals(&psi).unwrap().q + 1.0).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn nonlinear_term_is_gradient_of_lp1() {
        let sys = star(-2.0, 2.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DVector::from_fn(sys.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let psi = sys.function(x.clone()).unwrap();
        let g = sys.nonlinear_term(&x);
        let p = sys.p();
        let eps = 1e-6;
        for i in [0, 5, sys.dim() - 1] {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let fd = (sys.lp1(&psi.with_values(xp)) - sys.lp1(&psi.with_values(xm))) / (2.0 * eps) / (p + 1.0);
            assert!((fd - g[i]).abs() < 1e-8);
        }
        let j = sys.nonlinear_jacobian(&x);
        for i in [0, 5, sys.dim() - 1] {
            let mut xp = x.clone();
            xp[i] += eps;
            let col = (sys.nonlinear_term(&xp) - &g) / eps;
            assert!((col[i] - j.get(i, i)).abs() < 1e-4);
        }
    }
}
