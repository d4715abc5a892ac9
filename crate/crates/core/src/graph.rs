//! Metric graphs with finite and half-infinite edges, and self-adjoint vertex
//! conditions.
//!
//! A general vertex condition is given by three mutually orthogonal projectors
//! `P_D`, `P_N`, `P_R` with `P_D + P_N + P_R = I`, and a symmetric map `Λ`
//! invertible on `range(P_R)`. Functions in the form domain satisfy
//! `P_D Ψ(v) = 0`, and the vertex adds `⟨Λ P_R Ψ(v), P_R Ψ(v)⟩` to the
//! quadratic form, where `Ψ(v)` collects the endpoint values of the incident
//! edges in their declaration order.

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::io::{ConditionSpec, EdgeLength, Entry, GraphSpec};

pub const DEFAULT_CONDITION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph is disconnected: vertex {0} is unreachable")]
    DisconnectedGraph(String),
    #[error("edge {edge} references unknown vertex {vertex}")]
    DanglingEdgeEndpoint { edge: String, vertex: String },
    #[error("edge {0} has non-positive length")]
    NonPositiveLength(String),
    #[error("exponent p must exceed 1, got {0}")]
    InvalidExponent(f64),
    #[error("edge {0}: an edge is infinite exactly when it has no second endpoint")]
    InfiniteEdgeMismatch(String),
    #[error("edge {0} is a loop")]
    LoopEdge(String),
    #[error("edges {0} and {1} join the same pair of vertices")]
    MultiEdge(String, String),
    #[error("vertex {0} has no incident edges")]
    IsolatedVertex(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("graph has no vertices")]
    Empty,
    #[error("vertex {vertex}: {msg}")]
    DimensionMismatch { vertex: String, msg: String },
    #[error("vertex {vertex}: complex entries are not supported (imaginary part {im:e})")]
    ComplexCondition { vertex: String, im: f64 },
    #[error("vertex {vertex}: invalid condition ({report})")]
    InvalidCondition { vertex: String, report: ValidationReport },
    #[error("vertex {vertex}: edge_order {given:?} differs from declaration order {declared:?}")]
    EdgeOrder { vertex: String, given: Vec<String>, declared: Vec<String> },
    #[error("alpha = 0 is a Kirchhoff condition and has no general image")]
    ZeroAlpha,
    #[error("degree must be at least 1")]
    ZeroDegree,
}

pub type VertexId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: VertexId,
    pub to: Option<VertexId>,
    /// `f64::INFINITY` for half-lines.
    pub length: f64,
}

impl Edge {
    pub fn is_infinite(&self) -> bool {
        self.to.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VertexCondition {
    /// Continuity plus `Σ ψ′_e(v) = α ψ(v)` with outgoing derivatives.
    Delta {
        alpha: f64,
    },
    /// The `α = 0` case of [`VertexCondition::Delta`].
    Kirchhoff,
    General {
        p_d: DMatrix<f64>,
        p_n: DMatrix<f64>,
        p_r: DMatrix<f64>,
        lambda: DMatrix<f64>,
    },
}

impl VertexCondition {
    /// `δ` and Kirchhoff vertices force continuity across their edges.
    pub fn is_continuous(&self) -> bool {
        !matches!(self, VertexCondition::General { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertex_ids: Vec<String>,
    edges: Vec<Edge>,
    conditions: Vec<VertexCondition>,
    /// Incident edges of each vertex in declaration order. Position in this list
    /// is the coordinate slot of the edge in `Ψ(v)`.
    incidence: Vec<Vec<usize>>,
    p: f64,
}

impl MetricGraph {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn vertex_id(&self, v: VertexId) -> &str {
        &self.vertex_ids[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn condition(&self, v: VertexId) -> &VertexCondition {
        &self.conditions[v]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.incidence[v].len()
    }

    pub fn incident_edges(&self, v: VertexId) -> &[usize] {
        &self.incidence[v]
    }

    /// Coordinate slot of edge `e` in `Ψ(v)`.
    pub fn slot(&self, v: VertexId, e: usize) -> Option<usize> {
        self.incidence[v].iter().position(|&x| x == e)
    }

    pub fn infinite_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_infinite()).count()
    }

    /// Copy of the graph with a different nonlinearity exponent.
    pub fn with_exponent(&self, p: f64) -> Result<Self, GraphError> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(GraphError::InvalidExponent(p));
        }
        Ok(Self { p, ..self.clone() })
    }

    /// Builds a star of `edges` half-lines around one `δ` vertex.
    pub fn delta_star(edges: usize, alpha: f64, p: f64) -> Result<Self, GraphError> {
        let mut spec = GraphSpec { p, vertices: vec![], edges: vec![] };
        spec.vertices.push(crate::io::VertexSpec { id: "v".into(), condition: ConditionSpec::Delta { alpha } });
        for k in 0..edges {
            spec.edges.push(crate::io::EdgeSpec {
                id: format!("e{}", k + 1),
                from: "v".into(),
                to: None,
                length: EdgeLength::Infinite,
            });
        }
        build_graph(&spec)
    }
}

fn to_real(vertex: &str, rows: &[Vec<Entry>], d: usize, name: &str) -> Result<DMatrix<f64>, GraphError> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(GraphError::DimensionMismatch {
            vertex: vertex.to_string(),
            msg: format!("{name} must be {d}x{d}"),
        });
    }
    let mut m = DMatrix::zeros(d, d);
    for (i, r) in rows.iter().enumerate() {
        for (j, x) in r.iter().enumerate() {
            if x.im() != 0.0 {
                return Err(GraphError::ComplexCondition { vertex: vertex.to_string(), im: x.im() });
            }
            m[(i, j)] = x.re();
        }
    }
    Ok(m)
}

pub fn build_graph(spec: &GraphSpec) -> Result<MetricGraph, GraphError> {
    if !(spec.p > 1.0 && spec.p.is_finite()) {
        return Err(GraphError::InvalidExponent(spec.p));
    }
    if spec.vertices.is_empty() {
        return Err(GraphError::Empty);
    }
    let mut index = HashMap::new();
    for (k, v) in spec.vertices.iter().enumerate() {
        if index.insert(v.id.clone(), k).is_some() {
            return Err(GraphError::DuplicateId(v.id.clone()));
        }
    }
    let mut edge_ids = HashSet::new();
    let mut pairs: HashMap<(usize, usize), String> = HashMap::new();
    let mut edges = Vec::with_capacity(spec.edges.len());
    let mut incidence = vec![Vec::new(); spec.vertices.len()];
    for (k, e) in spec.edges.iter().enumerate() {
        if !edge_ids.insert(e.id.clone()) {
            return Err(GraphError::DuplicateId(e.id.clone()));
        }
        let lookup = |name: &String| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| GraphError::DanglingEdgeEndpoint { edge: e.id.clone(), vertex: name.clone() })
        };
        let from = lookup(&e.from)?;
        let to = e.to.as_ref().map(lookup).transpose()?;
        let length = match (e.length, to) {
            (EdgeLength::Finite(l), Some(_)) if l > 0.0 && l.is_finite() => l,
            (EdgeLength::Finite(l), _) if !(l > 0.0) => return Err(GraphError::NonPositiveLength(e.id.clone())),
            (EdgeLength::Infinite, None) => f64::INFINITY,
            _ => return Err(GraphError::InfiniteEdgeMismatch(e.id.clone())),
        };
        if let Some(to) = to {
            if to == from {
                return Err(GraphError::LoopEdge(e.id.clone()));
            }
            let key = (from.min(to), from.max(to));
            if let Some(prev) = pairs.insert(key, e.id.clone()) {
                return Err(GraphError::MultiEdge(prev, e.id.clone()));
            }
            incidence[to].push(k);
        }
        incidence[from].push(k);
        edges.push(Edge { id: e.id.clone(), from, to, length });
    }
    // declaration order within each vertex
    for inc in &mut incidence {
        inc.sort_unstable();
    }

    for (v, inc) in incidence.iter().enumerate() {
        if inc.is_empty() {
            return Err(GraphError::IsolatedVertex(spec.vertices[v].id.clone()));
        }
    }
    let mut seen = vec![false; spec.vertices.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &k in &incidence[v] {
            let e = &edges[k];
            for w in std::iter::once(e.from).chain(e.to) {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(GraphError::DisconnectedGraph(spec.vertices[v].id.clone()));
    }

    let mut conditions = Vec::with_capacity(spec.vertices.len());
    for (v, vs) in spec.vertices.iter().enumerate() {
        let d = incidence[v].len();
        let cond = match &vs.condition {
            ConditionSpec::Delta { alpha } if *alpha == 0.0 => VertexCondition::Kirchhoff,
            ConditionSpec::Delta { alpha } => VertexCondition::Delta { alpha: *alpha },
            ConditionSpec::Kirchhoff => VertexCondition::Kirchhoff,
            ConditionSpec::General { p_d, p_n, p_r, lambda, edge_order } => {
                if let Some(order) = edge_order {
                    let declared: Vec<String> = incidence[v].iter().map(|&k| edges[k].id.clone()).collect();
                    if *order != declared {
                        return Err(GraphError::EdgeOrder { vertex: vs.id.clone(), given: order.clone(), declared });
                    }
                }
                let cond = VertexCondition::General {
                    p_d: to_real(&vs.id, p_d, d, "P_D")?,
                    p_n: to_real(&vs.id, p_n, d, "P_N")?,
                    p_r: to_real(&vs.id, p_r, d, "P_R")?,
                    lambda: to_real(&vs.id, lambda, d, "Lambda")?,
                };
                let report = validate_vertex_condition(&cond, DEFAULT_CONDITION_TOL).map_err(|_| {
                    GraphError::DimensionMismatch { vertex: vs.id.clone(), msg: "inconsistent matrix sizes".into() }
                })?;
                if !report.valid {
                    return Err(GraphError::InvalidCondition { vertex: vs.id.clone(), report });
                }
                cond
            }
        };
        conditions.push(cond);
    }

    Ok(MetricGraph {
        vertex_ids: spec.vertices.iter().map(|v| v.id.clone()).collect(),
        edges,
        conditions,
        incidence,
        p: spec.p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionProperty {
    Idempotency,
    Symmetry,
    MutualOrthogonality,
    Completeness,
    LambdaInvertibility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub property: ConditionProperty,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
    /// Residual of every checked property, violated or not.
    pub residuals: Vec<Violation>,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.valid {
            return write!(f, "valid");
        }
        let parts: Vec<String> =
            self.violations.iter().map(|v| format!("{:?} residual {:.3e}", v.property, v.residual)).collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn fro(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Orthonormal basis of `range(P)` for a symmetric projector, as columns.
pub fn projector_range(p: &DMatrix<f64>) -> DMatrix<f64> {
    let d = p.nrows();
    if d == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let cols: Vec<_> =
        (0..d).filter(|&k| eig.eigenvalues[k] > 0.5).map(|k| eig.eigenvectors.column(k).into_owned()).collect();
    if cols.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Checks the projector and `Λ` properties of a general condition, reporting
/// the residual of each. `δ` and Kirchhoff conditions are checked through
/// their general image; Kirchhoff has none and is reported valid.
pub fn validate_vertex_condition(cond: &VertexCondition, tol: f64) -> Result<ValidationReport, GraphError> {
    let (p_d, p_n, p_r, lambda) = match cond {
        VertexCondition::General { p_d, p_n, p_r, lambda } => (p_d.clone(), p_n.clone(), p_r.clone(), lambda.clone()),
        VertexCondition::Kirchhoff => {
            return Ok(ValidationReport { valid: true, violations: vec![], residuals: vec![] })
        }
        VertexCondition::Delta { .. } => {
            return Err(GraphError::DimensionMismatch {
                vertex: String::new(),
                msg: "delta condition needs a degree; use delta_as_general".into(),
            })
        }
    };
    let d = p_d.nrows();
    for m in [&p_d, &p_n, &p_r, &lambda] {
        if m.nrows() != d || m.ncols() != d {
            return Err(GraphError::DimensionMismatch {
                vertex: String::new(),
                msg: format!("expected {d}x{d} matrices"),
            });
        }
    }
    use ConditionProperty::*;
    let mut residuals = Vec::new();
    let idem = [&p_d, &p_n, &p_r].iter().map(|p| fro(&(*p * *p - *p))).fold(0.0, f64::max);
    residuals.push(Violation { property: Idempotency, residual: idem });
    let sym = [&p_d, &p_n, &p_r, &lambda].iter().map(|p| fro(&(*p - p.transpose()))).fold(0.0, f64::max);
    residuals.push(Violation { property: Symmetry, residual: sym });
    let orth = [(&p_d, &p_n), (&p_d, &p_r), (&p_n, &p_r)].iter().map(|(a, b)| fro(&(*a * *b))).fold(0.0, f64::max);
    residuals.push(Violation { property: MutualOrthogonality, residual: orth });
    let compl = fro(&(&p_d + &p_n + &p_r - DMatrix::identity(d, d)));
    residuals.push(Violation { property: Completeness, residual: compl });

    // Λ restricted to range(P_R): invertible means its smallest singular value
    // is away from zero. A singular compression is reported with residual
    // 1 − smallest |eigenvalue|, so it always exceeds the tolerance.
    let basis = projector_range(&p_r);
    let inv_res = if basis.ncols() == 0 {
        0.0
    } else {
        let compressed = basis.transpose() * &lambda * &basis;
        let smallest = compressed.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
        if smallest <= tol {
            1.0 - smallest.min(1.0)
        } else {
            0.0
        }
    };
    residuals.push(Violation { property: LambdaInvertibility, residual: inv_res });

    let violations: Vec<Violation> = residuals.iter().filter(|v| v.residual > tol).cloned().collect();
    Ok(ValidationReport { valid: violations.is_empty(), violations, residuals })
}

/// General image of a `δ(α)` vertex of degree `d`: `P_D = I − J/d`, `P_N = 0`,
/// `P_R = J/d`, `Λ = (α/d) I`.
pub fn delta_as_general(alpha: f64, d: usize) -> Result<VertexCondition, GraphError> {
    if d == 0 {
        return Err(GraphError::ZeroDegree);
    }
    if alpha == 0.0 {
        return Err(GraphError::ZeroAlpha);
    }
    let j = DMatrix::from_element(d, d, 1.0 / d as f64);
    Ok(VertexCondition::General {
        p_d: DMatrix::identity(d, d) - &j,
        p_n: DMatrix::zeros(d, d),
        p_r: j,
        lambda: DMatrix::identity(d, d) * (alpha / d as f64),
    })
}

/// `⟨Λ P_R Ψ, P_R Φ⟩` for a general condition.
pub fn vertex_form(cond: &VertexCondition, psi: &[f64], phi: &[f64]) -> f64 {
    match cond {
        VertexCondition::General { p_r, lambda, .. } => {
            let a = p_r * nalgebra::DVector::from_column_slice(psi);
            let b = p_r * nalgebra::DVector::from_column_slice(phi);
            (lambda * a).dot(&b)
        }
        VertexCondition::Delta { alpha } => alpha * psi[0] * phi[0],
        VertexCondition::Kirchhoff => 0.0,
    }
}

/// Half the shortest edge length, capped at `1/2`.
pub fn min_half_edge_length(g: &MetricGraph) -> f64 {
    let shortest = g.edges.iter().map(|e| e.length).fold(1.0, f64::min);
    0.5 * shortest
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{EdgeSpec, VertexSpec};

    fn delta_vertex(id: &str, alpha: f64) -> VertexSpec {
        VertexSpec { id: id.into(), condition: ConditionSpec::Delta { alpha } }
    }

    fn edge(id: &str, from: &str, to: Option<&str>, length: EdgeLength) -> EdgeSpec {
        EdgeSpec { id: id.into(), from: from.into(), to: to.map(Into::into), length }
    }

    fn star_spec() -> GraphSpec {
        GraphSpec {
            p: 3.0,
            vertices: vec![delta_vertex("v", -2.0)],
            edges: vec![edge("a", "v", None, EdgeLength::Infinite), edge("b", "v", None, EdgeLength::Infinite)],
        }
    }

    #[test]
    fn star_is_valid() {
        let g = build_graph(&star_spec()).unwrap();
        assert_eq!(g.degree(0), 2);
        assert_eq!(g.infinite_edge_count(), 2);
        assert_eq!(g.slot(0, 1), Some(1));
    }

    #[test]
    fn two_vertex_graph() {
        let spec = GraphSpec {
            p: 3.0,
            vertices: vec![delta_vertex("v0", -3.0), delta_vertex("v1", -3.0)],
            edges: vec![
                edge("f", "v0", Some("v1"), EdgeLength::Finite(1.0)),
                edge("t0", "v0", None, EdgeLength::Infinite),
                edge("t1", "v1", None, EdgeLength::Infinite),
            ],
        };
        let g = build_graph(&spec).unwrap();
        assert_eq!((g.degree(0), g.degree(1)), (2, 2));
        assert_eq!(g.incident_edges(1), &[0, 2]);
    }

    #[test]
    fn structural_errors() {
        let mut s = star_spec();
        s.vertices.push(delta_vertex("w", -1.0));
        s.vertices.push(delta_vertex("x", -1.0));
        s.edges.push(edge("zero", "w", Some("x"), EdgeLength::Finite(0.0)));
        assert_eq!(build_graph(&s), Err(GraphError::NonPositiveLength("zero".into())));

        s.edges.pop();
        s.edges.push(edge("wx", "w", Some("x"), EdgeLength::Finite(1.0)));
        assert!(matches!(build_graph(&s), Err(GraphError::DisconnectedGraph(_))));

        let mut s = star_spec();
        s.edges[0].from = "nope".into();
        assert!(matches!(build_graph(&s), Err(GraphError::DanglingEdgeEndpoint { .. })));

        let mut s = star_spec();
        s.p = 1.0;
        assert_eq!(build_graph(&s), Err(GraphError::InvalidExponent(1.0)));

        let mut s = star_spec();
        s.edges[0].to = Some("v".into());
        s.edges[0].length = EdgeLength::Finite(1.0);
        assert!(matches!(build_graph(&s), Err(GraphError::LoopEdge(_))));

        let mut s = star_spec();
        s.edges[0].length = EdgeLength::Finite(1.0);
        assert!(matches!(build_graph(&s), Err(GraphError::InfiniteEdgeMismatch(_))));
    }

    #[test]
    fn multi_edge_rejected() {
        let spec = GraphSpec {
            p: 3.0,
            vertices: vec![delta_vertex("a", -1.0), delta_vertex("b", -1.0)],
            edges: vec![
                edge("1", "a", Some("b"), EdgeLength::Finite(1.0)),
                edge("2", "b", Some("a"), EdgeLength::Finite(2.0)),
            ],
        };
        assert!(matches!(build_graph(&spec), Err(GraphError::MultiEdge(..))));
    }

    #[test]
    fn complex_lambda_rejected() {
        let mut s = star_spec();
        let r = |x: f64| Entry::Real(x);
        s.vertices[0].condition = ConditionSpec::General {
            p_d: vec![vec![r(0.0), r(0.0)], vec![r(0.0), r(0.0)]],
            p_n: vec![vec![r(0.0), r(0.0)], vec![r(0.0), r(0.0)]],
            p_r: vec![vec![r(1.0), r(0.0)], vec![r(0.0), r(1.0)]],
            lambda: vec![vec![r(-1.0), Entry::Complex([0.0, 0.5])], vec![Entry::Complex([0.0, -0.5]), r(-1.0)]],
            edge_order: None,
        };
        assert!(matches!(build_graph(&s), Err(GraphError::ComplexCondition { .. })));
    }

    #[test]
    fn kirchhoff_as_general_is_invalid() {
        let d = 3;
        let j = DMatrix::from_element(d, d, 1.0 / 3.0);
        let cond = VertexCondition::General {
            p_d: DMatrix::identity(d, d) - &j,
            p_n: DMatrix::zeros(d, d),
            p_r: j,
            lambda: DMatrix::zeros(d, d),
        };
        let rep = validate_vertex_condition(&cond, DEFAULT_CONDITION_TOL).unwrap();
        assert!(!rep.valid);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].property, ConditionProperty::LambdaInvertibility);
    }

    #[test]
    fn dirichlet_decoupling_is_valid() {
        let d = 3;
        let cond = VertexCondition::General {
            p_d: DMatrix::identity(d, d),
            p_n: DMatrix::zeros(d, d),
            p_r: DMatrix::zeros(d, d),
            lambda: DMatrix::zeros(d, d),
        };
        assert!(validate_vertex_condition(&cond, DEFAULT_CONDITION_TOL).unwrap().valid);
    }

    #[test]
    fn scaled_projector_fails_idempotency() {
        let d = 2;
        let cond = VertexCondition::General {
            p_d: DMatrix::identity(d, d) * 2.0,
            p_n: DMatrix::zeros(d, d),
            p_r: DMatrix::zeros(d, d),
            lambda: DMatrix::zeros(d, d),
        };
        let rep = validate_vertex_condition(&cond, DEFAULT_CONDITION_TOL).unwrap();
        assert!(!rep.valid);
        let idem = rep.violations.iter().find(|v| v.property == ConditionProperty::Idempotency);
        assert!((idem.unwrap().residual - 2.0_f64.sqrt() * 2.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_dimensions() {
        let cond = VertexCondition::General {
            p_d: DMatrix::identity(2, 2),
            p_n: DMatrix::zeros(3, 3),
            p_r: DMatrix::zeros(2, 2),
            lambda: DMatrix::zeros(2, 2),
        };
        assert!(matches!(validate_vertex_condition(&cond, 1e-10), Err(GraphError::DimensionMismatch { .. })));
    }

    #[test]
    fn delta_image_two_edges() {
        let cond = delta_as_general(-2.0, 2).unwrap();
        let VertexCondition::General { p_r, lambda, .. } = &cond else { unreachable!() };
        assert!((p_r - DMatrix::from_element(2, 2, 0.5)).norm() < 1e-15);
        let ones = nalgebra::DVector::from_element(2, 1.0);
        assert!((lambda * &ones + &ones).norm() < 1e-15);
        let c = 1.7;
        assert!((vertex_form(&cond, &[c, c], &[c, c]) + 2.0 * c * c).abs() < 1e-14);
    }

    #[test]
    fn delta_image_degree_one_is_robin() {
        let VertexCondition::General { p_d, p_r, lambda, .. } = delta_as_general(-3.0, 1).unwrap() else {
            unreachable!()
        };
        assert_eq!(p_d[(0, 0)], 0.0);
        assert_eq!(p_r[(0, 0)], 1.0);
        assert_eq!(lambda[(0, 0)], -3.0);
    }

    #[test]
    fn delta_image_zero_alpha() {
        assert_eq!(delta_as_general(0.0, 3), Err(GraphError::ZeroAlpha));
    }

    #[test]
    fn delta_image_valid_and_reproduces_alpha() {
        for alpha in [-5.0, -1.0, 1.0] {
            for d in 1..=6 {
                let cond = delta_as_general(alpha, d).unwrap();
                assert!(validate_vertex_condition(&cond, DEFAULT_CONDITION_TOL).unwrap().valid);
                for c in [0.0, 1.0, -2.5] {
                    let v = vec![c; d];
                    assert!((vertex_form(&cond, &v, &v) - alpha * c * c).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn min_half_edge_length_cases() {
        let mk = |lengths: &[f64]| {
            let mut spec = GraphSpec { p: 3.0, vertices: vec![delta_vertex("v0", -1.0)], edges: vec![] };
            for (k, l) in lengths.iter().enumerate() {
                let id = format!("v{}", k + 1);
                spec.vertices.push(delta_vertex(&id, -1.0));
                spec.edges.push(edge(&format!("f{k}"), "v0", Some(&id), EdgeLength::Finite(*l)));
            }
            spec.edges.push(edge("t", "v0", None, EdgeLength::Infinite));
            build_graph(&spec).unwrap()
        };
        assert!((min_half_edge_length(&mk(&[1.5, 0.4])) - 0.2).abs() < 1e-15);
        assert_eq!(min_half_edge_length(&mk(&[])), 0.5);
        assert_eq!(min_half_edge_length(&mk(&[3.0])), 0.5);
    }
}
