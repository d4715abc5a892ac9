//! Stationary states of the defocusing nonlinear Schrödinger equation
//! `Hψ + ωψ + |ψ|^{p−1}ψ = 0` on metric graphs with half-infinite edges.

pub mod cli;
pub mod discretize;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod multiplicity;
pub mod quad;
pub mod shooting;
pub mod spectral;
pub mod variational;
