//! Numerical laboratory for the linearized Boltzmann equation with soft
//! potentials in bounded convex domains.
//!
//! The crate provides the building blocks of a semi-Lagrangian kinetic solver
//! and its verification harness:
//!
//! - [`geometry`]: convex level-set domains, specular reflection, backward
//!   exit times, and the kinetic distance functional.
//! - [`weights`]: the global Maxwellian, time-velocity weight functions, the
//!   revised collision frequency, and stretched-exponential decay envelopes.
//! - [`collision`]: collision frequency quadrature, dense kernel matrices
//!   with a smooth near-singularity split, the linearized operator, the
//!   macroscopic projection, and the bilinear collision operator.
//! - [`cycles`]: diffuse (stochastic) and specular back-time cycles with
//!   Monte Carlo estimators for escape probabilities and weighted cycle
//!   integrals, plus a trajectory Jacobian probe.
//! - [`solver`]: a 1-D slab x 3-D velocity semi-Lagrangian time integrator
//!   with diffuse or specular walls and conservation-aware collision updates.
//! - [`analysis`]: stretched-exponential decay fitting, coercivity audits,
//!   and conservation reports.

pub mod analysis;
pub mod collision;
pub mod cycles;
pub mod geometry;
pub mod quad;
pub mod rng;
pub mod solver;
pub mod vec3;
pub mod weights;

pub use vec3::Vec3;
