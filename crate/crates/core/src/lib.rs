//! Spectral laboratory for incompressible Navier-Stokes on the 2D/3D torus.
//!
//! The crate builds the divergence-free trigonometric eigenbasis of the
//! Stokes operator, integrates Galerkin truncations of the flow with exact
//! triad-rule nonlinearity, encodes fields and trajectories into leading
//! coefficient vectors, learns the initial-data-to-solution map with plain
//! ReLU networks, and measures every inequality the construction promises:
//! the energy law, Lipschitz/Gronwall envelopes, Monte-Carlo projection
//! decay, operator error decompositions, and the sensor-interpolation
//! estimates behind the depth-2 pipeline.
//!
//! Everything is deterministic given its seeds: identical inputs produce
//! byte-identical datasets, models, trajectories, and reports.

pub mod basis;
pub mod codec;
pub mod dataset;
pub mod galerkin;
pub mod mlp;
pub mod quad;
pub mod sensors;
pub mod tensor;
pub mod verify;
