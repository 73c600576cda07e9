//! Simulator and identity-verification harness for wave maps and Dirac-wave
//! maps with curvature term on expanding warped-product spacetimes
//! `h = -s(t)^-2 dt^2 + a(t)^2 delta` over the flat torus `T^{n-1}`.
//!
//! The evolved system is the conformally rescaled second-order system for the
//! map `phi` and the vector spinor `psi`, integrated by the method of lines with
//! centered finite differences and classical RK4. The first-order Dirac
//! equation is carried along as a monitored constraint.

pub mod dynamics;
pub mod energy;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod linalg;
pub mod scenario_cli;
pub mod spin;
pub mod target;
pub mod verify;

pub use error::{Error, Result};
