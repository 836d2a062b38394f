//! Numerics for the critical (d = 3, p = 2) renormalized Poisson potential:
//! truncated and renormalized fields, quenched Feynman-Kac moments,
//! Dirichlet principal eigenvalues, the Hardy functional, Poisson
//! extreme values and the slowly varying integral tests.

pub mod asymptotics;
pub mod brownian;
pub mod error;
pub mod feynman_kac;
pub mod format;
pub mod geometry;
pub mod hardy;
pub mod poisson_field;
pub mod potential;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Aabb, Domain, Vec3};
pub use stats::Estimate;
