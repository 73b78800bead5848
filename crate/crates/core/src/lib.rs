//! Conformally covariant operators (Laplacian, Yamabe, Paneitz) on flat tori and on
//! compact quotients of the Heisenberg group, together with their analytic spectra,
//! nodal sets and the conformal invariants built from null eigenvectors.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: models, lattices with the (twisted) identifications, densities, quadrature.
//! - [`sparse`]: a small CSR matrix type used by every assembled operator.
//! - [`operators`]: finite-difference assembly of the operators and of the rescaled curvature.
//! - [`heisenberg`]: closed-form spectra, negative-eigenvalue counts and theta-function null vectors.
//! - [`spectral`]: eigensolvers, Sylvester inertia, kernel extraction and growth fits.
//! - [`nodal`]: nodal partitions, domain integrals and nodal-set distances.
//! - [`conformal`]: the invariants and the invariance battery.
//!
//! Data-parallel loops go through [`exec`], which falls back to sequential code when the
//! `parallel` feature is disabled. Reductions are chunked so both paths agree bit for bit.

pub mod conformal;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod heisenberg;
pub mod nodal;
pub mod operators;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
