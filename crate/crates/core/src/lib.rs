//! Monte Carlo solver and verification suite for the Dirichlet problem
//! `(1/2) Delta u + grad(u) . mu + u nu = -rho`, `u = phi` on the boundary,
//! where the coefficients `mu`, `nu`, `rho` are signed measures admissible in
//! the Kato class. The solver simulates mollified diffusions to the domain
//! exit and averages exponentially weighted path payoffs; deterministic
//! oracles (a ball Green-function contraction solver and a finite-difference
//! reference) cross-check the estimates.

pub mod config;
pub mod domain;
pub mod error;
pub mod feynman_kac;
pub mod geom;
pub mod green;
pub mod lattice;
pub mod measures;
pub mod mollifier;
pub mod sde;
pub mod verification;

pub use error::{Error, Result};
