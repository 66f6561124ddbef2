//! Structure-preserving numerical integration of the quantum
//! Landau-Lifshitz-Gilbert equation
//!
//! ```text
//! rho' = (i/hbar)[rho, H] + i kappa [rho, rho']
//! ```
//!
//! for many-body spin-1/2 density matrices.
//!
//! The implicit equation is made explicit with a diagonal Sylvester solve in
//! the eigenbasis of `rho` ([`dynamics`]). [`integrators`] provides explicit
//! Runge-Kutta steps and an isospectral variant that projects each stage onto
//! the initial spectrum, keeping the state positive semi-definite with
//! conserved purity. [`spin`] builds the Heisenberg + DMI + Zeeman lattice
//! model, [`observables`] the measurements and [`oracle`] independent
//! reference solutions.

pub mod dynamics;
pub mod error;
pub mod integrators;
pub mod linalg;
pub mod observables;
pub mod oracle;
pub mod pauli;
pub mod spin;

pub use dynamics::{qllg_rhs, QllgContext, VectorField};
pub use error::{QllgError, Result};
pub use integrators::{integrate, preset_tableau, ButcherTableau, IntegratorConfig, Observer, TrajectoryRecord};
pub use linalg::CMat;
pub use num_complex::Complex64 as C64;
