//! Classical and semiclassical scattering on asymptotically conic manifolds.
//!
//! The cone end is `R_+ x ∂M` with phase-space coordinates `(r, rho, theta, omega)`.
//! The unperturbed energy is the conic Hamiltonian
//!
//! ```text
//! p_c = 1/2 rho^2 + q(theta, omega) / r^2,    q = 1/2 h^{jk}(theta) omega_j omega_k,
//! ```
//!
//! whose flow is solvable in closed form; short-range perturbations of `p_c`
//! admit classical wave operators and a scattering map that approaches the
//! conic one at rate `h^mu` under the semiclassical scaling
//! `(r, omega) -> (r/h, omega/h)`. On the quantum side, the separable model
//! (circle boundary, radial perturbation) has a diagonal scattering matrix
//! whose per-mode phases encode the time-pi geodesic flow on the boundary:
//! singularities of boundary data relocate by `pi/a * sign(omega)`.
//!
//! Module map:
//! - [`geometry`] — boundary cometrics, angular energy, the geodesic flow on `T*∂M`;
//! - [`conic`] — exact conic flow, classical wave operators `w_{c,±}` and the
//!   scattering map `s_c`;
//! - [`perturbed`] — the full symbol under the decay assumptions, its scaled
//!   flow, numerical wave operators, rate fits, scattering-map decomposition
//!   and the leading-order transport check;
//! - [`smatrix`] — radial phase shifts and the diagonal scattering matrix of
//!   the separable model;
//! - [`wavefront`] — coherent-state wave-front detection on the circle;
//! - [`ode`], [`fit`], [`bessel`] — supporting numerics.
//!
//! All numeric kernels are generic over the scalar type through [`Real`];
//! `f64` aliases for the main types are exported at the crate root.

// `!(x > 0)` style guards are deliberate: they reject NaN along with the
// out-of-domain sign. Index loops mirror the stencil arithmetic.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod bessel;
pub mod conic;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod ode;
pub mod perturbed;
pub mod real;
pub mod smatrix;
pub mod wavefront;

pub use conic::{ConicInvariants, PhasePoint, ScatteringData, Sign};
pub use error::Error;
pub use fit::RateFit;
pub use geometry::{AngularPoint, BoundaryMetric};
pub use perturbed::{PerturbationProfile, ScaledSymbol};
pub use real::{real, Real};
pub use smatrix::{ModePhase, ModePhaseTable, RadialPotential, RadialProblem};
pub use wavefront::{CoherentProbe, Detection, ProbeBank, WfReport};

/// Convenience result alias for fallible operations in this crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

pub type BoundaryMetric64 = BoundaryMetric<f64>;
pub type AngularPoint64 = AngularPoint<f64>;
pub type PhasePoint64 = PhasePoint<f64>;
pub type ScatteringData64 = ScatteringData<f64>;
pub type PerturbationProfile64 = PerturbationProfile<f64>;
pub type ScaledSymbol64 = ScaledSymbol<f64>;
pub type RateFit64 = RateFit<f64>;
pub type RadialProblem64 = RadialProblem<f64>;
pub type RadialPotential64 = RadialPotential<f64>;
pub type ModePhaseTable64 = ModePhaseTable<f64>;
pub type WfReport64 = WfReport<f64>;

pub type BoundaryMetric32 = BoundaryMetric<f32>;
pub type PhasePoint32 = PhasePoint<f32>;
