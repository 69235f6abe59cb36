//! Knight-Walras equilibria of finite-state exchange economies under
//! sublinear (multiple-prior) pricing.
//!
//! The library is organized around a small set of building blocks:
//!
//! * [`state_space`] — contingent plans over a finite state space, prior
//!   polytopes, the worst-case (sublinear) expectation, coherent forward
//!   prices, and the subspace of mean-ambiguity-free plans.
//! * [`preferences`] — Bernoulli utility families and the multiple-prior,
//!   smooth-ambiguity, and anchored utility functionals with their
//!   superdifferentials.
//! * [`optimization`] — a concave maximization engine over linear
//!   constraints and box bounds, a brute-force grid oracle, and an LP
//!   feasibility/optimization kernel with Farkas certificates.
//! * [`markets`] — budget sets, demand, and aggregate excess demand under
//!   sublinear pricing.
//! * [`equilibrium`] — the Knight-Walras solver (price-player game plus
//!   simplex refinement), the Negishi Arrow-Debreu solver, equilibrium
//!   verification, and no-trade certificates.
//! * [`analysis`] — equivalence, efficiency, sweep, and genericity
//!   analyzers built on top of the solvers.
//!
//! All numeric code is generic over the scalar type via [`Scalar`]
//! (any `num_traits::Float`, in practice `f32` or `f64`); the aliases at
//! the crate root fix `f64`, which is what the CLI and the test suites
//! use. The LP kernel is generic over the weaker [`optimization::LinearScalar`]
//! bound so it also pivots exactly on rational scalars.

pub mod analysis;
pub mod equilibrium;
pub mod error;
pub mod markets;
pub mod optimization;
pub mod preferences;
pub mod scalar;
pub mod state_space;

pub use error::KwError;
pub use scalar::Scalar;

/// `f64` contingent plan.
pub type Plan64 = state_space::ContingentPlan<f64>;
/// `f64` prior polytope.
pub type PriorSet64 = state_space::PriorSet<f64>;
/// `f64` state price.
pub type StatePrice64 = state_space::StatePrice<f64>;
/// `f64` agent.
pub type Agent64 = preferences::Agent<f64>;
/// `f64` exchange economy.
pub type Economy64 = markets::Economy<f64>;
/// `f64` equilibrium candidate.
pub type Equilibrium64 = equilibrium::Equilibrium<f64>;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, KwError>;
