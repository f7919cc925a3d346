//! Geodesic tracing for meromorphic warped-product metrics, done by analytic
//! continuation in the complex domain.
//!
//! The library models diagonal warped-product metrics
//! `b1(u1) du1⊙du1 + Σ a_k(u1) f_k(u_k) du_k⊙du_k` on products of complex
//! planes and unit discs, builds their geodesic equations, integrates them
//! along paths in the complex plane of the natural parameter, monitors the
//! conserved first integrals, classifies the singularities that obstruct
//! continuation (pole-like, branch-like, logarithmic), and certifies a
//! coercivity criterion for geodesic completeness on an explicit rational
//! class of metrics.
//!
//! Modules:
//! - [`expr`]: closed-form complex expressions of one variable with
//!   forward-mode first/second derivatives.
//! - [`metric`]: warped-product metric data, Christoffel symbols by closed
//!   formulas and by a generic oracle, ordinariness tests.
//! - [`continuation`]: adaptive complex ODE integration along piecewise
//!   paths, monodromy probes, radial limits on the Riemann sphere, and the
//!   singularity classifier.
//! - [`geodesic`]: the geodesic system, first integrals and their residuals,
//!   trace records, the coordinate-reparametrized system, induced covariant
//!   derivatives along traces.
//! - [`quad`]: the closed-form antiderivative table for `1/sqrt(quadratic)`
//!   and closed-form geodesics used as oracles against the numeric tracer.
//! - [`coercivity`]: the coercivity certificate for the rational example
//!   class and a numeric incompleteness probe.
//! - [`cli`]: the file-driven front end.

pub mod cli;
pub mod coercivity;
pub mod continuation;
pub mod expr;
pub mod geodesic;
pub mod metric;
pub mod quad;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Default threshold below which a division denominator counts as a pole,
/// relative to operand scale.
pub const POLE_EPS: f64 = 1e-12;

/// Default threshold below which a metric diagonal entry counts as
/// degenerate. Kept separate from [`POLE_EPS`]: degeneracy and poles are
/// distinct failure modes.
pub const DEGEN_EPS: f64 = 1e-12;
