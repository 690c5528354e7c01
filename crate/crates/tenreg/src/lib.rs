//! Low-rank tensor regression for high-dimensional uncertainty quantification.
//!
//! A response surface over many independent random inputs is expanded in an
//! orthonormal polynomial basis whose coefficient tensor is kept in CP
//! (Kruskal) format. The CP rank is determined automatically during fitting
//! by a group lq/l2 penalty that drives whole rank-1 components to zero, and
//! training samples are acquired actively from a Monte-Carlo estimate of the
//! Voronoi diagram of the current design.
//!
//! Modules:
//! - [`polybasis`]: orthonormal univariate polynomial families and quadrature
//! - [`cptensor`]: the CP-format coefficient tensor and its inner products
//! - [`regression`]: the rank-adaptive block-coordinate-descent solver
//! - [`sampling`]: Latin hypercube initialization and Voronoi-guided selection
//! - [`surrogate`]: the fitted model as a predictor with analytic moments
//! - [`harness`]: the active-learning loop, benchmarks, simulator protocol,
//!   and persistence

pub mod cptensor;
pub mod harness;
pub mod polybasis;
pub mod regression;
pub mod sampling;
pub mod surrogate;
