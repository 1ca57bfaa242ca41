//! Numerical tolerances shared across the crate.
//!
//! The values are chosen for desk-scale problems (tens of variables,
//! coefficient magnitudes up to 1e4) solved in f64. Feasibility, duality-gap
//! and complementary-slackness checks share one scale so that a solution
//! accepted by the solver passes the downstream audits with headroom.

/// Primal and dual feasibility residual bound for an accepted LP solution.
pub const FEAS: f64 = 1e-8;

/// Allowed gap between primal and dual objective values.
pub const GAP: f64 = 1e-8;

/// Bound on complementary-slackness products.
pub const CS: f64 = 1e-8;

/// Entries smaller than this are treated as zero during pivoting.
pub const PIVOT: f64 = 1e-10;

/// Slack used when pinning an objective or a coordinate during
/// lexicographic refinement; keeps the pinned polyhedron nonempty in f64.
pub const PIN: f64 = 1e-9;

/// A line is reported as binding when its flow is within this of capacity.
pub const BINDING: f64 = 1e-7;

/// Residual bound for the stationarity / feasibility audit of a dispatch.
pub const KKT: f64 = 1e-7;

/// Default tolerance for equilibrium verification.
pub const EPSILON: f64 = 1e-6;

/// Offset used when augmenting a bid grid around critical prices.
pub const PRICE_MICRO_STEP: f64 = 1e-4;

/// Default gap between the two bid slopes in the second-price construction.
pub const Q_GAP: f64 = 1.0;
