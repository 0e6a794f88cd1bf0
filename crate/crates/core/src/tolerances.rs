//! Every numeric budget used by the checks and tests, in one place.
//!
//! Analytic (jet) paths compute derivatives to roundoff, so their budgets
//! reflect conditioning of the assembled expressions, not discretization.
//! Grid budgets scale as `coeff * dx^order`; the coefficients were measured
//! on refined grids and then padded by roughly a factor of eight so the
//! suite stays robust to seed changes without losing falsification power.

/// Closed-form curvature examples (round spheres, cigar, products).
pub const CURVATURE_EXAMPLES: f64 = 1e-8;

/// Lichnerowicz/static-Ricci identity on round spheres.
pub const LICHNEROWICZ_SPHERE: f64 = 1e-7;

/// Generic analytic identity residual (pullback metrics, deep jets).
pub const IDENTITY_ANALYTIC: f64 = 1e-6;

/// Plain closed-form algebraic identities (no deep differentiation).
pub const IDENTITY_TIGHT: f64 = 1e-9;

/// Exact-value comparisons against frozen rational constants.
pub const FROZEN_EXACT: f64 = 1e-10;

/// Allowed negativity slack for quantities that are provably nonnegative.
pub const POSITIVITY_SLACK: f64 = 1e-9;

/// Lower bound for the measured order of the `s`-derivative consistency
/// (two-point vs four-point stencils agree to second order in `s0`).
pub const S_ORDER_MIN: f64 = 1.7;

/// Acceptance band for the `N -> infinity` convergence slopes of the
/// approximating-metric study (theoretical slope is -1 in `log N`).
pub const SLOPE_BAND: (f64, f64) = (-1.1, -0.9);


/// Grid identity budget: `coeff * dx^order`, with per-check coefficients.
pub fn grid_tol(coeff: f64, dx: f64, order: i32) -> f64 {
    coeff * dx.powi(order)
}
