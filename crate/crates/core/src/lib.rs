//! A numerical laboratory for the space-time formulation of Ricci flow.
//!
//! The crate evaluates exact solutions of the flow (and of its
//! vector-field-modified variant) in truncated Taylor arithmetic, assembles
//! the degenerate space-time geometry built on top of them, and verifies the
//! identity chain leading to the linear trace Harnack quadratic: connection
//! and curvature tables of the space-time metric, the heat-type evolution of
//! extended tensors, the Harnack quadratics themselves, and the
//! non-degenerate metrics that approximate the space-time geometry.
//!
//! Module map:
//!
//! * [`taylor`] – truncated multivariate Taylor (jet) arithmetic
//! * [`tensor`] – scalar backend trait and dense tensor helpers
//! * [`jets`] – closed-form metric families evaluated as jets
//! * [`riemann`] – spatial curvature, covariant derivatives, Lichnerowicz
//! * [`flow`] – periodic grid evolutions (flow, linearized flow, families)
//! * [`spacetime`] – degenerate space-time connection and curvature
//! * [`harnack`] – trace/matrix Harnack quadratics and optimal vector fields
//! * [`approx`] – non-degenerate approximating metrics and their limits
//! * [`verify`] – check catalog, runners, reports
//! * [`tolerances`] – every numeric budget used by checks and tests

pub mod taylor;
pub mod tensor;
pub mod jets;
pub mod riemann;
pub mod flow;
pub mod spacetime;
pub mod harnack;
pub mod approx;
pub mod tolerances;
pub mod verify;

use std::fmt;
use std::str::FromStr;

/// Deliberate defect injection for falsifiability runs. Each variant breaks
/// one load-bearing term; the check suite must notice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mutation {
    None,
    /// Flip the overall sign of the spatial Riemann tensor.
    FlipRiemannSign,
    /// Drop the scalar-curvature gradient from the `Γ^k_00` entry of the
    /// space-time connection.
    DropGradRInGamma00,
    /// Drop the `<Rc, h>` term from the time-time component of the extended
    /// tensor.
    DropRcDotH,
}

impl Default for Mutation {
    fn default() -> Self {
        Mutation::None
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mutation::None => "none",
            Mutation::FlipRiemannSign => "flip-riemann-sign",
            Mutation::DropGradRInGamma00 => "drop-grad-r-in-gamma00",
            Mutation::DropRcDotH => "drop-rc-dot-h",
        };
        f.write_str(s)
    }
}

impl FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Mutation::None),
            "flip-riemann-sign" => Ok(Mutation::FlipRiemannSign),
            "drop-grad-r-in-gamma00" => Ok(Mutation::DropGradRInGamma00),
            "drop-rc-dot-h" => Ok(Mutation::DropRcDotH),
            other => Err(format!(
                "unknown mutation `{other}` (expected none, flip-riemann-sign, \
                 drop-grad-r-in-gamma00, drop-rc-dot-h)"
            )),
        }
    }
}
