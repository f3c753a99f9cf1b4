//! Dual decomposition over ray subproblems.
//!
//! Every subproblem sees its base costs plus multipliers `λ_{i,u}` on the
//! nodes it shares with others; the multipliers of a node sum to zero, so
//! the sum of subproblem optima is a lower bound on the full problem for
//! any `λ`. [`DualAscent`] maximizes that bound.

mod ascent;
pub mod bnb;
mod bundle;
mod decompose;
#[cfg(test)]
pub(crate) use ascent::tests as ascent_tests;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use ascent::{
    AscentConfig, AscentOutcome, CERT_MARGIN, AscentStatus, BoundTrace, DualAscent, Evaluation, LagrangeState, StepRule, SubResult,
    TraceEntry,
};
pub use bnb::{branch_and_bound, BnbConfig, BnbResult, BnbStatus};
pub use decompose::{decompose, Decomposition, Member, SubproblemKind};

/// Which per-ray oracle the decomposition uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    /// Exact one-dimensional tomography per ray.
    Ctg,
    /// Local polytope with the ray sum enforced on unary marginals.
    Std,
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleKind::Ctg => "ctg",
            OracleKind::Std => "std",
        })
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "ctg" => Ok(OracleKind::Ctg),
            "std" => Ok(OracleKind::Std),
            other => Err(Error::InvalidArgument(format!("unknown oracle `{other}`"))),
        }
    }
}
