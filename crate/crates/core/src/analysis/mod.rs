//! Closed-form stability, admissibility and bound computations.
//!
//! Every test returns a [`StabilityVerdict`]. Sufficient-only tests answer
//! [`Verdict::Unknown`] when they cannot certify stability.

pub mod dimer;
pub mod mean;
pub mod variance;

use serde::{Serialize, Serializer};
use serde_json::{Map, Value};

/// Relative slack applied to every strict inequality.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// `a > b` with a relative margin of [`BOUNDARY_TOL`].
pub fn strictly_greater(a: f64, b: f64) -> bool {
    a - b > BOUNDARY_TOL * a.abs().max(b.abs())
}

/// True when `a` and `b` are within the boundary tolerance of each other.
pub fn on_boundary(a: f64, b: f64) -> bool {
    (a - b).abs() <= BOUNDARY_TOL * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    /// A sufficient condition failed; nothing can be concluded.
    Unknown,
}

impl Verdict {
    pub fn from_bool(stable: bool) -> Self {
        if stable {
            Verdict::Stable
        } else {
            Verdict::Unstable
        }
    }

    pub fn is_stable(self) -> bool {
        self == Verdict::Stable
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Stable => 0,
            Verdict::Unstable => 3,
            Verdict::Unknown => 4,
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Verdict::Stable => s.serialize_bool(true),
            Verdict::Unstable => s.serialize_bool(false),
            Verdict::Unknown => s.serialize_str("unknown"),
        }
    }
}

/// Outcome of a test with a scalar margin (positive when stable) and
/// supporting data such as eigenvalues, critical frequencies or bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub margin: f64,
    pub witness: Map<String, Value>,
}

impl StabilityVerdict {
    pub fn new(verdict: Verdict, margin: f64) -> Self {
        Self { verdict, margin, witness: Map::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.witness.insert(key.to_string(), value.into());
        self
    }

    pub fn is_stable(&self) -> bool {
        self.verdict.is_stable()
    }
}

/// JSON number or `null` for non-finite values.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}
