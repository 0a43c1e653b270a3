//! Piecewise reference and disturbance signals.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};

/// Fraction of the dwell time used for a reference ramp when none is given.
pub const DEFAULT_RAMP_FRACTION: f64 = 0.1;

/// Event times are compared with this relative slack so that `n * dt`
/// landing a few ulps short of an event still triggers it.
fn reached(t: f64, at: f64) -> bool {
    t >= at - 1e-9 * at.abs().max(1.0)
}

/// A reference change: from time `t` the target moves to `value`, linearly
/// over `ramp` time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStep {
    pub t: f64,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<f64>,
}

/// Time-sorted list of reference steps for one output channel. The first
/// step sets the initial value and is never ramped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceSchedule {
    pub steps: Vec<ReferenceStep>,
}

impl ReferenceSchedule {
    pub fn constant(value: f64) -> Self {
        Self { steps: vec![ReferenceStep { t: 0.0, value, ramp: Some(0.0) }] }
    }

    /// Steps at the given times with ramps of `ramp` (default if `None`).
    pub fn stepped(points: &[(f64, f64)], ramp: Option<f64>) -> Self {
        Self { steps: points.iter().map(|&(t, value)| ReferenceStep { t, value, ramp }).collect() }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Config("reference schedule is empty".into()));
        }
        for (i, s) in self.steps.iter().enumerate() {
            ensure_positive("reference value", s.value)?;
            ensure_nonnegative("reference time", s.t)?;
            if let Some(r) = s.ramp {
                ensure_nonnegative("ramp", r)?;
            }
            if i > 0 && s.t <= self.steps[i - 1].t {
                return Err(Error::Config(format!(
                    "reference schedule not strictly time-sorted at entry {i} (t = {})",
                    s.t
                )));
            }
            if s.t > horizon {
                return Err(Error::Config(format!("reference step at t = {} beyond horizon {horizon}", s.t)));
            }
        }
        Ok(())
    }

    /// Replace missing ramps by the default fraction of each step's dwell
    /// time (time until the next step, or until `horizon` for the last one).
    pub fn resolved(&self, horizon: f64) -> Self {
        let mut steps = self.steps.clone();
        for i in 0..steps.len() {
            if steps[i].ramp.is_none() {
                let end = steps.get(i + 1).map_or(horizon, |s| s.t);
                steps[i].ramp = Some(if i == 0 { 0.0 } else { DEFAULT_RAMP_FRACTION * (end - steps[i].t) });
            }
        }
        Self { steps }
    }

    /// Reference value at time `t`; missing ramps count as zero.
    pub fn value(&self, t: f64) -> f64 {
        let mut value = self.steps[0].value;
        for (i, s) in self.steps.iter().enumerate().skip(1) {
            if !reached(t, s.t) {
                break;
            }
            let prev = self.steps[i - 1].value;
            let ramp = s.ramp.unwrap_or(0.0);
            value = if ramp > 0.0 && t < s.t + ramp {
                prev + (s.value - prev) * ((t - s.t) / ramp).max(0.0)
            } else {
                s.value
            };
        }
        value
    }

    /// Times where the reference settles at a new value (end of each ramp).
    pub fn settle_times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.t + s.ramp.unwrap_or(0.0)).collect()
    }
}

/// Constant additive disturbance on one input channel from time `t` on.
/// Later events on the same channel replace earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent {
    pub t: f64,
    /// Zero-based input channel.
    pub channel: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisturbanceSchedule {
    pub events: Vec<DisturbanceEvent>,
}

impl DisturbanceSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn step(t: f64, channel: usize, amplitude: f64) -> Self {
        Self { events: vec![DisturbanceEvent { t, channel, amplitude }] }
    }

    pub fn validate(&self, n_inputs: usize) -> Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            ensure_nonnegative("disturbance time", e.t)?;
            if !e.amplitude.is_finite() {
                return Err(Error::Config(format!("disturbance {i}: amplitude must be finite")));
            }
            if e.channel >= n_inputs {
                return Err(Error::Config(format!(
                    "disturbance {i}: channel {} but the controller drives {n_inputs} input(s)",
                    e.channel
                )));
            }
            if i > 0 && e.t < self.events[i - 1].t {
                return Err(Error::Config(format!("disturbance schedule not time-sorted at entry {i}")));
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64, channel: usize) -> f64 {
        self.events.iter().rfind(|e| e.channel == channel && reached(t, e.t)).map_or(0.0, |e| e.amplitude)
    }
}
