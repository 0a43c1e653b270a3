//! Closed moment equations of the gene-expression and dimerization networks,
//! a fixed-step RK4 integrator and the closed loops built on top of them.
//!
//! Gene-expression states are ordered `(x1, x2, x3, x4, x5)` =
//! (mean mRNA, mean protein, var mRNA, cov(mRNA, protein), var protein).

mod closed_loop;
mod delay;
mod ode;

pub use closed_loop::{ClosedLoop, Plant, VarianceInput};
pub use delay::{integrate_delayed, DelayBuffer, DelayLoop};
pub use ode::{integrate, rk4_step, FnSystem, OdeSystem, Trajectory};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result};

pub type MomentState5 = [f64; 5];
/// `(mean monomer, mean dimer)`.
pub type DimerState = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneParams {
    pub k_p: f64,
    pub gamma_p: f64,
    pub gamma_r: f64,
}

impl GeneParams {
    pub fn new(k_p: f64, gamma_p: f64, gamma_r: f64) -> Result<Self> {
        ensure_positive("k_p", k_p)?;
        ensure_positive("gamma_p", gamma_p)?;
        ensure_positive("gamma_r", gamma_r)?;
        Ok(Self { k_p, gamma_p, gamma_r })
    }

    pub fn fastest_rate(&self) -> f64 {
        self.k_p.max(self.gamma_p).max(self.gamma_r)
    }
}

/// Parameters of the gene-expression moments normalized by their basal levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParams {
    pub gamma_r0: f64,
    pub gamma_p: f64,
    pub b: f64,
    pub k_p: f64,
}

impl NormalizedParams {
    pub fn new(gamma_r0: f64, gamma_p: f64, b: f64, k_p: f64) -> Result<Self> {
        ensure_positive("gamma_r0", gamma_r0)?;
        ensure_positive("gamma_p", gamma_p)?;
        ensure_positive("b", b)?;
        crate::error::ensure_nonnegative("k_p", k_p)?;
        Ok(Self { gamma_r0, gamma_p, b, k_p })
    }

    /// Constants of the E. coli-scale example used throughout the presets.
    pub fn standard() -> Self {
        Self { gamma_r0: 0.03, gamma_p: 0.0066, b: 0.9587, k_p: 0.06 }
    }

    /// `α = 1 + k_p / (γ_r0 + γ_p)`.
    pub fn alpha(&self) -> f64 {
        1.0 + self.k_p / (self.gamma_r0 + self.gamma_p)
    }

    /// Mean loop of the normalized system, shifted by the basal level 1, as a
    /// plain gene mean system: `x1 − 1` scaled by `1/b` is the mRNA state,
    /// translation rate `b γ_p`.
    pub fn equivalent_mean_params(&self) -> GeneParams {
        GeneParams { k_p: self.b * self.gamma_p, gamma_p: self.gamma_p, gamma_r: self.gamma_r0 }
    }

    pub fn fastest_rate(&self) -> f64 {
        self.gamma_r0.max(self.gamma_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimerParams {
    pub b: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl DimerParams {
    pub fn new(b: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        ensure_positive("b", b)?;
        ensure_positive("gamma1", gamma1)?;
        ensure_positive("gamma2", gamma2)?;
        Ok(Self { b, gamma1, gamma2 })
    }

    pub fn fastest_rate(&self) -> f64 {
        self.b.max(self.gamma1).max(self.gamma2)
    }
}

/// Mean dynamics with the transcription rate `u` as input.
pub fn gene_mean_rhs(x: [f64; 2], u: f64, p: &GeneParams) -> [f64; 2] {
    [-p.gamma_r * x[0] + u, p.k_p * x[0] - p.gamma_p * x[1]]
}

/// Full first and second moments with transcription `u1` and mRNA
/// degradation `u2` as inputs.
pub fn gene_full_rhs(x: &MomentState5, u1: f64, u2: f64, p: &GeneParams) -> MomentState5 {
    let (kp, gp) = (p.k_p, p.gamma_p);
    [
        -u2 * x[0] + u1,
        kp * x[0] - gp * x[1],
        u2 * x[0] - 2.0 * u2 * x[2] + u1,
        kp * x[2] - gp * x[3] - u2 * x[3],
        kp * x[0] + gp * x[1] + 2.0 * kp * x[3] - 2.0 * gp * x[4],
    ]
}

/// Normalized moments; the effective transcription input is `γ_r0 + b u1`.
pub fn normalized_rhs(x: &MomentState5, u1: f64, u2: f64, p: &NormalizedParams) -> MomentState5 {
    let gr = p.gamma_r0 + u2;
    let gp = p.gamma_p;
    let alpha = p.alpha();
    let u1t = p.gamma_r0 + p.b * u1;
    [
        -gr * x[0] + u1t,
        gp * (x[0] - x[1]),
        gr * x[0] - 2.0 * gr * x[2] + u1t,
        (p.gamma_r0 + gp) * x[2] - (gr + gp) * x[3],
        gp / alpha * (x[0] + x[1] + 2.0 * (alpha - 1.0) * x[3]) - 2.0 * gp * x[4],
    ]
}

/// Open mean dynamics of the dimerization network; `v` is the monomer variance.
pub fn dimer_rhs(x: DimerState, k1: f64, v: f64, p: &DimerParams) -> DimerState {
    let b = p.b;
    [
        k1 + (b - p.gamma1) * x[0] - b * x[0] * x[0] - b * v,
        -0.5 * b * x[0] - p.gamma2 * x[1] + 0.5 * b * x[0] * x[0] + 0.5 * b * v,
    ]
}

/// `min(Ts/10, 0.01 / fastest rate)`.
pub fn default_dt(ts: Option<f64>, fastest_rate: f64) -> f64 {
    let dyn_dt = 0.01 / fastest_rate;
    ts.map_or(dyn_dt, |ts| dyn_dt.min(ts / 10.0))
}
