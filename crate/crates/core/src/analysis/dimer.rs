//! Integral control of the dimerization network through the monomer production rate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{num, on_boundary, strictly_greater, StabilityVerdict, Verdict};
use crate::error::{ensure_nonnegative, ensure_positive, invalid, Result};
use crate::linalg::spectral_abscissa;
use crate::moments::DimerParams;

/// Largest integral gain for which every admissible equilibrium is locally
/// exponentially stable: `2γ2(2γ1 + γ2 + 2√(γ1(γ1 + γ2)))`.
pub fn dimer_kc_bound(gamma1: f64, gamma2: f64) -> f64 {
    2.0 * gamma2 * (2.0 * gamma1 + gamma2 + 2.0 * (gamma1 * (gamma1 + gamma2)).sqrt())
}

/// Gain bound at `√Δ = ζ`: `2γ2(γ1 + γ2 + bζ)(γ1 + bζ)/(bζ)`.
pub fn kc_bound_at(zeta: f64, p: &DimerParams) -> f64 {
    let bz = p.b * zeta;
    2.0 * p.gamma2 * (p.gamma1 + p.gamma2 + bz) * (p.gamma1 + bz) / bz
}

/// Minimizer of [`kc_bound_at`] over `ζ > 0`.
pub fn kc_bound_minimizer(p: &DimerParams) -> f64 {
    (p.gamma1 * (p.gamma1 + p.gamma2)).sqrt() / p.b
}

/// Upper limit on the stationary monomer variance for real equilibria: `2γ2μ/b + 1/4`.
pub fn dimer_variance_bound(mu: f64, gamma2: f64, b: f64) -> f64 {
    2.0 * gamma2 * mu / b + 0.25
}

/// `Δ = 1 + 4(2γ2μ/b − v*)`.
pub fn discriminant(mu: f64, v: f64, p: &DimerParams) -> f64 {
    1.0 + 4.0 * (2.0 * p.gamma2 * mu / p.b - v)
}

/// Linearization of `(x1, x2, I)` at monomer level `x1*` with `k1 = kc I`.
pub fn dimer_linearization(x1: f64, kc: f64, p: &DimerParams) -> DMatrix<f64> {
    let b = p.b;
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(3, 3, &[
        b - p.gamma1 - 2.0 * b * x1, 0.0, kc,
        -0.5 * b + b * x1, -p.gamma2, 0.0,
        0.0, -1.0, 0.0,
    ]);
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimerEquilibrium {
    /// 1: `v* < 2γ2μ/b`, 2: equality, 3: above.
    pub case_id: u8,
    pub x1: f64,
    pub x2: f64,
    pub integrator: f64,
    pub discriminant: f64,
    pub v_star: f64,
    /// Gains `0 < kc < stable_bound` stabilize this point; `None` when it is
    /// unstable for every gain.
    pub stable_bound: Option<f64>,
    /// Local stability at the gain that was passed in.
    pub stable: bool,
}

/// Real equilibria of the integral dimer loop for an assumed stationary
/// monomer variance `v*`. Empty when `v*` exceeds [`dimer_variance_bound`].
pub fn dimer_equilibria(mu: f64, v: f64, p: &DimerParams, kc: f64) -> Result<Vec<DimerEquilibrium>> {
    ensure_positive("mu", mu)?;
    ensure_nonnegative("v", v)?;
    if !(kc > 0.0) || !kc.is_finite() {
        return Err(invalid("kc", "integral gain must be positive"));
    }
    let threshold = 2.0 * p.gamma2 * mu / p.b;
    let limit = threshold + 0.25;
    let delta = discriminant(mu, v, p);
    let point = |case_id: u8, x1: f64, bound: Option<f64>| DimerEquilibrium {
        case_id,
        x1,
        x2: mu,
        integrator: (p.gamma1 * x1 + 2.0 * p.gamma2 * mu) / kc,
        discriminant: delta,
        v_star: v,
        stable_bound: bound,
        stable: bound.is_some_and(|kb| strictly_greater(kb, kc)),
    };

    if on_boundary(v, threshold) {
        return Ok(vec![point(2, 0.0, None), point(2, 1.0, Some(kc_bound_at(1.0, p)))]);
    }
    if v < threshold {
        let r = delta.sqrt();
        return Ok(vec![point(1, 0.5 * (1.0 + r), Some(kc_bound_at(r, p)))]);
    }
    if on_boundary(v, limit) {
        // Double root: the linearization has a zero eigenvalue.
        return Ok(vec![point(3, 0.5, None)]);
    }
    if v > limit {
        return Ok(Vec::new());
    }
    let r = delta.sqrt();
    Ok(vec![point(3, 0.5 * (1.0 - r), None), point(3, 0.5 * (1.0 + r), Some(kc_bound_at(r, p)))])
}

/// Verdict on whether `kc` stabilizes some equilibrium for the given `v*`.
pub fn dimer_equilibria_test(mu: f64, v: f64, p: &DimerParams, kc: f64) -> Result<StabilityVerdict> {
    let eqs = dimer_equilibria(mu, v, p, kc)?;
    let best = eqs.iter().filter_map(|e| e.stable_bound.map(|b| (b, e))).max_by(|a, b| a.0.total_cmp(&b.0));
    let (verdict, margin) = match best {
        Some((bound, e)) => (Verdict::from_bool(e.stable), bound - kc),
        None => (Verdict::Unstable, f64::NAN),
    };
    let margin = if margin.is_nan() { -kc } else { margin };
    Ok(StabilityVerdict::new(verdict, margin)
        .with("equilibria", serde_json::to_value(&eqs).unwrap_or_default())
        .with("variance_bound", num(dimer_variance_bound(mu, p.gamma2, p.b))))
}

/// Uniform gain test: `0 < kc < dimer_kc_bound(γ1, γ2)`.
pub fn dimer_kc_test(kc: f64, p: &DimerParams) -> StabilityVerdict {
    let bound = dimer_kc_bound(p.gamma1, p.gamma2);
    let stable = strictly_greater(kc, 0.0) && strictly_greater(bound, kc);
    StabilityVerdict::new(Verdict::from_bool(stable), (bound - kc).min(kc))
        .with("kc_bound", num(bound))
        .with("minimizer", num(kc_bound_minimizer(p)))
}

/// Parameter box `[γ1⁻, γ1⁺] × [γ2⁻, γ2⁺] × [b⁻, b⁺]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimerBox {
    pub gamma1: [f64; 2],
    pub gamma2: [f64; 2],
    pub b: [f64; 2],
}

impl DimerBox {
    pub fn new(gamma1: [f64; 2], gamma2: [f64; 2], b: [f64; 2]) -> Result<Self> {
        for (name, [lo, hi]) in [("gamma1", gamma1), ("gamma2", gamma2), ("b", b)] {
            ensure_positive(name, lo)?;
            if hi < lo {
                return Err(invalid(name, "lower bound exceeds upper bound"));
            }
        }
        Ok(Self { gamma1, gamma2, b })
    }

    pub fn point(p: &DimerParams) -> Self {
        Self { gamma1: [p.gamma1; 2], gamma2: [p.gamma2; 2], b: [p.b; 2] }
    }

    pub fn corners(&self) -> impl Iterator<Item = DimerParams> + '_ {
        (0..8).map(move |m| DimerParams {
            gamma1: self.gamma1[m & 1],
            gamma2: self.gamma2[(m >> 1) & 1],
            b: self.b[(m >> 2) & 1],
        })
    }
}

/// Gain bound valid over the whole box; the nominal bound increases in both rates.
pub fn robust_dimer_kc_bound(b: &DimerBox) -> f64 {
    dimer_kc_bound(b.gamma1[0], b.gamma2[0])
}

/// Variance bound valid over the box: `2γ2⁺μ/b⁻ + 1/4`.
pub fn robust_dimer_variance_bound(mu: f64, b: &DimerBox) -> f64 {
    dimer_variance_bound(mu, b.gamma2[1], b.b[0])
}

/// Eigenvalue oracle for a single equilibrium.
pub fn dimer_equilibrium_abscissa(e: &DimerEquilibrium, kc: f64, p: &DimerParams) -> f64 {
    spectral_abscissa(&dimer_linearization(e.x1, kc, p))
}
