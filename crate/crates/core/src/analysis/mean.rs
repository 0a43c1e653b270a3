//! Mean control of the gene-expression network with a positive PI law.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, on_boundary, strictly_greater, StabilityVerdict, Verdict};
use crate::control::PIGains;
use crate::error::{ensure_nonnegative, ensure_positive, invalid, Error, Result};
use crate::linalg::{bisect, eigenvalues, hermitian_part_min_eig, log_grid, spectral_abscissa};
use crate::moments::GeneParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEquilibrium {
    pub x1: f64,
    pub x2: f64,
    pub u: f64,
    pub integrator: f64,
    /// False when a saturation level is given and `u* > ū`.
    pub feasible: bool,
}

/// Equilibrium `x1* = μ γ_p / k_p`, `u* = γ_r x1*`, `I* = u* / k2`.
pub fn mean_equilibrium(mu: f64, p: &GeneParams, k2: f64, ubar: Option<f64>) -> Result<MeanEquilibrium> {
    ensure_nonnegative("mu", mu)?;
    if k2 == 0.0 || !k2.is_finite() {
        return Err(invalid("k2", "integral gain must be nonzero for the integrator equilibrium"));
    }
    let x1 = mu * p.gamma_p / p.k_p;
    let u = p.gamma_r * x1;
    Ok(MeanEquilibrium { x1, x2: mu, u, integrator: u / k2, feasible: ubar.is_none_or(|ub| u <= ub) })
}

/// Linearized closed loop in the state `(x1, x2, I)`.
pub fn pi_loop_matrix(g: &PIGains, p: &GeneParams) -> DMatrix<f64> {
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(3, 3, &[
        -p.gamma_r, -g.k1, g.k2,
        p.k_p, -p.gamma_p, 0.0,
        0.0, -1.0, 0.0,
    ]);
    m
}

/// Lower bound on `k1` for local stability.
pub fn local_k1_threshold(k2: f64, p: &GeneParams) -> f64 {
    k2 / (p.gamma_p + p.gamma_r) - p.gamma_p * p.gamma_r / p.k_p
}

fn threshold_verdict(g: &PIGains, threshold: f64) -> StabilityVerdict {
    let slack_k1 = g.k1 - threshold;
    let stable = strictly_greater(g.k2, 0.0) && strictly_greater(g.k1, threshold);
    StabilityVerdict::new(Verdict::from_bool(stable), slack_k1.min(g.k2))
        .with("k1_threshold", num(threshold))
        .with("binding", if g.k2 <= slack_k1 { "k2 > 0" } else { "k1 > threshold" })
}

/// Local exponential stability of the PI mean loop (necessary and sufficient).
pub fn local_pi_test(g: &PIGains, p: &GeneParams) -> StabilityVerdict {
    let v = threshold_verdict(g, local_k1_threshold(g.k2, p));
    let abscissa = spectral_abscissa(&pi_loop_matrix(g, p));
    v.with("max_real_eig", num(abscissa))
}

/// Parameter box `(0, k_p⁺] × [γ_p⁻, ∞) × [γ_r⁻, ∞)`, optionally with the
/// opposite bounds used by the robust disturbance interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBoxMu {
    pub kp_max: f64,
    pub gp_min: f64,
    pub gr_min: f64,
    #[serde(default)]
    pub kp_min: Option<f64>,
    #[serde(default)]
    pub gp_max: Option<f64>,
    #[serde(default)]
    pub gr_max: Option<f64>,
}

impl ParamBoxMu {
    pub fn new(kp_max: f64, gp_min: f64, gr_min: f64) -> Result<Self> {
        let b = Self { kp_max, gp_min, gr_min, kp_min: None, gp_max: None, gr_max: None };
        b.validate()?;
        Ok(b)
    }

    pub fn point(p: &GeneParams) -> Self {
        Self {
            kp_max: p.k_p,
            gp_min: p.gamma_p,
            gr_min: p.gamma_r,
            kp_min: Some(p.k_p),
            gp_max: Some(p.gamma_p),
            gr_max: Some(p.gamma_r),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("kp_max", self.kp_max)?;
        ensure_positive("gp_min", self.gp_min)?;
        ensure_positive("gr_min", self.gr_min)?;
        let pairs = [
            ("kp_min", self.kp_min, self.kp_max, true),
            ("gp_max", self.gp_max, self.gp_min, false),
            ("gr_max", self.gr_max, self.gr_min, false),
        ];
        for (name, other, bound, other_is_lower) in pairs {
            if let Some(v) = other {
                ensure_positive(name, v)?;
                if (other_is_lower && v > bound) || (!other_is_lower && v < bound) {
                    return Err(invalid(name, "lower bound exceeds upper bound"));
                }
            }
        }
        Ok(())
    }

    /// Worst-case corner for local stability.
    pub fn worst_case(&self) -> GeneParams {
        GeneParams { k_p: self.kp_max, gamma_p: self.gp_min, gamma_r: self.gr_min }
    }
}

/// Robust local stability over the box: the nominal test at the worst corner.
pub fn robust_pi_test(g: &PIGains, b: &ParamBoxMu) -> StabilityVerdict {
    threshold_verdict(g, local_k1_threshold(g.k2, &b.worst_case()))
}

/// Coefficients `(z0, z1)` of `Z(w) = w² + z1 w + z0`, `w = ω²`.
pub fn popov_coefficients(g: &PIGains, p: &GeneParams, q: f64) -> (f64, f64) {
    let (kp, gp, gr) = (p.k_p, p.gamma_p, p.gamma_r);
    let z0 = gr * gr * gp * gp + kp * (gr * (gp * g.k1 - g.k2 + gp * g.k2 * q) - gp * g.k2);
    let z1 = gp * gp + gr * gr + kp * ((g.k1 * (gp + gr) - g.k2) * q - g.k1);
    (z0, z1)
}

/// `N0(ω) + q N1(ω) + D(ω)`; positive for all ω iff the Popov inequality holds.
pub fn popov_frequency_value(g: &PIGains, p: &GeneParams, q: f64, omega: f64) -> f64 {
    let (kp, gp, gr) = (p.k_p, p.gamma_p, p.gamma_r);
    let w2 = omega * omega;
    let n0 = kp * (g.k1 * (gr * gp - w2) - g.k2 * (gr + gp));
    let n1 = kp * (g.k1 * w2 * (gr + gp) + g.k2 * (gp * gr - w2));
    let d = (w2 + gr * gr) * (w2 + gp * gp);
    n0 + q * n1 + d
}

/// Which statement of the Popov test certified stability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PopovBranch {
    /// `z0 > 0` and `z1 > 0`.
    A,
    /// `z0 > 0`, `z1 < 0` and `z1² − 4 z0 < 0`.
    B,
}

pub fn popov_branch(z0: f64, z1: f64) -> Option<PopovBranch> {
    if !strictly_greater(z0, 0.0) {
        None
    } else if strictly_greater(z1, 0.0) {
        Some(PopovBranch::A)
    } else if strictly_greater(0.0, z1) && strictly_greater(4.0 * z0, z1 * z1) {
        Some(PopovBranch::B)
    } else {
        None
    }
}

/// `min_{w ≥ 0} w² + z1 w + z0`.
fn popov_min(z0: f64, z1: f64) -> f64 {
    if z1 >= 0.0 {
        z0
    } else {
        z0 - 0.25 * z1 * z1
    }
}

/// The logarithmic grid `q ∈ [1e-4, 1e4]`, 400 points.
pub fn default_q_grid() -> Vec<f64> {
    log_grid(1e-4, 1e4, 400)
}

/// Open interval `{q > 0 : a + b q > 0}` as `(lo, hi)`.
fn positive_half_line(a: f64, b: f64) -> Option<(f64, f64)> {
    if b > 0.0 {
        Some(((-a / b).max(0.0), f64::INFINITY))
    } else if b < 0.0 {
        let hi = -a / b;
        (hi > 0.0).then_some((0.0, hi))
    } else {
        (a > 0.0).then_some((0.0, f64::INFINITY))
    }
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let (lo, hi) = (a.0.max(b.0), a.1.min(b.1));
    (lo < hi).then_some((lo, hi))
}

fn interior_point((lo, hi): (f64, f64)) -> f64 {
    if hi.is_infinite() {
        2.0 * lo + 1.0
    } else {
        0.5 * (lo + hi)
    }
}

/// Exact candidates for `q`: `z0` and `z1` are affine in `q`, so the sets
/// where each statement holds are intervals that can be solved for directly.
fn analytic_q_candidates(g: &PIGains, p: &GeneParams) -> Vec<f64> {
    let (a0, a1) = popov_coefficients(g, p, 0.0);
    let (c0, c1) = popov_coefficients(g, p, 1.0);
    let (b0, b1) = (c0 - a0, c1 - a1);
    let mut out = Vec::new();
    let z0_pos = positive_half_line(a0, b0);
    if let (Some(i0), Some(i1)) = (z0_pos, positive_half_line(a1, b1)) {
        if let Some(i) = intersect(i0, i1) {
            out.push(interior_point(i));
        }
    }
    // Branch (b): z1 < 0 and (a1 + b1 q)² − 4(a0 + b0 q) < 0.
    let z1_neg = positive_half_line(-a1, -b1);
    let (qa, qb, qc) = (b1 * b1, 2.0 * a1 * b1 - 4.0 * b0, a1 * a1 - 4.0 * a0);
    let disc_interval = if qa > 0.0 {
        let disc = qb * qb - 4.0 * qa * qc;
        (disc > 0.0).then(|| {
            let r = disc.sqrt();
            ((-qb - r) / (2.0 * qa), (-qb + r) / (2.0 * qa))
        })
    } else {
        positive_half_line(-qc, -qb)
    };
    if let (Some(i0), Some(i1), Some(i2)) = (z0_pos, z1_neg, disc_interval) {
        if let Some(i) = intersect(i0, i1).and_then(|i| intersect(i, (i2.0.max(0.0), i2.1))) {
            out.push(interior_point(i));
        }
    }
    out
}

/// `k1 > k2 / (γ_p + γ_r)` and `k2 > 0`.
pub fn popov_corollary(g: &PIGains, p: &GeneParams) -> bool {
    strictly_greater(g.k2, 0.0) && strictly_greater(g.k1, g.k2 / (p.gamma_p + p.gamma_r))
}

/// Corollary over the box `𝒫_μ`: uses `γ_p⁻ + γ_r⁻`.
pub fn popov_robust_corollary(g: &PIGains, b: &ParamBoxMu) -> bool {
    popov_corollary(g, &b.worst_case())
}

/// Global stability test of the PI mean loop with the ON/OFF nonlinearity.
///
/// Requires local stability and, with a saturation `(μ, ū)`, `u* ≤ ū`.
/// Searches `q_grid` first, then the exact feasible `q` intervals. A miss is
/// reported as unknown: the test is sufficient only.
pub fn popov_test(g: &PIGains, p: &GeneParams, q_grid: &[f64], saturation: Option<(f64, f64)>) -> StabilityVerdict {
    let local = local_pi_test(g, p);
    let corollary = popov_corollary(g, p);
    if !local.is_stable() {
        return StabilityVerdict::new(Verdict::Unstable, local.margin)
            .with("reason", "local stability conditions fail")
            .with("corollary", corollary);
    }
    if let Some((mu, ubar)) = saturation {
        let u_star = mu * p.gamma_p * p.gamma_r / p.k_p;
        if u_star > ubar {
            return StabilityVerdict::new(Verdict::Unstable, ubar - u_star)
                .with("reason", "equilibrium input exceeds the saturation level")
                .with("u_star", num(u_star));
        }
    }

    let mut best: Option<(f64, f64, f64, f64)> = None; // (min Z, q, z0, z1)
    let mut consider = |q: f64| {
        let (z0, z1) = popov_coefficients(g, p, q);
        let m = popov_min(z0, z1);
        if best.is_none_or(|b| m > b.0) {
            best = Some((m, q, z0, z1));
        }
        popov_branch(z0, z1).map(|br| (br, q, z0, z1, m))
    };
    let hit = q_grid
        .iter()
        .find_map(|&q| consider(q).map(|h| (h, "grid")))
        .or_else(|| analytic_q_candidates(g, p).into_iter().find_map(|q| consider(q).map(|h| (h, "exact"))));

    match hit {
        Some(((branch, q, z0, z1, m), source)) => StabilityVerdict::new(Verdict::Stable, m)
            .with("branch", json!(branch))
            .with("q", num(q))
            .with("z0", num(z0))
            .with("z1", num(z1))
            .with("q_source", source)
            .with("corollary", corollary),
        None => {
            let (m, q, z0, z1) = best.unwrap_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN));
            StabilityVerdict::new(Verdict::Unknown, m)
                .with("best_q", num(q))
                .with("z0", num(z0))
                .with("z1", num(z1))
                .with("corollary", corollary)
        }
    }
}

/// Linear moment system with diagonal PI control for the frequency test
/// `He[I + (I + jωN) Z G(jω) Z⁻¹] > 0`, `G(s) = (K1 + K2/s) C (sI − A)⁻¹ B`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopovSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl PopovSystem {
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let checks = [
            ("A", self.a.shape(), (n, n)),
            ("B", self.b.shape(), (n, m)),
            ("C", self.c.shape(), (m, n)),
            ("K1", self.k1.shape(), (m, m)),
            ("K2", self.k2.shape(), (m, m)),
            ("N", self.n.shape(), (m, m)),
            ("Z", self.z.shape(), (m, m)),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(Error::Config(format!("{what} has shape {got:?}, expected {expected:?}")));
            }
        }
        if self.z.clone().try_inverse().is_none() {
            return Err(invalid("Z", "scaling matrix must be invertible"));
        }
        let sym = (&self.n + self.n.transpose()) * 0.5;
        if (&sym - &self.n).amax() > 1e-12 || sym.symmetric_eigenvalues().min() < -1e-12 {
            return Err(invalid("N", "multiplier must be symmetric positive semidefinite"));
        }
        Ok(())
    }

    /// `G(jω)`, or `None` when `jωI − A` is numerically singular.
    pub fn transfer(&self, omega: f64) -> Option<DMatrix<Complex64>> {
        let n = self.a.nrows();
        let jw = Complex64::new(0.0, omega);
        let sa = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let d = if i == j { jw } else { Complex64::new(0.0, 0.0) };
            d - Complex64::new(self.a[(i, j)], 0.0)
        });
        let lu = sa.lu();
        let bc = self.b.map(|v| Complex64::new(v, 0.0));
        let x = lu.solve(&bc)?;
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return None;
        }
        let cc = self.c.map(|v| Complex64::new(v, 0.0));
        let k = self.k1.map(|v| Complex64::new(v, 0.0)) + self.k2.map(|v| Complex64::new(v, 0.0) / jw);
        Some(k * cc * x)
    }

    /// Smallest eigenvalue of the Hermitian part at frequency `ω`.
    pub fn popov_min_eig(&self, omega: f64) -> Option<f64> {
        let m = self.b.ncols();
        let g = self.transfer(omega)?;
        let z = self.z.map(|v| Complex64::new(v, 0.0));
        let zi = z.clone().try_inverse()?;
        let eye = DMatrix::<Complex64>::identity(m, m);
        let jn = self.n.map(|v| Complex64::new(0.0, omega * v));
        let h = &eye + (&eye + jn) * z * g * zi;
        Some(hermitian_part_min_eig(&h))
    }
}

/// Grid check of the multivariable Popov inequality. Certification on a grid
/// is not a proof; failure is reported as unknown since the test is sufficient.
pub fn general_popov_sweep(sys: &PopovSystem, omega_grid: &[f64], tol: f64) -> Result<StabilityVerdict> {
    sys.validate()?;
    let mut worst = f64::INFINITY;
    let mut worst_omega = f64::NAN;
    let mut skipped = Vec::new();
    for &w in omega_grid {
        match sys.popov_min_eig(w) {
            Some(v) if v < worst => {
                worst = v;
                worst_omega = w;
            }
            Some(_) => {}
            None => skipped.push(w),
        }
    }
    let verdict = if worst > tol { Verdict::Stable } else { Verdict::Unknown };
    let mut out = StabilityVerdict::new(verdict, worst)
        .with("critical_omega", num(worst_omega))
        .with("grid_points", omega_grid.len())
        .with("skipped", skipped.len());
    if !skipped.is_empty() {
        out = out.with("warning", format!("skipped {} near-singular frequencies", skipped.len()));
    }
    Ok(out)
}

/// The scalar mean loop written as a [`PopovSystem`] with multiplier `q`.
pub fn scalar_popov_system(g: &PIGains, p: &GeneParams, q: f64) -> PopovSystem {
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    PopovSystem {
        a: DMatrix::from_row_slice(2, 2, &[-p.gamma_r, 0.0, p.k_p, -p.gamma_p]),
        b: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        c: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        k1: one(g.k1),
        k2: one(g.k2),
        n: one(q),
        z: one(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn disturbance_interval(upper: f64, lower_base: f64, ubar: Option<f64>) -> Result<Interval> {
    let lo = match ubar {
        Some(ub) if !(ub > 0.0) => return Err(Error::EmptyInterval { lo: lower_base - ub, hi: upper }),
        Some(ub) => lower_base - ub,
        None => f64::NEG_INFINITY,
    };
    if lo > upper {
        return Err(Error::EmptyInterval { lo, hi: upper });
    }
    Ok(Interval { lo, hi: upper })
}

/// Constant input disturbances rejected by the PI mean loop:
/// `[γ_p γ_r μ / k_p − ū, γ_p γ_r μ / k_p]`.
pub fn disturbance_bounds(mu: f64, p: &GeneParams, ubar: Option<f64>) -> Result<Interval> {
    ensure_positive("mu", mu)?;
    let u = p.gamma_p * p.gamma_r * mu / p.k_p;
    disturbance_interval(u, u, ubar)
}

/// Robust interval `[γ_p⁺ γ_r⁺ μ / k_p⁻ − ū, γ_p⁻ γ_r⁻ μ / k_p⁺]`.
pub fn robust_disturbance_bounds(mu: f64, b: &ParamBoxMu, ubar: Option<f64>) -> Result<Interval> {
    ensure_positive("mu", mu)?;
    b.validate()?;
    let hi = b.gp_min * b.gr_min * mu / b.kp_max;
    let base = match (b.gp_max, b.gr_max, b.kp_min) {
        (Some(gp), Some(gr), Some(kp)) => gp * gr * mu / kp,
        _ if ubar.is_none() => f64::NEG_INFINITY,
        _ => return Err(Error::Config("robust lower bound needs gp_max, gr_max and kp_min".into())),
    };
    disturbance_interval(hi, base, ubar)
}

/// `u*_δ = γ_p γ_r μ / k_p − δ`.
pub fn disturbed_equilibrium_input(mu: f64, p: &GeneParams, delta: f64) -> f64 {
    p.gamma_p * p.gamma_r * mu / p.k_p - delta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayMargin {
    pub omega_c: f64,
    pub h_c: f64,
    /// Phase `ω_c h_c` in `(0, 2π]`.
    pub phase: f64,
    pub stable_without_delay: bool,
}

/// `P(s) + e^{−sh} Q(s)` with `P(s) = s(s+γ_r)(s+γ_p)`, `Q(s) = k_p(k1 s + k2)`.
pub fn delay_characteristic(g: &PIGains, p: &GeneParams, s: Complex64, h: f64) -> Complex64 {
    let ps = s * (s + p.gamma_r) * (s + p.gamma_p);
    let qs = p.k_p * (g.k1 * s + g.k2);
    ps + (-s * h).exp() * qs
}

/// Crossing frequency and largest delay preserving stability.
///
/// `ω_c² ` is the unique positive root of
/// `w³ + (γ_p² + γ_r²) w² + (γ_r² γ_p² − k_p² k1²) w − k_p² k2²`, and
/// `h_c = θ / ω_c` with `θ ∈ (0, 2π]` solving `e^{−jθ} = −P(jω_c)/Q(jω_c)`.
pub fn delay_margin(g: &PIGains, p: &GeneParams) -> Result<DelayMargin> {
    if g.k2 == 0.0 {
        return Err(invalid("k2", "the crossing frequency needs k2 != 0"));
    }
    let (kp, gp, gr) = (p.k_p, p.gamma_p, p.gamma_r);
    let c2 = gp * gp + gr * gr;
    let c1 = gr * gr * gp * gp - kp * kp * g.k1 * g.k1;
    let c0 = kp * kp * g.k2 * g.k2;
    let phi = |w: f64| ((w + c2) * w + c1) * w - c0;
    let mut hi = 1.0;
    while phi(hi) <= 0.0 {
        hi *= 2.0;
    }
    let wbar = bisect(phi, 0.0, hi).expect("sign change bracketed");
    let omega_c = wbar.sqrt();
    let jw = Complex64::new(0.0, omega_c);
    let ratio = -(jw * (jw + gr) * (jw + gp)) / (kp * (g.k1 * jw + g.k2));
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut theta = (-ratio.arg()).rem_euclid(two_pi);
    if theta <= 0.0 {
        theta += two_pi;
    }
    Ok(DelayMargin {
        omega_c,
        h_c: theta / omega_c,
        phase: theta,
        stable_without_delay: local_pi_test(g, p).is_stable(),
    })
}

/// `C_ν = √(1 + k_p/(γ_p + γ_r)) / √μ`.
pub fn coefficient_of_variation(mu: f64, p: &GeneParams) -> Result<f64> {
    ensure_positive("mu", mu)?;
    Ok((1.0 + p.k_p / (p.gamma_p + p.gamma_r)).sqrt() / mu.sqrt())
}

/// Eigenvalues of the linearized PI loop, as `[re, im]` pairs.
pub fn pi_loop_eigenvalues(g: &PIGains, p: &GeneParams) -> Vec<[f64; 2]> {
    eigenvalues(&pi_loop_matrix(g, p)).iter().map(|z| [z.re, z.im]).collect()
}

/// True when `(g, p)` lies within the boundary tolerance of the local test.
pub fn near_local_boundary(g: &PIGains, p: &GeneParams) -> bool {
    on_boundary(g.k1, local_k1_threshold(g.k2, p)) || on_boundary(g.k2, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> GeneParams {
        GeneParams::new(1.0, 1.0, 1.0).unwrap()
    }

    fn reference_gene() -> GeneParams {
        GeneParams::new(0.06, 0.0066, 0.03).unwrap()
    }

    #[test]
    fn mean_equilibrium_examples() {
        let e = mean_equilibrium(10.0, &reference_gene(), 0.0007, None).unwrap();
        assert!((e.x1 - 1.1).abs() < 1e-12);
        assert!((e.u - 0.033).abs() < 1e-12);
        assert!((e.integrator - 47.142857142857).abs() < 1e-9);
        let z = mean_equilibrium(0.0, &reference_gene(), 0.0007, None).unwrap();
        assert_eq!((z.x1, z.u, z.integrator), (0.0, 0.0, 0.0));
        let d = mean_equilibrium(20.0, &reference_gene(), 0.0007, None).unwrap();
        assert!((d.x1 - 2.0 * e.x1).abs() < 1e-12 && (d.integrator - 2.0 * e.integrator).abs() < 1e-9);
        assert!(mean_equilibrium(10.0, &reference_gene(), 0.0, None).is_err());
        assert!(!mean_equilibrium(10.0, &reference_gene(), 0.0007, Some(0.01)).unwrap().feasible);
    }

    #[test]
    fn local_pi_examples() {
        let p = unit();
        assert_eq!(local_pi_test(&PIGains::new(5.0, 0.0).unwrap(), &p).verdict, Verdict::Unstable);
        let s = local_pi_test(&PIGains::new(0.0, 1.0).unwrap(), &p);
        assert!(s.is_stable());
        assert!(spectral_abscissa(&pi_loop_matrix(&PIGains::new(0.0, 1.0).unwrap(), &p)) < 0.0);
        let u = local_pi_test(&PIGains::new(-0.6, 1.0).unwrap(), &p);
        assert_eq!(u.verdict, Verdict::Unstable);
        assert!(spectral_abscissa(&pi_loop_matrix(&PIGains::new(-0.6, 1.0).unwrap(), &p)) > 0.0);
    }

    #[test]
    fn characteristic_polynomial_of_unit_loop() {
        // λ³ + 2λ² + λ + 1 for k1 = 0, k2 = 1 and unit parameters.
        for [re, im] in pi_loop_eigenvalues(&PIGains::new(0.0, 1.0).unwrap(), &unit()) {
            let l = Complex64::new(re, im);
            assert!((l * l * l + 2.0 * l * l + l + 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn robust_pi_examples() {
        let g = PIGains::new(0.0, 1.0).unwrap();
        let b = ParamBoxMu::new(1.0, 1.0, 1.0).unwrap();
        assert!(robust_pi_test(&g, &b).is_stable());
        let pt = ParamBoxMu::point(&reference_gene());
        let g2 = PIGains::new(0.01, 0.0007).unwrap();
        assert_eq!(robust_pi_test(&g2, &pt).verdict, local_pi_test(&g2, &reference_gene()).verdict);
        let wide = ParamBoxMu::new(10.0, 1.0, 1.0).unwrap();
        let at_boundary = PIGains::new(local_k1_threshold(1.0, &unit()) + 1e-3, 1.0).unwrap();
        assert!(robust_pi_test(&at_boundary, &b).is_stable());
        assert_eq!(robust_pi_test(&at_boundary, &wide).verdict, Verdict::Unstable);
    }

    #[test]
    fn popov_corollary_fires() {
        let g = PIGains::new(0.6, 1.0).unwrap();
        assert!(popov_corollary(&g, &unit()));
        let v = popov_test(&g, &unit(), &default_q_grid(), None);
        assert!(v.is_stable(), "{v:?}");
        let q = v.witness["q"].as_f64().unwrap();
        for w in log_grid(1e-3, 1e3, 2000) {
            assert!(popov_frequency_value(&g, &unit(), q, w) > 0.0);
        }
    }

    #[test]
    fn popov_frequency_value_matches_polynomial() {
        let g = PIGains::new(0.3, 0.7).unwrap();
        let p = GeneParams::new(2.0, 0.5, 1.5).unwrap();
        let q = 0.8;
        let (z0, z1) = popov_coefficients(&g, &p, q);
        for w in [0.0, 0.3, 1.0, 4.0] {
            let wb = w * w;
            assert!((popov_frequency_value(&g, &p, q, w) - (wb * wb + z1 * wb + z0)).abs() < 1e-12);
        }
    }

    #[test]
    fn popov_branch_b_found_by_scan() {
        let grid = default_q_grid();
        let mut found = false;
        'outer: for i in 1..60 {
            for j in 1..60 {
                let g = PIGains::new(0.05 * i as f64 - 0.5, 0.05 * j as f64).unwrap();
                let v = popov_test(&g, &unit(), &grid, None);
                if v.is_stable() && v.witness["branch"] == json!("b") {
                    let q = v.witness["q"].as_f64().unwrap();
                    for w in log_grid(1e-3, 1e3, 2000) {
                        assert!(popov_frequency_value(&g, &unit(), q, w) > 0.0);
                    }
                    found = true;
                    break 'outer;
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn popov_respects_saturation() {
        let g = PIGains::new(1.0, 0.5).unwrap();
        let v = popov_test(&g, &unit(), &default_q_grid(), Some((10.0, 1.0)));
        assert_eq!(v.verdict, Verdict::Unstable);
    }

    #[test]
    fn scalar_general_sweep_agrees_with_popov_test() {
        let g = PIGains::new(0.6, 1.0).unwrap();
        let v = popov_test(&g, &unit(), &default_q_grid(), None);
        let q = v.witness["q"].as_f64().unwrap();
        let sys = scalar_popov_system(&g, &unit(), q);
        let grid = log_grid(1e-3, 1e3, 500);
        let s = general_popov_sweep(&sys, &grid, 1e-12).unwrap();
        assert!(s.is_stable());
        for &w in &grid[..50] {
            let direct = popov_frequency_value(&g, &unit(), q, w) / ((w * w + 1.0) * (w * w + 1.0));
            assert!((sys.popov_min_eig(w).unwrap() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gain_sweep_is_identity() {
        let mut sys = scalar_popov_system(&PIGains::new(0.0, 0.0).unwrap(), &unit(), 0.0);
        sys.k2[(0, 0)] = 0.0;
        let s = general_popov_sweep(&sys, &log_grid(1e-3, 1e3, 100), 1e-12).unwrap();
        assert!(s.is_stable());
        assert!((s.margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disturbance_examples() {
        let i = disturbance_bounds(1.0, &unit(), Some(2.0)).unwrap();
        assert_eq!((i.lo, i.hi), (-1.0, 1.0));
        assert_eq!(disturbed_equilibrium_input(1.0, &unit(), i.hi), 0.0);
        let r = robust_disturbance_bounds(1.0, &ParamBoxMu::point(&unit()), Some(2.0)).unwrap();
        assert_eq!(r, i);
        assert!(disturbance_bounds(1.0, &unit(), Some(0.0)).is_err());
    }

    #[test]
    fn delay_margin_residuals() {
        let g = PIGains::new(0.5, 0.25).unwrap();
        let p = unit();
        let dm = delay_margin(&g, &p).unwrap();
        assert!(dm.phase > 0.0 && dm.phase <= 2.0 * std::f64::consts::PI);
        let jw = Complex64::new(0.0, dm.omega_c);
        let pm = (jw * (jw + 1.0) * (jw + 1.0)).norm();
        let qm = (p.k_p * (g.k1 * jw + g.k2)).norm();
        assert!((pm - qm).abs() < 1e-9);
        assert!(delay_characteristic(&g, &p, jw, dm.h_c).norm() < 1e-8);
    }

    #[test]
    fn coefficient_of_variation_examples() {
        assert!((coefficient_of_variation(4.0, &unit()).unwrap() - 0.5 * 1.5f64.sqrt()).abs() < 1e-15);
        let poisson = GeneParams { k_p: 1e-300, gamma_p: 1.0, gamma_r: 1.0 };
        assert!((coefficient_of_variation(9.0, &poisson).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }
}
