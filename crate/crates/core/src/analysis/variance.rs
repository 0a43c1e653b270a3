//! Joint mean and variance control of the protein through transcription (`u1`)
//! and mRNA degradation (`u2`).

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use super::{num, strictly_greater, StabilityVerdict, Verdict};
use crate::control::MultiPIGains;
use crate::error::{ensure_nonnegative, ensure_positive, invalid, Error, Result};
use crate::linalg::{eigenvalues, spectral_abscissa};
use crate::moments::{GeneParams, MomentState5, NormalizedParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub mean: f64,
    pub variance: f64,
}

impl ReferencePair {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        ensure_positive("mu", mean)?;
        ensure_positive("sigma2", variance)?;
        Ok(Self { mean, variance })
    }

    /// `μ − σ²`, negative on the admissible set.
    pub fn delta(&self) -> f64 {
        self.mean - self.variance
    }
}

/// Open interval of achievable variances `(μ, μ(1 + k_p/γ_p))`.
pub fn variance_bounds(mean: f64, k_p: f64, gamma_p: f64) -> (f64, f64) {
    (mean, mean * (1.0 + k_p / gamma_p))
}

/// Membership in the admissible set, strict inequalities with the boundary tolerance.
pub fn admissible(r: &ReferencePair, k_p: f64, gamma_p: f64) -> bool {
    let (lo, hi) = variance_bounds(r.mean, k_p, gamma_p);
    strictly_greater(r.variance, lo) && strictly_greater(hi, r.variance)
}

fn check_admissible(r: &ReferencePair, k_p: f64, gamma_p: f64) -> Result<()> {
    let (lo, hi) = variance_bounds(r.mean, k_p, gamma_p);
    if !strictly_greater(r.variance, lo) {
        return Err(Error::Inadmissible { mu: r.mean, sigma2: r.variance, bound: "sigma2 > mu (Poisson floor)" });
    }
    if !strictly_greater(hi, r.variance) {
        return Err(Error::Inadmissible {
            mu: r.mean,
            sigma2: r.variance,
            bound: "sigma2 < mu (1 + kp/gp) (positive degradation input)",
        });
    }
    Ok(())
}

/// `(u1*, u2*)` with `u2* = −γ_p + k_p μ/(σ² − μ)` and `u1* = (γ_p μ/k_p) u2*`.
/// Defined for any `σ² ≠ μ`; both are positive exactly on the admissible set.
pub fn equilibrium_inputs(r: &ReferencePair, p: &GeneParams) -> (f64, f64) {
    let u2 = -p.gamma_p + p.k_p * r.mean / (r.variance - r.mean);
    (p.gamma_p * r.mean / p.k_p * u2, u2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEquilibrium {
    pub x: MomentState5,
    pub u1: f64,
    pub u2: f64,
    pub i1: f64,
    pub i2: f64,
}

/// Equilibrium of the 5-state moment loop under the 8-gain PI law.
pub fn variance_equilibrium(r: &ReferencePair, p: &GeneParams, g: &MultiPIGains) -> Result<VarianceEquilibrium> {
    check_admissible(r, p.k_p, p.gamma_p)?;
    let det = g.integral_det();
    if det == 0.0 {
        return Err(Error::SingularGains);
    }
    let (u1, u2) = equilibrium_inputs(r, p);
    let x1 = p.gamma_p * r.mean / p.k_p;
    let x4 = p.k_p * x1 / (p.gamma_p + u2);
    let x = [x1, r.mean, x1, x4, r.variance];
    let k = g.as_array();
    let i1 = (k[7] * u1 - k[3] * u2) / det;
    let i2 = (-k[5] * u1 + k[1] * u2) / det;
    Ok(VarianceEquilibrium { x, u1, u2, i1, i2 })
}

/// Linearization of the closed loop in `(x1, …, x5, I1, I2)` at the equilibrium.
pub fn variance_jacobian(r: &ReferencePair, p: &GeneParams, g: &MultiPIGains) -> Result<DMatrix<f64>> {
    let d = r.delta();
    if d == 0.0 {
        return Err(invalid("sigma2", "mu - sigma2 must be nonzero"));
    }
    let (kp, gp, mu) = (p.k_p, p.gamma_p, r.mean);
    let k = |i: usize| g.get(i);
    let a = kp * mu / d;
    let c = gp * mu / kp;
    let e = gp * d / kp;
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(7, 7, &[
        gp + a,        -k(1) + k(5) * c, 0.0,            0.0,     -k(3) + k(7) * c, k(2) - k(6) * c, k(4) - k(8) * c,
        kp,            -gp,              0.0,            0.0,     0.0,              0.0,             0.0,
        -gp - a,       -k(1) + k(5) * c, 2.0 * (gp + a), 0.0,     -k(3) + k(7) * c, k(2) - k(6) * c, k(4) - k(8) * c,
        0.0,           -k(5) * e,        kp,             a,       -k(7) * e,        k(6) * e,        k(8) * e,
        kp,            gp,               0.0,            2.0 * kp, -2.0 * gp,       0.0,             0.0,
        0.0,           -1.0,             0.0,            0.0,     0.0,              0.0,             0.0,
        0.0,           0.0,              0.0,            0.0,     -1.0,             0.0,             0.0,
    ]);
    Ok(m)
}

/// `4 γ_p k_p (k2 k8 − k4 k6)(μ(k_p + γ_p) − γ_p σ²)`.
pub fn variance_jacobian_det(r: &ReferencePair, p: &GeneParams, g: &MultiPIGains) -> f64 {
    4.0 * p.gamma_p * p.k_p * g.integral_det() * (r.mean * (p.k_p + p.gamma_p) - p.gamma_p * r.variance)
}

/// Local stability of the variance loop from the eigenvalues of the Jacobian.
pub fn variance_loop_test(r: &ReferencePair, p: &GeneParams, g: &MultiPIGains) -> Result<StabilityVerdict> {
    check_admissible(r, p.k_p, p.gamma_p)?;
    let j = variance_jacobian(r, p, g)?;
    let abscissa = spectral_abscissa(&j);
    let eig: Vec<[f64; 2]> = eigenvalues(&j).iter().map(|z| [z.re, z.im]).collect();
    Ok(StabilityVerdict::new(Verdict::from_bool(abscissa < 0.0), -abscissa)
        .with("max_real_eig", num(abscissa))
        .with("eigenvalues", serde_json::to_value(eig).unwrap_or_default())
        .with("determinant", num(variance_jacobian_det(r, p, g))))
}

/// `ψ = δ / (γ_p δ + k_p μ)`.
fn psi(r: &ReferencePair, p: &GeneParams) -> f64 {
    let d = r.delta();
    d / (p.gamma_p * d + p.k_p * r.mean)
}

/// First-order shift of the two critical eigenvalues under gains `k2 = d2 ε`,
/// `k8 = d8 ε` (all other gains zero).
pub fn perturbation_matrix(d2: f64, d8: f64, r: &ReferencePair, p: &GeneParams) -> Matrix2<f64> {
    let (kp, gp, mu, s2) = (p.k_p, p.gamma_p, r.mean, r.variance);
    let d = r.delta();
    let m =
        Matrix2::new(kp * d2 / gp, -d8 * mu, kp * s2 * d2 / (gp * mu), d8 * (gp * d * d / (kp * mu) + mu - 2.0 * s2));
    m * psi(r, p)
}

/// Hurwitz test of [`perturbation_matrix`] through its two Routh conditions:
/// `d2 d8 ψ δ²/(γ_p μ) > 0` and `d2 > d8 (2 − γ_p δ²/(k_p μ σ²))`.
pub fn perturbation_test(d2: f64, d8: f64, r: &ReferencePair, p: &GeneParams) -> StabilityVerdict {
    let (kp, gp, mu, s2) = (p.k_p, p.gamma_p, r.mean, r.variance);
    let d = r.delta();
    let det = d2 * d8 * psi(r, p) * d * d / (gp * mu);
    let rhs = d8 * (2.0 - gp * d * d / (kp * mu * s2));
    let first = strictly_greater(det, 0.0);
    let second = strictly_greater(d2, rhs);
    let verdict = Verdict::from_bool(first && second);
    let margin = det.min(d2 - rhs);
    let mut v = StabilityVerdict::new(verdict, margin).with("determinant", num(det)).with("trace_slack", num(d2 - rhs));
    if !first {
        v = v.with("failing", "d2 d8 psi > 0");
    } else if !second {
        v = v.with("failing", "d2 > d8 (2 - gp delta^2/(kp mu sigma2))");
    }
    v
}

/// `sup_𝒜 γ_p δ²/(k_p μ σ²) = k_p/(γ_p + k_p)`.
pub fn semi_global_sup(k_p: f64, gamma_p: f64) -> f64 {
    k_p / (gamma_p + k_p)
}

/// `γ_p δ²/(k_p μ σ²)`, the quantity whose supremum is [`semi_global_sup`].
pub fn semi_global_ratio(r: &ReferencePair, k_p: f64, gamma_p: f64) -> f64 {
    gamma_p * r.delta().powi(2) / (k_p * r.mean * r.variance)
}

/// Smallest variance reachable at mean `μ` in the normalized model.
pub fn min_variance_normalized(mu: f64, p: &NormalizedParams) -> Result<f64> {
    ensure_nonnegative("mu", mu)?;
    let g = p.gamma_r0 + p.gamma_p;
    Ok(g / (g + p.k_p) * mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::PIGains;
    use crate::moments::gene_full_rhs;

    fn reference_gene() -> GeneParams {
        GeneParams::new(0.06, 0.0066, 0.03).unwrap()
    }

    fn gains() -> MultiPIGains {
        MultiPIGains::new([0.3, 0.02, 0.1, 0.05, -0.2, 0.01, 0.3, -0.04]).unwrap()
    }

    #[test]
    fn admissibility_examples() {
        let (kp, gp) = (0.06, 0.0066);
        assert!(!admissible(&ReferencePair::new(10.0, 10.0).unwrap(), kp, gp));
        assert!(admissible(&ReferencePair::new(10.0, 50.0).unwrap(), kp, gp));
        let above = ReferencePair::new(10.0, 101.0).unwrap();
        assert!(!admissible(&above, kp, gp));
        assert!(equilibrium_inputs(&above, &reference_gene()).1 < 0.0);
        assert!(matches!(
            variance_equilibrium(&above, &reference_gene(), &gains()),
            Err(Error::Inadmissible { bound, .. }) if bound.contains("positive degradation")
        ));
    }

    #[test]
    fn equilibrium_example_is_fixed_point() {
        let r = ReferencePair::new(10.0, 50.0).unwrap();
        let eq = variance_equilibrium(&r, &reference_gene(), &gains()).unwrap();
        assert!((eq.u2 - 0.0084).abs() < 1e-15);
        assert!((eq.u1 - 0.00924).abs() < 1e-15);
        let res = gene_full_rhs(&eq.x, eq.u1, eq.u2, &reference_gene());
        assert!(res.iter().all(|v| v.abs() < 1e-14), "{res:?}");
        let k = gains().as_array();
        assert!((k[1] * eq.i1 + k[3] * eq.i2 - eq.u1).abs() < 1e-12);
        assert!((k[5] * eq.i1 + k[7] * eq.i2 - eq.u2).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = reference_gene();
        let g = gains();
        let r = ReferencePair::new(10.0, 50.0).unwrap();
        let eq = variance_equilibrium(&r, &p, &g).unwrap();
        let f = |z: &[f64; 7]| {
            let k = g.as_array();
            let (e1, e2) = (r.mean - z[1], r.variance - z[4]);
            let u1 = k[0] * e1 + k[1] * z[5] + k[2] * e2 + k[3] * z[6];
            let u2 = k[4] * e1 + k[5] * z[5] + k[6] * e2 + k[7] * z[6];
            let dx = gene_full_rhs(&[z[0], z[1], z[2], z[3], z[4]], u1, u2, &p);
            [dx[0], dx[1], dx[2], dx[3], dx[4], e1, e2]
        };
        let z0 = [eq.x[0], eq.x[1], eq.x[2], eq.x[3], eq.x[4], eq.i1, eq.i2];
        let j = variance_jacobian(&r, &p, &g).unwrap();
        for c in 0..7 {
            let h = 1e-6;
            let (mut zp, mut zm) = (z0, z0);
            zp[c] += h;
            zm[c] -= h;
            let (fp, fm) = (f(&zp), f(&zm));
            for row in 0..7 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!((fd - j[(row, c)]).abs() < 1e-6, "entry ({row},{c}): {fd} vs {}", j[(row, c)]);
            }
        }
    }

    #[test]
    fn determinant_formula() {
        let r = ReferencePair::new(10.0, 50.0).unwrap();
        let j = variance_jacobian(&r, &reference_gene(), &gains()).unwrap();
        let det = variance_jacobian_det(&r, &reference_gene(), &gains());
        assert!((j.determinant() - det).abs() <= 1e-9 * det.abs());
        let singular = MultiPIGains::unchecked([1.0, 2.0, 0.0, 4.0, 0.0, 1.0, 0.0, 2.0]);
        assert_eq!(variance_jacobian_det(&r, &reference_gene(), &singular), 0.0);
        assert!(variance_jacobian(&ReferencePair::new(5.0, 5.0).unwrap(), &reference_gene(), &gains()).is_err());
    }

    #[test]
    fn small_decoupled_gains_stabilize() {
        let r = ReferencePair::new(10.0, 50.0).unwrap();
        let eps = 1e-6;
        let g = MultiPIGains::decoupled(PIGains::new(0.0, eps).unwrap(), PIGains::new(0.0, -eps).unwrap()).unwrap();
        assert!(variance_loop_test(&r, &reference_gene(), &g).unwrap().is_stable());
    }

    #[test]
    fn perturbation_examples() {
        let p = reference_gene();
        let r = ReferencePair::new(10.0, 50.0).unwrap();
        assert!(perturbation_test(1.0, -1.0, &r, &p).is_stable());
        assert!(!perturbation_test(1.0, 1.0, &r, &p).is_stable());
        assert!(!perturbation_test(-1.0, -1.0, &r, &p).is_stable());
        let m = perturbation_matrix(1.0, -1.0, &r, &p);
        assert!(m.trace() < 0.0 && m.determinant() > 0.0);
    }

    #[test]
    fn supremum_and_min_variance() {
        assert_eq!(semi_global_sup(2.0, 2.0), 0.5);
        let (kp, gp) = (0.06, 0.0066);
        let near_top = ReferencePair::new(10.0, 10.0 * (1.0 + kp / gp) * (1.0 - 1e-9)).unwrap();
        assert!((semi_global_ratio(&near_top, kp, gp) - semi_global_sup(kp, gp)).abs() < 1e-6);
        let np = NormalizedParams::standard();
        assert!((min_variance_normalized(1.0, &np).unwrap() - 0.0366 / 0.0966).abs() < 1e-12);
        assert_eq!(min_variance_normalized(0.0, &np).unwrap(), 0.0);
        let poisson = NormalizedParams { k_p: 0.0, ..np };
        assert_eq!(min_variance_normalized(3.0, &poisson).unwrap(), 3.0);
    }
}
