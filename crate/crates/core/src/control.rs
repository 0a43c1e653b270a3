//! Positive PI, multivariable PI and integral control laws.
//!
//! Every law is wrapped in the ON/OFF nonlinearity `max(0, ·)`, optionally
//! saturated at `ū`. The integrators keep running while the output is
//! clamped; there is no anti-windup.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, Error, Result};

/// Output nonlinearity `u ↦ min(max(0, u), ū)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Clamp {
    pub upper: Option<f64>,
}

impl Clamp {
    pub const NONE: Clamp = Clamp { upper: None };

    pub fn new(upper: Option<f64>) -> Result<Self> {
        if let Some(ubar) = upper {
            ensure_positive("ubar", ubar)?;
        }
        Ok(Self { upper })
    }
}

/// `max(0, u)`, then `min(·, ū)` when a ceiling is set. NaN maps to 0.
#[inline]
pub fn clamp(u: f64, c: Clamp) -> f64 {
    let lo = if u > 0.0 { u } else { 0.0 };
    match c.upper {
        Some(ubar) if lo > ubar => ubar,
        _ => lo,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PIGains {
    pub k1: f64,
    pub k2: f64,
}

impl PIGains {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        for (name, k) in [("k1", k1), ("k2", k2)] {
            if !k.is_finite() {
                return Err(invalid(name, "gain must be finite"));
            }
        }
        Ok(Self { k1, k2 })
    }
}

/// `u = φ(k1 e + k2 I)`.
#[inline]
pub fn pi_output(e: f64, integrator: f64, g: &PIGains, c: Clamp) -> f64 {
    clamp(g.k1 * e + g.k2 * integrator, c)
}

/// Gains of the two-input law
///
/// ```text
/// u1 = φ(k1 e1 + k2 I1 + k3 e2 + k4 I2)
/// u2 = φ(k5 e1 + k6 I1 + k7 e2 + k8 I2)
/// ```
///
/// where `e1`, `I1` act on the mean and `e2`, `I2` on the variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiPIGains {
    k: [f64; 8],
}

impl MultiPIGains {
    /// Fails when `k2 k8 − k4 k6 = 0`, since the equilibrium integrator values
    /// are then not unique.
    pub fn new(k: [f64; 8]) -> Result<Self> {
        if k.iter().any(|v| !v.is_finite()) {
            return Err(invalid("gains", "all eight gains must be finite"));
        }
        let g = Self { k };
        if g.integral_det() == 0.0 {
            return Err(Error::SingularGains);
        }
        Ok(g)
    }

    /// Decoupled law: `(k1, k2)` on the mean channel, `(k7, k8)` on the variance channel.
    pub fn decoupled(mean: PIGains, variance: PIGains) -> Result<Self> {
        Self::new([mean.k1, mean.k2, 0.0, 0.0, 0.0, 0.0, variance.k1, variance.k2])
    }

    /// Build without the determinant check; only for evaluating outputs.
    pub fn unchecked(k: [f64; 8]) -> Self {
        Self { k }
    }

    /// Gain `k_i` with the one-based index used in the law above.
    pub fn get(&self, i: usize) -> f64 {
        self.k[i - 1]
    }

    pub fn as_array(&self) -> [f64; 8] {
        self.k
    }

    /// `k2 k8 − k4 k6`.
    pub fn integral_det(&self) -> f64 {
        self.k[1] * self.k[7] - self.k[3] * self.k[5]
    }
}

pub fn multi_pi_output(e1: f64, e2: f64, i1: f64, i2: f64, g: &MultiPIGains, c: Clamp) -> (f64, f64) {
    let k = &g.k;
    let v1 = k[0] * e1 + k[1] * i1 + k[2] * e2 + k[3] * i2;
    let v2 = k[4] * e1 + k[5] * i1 + k[6] * e2 + k[7] * i2;
    (clamp(v1, c), clamp(v2, c))
}

/// Pure integral law `k1 = kc φ(I)` with `İ = μ − y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralController {
    pub kc: f64,
    pub integrator: f64,
    pub reference: f64,
}

impl IntegralController {
    pub fn new(kc: f64, reference: f64) -> Result<Self> {
        crate::error::ensure_nonnegative("kc", kc)?;
        ensure_positive("reference", reference)?;
        Ok(Self { kc, integrator: 0.0, reference })
    }

    pub fn output(&self) -> f64 {
        self.kc * clamp(self.integrator, Clamp::NONE)
    }

    /// One sampling period: use the current integrator, then advance it.
    pub fn step(&mut self, y: f64, ts: f64) -> f64 {
        let u = self.output();
        self.integrator += ts * (self.reference - y);
        u
    }
}

/// A control law with its nonlinearity, independent of integrator storage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlLaw {
    Pi { gains: PIGains, clamp: Clamp },
    MultiPi { gains: MultiPIGains, clamp: Clamp },
    Integral { kc: f64, clamp: Clamp },
}

impl ControlLaw {
    /// Number of measured outputs (and integrators).
    pub fn n_channels(&self) -> usize {
        match self {
            ControlLaw::MultiPi { .. } => 2,
            _ => 1,
        }
    }

    /// Number of actuated inputs.
    pub fn n_inputs(&self) -> usize {
        self.n_channels()
    }

    /// Control values for the given errors and integrator states.
    pub fn output(&self, errors: &[f64], integrators: &[f64]) -> Vec<f64> {
        match self {
            ControlLaw::Pi { gains, clamp } => vec![pi_output(errors[0], integrators[0], gains, *clamp)],
            ControlLaw::MultiPi { gains, clamp } => {
                let (u1, u2) = multi_pi_output(errors[0], errors[1], integrators[0], integrators[1], gains, *clamp);
                vec![u1, u2]
            }
            ControlLaw::Integral { kc, clamp: c } => {
                let u = kc * clamp(integrators[0], Clamp::NONE);
                vec![clamp(u, *c)]
            }
        }
    }

    pub fn ubar(&self) -> Option<f64> {
        match self {
            ControlLaw::Pi { clamp, .. } | ControlLaw::MultiPi { clamp, .. } | ControlLaw::Integral { clamp, .. } => {
                clamp.upper
            }
        }
    }
}

/// Sampled controller following the order "output from the current
/// integrator, then forward-Euler integrator update".
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteController {
    pub law: ControlLaw,
    pub integrators: Vec<f64>,
    pub ts: f64,
}

impl DiscreteController {
    pub fn new(law: ControlLaw, integrators: Vec<f64>, ts: f64) -> Result<Self> {
        ensure_positive("Ts", ts)?;
        if integrators.len() != law.n_channels() {
            return Err(Error::Dimension {
                what: "integrator state",
                expected: law.n_channels(),
                got: integrators.len(),
            });
        }
        Ok(Self { law, integrators, ts })
    }

    /// Compute the control for this period from `errors = reference − y`,
    /// then advance the integrators with the same errors.
    pub fn update(&mut self, errors: &[f64]) -> Vec<f64> {
        let u = self.law.output(errors, &self.integrators);
        for (i, e) in self.integrators.iter_mut().zip(errors) {
            *i += self.ts * e;
        }
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Pi,
    MultiPi,
    Integral,
}

/// Reference value: a mean target, or a `[mean, variance]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Mean(f64),
    MeanVariance([f64; 2]),
}

impl Reference {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Reference::Mean(m) => vec![m],
            Reference::MeanVariance(p) => p.to_vec(),
        }
    }
}

/// Controller section of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(rename = "type")]
    pub kind: ControllerKind,
    pub gains: BTreeMap<String, f64>,
    #[serde(default)]
    pub ubar: Option<f64>,
    pub reference: Reference,
    /// Initial integrator values; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Vec<f64>>,
}

impl ControllerConfig {
    pub fn law(&self) -> Result<ControlLaw> {
        let clamp = Clamp::new(self.ubar)?;
        let names: &[&str] = match self.kind {
            ControllerKind::Pi => &["k1", "k2"],
            ControllerKind::MultiPi => &["k1", "k2", "k3", "k4", "k5", "k6", "k7", "k8"],
            ControllerKind::Integral => &["kc"],
        };
        if let Some(extra) = self.gains.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown gain \"{extra}\" for {:?} controller", self.kind)));
        }
        let get = |name: &str| -> Result<f64> {
            self.gains.get(name).copied().ok_or_else(|| Error::Config(format!("missing gain \"{name}\"")))
        };
        let law = match self.kind {
            ControllerKind::Pi => ControlLaw::Pi { gains: PIGains::new(get("k1")?, get("k2")?)?, clamp },
            ControllerKind::MultiPi => {
                let mut k = [0.0; 8];
                for (slot, name) in k.iter_mut().zip(names) {
                    // Off-diagonal couplings default to zero.
                    *slot = self.gains.get(*name).copied().unwrap_or(0.0);
                }
                ControlLaw::MultiPi { gains: MultiPIGains::new(k)?, clamp }
            }
            ControllerKind::Integral => {
                let kc = get("kc")?;
                crate::error::ensure_nonnegative("kc", kc)?;
                ControlLaw::Integral { kc, clamp }
            }
        };
        let refs = self.reference.values();
        if refs.len() != law.n_channels() {
            return Err(Error::Dimension { what: "reference", expected: law.n_channels(), got: refs.len() });
        }
        for r in refs {
            ensure_positive("reference", r)?;
        }
        Ok(law)
    }

    pub fn initial_integrators(&self) -> Result<Vec<f64>> {
        let n = self.law()?.n_channels();
        match &self.integrator {
            None => Ok(vec![0.0; n]),
            Some(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
            Some(v) => Err(Error::Dimension { what: "integrator", expected: n, got: v.len() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp(-1.0, Clamp::NONE), 0.0);
        assert_eq!(clamp(0.5, Clamp { upper: Some(0.3) }), 0.3);
        assert_eq!(clamp(0.2, Clamp { upper: Some(0.3) }), 0.2);
        assert_eq!(clamp(f64::NAN, Clamp::NONE), 0.0);
        assert!(Clamp::new(Some(0.0)).is_err());
    }

    #[test]
    fn pi_output_examples() {
        let g = PIGains::new(0.01, 0.0007).unwrap();
        assert!((pi_output(5.0, 100.0, &g, Clamp::NONE) - 0.12).abs() < 1e-15);
        assert_eq!(pi_output(-1e6, 0.0, &g, Clamp::NONE), 0.0);
        let ustar = 0.033;
        assert!((pi_output(0.0, ustar / g.k2, &g, Clamp::NONE) - ustar).abs() < 1e-15);
    }

    #[test]
    fn multi_pi_examples() {
        assert!(matches!(MultiPIGains::new([0.0; 8]), Err(Error::SingularGains)));
        let zero = MultiPIGains::unchecked([0.0; 8]);
        assert_eq!(multi_pi_output(1.0, 1.0, 1.0, 1.0, &zero, Clamp::NONE), (0.0, 0.0));

        let g = MultiPIGains::decoupled(PIGains::new(1.0, 0.5).unwrap(), PIGains::new(2.0, 0.25).unwrap()).unwrap();
        assert_eq!(multi_pi_output(1.0, 1.0, 0.0, 0.0, &g, Clamp::NONE), (1.0, 2.0));
        assert_eq!(multi_pi_output(1.0, 1.0, 2.0, 4.0, &g, Clamp::NONE), (2.0, 3.0));
    }

    #[test]
    fn discrete_integral_follows_use_then_update() {
        let mut c = IntegralController::new(1.0, 5.0).unwrap();
        c.integrator = 2.0;
        assert_eq!(c.step(5.0, 0.01), 2.0);
        assert_eq!(c.integrator, 2.0);

        let mut c = IntegralController::new(1.0, 5.0).unwrap();
        assert_eq!(c.step(0.0, 0.01), 0.0);
        assert!((c.integrator - 0.05).abs() < 1e-15);

        let mut c = IntegralController::new(2.0, 5.0).unwrap();
        c.integrator = -1.0;
        assert_eq!(c.step(0.0, 0.01), 0.0);
        assert!((c.integrator + 0.95).abs() < 1e-15);
    }

    #[test]
    fn discrete_controller_matches_integral_controller() {
        let law = ControlLaw::Integral { kc: 1.5, clamp: Clamp::NONE };
        let mut d = DiscreteController::new(law, vec![0.0], 0.1).unwrap();
        let mut c = IntegralController::new(1.5, 5.0).unwrap();
        for y in [0.0, 1.0, 7.0, 4.0, 5.5] {
            assert_eq!(d.update(&[5.0 - y])[0], c.step(y, 0.1));
        }
    }

    #[test]
    fn discrete_pi_uses_current_error_then_integrates() {
        let law = ControlLaw::Pi { gains: PIGains::new(2.0, 1.0).unwrap(), clamp: Clamp::NONE };
        let mut d = DiscreteController::new(law, vec![1.0], 0.5).unwrap();
        assert_eq!(d.update(&[3.0]), vec![7.0]);
        assert_eq!(d.integrators, vec![2.5]);
    }

    #[test]
    fn controller_config_json() {
        let c: ControllerConfig = serde_json::from_str(
            r#"{"type": "multi_pi", "gains": {"k1": 1, "k2": 0.007, "k7": -0.2, "k8": -0.0014},
                "ubar": null, "reference": [5, 4]}"#,
        )
        .unwrap();
        match c.law().unwrap() {
            ControlLaw::MultiPi { gains, .. } => {
                assert_eq!(gains.as_array(), [1.0, 0.007, 0.0, 0.0, 0.0, 0.0, -0.2, -0.0014])
            }
            other => panic!("{other:?}"),
        }
        let bad: ControllerConfig =
            serde_json::from_str(r#"{"type": "pi", "gains": {"k1": 1, "k9": 2}, "reference": 3}"#).unwrap();
        assert!(bad.law().is_err());
        let wrong_ref: ControllerConfig =
            serde_json::from_str(r#"{"type": "pi", "gains": {"k1": 1, "k2": 2}, "reference": [3, 4]}"#).unwrap();
        assert!(wrong_ref.law().is_err());
        let integral: ControllerConfig =
            serde_json::from_str(r#"{"type": "integral", "gains": {"kc": 1}, "reference": 5}"#).unwrap();
        assert_eq!(integral.initial_integrators().unwrap(), vec![0.0]);
    }
}
