use serde::{Deserialize, Serialize};

use super::ode::{integrate, OdeSystem, Trajectory};
use super::{dimer_rhs, gene_full_rhs, gene_mean_rhs, normalized_rhs, DimerParams, GeneParams, NormalizedParams};
use crate::control::ControlLaw;
use crate::error::{Error, Result};
use crate::schedule::{DisturbanceSchedule, ReferenceSchedule};

/// Monomer variance fed to the open dimer moment equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceInput {
    Zero,
    Constant(f64),
    /// Zero-order hold over recorded `(t, v)` samples, e.g. from an SSA run.
    Recorded {
        t: Vec<f64>,
        v: Vec<f64>,
    },
}

impl VarianceInput {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            VarianceInput::Zero => 0.0,
            VarianceInput::Constant(v) => *v,
            VarianceInput::Recorded { t: ts, v } => {
                let idx = ts.partition_point(|&s| s <= t);
                v[idx.saturating_sub(1).min(v.len() - 1)]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            VarianceInput::Zero => Ok(()),
            VarianceInput::Constant(v) => crate::error::ensure_nonnegative("variance input", *v),
            VarianceInput::Recorded { t, v } => {
                if t.is_empty() || t.len() != v.len() {
                    return Err(Error::Config("recorded variance needs equal, nonempty t and v".into()));
                }
                if t.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Config("recorded variance times must be sorted".into()));
                }
                Ok(())
            }
        }
    }
}

/// Moment system driven by the controller.
#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    /// `(x1, x2)`, input: transcription rate.
    GeneMean(GeneParams),
    /// Five moments, inputs: transcription rate and mRNA degradation rate.
    Gene(GeneParams),
    /// Normalized five moments, inputs `u1`, `u2`.
    Normalized(NormalizedParams),
    /// `(x1, x2)` of the dimer network, input: production rate.
    Dimer { params: DimerParams, variance: VarianceInput },
}

impl Plant {
    pub fn dim(&self) -> usize {
        match self {
            Plant::GeneMean(_) | Plant::Dimer { .. } => 2,
            Plant::Gene(_) | Plant::Normalized(_) => 5,
        }
    }

    pub fn n_inputs(&self) -> usize {
        match self {
            Plant::GeneMean(_) | Plant::Dimer { .. } => 1,
            Plant::Gene(_) | Plant::Normalized(_) => 2,
        }
    }

    /// Input values used for channels the controller does not drive.
    fn nominal_inputs(&self) -> [f64; 2] {
        match self {
            Plant::Gene(p) => [0.0, p.gamma_r],
            _ => [0.0, 0.0],
        }
    }

    /// Measured `(mean, variance)` of the controlled species.
    pub fn outputs(&self, x: &[f64]) -> [f64; 2] {
        match self {
            Plant::GeneMean(_) | Plant::Dimer { .. } => [x[1], f64::NAN],
            Plant::Gene(_) | Plant::Normalized(_) => [x[1], x[4]],
        }
    }

    pub fn fastest_rate(&self) -> f64 {
        match self {
            Plant::GeneMean(p) | Plant::Gene(p) => p.fastest_rate(),
            Plant::Normalized(p) => p.fastest_rate(),
            Plant::Dimer { params, .. } => params.fastest_rate(),
        }
    }

    fn rhs(&self, x: &[f64], u: [f64; 2], v: f64, dx: &mut [f64]) {
        match self {
            Plant::GeneMean(p) => dx.copy_from_slice(&gene_mean_rhs([x[0], x[1]], u[0], p)),
            Plant::Gene(p) => {
                let s: &[f64; 5] = x.try_into().expect("5-state plant");
                dx.copy_from_slice(&gene_full_rhs(s, u[0], u[1], p));
            }
            Plant::Normalized(p) => {
                let s: &[f64; 5] = x.try_into().expect("5-state plant");
                dx.copy_from_slice(&normalized_rhs(s, u[0], u[1], p));
            }
            Plant::Dimer { params, .. } => dx.copy_from_slice(&dimer_rhs([x[0], x[1]], u[0], v, params)),
        }
    }
}

/// Plant in feedback with a continuous-time control law.
///
/// The state is the plant state followed by one integrator per channel,
/// `İ_j = r_j − y_j`. Disturbances add to the controller output and the sum is
/// clamped at zero, as a physical rate must be.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub plant: Plant,
    pub law: ControlLaw,
    pub references: Vec<ReferenceSchedule>,
    pub disturbance: DisturbanceSchedule,
    held_ref: [f64; 2],
    held_dist: [f64; 2],
    held_v: f64,
}

impl ClosedLoop {
    pub fn new(
        plant: Plant,
        law: ControlLaw,
        references: Vec<ReferenceSchedule>,
        disturbance: DisturbanceSchedule,
    ) -> Result<Self> {
        let n = law.n_channels();
        if n > plant.n_inputs() {
            return Err(Error::Config(format!("controller drives {n} inputs but the plant has {}", plant.n_inputs())));
        }
        if matches!(plant, Plant::Dimer { .. }) != matches!(law, ControlLaw::Integral { .. }) {
            return Err(Error::Config("the dimer plant pairs with the integral controller only".into()));
        }
        if references.len() != n {
            return Err(Error::Dimension { what: "reference schedules", expected: n, got: references.len() });
        }
        if let Plant::Dimer { variance, .. } = &plant {
            variance.validate()?;
        }
        disturbance.validate(n)?;
        let mut lp = Self { plant, law, references, disturbance, held_ref: [0.0; 2], held_dist: [0.0; 2], held_v: 0.0 };
        lp.hold(0.0);
        Ok(lp)
    }

    pub fn n_channels(&self) -> usize {
        self.law.n_channels()
    }

    fn errors(&self, refs: &[f64; 2], x: &[f64]) -> [f64; 2] {
        let y = self.plant.outputs(x);
        [refs[0] - y[0], refs[1] - y[1]]
    }

    fn reference_at(&self, t: f64) -> [f64; 2] {
        let mut r = [0.0; 2];
        for (slot, s) in r.iter_mut().zip(&self.references) {
            *slot = s.value(t);
        }
        r
    }

    fn control_from(&self, refs: &[f64; 2], z: &[f64]) -> Vec<f64> {
        let n = self.plant.dim();
        let e = self.errors(refs, &z[..n]);
        self.law.output(&e[..self.n_channels()], &z[n..])
    }

    /// Controller output (before disturbances) at full state `z` with the
    /// currently held references.
    pub fn control(&self, z: &[f64]) -> Vec<f64> {
        self.control_from(&self.held_ref, z)
    }

    fn applied(&self, z: &[f64]) -> [f64; 2] {
        let mut u = self.plant.nominal_inputs();
        for (j, c) in self.control(z).into_iter().enumerate() {
            u[j] = (c + self.held_dist[j]).max(0.0);
        }
        u
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.plant.dim()).map(|i| format!("x{i}")));
        cols.extend((1..=self.n_channels()).map(|i| format!("u{i}")));
        cols.extend((1..=self.n_channels()).map(|i| format!("I{i}")));
        cols
    }

    /// Integrate from plant state `x0` and integrators `i0`.
    pub fn simulate(&mut self, x0: &[f64], i0: &[f64], t_end: f64, dt: f64, stride: usize) -> Result<Trajectory> {
        if x0.len() != self.plant.dim() {
            return Err(Error::Dimension { what: "initial state", expected: self.plant.dim(), got: x0.len() });
        }
        if i0.len() != self.n_channels() {
            return Err(Error::Dimension { what: "integrator", expected: self.n_channels(), got: i0.len() });
        }
        let z0: Vec<f64> = x0.iter().chain(i0).copied().collect();
        let mut traj = Trajectory::new(self.columns());
        let n = self.plant.dim();
        let rows = std::cell::RefCell::new(Vec::new());
        let snapshot = self.clone();
        integrate(self, &z0, 0.0, t_end, dt, stride, |t, z| {
            let mut row = Vec::with_capacity(1 + z.len() + snapshot.n_channels());
            row.push(t);
            row.extend_from_slice(&z[..n]);
            row.extend(snapshot.control_from(&snapshot.reference_at(t), z));
            row.extend_from_slice(&z[n..]);
            rows.borrow_mut().push(row);
        })?;
        traj.rows = rows.into_inner();
        Ok(traj)
    }
}

impl OdeSystem for ClosedLoop {
    fn dim(&self) -> usize {
        self.plant.dim() + self.n_channels()
    }

    fn hold(&mut self, t: f64) {
        for (j, r) in self.references.iter().enumerate() {
            self.held_ref[j] = r.value(t);
            self.held_dist[j] = self.disturbance.value(t, j);
        }
        if let Plant::Dimer { variance, .. } = &self.plant {
            self.held_v = variance.value(t);
        }
    }

    fn rhs(&self, _t: f64, z: &[f64], dz: &mut [f64]) {
        let n = self.plant.dim();
        let u = self.applied(z);
        self.plant.rhs(&z[..n], u, self.held_v, &mut dz[..n]);
        let e = self.errors(&self.held_ref, &z[..n]);
        dz[n..].copy_from_slice(&e[..self.n_channels()]);
    }
}
