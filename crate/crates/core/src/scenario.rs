//! Scenario files: a plant or network, a controller, schedules and run settings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::control::{ControllerConfig, ControllerKind, Reference};
use crate::error::{Error, Result};
use crate::moments::{
    default_dt, ClosedLoop, DimerParams, GeneParams, NormalizedParams, Plant, Trajectory, VarianceInput,
};
use crate::network::{library, Rate, ReactionNetwork};
use crate::schedule::{DisturbanceEvent, DisturbanceSchedule, ReferenceSchedule};
use crate::ssa::{run_controlled_population, Actuation, Feedback, InitialCondition, PopulationRun, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ode,
    Ssa,
}

/// Moment plant for ODE runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    GeneMean {
        k_p: f64,
        gamma_p: f64,
        gamma_r: f64,
    },
    Gene {
        k_p: f64,
        gamma_p: f64,
        gamma_r: f64,
    },
    Normalized {
        gamma_r0: f64,
        gamma_p: f64,
        b: f64,
        k_p: f64,
    },
    Dimer {
        b: f64,
        gamma1: f64,
        gamma2: f64,
        /// Constant monomer variance fed to the open moment equations.
        #[serde(default)]
        variance: f64,
    },
}

impl PlantSpec {
    pub fn build(&self) -> Result<Plant> {
        Ok(match *self {
            PlantSpec::GeneMean { k_p, gamma_p, gamma_r } => Plant::GeneMean(GeneParams::new(k_p, gamma_p, gamma_r)?),
            PlantSpec::Gene { k_p, gamma_p, gamma_r } => Plant::Gene(GeneParams::new(k_p, gamma_p, gamma_r)?),
            PlantSpec::Normalized { gamma_r0, gamma_p, b, k_p } => {
                Plant::Normalized(NormalizedParams::new(gamma_r0, gamma_p, b, k_p)?)
            }
            PlantSpec::Dimer { b, gamma1, gamma2, variance } => Plant::Dimer {
                params: DimerParams::new(b, gamma1, gamma2)?,
                variance: if variance == 0.0 { VarianceInput::Zero } else { VarianceInput::Constant(variance) },
            },
        })
    }
}

/// Settings for population runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsaSection {
    pub network: ReactionNetwork,
    pub ts: f64,
    pub n_cells: usize,
    #[serde(default)]
    pub seed: u64,
    pub measured_species: usize,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default)]
    pub tracked_cells: Vec<usize>,
    pub initial: InitialCondition,
}

/// Settings for moment ODE runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    pub plant: PlantSpec,
    /// Plant initial state; zeros when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Record every `stride` integration steps.
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Mode used when none is requested.
    pub mode: Mode,
    pub horizon: f64,
    pub controller: ControllerConfig,
    /// One schedule per controller channel; constant at the controller
    /// reference when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<ReferenceSchedule>>,
    #[serde(default)]
    pub disturbances: DisturbanceSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssa: Option<SsaSection>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Reference schedules with default ramps filled in.
    pub fn reference_schedules(&self) -> Vec<ReferenceSchedule> {
        let raw = match &self.references {
            Some(r) => r.clone(),
            None => self.controller.reference.values().into_iter().map(ReferenceSchedule::constant).collect(),
        };
        raw.iter().map(|r| r.resolved(self.horizon)).collect()
    }

    /// Checks every section and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            problems.push(format!("horizon: must be finite and > 0, got {}", self.horizon));
        }
        let law = self.controller.law();
        let n = law.as_ref().map_or(1, |l| l.n_channels());
        note(&mut problems, "controller", &law);
        if law.is_ok() {
            note(&mut problems, "controller.integrator", &self.controller.initial_integrators());
        }
        if let Some(refs) = &self.references {
            if refs.len() != n {
                problems.push(format!("references: {} schedules for {n} controller channel(s)", refs.len()));
            }
            for (i, r) in refs.iter().enumerate() {
                note(&mut problems, &format!("references[{i}]"), &r.validate(self.horizon));
            }
        }
        note(&mut problems, "disturbances", &self.disturbances.validate(n));
        match (&self.ode, self.mode) {
            (None, Mode::Ode) => problems.push("ode: required for mode \"ode\"".into()),
            (Some(o), _) => {
                let plant = o.plant.build();
                note(&mut problems, "ode.plant", &plant);
                if let (Ok(p), Some(x0)) = (&plant, &o.x0) {
                    if x0.len() != p.dim() {
                        problems.push(format!("ode.x0: expected {} values, got {}", p.dim(), x0.len()));
                    }
                }
                if let (Ok(p), Ok(l)) = (&plant, &law) {
                    let dims = ClosedLoop::new(p.clone(), *l, self.reference_schedules(), self.disturbances.clone());
                    note(&mut problems, "ode", &dims);
                }
                if let Some(dt) = o.dt {
                    note(&mut problems, "ode.dt", &crate::error::ensure_positive("dt", dt));
                }
            }
            _ => {}
        }
        match (&self.ssa, self.mode) {
            (None, Mode::Ssa) => problems.push("ssa: required for mode \"ssa\"".into()),
            (Some(s), _) => {
                let ns = s.network.n_species();
                note(&mut problems, "ssa", &self.sim_config(s, None).validate(ns));
                note(&mut problems, "ssa.initial", &s.initial.validate(ns));
                if s.network.n_controls() != n {
                    problems.push(format!(
                        "ssa.network: binds {} control input(s) but the controller drives {n}",
                        s.network.n_controls()
                    ));
                }
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid scenario \"{}\":\n  {}", self.name, problems.join("\n  "))))
        }
    }

    fn sim_config(&self, s: &SsaSection, seed: Option<u64>) -> SimConfig {
        SimConfig {
            ts: s.ts,
            horizon: self.horizon,
            n_cells: s.n_cells,
            seed: seed.unwrap_or(s.seed),
            measured_species: s.measured_species,
            record_stride: s.record_stride,
            tracked_cells: s.tracked_cells.clone(),
        }
    }

    /// Integrate the closed-loop moment equations.
    pub fn run_ode(&self) -> Result<Trajectory> {
        let o = self.ode.as_ref().ok_or_else(|| Error::Config("scenario has no ode section".into()))?;
        let plant = o.plant.build()?;
        let dt = o.dt.unwrap_or_else(|| default_dt(self.ssa.as_ref().map(|s| s.ts), plant.fastest_rate()));
        let x0 = o.x0.clone().unwrap_or_else(|| vec![0.0; plant.dim()]);
        let law = self.controller.law()?;
        let i0 = self.controller.initial_integrators()?;
        let mut lp = ClosedLoop::new(plant, law, self.reference_schedules(), self.disturbances.clone())?;
        lp.simulate(&x0, &i0, self.horizon, dt, o.stride)
    }

    /// Run the controlled population; `seed` overrides the file's seed.
    pub fn run_ssa(&self, seed: Option<u64>, threads: Option<usize>) -> Result<PopulationRun> {
        let s = self.ssa.as_ref().ok_or_else(|| Error::Config("scenario has no ssa section".into()))?;
        let feedback = Feedback {
            actuation: Actuation::Closed {
                law: self.controller.law()?,
                integrators: self.controller.initial_integrators()?,
                references: self.reference_schedules(),
            },
            disturbance: self.disturbances.clone(),
        };
        run_controlled_population(&s.network, &feedback, &self.sim_config(s, seed), &s.initial, threads)
    }

    /// Key parameters for metadata headers.
    pub fn summary(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("scenario".into(), self.name.clone());
        m.insert("horizon".into(), self.horizon.to_string());
        m.insert("controller".into(), format!("{:?}", self.controller.kind).to_lowercase());
        for (k, v) in &self.controller.gains {
            m.insert(k.clone(), v.to_string());
        }
        if let Some(ub) = self.controller.ubar {
            m.insert("ubar".into(), ub.to_string());
        }
        m
    }
}

fn note<T>(problems: &mut Vec<String>, field: &str, r: &Result<T>) {
    match r {
        Ok(_) => {}
        Err(Error::Config(msg)) => problems.push(format!("{field}: {msg}")),
        Err(e) => problems.push(format!("{field}: {e}")),
    }
}

// Reference constants of the normalized gene-expression model.
const NORMALIZED: PlantSpec = PlantSpec::Normalized { gamma_r0: 0.03, gamma_p: 0.0066, b: 0.9587, k_p: 0.06 };

fn gains(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn mean_controller(reference: f64) -> ControllerConfig {
    ControllerConfig {
        kind: ControllerKind::Pi,
        gains: gains(&[("k1", 0.01), ("k2", 0.0007)]),
        ubar: None,
        reference: Reference::Mean(reference),
        integrator: None,
    }
}

fn variance_controller(mean: f64, variance: f64) -> ControllerConfig {
    ControllerConfig {
        kind: ControllerKind::MultiPi,
        gains: gains(&[("k1", 1.0), ("k2", 0.007), ("k7", -0.2), ("k8", -0.0014)]),
        ubar: None,
        reference: Reference::MeanVariance([mean, variance]),
        integrator: None,
    }
}

fn normalized_ode(stride: usize) -> OdeSection {
    OdeSection { plant: NORMALIZED, x0: Some(vec![1.0; 5]), dt: Some(0.5), stride }
}

/// Dwell time of each reference level in the mean presets.
pub const MEAN_DWELL: f64 = 6000.0;
/// Dwell time of each variance level in the variance presets.
pub const VARIANCE_DWELL: f64 = 6000.0;

fn dimer_scenario(name: &str, description: &str, disturbances: DisturbanceSchedule) -> Scenario {
    let network = library::dimerization(Rate::Control(0), 3.0, 2.0, 1.0).expect("valid preset network");
    Scenario {
        name: name.into(),
        description: description.into(),
        mode: Mode::Ssa,
        horizon: 50.0,
        controller: ControllerConfig {
            kind: ControllerKind::Integral,
            gains: gains(&[("kc", 1.0)]),
            ubar: None,
            reference: Reference::Mean(5.0),
            integrator: None,
        },
        references: None,
        disturbances,
        ode: Some(OdeSection {
            plant: PlantSpec::Dimer { b: 3.0, gamma1: 2.0, gamma2: 1.0, variance: 0.0 },
            x0: Some(vec![0.5, 0.5]),
            dt: None,
            stride: 10,
        }),
        ssa: Some(SsaSection {
            network,
            ts: 0.01,
            n_cells: 10_000,
            seed: 1,
            measured_species: 1,
            record_stride: 10,
            tracked_cells: vec![0, 1, 2],
            initial: InitialCondition::Uniform { lo: vec![0, 0], hi: vec![1, 1] },
        }),
    }
}

/// Built-in presets as `(name, description)`, in a fixed order.
pub const PRESETS: [(&str, &str); 7] = [
    ("mean_tracking", "normalized gene expression, PI k1=0.01 k2=0.0007, three stepped mean references"),
    (
        "mean_disturbance",
        "normalized gene expression, PI mean loop, constant input disturbance inside the rejectable interval",
    ),
    ("variance_tracking", "normalized gene expression, joint mean/variance PI, ramped variance references"),
    ("variance_disturbance_u1", "joint mean/variance PI, constant disturbance on the transcription input"),
    ("variance_disturbance_u2", "joint mean/variance PI, constant disturbance on the degradation input"),
    ("dimer_population", "dimerization network, integral control kc=1 of the mean dimer count, 10000 cells"),
    ("dimer_disturbance", "dimer population with an additive disturbance of 15 on production from t=15"),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

/// Build a preset by name.
pub fn preset(name: &str) -> Result<Scenario> {
    let describe = |n: &str| PRESETS.iter().find(|p| p.0 == n).map_or(String::new(), |p| p.1.to_string());
    let s = match name {
        "mean_tracking" => {
            let d = MEAN_DWELL;
            Scenario {
                name: name.into(),
                description: describe(name),
                mode: Mode::Ode,
                horizon: 3.0 * d,
                controller: mean_controller(2.0),
                references: Some(vec![ReferenceSchedule::stepped(&[(0.0, 2.0), (d, 3.0), (2.0 * d, 1.5)], Some(0.0))]),
                disturbances: DisturbanceSchedule::none(),
                ode: Some(normalized_ode(20)),
                ssa: None,
            }
        }
        "mean_disturbance" => {
            let d = MEAN_DWELL;
            // Rejectable interval at reference 2 is (-inf, 0.0313]; see `disturbance_bounds`.
            Scenario {
                name: name.into(),
                description: describe(name),
                mode: Mode::Ode,
                horizon: 2.0 * d,
                controller: mean_controller(2.0),
                references: None,
                disturbances: DisturbanceSchedule::step(d, 0, 0.015),
                ode: Some(normalized_ode(20)),
                ssa: None,
            }
        }
        "variance_tracking" => {
            let d = VARIANCE_DWELL;
            Scenario {
                name: name.into(),
                description: describe(name),
                mode: Mode::Ode,
                horizon: 3.0 * d,
                controller: variance_controller(1.0, 0.8),
                references: Some(vec![
                    ReferenceSchedule::constant(1.0),
                    ReferenceSchedule::stepped(&[(0.0, 0.8), (d, 0.6), (2.0 * d, 0.7)], None),
                ]),
                disturbances: DisturbanceSchedule::none(),
                ode: Some(normalized_ode(20)),
                ssa: None,
            }
        }
        "variance_disturbance_u1" | "variance_disturbance_u2" => {
            let d = VARIANCE_DWELL;
            let (channel, amplitude) = if name.ends_with("u1") { (0, 0.01) } else { (1, 0.005) };
            Scenario {
                name: name.into(),
                description: describe(name),
                mode: Mode::Ode,
                horizon: 2.0 * d,
                controller: variance_controller(1.0, 0.7),
                references: None,
                disturbances: DisturbanceSchedule { events: vec![DisturbanceEvent { t: d, channel, amplitude }] },
                ode: Some(normalized_ode(20)),
                ssa: None,
            }
        }
        "dimer_population" => dimer_scenario(name, &describe(name), DisturbanceSchedule::none()),
        "dimer_disturbance" => dimer_scenario(name, &describe(name), DisturbanceSchedule::step(15.0, 0, 15.0)),
        other => {
            return Err(Error::Config(format!(
                "unknown scenario \"{other}\"; available: {}",
                preset_names().join(", ")
            )))
        }
    };
    Ok(s)
}
