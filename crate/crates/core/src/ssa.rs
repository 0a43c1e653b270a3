//! Exact stochastic simulation of independent cells under sampled feedback.
//!
//! Every cell draws from its own ChaCha stream keyed by the master seed; the
//! stream id is the cell index and each sampling interval starts at a fixed
//! word offset. Results therefore do not depend on how cells are scheduled
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlLaw;
use crate::error::{ensure_positive, Error, Result};
use crate::moments::Trajectory;
use crate::network::{Kinetics, Rate, ReactionNetwork};
use crate::schedule::{DisturbanceSchedule, ReferenceSchedule};

/// At most this many cells can be tracked individually.
pub const MAX_TRACKED: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub counts: Vec<i64>,
    pub t: f64,
}

impl CellState {
    pub fn new(counts: Vec<i64>) -> Self {
        Self { counts, t: 0.0 }
    }
}

/// Network preprocessed for the direct method.
#[derive(Debug, Clone)]
pub struct Simulator {
    n_species: usize,
    kinetics: Vec<Kinetics>,
    changes: Vec<Vec<(usize, i64)>>,
    rates: Vec<Rate>,
}

impl Simulator {
    pub fn new(network: &ReactionNetwork) -> Self {
        let rs = network.reactions();
        Self {
            n_species: network.n_species(),
            kinetics: rs.iter().map(|r| r.kinetics()).collect(),
            changes: rs
                .iter()
                .map(|r| r.stoich.iter().enumerate().filter(|(_, &s)| s != 0).map(|(i, &s)| (i, s)).collect())
                .collect(),
            rates: rs.iter().map(|r| r.rate).collect(),
        }
    }

    pub fn n_reactions(&self) -> usize {
        self.kinetics.len()
    }

    /// Numeric rate vector with control channels bound to `controls`.
    pub fn rates(&self, controls: &[f64]) -> Result<Vec<f64>> {
        self.rates.iter().map(|r| r.value(controls)).collect()
    }

    /// Direct-method simulation of `cell` up to `t_end` with constant rates.
    /// `scratch` holds the propensities. Returns the number of firings.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        cell: &mut CellState,
        rates: &[f64],
        t_end: f64,
        rng: &mut R,
        scratch: &mut Vec<f64>,
    ) -> u64 {
        debug_assert_eq!(cell.counts.len(), self.n_species);
        scratch.resize(self.kinetics.len(), 0.0);
        let mut fired = 0;
        loop {
            let mut a0 = 0.0;
            for ((a, kin), &k) in scratch.iter_mut().zip(&self.kinetics).zip(rates) {
                *a = kin.propensity(k, &cell.counts);
                a0 += *a;
            }
            if !(a0 > 0.0) {
                break;
            }
            // 1 − U lies in (0, 1], so the logarithm is finite.
            let tau = -(1.0 - rng.random::<f64>()).ln() / a0;
            if cell.t + tau > t_end {
                break;
            }
            cell.t += tau;
            let target = rng.random::<f64>() * a0;
            let mut acc = 0.0;
            let mut chosen = None;
            for (k, &a) in scratch.iter().enumerate() {
                if a > 0.0 {
                    chosen = Some(k);
                    acc += a;
                    if target < acc {
                        break;
                    }
                }
            }
            let k = chosen.expect("a0 > 0 implies a positive propensity");
            for &(i, s) in &self.changes[k] {
                cell.counts[i] += s;
                assert!(cell.counts[i] >= 0, "negative count after firing reaction {k}");
            }
            fired += 1;
        }
        cell.t = t_end;
        fired
    }
}

/// One-off direct-method advance. Prefer [`Simulator`] in loops.
pub fn ssa_advance<R: Rng + ?Sized>(
    cell: &mut CellState,
    network: &ReactionNetwork,
    rates: &[f64],
    t_end: f64,
    rng: &mut R,
) -> Result<u64> {
    if rates.len() != network.n_reactions() {
        return Err(Error::Dimension { what: "rate vector", expected: network.n_reactions(), got: rates.len() });
    }
    if cell.counts.len() != network.n_species() {
        return Err(Error::Dimension { what: "cell state", expected: network.n_species(), got: cell.counts.len() });
    }
    if t_end < cell.t {
        return Err(Error::EmptyInterval { lo: cell.t, hi: t_end });
    }
    Ok(Simulator::new(network).advance(cell, rates, t_end, rng, &mut Vec::new()))
}

/// Key material shared by all cell streams of one run.
#[derive(Debug, Clone, Copy)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed).get_seed())
    }

    /// Generator for `cell` during sampling interval `epoch`; epoch 0 is
    /// reserved for initial conditions.
    pub fn rng(&self, cell: usize, epoch: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(cell as u64);
        rng.set_word_pos(u128::from(epoch) << 32);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Fixed(Vec<i64>),
    /// Independent uniform integers in `[lo_i, hi_i]` for every species.
    Uniform {
        lo: Vec<i64>,
        hi: Vec<i64>,
    },
}

impl InitialCondition {
    pub fn validate(&self, n_species: usize) -> Result<()> {
        let check = |v: &[i64], what: &'static str| {
            if v.len() != n_species {
                return Err(Error::Dimension { what, expected: n_species, got: v.len() });
            }
            if v.iter().any(|&x| x < 0) {
                return Err(Error::Config(format!("{what} must be nonnegative")));
            }
            Ok(())
        };
        match self {
            InitialCondition::Fixed(x) => check(x, "initial counts"),
            InitialCondition::Uniform { lo, hi } => {
                check(lo, "initial lower bounds")?;
                check(hi, "initial upper bounds")?;
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(Error::Config("initial lower bound exceeds upper bound".into()));
                }
                Ok(())
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<i64> {
        match self {
            InitialCondition::Fixed(x) => x.clone(),
            InitialCondition::Uniform { lo, hi } => lo.iter().zip(hi).map(|(&l, &h)| rng.random_range(l..=h)).collect(),
        }
    }

    /// Initial population, drawn from epoch 0 of each cell stream.
    pub fn population(&self, n_cells: usize, key: &StreamKey) -> Vec<CellState> {
        (0..n_cells).map(|c| CellState::new(self.sample(&mut key.rng(c, 0)))).collect()
    }
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Sampling period of the controller.
    pub ts: f64,
    pub horizon: f64,
    pub n_cells: usize,
    #[serde(default)]
    pub seed: u64,
    /// Species whose population statistics are fed back.
    #[serde(default)]
    pub measured_species: usize,
    /// Record every `record_stride` sampling periods.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Cells whose individual counts are recorded.
    #[serde(default)]
    pub tracked_cells: Vec<usize>,
}

impl SimConfig {
    /// Number of sampling periods, `T / Ts`.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.ts).round() as usize
    }

    pub fn validate(&self, n_species: usize) -> Result<()> {
        ensure_positive("ts", self.ts)?;
        ensure_positive("horizon", self.horizon)?;
        if self.ts > self.horizon {
            return Err(Error::Config(format!("ts = {} exceeds the horizon {}", self.ts, self.horizon)));
        }
        let ratio = self.horizon / self.ts;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Config("horizon must be an integer multiple of ts".into()));
        }
        if self.n_cells == 0 {
            return Err(Error::Config("n_cells must be positive".into()));
        }
        if self.measured_species >= n_species {
            return Err(Error::Config(format!("measured_species {} out of range", self.measured_species)));
        }
        if self.record_stride == 0 || !self.n_steps().is_multiple_of(self.record_stride) {
            return Err(Error::Config(format!(
                "record_stride {} must divide the {} sampling periods",
                self.record_stride,
                self.n_steps()
            )));
        }
        if self.tracked_cells.len() > MAX_TRACKED {
            return Err(Error::Config(format!("at most {MAX_TRACKED} tracked cells")));
        }
        if let Some(c) = self.tracked_cells.iter().find(|&&c| c >= self.n_cells) {
            return Err(Error::Config(format!("tracked cell {c} out of range")));
        }
        Ok(())
    }
}

/// How the network's control rates are driven.
#[derive(Debug, Clone, PartialEq)]
pub enum Actuation {
    /// Constant control values.
    Open(Vec<f64>),
    /// Sampled feedback on the population mean (and sample variance for two channels).
    Closed { law: ControlLaw, integrators: Vec<f64>, references: Vec<ReferenceSchedule> },
}

impl Actuation {
    pub fn n_inputs(&self) -> usize {
        match self {
            Actuation::Open(u) => u.len(),
            Actuation::Closed { law, .. } => law.n_inputs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub actuation: Actuation,
    /// Added to each input before clamping at zero.
    pub disturbance: DisturbanceSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub t: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Central fourth moment, for standard errors of the variance.
    pub fourth: Vec<f64>,
    /// Controller output held over `[t, t + Ts)`.
    pub control: Vec<f64>,
    pub integrator: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackedSample {
    pub t: f64,
    pub cell: usize,
    pub counts: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationRun {
    pub species: Vec<String>,
    pub n_cells: usize,
    pub stats: Vec<EnsembleStats>,
    pub tracked: Vec<TrackedSample>,
    pub cells: Vec<CellState>,
}

/// Sample mean and sample variance (divisor `N − 1`) of one species.
pub fn population_stats(cells: &[CellState], species: usize) -> (f64, f64) {
    let (m, v, _) = moments(cells, species);
    (m, v)
}

fn moments(cells: &[CellState], species: usize) -> (f64, f64, f64) {
    let n = cells.len() as f64;
    let mean = cells.iter().map(|c| c.counts[species] as f64).sum::<f64>() / n;
    let (mut s2, mut s4) = (0.0, 0.0);
    for c in cells {
        let d = c.counts[species] as f64 - mean;
        let d2 = d * d;
        s2 += d2;
        s4 += d2 * d2;
    }
    let var = if cells.len() > 1 { s2 / (n - 1.0) } else { 0.0 };
    (mean, var, s4 / n)
}

fn ensemble(cells: &[CellState], n_species: usize, t: f64, control: Vec<f64>, integrator: Vec<f64>) -> EnsembleStats {
    let mut s = EnsembleStats { t, mean: vec![], variance: vec![], fourth: vec![], control, integrator };
    for i in 0..n_species {
        let (m, v, f) = moments(cells, i);
        s.mean.push(m);
        s.variance.push(v);
        s.fourth.push(f);
    }
    s
}

/// Worker pool with an explicit thread count, or the global default.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Sampled-data feedback loop over an independent-cell population.
///
/// Each period: errors from the current population statistics, control
/// from the current integrators, integrator update, then every cell is
/// simulated over the period with the held input.
pub fn run_controlled_population(
    network: &ReactionNetwork,
    feedback: &Feedback,
    cfg: &SimConfig,
    initial: &InitialCondition,
    threads: Option<usize>,
) -> Result<PopulationRun> {
    let n_species = network.n_species();
    cfg.validate(n_species)?;
    initial.validate(n_species)?;
    let n_inputs = feedback.actuation.n_inputs();
    if network.n_controls() != n_inputs {
        return Err(Error::Config(format!(
            "network binds {} control inputs but the controller provides {n_inputs}",
            network.n_controls()
        )));
    }
    feedback.disturbance.validate(n_inputs)?;
    let (mut integrators, refs) = match &feedback.actuation {
        Actuation::Open(u) => {
            if u.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config("open-loop inputs must be finite and >= 0".into()));
            }
            (Vec::new(), Vec::new())
        }
        Actuation::Closed { law, integrators, references } => {
            if integrators.len() != law.n_channels() || references.len() != law.n_channels() {
                return Err(Error::Dimension {
                    what: "controller channels",
                    expected: law.n_channels(),
                    got: integrators.len().min(references.len()),
                });
            }
            if law.n_channels() == 2 && cfg.n_cells < 2 {
                return Err(Error::Config("variance feedback needs at least two cells".into()));
            }
            for r in references {
                r.validate(cfg.horizon)?;
            }
            (integrators.clone(), references.iter().map(|r| r.resolved(cfg.horizon)).collect::<Vec<_>>())
        }
    };

    let sim = Simulator::new(network);
    let key = StreamKey::new(cfg.seed);
    let pool = thread_pool(threads)?;
    let mut cells = initial.population(cfg.n_cells, &key);
    let n_steps = cfg.n_steps();
    let mut run = PopulationRun {
        species: network.species().to_vec(),
        n_cells: cfg.n_cells,
        stats: Vec::with_capacity(n_steps / cfg.record_stride + 1),
        tracked: Vec::new(),
        cells: Vec::new(),
    };

    let mut y = population_stats(&cells, cfg.measured_species);
    for step in 0..=n_steps {
        let t = step as f64 * cfg.ts;
        let (u, errors) = match &feedback.actuation {
            Actuation::Open(u) => (u.clone(), Vec::new()),
            Actuation::Closed { law, .. } => {
                let errors: Vec<f64> = refs.iter().zip([y.0, y.1]).map(|(r, yi)| r.value(t) - yi).collect();
                (law.output(&errors, &integrators), errors)
            }
        };
        if step % cfg.record_stride == 0 {
            run.stats.push(ensemble(&cells, n_species, t, u.clone(), integrators.clone()));
            for &c in &cfg.tracked_cells {
                run.tracked.push(TrackedSample { t, cell: c, counts: cells[c].counts.clone() });
            }
        }
        if step == n_steps {
            break;
        }
        for (i, e) in integrators.iter_mut().zip(&errors) {
            *i += cfg.ts * e;
        }
        let applied: Vec<f64> =
            u.iter().enumerate().map(|(j, &v)| (v + feedback.disturbance.value(t, j)).max(0.0)).collect();
        let rates = sim.rates(&applied)?;
        let t_next = (step + 1) as f64 * cfg.ts;
        let epoch = step as u64 + 1;
        pool.install(|| {
            cells.par_iter_mut().enumerate().for_each_init(Vec::new, |scratch, (c, cell)| {
                let mut rng = key.rng(c, epoch);
                sim.advance(cell, &rates, t_next, &mut rng, scratch);
            })
        });
        y = population_stats(&cells, cfg.measured_species);
    }
    run.cells = cells;
    Ok(run)
}

impl PopulationRun {
    /// Columns `t, mean_<species>…, var_<species>…, u…, I…`.
    pub fn to_trajectory(&self) -> Trajectory {
        let mut cols = vec!["t".to_string()];
        cols.extend(self.species.iter().map(|s| format!("mean_{s}")));
        cols.extend(self.species.iter().map(|s| format!("var_{s}")));
        let (nu, ni) = self.stats.first().map_or((0, 0), |s| (s.control.len(), s.integrator.len()));
        cols.extend((1..=nu).map(|i| format!("u{i}")));
        cols.extend((1..=ni).map(|i| format!("I{i}")));
        let mut tr = Trajectory::new(cols);
        for s in &self.stats {
            let mut row = vec![s.t];
            row.extend(&s.mean);
            row.extend(&s.variance);
            row.extend(&s.control);
            row.extend(&s.integrator);
            tr.rows.push(row);
        }
        tr
    }

    /// Per-cell dump with columns `t, cell, <species>…`.
    pub fn tracked_csv(&self) -> String {
        let mut out = format!("t,cell,{}\n", self.species.join(","));
        for s in &self.tracked {
            let counts: Vec<String> = s.counts.iter().map(i64::to_string).collect();
            out.push_str(&format!("{:.16e},{},{}\n", s.t, s.cell, counts.join(",")));
        }
        out
    }

    /// Time average of a statistic over `t ∈ [from, to]`.
    pub fn time_average(&self, from: f64, to: f64, f: impl Fn(&EnsembleStats) -> f64) -> f64 {
        let vals: Vec<f64> = self.stats.iter().filter(|s| s.t >= from && s.t <= to).map(f).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}
