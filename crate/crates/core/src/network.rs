//! Mass-action reaction networks.
//!
//! A [`ReactionNetwork`] is plain data: species names plus a list of
//! reactions of order at most two, each carrying a net stoichiometric change
//! and a rate constant. Rate constants can be marked as control inputs
//! (`"@u1"`, `"@u2"` in JSON) and are bound to numbers at simulation time.
//!
//! For networks whose propensities are affine in the state, the first two
//! moments obey the closed linear system built by [`build_moment_ode`].

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ensure_positive, invalid, Error, Result};

/// Rate constant of a reaction, either fixed or driven by a control channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Const(f64),
    /// Zero-based control channel; `Control(0)` is written `"@u1"`.
    Control(usize),
}

impl Rate {
    pub fn value(&self, controls: &[f64]) -> Result<f64> {
        match *self {
            Rate::Const(k) => Ok(k),
            Rate::Control(c) => {
                controls.get(c).copied().ok_or_else(|| Error::Config(format!("unbound control rate @u{}", c + 1)))
            }
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Const(k) => write!(f, "{k}"),
            Rate::Control(c) => write!(f, "@u{}", c + 1),
        }
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rate::Const(k) => s.serialize_f64(*k),
            Rate::Control(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(k) => Ok(Rate::Const(k)),
            Repr::Tag(tag) => {
                let idx = tag.strip_prefix("@u").and_then(|n| n.parse::<usize>().ok()).filter(|&n| n >= 1).ok_or_else(
                    || serde::de::Error::custom(format!("rate must be a number or \"@u<k>\", got \"{tag}\"")),
                )?;
                Ok(Rate::Control(idx - 1))
            }
        }
    }
}

/// One reaction channel with mass-action kinetics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    #[serde(default)]
    pub name: String,
    /// `(species index, multiplicity)` pairs.
    pub reactants: Vec<(usize, u8)>,
    /// Net change of every species when the reaction fires.
    pub stoich: Vec<i64>,
    pub rate: Rate,
}

/// Shape of a mass-action propensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kinetics {
    /// `k`
    Zero,
    /// `k x_i`
    First(usize),
    /// `(k/2) x_i (x_i - 1)`
    Homodimer(usize),
    /// `k x_i x_j`
    Bimolecular(usize, usize),
}

impl Kinetics {
    #[inline]
    pub fn propensity(self, rate: f64, x: &[i64]) -> f64 {
        match self {
            Kinetics::Zero => rate,
            Kinetics::First(i) => rate * x[i] as f64,
            Kinetics::Homodimer(i) => {
                let n = x[i] as f64;
                0.5 * rate * n * (n - 1.0)
            }
            Kinetics::Bimolecular(i, j) => rate * x[i] as f64 * x[j] as f64,
        }
    }

    pub fn order(self) -> usize {
        match self {
            Kinetics::Zero => 0,
            Kinetics::First(_) => 1,
            Kinetics::Homodimer(_) | Kinetics::Bimolecular(..) => 2,
        }
    }
}

impl Reaction {
    pub fn kinetics(&self) -> Kinetics {
        match self.reactants.as_slice() {
            [] => Kinetics::Zero,
            [(i, 1)] => Kinetics::First(*i),
            [(i, 2)] => Kinetics::Homodimer(*i),
            [(i, 1), (j, 1)] => Kinetics::Bimolecular(*i, *j),
            _ => unreachable!("reaction validated at network construction"),
        }
    }
}

/// A validated mass-action reaction network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
}

#[derive(Deserialize)]
struct NetworkRepr {
    species: Vec<String>,
    reactions: Vec<Reaction>,
}

impl<'de> Deserialize<'de> for ReactionNetwork {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = NetworkRepr::deserialize(d)?;
        ReactionNetwork::new(repr.species, repr.reactions).map_err(serde::de::Error::custom)
    }
}

impl ReactionNetwork {
    pub fn new(species: Vec<String>, mut reactions: Vec<Reaction>) -> Result<Self> {
        let n = species.len();
        if n == 0 {
            return Err(Error::InvalidNetwork("at least one species is required".into()));
        }
        for (k, r) in reactions.iter_mut().enumerate() {
            if r.name.is_empty() {
                r.name = format!("R{}", k + 1);
            }
            let name = &r.name;
            if r.stoich.len() != n {
                return Err(Error::Dimension { what: "stoichiometry vector", expected: n, got: r.stoich.len() });
            }
            if let Rate::Const(c) = r.rate {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::InvalidNetwork(format!(
                        "{name}: rate constant must be finite and >= 0, got {c}"
                    )));
                }
            }
            let mut order = 0u32;
            for (pos, &(i, m)) in r.reactants.iter().enumerate() {
                if i >= n {
                    return Err(Error::InvalidNetwork(format!(
                        "{name}: reactant index {i} out of range for {n} species"
                    )));
                }
                if !(m == 1 || m == 2) {
                    return Err(Error::InvalidNetwork(format!("{name}: multiplicity must be 1 or 2, got {m}")));
                }
                if r.reactants[..pos].iter().any(|&(j, _)| j == i) {
                    return Err(Error::InvalidNetwork(format!("{name}: species {i} listed twice; use multiplicity 2")));
                }
                order += u32::from(m);
            }
            if order > 2 {
                return Err(Error::InvalidNetwork(format!("{name}: total reactant order {order} exceeds 2")));
            }
            // Mass action only keeps counts nonnegative when every consumed
            // molecule is a reactant.
            for (i, &s) in r.stoich.iter().enumerate() {
                let consumed = r.reactants.iter().find(|&&(j, _)| j == i).map_or(0, |&(_, m)| i64::from(m));
                if s < -consumed {
                    return Err(Error::InvalidNetwork(format!(
                        "{name}: consumes {} of species {i} but only {consumed} are reactants",
                        -s
                    )));
                }
            }
            r.reactants.sort_unstable();
        }
        Ok(Self { species, reactions })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    /// Number of control channels referenced by `@u` rates.
    pub fn n_controls(&self) -> usize {
        self.reactions
            .iter()
            .filter_map(|r| match r.rate {
                Rate::Control(c) => Some(c + 1),
                Rate::Const(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Replace every control rate by the given numeric value.
    pub fn bind(&self, controls: &[f64]) -> Result<ReactionNetwork> {
        let mut out = self.clone();
        for r in &mut out.reactions {
            let k = r.rate.value(controls)?;
            if !(k.is_finite() && k >= 0.0) {
                return Err(invalid(&r.name, format!("bound rate must be >= 0, got {k}")));
            }
            r.rate = Rate::Const(k);
        }
        Ok(out)
    }

    /// Numeric rate vector for the given control values.
    pub fn rates(&self, controls: &[f64]) -> Result<Vec<f64>> {
        self.reactions.iter().map(|r| r.rate.value(controls)).collect()
    }

    /// Stoichiometry matrix `S` (`N x M`), one column per reaction.
    pub fn stoichiometry(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_species(), self.n_reactions(), |i, k| self.reactions[k].stoich[i] as f64)
    }

    fn check_state(&self, state: &[i64]) -> Result<()> {
        if state.len() != self.n_species() {
            return Err(Error::Dimension { what: "state", expected: self.n_species(), got: state.len() });
        }
        if let Some(x) = state.iter().find(|&&x| x < 0) {
            return Err(invalid("state", format!("counts must be nonnegative, got {x}")));
        }
        Ok(())
    }

    /// Propensities for an explicit rate vector.
    pub fn propensities_with(&self, state: &[i64], rates: &[f64]) -> Result<Vec<f64>> {
        self.check_state(state)?;
        if rates.len() != self.n_reactions() {
            return Err(Error::Dimension { what: "rate vector", expected: self.n_reactions(), got: rates.len() });
        }
        Ok(self.reactions.iter().zip(rates).map(|(r, &k)| r.kinetics().propensity(k, state)).collect())
    }
}

/// Mass-action propensity vector `w(x)`. Control rates must be bound first.
pub fn propensity_eval(network: &ReactionNetwork, state: &[i64]) -> Result<Vec<f64>> {
    let rates = network.rates(&[])?;
    network.propensities_with(state, &rates)
}

/// Affine propensity form `w(x) = W x + w0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDecomposition {
    pub w: DMatrix<f64>,
    pub w0: DVector<f64>,
}

pub fn affine_decompose(network: &ReactionNetwork) -> Result<AffineDecomposition> {
    let (n, m) = (network.n_species(), network.n_reactions());
    let mut w = DMatrix::zeros(m, n);
    let mut w0 = DVector::zeros(m);
    for (k, r) in network.reactions().iter().enumerate() {
        let rate = r.rate.value(&[])?;
        match r.kinetics() {
            Kinetics::Zero => w0[k] = rate,
            Kinetics::First(i) => w[(k, i)] = rate,
            Kinetics::Homodimer(_) | Kinetics::Bimolecular(..) => return Err(Error::NotAffine(r.name.clone())),
        }
    }
    Ok(AffineDecomposition { w, w0 })
}

/// Closed first- and second-moment dynamics of an affine network:
///
/// ```text
/// dE[X]/dt = S W E[X] + S w0
/// dΣ/dt    = S W Σ + Σ (S W)ᵀ + S diag(W E[X] + w0) Sᵀ
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMomentSystem {
    pub a_mean: DMatrix<f64>,
    pub b_mean: DVector<f64>,
    pub s: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub w0: DVector<f64>,
}

pub fn build_moment_ode(decomp: &AffineDecomposition, s: &DMatrix<f64>) -> Result<LinearMomentSystem> {
    let (m, n) = decomp.w.shape();
    if decomp.w0.len() != m {
        return Err(Error::Dimension { what: "w0", expected: m, got: decomp.w0.len() });
    }
    if s.nrows() != n || s.ncols() != m {
        return Err(Error::Dimension { what: "stoichiometry matrix", expected: n * m, got: s.nrows() * s.ncols() });
    }
    Ok(LinearMomentSystem {
        a_mean: s * &decomp.w,
        b_mean: s * &decomp.w0,
        s: s.clone(),
        w: decomp.w.clone(),
        w0: decomp.w0.clone(),
    })
}

impl LinearMomentSystem {
    pub fn n_species(&self) -> usize {
        self.a_mean.nrows()
    }

    pub fn mean_rhs(&self, mean: &DVector<f64>) -> DVector<f64> {
        &self.a_mean * mean + &self.b_mean
    }

    pub fn covariance_rhs(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let asig = &self.a_mean * cov;
        let flux = &self.w * mean + &self.w0;
        let noise = &self.s * DMatrix::from_diagonal(&flux) * self.s.transpose();
        &asig + asig.transpose() + noise
    }

    /// Length of the stacked state `(E[X], vech Σ)`.
    pub fn stacked_dim(&self) -> usize {
        let n = self.n_species();
        n + n * (n + 1) / 2
    }

    /// Stack mean and the row-major upper triangle of Σ; for two species this
    /// is `(x1, x2, Σ11, Σ12, Σ22)`.
    pub fn stack(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n_species();
        let mut out: Vec<f64> = mean.iter().copied().collect();
        for i in 0..n {
            for j in i..n {
                out.push(cov[(i, j)]);
            }
        }
        out
    }

    pub fn unstack(&self, z: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n_species();
        let mean = DVector::from_column_slice(&z[..n]);
        let mut cov = DMatrix::zeros(n, n);
        let mut idx = n;
        for i in 0..n {
            for j in i..n {
                cov[(i, j)] = z[idx];
                cov[(j, i)] = z[idx];
                idx += 1;
            }
        }
        (mean, cov)
    }

    pub fn stacked_rhs(&self, z: &[f64]) -> Vec<f64> {
        let (mean, cov) = self.unstack(z);
        let dm = self.mean_rhs(&mean);
        let dc = self.covariance_rhs(&mean, &cov);
        self.stack(&dm, &dc)
    }

    /// The stacked dynamics as `dz/dt = A z + b`.
    pub fn stacked_affine(&self) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.stacked_dim();
        let zero = vec![0.0; d];
        let b = DVector::from_vec(self.stacked_rhs(&zero));
        let mut a = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = zero.clone();
            e[j] = 1.0;
            let col = self.stacked_rhs(&e);
            for i in 0..d {
                a[(i, j)] = col[i] - b[i];
            }
        }
        (a, b)
    }
}

/// Quadratic polynomial `c + lᵀx + xᵀQx` in the species counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadPoly {
    pub constant: f64,
    pub linear: Vec<f64>,
    /// Symmetric coefficient matrix.
    pub quadratic: Vec<Vec<f64>>,
}

impl QuadPoly {
    fn zeros(n: usize) -> Self {
        Self { constant: 0.0, linear: vec![0.0; n], quadratic: vec![vec![0.0; n]; n] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for (i, &xi) in x.iter().enumerate() {
            v += self.linear[i] * xi;
            for (j, &xj) in x.iter().enumerate() {
                v += self.quadratic[i][j] * xi * xj;
            }
        }
        v
    }

    /// True when every quadratic coefficient is `<= 0`, which makes the
    /// quadratic form nonpositive on the nonnegative orthant.
    pub fn quadratic_nonpositive(&self) -> bool {
        self.quadratic.iter().flatten().all(|&q| q <= 0.0)
    }

    fn add_weighted(&mut self, kinetics: Kinetics, rate: f64, weight: f64) {
        let c = rate * weight;
        if c == 0.0 {
            return;
        }
        match kinetics {
            Kinetics::Zero => self.constant += c,
            Kinetics::First(i) => self.linear[i] += c,
            Kinetics::Homodimer(i) => {
                self.quadratic[i][i] += 0.5 * c;
                self.linear[i] -= 0.5 * c;
            }
            Kinetics::Bimolecular(i, j) => {
                self.quadratic[i][j] += 0.5 * c;
                self.quadratic[j][i] += 0.5 * c;
            }
        }
    }
}

fn generator_poly(network: &ReactionNetwork, nu: &[f64], power: i32) -> Result<QuadPoly> {
    if nu.len() != network.n_species() {
        return Err(Error::Dimension { what: "nu", expected: network.n_species(), got: nu.len() });
    }
    if let Some(&bad) = nu.iter().find(|&&v| !(v.is_finite() && v > 0.0)) {
        return Err(invalid("nu", format!("entries must be > 0, got {bad}")));
    }
    let mut poly = QuadPoly::zeros(nu.len());
    for r in network.reactions() {
        let jump: f64 = r.stoich.iter().zip(nu).map(|(&s, &v)| s as f64 * v).sum();
        poly.add_weighted(r.kinetics(), r.rate.value(&[])?, jump.powi(power));
    }
    Ok(poly)
}

/// Generator applied to the linear function `V(x) = νᵀx`:
/// `AV(x) = Σ_k w_k(x) νᵀs_k`.
pub fn apply_generator_linear(network: &ReactionNetwork, nu: &[f64]) -> Result<QuadPoly> {
    generator_poly(network, nu, 1)
}

/// `AV² − (AV)²` for `V(x) = νᵀx`, i.e. `Σ_k w_k(x) (νᵀs_k)²`.
pub fn apply_generator_square(network: &ReactionNetwork, nu: &[f64]) -> Result<QuadPoly> {
    generator_poly(network, nu, 2)
}

/// Foster-Lyapunov drift certificate for `V(x) = νᵀx`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub nu: Vec<f64>,
    pub satisfied: bool,
    /// The quadratic part of `AV` has a positive coefficient; coefficient-wise
    /// domination cannot decide.
    pub inconclusive: bool,
    pub witness: Option<String>,
}

/// Coefficient-wise check of `AV ≤ c1 − c2 V` and `AV² − (AV)² ≤ c3 + c4 V`.
///
/// Irreducibility of the state space is not checked and must be argued
/// separately for each network.
pub fn drift_check(network: &ReactionNetwork, nu: &[f64]) -> Result<DriftReport> {
    let first = apply_generator_linear(network, nu)?;
    let second = apply_generator_square(network, nu)?;

    let c1 = first.constant.max(0.0);
    // Largest admissible c2: every linear coefficient must satisfy a_i <= -c2 nu_i.
    let (worst, c2) = first
        .linear
        .iter()
        .zip(nu)
        .enumerate()
        .map(|(i, (&a, &v))| (i, -a / v))
        .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    let c3 = second.constant.max(0.0);
    let c4 = second.linear.iter().zip(nu).map(|(&a, &v)| (a / v).max(0.0)).fold(0.0, f64::max);

    let mut report = DriftReport {
        c1,
        c2: if c2.is_finite() { c2 } else { 0.0 },
        c3,
        c4,
        nu: nu.to_vec(),
        satisfied: false,
        inconclusive: false,
        witness: None,
    };

    if !first.quadratic_nonpositive() {
        report.inconclusive = true;
        report.witness = Some("AV has a positive quadratic coefficient".into());
    } else if !(c2 > 0.0) {
        report.witness = Some(format!(
            "linear coefficient of species {worst} in AV is {} (needs < 0)",
            first.linear.get(worst).copied().unwrap_or(0.0)
        ));
    } else if !second.quadratic_nonpositive() {
        report.witness = Some("AV^2 - (AV)^2 grows quadratically".into());
    } else {
        report.satisfied = true;
    }
    Ok(report)
}

/// Built-in networks.
pub mod library {
    use super::*;

    fn reaction(name: &str, reactants: &[(usize, u8)], stoich: &[i64], rate: Rate) -> Reaction {
        Reaction { name: name.into(), reactants: reactants.to_vec(), stoich: stoich.to_vec(), rate }
    }

    /// mRNA/protein gene expression: `∅ → M`, `M → ∅`, `M → M + P`, `P → ∅`.
    pub fn gene_expression(k_r: Rate, gamma_r: Rate, k_p: f64, gamma_p: f64) -> Result<ReactionNetwork> {
        ensure_positive("k_p", k_p)?;
        ensure_positive("gamma_p", gamma_p)?;
        ReactionNetwork::new(
            vec!["mRNA".into(), "protein".into()],
            vec![
                reaction("transcription", &[], &[1, 0], k_r),
                reaction("mRNA_degradation", &[(0, 1)], &[-1, 0], gamma_r),
                reaction("translation", &[(0, 1)], &[0, 1], Rate::Const(k_p)),
                reaction("protein_degradation", &[(1, 1)], &[0, -1], Rate::Const(gamma_p)),
            ],
        )
    }

    /// Protein production with dimerization: `∅ → S1`, `S1 + S1 → S2`,
    /// `S1 → ∅`, `S2 → ∅`.
    pub fn dimerization(k1: Rate, b: f64, gamma1: f64, gamma2: f64) -> Result<ReactionNetwork> {
        ReactionNetwork::new(
            vec!["monomer".into(), "dimer".into()],
            vec![
                reaction("production", &[], &[1, 0], k1),
                reaction("dimerization", &[(0, 2)], &[-2, 1], Rate::Const(b)),
                reaction("monomer_degradation", &[(0, 1)], &[-1, 0], Rate::Const(gamma1)),
                reaction("dimer_degradation", &[(1, 1)], &[0, -1], Rate::Const(gamma2)),
            ],
        )
    }

    /// Single-species birth-death process.
    pub fn birth_death(k: f64, gamma: f64) -> Result<ReactionNetwork> {
        ReactionNetwork::new(
            vec!["X".into()],
            vec![reaction("birth", &[], &[1], Rate::Const(k)), reaction("death", &[(0, 1)], &[-1], Rate::Const(gamma))],
        )
    }
}
