//! `analyze` subcommand: parameter parsing and dispatch to the analysis tests.

use anyhow::{anyhow, bail, Context, Result};
use momentctl::analysis::{dimer, mean, num, variance, StabilityVerdict, Verdict};
use momentctl::control::{MultiPIGains, PIGains};
use momentctl::linalg::log_grid;
use momentctl::moments::{DimerParams, GeneParams, NormalizedParams};
use momentctl::network::{drift_check, library, Rate, ReactionNetwork};
use momentctl::Error;
use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

pub const TESTS: [&str; 15] = [
    "local_pi",
    "robust_pi",
    "popov",
    "general_popov",
    "delay_margin",
    "disturbance_bounds",
    "admissible",
    "variance_jacobian",
    "perturbation",
    "dimer_kc",
    "dimer_equilibria",
    "dimer_variance_bound",
    "drift_check",
    "cv",
    "min_variance",
];

/// Named parameters from `--name value` pairs and `--params <json|@file>`.
pub struct Params(Map<String, Value>);

impl Params {
    pub fn parse(args: &[String]) -> Result<Self> {
        let mut map = Map::new();
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let (key, inline) = match flag.strip_prefix("--") {
                Some(rest) => match rest.split_once('=') {
                    Some((k, v)) => (k.to_string(), Some(v.to_string())),
                    None => (rest.to_string(), None),
                },
                None => bail!("unexpected argument `{flag}`; parameters are given as --name value"),
            };
            let raw = match inline {
                Some(v) => v,
                None => it.next().cloned().ok_or_else(|| anyhow!("missing value for --{key}"))?,
            };
            if key == "params" {
                let text = match raw.strip_prefix('@') {
                    Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?,
                    None => raw,
                };
                match serde_json::from_str(&text).context("--params must be a JSON object")? {
                    Value::Object(obj) => map.extend(obj),
                    _ => bail!("--params must be a JSON object"),
                }
            } else {
                let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
                map.insert(key.replace('-', "_"), value);
            }
        }
        Ok(Self(map))
    }

    fn opt(&self, name: &str) -> Result<Option<f64>> {
        match self.0.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v.as_f64().map(Some).ok_or_else(|| anyhow!("parameter `{name}` must be a number, got {v}")),
        }
    }

    fn f(&self, name: &str) -> Result<f64> {
        self.opt(name)?.ok_or_else(|| anyhow!("missing parameter --{name}"))
    }

    fn or(&self, name: &str, default: f64) -> Result<f64> {
        Ok(self.opt(name)?.unwrap_or(default))
    }

    fn vec(&self, name: &str) -> Result<Option<Vec<f64>>> {
        match self.0.get(name) {
            None => Ok(None),
            Some(v) => Ok(Some(
                serde_json::from_value(v.clone()).with_context(|| format!("`{name}` must be a list of numbers"))?,
            )),
        }
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let rows: Vec<Vec<f64>> =
            serde_json::from_value(self.0.get(name).cloned().ok_or_else(|| anyhow!("missing matrix `{name}`"))?)
                .with_context(|| format!("`{name}` must be a list of rows"))?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
            bail!("matrix `{name}` must be nonempty and rectangular");
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }

    fn gene(&self) -> Result<GeneParams> {
        Ok(GeneParams::new(self.f("kp")?, self.f("gp")?, self.f("gr")?)?)
    }

    fn pi(&self) -> Result<PIGains> {
        Ok(PIGains::new(self.f("k1")?, self.f("k2")?)?)
    }

    fn dimer(&self) -> Result<DimerParams> {
        Ok(DimerParams::new(self.f("b")?, self.f("gamma1")?, self.f("gamma2")?)?)
    }

    fn multi_pi(&self) -> Result<MultiPIGains> {
        let mut k = [0.0; 8];
        for (i, slot) in k.iter_mut().enumerate() {
            *slot = self.or(&format!("k{}", i + 1), 0.0)?;
        }
        Ok(MultiPIGains::new(k)?)
    }

    fn reference(&self) -> Result<variance::ReferencePair> {
        Ok(variance::ReferencePair::new(self.f("mu")?, self.f("sigma2")?)?)
    }

    fn saturation(&self) -> Result<Option<(f64, f64)>> {
        match (self.opt("mu")?, self.opt("ubar")?) {
            (Some(mu), Some(ub)) => Ok(Some((mu, ub))),
            (None, Some(_)) => bail!("--ubar needs --mu"),
            _ => Ok(None),
        }
    }
}

/// A decided test: verdict, margin and the full JSON report.
pub struct Report {
    pub verdict: Verdict,
    pub json: Value,
}

fn report(test: &str, v: StabilityVerdict, extra: Value) -> Report {
    let mut out = json!({ "test": test, "verdict": v.verdict, "margin": num(v.margin), "witness": v.witness });
    if let (Value::Object(o), Value::Object(e)) = (&mut out, extra) {
        o.extend(e);
    }
    Report { verdict: v.verdict, json: out }
}

fn value_report(test: &str, key: &str, value: f64) -> Report {
    report(test, StabilityVerdict::new(Verdict::Stable, value), json!({ key: num(value) }))
}

pub fn run(test: &str, p: &Params) -> Result<Report> {
    Ok(match test {
        "local_pi" => report(test, mean::local_pi_test(&p.pi()?, &p.gene()?), json!({})),
        "robust_pi" => {
            let mut bx = mean::ParamBoxMu::new(p.f("kp_max")?, p.f("gp_min")?, p.f("gr_min")?)?;
            bx.kp_min = p.opt("kp_min")?;
            bx.gp_max = p.opt("gp_max")?;
            bx.gr_max = p.opt("gr_max")?;
            bx.validate()?;
            let g = p.pi()?;
            let v = mean::robust_pi_test(&g, &bx).with("popov_robust_corollary", mean::popov_robust_corollary(&g, &bx));
            report(test, v, json!({}))
        }
        "popov" => {
            let grid = match p.opt("q")? {
                Some(q) => vec![q],
                None => mean::default_q_grid(),
            };
            report(test, mean::popov_test(&p.pi()?, &p.gene()?, &grid, p.saturation()?), json!({}))
        }
        "general_popov" => {
            let sys = if p.0.get("a").is_some() {
                mean::PopovSystem {
                    a: p.matrix("a")?,
                    b: p.matrix("b")?,
                    c: p.matrix("c")?,
                    k1: p.matrix("k1")?,
                    k2: p.matrix("k2")?,
                    n: p.matrix("n")?,
                    z: p.matrix("z")?,
                }
            } else {
                mean::scalar_popov_system(&p.pi()?, &p.gene()?, p.or("q", 0.0)?)
            };
            let n = p.or("n_omega", 2000.0)? as usize;
            let grid = log_grid(p.or("omega_min", 1e-4)?, p.or("omega_max", 1e4)?, n.max(1));
            report(test, mean::general_popov_sweep(&sys, &grid, p.or("tol", 0.0)?)?, json!({}))
        }
        "delay_margin" => {
            let m = mean::delay_margin(&p.pi()?, &p.gene()?)?;
            let v = StabilityVerdict::new(Verdict::from_bool(m.stable_without_delay), m.h_c)
                .with("omega_c", num(m.omega_c))
                .with("phase", num(m.phase));
            report(test, v, json!({ "h_c": num(m.h_c), "omega_c": num(m.omega_c) }))
        }
        "disturbance_bounds" => {
            let mu = p.f("mu")?;
            let ubar = p.opt("ubar")?;
            let interval = if p.0.contains_key("kp_max") {
                let mut bx = mean::ParamBoxMu::new(p.f("kp_max")?, p.f("gp_min")?, p.f("gr_min")?)?;
                bx.kp_min = p.opt("kp_min")?;
                bx.gp_max = p.opt("gp_max")?;
                bx.gr_max = p.opt("gr_max")?;
                mean::robust_disturbance_bounds(mu, &bx, ubar)
            } else {
                mean::disturbance_bounds(mu, &p.gene()?, ubar)
            };
            match interval {
                Ok(iv) => {
                    let (verdict, margin) = match p.opt("delta")? {
                        Some(d) => (Verdict::from_bool(iv.contains(d)), (d - iv.lo).min(iv.hi - d)),
                        None => (Verdict::Stable, iv.hi - iv.lo),
                    };
                    report(test, StabilityVerdict::new(verdict, margin), json!({ "lo": num(iv.lo), "hi": num(iv.hi) }))
                }
                Err(Error::EmptyInterval { lo, hi }) => report(
                    test,
                    StabilityVerdict::new(Verdict::Unstable, hi - lo).with("reason", "empty interval"),
                    json!({ "lo": num(lo), "hi": num(hi) }),
                ),
                Err(e) => return Err(e.into()),
            }
        }
        "admissible" => {
            let r = p.reference()?;
            let (kp, gp) = (p.f("kp")?, p.f("gp")?);
            let (lo, hi) = variance::variance_bounds(r.mean, kp, gp);
            let ok = variance::admissible(&r, kp, gp);
            let v = StabilityVerdict::new(Verdict::from_bool(ok), (r.variance - lo).min(hi - r.variance))
                .with("variance_lo", num(lo))
                .with("variance_hi", num(hi));
            report(test, v, json!({ "admissible": ok }))
        }
        "variance_jacobian" => {
            let (r, g, k) = (p.reference()?, p.gene()?, p.multi_pi()?);
            let det = variance::variance_jacobian_det(&r, &g, &k);
            report(test, variance::variance_loop_test(&r, &g, &k)?, json!({ "determinant": num(det) }))
        }
        "perturbation" => {
            let (r, g) = (p.reference()?, p.gene()?);
            let v = variance::perturbation_test(p.f("d2")?, p.f("d8")?, &r, &g)
                .with("semi_global_ratio", num(variance::semi_global_ratio(&r, g.k_p, g.gamma_p)))
                .with("semi_global_sup", num(variance::semi_global_sup(g.k_p, g.gamma_p)));
            report(test, v, json!({}))
        }
        "dimer_kc" => {
            let (g1, g2) = (p.f("gamma1")?, p.f("gamma2")?);
            let bound = dimer::dimer_kc_bound(g1, g2);
            let b = p.or("b", 1.0)?;
            let dp = DimerParams::new(b, g1, g2)?;
            let v = match p.opt("kc")? {
                Some(kc) => dimer::dimer_kc_test(kc, &dp),
                None => StabilityVerdict::new(Verdict::Stable, bound).with("kc_bound", num(bound)),
            };
            report(test, v, json!({ "bound": num(bound) }))
        }
        "dimer_equilibria" => {
            let v = dimer::dimer_equilibria_test(p.f("mu")?, p.f("v")?, &p.dimer()?, p.f("kc")?)?;
            report(test, v, json!({}))
        }
        "dimer_variance_bound" => {
            let bound = dimer::dimer_variance_bound(p.f("mu")?, p.f("gamma2")?, p.f("b")?);
            let v = match p.opt("v")? {
                Some(v) => StabilityVerdict::new(Verdict::from_bool(v <= bound), bound - v),
                None => StabilityVerdict::new(Verdict::Stable, bound),
            };
            report(test, v, json!({ "bound": num(bound) }))
        }
        "drift_check" => {
            let net = drift_network(p)?;
            let nu = p.vec("nu")?.unwrap_or_else(|| vec![1.0; net.n_species()]);
            let rep = drift_check(&net, &nu)?;
            let verdict = if rep.inconclusive { Verdict::Unknown } else { Verdict::from_bool(rep.satisfied) };
            let v = StabilityVerdict::new(verdict, rep.c2);
            report(test, v, json!({ "report": rep }))
        }
        "cv" => value_report(test, "cv", mean::coefficient_of_variation(p.f("mu")?, &p.gene()?)?),
        "min_variance" => {
            let np = NormalizedParams::new(p.f("gr0")?, p.f("gp")?, p.f("b")?, p.f("kp")?)?;
            value_report(test, "min_variance", variance::min_variance_normalized(p.f("mu")?, &np)?)
        }
        other => bail!("unknown test `{other}`; available: {}", TESTS.join(", ")),
    })
}

/// `--network dimer|gene|birth_death` with rate flags, or a full network object.
fn drift_network(p: &Params) -> Result<ReactionNetwork> {
    match p.0.get("network") {
        Some(Value::Object(_)) => Ok(serde_json::from_value(p.0["network"].clone())?),
        Some(Value::String(name)) => Ok(match name.as_str() {
            "dimer" => library::dimerization(Rate::Const(p.f("k1")?), p.or("b", 1.0)?, p.f("gamma1")?, p.f("gamma2")?)?,
            "gene" => {
                library::gene_expression(Rate::Const(p.f("kr")?), Rate::Const(p.f("gr")?), p.f("kp")?, p.f("gp")?)?
            }
            "birth_death" => library::birth_death(p.f("k")?, p.f("gamma")?)?,
            other => bail!("unknown network `{other}`; use dimer, gene, birth_death or a JSON object"),
        }),
        _ => bail!("missing --network (dimer, gene, birth_death or a JSON object)"),
    }
}
