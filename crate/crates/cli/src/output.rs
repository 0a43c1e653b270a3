use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use momentctl::moments::Trajectory;
use momentctl::scenario::{Mode, Scenario};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// `key: value` lines written as `#` comments above the CSV header.
pub struct Metadata(Vec<(String, String)>);

impl Metadata {
    pub fn new(sc: &Scenario, mode: Mode) -> Self {
        let mut m = Metadata(Vec::new());
        m.push("generator", format!("momentctl {}", env!("CARGO_PKG_VERSION")));
        m.push("mode", format!("{mode:?}").to_lowercase());
        m.push("config_sha256", config_hash(sc));
        for (k, v) in sc.summary() {
            m.push(&k, v);
        }
        m
    }

    pub fn push(&mut self, key: &str, value: String) {
        self.0.push((key.to_string(), value));
    }

    pub fn header(&self) -> String {
        self.0.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }

    fn to_json(&self) -> Value {
        Value::Object(self.0.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect::<Map<_, _>>())
    }
}

/// SHA-256 of the scenario's canonical JSON.
pub fn config_hash(sc: &Scenario) -> String {
    let canonical = serde_json::to_string(sc).expect("scenario serializes");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn trajectory_json(meta: &Metadata, traj: &Trajectory) -> Result<String> {
    let v = json!({ "metadata": meta.to_json(), "columns": traj.columns, "rows": traj.rows });
    Ok(format!("{}\n", serde_json::to_string(&v)?))
}

pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                // A closed reader (e.g. `| head`) is not an error.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

/// One panel per column group: states or means, variances, inputs, integrators.
pub fn gnuplot_script(data: &Path, columns: &[String], title: &str) -> String {
    type Group = (&'static str, fn(&str) -> bool);
    let groups: [Group; 4] = [
        ("moments", |c| c.starts_with('x') || c.starts_with("mean_")),
        ("variance", |c| c.starts_with("var_")),
        ("input", |c| c.starts_with('u')),
        ("integrator", |c| c.starts_with('I')),
    ];
    let panels: Vec<(&str, Vec<usize>)> = groups
        .iter()
        .map(|(name, pred)| (*name, columns.iter().enumerate().filter(|(_, c)| pred(c)).map(|(i, _)| i + 1).collect()))
        .filter(|(_, cols): &(&str, Vec<usize>)| !cols.is_empty())
        .collect();
    let mut s = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset multiplot layout {},1 title '{title}'\n",
        panels.len()
    );
    for (name, cols) in panels {
        let plots: Vec<String> = cols.iter().map(|c| format!("'{}' using 1:{c} with lines", data.display())).collect();
        s.push_str(&format!("set ylabel '{name}'\nplot {}\n", plots.join(", ")));
    }
    s.push_str("unset multiplot\n");
    s
}
