mod analyze;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use momentctl::scenario::{self, Mode, Scenario, PRESETS};

/// Exit code for bad input: unknown test, invalid scenario, unreadable file.
const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "momentctl", version, about = "Moment-level control of stochastic reaction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for SSA runs; overrides the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for SSA runs (default: MOMENT_CTRL_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an analysis test; parameters as `--name value` or `--params <json|@file>`.
    ///
    /// Exit code 0: stable/true, 3: unstable/false, 4: inconclusive, 2: input error.
    Analyze {
        test: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        params: Vec<String>,
    },
    /// Simulate a scenario file or built-in preset.
    Simulate {
        /// Path to a scenario JSON file, or a preset name.
        scenario: String,
        /// ode or ssa; defaults to the scenario's own mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Write the tracked single-cell trajectories (SSA only) to this file.
        #[arg(long)]
        cells_out: Option<PathBuf>,
        /// Write a gnuplot script plotting the CSV given by --out.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
    /// List the built-in presets, or print one as JSON.
    Scenarios {
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Ode,
    Ssa,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Analyze { test, params } => {
            let p = analyze::Params::parse(params)?;
            let rep = analyze::run(test, &p)?;
            output::emit(cli.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&rep.json)?))?;
            Ok(rep.verdict.exit_code() as u8)
        }
        Command::Simulate { scenario, mode, cells_out, gnuplot } => {
            let sc = load_scenario(scenario)?;
            let mode = match mode {
                Some(ModeArg::Ode) => Mode::Ode,
                Some(ModeArg::Ssa) => Mode::Ssa,
                None => sc.mode,
            };
            simulate(cli, &sc, mode, cells_out.as_deref(), gnuplot.as_deref())?;
            Ok(0)
        }
        Command::Scenarios { show } => {
            let text = match show {
                Some(name) => format!("{}\n", scenario::preset(name)?.to_json()),
                None if cli.format == Format::Json => {
                    let list: Vec<_> =
                        PRESETS.iter().map(|(n, d)| serde_json::json!({ "name": n, "description": d })).collect();
                    format!("{}\n", serde_json::to_string_pretty(&list)?)
                }
                None => PRESETS.iter().map(|(n, d)| format!("{n:<26}{d}\n")).collect(),
            };
            output::emit(cli.out.as_deref(), &text)?;
            Ok(0)
        }
    }
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        return Ok(Scenario::from_json(&text)?);
    }
    if scenario::preset_names().contains(&arg) {
        return Ok(scenario::preset(arg)?);
    }
    bail!("`{arg}` is neither a scenario file nor a preset ({})", scenario::preset_names().join(", "))
}

fn threads(cli: &Cli) -> Result<Option<usize>> {
    if cli.threads.is_some() {
        return Ok(cli.threads);
    }
    match std::env::var("MOMENT_CTRL_THREADS") {
        Ok(v) => Ok(Some(v.trim().parse().context("MOMENT_CTRL_THREADS must be a positive integer")?)),
        Err(_) => Ok(None),
    }
}

fn simulate(cli: &Cli, sc: &Scenario, mode: Mode, cells_out: Option<&Path>, gnuplot: Option<&Path>) -> Result<()> {
    let mut meta = output::Metadata::new(sc, mode);
    let traj = match mode {
        Mode::Ode => sc.run_ode()?,
        Mode::Ssa => {
            let ssa = sc.ssa.as_ref().context("scenario has no ssa section")?;
            let seed = cli.seed.unwrap_or(ssa.seed);
            meta.push("seed", seed.to_string());
            meta.push("n_cells", ssa.n_cells.to_string());
            meta.push("ts", ssa.ts.to_string());
            let run = sc.run_ssa(Some(seed), threads(cli)?)?;
            if let Some(path) = cells_out {
                std::fs::write(path, format!("{}{}", meta.header(), run.tracked_csv()))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            run.to_trajectory()
        }
    };
    let text = match cli.format {
        Format::Csv => format!("{}{}", meta.header(), traj.to_csv()),
        Format::Json => output::trajectory_json(&meta, &traj)?,
    };
    output::emit(cli.out.as_deref(), &text)?;
    if let Some(path) = gnuplot {
        let data = cli.out.as_deref().context("--gnuplot needs --out so the script can refer to the data file")?;
        std::fs::write(path, output::gnuplot_script(data, &traj.columns, &sc.name))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
