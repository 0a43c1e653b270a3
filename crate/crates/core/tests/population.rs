use momentctl::network::{library, Rate};
use momentctl::scenario::preset;
use momentctl::schedule::DisturbanceSchedule;
use momentctl::ssa::{run_controlled_population, Actuation, Feedback, InitialCondition, SimConfig};

fn open(u: Vec<f64>) -> Feedback {
    Feedback { actuation: Actuation::Open(u), disturbance: DisturbanceSchedule::none() }
}

fn config(ts: f64, horizon: f64, n_cells: usize, seed: u64, stride: usize, tracked: Vec<usize>) -> SimConfig {
    SimConfig { ts, horizon, n_cells, seed, measured_species: 1, record_stride: stride, tracked_cells: tracked }
}

#[test]
fn closed_loop_runs_identically_on_any_thread_count() {
    let mut sc = preset("dimer_population").unwrap();
    let ssa = sc.ssa.as_mut().unwrap();
    ssa.n_cells = 300;
    ssa.tracked_cells = vec![0, 7];
    sc.horizon = 5.0;
    let a = sc.run_ssa(Some(42), Some(1)).unwrap();
    let b = sc.run_ssa(Some(42), Some(3)).unwrap();
    assert_eq!(a.to_trajectory().to_csv(), b.to_trajectory().to_csv());
    assert_eq!(a.tracked_csv(), b.tracked_csv());
    assert_eq!(a.cells, b.cells);
    let c = sc.run_ssa(Some(43), Some(1)).unwrap();
    assert_ne!(a.cells, c.cells);
}

#[test]
fn states_stay_nonnegative() {
    let net = library::dimerization(Rate::Control(0), 3.0, 2.0, 1.0).unwrap();
    let init = InitialCondition::Uniform { lo: vec![0, 0], hi: vec![3, 3] };
    let run =
        run_controlled_population(&net, &open(vec![0.5]), &config(0.1, 20.0, 500, 3, 1, vec![]), &init, None).unwrap();
    assert!(run.cells.iter().all(|c| c.counts.iter().all(|&x| x >= 0)));
    assert!(run.stats.iter().all(|s| s.mean.iter().all(|&m| m >= 0.0)));
}

/// A single cell's time average over a long window agrees with the
/// stationary ensemble average (batch-means standard error).
#[test]
fn single_cell_time_average_matches_ensemble() {
    let net = library::dimerization(Rate::Const(8.0), 3.0, 2.0, 1.0).unwrap();
    let init = InitialCondition::Fixed(vec![0, 0]);
    let (burn, horizon) = (20.0, 2020.0);
    let run = run_controlled_population(&net, &open(vec![]), &config(0.5, horizon, 2000, 11, 1, vec![0]), &init, None)
        .unwrap();
    let ensemble = run.time_average(burn, horizon, |s| s.mean[1]);

    let series: Vec<f64> = run.tracked.iter().filter(|s| s.t >= burn).map(|s| s.counts[1] as f64).collect();
    let batches: Vec<f64> =
        series.chunks(series.len() / 40).take(40).map(|b| b.iter().sum::<f64>() / b.len() as f64).collect();
    let avg = batches.iter().sum::<f64>() / batches.len() as f64;
    let var = batches.iter().map(|b| (b - avg).powi(2)).sum::<f64>() / (batches.len() - 1) as f64;
    let se = (var / batches.len() as f64).sqrt();
    assert!((avg - ensemble).abs() < 4.0 * se, "cell {avg} ensemble {ensemble} se {se}");
}

#[test]
fn dimer_ode_preset_settles_on_reference() {
    let sc = preset("dimer_population").unwrap();
    let tr = sc.run_ode().unwrap();
    let last = tr.last().unwrap();
    assert_eq!(tr.columns, ["t", "x1", "x2", "u1", "I1"]);
    assert!((last[2] - 5.0).abs() < 1e-3, "{last:?}");
}
