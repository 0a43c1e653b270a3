use momentctl::analysis::{dimer, mean, variance};
use momentctl::control::{clamp, Clamp, ControlLaw, DiscreteController, PIGains};
use momentctl::linalg::spectral_abscissa;
use momentctl::moments::{
    dimer_rhs, gene_full_rhs, gene_mean_rhs, integrate, ClosedLoop, DimerParams, FnSystem, GeneParams, Plant,
    VarianceInput,
};
use momentctl::network::{
    affine_decompose, apply_generator_linear, build_moment_ode, library, propensity_eval, Rate, Reaction,
    ReactionNetwork,
};
use momentctl::schedule::{DisturbanceSchedule, ReferenceSchedule};
use nalgebra::DVector;
use proptest::prelude::*;

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

fn gene_params() -> impl Strategy<Value = GeneParams> {
    (log_uniform(1e-2, 1e2), log_uniform(1e-2, 1e2), log_uniform(1e-2, 1e2))
        .prop_map(|(kp, gp, gr)| GeneParams::new(kp, gp, gr).unwrap())
}

fn dimer_params() -> impl Strategy<Value = DimerParams> {
    (log_uniform(0.1, 10.0), log_uniform(0.1, 10.0), log_uniform(0.1, 10.0))
        .prop_map(|(b, g1, g2)| DimerParams::new(b, g1, g2).unwrap())
}

/// Random network whose reactions have at most one reactant molecule.
fn affine_network() -> impl Strategy<Value = ReactionNetwork> {
    (1usize..4).prop_flat_map(|n| {
        let reaction = (prop::option::of(0..n), prop::collection::vec(-2i64..3, n), log_uniform(0.1, 10.0));
        prop::collection::vec(reaction, 1..6).prop_map(move |rs| {
            let reactions = rs
                .into_iter()
                .enumerate()
                .map(|(i, (reactant, stoich, rate))| Reaction {
                    name: format!("r{i}"),
                    reactants: reactant.map(|s| vec![(s, 1)]).unwrap_or_default(),
                    // A reaction can only consume its own reactant.
                    stoich: stoich
                        .iter()
                        .enumerate()
                        .map(|(s, &d)| d.max(if reactant == Some(s) { -1 } else { 0 }))
                        .collect(),
                    rate: Rate::Const(rate),
                })
                .collect();
            ReactionNetwork::new((0..n).map(|i| format!("S{i}")).collect(), reactions).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn moment_mean_field_is_stoichiometry_times_propensity(net in affine_network(), seed in prop::collection::vec(0i64..50, 3)) {
        let x: Vec<i64> = seed[..net.n_species()].to_vec();
        let sys = build_moment_ode(&affine_decompose(&net).unwrap(), &net.stoichiometry()).unwrap();
        let mean = DVector::from_iterator(x.len(), x.iter().map(|&v| v as f64));
        let lhs = sys.mean_rhs(&mean);
        let w = DVector::from_vec(propensity_eval(&net, &x).unwrap());
        let rhs = net.stoichiometry() * w;
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn propensities_nonnegative_and_zero_without_reactants(
        k1 in 0.0..10.0f64, p in dimer_params(), x in prop::collection::vec(0i64..6, 2),
    ) {
        let net = library::dimerization(Rate::Const(k1), p.b, p.gamma1, p.gamma2).unwrap();
        let w = propensity_eval(&net, &x).unwrap();
        for (r, wk) in net.reactions().iter().zip(&w) {
            prop_assert!(*wk >= 0.0);
            if r.reactants.iter().any(|&(s, m)| x[s] < m as i64) {
                prop_assert_eq!(*wk, 0.0);
            }
        }
    }

    #[test]
    fn generator_is_linear_in_nu(
        k1 in 0.0..10.0f64, p in dimer_params(),
        nu1 in prop::collection::vec(0.1..5.0f64, 2), nu2 in prop::collection::vec(0.1..5.0f64, 2),
        a in 0.1..3.0f64, b in 0.1..3.0f64,
    ) {
        let net = library::dimerization(Rate::Const(k1), p.b, p.gamma1, p.gamma2).unwrap();
        let nu: Vec<f64> = nu1.iter().zip(&nu2).map(|(x, y)| a * x + b * y).collect();
        let (l, l1, l2) = (
            apply_generator_linear(&net, &nu).unwrap(),
            apply_generator_linear(&net, &nu1).unwrap(),
            apply_generator_linear(&net, &nu2).unwrap(),
        );
        for x in [[0.0, 0.0], [1.0, 2.0], [3.5, 0.5]] {
            let want = a * l1.eval(&x) + b * l2.eval(&x);
            prop_assert!((l.eval(&x) - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
        if (nu[1] - 2.0 * nu[0]).abs() < 1e-15 {
            prop_assert!(l.quadratic_nonpositive());
        }
    }

    #[test]
    fn dimer_generator_quadratic_cancels(k1 in 0.0..10.0f64, p in dimer_params(), s in 0.1..10.0f64) {
        let net = library::dimerization(Rate::Const(k1), p.b, p.gamma1, p.gamma2).unwrap();
        let l = apply_generator_linear(&net, &[s, 2.0 * s]).unwrap();
        let q = |x: [f64; 2]| l.eval(&x);
        // Second difference along each axis and the cross term vanish.
        let (h, x0) = (1.0, [2.0, 3.0]);
        let dxx = q([x0[0] + h, x0[1]]) - 2.0 * q(x0) + q([x0[0] - h, x0[1]]);
        let dxy = q([x0[0] + h, x0[1] + h]) - q([x0[0] + h, x0[1]]) - q([x0[0], x0[1] + h]) + q(x0);
        prop_assert!(dxx.abs() < 1e-9 && dxy.abs() < 1e-9, "{dxx} {dxy}");
    }

    #[test]
    fn bilinear_form_matches_network_moments(
        p in gene_params(), kr in 0.1..10.0f64, x in prop::collection::vec(0.0..50.0f64, 5),
    ) {
        let net = library::gene_expression(Rate::Const(kr), Rate::Const(p.gamma_r), p.k_p, p.gamma_p).unwrap();
        let sys = build_moment_ode(&affine_decompose(&net).unwrap(), &net.stoichiometry()).unwrap();
        // State: mean mRNA, mean protein, then the covariance entries.
        let f = gene_full_rhs(&[x[0], x[1], x[2], x[3], x[4]], kr, p.gamma_r, &p);
        let want = sys.stacked_rhs(&x);
        for (a, b) in f.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{f:?} vs {want:?}");
        }
    }

    #[test]
    fn mean_equilibrium_is_stationary(p in gene_params(), mu in 0.1..100.0f64, k2 in 1e-3..1.0f64) {
        let eq = mean::mean_equilibrium(mu, &p, k2, None).unwrap();
        let r = gene_mean_rhs([eq.x1, eq.x2], eq.u, &p);
        prop_assert!(r[0].abs() < 1e-12 * (1.0 + eq.u) && r[1].abs() < 1e-12 * (1.0 + mu), "{r:?}");
    }

    #[test]
    fn variance_equilibrium_is_stationary(p in gene_params(), mu in 0.5..50.0f64, frac in 0.05..0.95f64) {
        let (lo, hi) = variance::variance_bounds(mu, p.k_p, p.gamma_p);
        let r = variance::ReferencePair::new(mu, lo + frac * (hi - lo)).unwrap();
        let (u1, u2) = variance::equilibrium_inputs(&r, &p);
        let eq = variance::variance_equilibrium(
            &r, &p, &momentctl::control::MultiPIGains::new([0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]).unwrap(),
        ).unwrap();
        let rhs = gene_full_rhs(&eq.x, u1, u2, &p);
        let scale = eq.x.iter().fold(1.0f64, |m, v| m.max(v.abs())) * (1.0 + u1 + u2 + p.k_p + p.gamma_p);
        for d in rhs {
            prop_assert!(d.abs() < 1e-12 * scale, "{rhs:?}");
        }
    }

    #[test]
    fn admissible_iff_positive_inputs(p in gene_params(), mu in 0.1..50.0f64, s in 0.01..200.0f64) {
        let r = variance::ReferencePair::new(mu, s).unwrap();
        let (lo, hi) = variance::variance_bounds(mu, p.k_p, p.gamma_p);
        prop_assume!((s - lo).abs() > 1e-5 * hi && (s - hi).abs() > 1e-5 * hi);
        let (u1, u2) = variance::equilibrium_inputs(&r, &p);
        prop_assert_eq!(variance::admissible(&r, p.k_p, p.gamma_p), u1 > 0.0 && u2 > 0.0);
    }

    #[test]
    fn dimer_equilibria_are_stationary_and_bounds_match_eigenvalues(
        p in dimer_params(), mu in 0.5..20.0f64, v_frac in 0.0..1.2f64, kc in log_uniform(0.01, 100.0),
    ) {
        let v = v_frac * dimer::dimer_variance_bound(mu, p.gamma2, p.b);
        for e in dimer::dimer_equilibria(mu, v, &p, kc).unwrap() {
            let r = dimer_rhs([e.x1, e.x2], kc * e.integrator, v, &p);
            prop_assert!(r[0].abs() < 1e-9 * (1.0 + kc * e.integrator) && r[1].abs() < 1e-9 * (1.0 + mu));
            let abscissa = dimer::dimer_equilibrium_abscissa(&e, kc, &p);
            match e.stable_bound {
                Some(b) if (b - kc).abs() > 1e-6 * b => prop_assert_eq!(abscissa < 0.0, kc < b),
                None => prop_assert!(abscissa >= -1e-12),
                _ => {}
            }
        }
    }

    #[test]
    fn kc_bound_is_the_minimum_of_f(p in dimer_params(), z in log_uniform(1e-3, 1e3)) {
        let bound = dimer::dimer_kc_bound(p.gamma1, p.gamma2);
        prop_assert!(dimer::kc_bound_at(z, &p) >= bound * (1.0 - 1e-12));
        let zs = dimer::kc_bound_minimizer(&p);
        prop_assert!((dimer::kc_bound_at(zs, &p) - bound).abs() < 1e-9 * bound);
    }

    #[test]
    fn clamp_is_in_sector(z in -1e6..1e6f64, ub in prop::option::of(0.01..100.0f64)) {
        let c = Clamp::new(ub).unwrap();
        let u = clamp(z, c);
        prop_assert!(u >= 0.0 && u.is_finite());
        if let Some(ub) = ub {
            prop_assert!(u <= ub);
        }
        let free = clamp(z, Clamp::NONE);
        prop_assert!(free * z >= 0.0);
        if z >= 0.0 {
            prop_assert!(free <= z);
        }
    }

    #[test]
    fn local_pi_is_hurwitz_of_loop_matrix(p in gene_params(), k1 in log_uniform(1e-3, 1e2), k2 in log_uniform(1e-3, 1e2)) {
        let g = PIGains::new(k1, k2).unwrap();
        prop_assume!(!mean::near_local_boundary(&g, &p));
        let v = mean::local_pi_test(&g, &p);
        prop_assert_eq!(v.is_stable(), spectral_abscissa(&mean::pi_loop_matrix(&g, &p)) < 0.0);
    }

    #[test]
    fn popov_stable_implies_positive_frequency_function(p in gene_params(), k1 in log_uniform(1e-3, 1e2), k2 in log_uniform(1e-3, 1e2)) {
        let g = PIGains::new(k1, k2).unwrap();
        let v = mean::popov_test(&g, &p, &mean::default_q_grid(), None);
        if v.is_stable() {
            let q = v.witness["q"].as_f64().unwrap();
            for w in momentctl::linalg::log_grid(1e-4, 1e4, 400) {
                prop_assert!(mean::popov_frequency_value(&g, &p, q, w) > 0.0);
            }
        }
        if mean::popov_corollary(&g, &p) {
            prop_assert!(v.is_stable());
        }
    }

    #[test]
    fn perturbation_verdict_matches_eigenvalues(
        p in gene_params(), mu in 0.5..50.0f64, frac in 0.02..0.98f64,
        d2 in -1.0..1.0f64, d8 in -1.0..1.0f64,
    ) {
        let (lo, hi) = variance::variance_bounds(mu, p.k_p, p.gamma_p);
        let r = variance::ReferencePair::new(mu, lo + frac * (hi - lo)).unwrap();
        let v = variance::perturbation_test(d2, d8, &r, &p);
        prop_assume!(v.margin.abs() > 1e-6);
        let m = variance::perturbation_matrix(d2, d8, &r, &p);
        let ev = m.complex_eigenvalues();
        prop_assert_eq!(v.is_stable(), ev.iter().all(|e| e.re < 0.0));
    }
}

#[test]
fn rk4_is_fourth_order_on_gene_mean() {
    let p = GeneParams::new(2.0, 1.0, 3.0).unwrap();
    let run = |dt: f64| {
        let mut sys = FnSystem::new(2, |_t: f64, x: &[f64], dx: &mut [f64]| {
            let r = gene_mean_rhs([x[0], x[1]], 1.0 + x[1].sin(), &p);
            dx.copy_from_slice(&r);
        });
        integrate(&mut sys, &[0.0, 0.0], 0.0, 4.0, dt, usize::MAX, |_, _| {}).unwrap()
    };
    let reference = run(0.05 / 16.0);
    let err = |dt: f64| {
        let x = run(dt);
        ((x[0] - reference[0]).powi(2) + (x[1] - reference[1]).powi(2)).sqrt()
    };
    let ratio = err(0.1) / err(0.05);
    assert!((ratio - 16.0).abs() < 3.0, "ratio {ratio}");
}

/// Variance inputs are tied to the state so that `E[X1(X1 - 1)] >= 0` and
/// `v = 0` at `x1 = 0`, as for any distribution on the nonnegative integers.
#[test]
fn dimer_trajectories_stay_nonnegative() {
    let p = DimerParams::new(3.0, 2.0, 1.0).unwrap();
    let cases = [(0.0, 1.0, [0.0, 0.0]), (5.0, 1.0, [0.0, 3.0]), (0.1, 2.5, [4.0, 0.0]), (20.0, 1.5, [1.0, 1.0])];
    for (k1, c, x0) in cases {
        let mut sys = FnSystem::new(2, |_t: f64, x: &[f64], dx: &mut [f64]| {
            dx.copy_from_slice(&dimer_rhs([x[0], x[1]], k1, c * x[0].max(0.0), &p));
        });
        let mut min = f64::INFINITY;
        integrate(&mut sys, &x0, 0.0, 20.0, 1e-3, 1, |_, x| min = min.min(x[0]).min(x[1])).unwrap();
        assert!(min >= -1e-9, "k1={k1} c={c}: {min}");
    }
}

#[test]
fn discrete_loop_converges_to_continuous_at_first_order() {
    let p = GeneParams::new(1.0, 1.0, 1.0).unwrap();
    let g = PIGains::new(0.5, 0.4).unwrap();
    let law = ControlLaw::Pi { gains: g, clamp: Clamp::NONE };
    let (mu, t_end) = (2.0, 5.0);
    let mut lp =
        ClosedLoop::new(Plant::GeneMean(p), law, vec![ReferenceSchedule::constant(mu)], DisturbanceSchedule::none())
            .unwrap();
    let cont = lp.simulate(&[0.0, 0.0], &[0.0], t_end, 1e-4, 1000).unwrap();
    let exact = cont.last().unwrap()[2];

    let sampled = |ts: f64| {
        let mut c = DiscreteController::new(law, vec![0.0], ts).unwrap();
        let mut x = vec![0.0, 0.0];
        for _ in 0..(t_end / ts).round() as usize {
            let u = c.update(&[mu - x[1]])[0];
            let mut sys = FnSystem::new(2, |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy.copy_from_slice(&gene_mean_rhs([y[0], y[1]], u, &p));
            });
            x = integrate(&mut sys, &x, 0.0, ts, ts / 20.0, usize::MAX, |_, _| {}).unwrap();
        }
        (x[1] - exact).abs()
    };
    let (e1, e2) = (sampled(0.02), sampled(0.01));
    let ratio = e1 / e2;
    assert!((ratio - 2.0).abs() < 0.3, "errors {e1} {e2} ratio {ratio}");
}

#[test]
fn dimer_plant_with_constant_variance_settles_on_case_one_equilibrium() {
    let p = DimerParams::new(3.0, 2.0, 1.0).unwrap();
    let law = ControlLaw::Integral { kc: 1.0, clamp: Clamp::NONE };
    let plant = Plant::Dimer { params: p, variance: VarianceInput::Constant(1.5) };
    let mut lp =
        ClosedLoop::new(plant, law, vec![ReferenceSchedule::constant(5.0)], DisturbanceSchedule::none()).unwrap();
    let eq = dimer::dimer_equilibria(5.0, 1.5, &p, 1.0).unwrap()[0];
    let tr = lp.simulate(&[eq.x1, 4.0], &[0.9 * eq.integrator], 60.0, 1e-3, 1000).unwrap();
    let last = tr.last().unwrap();
    assert!((last[1] - eq.x1).abs() < 1e-6 && (last[2] - 5.0).abs() < 1e-6, "{last:?}");
    assert!((last[4] - eq.integrator).abs() < 1e-5);
}
