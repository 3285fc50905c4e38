mod common;

use common::*;
use consensus_net::analysis::{
    averaged_model, consensus_errors, mean_field, metrics, output_tracking_error,
};
use consensus_net::dynamics::{matched_rate, unmatched_rate, ClosedLoop, Segment};
use consensus_net::gains::{
    assemble_d, assemble_n, certify, certify_matched, certify_unmatched, is_s_hurwitz,
    suggest_matched, suggest_unmatched,
};
use consensus_net::graph::{build_laplacian, DirectedGraph};
use consensus_net::linalg::min_sym_eigenvalue;
use consensus_net::scenario::{
    builtin, load_scenario, save_scenario, InitialSpec, LyapunovSpec, BUILTIN_UNMATCHED,
};
use consensus_net::sim::{integrate, simulate, SimParams};
use consensus_net::spectral::{certificate_residual, solve_p, spectral_norm};
use consensus_net::{
    DisturbanceProfile, Gains, MatchedGains, Mode, Scenario, SimState, UnmatchedGains,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn random_state(n: usize, rng: &mut impl Rng) -> SimState {
    SimState::new(
        random_vector(n, 2.0, rng),
        random_vector(n, 2.0, rng),
        random_vector(n, 2.0, rng),
        0.0,
    )
    .unwrap()
}

fn random_matched(rng: &mut impl Rng) -> MatchedGains {
    MatchedGains::with_substitutions(
        rng.random_range(0.5..8.0),
        rng.random_range(0.5..30.0),
        rng.random_range(0.5..8.0),
        rng.random_range(0.2..3.0),
        rng.random_range(0.5..20.0),
    )
}

fn random_unmatched(rng: &mut impl Rng) -> UnmatchedGains {
    let k_d = rng.random_range(0.5..10.0);
    let alpha1 = rng.random_range(0.5..10.0);
    UnmatchedGains {
        k_x: rng.random_range(0.5..5.0),
        k_d,
        k_s: rng.random_range(0.5..5.0),
        alpha1,
        nu: alpha1 / k_d,
        alpha2: rng.random_range(0.5..3.0),
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn laplacian_rows_sum_to_zero(n in 1usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = build_laplacian(&arbitrary_graph(n, 0.4, &mut r)).unwrap();
        let ones = DVector::from_element(n, 1.0);
        prop_assert!(max_abs(&(&lap.l * ones)) < 1e-12);
    }

    #[test]
    fn spanning_tree_test_matches_reachability(n in 1usize..=7, density in 0.05f64..0.6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = arbitrary_graph(n, density, &mut r);
        let lap = build_laplacian(&g).unwrap();
        prop_assert_eq!(lap.has_spanning_tree, brute_force_spanning_tree(&g));
        prop_assert_eq!(lap.v_left.is_some(), lap.has_spanning_tree);
    }

    #[test]
    fn left_eigenvector_invariants(n in 1usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        let v = lap.v().unwrap();
        prop_assert!((v.sum() - 1.0).abs() < 1e-12);
        prop_assert!(v.iter().all(|&vi| vi >= -1e-12));
        prop_assert!(max_abs(&(lap.l.transpose() * v)) < 1e-10);
        prop_assert!(lap.nonzero_eigenvalue_real_parts_positive);
        // Π = I − 1vᵀ annihilates consensus and is annihilated by vᵀ.
        let pi = DMatrix::identity(n, n) - DMatrix::from_fn(n, n, |_, c| v[c]);
        prop_assert!(max_abs(&(&pi * DVector::from_element(n, 1.0))) < 1e-12);
        prop_assert!(max_abs(&(pi.transpose() * v)) < 1e-12);
    }

    #[test]
    fn certificate_solves_its_equation(n in 1usize..=8, alpha in 0.1f64..5.0, q_scale in 0.1f64..10.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        let q = DMatrix::identity(n, n) * q_scale;
        let cert = solve_p(&lap, &q, alpha).unwrap();
        let scale = spectral_norm(&q).max(1.0);
        prop_assert!(cert.residual < 1e-8 * scale);
        prop_assert!(max_abs_matrix(&certificate_residual(&cert.p, &lap.l, lap.v().unwrap(), &q, alpha)) < 1e-8 * scale);
        prop_assert!(cert.min_eig_p > 0.0);
        prop_assert!(max_abs_matrix(&(&cert.p - cert.p.transpose())) < 1e-12 * cert.lambda_p.max(1.0));
        prop_assert!((cert.lambda_p - spectral_norm(&cert.p)).abs() < 1e-12 * cert.lambda_p.max(1.0));
    }

    #[test]
    fn certificate_matches_vectorized_solve(n in 1usize..=6, alpha in 0.1f64..5.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        // A random symmetric positive definite Q exercises off-diagonal terms.
        let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        let q = &a * a.transpose() + DMatrix::identity(n, n);
        let cert = solve_p(&lap, &q, alpha).unwrap();
        let oracle = kronecker_lyapunov(&lap.l, lap.v().unwrap(), &q, alpha);
        prop_assert!(max_abs_matrix(&(&cert.p - &oracle)) < 1e-8 * oracle.norm().max(1.0));
    }

    #[test]
    fn certificate_is_linear_in_q(n in 1usize..=8, c in 0.1f64..20.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        let q = DMatrix::identity(n, n);
        let p1 = solve_p(&lap, &q, 1.0).unwrap().p;
        let pc = solve_p(&lap, &(&q * c), 1.0).unwrap().p;
        prop_assert!(max_abs_matrix(&(&pc - &p1 * c)) < 1e-9 * c * p1.norm().max(1.0));
    }

    #[test]
    fn positive_gains_make_s_hurwitz(seed in any::<u64>()) {
        let g = random_matched(&mut rng(seed));
        prop_assert!(is_s_hurwitz(&g));
        let eig = g.s_matrix().complex_eigenvalues();
        prop_assert!(eig.iter().all(|e| e.re < 0.0));
    }

    #[test]
    fn certification_is_deterministic(n in 1usize..=6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        let cert = solve_p(&lap, &DMatrix::identity(n, n), 1.0).unwrap();
        let g = if r.random_bool(0.5) {
            Gains::Matched(random_matched(&mut r))
        } else {
            Gains::Unmatched(random_unmatched(&mut r))
        };
        let a = certify(&g, &lap, &cert).unwrap();
        let b = certify(&g, &lap, &cert).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.passed, a.checks.iter().all(|c| c.satisfied) && a.min_eig_n_or_m > 0.0);
    }

    #[test]
    fn suggested_gains_certify(n in 1usize..=7, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        let cert = solve_p(&lap, &DMatrix::identity(n, n), 1.0).unwrap();
        let (g1, g3, mu) = (r.random_range(0.5..8.0), r.random_range(0.5..8.0), r.random_range(0.2..3.0));
        let b = g3 / g1 * cert.lambda_p.powi(2) * r.random_range(1.0..4.0);
        let m = suggest_matched(g1, g3, mu, b, &lap, &cert).unwrap();
        let report = certify_matched(&m, &lap, &cert).unwrap();
        prop_assert!(report.passed, "{}", report.to_table());
        let u = suggest_unmatched(r.random_range(0.5..5.0), r.random_range(0.5..5.0), r.random_range(0.5..3.0), &lap, &cert).unwrap();
        let report = certify_unmatched(&u, &lap, &cert).unwrap();
        prop_assert!(report.passed, "{}", report.to_table());
    }

    #[test]
    fn schur_matrix_is_psd_under_the_k_d_bound(n in 1usize..=7, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        let cert = solve_p(&lap, &DMatrix::identity(n, n), 1.0).unwrap();
        let (k_x, alpha2) = (r.random_range(0.1..5.0), r.random_range(0.1..3.0));
        let bound = 0.5 * alpha2 * k_x * cert.lambda_l.powi(2) + cert.lambda_p / alpha2;
        let k_d = bound * r.random_range(1.0..3.0);
        let g = UnmatchedGains { k_x, k_d, k_s: 1.0, alpha1: k_d, nu: 1.0, alpha2 };
        prop_assert!(min_sym_eigenvalue(&assemble_d(&g, &lap.l, &cert.p)) >= -1e-10);
    }

    #[test]
    fn control_ignores_common_translation(n in 1usize..=8, c in -10.0f64..10.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        let s = random_state(n, &mut r);
        let mut shifted = s.clone();
        shifted.x.add_scalar_mut(c);
        let d = random_vector(n, 1.0, &mut r);
        let m = random_matched(&mut r);
        let (a, b) = (matched_rate(&s, &m, &lap.l, &d), matched_rate(&shifted, &m, &lap.l, &d));
        prop_assert!(max_abs(&(&a.y - &b.y)) < 1e-10 && max_abs(&(&a.delta_hat - &b.delta_hat)) < 1e-10);
        // The unmatched loop feeds x back through α1, so only the
        // consensus-relevant coupling −k_x·L·x is translation invariant.
        let u = random_unmatched(&mut r);
        let (a, b) = (unmatched_rate(&s, &u, &lap.l, &d), unmatched_rate(&shifted, &u, &lap.l, &d));
        let expected = -DVector::from_element(n, c) * u.k_s * u.alpha1;
        prop_assert!(max_abs(&(&b.y - &a.y - expected)) < 1e-9);
    }

    #[test]
    fn averages_follow_the_reduced_equations(n in 1usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        let v = lap.v().unwrap();
        let s = random_state(n, &mut r);
        let d = random_vector(n, 1.0, &mut r);

        let m = random_matched(&mut r);
        let g = Gains::Matched(m);
        let mf = mean_field(&s, v, &g, &d);
        let rate = matched_rate(&s, &m, &lap.l, &d);
        let tol = 1e-10 * (1.0 + m.gamma4.max(m.gamma2).max(m.gamma1) * 4.0);
        prop_assert!((v.dot(&rate.x) - mf.y_m).abs() < tol);
        prop_assert!((v.dot(&rate.y) - (-m.gamma2 * mf.y_m - m.gamma3 * mf.delta_m)).abs() < tol);
        prop_assert!((v.dot(&rate.delta_hat) - m.gamma4 * mf.y_m).abs() < tol);

        let u = random_unmatched(&mut r);
        let g = Gains::Unmatched(u);
        let mf = mean_field(&s, v, &g, &d);
        let rate = unmatched_rate(&s, &u, &lap.l, &d);
        let tol = 1e-10 * (1.0 + 4.0 * u.k_s * (u.alpha1 + u.nu + u.k_d + u.k_x));
        let y_tilde_rate = &rate.y - &rate.delta_hat * u.k_s;
        prop_assert!((v.dot(&rate.x) - (mf.y_m + mf.delta_m)).abs() < tol);
        prop_assert!((v.dot(&y_tilde_rate) + u.k_d * mf.y_m).abs() < tol);
        prop_assert!((u.k_s * v.dot(&rate.delta_hat) + u.k_s * (u.alpha1 * mf.x_m + u.nu * mf.y_m)).abs() < tol);
    }

    #[test]
    fn projected_errors_have_zero_average(n in 1usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lap = spanning_laplacian(n, &mut r);
        let v = lap.v().unwrap();
        let s = random_state(n, &mut r);
        let d = random_vector(n, 1.0, &mut r);
        for g in [Gains::Matched(random_matched(&mut r)), Gains::Unmatched(random_unmatched(&mut r))] {
            let e = consensus_errors(&s, v, &g, &d);
            for vec in [&e.e_x, &e.e_y, &e.e_d] {
                prop_assert!(v.dot(vec).abs() < 1e-12 * (1.0 + max_abs(vec)));
            }
        }
    }

    #[test]
    fn disturbance_is_right_continuous(t_switch in 0.5f64..20.0, tail in 0.0f64..5.0) {
        let profile = DisturbanceProfile::new(vec![
            Segment { hyperbolic_coeff: 1.0, ..Segment::constant(0.0, vec![0.1, -0.2]) },
            Segment { exp_coeff: 1.0, exp_rate: 0.2, ..Segment::constant(t_switch, vec![0.3, 0.4]) },
        ]).unwrap();
        let s = &profile.segments()[1];
        prop_assert_eq!(profile.eval(t_switch), s.eval(t_switch));
        prop_assert_eq!(profile.eval(t_switch + tail), s.eval(t_switch + tail));
        prop_assert_eq!(profile.eval_left(t_switch), profile.segments()[0].eval(t_switch));
    }

    #[test]
    fn scenario_json_round_trips(n in 1usize..=6, seed in any::<u64>(), matched in any::<bool>(), random_init in any::<bool>()) {
        let mut r = rng(seed);
        let graph = spanning_tree_graph(n, 0.3, &mut r);
        let (mode, gains) = if matched {
            (Mode::Matched, Gains::Matched(random_matched(&mut r)))
        } else {
            (Mode::Unmatched, Gains::Unmatched(random_unmatched(&mut r)))
        };
        let initial = if random_init {
            InitialSpec::Random { seed: r.random(), x_range: (-2.0, 3.0) }
        } else {
            InitialSpec::Vectors {
                x0: random_vector(n, 1.0, &mut r).iter().copied().collect(),
                y0: Some(random_vector(n, 1.0, &mut r).iter().copied().collect()),
                delta_hat0: None,
            }
        };
        let s = Scenario {
            name: format!("case-{seed}"),
            fig1_substitute: false,
            graph,
            mode,
            gains,
            lyapunov: LyapunovSpec { q_scale: r.random_range(0.5..2.0), alpha: r.random_range(0.5..2.0) },
            disturbance: DisturbanceProfile::constant(random_vector(n, 0.5, &mut r).iter().copied().collect()).unwrap(),
            initial,
            sim: SimParams::new(2.0, 0.01, 5),
        };
        let back = Scenario::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.initial_state(), s.initial_state());
    }
}

fn max_abs_matrix(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn chain2() -> consensus_net::LaplacianData {
    build_laplacian(&DirectedGraph::from_edges(2, &[(1, 2, 1.0)]).unwrap()).unwrap()
}

/// On the chain `1 → 2` with `γ1 = 1, γ3 = 4, μ = 1, b = 1` (so `λ_P = 1/2`
/// and `b` sits exactly on its bound), `γ2` 5% above the explicit bound
/// satisfies every scalar condition yet `𝒩` is indefinite; the reference
/// eigenvalue comes from an independent dense solver.
#[test]
fn scalar_conditions_do_not_imply_positive_n() {
    let lap = chain2();
    let cert = solve_p(&lap, &DMatrix::identity(2, 2), 1.0).unwrap();
    assert!((cert.lambda_p - 0.5).abs() < 1e-12);
    assert!((cert.lambda_l - 2f64.sqrt()).abs() < 1e-12);
    let (g1, g3, mu, b) = (1.0, 4.0, 1.0, 1.0);
    let explicit = (cert.lambda_p + 2.0 * g3 * (mu + b)) / (2.0 * mu + b)
        + 0.5 * g1 * (2.0 * mu + b) * cert.lambda_l.powi(2);
    assert!((explicit - 8.5).abs() < 1e-12);
    let g = MatchedGains::with_substitutions(g1, 1.05 * explicit, g3, mu, b);
    let report = certify_matched(&g, &lap, &cert).unwrap();
    for name in [
        "H_positive",
        "gamma4_substitution",
        "epsilon_substitution",
        "rho_substitution",
        "gamma2_lower_bound",
        "b_lower_bound",
    ] {
        assert!(report.check(name).unwrap().satisfied, "{name}");
    }
    assert!(!report.check("N_positive_definite").unwrap().satisfied);
    assert!(!report.passed);
    assert!(
        (report.min_eig_n_or_m - (-0.34115823220726627)).abs() < 1e-9,
        "{}",
        report.min_eig_n_or_m
    );
    let n_mat = assemble_n(&g, &lap.l, &cert.p, &cert.q);
    assert!((min_sym_eigenvalue(&n_mat) - report.min_eig_n_or_m).abs() < 1e-12);

    let fixed = suggest_matched(g1, g3, mu, b, &lap, &cert).unwrap();
    assert!(fixed.gamma2 > g.gamma2);
    assert!(certify_matched(&fixed, &lap, &cert).unwrap().passed);
}

#[test]
fn simulation_is_bitwise_reproducible() {
    let s = builtin(BUILTIN_UNMATCHED)
        .unwrap()
        .with_sim_overrides(Some(2.0), None, false)
        .unwrap();
    let lap = s.laplacian().unwrap();
    let field = s.closed_loop(&lap).unwrap();
    let a = simulate(&field, &s.initial_state(), &s.sim, "a").unwrap();
    let b = simulate(&field, &s.initial_state(), &s.sim, "b").unwrap();
    assert_eq!(a.times, b.times);
    assert_eq!(a.states, b.states);
    assert!(a.states.iter().all(SimState::is_finite));
}

/// Over successive late windows the worst output tracking error shrinks.
#[test]
fn tracking_error_shrinks_across_late_windows() {
    let s = builtin(BUILTIN_UNMATCHED).unwrap();
    let lap = s.laplacian().unwrap();
    let field = s.closed_loop(&lap).unwrap();
    let traj = simulate(&field, &s.initial_state(), &s.sim, &s.name).unwrap();
    let Gains::Unmatched(g) = s.gains else {
        unreachable!()
    };
    let errors: Vec<f64> = [(20.0, 25.0), (25.0, 30.0), (30.0, 35.0), (35.0, 40.0)]
        .into_iter()
        .map(|w| output_tracking_error(&traj, lap.v().unwrap(), &g, &s.disturbance, w))
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

/// Constant disturbance, random graph: the weighted averages of the full
/// simulation follow the closed-form reduced model.
#[test]
fn averages_match_the_closed_form_reduced_model() {
    let mut r = rng(7);
    for n in [2, 4] {
        let lap = spanning_laplacian(n, &mut r);
        let v = lap.v().unwrap().clone();
        let d: Vec<f64> = random_vector(n, 0.3, &mut r).iter().copied().collect();
        let profile = DisturbanceProfile::constant(d.clone()).unwrap();
        let dv = DVector::from_vec(d);
        for g in [
            Gains::Matched(random_matched(&mut r)),
            Gains::Unmatched(random_unmatched(&mut r)),
        ] {
            let field = ClosedLoop::new(g, &lap, profile.clone()).unwrap();
            let s0 = random_state(n, &mut r);
            let params = SimParams::new(5.0, 1e-3, 50);
            let samples = integrate(&field, &s0.to_vector(), &params).unwrap();
            let mf0 = mean_field(&s0, &v, &g, &dv);
            for (t, z) in samples.times.iter().zip(&samples.states) {
                let mf = mean_field(&SimState::from_vector(z, *t), &v, &g, &dv);
                let pred = averaged_model(&mf0, &g, *t);
                let err = (mf.x_m - pred.x_m)
                    .abs()
                    .max((mf.y_m - pred.y_m).abs())
                    .max((mf.delta_m - pred.delta_m).abs());
                assert!(err < 1e-6, "n = {n}, t = {t}, err = {err:e}");
            }
        }
    }
}

#[test]
fn metrics_rows_match_samples() {
    let s = builtin(BUILTIN_UNMATCHED)
        .unwrap()
        .with_sim_overrides(Some(1.0), None, false)
        .unwrap();
    let lap = s.laplacian().unwrap();
    let cert = s.certificate(&lap).unwrap();
    let field = s.closed_loop(&lap).unwrap();
    let traj = simulate(&field, &s.initial_state(), &s.sim, &s.name).unwrap();
    let rows = metrics(&traj, lap.v().unwrap(), &s.gains, &cert.p, &s.disturbance);
    assert_eq!(rows.len(), traj.len());
    assert!(rows
        .iter()
        .all(|r| r.projector_residual < 1e-12 && r.lyapunov >= 0.0));
}

#[test]
fn saved_scenarios_load_back() {
    let dir = tempfile::tempdir().unwrap();
    for name in consensus_net::scenario::BUILTINS {
        let s = builtin(name).unwrap();
        let path = dir.path().join(format!("{name}.json"));
        save_scenario(&s, &path).unwrap();
        assert_eq!(load_scenario(path.to_str().unwrap()).unwrap(), s);
    }
}
