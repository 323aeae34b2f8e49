//! Property tests for the invariants of every module.

use freecongest::diagnostics::{
    coercivity_check, energy_report, integrated_v, lemma_taylor_check, lemma_xy_check, operator_a,
};
use freecongest::discrete::{derivative, norm, shift_sample, trace0, NormKind, Tabulated};
use freecongest::freeboundary::{
    apply_t, picard_solve, validate_hypotheses, BoundaryPath, InitialData, Trajectory,
};
use freecongest::parabolic::NewtonSettings;
use freecongest::perturbation::Perturbation;
use freecongest::profiles::traveling_wave;
use freecongest::{Field, Grid, PhysicalParams};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = PhysicalParams> {
    (0.3f64..3.0, 1.2f64..4.0, -1.0f64..2.0, 0.1f64..2.0)
        .prop_map(|(mu, vp, um, gap)| PhysicalParams::new(mu, vp, um, um - gap).unwrap())
}

fn path(m: f64, dt: f64, steps: usize, base: f64, amp: f64, freq: f64) -> BoundaryPath {
    let lo = 1.0 / m;
    let base = lo + base * (m - lo);
    let amp = amp * (base - lo).min(m - base);
    let speeds = (0..=steps).map(|k| base + amp * (freq * k as f64 * dt).sin()).collect();
    BoundaryPath::from_speeds(dt, speeds).unwrap()
}

fn bumps(g: &Grid, terms: &[(f64, f64, f64)]) -> Field {
    Field::from_fn(g, |x| terms.iter().map(|&(a, c, w)| a * (-((x - c) / w).powi(2)).exp()).sum()).unwrap()
}

fn small_run(amp: f64) -> (PhysicalParams, Grid, InitialData, Trajectory) {
    let p = PhysicalParams::reference();
    let g = Grid::new(30.0, 301).unwrap();
    let (v0, u0) = Perturbation::bump(amp, 1.0, 4.0).initial_fields(&p, &g).unwrap();
    let init = validate_hypotheses(&v0, &u0, &g, &p).unwrap();
    let traj = picard_solve(&init, &g, &p, 0.5, 1e-2, 1e-9, 40).unwrap();
    (p, g, init, traj)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn congested_pressure_matches_speed(p in params()) {
        let expected = p.s() * p.s() * (p.v_plus() - 1.0);
        prop_assert!((p.p_minus() - expected).abs() <= 4.0 * f64::EPSILON * expected.abs().max(1.0));
        prop_assert!(p.s() > 0.0);
    }

    #[test]
    fn grid_nodes_are_uniform(r in 0.5f64..200.0, n in 16usize..5000) {
        let g = Grid::new(r, n).unwrap();
        let bound = 4.0 * f64::EPSILON * r;
        for i in [0, 1, n / 3, n / 2, n - 2, n - 1] {
            prop_assert!((g.x(i) - i as f64 * r / (n - 1) as f64).abs() <= bound);
        }
        prop_assert_eq!(g.x(0), 0.0);
        prop_assert_eq!(g.x(n - 1), r);
    }

    #[test]
    fn wave_is_increasing(p in params()) {
        let g = Grid::new(p.truncation_length(1e-8).min(200.0), 801).unwrap();
        let pr = traveling_wave(&p, &g);
        // strict wherever the profile has not saturated in double precision
        let vp = p.v_plus();
        prop_assert!(pr.v_bar.values().windows(2).all(|w| w[1] > w[0] || vp - w[0] < 1e-12));
        prop_assert!(pr.v_bar.max() <= p.v_plus());
    }

    #[test]
    fn stencils_exact_on_quadratics(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, n in 16usize..200) {
        let g = Grid::new(3.0, n).unwrap();
        let f = Field::from_fn(&g, |x| a + b * x + c * x * x).unwrap();
        let d1 = derivative(&f, &g, 1).unwrap();
        let d2 = derivative(&f, &g, 2).unwrap();
        let scale = 1e-9 * (1.0 + a.abs() + b.abs() + c.abs()) * (n * n) as f64;
        for i in 0..n {
            prop_assert!((d1[i] - (b + 2.0 * c * g.x(i))).abs() <= scale);
            prop_assert!((d2[i] - 2.0 * c).abs() <= scale);
        }
        prop_assert!((trace0(&f, &g, 0).unwrap() - a).abs() <= scale);
        prop_assert!((trace0(&f, &g, 1).unwrap() - b).abs() <= scale);
        prop_assert!((trace0(&f, &g, 2).unwrap() - 2.0 * c).abs() <= scale);
    }

    #[test]
    fn h1_norm_splits(k in 0.1f64..4.0, ph in 0.0f64..6.0) {
        let g = Grid::new(10.0, 401).unwrap();
        let f = Field::from_fn(&g, |x| (k * x + ph).sin() * (-0.2 * x).exp()).unwrap();
        let h1 = norm(&f, &g, NormKind::H1).unwrap();
        let l2 = norm(&f, &g, NormKind::L2).unwrap();
        let dl2 = norm(&derivative(&f, &g, 1).unwrap(), &g, NormKind::L2).unwrap();
        prop_assert!((h1 * h1 - (l2 * l2 + dl2 * dl2)).abs() <= 1e-12 * h1 * h1);
    }

    #[test]
    fn shift_preserves_monotonicity(steps in prop::collection::vec(0.0f64..1.0, 41), y in 0.0f64..15.0) {
        let g = Grid::new(10.0, 41).unwrap();
        let mut acc = 0.0;
        let vals: Vec<f64> = steps.iter().map(|s| { acc += s * s * s; acc }).collect();
        let f = Field::new(&g, vals.clone()).unwrap();
        let tab = Tabulated::new(&f, &g, *vals.last().unwrap()).unwrap();
        let fine = Grid::new(10.0, 397).unwrap();
        let out = shift_sample(&tab, y, &fine).unwrap();
        prop_assert!(out.values().windows(2).all(|w| w[1] >= w[0] - 1e-14));
    }

    #[test]
    fn coercivity_identity_holds(
        a in prop::collection::vec((-1.0f64..1.0, 0.3f64..2.0, 0.0f64..3.0, 0.0f64..6.3), 1..4),
        p in params(),
    ) {
        let g = Grid::new(20.0, 1001).unwrap();
        let pr = traveling_wave(&p, &g);
        let phi = Field::from_fn(&g, |x| a.iter().map(|&(c, b, k, d)| c * (-b * x).exp() * (k * x + d).cos()).sum()).unwrap();
        let c = coercivity_check(&phi, &pr, &g, &p, None).unwrap();
        prop_assert!(c.relative_gap <= 1e-10, "{:?}", c);
    }

    #[test]
    fn integrated_variable_differentiates_back(a in -0.5f64..0.5, c in 2.0f64..8.0, w in 0.5f64..2.0) {
        let p = PhysicalParams::reference();
        let g = Grid::new(20.0, 801).unwrap();
        let pr = traveling_wave(&p, &g);
        let v = Field::from_fn(&g, |x| freecongest::profiles::v_bar_at(&p, x) + a * (-((x - c) / w).powi(2)).exp()).unwrap();
        let big_v = integrated_v(&v, &pr.v_bar, &g).unwrap();
        let back = derivative(&big_v, &g, 1).unwrap();
        let diff = v.sub(&pr.v_bar).unwrap();
        let dev = (0..g.n()).map(|i| (back[i] - diff[i]).abs()).fold(0.0, f64::max);
        prop_assert!(dev <= 2.0 * a.abs() / (w * w) * g.dx() * g.dx() + 1e-14, "{}", dev);
    }

    #[test]
    fn lemma_xy_holds(
        m in 1.0f64..3.0,
        base in 0.0f64..1.0, amp in 0.0f64..1.0, freq in 0.0f64..4.0,
        steps in 50usize..300,
        terms in prop::collection::vec((0.0f64..2.0, 0.0f64..10.0, 0.3f64..2.0), 1..4),
    ) {
        let g = Grid::new(20.0, 401).unwrap();
        let f = bumps(&g, &terms);
        let c = lemma_xy_check(&f, &path(m, 0.02, steps, base, amp, freq), m, &g).unwrap();
        prop_assert!(c.holds, "{:?}", c);
    }

    #[test]
    fn lemma_taylor_holds(
        m in 1.0f64..3.0,
        a in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..4.0),
        b in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..4.0),
        steps in 50usize..300,
        terms in prop::collection::vec((-2.0f64..2.0, 0.0f64..10.0, 0.3f64..2.0), 1..4),
    ) {
        let g = Grid::new(20.0, 401).unwrap();
        let w0 = bumps(&g, &terms);
        let p1 = path(m, 0.02, steps, a.0, a.1, a.2);
        let p2 = path(m, 0.02, steps, b.0, b.1, b.2);
        let c = lemma_taylor_check(&w0, 0.0, &p1, &p2, m, &g).unwrap();
        prop_assert!(c.holds, "{:?}", c);
    }

    #[test]
    fn operator_is_linear(s1 in -2.0f64..2.0, s2 in -2.0f64..2.0) {
        let p = PhysicalParams::reference();
        let g = Grid::new(10.0, 201).unwrap();
        let pr = traveling_wave(&p, &g);
        let f = Field::from_fn(&g, |x| (-x).exp()).unwrap();
        let h = Field::from_fn(&g, |x| x.sin()).unwrap();
        let comb = f.zip_map(&h, |a, b| s1 * a + s2 * b).unwrap();
        let lhs = operator_a(&comb, &pr, &g, &p).unwrap();
        let af = operator_a(&f, &pr, &g, &p).unwrap();
        let ah = operator_a(&h, &pr, &g, &p).unwrap();
        for i in 0..g.n() {
            prop_assert!((lhs[i] - (s1 * af[i] + s2 * ah[i])).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn coupled_run_invariants(amp in 0.0f64..0.02) {
        let (p, g, init, traj) = small_run(amp);
        let dx2 = g.dx() * g.dx();

        // initial speed from the data
        let data_speed = -trace0(&init.u0, &g, 1).unwrap() / trace0(&init.v0, &g, 1).unwrap();
        prop_assert!((traj.path.ydot()[0] - data_speed).abs() <= 50.0 * dx2, "{} {}", traj.path.ydot()[0], data_speed);

        prop_assert!(traj.path.ydot().iter().all(|&y| y > 0.0));

        // both pressure formulas agree
        for s in &traj.snapshots {
            let k = s.step;
            let lhs = -p.mu() * trace0(&s.u, &g, 1).unwrap();
            let rhs = traj.path.ydot()[k] * (p.u_minus() - init.w0_at(traj.path.y()[k]));
            prop_assert!((lhs - rhs).abs() <= 50.0 * dx2, "t = {}: {} vs {}", s.t, lhs, rhs);
        }

        // one more application of the map barely moves the converged path
        let again = apply_t(&traj.path, &init, &g, &p, &NewtonSettings::default()).unwrap();
        let diff: Vec<f64> = again.ydot().iter().zip(traj.path.ydot()).map(|(a, b)| a - b).collect();
        prop_assert!(freecongest::freeboundary::h1_time_norm(&diff, traj.dt()) <= 2.0 * 1e-9);

        let e = energy_report(&traj, &init, &g, &p, traj.path.t_final()).unwrap();
        prop_assert_eq!(e.script_et, e.script_e0 + e.beta_h1 * e.beta_h1);
        for x in [e.e0, e.e1, e.e2, e.e3, e.e4, e.e5, e.script_e0] {
            prop_assert!(x.is_finite() && x >= 0.0);
        }
        for r in &traj.records {
            prop_assert!(r.linf_v_err.is_finite());
        }
    }
}

/// Worst residual of each trace identity over the stored times.
fn trace_residuals(n: usize, dt: f64, pert: Perturbation) -> [f64; 3] {
    let p = PhysicalParams::new(0.7, 3.0, 1.0, 0.0).unwrap();
    let g = Grid::new(40.0, n).unwrap();
    let (v0, u0) = pert.initial_fields(&p, &g).unwrap();
    let init = validate_hypotheses(&v0, &u0, &g, &p).unwrap();
    let mut settings = freecongest::freeboundary::SolverSettings::new(dt);
    settings.stride = (0.25 / dt) as usize;
    let traj = freecongest::freeboundary::picard_solve_with(&init, &g, &p, 1.0, &settings).unwrap();
    let mut worst = [0.0f64; 3];
    for s in &traj.snapshots {
        let tr = freecongest::diagnostics::trace_identities(&traj, &init, &g, &p, s.t).unwrap();
        for (w, r) in worst.iter_mut().zip([tr.residual_g1_x0, tr.residual_g1_r1, tr.residual_px2g1]) {
            *w = w.max(r.abs());
        }
    }
    worst
}

#[test]
fn trace_identities_converge_away_from_reference_parameters() {
    for pert in [Perturbation::tilt(0.05, 1.0), Perturbation::bump(0.05, 1.0, 4.0)] {
        let coarse = trace_residuals(513, 1.6e-2, pert);
        let fine = trace_residuals(1025, 4e-3, pert);
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(c / f > 3.0, "{coarse:?} {fine:?}");
        }
    }
}
