mod common;

use common::sine_problem;
use pertraj::certificates::{certify, BoundMode, BoxRegion, CertificateRequest};
use pertraj::reactor::{self, ReactorParams};
use pertraj::{
    solve_newton_classical, solve_newton_modified, solve_simple, IterationOptions, PPrimeInverse, Trajectory, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reactor_tau1(n_g: usize) -> pertraj::BvpProblem {
    reactor::reactor_problem(&ReactorParams::default(), 1.0, n_g).unwrap()
}

#[test]
fn classical_newton_reaches_floor_quickly() {
    let p = reactor_tau1(100_000);
    let r = solve_newton_classical(&p, &IterationOptions::with_iterations(6)).unwrap();
    let d = r.table_residuals();
    let first = d.iter().position(|&x| x <= 1e-12).expect("no iterate at the floor");
    assert!(first <= 6, "{d:?}");
    let m = solve_newton_modified(&p, &IterationOptions::default()).unwrap();
    assert!(r.final_trajectory.sup_distance(&m.final_trajectory) <= 1e-8);
}

#[test]
fn limits_of_all_three_solvers_agree() {
    let p = reactor_tau1(100_000);
    let s = solve_simple(&p, &IterationOptions::with_iterations(300).tol(1e-10)).unwrap();
    assert!(s.converged);
    let m = solve_newton_modified(&p, &IterationOptions::with_iterations(20)).unwrap();
    let c = solve_newton_classical(&p, &IterationOptions::with_iterations(8)).unwrap();
    assert!(s.final_trajectory.sup_distance(&m.final_trajectory) <= 1e-6);
    assert!(s.final_trajectory.sup_distance(&c.final_trajectory) <= 1e-6);
    assert!(m.final_trajectory.sup_distance(&c.final_trajectory) <= 1e-6);
}

#[test]
fn simple_residuals_decrease_after_first_iterate() {
    let p = reactor_tau1(100_000);
    let d = solve_simple(&p, &IterationOptions::default()).unwrap().table_residuals();
    for k in 1..d.len() - 1 {
        assert!(d[k + 1] <= d[k], "k = {k}: {d:?}");
    }
}

#[test]
fn runs_are_bit_identical() {
    let p = reactor_tau1(20_000);
    for solve in [solve_simple, solve_newton_modified, solve_newton_classical] {
        let a = solve(&p, &IterationOptions::with_iterations(4)).unwrap();
        let b = solve(&p, &IterationOptions::with_iterations(4)).unwrap();
        assert_eq!(a.final_trajectory, b.final_trajectory);
        assert_eq!(a.table_residuals(), b.table_residuals());
    }
}

#[test]
fn halving_the_step_halves_the_discretization_error() {
    let sol = |n_g: usize| {
        solve_newton_classical(&reactor_tau1(n_g), &IterationOptions::with_iterations(8))
            .unwrap()
            .final_trajectory
    };
    let (x1, x2, x4) = (sol(10_000), sol(20_000), sol(40_000));
    let at = |x: &Trajectory, stride: usize| -> Vec<Vector> { x.samples.iter().step_by(stride).cloned().collect() };
    let diff = |a: &[Vector], b: &[Vector]| a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    let e1 = diff(&at(&x1, 1), &at(&x2, 2));
    let e2 = diff(&at(&x2, 2), &at(&x4, 4));
    let ratio = e1 / e2;
    assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn inverse_norm_respects_rho1() {
    let eps = 0.02;
    let p = sine_problem(eps, 2000);
    let x0 = p.zero_trajectory();
    let req = CertificateRequest {
        region: BoxRegion::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap(),
        growth: None,
        lipschitz: BoundMode::User(eps),
        hessian: Some(BoundMode::User(eps)),
        radius: None,
    };
    let cert = certify(&p, &x0, &req).unwrap();
    assert!(cert.neumann.unwrap().neumann_ok);
    let rho1 = cert.rhos.unwrap().rho1.unwrap();
    let pinv = PPrimeInverse::assemble(&p, &x0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let dy = Trajectory::from_fn(*p.grid(), |t| {
            Vector::from_column_slice(&[(a[0] * 6.0 * t).sin() + a[1], (a[2] * 9.0 * t).cos() * a[3]])
        });
        let norm = dy.sup_norm();
        let dx = pinv.apply(&p, &dy).unwrap();
        assert!(dx.sup_norm() <= rho1 * norm * (1.0 + 1e-9));
    }
}

#[test]
fn tolerance_stops_early() {
    let p = sine_problem(0.2, 1000);
    let r = solve_newton_classical(&p, &IterationOptions::with_iterations(50).tol(1e-12)).unwrap();
    assert!(r.converged);
    assert!(r.iterations_run < 10);
    assert_eq!(r.history.len(), r.iterations_run + 1);
}

#[test]
fn domain_exit_reports_iteration_and_node() {
    let p = reactor::reactor_problem(&ReactorParams::default(), 10.0, 100_000).unwrap();
    let err = solve_newton_modified(&p, &IterationOptions::with_iterations(15)).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, pertraj::Error::DomainViolation { .. }), "{msg}");
    assert!(msg.contains("iteration 1"), "{msg}");
}
