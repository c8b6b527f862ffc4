mod common;

use common::{sine_model, sine_problem, three_piece_schedule, v};
use pertraj::matops::{mat_exp, FundamentalMatrix};
use pertraj::oracle::integrate_dense;
use pertraj::reactor::{self, ReactorParams};
use pertraj::{BoundaryCondition, BvpProblem, ControlSchedule, Grid, Matrix, SystemModel, Trajectory, Vector};
use proptest::prelude::*;

#[test]
fn two_point_fixed_point_of_integrated_solution() {
    let model = sine_model(0.4);
    let sched = three_piece_schedule();
    let x0 = v(&[0.3, -0.7]);
    let steps = 4000;
    let xhat = integrate_dense(&model, &sched, &x0, steps).unwrap();
    let m0 = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
    let m1 = Matrix::from_row_slice(2, 2, &[0.2, 0.0, -0.1, 0.3]);
    let beta = &m0 * xhat.first() + &m1 * xhat.last();
    let bc = BoundaryCondition::two_point(m0, m1, beta).unwrap();
    let p = BvpProblem::new(model, bc, sched, Grid::new(1.0, steps).unwrap()).unwrap();
    let fx = p.apply_f(&xhat).unwrap();
    let dt = p.grid().dt();
    assert!(fx.sup_distance(&xhat) <= 10.0 * dt * (1.0 + xhat.sup_norm()));
}

#[test]
fn initial_value_condition_reproduces_integrated_flow() {
    let model = sine_model(0.4);
    let sched = three_piece_schedule();
    let x0 = v(&[1.0, 0.5]);
    let steps = 4000;
    let xhat = integrate_dense(&model, &sched, &x0, steps).unwrap();
    let p = BvpProblem::new(
        model,
        BoundaryCondition::initial_value(x0.clone()),
        sched,
        Grid::new(1.0, steps).unwrap(),
    )
    .unwrap();
    let fx = p.apply_f(&xhat).unwrap();
    assert_eq!(fx.first(), &x0);
    assert!(fx.sup_distance(&xhat) <= 10.0 * p.grid().dt() * (1.0 + xhat.sup_norm()));
}

/// `F(0)` from a fine trapezoid rule for `∫ e^{-sA} u(s) ds`, evaluated at the coarse nodes.
fn trapezoid_f_at_zero(p: &BvpProblem, fine_per_unit: usize) -> Vec<Vector> {
    let a = p.model().a().clone();
    let sched = p.schedule();
    let n = p.n();
    let g0 = p.model().eval_g(&Vector::zeros(n)).unwrap();
    let grid = p.grid();
    let mut s_at = vec![Vector::zeros(n); grid.len()];
    let mut acc = Vector::zeros(n);
    let mut node = 1;
    for (i, u) in sched.values().iter().enumerate() {
        let (t0, t1) = (sched.times()[i], sched.times()[i + 1]);
        let m = ((t1 - t0) * fine_per_unit as f64).round() as usize;
        let h = (t1 - t0) / m as f64;
        let f = u + &g0;
        for k in 0..m {
            let (sa, sb) = (t0 + k as f64 * h, t0 + (k + 1) as f64 * h);
            let ea = mat_exp(&a, -sa).unwrap();
            let eb = mat_exp(&a, -sb).unwrap();
            acc += (ea + eb) * &f * (0.5 * h);
            while node < grid.len() && (grid.time(node) - sb).abs() < 1e-12 {
                s_at[node] = acc.clone();
                node += 1;
            }
        }
    }
    assert_eq!(node, grid.len());
    let r = (mat_exp(&a, -grid.tau()).unwrap() - Matrix::identity(n, n)).try_inverse().unwrap();
    let c = r * &s_at[grid.len() - 1];
    (0..grid.len())
        .map(|j| mat_exp(&a, grid.time(j)).unwrap() * (&c + &s_at[j]))
        .collect()
}

#[test]
fn reactor_p_at_zero_against_trapezoid_oracle() {
    let p = reactor::reactor_problem(&ReactorParams::default(), 1.0, 100_000).unwrap();
    let zero = p.zero_trajectory();
    let px = p.apply_p(&zero).unwrap();
    let coarse = reactor::reactor_problem(&ReactorParams::default(), 1.0, 100).unwrap();
    let oracle = trapezoid_f_at_zero(&coarse, 20_000);
    let sup_oracle = oracle.iter().map(|x| x.norm()).fold(0.0, f64::max);
    assert!((px.sup_norm() - sup_oracle).abs() <= 1e-3);
    for (j, o) in oracle.iter().enumerate() {
        assert!((&px.samples[j * 1000] - o).norm() <= 1e-3, "node {j}");
    }
}

#[test]
fn reactor_first_iterate_matches_table() {
    let p = reactor::reactor_problem(&ReactorParams::default(), 1.0, 100_000).unwrap();
    let x1 = p.apply_f(&p.zero_trajectory()).unwrap();
    let r = p.residual_report(&x1, None).unwrap();
    let want = reactor::TABLE1_SIMPLE_D[1];
    assert!((r.table_residual() - want).abs() <= 5e-3 * want);
}

#[test]
fn fundamental_matrix_matches_flow_derivative() {
    let model = sine_model(0.8);
    let sched = three_piece_schedule();
    let steps = 2000;
    let x0 = v(&[0.4, -0.2]);
    let x = integrate_dense(&model, &sched, &x0, steps).unwrap();
    let phi = FundamentalMatrix::compute(&model, &x).unwrap();
    let h = 1e-6;
    for col in 0..2 {
        let mut e = Vector::zeros(2);
        e[col] = h;
        let xp = integrate_dense(&model, &sched, &(&x0 + &e), steps).unwrap();
        let xm = integrate_dense(&model, &sched, &(&x0 - &e), steps).unwrap();
        for j in (0..=steps).step_by(100) {
            let fd = (&xp.samples[j] - &xm.samples[j]) / (2.0 * h);
            let err = (phi.phi[j].column(col) - fd).norm();
            assert!(err <= 1e-5, "node {j} column {col}: {err}");
        }
    }
}

#[test]
fn p_vanishes_at_converged_fixed_point() {
    let p = sine_problem(0.2, 2000);
    let r = pertraj::solve_newton_classical(&p, &pertraj::IterationOptions::with_iterations(8).tol(1e-13)).unwrap();
    assert!(p.apply_p(&r.final_trajectory).unwrap().sup_norm() <= 1e-12);
}

#[test]
fn zero_problem_has_zero_p() {
    let model = SystemModel::linear(Matrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -0.5])).unwrap();
    let sched = ControlSchedule::constant(1.0, Vector::zeros(2)).unwrap();
    let p = BvpProblem::new(
        model,
        BoundaryCondition::initial_value(Vector::zeros(2)),
        sched,
        Grid::new(1.0, 50).unwrap(),
    )
    .unwrap();
    assert_eq!(p.apply_p(&p.zero_trajectory()).unwrap().sup_norm(), 0.0);
}

fn trajectory_strategy(steps: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), steps + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_f_is_constant_in_its_argument(xs in trajectory_strategy(200), ys in trajectory_strategy(200)) {
        let model = SystemModel::linear(Matrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.3, -1.5])).unwrap();
        let p = BvpProblem::periodic(model, three_piece_schedule(), 200).unwrap();
        let grid = *p.grid();
        let x = Trajectory::new(grid, xs.iter().map(|&(a, b)| v(&[a, b])).collect()).unwrap();
        let y = Trajectory::new(grid, ys.iter().map(|&(a, b)| v(&[a, b])).collect()).unwrap();
        prop_assert_eq!(p.apply_f(&x).unwrap(), p.apply_f(&y).unwrap());
    }

    #[test]
    fn periodic_output_closes_and_recursion_matches_sum(xs in trajectory_strategy(400), eps in 0.0..1.0f64) {
        let p = sine_problem(eps, 400);
        let x = Trajectory::new(*p.grid(), xs.iter().map(|&(a, b)| v(&[a, b])).collect()).unwrap();
        let fx = p.apply_f(&x).unwrap();
        prop_assert!(fx.periodicity_gap() <= 1e-9 * (1.0 + fx.sup_norm()));
        let d = p.residual_d(&fx).unwrap();
        let direct = p.residual_d_direct(&fx).unwrap();
        prop_assert!((d - direct).abs() <= 1e-13);
    }
}
