//! Newton schemes for `P(x) = F(x) - x = 0` under periodic conditions.

use crate::bvp::{difference, BvpProblem};
use crate::error::{Error, Result};
use crate::matops::{Factorization, FundamentalMatrix};
use crate::model::{Matrix, Trajectory, Vector};
use crate::simple::{drive, IterationOptions, IterationResult};

/// Explicit inverse of `P'(x)` frozen at a base trajectory.
#[derive(Debug, Clone)]
pub struct PPrimeInverse {
    pub base_point: Trajectory,
    pub phi: FundamentalMatrix,
    pub m_x: Matrix,
    pub m_x_rcond: f64,
    /// `M_x^{-1} (e^{-tau A} - I)^{-1}`.
    m_solve: Matrix,
    pub gprime_nodes: Vec<Matrix>,
}

impl PPrimeInverse {
    pub fn assemble(problem: &BvpProblem, x: &Trajectory) -> Result<Self> {
        let r = problem.bundle().periodic_factor.as_ref().ok_or_else(|| {
            Error::InvalidInput("Newton schemes require periodic boundary conditions".into())
        })?;
        x.check_grid(problem.grid())?;
        let model = problem.model();
        let gprime = problem.jacobian_nodes(x)?;
        let phi = if x.is_constant() {
            FundamentalMatrix::constant(&(model.a() + &gprime[0]), *problem.grid())?
        } else {
            let a = model.a();
            let jac: Vec<Matrix> = gprime.iter().map(|g| a + g).collect();
            FundamentalMatrix::from_coefficients(&jac, *problem.grid())?
        };
        let n = problem.n();
        let dt = problem.grid().dt();
        let cache = problem.cache();
        let mut sum = Matrix::zeros(n, n);
        for j in 1..problem.grid().len() {
            sum += cache.minus(j - 1) * &gprime[j - 1] * &phi.phi[j - 1] * dt;
        }
        let m_x = r * sum - Matrix::identity(n, n);
        let fact = Factorization::new(&m_x, "M_x").map_err(|e| match e {
            Error::Conditioning { rcond, .. } => Error::LinearizationSingular { rcond },
            other => other,
        })?;
        Ok(Self {
            base_point: x.clone(),
            m_solve: fact.solve(r),
            m_x_rcond: fact.rcond(),
            m_x,
            phi,
            gprime_nodes: gprime,
        })
    }

    /// `[P'(x)]^{-1} dy`.
    pub fn apply(&self, problem: &BvpProblem, dy: &Trajectory) -> Result<Trajectory> {
        dy.check_grid(problem.grid())?;
        let n = problem.n();
        let dt = problem.grid().dt();
        let cache = problem.cache();
        let phi = &self.phi;
        let g = &self.gprime_nodes;
        let mut s = Vec::with_capacity(dy.len());
        s.push(Vector::zeros(n));
        let mut cs = Vector::zeros(n);
        for j in 1..dy.len() {
            let gdy = &g[j - 1] * &dy.samples[j - 1];
            let inner = &dy.samples[j - 1] + &phi.phi[j - 1] * &s[j - 1];
            cs += cache.minus(j - 1) * (&g[j - 1] * inner) * dt;
            let next = &s[j - 1] + &phi.phi_inv[j - 1] * gdy * dt;
            s.push(next);
        }
        let c = &self.m_solve * cs;
        let samples = s
            .iter()
            .zip(&dy.samples)
            .enumerate()
            .map(|(j, (sj, dyj))| &phi.phi[j] * (&c - sj) - dyj)
            .collect();
        Trajectory::new(dy.grid, samples)
    }
}

/// Newton with `P'` frozen at the starting trajectory.
pub fn solve_newton_modified(problem: &BvpProblem, opts: &IterationOptions) -> Result<IterationResult> {
    let x0 = opts.start(problem)?;
    let pinv = PPrimeInverse::assemble(problem, &x0)?;
    drive(problem, opts, |x, fx, _| {
        let dx = pinv.apply(problem, &difference(fx, x))?;
        Ok(difference(x, &dx))
    })
}

/// Newton with `P'` reassembled at every iterate.
pub fn solve_newton_classical(problem: &BvpProblem, opts: &IterationOptions) -> Result<IterationResult> {
    drive(problem, opts, |x, fx, k| {
        let pinv = PPrimeInverse::assemble(problem, x).map_err(|e| e.in_iteration(k))?;
        let dx = pinv.apply(problem, &difference(fx, x))?;
        Ok(difference(x, &dx))
    })
}

/// `P''(x)(v1, v2)`, evaluated with the same quadrature as `F`.
pub fn eval_second_derivative(
    problem: &BvpProblem,
    x: &Trajectory,
    v1: &Trajectory,
    v2: &Trajectory,
) -> Result<Trajectory> {
    x.check_grid(problem.grid())?;
    v1.check_grid(problem.grid())?;
    v2.check_grid(problem.grid())?;
    let g = problem.model().nonlinearity();
    let n = problem.n();
    let mut w = Vec::with_capacity(x.len());
    for (j, xj) in x.samples.iter().enumerate() {
        problem
            .model()
            .domain()
            .check(xj)
            .map_err(|e| e.at_node(j, Some(x.iteration)))?;
        let h = g.hessians(xj).ok_or(Error::HessianUnavailable)?;
        let (a, b) = (&v1.samples[j], &v2.samples[j]);
        let mut wj = Vector::zeros(n);
        for (i, hi) in h.iter().enumerate() {
            let mut acc = 0.0;
            for p in 0..n {
                acc += hi[(p, p)] * (a[p] * b[p]);
                for q in p + 1..n {
                    acc += hi[(p, q)] * (a[p] * b[q] + a[q] * b[p]);
                }
            }
            wj[i] = acc;
        }
        w.push(wj);
    }
    Trajectory::new(*problem.grid(), problem.integrate_forcing(&w)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::model::{ControlSchedule, DomainBox, Monomial, Polynomial, SystemModel};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn quadratic_problem(eps: f64, steps: usize) -> BvpProblem {
        let g = Polynomial::new(
            1,
            vec![Monomial {
                component: 0,
                coeff: eps,
                powers: vec![2],
            }],
        )
        .unwrap();
        let model = SystemModel::new(
            Matrix::from_element(1, 1, -1.0),
            Arc::new(g),
            DomainBox::unbounded(1),
        )
        .unwrap();
        let sched = ControlSchedule::new(vec![0.0, 0.5, 1.0], vec![v(&[1.0]), v(&[-0.5])]).unwrap();
        BvpProblem::periodic(model, sched, steps).unwrap()
    }

    fn linear_problem() -> BvpProblem {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -0.7]);
        let sched = ControlSchedule::from_fractions(1.0, &[0.0, 0.5, 1.0], vec![v(&[1.0, 0.0]), v(&[0.0, -1.0])]).unwrap();
        BvpProblem::periodic(SystemModel::linear(a).unwrap(), sched, 100).unwrap()
    }

    #[test]
    fn linear_m_x_is_minus_identity_and_inverse_negates() {
        let p = linear_problem();
        let pinv = PPrimeInverse::assemble(&p, &p.zero_trajectory()).unwrap();
        assert_eq!(pinv.m_x, -Matrix::identity(2, 2));
        let dy = Trajectory::from_fn(*p.grid(), |t| v(&[t, 1.0 - t]));
        let dx = pinv.apply(&p, &dy).unwrap();
        for (a, b) in dx.samples.iter().zip(&dy.samples) {
            assert_eq!(a, &-b);
        }
    }

    #[test]
    fn linear_newton_converges_in_one_step() {
        let p = linear_problem();
        let opts = IterationOptions::with_iterations(3).keep();
        let m = solve_newton_modified(&p, &opts).unwrap();
        let c = solve_newton_classical(&p, &opts).unwrap();
        assert!(m.history[1].fixed_point_residual < 1e-14);
        assert_eq!(m.iterates, c.iterates);
    }

    #[test]
    fn scalar_m_x_matches_closed_form() {
        // g = eps x^2 linearized at x = c: J = -1 + 2 eps c, g' = 2 eps c.
        let (eps, cst) = (0.2, 0.5);
        let steps = 2000;
        let p = quadratic_problem(eps, steps);
        let x = Trajectory::constant(*p.grid(), v(&[cst]));
        let pinv = PPrimeInverse::assemble(&p, &x).unwrap();
        let gp = 2.0 * eps * cst;
        // (e^{tau} - 1)^{-1} * ∫_0^1 e^{t} gp e^{(-1 + gp) t} dt - 1
        let integral = gp * (gp.exp() - 1.0) / gp;
        let expected = integral / (1f64.exp() - 1.0) - 1.0;
        let rel = (pinv.m_x[(0, 0)] - expected).abs() / expected.abs();
        assert!(rel <= 10.0 * p.grid().dt(), "rel = {rel}");
    }

    #[test]
    fn inverse_against_finite_difference() {
        let p = quadratic_problem(0.3, 4000);
        let x = Trajectory::from_fn(*p.grid(), |t| v(&[0.2 + 0.1 * (6.0 * t).sin()]));
        let pinv = PPrimeInverse::assemble(&p, &x).unwrap();
        let dy = Trajectory::from_fn(*p.grid(), |t| v(&[(3.0 * t).cos()]));
        let dx = pinv.apply(&p, &dy).unwrap();
        let h = 1e-6;
        let xp = Trajectory::new(x.grid, x.samples.iter().zip(&dx.samples).map(|(a, b)| a + b * h).collect()).unwrap();
        let d = difference(&p.apply_p(&xp).unwrap(), &p.apply_p(&x).unwrap());
        let err = d
            .samples
            .iter()
            .zip(&dy.samples)
            .map(|(a, b)| (a / h - b).norm())
            .fold(0.0, f64::max);
        assert!(err / dy.sup_norm() < 1e-3, "err = {err}");
    }

    #[test]
    fn second_derivative_matches_central_difference() {
        let p = quadratic_problem(0.4, 500);
        let x = Trajectory::from_fn(*p.grid(), |t| v(&[0.3 * t]));
        let dv = Trajectory::from_fn(*p.grid(), |t| v(&[1.0 + t * t]));
        let d2 = eval_second_derivative(&p, &x, &dv, &dv).unwrap();
        let h = 1e-3;
        let shift = |s: f64| {
            let y = Trajectory::new(x.grid, x.samples.iter().zip(&dv.samples).map(|(a, b)| a + b * s).collect()).unwrap();
            p.apply_f(&y).unwrap()
        };
        let (fp, f0, fm) = (shift(h), p.apply_f(&x).unwrap(), shift(-h));
        for j in 0..x.len() {
            let fd = (&fp.samples[j] - &f0.samples[j] * 2.0 + &fm.samples[j]) / (h * h);
            assert!((fd - &d2.samples[j]).norm() <= 1e-4);
        }
    }

    #[test]
    fn second_derivative_of_linear_is_zero() {
        let p = linear_problem();
        let x = Trajectory::from_fn(*p.grid(), |t| v(&[t, -t]));
        let d2 = eval_second_derivative(&p, &x, &x, &x).unwrap();
        assert_eq!(d2.sup_norm(), 0.0);
    }

    #[test]
    fn second_derivative_is_symmetric() {
        let g = Polynomial::new(
            2,
            vec![
                Monomial { component: 0, coeff: 0.3, powers: vec![1, 1] },
                Monomial { component: 1, coeff: -0.7, powers: vec![2, 0] },
                Monomial { component: 1, coeff: 0.1, powers: vec![0, 2] },
            ],
        )
        .unwrap();
        let model = SystemModel::new(
            Matrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -2.0]),
            Arc::new(g),
            DomainBox::unbounded(2),
        )
        .unwrap();
        let sched = ControlSchedule::constant(1.0, v(&[1.0, 1.0])).unwrap();
        let p = BvpProblem::periodic(model, sched, 100).unwrap();
        let x = Trajectory::from_fn(*p.grid(), |t| v(&[t, 1.0 - t]));
        let a = Trajectory::from_fn(*p.grid(), |t| v(&[(2.0 * t).sin(), 0.7]));
        let b = Trajectory::from_fn(*p.grid(), |t| v(&[-1.3, t.exp()]));
        let ab = eval_second_derivative(&p, &x, &a, &b).unwrap();
        let ba = eval_second_derivative(&p, &x, &b, &a).unwrap();
        assert_eq!(ab.samples, ba.samples);
    }

    #[test]
    fn hessian_required() {
        let f = crate::model::CallbackField::new(1, |x: &Vector| x * 0.0, |_x: &Vector| Matrix::zeros(1, 1));
        let model = SystemModel::new(Matrix::from_element(1, 1, -1.0), Arc::new(f), DomainBox::unbounded(1)).unwrap();
        let sched = ControlSchedule::constant(1.0, v(&[1.0])).unwrap();
        let p = BvpProblem::periodic(model, sched, 10).unwrap();
        let z = p.zero_trajectory();
        assert!(matches!(
            eval_second_derivative(&p, &z, &z, &z),
            Err(Error::HessianUnavailable)
        ));
    }
}
