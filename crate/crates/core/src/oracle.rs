//! Reference solutions by dense RK4 integration and single shooting.

use nalgebra::linalg::LU;
use serde::Serialize;

use crate::error::{Error, Location, Result};
use crate::model::{ControlSchedule, Grid, Matrix, SystemModel, Trajectory, Vector};

fn rhs(model: &SystemModel, x: &Vector, u: &Vector, t: f64) -> Result<Vector> {
    let g = model.eval_g(x).map_err(|e| match e {
        Error::DomainViolation {
            coord,
            value,
            lower,
            upper,
            ..
        } => Error::DomainViolation {
            coord,
            value,
            lower,
            upper,
            at: Location::Time(t),
        },
        other => other,
    })?;
    Ok(model.a() * x + g + u)
}

/// Input value on each step; every switching time must fall on a step boundary.
fn step_inputs(schedule: &ControlSchedule, grid: &Grid) -> Result<Vec<Vector>> {
    let h = grid.dt();
    for &ts in schedule.times() {
        let r = ts / h;
        if (r - r.round()).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "switching time {ts} is not aligned with step {h}"
            )));
        }
    }
    (0..grid.steps())
        .map(|k| {
            let mid = (k as f64 + 0.5) * h;
            schedule.eval(mid).cloned()
        })
        .collect()
}

fn rk4_step(model: &SystemModel, x: &Vector, u: &Vector, t: f64, h: f64) -> Result<Vector> {
    let k1 = rhs(model, x, u, t)?;
    let k2 = rhs(model, &(x + &k1 * (h / 2.0)), u, t + h / 2.0)?;
    let k3 = rhs(model, &(x + &k2 * (h / 2.0)), u, t + h / 2.0)?;
    let k4 = rhs(model, &(x + &k3 * h), u, t + h)?;
    let next = x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!("dense integration at t = {t}")));
    }
    Ok(next)
}

/// Classical RK4 on `steps` uniform steps over `[0, tau]`.
pub fn integrate_dense(model: &SystemModel, schedule: &ControlSchedule, x0: &Vector, steps: usize) -> Result<Trajectory> {
    let grid = Grid::new(schedule.tau(), steps)?;
    let inputs = step_inputs(schedule, &grid)?;
    model.domain().check(x0)?;
    let mut samples = Vec::with_capacity(grid.len());
    samples.push(x0.clone());
    for (k, u) in inputs.iter().enumerate() {
        let next = rk4_step(model, &samples[k], u, grid.time(k), grid.dt())?;
        samples.push(next);
    }
    Trajectory::new(grid, samples)
}

fn flow(model: &SystemModel, inputs: &[Vector], grid: &Grid, x0: &Vector) -> Result<Vector> {
    model.domain().check(x0)?;
    let mut x = x0.clone();
    for (k, u) in inputs.iter().enumerate() {
        x = rk4_step(model, &x, u, grid.time(k), grid.dt())?;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub steps: usize,
    pub tol: f64,
    pub max_steps: usize,
    pub fd_step: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            steps: 20_000,
            tol: 1e-10,
            max_steps: 50,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootingResult {
    pub x0_star: Vec<f64>,
    pub newton_steps: usize,
    pub final_defect: f64,
}

impl ShootingResult {
    pub fn x0(&self) -> Vector {
        Vector::from_column_slice(&self.x0_star)
    }
}

/// Newton on `x(tau; x0) - x0 = 0` from `x0 = 0`, with a forward-difference Jacobian.
pub fn shooting_solve(model: &SystemModel, schedule: &ControlSchedule, opts: &ShootingOptions) -> Result<ShootingResult> {
    let n = model.n();
    let grid = Grid::new(schedule.tau(), opts.steps)?;
    let inputs = step_inputs(schedule, &grid)?;
    let mut x = Vector::zeros(n);
    let mut defect_vec = flow(model, &inputs, &grid, &x)? - &x;
    let mut defect = defect_vec.norm();
    let mut steps = 0;
    while defect > opts.tol {
        if steps == opts.max_steps {
            return Err(Error::NoConvergence {
                iterations: steps,
                defect,
            });
        }
        let mut jac = Matrix::zeros(n, n);
        for i in 0..n {
            let h = opts.fd_step * (1.0 + x[i].abs());
            let mut xp = x.clone();
            xp[i] += h;
            let col = (flow(model, &inputs, &grid, &xp)? - &xp - &defect_vec) / h;
            jac.set_column(i, &col);
        }
        let sv = jac.singular_values();
        let rc = if sv.max() > 0.0 { sv.min() / sv.max() } else { 0.0 };
        if rc < 1e-12 {
            return Err(Error::Conditioning {
                what: "shooting Jacobian",
                rcond: rc,
            });
        }
        let dx = LU::new(jac)
            .solve(&defect_vec)
            .ok_or(Error::Conditioning {
                what: "shooting Jacobian",
                rcond: rc,
            })?;
        x -= dx;
        defect_vec = flow(model, &inputs, &grid, &x)? - &x;
        defect = defect_vec.norm();
        steps += 1;
    }
    Ok(ShootingResult {
        x0_star: x.iter().copied().collect(),
        newton_steps: steps,
        final_defect: defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(u: f64) -> (SystemModel, ControlSchedule) {
        (
            SystemModel::linear(Matrix::from_element(1, 1, -1.0)).unwrap(),
            ControlSchedule::constant(1.0, Vector::from_element(1, u)).unwrap(),
        )
    }

    #[test]
    fn stationary_solution() {
        let (m, s) = scalar(1.0);
        let t = integrate_dense(&m, &s, &Vector::from_element(1, 1.0), 100).unwrap();
        for x in &t.samples {
            assert!((x[0] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn scalar_decay() {
        let (m, s) = scalar(0.0);
        let t = integrate_dense(&m, &s, &Vector::from_element(1, 1.0), 200).unwrap();
        assert_relative_eq!(t.last()[0], (-1f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn fourth_order() {
        let (m, s) = scalar(0.0);
        let err = |n| (integrate_dense(&m, &s, &Vector::from_element(1, 1.0), n).unwrap().last()[0] - (-1f64).exp()).abs();
        let order = (err(10) / err(20)).log2();
        assert!(order >= 3.8, "order = {order}");
    }

    #[test]
    fn misaligned_switch_is_rejected() {
        let m = SystemModel::linear(Matrix::from_element(1, 1, -1.0)).unwrap();
        let s = ControlSchedule::new(vec![0.0, 0.3, 1.0], vec![Vector::from_element(1, 1.0), Vector::from_element(1, 0.0)]).unwrap();
        assert!(integrate_dense(&m, &s, &Vector::zeros(1), 16).is_err());
        assert!(integrate_dense(&m, &s, &Vector::zeros(1), 10).is_ok());
    }

    #[test]
    fn shooting_linear_scalar() {
        let (m, s) = scalar(1.0);
        let r = shooting_solve(&m, &s, &ShootingOptions { steps: 1000, ..Default::default() }).unwrap();
        assert!((r.x0_star[0] - 1.0).abs() <= 1e-10);
        assert!(r.final_defect <= 1e-10);
    }
}
