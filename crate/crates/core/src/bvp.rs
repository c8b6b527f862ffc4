//! Discrete integral operator `F`, the map `P = F - x`, and residual metrics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matops::{mat_exp, spectral_norm, Factorization, MatExpCache};
use crate::model::{BoundaryCondition, ControlSchedule, Grid, Matrix, SystemModel, Trajectory, Vector};

/// Boundary matrices and inverse norms of the linear part.
#[derive(Debug, Clone)]
pub struct BoundaryMatrixBundle {
    /// `M0 + M1 e^{tau A}`.
    pub b_tau: Matrix,
    pub b_tau_inv_norm: f64,
    pub b_tau_rcond: f64,
    /// `||(e^{-tau A} - I)^{-1}||`, when that inverse is well conditioned.
    pub r_tau: Option<f64>,
    /// `(e^{-tau A} - I)^{-1}` for periodic conditions.
    pub periodic_factor: Option<Matrix>,
    /// `||M1||`.
    pub restricted_norm: f64,
    b_fact: Factorization,
}

impl BoundaryMatrixBundle {
    pub fn solve_b(&self, rhs: &Vector) -> Vector {
        self.b_fact.solve_vec(rhs)
    }
}

pub fn boundary_matrices(bc: &BoundaryCondition, a: &Matrix, tau: f64) -> Result<BoundaryMatrixBundle> {
    let n = a.nrows();
    if bc.dim() != n {
        return Err(Error::InvalidInput(format!(
            "boundary condition has dimension {}, system has {n}",
            bc.dim()
        )));
    }
    let id = Matrix::identity(n, n);
    let e_plus = mat_exp(a, tau)?;
    let e_minus = mat_exp(a, -tau)?;
    let b_tau = if bc.is_periodic() {
        &e_plus - &id
    } else {
        &bc.m0 + &bc.m1 * &e_plus
    };
    let b_fact = Factorization::new(&b_tau, "boundary matrix").map_err(|e| match e {
        Error::Conditioning { rcond, .. } => Error::DominantLinearization { rcond },
        other => other,
    })?;
    let b_tau_inv_norm = spectral_norm(&b_fact.inverse());
    let periodic = Factorization::new(&(e_minus - &id), "e^(-tau A) - I").ok();
    let r_inv = periodic.as_ref().map(|f| f.inverse());
    let r_tau = r_inv.as_ref().map(spectral_norm);
    Ok(BoundaryMatrixBundle {
        b_tau_rcond: b_fact.rcond(),
        b_tau,
        b_tau_inv_norm,
        r_tau,
        periodic_factor: if bc.is_periodic() { r_inv } else { None },
        restricted_norm: bc.restricted_norm(),
        b_fact,
    })
}

/// Residual measures of one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Discrete integral-equation defect along the grid, anchored at `x_0`.
    pub d: f64,
    /// `sup_j ||F(x)_j - x_j||`.
    pub fixed_point_residual: f64,
    pub periodicity_gap: f64,
    pub iterate_gap: Option<f64>,
}

impl ResidualReport {
    /// Residual used for the benchmark tables.
    pub fn table_residual(&self) -> f64 {
        self.fixed_point_residual
    }
}

/// Quadrature for the input term of `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Left-endpoint rule for both the input and the nonlinearity.
    #[default]
    Rectangle,
    /// Exact integration of the piecewise-constant input over each step; `g` stays left-endpoint.
    ExactInput,
}

/// Where iterates must lie in the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainPolicy {
    /// Every iterate and every operator argument.
    #[default]
    Strict,
    /// Only the returned iterate; intermediate ones need finite `g` and `g'`.
    FinalOnly,
}

/// A discretized boundary value problem with its precomputed exponentials.
#[derive(Debug, Clone)]
pub struct BvpProblem {
    model: SystemModel,
    bc: BoundaryCondition,
    schedule: ControlSchedule,
    grid: Grid,
    cache: MatExpCache,
    bundle: BoundaryMatrixBundle,
    u_nodes: Vec<Vector>,
    quadrature: Quadrature,
    domain_policy: DomainPolicy,
    /// `∫_0^dt e^{-sA} ds`, used by the exact input rule.
    step_integral: Option<Matrix>,
}

/// `∫_0^h e^{-sA} ds` as the upper-right block of `exp(h [[-A, I], [0, 0]])`.
fn step_integral(a: &Matrix, h: f64) -> Result<Matrix> {
    let n = a.nrows();
    let mut big = Matrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-a));
    big.view_mut((0, n), (n, n)).fill_with_identity();
    Ok(mat_exp(&big, h)?.view((0, n), (n, n)).into_owned())
}

impl BvpProblem {
    pub fn new(model: SystemModel, bc: BoundaryCondition, schedule: ControlSchedule, grid: Grid) -> Result<Self> {
        if schedule.dim() != model.n() {
            return Err(Error::InvalidInput(format!(
                "input has dimension {}, system has {}",
                schedule.dim(),
                model.n()
            )));
        }
        let bundle = boundary_matrices(&bc, model.a(), schedule.tau())?;
        let cache = MatExpCache::new(model.a(), grid)?;
        let u_nodes = schedule.sample(&grid)?;
        Ok(Self {
            model,
            bc,
            schedule,
            grid,
            cache,
            bundle,
            u_nodes,
            quadrature: Quadrature::Rectangle,
            domain_policy: DomainPolicy::Strict,
            step_integral: None,
        })
    }

    pub fn with_quadrature(mut self, q: Quadrature) -> Result<Self> {
        self.step_integral = match q {
            Quadrature::Rectangle => None,
            Quadrature::ExactInput => Some(step_integral(self.model.a(), self.grid.dt())?),
        };
        self.quadrature = q;
        Ok(self)
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn with_domain_policy(mut self, p: DomainPolicy) -> Self {
        self.domain_policy = p;
        self
    }

    pub fn domain_policy(&self) -> DomainPolicy {
        self.domain_policy
    }

    /// `g'(x_j)` at every node, honoring the domain policy.
    pub fn jacobian_nodes(&self, x: &Trajectory) -> Result<Vec<Matrix>> {
        x.check_grid(&self.grid)?;
        x.samples
            .iter()
            .enumerate()
            .map(|(j, xj)| match self.domain_policy {
                DomainPolicy::Strict => self
                    .model
                    .eval_g_jac(xj)
                    .map_err(|e| e.at_node(j, Some(x.iteration))),
                DomainPolicy::FinalOnly => {
                    let m = self.model.nonlinearity().jacobian(xj);
                    if m.iter().all(|v| v.is_finite()) {
                        Ok(m)
                    } else {
                        Err(Error::Divergence(format!("g' at node {j} of iteration {}", x.iteration)))
                    }
                }
            })
            .collect()
    }

    /// Contribution of step `j-1 -> j` before the `e^{-t_{j-1} A}` factor.
    fn step_forcing(&self, j: usize, g: &Vector) -> Vector {
        let dt = self.grid.dt();
        match &self.step_integral {
            None => (&self.u_nodes[j - 1] + g) * dt,
            Some(w) => w * &self.u_nodes[j - 1] + g * dt,
        }
    }

    pub fn periodic(model: SystemModel, schedule: ControlSchedule, steps: usize) -> Result<Self> {
        let n = model.n();
        let grid = Grid::new(schedule.tau(), steps)?;
        Self::new(model, BoundaryCondition::periodic(n), schedule, grid)
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn bc(&self) -> &BoundaryCondition {
        &self.bc
    }

    pub fn schedule(&self) -> &ControlSchedule {
        &self.schedule
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cache(&self) -> &MatExpCache {
        &self.cache
    }

    pub fn bundle(&self) -> &BoundaryMatrixBundle {
        &self.bundle
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn u_nodes(&self) -> &[Vector] {
        &self.u_nodes
    }

    pub fn zero_trajectory(&self) -> Trajectory {
        Trajectory::zeros(self.grid, self.n())
    }

    /// `g(x_j)` at every node, honoring the domain policy.
    pub fn g_nodes(&self, x: &Trajectory) -> Result<Vec<Vector>> {
        x.check_grid(&self.grid)?;
        x.samples
            .iter()
            .enumerate()
            .map(|(j, xj)| match self.domain_policy {
                DomainPolicy::Strict => self
                    .model
                    .eval_g(xj)
                    .map_err(|e| e.at_node(j, Some(x.iteration))),
                DomainPolicy::FinalOnly => {
                    let g = self.model.nonlinearity().eval(xj);
                    if g.iter().all(|v| v.is_finite()) {
                        Ok(g)
                    } else {
                        Err(Error::Divergence(format!("g at node {j} of iteration {}", x.iteration)))
                    }
                }
            })
            .collect()
    }

    /// Left-endpoint prefix sums `S_j` of `e^{-sA}(g(x(s)) + u(s))`.
    fn prefix_sums(&self, g: &[Vector]) -> Vec<Vector> {
        let mut s = Vec::with_capacity(self.grid.len());
        s.push(Vector::zeros(self.n()));
        for j in 1..self.grid.len() {
            let next = &s[j - 1] + self.cache.minus(j - 1) * self.step_forcing(j, &g[j - 1]);
            s.push(next);
        }
        s
    }

    fn constant_from(&self, s_end: &Vector) -> Vector {
        match &self.bundle.periodic_factor {
            Some(r) => r * s_end,
            None => {
                let rhs = &self.bc.beta - &self.bc.m1 * (self.cache.tau_plus() * s_end);
                self.bundle.solve_b(&rhs)
            }
        }
    }

    /// Homogeneous-boundary response `e^{t_j A}(c + S_j)` to node forcing `f`, input excluded.
    pub fn integrate_forcing(&self, f: &[Vector]) -> Result<Vec<Vector>> {
        if f.len() != self.grid.len() {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                found: f.len(),
            });
        }
        let dt = self.grid.dt();
        let mut s = vec![Vector::zeros(self.n())];
        for j in 1..self.grid.len() {
            let next = &s[j - 1] + self.cache.minus(j - 1) * &f[j - 1] * dt;
            s.push(next);
        }
        let s_end = s.last().unwrap();
        let c = match &self.bundle.periodic_factor {
            Some(r) => r * s_end,
            None => -self.bundle.solve_b(&(&self.bc.m1 * (self.cache.tau_plus() * s_end))),
        };
        Ok(s.iter()
            .enumerate()
            .map(|(j, sj)| self.cache.plus(j) * (&c + sj))
            .collect())
    }

    /// `F(x)` without checking that the output stays in the domain.
    pub fn apply_f_unchecked(&self, x: &Trajectory) -> Result<Trajectory> {
        let g = self.g_nodes(x)?;
        let s = self.prefix_sums(&g);
        let c = self.constant_from(s.last().unwrap());
        let samples: Vec<Vector> = s
            .iter()
            .enumerate()
            .map(|(j, sj)| self.cache.plus(j) * (&c + sj))
            .collect();
        let mut out = Trajectory::new(self.grid, samples)?;
        if !out.is_finite() {
            return Err(Error::Divergence("operator F".into()));
        }
        out.iteration = x.iteration + 1;
        Ok(out)
    }

    /// `F(x)`; fails if the image leaves the domain.
    pub fn apply_f(&self, x: &Trajectory) -> Result<Trajectory> {
        let out = self.apply_f_unchecked(x)?;
        out.check_domain(self.model.domain())
            .map_err(|e| e.in_iteration(out.iteration))?;
        Ok(out)
    }

    /// `P(x) = F(x) - x`.
    pub fn apply_p(&self, x: &Trajectory) -> Result<Trajectory> {
        let fx = self.apply_f_unchecked(x)?;
        Ok(difference(&fx, x))
    }

    /// Defect of the one-step recursion `x~_j = e^{dt A}(x~_{j-1} + dt (g + u)(t_{j-1}))` from `x~_0 = x_0`.
    pub fn residual_d(&self, x: &Trajectory) -> Result<f64> {
        let g = self.g_nodes(x)?;
        Ok(self.residual_d_from(x, &g))
    }

    fn residual_d_from(&self, x: &Trajectory, g: &[Vector]) -> f64 {
        let step = self.cache.step();
        let mut xt = x.samples[0].clone();
        let mut d: f64 = 0.0;
        for j in 1..self.grid.len() {
            xt = step * (xt + self.step_forcing(j, &g[j - 1]));
            d = d.max((&x.samples[j] - &xt).norm());
        }
        d
    }

    /// Same defect evaluated through the closed sum `e^{t_j A}(x_0 + S_j)`.
    pub fn residual_d_direct(&self, x: &Trajectory) -> Result<f64> {
        let g = self.g_nodes(x)?;
        let s = self.prefix_sums(&g);
        let x0 = &x.samples[0];
        Ok((1..self.grid.len())
            .map(|j| (&x.samples[j] - self.cache.plus(j) * (x0 + &s[j])).norm())
            .fold(0.0, f64::max))
    }

    /// All residual measures, given `F(x)` and optionally the previous iterate.
    pub fn report_with(&self, x: &Trajectory, fx: &Trajectory, prev: Option<&Trajectory>) -> Result<ResidualReport> {
        let g = self.g_nodes(x)?;
        Ok(ResidualReport {
            d: self.residual_d_from(x, &g),
            fixed_point_residual: fx.sup_distance(x),
            periodicity_gap: x.periodicity_gap(),
            iterate_gap: prev.map(|p| x.sup_distance(p)),
        })
    }

    pub fn residual_report(&self, x: &Trajectory, prev: Option<&Trajectory>) -> Result<ResidualReport> {
        let fx = self.apply_f_unchecked(x)?;
        self.report_with(x, &fx, prev)
    }
}

pub(crate) fn difference(a: &Trajectory, b: &Trajectory) -> Trajectory {
    Trajectory {
        samples: a.samples.iter().zip(&b.samples).map(|(p, q)| p - q).collect(),
        grid: a.grid,
        iteration: b.iteration,
    }
}
