//! Fixed-point iteration `x^(k) = F(x^(k-1))`.

use serde::Serialize;

use crate::bvp::{BvpProblem, DomainPolicy, ResidualReport};
use crate::error::{Error, Result};
use crate::model::Trajectory;

/// Iteration count, stopping rule and starting point shared by all solvers.
#[derive(Debug, Clone)]
pub struct IterationOptions {
    pub n_i: usize,
    /// Stop once the sup-norm gap between successive iterates is at most this.
    pub tol: Option<f64>,
    /// Starting trajectory; zero when absent.
    pub initial: Option<Trajectory>,
    pub keep_iterates: bool,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            n_i: 9,
            tol: None,
            initial: None,
            keep_iterates: false,
        }
    }
}

impl IterationOptions {
    pub fn with_iterations(n_i: usize) -> Self {
        Self {
            n_i,
            ..Self::default()
        }
    }

    pub fn keep(mut self) -> Self {
        self.keep_iterates = true;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub(crate) fn start(&self, problem: &BvpProblem) -> Result<Trajectory> {
        let x0 = match &self.initial {
            Some(x) => {
                x.check_grid(problem.grid())?;
                let mut x = x.clone();
                x.iteration = 0;
                x
            }
            None => problem.zero_trajectory(),
        };
        x0.check_domain(problem.model().domain())
            .map_err(|e| e.in_iteration(0))?;
        Ok(x0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationResult {
    #[serde(skip)]
    pub final_trajectory: Trajectory,
    /// Reports for `k = 0 ..= iterations_run`.
    pub history: Vec<ResidualReport>,
    pub converged: bool,
    pub iterations_run: usize,
    #[serde(skip)]
    pub iterates: Vec<Trajectory>,
}

impl IterationResult {
    pub fn table_residuals(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.table_residual()).collect()
    }

    pub fn last_report(&self) -> &ResidualReport {
        self.history.last().unwrap()
    }
}

/// Shared driver: `step(x_k, P(x_k))` returns the next iterate.
pub(crate) fn drive<S>(problem: &BvpProblem, opts: &IterationOptions, mut step: S) -> Result<IterationResult>
where
    S: FnMut(&Trajectory, &Trajectory, usize) -> Result<Trajectory>,
{
    if let Some(t) = opts.tol {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be >= 0, got {t}")));
        }
    }
    let mut x = opts.start(problem)?;
    let mut prev: Option<Trajectory> = None;
    let mut history = Vec::with_capacity(opts.n_i + 1);
    let mut iterates = Vec::new();
    let mut converged = false;
    let mut k = 0;
    loop {
        let fx = problem.apply_f_unchecked(&x).map_err(|e| e.in_iteration(k))?;
        let report = problem.report_with(&x, &fx, prev.as_ref())?;
        history.push(report);
        if let (Some(tol), Some(gap)) = (opts.tol, report.iterate_gap) {
            if gap <= tol {
                converged = true;
            }
        }
        if !report.fixed_point_residual.is_finite() {
            return Err(Error::Divergence(format!("iteration {k}")));
        }
        if converged || k == opts.n_i {
            break;
        }
        let mut next = step(&x, &fx, k)?;
        next.iteration = k + 1;
        if !next.is_finite() {
            return Err(Error::Divergence(format!("iteration {}", k + 1)));
        }
        if problem.domain_policy() == DomainPolicy::Strict {
            next.check_domain(problem.model().domain())
                .map_err(|e| e.in_iteration(k + 1))?;
        }
        if opts.keep_iterates {
            iterates.push(x.clone());
        }
        prev = Some(std::mem::replace(&mut x, next));
        k += 1;
    }
    x.check_domain(problem.model().domain())
        .map_err(|e| e.in_iteration(k))?;
    if opts.keep_iterates {
        iterates.push(x.clone());
    }
    Ok(IterationResult {
        final_trajectory: x,
        history,
        converged,
        iterations_run: k,
        iterates,
    })
}

/// Simple iteration from `x^(0)` (zero by default).
pub fn solve_simple(problem: &BvpProblem, opts: &IterationOptions) -> Result<IterationResult> {
    drive(problem, opts, |_, fx, _| Ok(fx.clone()))
}
