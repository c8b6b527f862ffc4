//! Non-isothermal reactor model, its bang-bang schedule, and the benchmark drivers.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bvp::{BvpProblem, DomainPolicy};
use crate::error::Result;
use crate::model::{ControlSchedule, DomainBox, Matrix, Nonlinearity, SystemModel, Trajectory, Vector};
use crate::newton::solve_newton_modified;
use crate::simple::{solve_simple, IterationOptions, IterationResult};

/// How the rate constants enter the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateForm {
    /// `g_i = k_i (e^{-kappa} - (x1+1)^gamma e^{-kappa/(x2+1)})`, so `g(0) = 0`.
    #[default]
    Equilibrium,
    /// `g_i = k_i e^{-kappa} - (x1+1)^gamma e^{-kappa/(x2+1)}`.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReactorParams {
    pub gamma: f64,
    pub kappa: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub k1: f64,
    pub k2: f64,
    pub u1_min: f64,
    pub u1_max: f64,
    pub u2_min: f64,
    pub u2_max: f64,
    pub rate_form: RateForm,
}

impl Default for ReactorParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            kappa: 17.77,
            phi1: 1.0,
            phi2: 1.0,
            k1: 5.819e7,
            k2: -8.99e5,
            u1_min: -1.798,
            u1_max: 1.798,
            u2_min: -0.06663,
            u2_max: 0.06663,
            rate_form: RateForm::Equilibrium,
        }
    }
}

/// Reaction-rate nonlinearity with analytic derivatives.
#[derive(Debug, Clone)]
pub struct ReactorField {
    p: ReactorParams,
    ek: f64,
}

impl ReactorField {
    pub fn new(p: ReactorParams) -> Self {
        Self {
            p,
            ek: (-p.kappa).exp(),
        }
    }

    /// `r(x) = (x1+1)^gamma e^{-kappa/(x2+1)}` and its first and second partials.
    fn rate(&self, x: &Vector) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let (g, k) = (self.p.gamma, self.p.kappa);
        let y1 = x[0] + 1.0;
        let y2 = x[1] + 1.0;
        let e = (-k / y2).exp();
        let p0 = y1.powf(g);
        let r = p0 * e;
        let d2 = k / (y2 * y2);
        let r1 = g * y1.powf(g - 1.0) * e;
        let r2 = r * d2;
        let r11 = g * (g - 1.0) * y1.powf(g - 2.0) * e;
        let r12 = r1 * d2;
        let r22 = r * (d2 * d2 - 2.0 * k / (y2 * y2 * y2));
        (r, [r1, r2], [[r11, r12], [r12, r22]])
    }

    fn weights(&self) -> ([f64; 2], [f64; 2]) {
        let (k1, k2) = (self.p.k1, self.p.k2);
        match self.p.rate_form {
            RateForm::Equilibrium => ([k1 * self.ek, k2 * self.ek], [k1, k2]),
            RateForm::AsPrinted => ([k1 * self.ek, k2 * self.ek], [1.0, 1.0]),
        }
    }
}

impl Nonlinearity for ReactorField {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &Vector) -> Vector {
        let (r, _, _) = self.rate(x);
        let (c, w) = self.weights();
        Vector::from_column_slice(&[c[0] - w[0] * r, c[1] - w[1] * r])
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let (_, d, _) = self.rate(x);
        let (_, w) = self.weights();
        Matrix::from_row_slice(2, 2, &[-w[0] * d[0], -w[0] * d[1], -w[1] * d[0], -w[1] * d[1]])
    }

    fn hessians(&self, x: &Vector) -> Option<Vec<Matrix>> {
        let (_, _, h) = self.rate(x);
        let (_, w) = self.weights();
        let flat = [h[0][0], h[0][1], h[1][0], h[1][1]];
        Some(
            w.iter()
                .map(|wi| Matrix::from_row_slice(2, 2, &flat.map(|v| -wi * v)))
                .collect(),
        )
    }
}

pub fn build_reactor_model(p: &ReactorParams) -> Result<SystemModel> {
    let a = Matrix::from_diagonal(&Vector::from_column_slice(&[-p.phi1, -p.phi2]));
    let domain = DomainBox::new(vec![-1.0, -1.0], vec![f64::INFINITY, f64::INFINITY])?;
    SystemModel::new(a, Arc::new(ReactorField::new(*p)), domain)
}

pub const N5_FRACTIONS: [f64; 6] = [0.0, 0.1, 0.3, 0.5, 0.8, 1.0];

/// Five-interval bang-bang input with switches at `(0, .1, .3, .5, .8, 1) tau`.
pub fn build_schedule_n5(p: &ReactorParams, tau: f64) -> Result<ControlSchedule> {
    let v = |a: f64, b: f64| Vector::from_column_slice(&[a, b]);
    let u1 = v(p.u1_max, p.u2_min);
    let u2 = v(p.u1_max, p.u2_max);
    ControlSchedule::from_fractions(tau, &N5_FRACTIONS, vec![u1.clone(), u2.clone(), u1.clone(), -u1, -u2])
}

pub fn reactor_problem(p: &ReactorParams, tau: f64, n_g: usize) -> Result<BvpProblem> {
    BvpProblem::periodic(build_reactor_model(p)?, build_schedule_n5(p, tau)?, n_g)
}

pub const TABLE1_N_G: usize = 100_000;
pub const TABLE1_N_I: usize = 9;

pub const TABLE1_SIMPLE_D: [f64; 10] = [
    0.440438, 0.0650220, 0.0102533, 0.00301579, 0.00173071, 0.00132163, 0.00108846,
    0.000886124, 0.000721299, 0.000587331,
];
pub const TABLE1_SIMPLE_GAP: [f64; 10] = [
    0.0, 2.8319e-11, 2.7931e-11, 2.7289e-11, 2.7452e-11, 2.7353e-11, 2.7438e-11, 2.7368e-11,
    2.7425e-11, 2.7378e-11,
];
pub const TABLE1_NEWTON_D: [f64; 10] = [
    0.440438, 0.00569119, 0.000180856, 3.22370e-6, 4.70956e-8, 6.39264e-10, 6.64978e-12,
    5.49621e-14, 3.88675e-16, 2.22214e-16,
];
pub const TABLE1_NEWTON_GAP: [f64; 10] = [
    0.0, 2.1651e-15, 2.2205e-15, 2.1650e-15, 2.1095e-15, 2.1650e-15, 2.1095e-15, 2.1650e-15,
    2.2205e-15, 2.1650e-15,
];

pub const SIMPLE_REL_TOL: f64 = 5e-3;
pub const NEWTON_REL_TOL: f64 = 2e-2;
pub const NEWTON_REL_ROWS: usize = 4;
pub const NEWTON_FLOOR_FROM: usize = 7;
pub const NEWTON_FLOOR: f64 = 1e-12;
pub const SIMPLE_GAP_MAX: f64 = 1e-9;
pub const NEWTON_GAP_MAX: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct Table1Cell {
    pub d: f64,
    /// Recursion-form defect, for reference.
    pub d_recursion: f64,
    pub gap: f64,
    pub reference_d: f64,
    pub reference_gap: f64,
    pub relative_error: f64,
    pub d_ok: Option<bool>,
    pub gap_ok: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub k: usize,
    pub simple: Table1Cell,
    pub newton: Table1Cell,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Report {
    pub n_g: usize,
    pub n_i: usize,
    pub tau: f64,
    pub informational: bool,
    pub rows: Vec<Table1Row>,
    pub simple_seconds: f64,
    pub newton_seconds: f64,
    pub all_pass: bool,
}

impl Table1Report {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.rows {
            for (name, c) in [("simple", &r.simple), ("newton", &r.newton)] {
                if c.d_ok == Some(false) {
                    out.push(format!("{name} k={} d={:e} ref={:e}", r.k, c.d, c.reference_d));
                }
                if c.gap_ok == Some(false) {
                    out.push(format!("{name} k={} gap={:e}", r.k, c.gap));
                }
            }
        }
        out
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn cells(res: &IterationResult, refs_d: &[f64; 10], refs_gap: &[f64; 10]) -> Vec<Table1Cell> {
    res.history
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let (rd, rg) = (
                refs_d.get(k).copied().unwrap_or(f64::NAN),
                refs_gap.get(k).copied().unwrap_or(f64::NAN),
            );
            Table1Cell {
                d: h.table_residual(),
                d_recursion: h.d,
                gap: h.periodicity_gap,
                reference_d: rd,
                reference_gap: rg,
                relative_error: rel(h.table_residual(), rd),
                d_ok: None,
                gap_ok: None,
            }
        })
        .collect()
}

/// Both algorithms on the `tau = 1` reactor problem, compared against the reference residuals.
pub fn run_table1(p: &ReactorParams, n_g: usize, n_i: usize) -> Result<Table1Report> {
    let tau = 1.0;
    let problem = reactor_problem(p, tau, n_g)?;
    let opts = IterationOptions::with_iterations(n_i);
    let (simple, newton) = std::thread::scope(|s| {
        let a = s.spawn(|| {
            let t = Instant::now();
            solve_simple(&problem, &opts).map(|r| (r, t.elapsed().as_secs_f64()))
        });
        let b = s.spawn(|| {
            let t = Instant::now();
            solve_newton_modified(&problem, &opts).map(|r| (r, t.elapsed().as_secs_f64()))
        });
        (a.join().expect("simple iteration thread"), b.join().expect("Newton thread"))
    });
    let (simple, ts) = simple?;
    let (newton, tn) = newton?;
    let informational = n_g != TABLE1_N_G || n_i != TABLE1_N_I || *p != ReactorParams::default();
    let mut sc = cells(&simple, &TABLE1_SIMPLE_D, &TABLE1_SIMPLE_GAP);
    let mut nc = cells(&newton, &TABLE1_NEWTON_D, &TABLE1_NEWTON_GAP);
    if !informational {
        for c in sc.iter_mut() {
            c.d_ok = Some(c.relative_error <= SIMPLE_REL_TOL);
            c.gap_ok = Some(c.gap <= SIMPLE_GAP_MAX);
        }
        for (k, c) in nc.iter_mut().enumerate() {
            if k < NEWTON_REL_ROWS {
                c.d_ok = Some(c.relative_error <= NEWTON_REL_TOL);
            } else if k >= NEWTON_FLOOR_FROM {
                c.d_ok = Some(c.d <= NEWTON_FLOOR);
            }
            c.gap_ok = Some(c.gap <= NEWTON_GAP_MAX);
        }
    }
    let all_pass = sc
        .iter()
        .chain(&nc)
        .all(|c| c.d_ok != Some(false) && c.gap_ok != Some(false));
    let rows = sc
        .into_iter()
        .zip(nc)
        .enumerate()
        .map(|(k, (simple, newton))| Table1Row { k, simple, newton })
        .collect();
    Ok(Table1Report {
        n_g,
        n_i,
        tau,
        informational,
        rows,
        simple_seconds: ts,
        newton_seconds: tn,
        all_pass,
    })
}

pub const FIGURE1_TAU: f64 = 10.0;
pub const FIGURE1_N_I: usize = 15;
pub const FIGURE1_D_MAX: f64 = 1e-8;
pub const FIGURE1_GAP_MAX: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Report {
    pub tau: f64,
    pub n_g: usize,
    pub n_i: usize,
    pub residuals: Vec<f64>,
    pub gaps: Vec<f64>,
    pub final_d: f64,
    pub periodicity_gap: f64,
    pub min_x1: f64,
    pub min_x2: f64,
    pub residual_ok: bool,
    pub gap_ok: bool,
    pub in_domain: bool,
    pub seconds: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

impl Figure1Report {
    pub fn all_pass(&self) -> bool {
        self.residual_ok && self.gap_ok && self.in_domain
    }
}

/// Modified Newton on the `tau = 10` problem.
pub fn run_figure1(p: &ReactorParams, n_g: usize, n_i: usize) -> Result<Figure1Report> {
    let t = Instant::now();
    let problem = reactor_problem(p, FIGURE1_TAU, n_g)?.with_domain_policy(DomainPolicy::FinalOnly);
    let res = solve_newton_modified(&problem, &IterationOptions::with_iterations(n_i))?;
    let seconds = t.elapsed().as_secs_f64();
    let x = res.final_trajectory;
    let last = res.history.last().unwrap();
    let min = |i: usize| x.samples.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
    Ok(Figure1Report {
        tau: FIGURE1_TAU,
        n_g,
        n_i,
        residuals: res.history.iter().map(|h| h.table_residual()).collect(),
        gaps: res.history.iter().map(|h| h.periodicity_gap).collect(),
        final_d: last.table_residual(),
        periodicity_gap: last.periodicity_gap,
        min_x1: min(0),
        min_x2: min(1),
        residual_ok: last.table_residual() <= FIGURE1_D_MAX,
        gap_ok: last.periodicity_gap <= FIGURE1_GAP_MAX,
        in_domain: true,
        seconds,
        trajectory: x,
    })
}
