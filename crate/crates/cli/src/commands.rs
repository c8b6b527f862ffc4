//! The three verbs and the artifacts they write.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use pertraj::certificates::{certify, Certificate};
use pertraj::oracle::{integrate_dense, shooting_solve, ShootingOptions};
use pertraj::reactor::{self, ReactorParams};
use pertraj::{
    solve_newton_classical, solve_newton_modified, solve_simple, IterationOptions, ResidualReport, Trajectory,
};

use crate::config::{Method, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const ASSUMPTION: u8 = 2;
    pub const NUMERICAL: u8 = 3;
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Solver(pertraj::Error),
}

impl From<pertraj::Error> for Failure {
    fn from(e: pertraj::Error) -> Self {
        Failure::Solver(e)
    }
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => exit::USAGE,
            Failure::Solver(e) => match e.class() {
                pertraj::ErrorClass::Usage => exit::USAGE,
                pertraj::ErrorClass::Assumption => exit::ASSUMPTION,
                pertraj::ErrorClass::Numerical => exit::NUMERICAL,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Solver(e) => write!(f, "{e}"),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value).map_err(|e| io_err(path, e))
}

fn write_csv(path: &Path, x: &Trajectory) -> Result<(), Failure> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    x.write_csv(BufWriter::new(f)).map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct Timings {
    setup_seconds: f64,
    solve_seconds: f64,
}

#[derive(Serialize)]
struct OracleReport {
    x0_star: Vec<f64>,
    newton_steps: usize,
    final_defect: f64,
    x0_distance: f64,
    sup_distance: f64,
}

#[derive(Serialize)]
struct RunReport<'a> {
    method: &'static str,
    n_g: usize,
    n_i: usize,
    tau: f64,
    converged: bool,
    iterations_run: usize,
    residuals: Vec<f64>,
    history: &'a [ResidualReport],
    periodicity_gap: f64,
    timings: Timings,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate_pass: Option<bool>,
    config: &'a RunConfig,
}

fn run_certificate(cfg: &RunConfig, problem: &pertraj::BvpProblem) -> Result<Option<Certificate>, Failure> {
    let Some(req) = cfg.certificate_request()? else {
        return Ok(None);
    };
    Ok(Some(certify(problem, &problem.zero_trajectory(), &req)?))
}

pub fn solve(cfg: &RunConfig) -> Outcome {
    let t0 = Instant::now();
    let problem = cfg.build_problem()?;
    let setup_seconds = t0.elapsed().as_secs_f64();
    let mut opts = IterationOptions::with_iterations(cfg.solver.n_i);
    opts.tol = cfg.solver.tol;
    let t1 = Instant::now();
    let res = match cfg.solver.method {
        Method::Simple => solve_simple(&problem, &opts),
        Method::NewtonModified => solve_newton_modified(&problem, &opts),
        Method::NewtonClassical => solve_newton_classical(&problem, &opts),
    }?;
    let solve_seconds = t1.elapsed().as_secs_f64();

    let oracle = if cfg.solver.oracle {
        if !problem.bc().is_periodic() {
            return Err(Failure::Usage("the shooting oracle needs periodic boundary conditions".into()));
        }
        let shot = shooting_solve(problem.model(), problem.schedule(), &ShootingOptions::default())?;
        let dense = integrate_dense(problem.model(), problem.schedule(), &shot.x0(), cfg.solver.n_g)?;
        Some(OracleReport {
            x0_distance: (res.final_trajectory.first() - shot.x0()).norm(),
            sup_distance: res.final_trajectory.sup_distance(&dense),
            x0_star: shot.x0_star,
            newton_steps: shot.newton_steps,
            final_defect: shot.final_defect,
        })
    } else {
        None
    };
    let cert = run_certificate(cfg, &problem)?;

    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    write_csv(&dir.join(&cfg.output.trajectory), &res.final_trajectory)?;
    if let Some(c) = &cert {
        write_json(&dir.join(&cfg.output.certificate), c)?;
    }
    let last = res.last_report();
    let report = RunReport {
        method: cfg.solver.method.name(),
        n_g: cfg.solver.n_g,
        n_i: cfg.solver.n_i,
        tau: cfg.system.tau,
        converged: res.converged,
        iterations_run: res.iterations_run,
        residuals: res.table_residuals(),
        history: &res.history,
        periodicity_gap: last.periodicity_gap,
        timings: Timings {
            setup_seconds,
            solve_seconds,
        },
        oracle,
        certificate_pass: cert.as_ref().map(|c| c.all_pass()),
        config: cfg,
    };
    write_json(&dir.join(&cfg.output.report), &report)?;
    println!(
        "{}: {} iterations, residual {:.6e}, periodicity gap {:.3e}, converged = {}",
        report.method, res.iterations_run, last.fixed_point_residual, last.periodicity_gap, res.converged
    );
    Ok(match cert {
        Some(c) if !c.all_pass() => exit::ASSUMPTION,
        _ => exit::OK,
    })
}

pub fn certify_cmd(cfg: &RunConfig) -> Outcome {
    if cfg.certificate.is_none() {
        return Err(Failure::Usage("certify needs a [certificate] block".into()));
    }
    let problem = cfg.build_problem()?;
    let cert = run_certificate(cfg, &problem)?.expect("certificate block checked above");
    let dir = &cfg.output.dir;
    prepare_dir(dir)?;
    write_json(&dir.join(&cfg.output.certificate), &cert)?;
    let q = cert.contraction.q.map_or("undefined".to_string(), |q| format!("{q:.6e}"));
    let h = cert
        .kantorovich
        .as_ref()
        .map_or("unavailable".to_string(), |k| format!("{:.6e}", k.h));
    println!(
        "q = {q}, h = {h}, rigorous = {}, all pass = {}",
        cert.rigorous,
        cert.all_pass()
    );
    Ok(if cert.all_pass() { exit::OK } else { exit::ASSUMPTION })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Bench {
    Table1,
    Figure1,
}

pub struct BenchArgs {
    pub which: Bench,
    pub params: ReactorParams,
    pub dir: PathBuf,
    pub n_g: Option<usize>,
    pub n_i: Option<usize>,
}

pub fn bench(args: &BenchArgs) -> Outcome {
    prepare_dir(&args.dir)?;
    match args.which {
        Bench::Table1 => {
            let n_g = args.n_g.unwrap_or(reactor::TABLE1_N_G);
            let n_i = args.n_i.unwrap_or(reactor::TABLE1_N_I);
            let r = reactor::run_table1(&args.params, n_g, n_i)?;
            write_json(&args.dir.join("table1.json"), &r)?;
            println!("{:>2} {:>14} {:>14} {:>10} {:>14} {:>14} {:>10}", "k", "simple d", "ref", "gap", "newton d", "ref", "gap");
            for row in &r.rows {
                println!(
                    "{:>2} {:>14.6e} {:>14.6e} {:>10.3e} {:>14.6e} {:>14.6e} {:>10.3e}",
                    row.k,
                    row.simple.d,
                    row.simple.reference_d,
                    row.simple.gap,
                    row.newton.d,
                    row.newton.reference_d,
                    row.newton.gap
                );
            }
            if r.informational {
                println!("informational run: verdicts disabled");
                return Ok(exit::OK);
            }
            for f in r.failures() {
                println!("FAIL {f}");
            }
            Ok(if r.all_pass { exit::OK } else { exit::NUMERICAL })
        }
        Bench::Figure1 => {
            let n_g = args.n_g.unwrap_or(reactor::TABLE1_N_G);
            let n_i = args.n_i.unwrap_or(reactor::FIGURE1_N_I);
            let r = reactor::run_figure1(&args.params, n_g, n_i)?;
            write_csv(&args.dir.join("figure1.csv"), &r.trajectory)?;
            write_json(&args.dir.join("figure1.json"), &r)?;
            let informational =
                n_g != reactor::TABLE1_N_G || n_i != reactor::FIGURE1_N_I || args.params != ReactorParams::default();
            println!(
                "tau = {}, {} iterations: residual {:.3e}, periodicity gap {:.3e}, in domain = {}",
                r.tau, r.n_i, r.final_d, r.periodicity_gap, r.in_domain
            );
            if informational {
                println!("informational run: verdicts disabled");
                return Ok(exit::OK);
            }
            Ok(if r.all_pass() { exit::OK } else { exit::NUMERICAL })
        }
    }
}
