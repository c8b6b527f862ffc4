//! Declarative run configuration, read from TOML (or JSON) and validated before any computation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use pertraj::certificates::{BoundMode, BoxRegion, CertificateRequest, SamplingOptions};
use pertraj::reactor::{self, ReactorParams};
use pertraj::{
    BoundaryCondition, BvpProblem, ControlSchedule, DomainBox, Error, Grid, Matrix, Monomial, Nonlinearity,
    Polynomial, Quadrature, Result, SystemModel, Vector, ZeroField,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Reactor,
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub kind: SystemKind,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactor: Option<ReactorParams>,
    /// Rows of `A`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub component: usize,
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    N5,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub kind: ScheduleKind,
    /// Switching times as fractions of `tau`, from 0 to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
    /// One input vector per interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Periodic,
    TwoPoint,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    #[serde(default)]
    pub kind: BoundaryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Simple,
    NewtonModified,
    NewtonClassical,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Simple => "simple",
            Method::NewtonModified => "newton-modified",
            Method::NewtonClassical => "newton-classical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_n_g")]
    pub n_g: usize,
    #[serde(default = "default_n_i")]
    pub n_i: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default)]
    pub quadrature: Quadrature,
    /// Cross-check against the shooting solver.
    #[serde(default)]
    pub oracle: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            method: Method::default(),
            n_g: default_n_g(),
            n_i: default_n_i(),
            tol: None,
            quadrature: Quadrature::default(),
            oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_certificate")]
    pub certificate: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            trajectory: default_trajectory(),
            report: default_report(),
            certificate: default_certificate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    /// Working box on which `L` and `H` are evaluated.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `(M, omega)` override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<[f64; 2]>,
    /// Sampled on the box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default = "default_per_axis")]
    pub per_axis: usize,
    #[serde(default = "default_random_points")]
    pub random_points: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn default_n_g() -> usize {
    100_000
}
fn default_n_i() -> usize {
    9
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_trajectory() -> String {
    "trajectory.csv".into()
}
fn default_report() -> String {
    "report.json".into()
}
fn default_certificate() -> String {
    "certificate.json".into()
}
fn default_per_axis() -> usize {
    SamplingOptions::default().per_axis
}
fn default_random_points() -> usize {
    SamplingOptions::default().random_points
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!("{what} must be a non-empty square matrix")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn load(path: &Path) -> std::result::Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        } else {
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        };
        cfg.validate().map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(cfg)
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return Err(invalid(format!("system.tau must be positive and finite, got {}", s.tau)));
        }
        match s.kind {
            SystemKind::Reactor => {
                if s.a.is_some() || !s.terms.is_empty() || s.domain_lower.is_some() || s.domain_upper.is_some() {
                    return Err(invalid("reactor system takes only `reactor` parameters"));
                }
            }
            SystemKind::Linear => {
                if s.a.is_none() {
                    return Err(invalid("linear system needs `a`"));
                }
                if !s.terms.is_empty() || s.reactor.is_some() {
                    return Err(invalid("linear system takes no `terms` or `reactor`"));
                }
            }
            SystemKind::Polynomial => {
                if s.a.is_none() || s.terms.is_empty() {
                    return Err(invalid("polynomial system needs `a` and `terms`"));
                }
                if s.reactor.is_some() {
                    return Err(invalid("polynomial system takes no `reactor`"));
                }
            }
        }
        match self.schedule.kind {
            ScheduleKind::N5 => {
                if s.kind != SystemKind::Reactor {
                    return Err(invalid("schedule kind n5 is defined for the reactor only"));
                }
                if self.schedule.fractions.is_some() || self.schedule.values.is_some() {
                    return Err(invalid("schedule kind n5 takes no `fractions` or `values`"));
                }
            }
            ScheduleKind::Custom => {
                if self.schedule.fractions.is_none() || self.schedule.values.is_none() {
                    return Err(invalid("custom schedule needs `fractions` and `values`"));
                }
            }
        }
        match self.boundary.kind {
            BoundaryKind::Periodic => {
                if self.boundary.m0.is_some() || self.boundary.m1.is_some() || self.boundary.beta.is_some() {
                    return Err(invalid("periodic boundary takes no `m0`, `m1` or `beta`"));
                }
            }
            BoundaryKind::TwoPoint => {
                if self.boundary.m0.is_none() || self.boundary.m1.is_none() || self.boundary.beta.is_none() {
                    return Err(invalid("two-point boundary needs `m0`, `m1` and `beta`"));
                }
                if self.solver.method != Method::Simple {
                    return Err(invalid("Newton methods require periodic boundary conditions"));
                }
            }
        }
        if self.solver.n_g == 0 {
            return Err(invalid("solver.n_g must be positive"));
        }
        if let Some(t) = self.solver.tol {
            if t.is_nan() || t < 0.0 {
                return Err(invalid(format!("solver.tol must be >= 0, got {t}")));
            }
        }
        Ok(())
    }

    pub fn reactor_params(&self) -> ReactorParams {
        self.system.reactor.unwrap_or_default()
    }

    pub fn build_model(&self) -> Result<SystemModel> {
        let s = &self.system;
        if s.kind == SystemKind::Reactor {
            return reactor::build_reactor_model(&self.reactor_params());
        }
        let a = matrix(s.a.as_deref().unwrap_or_default(), "system.a")?;
        let n = a.nrows();
        let g: Arc<dyn Nonlinearity> = match s.kind {
            SystemKind::Polynomial => {
                let terms = s
                    .terms
                    .iter()
                    .map(|t| Monomial {
                        component: t.component,
                        coeff: t.coeff,
                        powers: t.powers.clone(),
                    })
                    .collect();
                Arc::new(Polynomial::new(n, terms)?)
            }
            _ => Arc::new(ZeroField::new(n)),
        };
        let inf = |sign: f64| vec![sign * f64::INFINITY; n];
        let domain = DomainBox::new(
            s.domain_lower.clone().unwrap_or_else(|| inf(-1.0)),
            s.domain_upper.clone().unwrap_or_else(|| inf(1.0)),
        )?;
        SystemModel::new(a, g, domain)
    }

    pub fn build_schedule(&self) -> Result<ControlSchedule> {
        let tau = self.system.tau;
        match self.schedule.kind {
            ScheduleKind::N5 => reactor::build_schedule_n5(&self.reactor_params(), tau),
            ScheduleKind::Custom => {
                let fractions = self.schedule.fractions.as_deref().unwrap_or_default();
                let values = self
                    .schedule
                    .values
                    .as_deref()
                    .unwrap_or_default()
                    .iter()
                    .map(|v| Vector::from_column_slice(v))
                    .collect();
                ControlSchedule::from_fractions(tau, fractions, values)
            }
        }
    }

    pub fn build_bc(&self, n: usize) -> Result<BoundaryCondition> {
        match self.boundary.kind {
            BoundaryKind::Periodic => Ok(BoundaryCondition::periodic(n)),
            BoundaryKind::TwoPoint => {
                let b = &self.boundary;
                let m0 = matrix(b.m0.as_deref().unwrap_or_default(), "boundary.m0")?;
                let m1 = matrix(b.m1.as_deref().unwrap_or_default(), "boundary.m1")?;
                let beta = Vector::from_column_slice(b.beta.as_deref().unwrap_or_default());
                BoundaryCondition::two_point(m0, m1, beta)
            }
        }
    }

    pub fn build_problem(&self) -> Result<BvpProblem> {
        let model = self.build_model()?;
        let schedule = self.build_schedule()?;
        let bc = self.build_bc(model.n())?;
        let grid = Grid::new(self.system.tau, self.solver.n_g)?;
        BvpProblem::new(model, bc, schedule, grid)?.with_quadrature(self.solver.quadrature)
    }

    pub fn certificate_request(&self) -> Result<Option<CertificateRequest>> {
        let Some(c) = &self.certificate else {
            return Ok(None);
        };
        let sampling = SamplingOptions {
            per_axis: c.per_axis,
            random_points: c.random_points,
            seed: c.seed,
        };
        let mode = |v: Option<f64>| v.map_or(BoundMode::Sampled(sampling), BoundMode::User);
        Ok(Some(CertificateRequest {
            region: BoxRegion::new(c.lower.clone(), c.upper.clone())?,
            growth: c.growth.map(|[m, w]| (m, w)),
            lipschitz: mode(c.lipschitz),
            hessian: Some(mode(c.hessian_bound)),
            radius: c.radius,
        }))
    }
}
