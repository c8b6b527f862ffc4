//! Controlled system, inputs, boundary conditions, grids and trajectories.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Location, Result};
use crate::matops::spectral_norm;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// A nonlinear vector field `g` together with its derivatives.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn eval(&self, x: &Vector) -> Vector;

    fn jacobian(&self, x: &Vector) -> Matrix;

    /// Hessians of the components `g_1 .. g_n`, each `n x n`.
    fn hessians(&self, _x: &Vector) -> Option<Vec<Matrix>> {
        None
    }

    /// True when `g` vanishes identically.
    fn is_zero(&self) -> bool {
        false
    }
}

/// `g ≡ 0`.
#[derive(Debug, Clone)]
pub struct ZeroField {
    n: usize,
}

impl ZeroField {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl Nonlinearity for ZeroField {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, _x: &Vector) -> Vector {
        Vector::zeros(self.n)
    }

    fn jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::zeros(self.n, self.n)
    }

    fn hessians(&self, _x: &Vector) -> Option<Vec<Matrix>> {
        Some(vec![Matrix::zeros(self.n, self.n); self.n])
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// One term `coeff * x_1^p_1 * ... * x_n^p_n` of component `component`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub component: usize,
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    fn value(&self, x: &Vector) -> f64 {
        self.powers
            .iter()
            .zip(x.iter())
            .fold(self.coeff, |acc, (&p, &xi)| acc * xi.powi(p as i32))
    }

    /// Value with the exponent of `var` lowered by `by`, times the falling factorial.
    fn lowered(&self, x: &Vector, var: usize, by: u32) -> f64 {
        let p = self.powers[var];
        if p < by {
            return 0.0;
        }
        let mut factor = self.coeff;
        for k in 0..by {
            factor *= (p - k) as f64;
        }
        self.powers
            .iter()
            .zip(x.iter())
            .enumerate()
            .fold(factor, |acc, (i, (&q, &xi))| {
                let e = if i == var { q - by } else { q };
                acc * xi.powi(e as i32)
            })
    }

    fn mixed(&self, x: &Vector, a: usize, b: usize) -> f64 {
        if a == b {
            return self.lowered(x, a, 2);
        }
        let (pa, pb) = (self.powers[a], self.powers[b]);
        if pa == 0 || pb == 0 {
            return 0.0;
        }
        let factor = self.coeff * pa as f64 * pb as f64;
        self.powers
            .iter()
            .zip(x.iter())
            .enumerate()
            .fold(factor, |acc, (i, (&q, &xi))| {
                let e = if i == a || i == b { q - 1 } else { q };
                acc * xi.powi(e as i32)
            })
    }
}

/// Polynomial vector field given by its monomials; derivatives follow from the coefficients.
#[derive(Debug, Clone)]
pub struct Polynomial {
    n: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(n: usize, terms: Vec<Monomial>) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            if t.component >= n {
                return Err(Error::InvalidInput(format!(
                    "polynomial term {i}: component {} out of range for n = {n}",
                    t.component
                )));
            }
            if t.powers.len() != n {
                return Err(Error::InvalidInput(format!(
                    "polynomial term {i}: expected {n} exponents, got {}",
                    t.powers.len()
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "polynomial term {i}: non-finite coefficient"
                )));
            }
        }
        Ok(Self { n, terms })
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }
}

impl Nonlinearity for Polynomial {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.n);
        for t in &self.terms {
            out[t.component] += t.value(x);
        }
        out
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.n);
        for t in &self.terms {
            for j in 0..self.n {
                out[(t.component, j)] += t.lowered(x, j, 1);
            }
        }
        out
    }

    fn hessians(&self, x: &Vector) -> Option<Vec<Matrix>> {
        let mut out = vec![Matrix::zeros(self.n, self.n); self.n];
        for t in &self.terms {
            let h = &mut out[t.component];
            for a in 0..self.n {
                for b in a..self.n {
                    let v = t.mixed(x, a, b);
                    h[(a, b)] += v;
                    if a != b {
                        h[(b, a)] += v;
                    }
                }
            }
        }
        Some(out)
    }

    fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }
}

type FieldFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type JacobianFn = dyn Fn(&Vector) -> Matrix + Send + Sync;
type HessianFn = dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync;

/// Nonlinearity supplied as closures by library users.
#[derive(Clone)]
pub struct CallbackField {
    n: usize,
    f: Arc<FieldFn>,
    jac: Arc<JacobianFn>,
    hess: Option<Arc<HessianFn>>,
}

impl CallbackField {
    pub fn new<F, J>(n: usize, f: F, jac: J) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
        J: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        Self {
            n,
            f: Arc::new(f),
            jac: Arc::new(jac),
            hess: None,
        }
    }

    pub fn with_hessians<H>(mut self, h: H) -> Self
    where
        H: Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    {
        self.hess = Some(Arc::new(h));
        self
    }
}

impl fmt::Debug for CallbackField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CallbackField")
            .field("n", &self.n)
            .field("hessians", &self.hess.is_some())
            .finish()
    }
}

impl Nonlinearity for CallbackField {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &Vector) -> Vector {
        (self.f)(x)
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        (self.jac)(x)
    }

    fn hessians(&self, x: &Vector) -> Option<Vec<Matrix>> {
        self.hess.as_ref().map(|h| h(x))
    }
}

/// Axis-aligned open box; infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidInput(
                "domain bounds have different lengths".into(),
            ));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::InvalidInput(format!(
                    "domain coordinate {i}: empty interval ({lo}, {hi})"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.violation(x).is_none()
    }

    /// First coordinate that is not strictly inside its bounds.
    pub fn violation(&self, x: &Vector) -> Option<usize> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .position(|(&v, (&lo, &hi))| !(v > lo && v < hi))
    }

    pub fn check(&self, x: &Vector) -> Result<()> {
        match self.violation(x) {
            None => Ok(()),
            Some(coord) => Err(Error::DomainViolation {
                coord,
                value: x[coord],
                lower: self.lower[coord],
                upper: self.upper[coord],
                at: Location::Point,
            }),
        }
    }

    /// True when the closed box `[lower, upper]` lies strictly inside `self`.
    pub fn contains_closed(&self, lower: &[f64], upper: &[f64]) -> bool {
        lower.len() == self.dim()
            && upper.len() == self.dim()
            && (0..self.dim()).all(|i| {
                lower[i] > self.lower[i]
                    && upper[i] < self.upper[i]
                    && lower[i] <= upper[i]
            })
    }
}

/// `x' = A x + g(x) + u(t)` on an open box `D`.
#[derive(Debug, Clone)]
pub struct SystemModel {
    a: Matrix,
    g: Arc<dyn Nonlinearity>,
    domain: DomainBox,
    lipschitz: Option<f64>,
    hessian_bound: Option<f64>,
}

impl SystemModel {
    pub fn new(a: Matrix, g: Arc<dyn Nonlinearity>, domain: DomainBox) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "linear part must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("linear part has non-finite entries".into()));
        }
        if g.dim() != n || domain.dim() != n {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: A is {n}x{n}, g has dimension {}, domain {}",
                g.dim(),
                domain.dim()
            )));
        }
        Ok(Self {
            a,
            g,
            domain,
            lipschitz: None,
            hessian_bound: None,
        })
    }

    /// Linear model `x' = A x + u` on the whole space.
    pub fn linear(a: Matrix) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, Arc::new(ZeroField::new(n)), DomainBox::unbounded(n))
    }

    /// Attach known bounds on `sup ||g'||` and on the component Hessians.
    pub fn with_bounds(mut self, lipschitz: Option<f64>, hessian_bound: Option<f64>) -> Result<Self> {
        for (name, v) in [("Lipschitz", lipschitz), ("Hessian", hessian_bound)] {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidInput(format!("{name} bound must be >= 0, got {v}")));
                }
            }
        }
        self.lipschitz = lipschitz;
        self.hessian_bound = hessian_bound;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn nonlinearity(&self) -> &dyn Nonlinearity {
        self.g.as_ref()
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn hessian_bound(&self) -> Option<f64> {
        self.hessian_bound
    }

    pub fn in_domain(&self, x: &Vector) -> bool {
        self.domain.contains(x)
    }

    pub fn eval_g(&self, x: &Vector) -> Result<Vector> {
        self.domain.check(x)?;
        Ok(self.g.eval(x))
    }

    pub fn eval_g_jac(&self, x: &Vector) -> Result<Matrix> {
        self.domain.check(x)?;
        Ok(self.g.jacobian(x))
    }
}

/// Piecewise-constant input: `u(t) = values[i]` on `[times[i], times[i+1])`, `u(tau) = values[N-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    times: Vec<f64>,
    values: Vec<Vector>,
}

impl ControlSchedule {
    pub fn new(times: Vec<f64>, values: Vec<Vector>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("schedule needs at least one interval".into()));
        }
        if times.len() != values.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "schedule has {} switching times for {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidInput("schedule must start at t = 0".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "switching times must be finite and strictly increasing".into(),
            ));
        }
        let n = values[0].len();
        if values.iter().any(|v| v.len() != n || v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput(
                "schedule values must be finite vectors of equal dimension".into(),
            ));
        }
        Ok(Self { times, values })
    }

    /// Switching times given as fractions `0 = f_0 < ... < f_N = 1` of the period.
    pub fn from_fractions(tau: f64, fractions: &[f64], values: Vec<Vector>) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!("period must be positive, got {tau}")));
        }
        if fractions.first() != Some(&0.0) || fractions.last() != Some(&1.0) {
            return Err(Error::InvalidInput(
                "switching fractions must start at 0 and end at 1".into(),
            ));
        }
        let mut times: Vec<f64> = fractions.iter().map(|f| f * tau).collect();
        *times.last_mut().unwrap() = tau;
        Self::new(times, values)
    }

    /// Constant input over `[0, tau]`.
    pub fn constant(tau: f64, value: Vector) -> Result<Self> {
        Self::new(vec![0.0, tau], vec![value])
    }

    pub fn tau(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn eval(&self, t: f64) -> Result<&Vector> {
        let tau = self.tau();
        if !(0.0..=tau).contains(&t) {
            return Err(Error::TimeOutOfRange { t, tau });
        }
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        Ok(&self.values[i.min(self.values.len() - 1)])
    }

    /// `||u||_{L^inf}`, exact for piecewise-constant inputs.
    pub fn linf_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn integral(&self) -> Vector {
        self.values
            .iter()
            .zip(self.times.windows(2))
            .fold(Vector::zeros(self.dim()), |acc, (v, w)| acc + v * (w[1] - w[0]))
    }

    /// Input values at the nodes of `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<Vector>> {
        if grid.tau() != self.tau() {
            return Err(Error::InvalidInput(format!(
                "grid period {} differs from schedule period {}",
                grid.tau(),
                self.tau()
            )));
        }
        (0..grid.len()).map(|j| self.eval(grid.time(j)).cloned()).collect()
    }
}

/// Two-point affine condition `M0 x(0) + M1 x(tau) = beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    pub m0: Matrix,
    pub m1: Matrix,
    pub beta: Vector,
}

impl BoundaryCondition {
    pub fn periodic(n: usize) -> Self {
        Self {
            m0: -Matrix::identity(n, n),
            m1: Matrix::identity(n, n),
            beta: Vector::zeros(n),
        }
    }

    /// `x(0) = x0`.
    pub fn initial_value(x0: Vector) -> Self {
        let n = x0.len();
        Self {
            m0: Matrix::identity(n, n),
            m1: Matrix::zeros(n, n),
            beta: x0,
        }
    }

    pub fn two_point(m0: Matrix, m1: Matrix, beta: Vector) -> Result<Self> {
        let n = beta.len();
        if m0.shape() != (n, n) || m1.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "boundary matrices must be {n}x{n}"
            )));
        }
        if m0.iter().chain(m1.iter()).chain(beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("boundary data must be finite".into()));
        }
        Ok(Self { m0, m1, beta })
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn is_periodic(&self) -> bool {
        let n = self.dim();
        self.m0 == -Matrix::identity(n, n)
            && self.m1 == Matrix::identity(n, n)
            && self.beta.iter().all(|&b| b == 0.0)
    }

    /// Norm of the functional restricted to trajectories vanishing at `t = 0`, i.e. `||M1||`.
    pub fn restricted_norm(&self) -> f64 {
        spectral_norm(&self.m1)
    }

    pub fn residual(&self, x0: &Vector, x_tau: &Vector) -> Vector {
        &self.m0 * x0 + &self.m1 * x_tau - &self.beta
    }
}

/// Uniform partition `t_j = j * dt` of `[0, tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    tau: f64,
    steps: usize,
    dt: f64,
}

impl Grid {
    pub fn new(tau: f64, steps: usize) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!("period must be positive, got {tau}")));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("grid needs at least one step".into()));
        }
        Ok(Self {
            tau,
            steps,
            dt: tau / steps as f64,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.steps {
            self.tau
        } else {
            j as f64 * self.dt
        }
    }
}

/// Samples of a trajectory on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Vector>,
    pub grid: Grid,
    pub iteration: usize,
}

impl Trajectory {
    pub fn new(grid: Grid, samples: Vec<Vector>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: samples.len(),
            });
        }
        Ok(Self {
            samples,
            grid,
            iteration: 0,
        })
    }

    pub fn constant(grid: Grid, value: Vector) -> Self {
        Self {
            samples: vec![value; grid.len()],
            grid,
            iteration: 0,
        }
    }

    pub fn zeros(grid: Grid, n: usize) -> Self {
        Self::constant(grid, Vector::zeros(n))
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Vector) -> Self {
        Self {
            samples: (0..grid.len()).map(|j| f(grid.time(j))).collect(),
            grid,
            iteration: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &Vector {
        &self.samples[0]
    }

    pub fn last(&self) -> &Vector {
        self.samples.last().unwrap()
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `||x_0 - x_{n_G}||`.
    pub fn periodicity_gap(&self) -> f64 {
        (self.first() - self.last()).norm()
    }

    pub fn is_constant(&self) -> bool {
        let x0 = self.first();
        self.samples.iter().all(|x| x == x0)
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|x| x.iter().all(|v| v.is_finite()))
    }

    pub fn check_domain(&self, domain: &DomainBox) -> Result<()> {
        for (j, x) in self.samples.iter().enumerate() {
            domain.check(x).map_err(|e| e.at_node(j, None))?;
        }
        Ok(())
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.samples.len() != grid.len() || self.grid != *grid {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: self.samples.len(),
            });
        }
        Ok(())
    }

    /// CSV with header `t,x1,...,xn` and 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (j, x) in self.samples.iter().enumerate() {
            write!(w, "{:.16e}", self.grid.time(j))?;
            for v in x.iter() {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
