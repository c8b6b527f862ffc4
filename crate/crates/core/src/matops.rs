//! Small dense kernels: exponential, norms, conditioned solves, fundamental matrices.

use nalgebra::linalg::LU;
use nalgebra::Dyn;

use crate::error::{Error, Result};
use crate::model::{Grid, Matrix, SystemModel, Trajectory};

/// Reciprocal condition threshold below which solves are refused.
pub const RCOND_MIN: f64 = 1e-12;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152e0;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn is_diagonal(a: &Matrix) -> bool {
    a.iter()
        .enumerate()
        .all(|(k, &v)| v == 0.0 || k % a.nrows() == k / a.nrows())
}

fn check_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Low-degree Padé numerator/denominator pieces from even powers of `a`.
fn pade_low(a: &Matrix, b: &[f64]) -> (Matrix, Matrix) {
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    let a2 = a * a;
    let mut pow = id.clone();
    let mut u = &id * b[1];
    let mut v = &id * b[0];
    for k in 1..b.len() / 2 {
        pow = &pow * &a2;
        u += &pow * b[2 * k + 1];
        v += &pow * b[2 * k];
    }
    (a * u, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let b = &PADE13;
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

fn pade_solve(u: Matrix, v: Matrix) -> Matrix {
    let p = &v + &u;
    let q = v - u;
    // The denominator is well conditioned inside the theta bounds.
    LU::new(q).solve(&p).expect("Pade denominator is nonsingular")
}

/// `e^{tA}` by scaling and squaring with diagonal Padé approximants.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    if !t.is_finite() {
        return Err(Error::InvalidInput("exponential time is not finite".into()));
    }
    check_finite(a, "matrix")?;
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("matrix exponential needs a square matrix".into()));
    }
    let n = a.nrows();
    if is_diagonal(a) {
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = (t * a[(i, i)]).exp();
        }
        return Ok(out);
    }
    let ta = a * t;
    let nrm = norm1(&ta);
    for (deg, theta) in THETA {
        if nrm <= theta {
            let b: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&ta, b);
            return Ok(pade_solve(u, v));
        }
    }
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = ta * 2f64.powi(-s);
    let (u, v) = pade13(&scaled);
    let mut out = pade_solve(u, v);
    for _ in 0..s {
        out = &out * &out;
    }
    Ok(out)
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.ncols() == 1 || a.nrows() == 1 {
        return a.norm();
    }
    a.singular_values().max()
}

/// `sigma_min / sigma_max`; zero for the zero matrix.
pub fn rcond(a: &Matrix) -> f64 {
    if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
        return 0.0;
    }
    let sv = a.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// LU factorization accepted only above the conditioning threshold.
#[derive(Debug, Clone)]
pub struct Factorization {
    lu: LU<f64, Dyn, Dyn>,
    rcond: f64,
}

impl Factorization {
    pub fn new(a: &Matrix, what: &'static str) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidInput(format!("{what} is not square")));
        }
        let rc = rcond(a);
        if !(rc >= RCOND_MIN) {
            return Err(Error::Conditioning { what, rcond: rc });
        }
        Ok(Self {
            lu: LU::new(a.clone()),
            rcond: rc,
        })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn solve(&self, b: &Matrix) -> Matrix {
        self.lu.solve(b).expect("factorization checked nonsingular")
    }

    pub fn solve_vec(&self, b: &crate::model::Vector) -> crate::model::Vector {
        self.lu.solve(b).expect("factorization checked nonsingular")
    }

    pub fn inverse(&self) -> Matrix {
        self.lu.try_inverse().expect("factorization checked nonsingular")
    }
}

/// Solve `A X = B`, refusing ill-conditioned `A`.
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.nrows() != a.nrows() {
        return Err(Error::InvalidInput(format!(
            "right-hand side has {} rows, expected {}",
            b.nrows(),
            a.nrows()
        )));
    }
    Ok(Factorization::new(a, "linear system")?.solve(b))
}

/// `e^{±t_j A}` at every grid node.
#[derive(Debug, Clone)]
pub struct MatExpCache {
    grid: Grid,
    plus: Vec<Matrix>,
    minus: Vec<Matrix>,
    step: Matrix,
}

impl MatExpCache {
    pub fn new(a: &Matrix, grid: Grid) -> Result<Self> {
        let mut plus = Vec::with_capacity(grid.len());
        let mut minus = Vec::with_capacity(grid.len());
        for j in 0..grid.len() {
            let t = grid.time(j);
            plus.push(mat_exp(a, t)?);
            minus.push(mat_exp(a, -t)?);
        }
        Ok(Self {
            grid,
            plus,
            minus,
            step: mat_exp(a, grid.dt())?,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `e^{t_j A}`.
    pub fn plus(&self, j: usize) -> &Matrix {
        &self.plus[j]
    }

    /// `e^{-t_j A}`.
    pub fn minus(&self, j: usize) -> &Matrix {
        &self.minus[j]
    }

    /// `e^{dt A}`.
    pub fn step(&self) -> &Matrix {
        &self.step
    }

    pub fn tau_plus(&self) -> &Matrix {
        self.plus.last().unwrap()
    }

    pub fn tau_minus(&self) -> &Matrix {
        self.minus.last().unwrap()
    }
}

/// Fundamental matrix of `Phi' = (A + g'(x(t))) Phi` and its inverse on the grid.
#[derive(Debug, Clone)]
pub struct FundamentalMatrix {
    pub grid: Grid,
    pub phi: Vec<Matrix>,
    pub phi_inv: Vec<Matrix>,
}

impl FundamentalMatrix {
    /// Exponential representation for a constant coefficient matrix `J`.
    pub fn constant(j: &Matrix, grid: Grid) -> Result<Self> {
        let mut phi = Vec::with_capacity(grid.len());
        let mut phi_inv = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let t = grid.time(k);
            phi.push(mat_exp(j, t)?);
            phi_inv.push(mat_exp(j, -t)?);
        }
        Ok(Self { grid, phi, phi_inv })
    }

    /// RK4 with `g'` interpolated linearly between nodes, plus the adjoint system for the inverse.
    pub fn compute(model: &SystemModel, x: &Trajectory) -> Result<Self> {
        let grid = x.grid;
        let a = model.a();
        let jac: Vec<Matrix> = x
            .samples
            .iter()
            .enumerate()
            .map(|(k, xk)| {
                model
                    .eval_g_jac(xk)
                    .map(|g| a + g)
                    .map_err(|e| e.at_node(k, Some(x.iteration)))
            })
            .collect::<Result<_>>()?;
        Self::from_coefficients(&jac, grid)
    }

    /// Fundamental matrix for node samples `J_k = A + g'(x_k)`.
    pub fn from_coefficients(jac: &[Matrix], grid: Grid) -> Result<Self> {
        if jac.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: jac.len(),
            });
        }
        if jac.iter().all(|j| j == &jac[0]) {
            return Self::constant(&jac[0], grid);
        }
        let n = jac[0].nrows();
        let h = grid.dt();
        let mut phi = Vec::with_capacity(grid.len());
        let mut phi_inv = Vec::with_capacity(grid.len());
        phi.push(Matrix::identity(n, n));
        phi_inv.push(Matrix::identity(n, n));
        for k in 0..grid.steps() {
            let j0 = &jac[k];
            let j1 = &jac[k + 1];
            let jm = (j0 + j1) * 0.5;
            let p = &phi[k];
            let k1 = j0 * p;
            let k2 = &jm * (p + &k1 * (0.5 * h));
            let k3 = &jm * (p + &k2 * (0.5 * h));
            let k4 = j1 * (p + &k3 * h);
            let next = p + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);

            let q = &phi_inv[k];
            let l1 = -(q * j0);
            let l2 = -((q + &l1 * (0.5 * h)) * &jm);
            let l3 = -((q + &l2 * (0.5 * h)) * &jm);
            let l4 = -((q + &l3 * h) * j1);
            let next_inv = q + (l1 + (l2 + l3) * 2.0 + l4) * (h / 6.0);

            if next.iter().chain(next_inv.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Divergence(format!(
                    "fundamental matrix at step {}",
                    k + 1
                )));
            }
            phi.push(next);
            phi_inv.push(next_inv);
        }
        Ok(Self { grid, phi, phi_inv })
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}
