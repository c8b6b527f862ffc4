//! Convergence certificates for simple iteration and Newton's method.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bvp::{boundary_matrices, BvpProblem};
use crate::error::{Error, Result};
use crate::matops::{mat_exp, spectral_norm};
use crate::model::{BoundaryCondition, Matrix, SystemModel, Trajectory, Vector};

const SPOT_CHECKS: usize = 20;
const SPOT_SLACK: f64 = 1e-9;
const MAX_LATTICE: usize = 2_000_000;
pub const RATE_TERMS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Default,
    User,
    Sampled,
}

/// `||e^{tA}|| <= M e^{omega |t|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthBounds {
    pub m: f64,
    pub omega: f64,
    pub source: Provenance,
}

/// `(e^{omega tau} - 1) / omega`, equal to `tau` at `omega = 0`.
pub fn expm1_over(omega: f64, tau: f64) -> f64 {
    if omega == 0.0 {
        tau
    } else {
        (omega * tau).exp_m1() / omega
    }
}

/// `phi_L(t) = sqrt(n) e^{(||A|| + L) t}`.
pub fn phi_l(n: usize, a_norm: f64, l: f64, t: f64) -> f64 {
    (n as f64).sqrt() * ((a_norm + l) * t).exp()
}

pub fn growth_bounds(a: &Matrix, tau: f64, user: Option<(f64, f64)>) -> Result<GrowthBounds> {
    let Some((m, omega)) = user else {
        return Ok(GrowthBounds {
            m: 1.0,
            omega: spectral_norm(a),
            source: Provenance::Default,
        });
    };
    if !(m >= 1.0) || !m.is_finite() || !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::InvalidInput(format!(
            "growth bound needs M >= 1 and omega >= 0, got ({m}, {omega})"
        )));
    }
    let mut worst = (0.0, 0.0);
    for i in 0..SPOT_CHECKS {
        let t = -tau + 2.0 * tau * i as f64 / (SPOT_CHECKS - 1) as f64;
        let ratio = spectral_norm(&mat_exp(a, t)?) / (m * (omega * t.abs()).exp());
        if ratio > worst.1 {
            worst = (t, ratio);
        }
    }
    if worst.1 > 1.0 + SPOT_SLACK {
        return Err(Error::BoundRejected {
            t: worst.0,
            ratio: worst.1,
        });
    }
    Ok(GrowthBounds {
        m,
        omega,
        source: Provenance::User,
    })
}

/// Compact working box `D'` on which derivative bounds are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len()
            || lower
                .iter()
                .zip(&upper)
                .any(|(l, u)| !l.is_finite() || !u.is_finite() || l > u)
        {
            return Err(Error::InvalidInput(
                "working box needs finite bounds with lower <= upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingOptions {
    pub per_axis: usize,
    pub random_points: usize,
    pub seed: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            per_axis: 11,
            random_points: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundMode {
    User(f64),
    Sampled(SamplingOptions),
}

/// A derivative bound together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeBound {
    pub value: f64,
    pub provenance: Provenance,
    /// Sampled maxima are not rigorous upper bounds.
    pub heuristic: bool,
    pub points: usize,
}

fn sample_points(model: &SystemModel, region: &BoxRegion, opts: &SamplingOptions) -> Result<Vec<Vector>> {
    let n = model.n();
    if region.dim() != n {
        return Err(Error::InvalidInput(format!(
            "working box has dimension {}, system has {n}",
            region.dim()
        )));
    }
    if !model.domain().contains_closed(&region.lower, &region.upper) {
        return Err(Error::InvalidInput(
            "working box touches or leaves the domain; sampling would hit its boundary".into(),
        ));
    }
    if opts.per_axis < 10 {
        return Err(Error::InvalidInput("sampling needs at least 10 points per axis".into()));
    }
    let total = (opts.per_axis as f64).powi(n as i32);
    if total > MAX_LATTICE as f64 {
        return Err(Error::InvalidInput(format!(
            "lattice of {total} points is too large; supply the bound explicitly"
        )));
    }
    let total = total as usize;
    let axis = |i: usize, k: usize| {
        let (lo, hi) = (region.lower[i], region.upper[i]);
        lo + (hi - lo) * k as f64 / (opts.per_axis - 1) as f64
    };
    let mut pts = Vec::with_capacity(total + opts.random_points);
    for idx in 0..total {
        let mut rem = idx;
        let p = Vector::from_fn(n, |i, _| {
            let k = rem % opts.per_axis;
            rem /= opts.per_axis;
            axis(i, k)
        });
        pts.push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_points {
        pts.push(Vector::from_fn(n, |i, _| {
            let (lo, hi) = (region.lower[i], region.upper[i]);
            lo + (hi - lo) * rng.random::<f64>()
        }));
    }
    Ok(pts)
}

fn user_bound(v: f64) -> Result<DerivativeBound> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::InvalidInput(format!("derivative bound must be >= 0, got {v}")));
    }
    Ok(DerivativeBound {
        value: v,
        provenance: Provenance::User,
        heuristic: false,
        points: 0,
    })
}

/// `L >= sup ||g'||` over the working box.
pub fn lipschitz_bound(model: &SystemModel, region: &BoxRegion, mode: BoundMode) -> Result<DerivativeBound> {
    match mode {
        BoundMode::User(v) => user_bound(v),
        BoundMode::Sampled(opts) => {
            if model.nonlinearity().is_zero() {
                return Ok(DerivativeBound {
                    value: 0.0,
                    provenance: Provenance::Sampled,
                    heuristic: false,
                    points: 0,
                });
            }
            let pts = sample_points(model, region, &opts)?;
            let mut best: f64 = 0.0;
            for p in &pts {
                best = best.max(spectral_norm(&model.eval_g_jac(p)?));
            }
            Ok(DerivativeBound {
                value: best,
                provenance: Provenance::Sampled,
                heuristic: true,
                points: pts.len(),
            })
        }
    }
}

/// `H >= ||g_k''||` for every component over the working box.
pub fn hessian_bound(model: &SystemModel, region: &BoxRegion, mode: BoundMode) -> Result<DerivativeBound> {
    match mode {
        BoundMode::User(v) => user_bound(v),
        BoundMode::Sampled(opts) => {
            if model.nonlinearity().is_zero() {
                return Ok(DerivativeBound {
                    value: 0.0,
                    provenance: Provenance::Sampled,
                    heuristic: false,
                    points: 0,
                });
            }
            let pts = sample_points(model, region, &opts)?;
            let mut best: f64 = 0.0;
            for p in &pts {
                model.domain().check(p)?;
                let hs = model
                    .nonlinearity()
                    .hessians(p)
                    .ok_or(Error::HessianUnavailable)?;
                for h in &hs {
                    best = best.max(spectral_norm(h));
                }
            }
            Ok(DerivativeBound {
                value: best,
                provenance: Provenance::Sampled,
                heuristic: true,
                points: pts.len(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionCheck {
    pub dominant_linearization_ok: bool,
    pub b_tau_inv_norm: Option<f64>,
    pub boundary_restricted_norm: f64,
    pub q: Option<f64>,
    pub contraction_ok: bool,
}

/// Contraction factor of `F` in the sup norm.
pub fn check_theorem1(a: &Matrix, tau: f64, bc: &BoundaryCondition, growth: &GrowthBounds, l: f64) -> ContractionCheck {
    let b0 = bc.restricted_norm();
    match boundary_matrices(bc, a, tau) {
        Ok(bundle) => {
            let (m, w) = (growth.m, growth.omega);
            let q = l * m * expm1_over(w, tau)
                * (1.0 + m * bundle.b_tau_inv_norm * (w * tau).exp() * b0);
            ContractionCheck {
                dominant_linearization_ok: true,
                b_tau_inv_norm: Some(bundle.b_tau_inv_norm),
                boundary_restricted_norm: b0,
                q: Some(q),
                contraction_ok: q < 1.0,
            }
        }
        Err(_) => ContractionCheck {
            dominant_linearization_ok: false,
            b_tau_inv_norm: None,
            boundary_restricted_norm: b0,
            q: None,
            contraction_ok: false,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeumannCheck {
    pub s: f64,
    pub neumann_ok: bool,
    pub phi_l_tau: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn check_lemma2(n: usize, m: f64, l: f64, omega: f64, a_norm: f64, r_tau: f64, tau: f64) -> NeumannCheck {
    let s = (n as f64).sqrt() * m * l * r_tau * expm1_over(a_norm + l + omega, tau);
    NeumannCheck {
        s,
        neumann_ok: s < 1.0,
        phi_l_tau: phi_l(n, a_norm, l, tau),
    }
}

/// Shared factor `M (e^{omega tau} - 1)(1 + M R e^{omega tau}) / omega` of `rho0` and `rho2`.
fn rho_factor(growth: &GrowthBounds, r_tau: f64, tau: f64) -> f64 {
    let (m, w) = (growth.m, growth.omega);
    m * expm1_over(w, tau) * (1.0 + m * r_tau * (w * tau).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rhos {
    pub rho0: f64,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
}

/// Inputs of the Newton constants besides the problem itself.
#[derive(Debug, Clone, Copy)]
pub struct RhoInputs {
    pub growth: GrowthBounds,
    pub l: f64,
    pub h_bar: Option<f64>,
    pub r_tau: f64,
    pub a_norm: f64,
}

pub fn compute_rhos(problem: &BvpProblem, x0: &Trajectory, inp: &RhoInputs) -> Result<Rhos> {
    let n = problem.n();
    let tau = problem.grid().tau();
    let k = rho_factor(&inp.growth, inp.r_tau, tau);
    let g_sup = problem
        .g_nodes(x0)?
        .iter()
        .map(|g| g.norm())
        .fold(0.0, f64::max);
    let rho0 = x0.sup_norm() + k * (problem.schedule().linf_norm() + g_sup);
    let lem = check_lemma2(n, inp.growth.m, inp.l, inp.growth.omega, inp.a_norm, inp.r_tau, tau);
    let rho1 = lem.neumann_ok.then(|| {
        let (m, w, l) = (inp.growth.m, inp.growth.omega, inp.l);
        let phi = lem.phi_l_tau;
        let t = l * m * inp.r_tau * expm1_over(w, tau) * phi / (1.0 - lem.s);
        let denom = inp.a_norm + l;
        let wgt = if l == 0.0 || denom == 0.0 {
            0.0
        } else {
            l * phi * (phi - (n as f64).sqrt()) / denom
        };
        1.0 + t + wgt * (1.0 + t)
    });
    let rho2 = inp.h_bar.map(|h| (n as f64).sqrt() * h * k);
    Ok(Rhos { rho0, rho1, rho2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kantorovich {
    pub h: f64,
    pub eta: f64,
    pub r0: Option<f64>,
    pub r1: Option<f64>,
    pub radius: f64,
    pub kantorovich_ok: bool,
    pub rate_bound_modified: Vec<f64>,
    pub rate_bound_classical: Vec<f64>,
}

/// Newton-Kantorovich constants for a ball of radius `r` around the starting point.
pub fn check_theorem2(rho0: f64, rho1: f64, rho2: f64, r: f64) -> Kantorovich {
    let h = rho0 * rho1 * rho1 * rho2;
    let eta = rho0 * rho1;
    if !(h <= 0.5) {
        return Kantorovich {
            h,
            eta,
            r0: None,
            r1: None,
            radius: r,
            kantorovich_ok: false,
            rate_bound_modified: Vec::new(),
            rate_bound_classical: Vec::new(),
        };
    }
    let root = (1.0 - 2.0 * h).max(0.0).sqrt();
    let (r0, r1) = if h == 0.0 {
        (eta, None)
    } else {
        // 1 - sqrt(1 - 2h) = 2h / (1 + sqrt(1 - 2h)) avoids cancellation for small h.
        let small = 2.0 * h / (1.0 + root);
        (small / h * eta, Some((1.0 + root) / h * eta))
    };
    let small = 2.0 * h / (1.0 + root);
    let modified = (0..RATE_TERMS)
        .map(|k| {
            if h == 0.0 {
                if k == 0 { eta } else { 0.0 }
            } else {
                eta / h * small.powi(k as i32 + 1)
            }
        })
        .collect();
    let classical = (0..RATE_TERMS)
        .map(|k| {
            let e = 2f64.powi(k as i32) - 1.0;
            let base = (2.0 * h).powf(e);
            2f64.powi(1 - k as i32) * base * eta
        })
        .collect();
    Kantorovich {
        h,
        eta,
        r0: Some(r0),
        r1,
        radius: r,
        kantorovich_ok: r0 <= r,
        rate_bound_modified: modified,
        rate_bound_classical: classical,
    }
}

/// Largest radius of a closed sup-norm ball around `x` contained in the domain.
pub fn domain_radius(model: &SystemModel, x: &Trajectory) -> f64 {
    let d = model.domain();
    let mut r = f64::INFINITY;
    for xj in &x.samples {
        for i in 0..xj.len() {
            r = r.min(xj[i] - d.lower()[i]).min(d.upper()[i] - xj[i]);
        }
    }
    // The domain is open, so the closed ball must stay strictly inside.
    if r.is_finite() {
        r * (1.0 - 1e-12)
    } else {
        r
    }
}

/// What to certify and with which user-supplied bounds.
#[derive(Debug, Clone)]
pub struct CertificateRequest {
    pub region: BoxRegion,
    pub growth: Option<(f64, f64)>,
    pub lipschitz: BoundMode,
    pub hessian: Option<BoundMode>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub growth: GrowthBounds,
    pub a_norm: f64,
    pub lipschitz: DerivativeBound,
    pub hessian: Option<DerivativeBound>,
    /// Set on which `L` and `H` were evaluated.
    pub bound_region: BoxRegion,
    pub contraction: ContractionCheck,
    pub r_tau: Option<f64>,
    pub neumann: Option<NeumannCheck>,
    pub rhos: Option<Rhos>,
    pub kantorovich: Option<Kantorovich>,
    /// True when every verdict rests on user-supplied bounds only.
    pub rigorous: bool,
}

impl Certificate {
    /// Verdicts that were requested and could be evaluated.
    pub fn all_pass(&self) -> bool {
        self.contraction.dominant_linearization_ok
            && self.contraction.contraction_ok
            && self.neumann.is_none_or(|c| c.neumann_ok)
            && self.kantorovich.as_ref().is_none_or(|k| k.kantorovich_ok)
    }
}

pub fn certify(problem: &BvpProblem, x0: &Trajectory, req: &CertificateRequest) -> Result<Certificate> {
    let model = problem.model();
    let tau = problem.grid().tau();
    let a = model.a();
    let growth = growth_bounds(a, tau, req.growth)?;
    let a_norm = spectral_norm(a);
    let lipschitz = lipschitz_bound(model, &req.region, req.lipschitz)?;
    let hessian = req
        .hessian
        .map(|mode| hessian_bound(model, &req.region, mode))
        .transpose()?;
    let contraction = check_theorem1(a, tau, problem.bc(), &growth, lipschitz.value);
    let r_tau = problem.bundle().r_tau;
    let periodic = problem.bc().is_periodic();
    let neumann = match (periodic, r_tau) {
        (true, Some(r)) => Some(check_lemma2(
            model.n(),
            growth.m,
            lipschitz.value,
            growth.omega,
            a_norm,
            r,
            tau,
        )),
        _ => None,
    };
    let rhos = match (periodic, r_tau) {
        (true, Some(r)) => Some(compute_rhos(
            problem,
            x0,
            &RhoInputs {
                growth,
                l: lipschitz.value,
                h_bar: hessian.map(|h| h.value),
                r_tau: r,
                a_norm,
            },
        )?),
        _ => None,
    };
    let radius = req.radius.unwrap_or_else(|| domain_radius(model, x0));
    let kantorovich = rhos.and_then(|r| match (r.rho1, r.rho2) {
        (Some(r1), Some(r2)) => Some(check_theorem2(r.rho0, r1, r2, radius)),
        _ => None,
    });
    let rigorous = !lipschitz.heuristic && hessian.is_none_or(|h| !h.heuristic);
    Ok(Certificate {
        growth,
        a_norm,
        lipschitz,
        hessian,
        bound_region: req.region.clone(),
        contraction,
        r_tau,
        neumann,
        rhos,
        kantorovich,
        rigorous,
    })
}
