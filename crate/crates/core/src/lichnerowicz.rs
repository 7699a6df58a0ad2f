//! Lichnerowicz equation with apparent-horizon boundary conditions.
//!
//! Interior: `-cΔφ + Scal φ + n(n-1)φ^{κ+1} - |L|²φ^{-κ-3} = 0`.
//! Inner boundary:
//! `∂_ν φ = (n-2)/(2(n-1)) (H φ + ε L_nn φ^{-1-κ/2} - ε(n-1)τ φ^{κ/2+1})`.

use std::sync::Arc;

use serde::Serialize;

use crate::geometry::{GeometryKind, RadialGeometry};
use crate::grid::GridFunction;
use crate::monotone::{self, BoundaryReaction, InnerBoundary, IterationReport, NonlinearProblem, ReactionTerm};
use crate::ode::{integrate, integrate_to_points, Control, Dopri5Options};
use crate::quad;
use crate::scalarcurv::{self, PrescribedBoundary, PrescriptionSpec};
use crate::ttensor::RadialTT;
use crate::{conformal_laplacian_coeff, kappa, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonSpec {
    /// `-1` future, `+1` past horizon.
    pub epsilon: f64,
    pub tau: f64,
    #[serde(rename = "L_nn")]
    pub l_nn: f64,
    /// Fixed by `n(n-1)τ² - 2Λ_c = n(n-1)`.
    #[serde(rename = "Lambda_c")]
    pub lambda_c: f64,
}

impl HorizonSpec {
    pub fn new(n: usize, epsilon: f64, tau: f64, l_nn: f64) -> Result<Self> {
        let nf = n as f64;
        let spec = HorizonSpec { epsilon, tau, l_nn, lambda_c: 0.5 * nf * (nf - 1.0) * (tau * tau - 1.0) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon != 1.0 && self.epsilon != -1.0 {
            return Err(Error::InvalidInput(format!("epsilon must be +1 or -1, got {}", self.epsilon)));
        }
        if !(self.tau.abs() <= 1.0) {
            return Err(Error::InvalidInput(format!("need |tau| <= 1, got {}", self.tau)));
        }
        if !self.l_nn.is_finite() || self.epsilon * self.l_nn < 0.0 {
            return Err(Error::InvalidInput(format!(
                "need epsilon * L_nn >= 0, got epsilon = {}, L_nn = {}",
                self.epsilon, self.l_nn
            )));
        }
        Ok(())
    }

    fn degenerate(&self) -> bool {
        (self.epsilon * self.tau + 1.0).abs() < 1e-12
    }

    /// Robin terms `f(φ) = Σ c_j φ^{γ_j}` for the inner boundary.
    pub fn boundary_terms(&self, geom: &RadialGeometry) -> Vec<BoundaryReaction> {
        let nf = geom.n as f64;
        let k = kappa(geom.n);
        let q = (nf - 2.0) / (2.0 * (nf - 1.0));
        vec![
            BoundaryReaction { coeff: q * geom.h_inner, exponent: 1.0 },
            BoundaryReaction { coeff: q * self.epsilon * self.l_nn, exponent: -1.0 - k / 2.0 },
            BoundaryReaction { coeff: -q * self.epsilon * (nf - 1.0) * self.tau, exponent: k / 2.0 + 1.0 },
        ]
    }

    fn boundary_value(&self, geom: &RadialGeometry, phi: f64) -> f64 {
        self.boundary_terms(geom).iter().map(|t| t.coeff * phi.powf(t.exponent)).sum()
    }
}

fn check_regime(geom: &RadialGeometry, spec: &HorizonSpec) -> Result<()> {
    if spec.degenerate() && !(geom.fiber_curvature > 0.0) {
        let which = match geom.kind {
            GeometryKind::ToricCollar => "toric collar",
            _ => "inner boundary without positive Yamabe type",
        };
        return Err(Error::CounterexampleRegime(format!(
            "epsilon * tau = -1 on a {which}: a solution need not exist"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ODE barriers

/// Solution of `f'' = n(n-2)/4 f^{κ+1} + A f`, `f(0) = Λ`, `f'(0) = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct OdeBarrier {
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub fp: Vec<f64>,
    /// Integration stop plus the asymptotic remainder.
    pub blowup_time: f64,
    pub stop_x: f64,
    pub max_energy_residual: f64,
}

fn half_gap(n: usize) -> f64 {
    (n as f64 - 2.0) / 2.0
}

fn check_barrier_args(lambda: f64, n: usize, a: f64) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("dimension must be >= 3, got {n}")));
    }
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("need Lambda > 1, got {lambda}")));
    }
    let nf = n as f64;
    if !a.is_finite() || nf * (nf - 2.0) / 4.0 * lambda.powf(kappa(n)) + a <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "A = {a} stops the barrier from leaving Lambda = {lambda}"
        )));
    }
    Ok(())
}

/// `f'² - c²(f^{κ+2} - Λ^{κ+2}) - A(f² - Λ²)` relative to the size of its terms.
pub fn energy_residual(n: usize, lambda: f64, a: f64, f: f64, fp: f64) -> f64 {
    let c = half_gap(n);
    let p = kappa(n) + 2.0;
    let r = fp * fp - c * c * (f.powf(p) - lambda.powf(p)) - a * (f * f - lambda * lambda);
    let scale = fp * fp + c * c * f.powf(p) + a.abs() * f * f;
    r.abs() / scale
}

/// Integrates the barrier ODE until `f > 10⁶Λ`; `A` may be negative as long
/// as `f''(0) > 0`.
pub fn integrate_barrier(lambda: f64, n: usize, a: f64, tol: f64) -> Result<OdeBarrier> {
    check_barrier_args(lambda, n, a)?;
    let nf = n as f64;
    let k = kappa(n);
    let lead = nf * (nf - 2.0) / 4.0;
    let rhs = |_: f64, y: &[f64; 2]| [y[1], lead * y[0].powf(k + 1.0) + a * y[0]];
    let stop = 1e6 * lambda;
    let opts = Dopri5Options { rtol: tol, atol: tol * lambda, h_init: 1e-3 * lambda.powf(-k / 2.0), max_steps: 10_000_000 };
    let mut out = OdeBarrier {
        lambda,
        a,
        x: Vec::new(),
        f: Vec::new(),
        fp: Vec::new(),
        blowup_time: f64::NAN,
        stop_x: f64::NAN,
        max_energy_residual: 0.0,
    };
    // generous horizon: the blow-up time is bounded by the A = 0 value times a factor
    let horizon = 10.0 * blowup_time_shifted(lambda, n, a.min(0.0)).max(blowup_time_quadrature(lambda, n));
    let (x, y, _) = integrate(rhs, 0.0, [lambda, 0.0], horizon, &opts, |x, y| {
        out.x.push(x);
        out.f.push(y[0]);
        out.fp.push(y[1]);
        out.max_energy_residual = out.max_energy_residual.max(energy_residual(n, lambda, a, y[0], y[1]));
        if y[0] > stop {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    if !(y[0] > stop) {
        return Err(Error::Integrator(format!("no blow-up before x = {x}")));
    }
    let c = half_gap(n);
    // ∫_f^∞ dy/√E with √E ≈ c y^{1+κ/2}(1 + A y^{-κ}/(2c²))
    let tail = 2.0 / (c * k) * y[0].powf(-k / 2.0) - a / (3.0 * c.powi(3) * k) * y[0].powf(-1.5 * k);
    out.stop_x = x;
    out.blowup_time = x + tail;
    Ok(out)
}

/// `∫_Λ^∞ dy/√E(y)`, `E = c²(y^{κ+2} - Λ^{κ+2}) + A(y² - Λ²)`.
pub fn blowup_time_shifted(lambda: f64, n: usize, a: f64) -> f64 {
    let c2 = half_gap(n).powi(2);
    let k = kappa(n);
    let p = k + 2.0;
    let lp = lambda.powf(p);
    let l2 = lambda * lambda;
    // [Λ, 2Λ] with y = Λ(1 + s²)
    let near = quad::integrate(
        |s| {
            let s2 = s * s;
            let ln1p = s2.ln_1p();
            let e = c2 * lp * (p * ln1p).exp_m1() + a * l2 * (2.0 * ln1p).exp_m1();
            2.0 * lambda * s / e.sqrt()
        },
        0.0,
        1.0,
        1e-15,
    );
    // [2Λ, ∞) with y = 2Λ w^{-m}, m = 2/κ
    let m = 2.0 / k;
    let tl = 2.0 * lambda;
    let far = quad::integrate(
        |w| {
            let wq = w.powf(2.0 * m + 2.0);
            let e = c2 * (tl.powf(p) - lp * wq) + a * (tl * tl * w * w - l2 * wq);
            tl * m / e.sqrt()
        },
        0.0,
        1.0,
        1e-15,
    );
    near + far
}

/// `δ_Λ = (2I/(n-2)) Λ^{-κ/2}`, `I = ∫₁^∞ dz/√(z^{κ+2} - 1)`.
pub fn blowup_time_quadrature(lambda: f64, n: usize) -> f64 {
    blowup_time_shifted(lambda, n, 0.0)
}

// ---------------------------------------------------------------------------
// Super- and sub-solutions

#[derive(Debug, Clone, Serialize)]
pub struct SuperSolution {
    #[serde(skip)]
    pub phi: GridFunction,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub delta: f64,
    pub delta_lambda: f64,
    #[serde(rename = "A")]
    pub a: f64,
    /// Continuous boundary inequality at `f(δ)`.
    pub boundary_margin: f64,
    /// Discrete `∂_ν φ+ - f(φ+)` at the inner node.
    pub discrete_boundary_margin: f64,
    pub min_interior_residual: f64,
    pub candidates_tried: usize,
}

const SWEEP_FRACTIONS: [f64; 4] = [0.5, 0.75, 0.9, 0.99];
const SWEEP_MAX_DOUBLINGS: i32 = 20;

fn lichnerowicz_problem(
    geom: &Arc<RadialGeometry>,
    spec: &HorizonSpec,
    l_sq: &GridFunction,
    phi_minus: GridFunction,
    phi_plus: GridFunction,
) -> Result<NonlinearProblem> {
    let n = geom.n as f64;
    let c = conformal_laplacian_coeff(geom.n);
    let k = kappa(geom.n);
    let scal = GridFunction::new(geom, geom.scal.clone())?;
    Ok(NonlinearProblem {
        geom: Arc::clone(geom),
        interior: vec![
            ReactionTerm { coeff: scal.scale(-1.0 / c), exponent: 1.0 },
            ReactionTerm { coeff: GridFunction::constant(geom, -n * (n - 1.0) / c), exponent: k + 1.0 },
            ReactionTerm { coeff: l_sq.scale(1.0 / c), exponent: -k - 3.0 },
        ],
        boundary: InnerBoundary::Robin(spec.boundary_terms(geom)),
        outer_value: 1.0,
        phi_minus,
        phi_plus,
    })
}

fn check_l_sq(geom: &Arc<RadialGeometry>, l_sq: &GridFunction) -> Result<()> {
    l_sq.check_geometry(geom)?;
    if let Some((i, &v)) = l_sq.values().iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
        return Err(Error::InvalidInput(format!("|L|^2 must be >= 0, got {v} at node {i}")));
    }
    Ok(())
}

/// Shift `A` of the barrier ODE. For `1 + ετ > 0` it is negative and makes the
/// collar residual `cH f' + (Scal - cA) f - |L|² f^{-κ-3}` positive; for
/// `ετ = -1` it is half the admissible maximum set by the boundary sphere.
fn barrier_shift(geom: &RadialGeometry, spec: &HorizonSpec, l_sq: &GridFunction) -> f64 {
    let nf = geom.n as f64;
    let c = conformal_laplacian_coeff(geom.n);
    if spec.degenerate() {
        let s0 = geom.warp[0];
        let scal_sphere = geom.fiber_curvature * (nf - 1.0) * (nf - 2.0) / (s0 * s0);
        0.5 * (nf - 2.0) / (4.0 * (nf - 1.0)) * scal_sphere
    } else {
        let neg_scal = geom.scal.iter().fold(0.0f64, |m, s| m.max(-s));
        -(neg_scal + 1.0 + l_sq.max()) / c
    }
}

fn continuous_margin(geom: &RadialGeometry, spec: &HorizonSpec, f: f64, fp: f64) -> f64 {
    let nf = geom.n as f64;
    (2.0 * (nf - 1.0) / (nf - 2.0)) * fp - (2.0 * (nf - 1.0) / (nf - 2.0)) * spec.boundary_value(geom, f)
}

/// `φ+ = Λ` for `r ≥ δ` and `f(δ - r)` inside the collar, with the first
/// admissible `(Λ, δ)` of the sweep.
pub fn build_supersolution(
    geom: &Arc<RadialGeometry>,
    spec: &HorizonSpec,
    l_sq: &GridFunction,
    tol: f64,
) -> Result<SuperSolution> {
    spec.validate()?;
    check_regime(geom, spec)?;
    check_l_sq(geom, l_sq)?;
    let nf = geom.n as f64;
    let k = kappa(geom.n);
    let lead = nf * (nf - 2.0) / 4.0;
    let a = barrier_shift(geom, spec, l_sq);
    let m = geom.num_nodes();
    let width = geom.t[m - 1] - geom.t[0];
    let mut tried = 0;
    let mut last_reason = String::from("no candidate");
    for j in 1..=SWEEP_MAX_DOUBLINGS {
        let lambda = 2f64.powi(j);
        if lead * lambda.powf(k) + a <= 0.0 {
            last_reason = format!("Lambda = {lambda}: barrier does not leave its initial value");
            continue;
        }
        let delta_lambda = blowup_time_shifted(lambda, geom.n, a);
        for frac in SWEEP_FRACTIONS {
            tried += 1;
            let delta = frac * delta_lambda;
            if delta >= width {
                last_reason = format!("Lambda = {lambda}: collar width {delta} exceeds the grid");
                continue;
            }
            let cand = supersolution_candidate(geom, spec, l_sq, lambda, delta, a, tol)?;
            if cand.boundary_margin >= 0.0 && cand.discrete_boundary_margin >= 0.0 && cand.min_interior_residual >= 0.0 {
                log::debug!("super-solution: Lambda = {lambda}, delta = {delta} after {tried} candidates");
                return Ok(SuperSolution { delta_lambda, candidates_tried: tried, ..cand });
            }
            last_reason = format!(
                "Lambda = {lambda}, delta = {delta:.6}: boundary margin {:e}, discrete boundary margin {:e}, \
                 interior residual {:e}",
                cand.boundary_margin, cand.discrete_boundary_margin, cand.min_interior_residual
            );
        }
    }
    Err(Error::NoAdmissibleBarrier(format!("{tried} candidates rejected; last: {last_reason}")))
}

fn supersolution_candidate(
    geom: &Arc<RadialGeometry>,
    spec: &HorizonSpec,
    l_sq: &GridFunction,
    lambda: f64,
    delta: f64,
    a: f64,
    tol: f64,
) -> Result<SuperSolution> {
    let nf = geom.n as f64;
    let k = kappa(geom.n);
    let lead = nf * (nf - 2.0) / 4.0;
    let rhs = |_: f64, y: &[f64; 2]| [y[1], lead * y[0].powf(k + 1.0) + a * y[0]];
    let inside: Vec<usize> = (0..geom.num_nodes()).filter(|&i| geom.t[i] - geom.t[0] < delta).collect();
    // x = δ - r ascending, ending at the boundary x = δ
    let mut xs: Vec<f64> = inside.iter().rev().map(|&i| delta - (geom.t[i] - geom.t[0])).collect();
    xs.push(delta);
    let opts = Dopri5Options { rtol: tol.max(1e-13), atol: 1e-13 * lambda, h_init: 1e-3 * delta, max_steps: 10_000_000 };
    let ys = integrate_to_points(rhs, 0.0, [lambda, 0.0], &xs, &opts)?;
    let mut values = vec![lambda; geom.num_nodes()];
    for (pos, &i) in inside.iter().rev().enumerate() {
        values[i] = ys[pos][0];
    }
    let fb = ys[ys.len() - 1];
    let phi = GridFunction::new(geom, values)?;
    let problem = lichnerowicz_problem(geom, spec, l_sq, phi.clone(), phi.clone())?;
    let r = problem.residual(phi.values());
    let min_interior = r[1..r.len() - 1].iter().fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(SuperSolution {
        phi,
        lambda,
        delta,
        delta_lambda: f64::NAN,
        a,
        boundary_margin: continuous_margin(geom, spec, fb[0], fb[1]),
        discrete_boundary_margin: r[0],
        min_interior_residual: min_interior,
        candidates_tried: 0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SubSolution {
    #[serde(skip)]
    pub phi: GridFunction,
    pub eps: f64,
    /// Measured `∂_ν φ_ε`.
    pub normal_derivative: f64,
}

/// `φ_ε`: the metric `φ_ε^κ g` has scalar curvature `-n(n-1)`, with
/// `φ_ε(t0) = eps` and `φ_ε(T) = 1`.
pub fn subsolution_phi_eps(geom: &Arc<RadialGeometry>, eps_value: f64, tol: f64) -> Result<SubSolution> {
    if !(eps_value > 0.0 && eps_value <= 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1], got {eps_value}")));
    }
    let nf = geom.n as f64;
    let target = GridFunction::constant(geom, -nf * (nf - 1.0));
    let spec = PrescriptionSpec::new(geom, target, PrescribedBoundary::Dirichlet(eps_value))?;
    let (phi, _) = scalarcurv::solve_prescription(&spec, tol)?;
    let normal_derivative = geom.normal_derivative(phi.values());
    Ok(SubSolution { phi, eps: eps_value, normal_derivative })
}

pub const EPS_SWEEP: [f64; 9] = [1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 0.005, 0.001];

/// First `φ_ε` of the sweep with `∂_ν φ_ε ≤ f(φ_ε(t0))`.
pub fn choose_subsolution(geom: &Arc<RadialGeometry>, spec: &HorizonSpec, tol: f64) -> Result<SubSolution> {
    for eps in EPS_SWEEP {
        let sub = subsolution_phi_eps(geom, eps, tol)?;
        let margin = spec.boundary_value(geom, sub.phi.values()[0]) - sub.normal_derivative;
        if margin >= 0.0 {
            return Ok(sub);
        }
        log::debug!("eps = {eps}: boundary sub-solution margin {margin:e}");
    }
    Err(Error::NoAdmissibleBarrier("no phi_eps satisfies the boundary sub-solution inequality".into()))
}

// ---------------------------------------------------------------------------
// Solver

#[derive(Debug, Clone, Serialize)]
pub struct LichnerowiczSolution {
    #[serde(skip)]
    pub phi: GridFunction,
    pub report: IterationReport,
    pub supersolution: SuperSolution,
    pub subsolution: SubSolution,
    pub residuals: LichnerowiczResiduals,
}

pub fn solve_lichnerowicz(
    geom: &Arc<RadialGeometry>,
    spec: &HorizonSpec,
    l_sq: &GridFunction,
    tol: f64,
) -> Result<(GridFunction, IterationReport)> {
    let sol = solve_lichnerowicz_full(geom, spec, l_sq, tol)?;
    Ok((sol.phi, sol.report))
}

pub fn solve_lichnerowicz_full(
    geom: &Arc<RadialGeometry>,
    spec: &HorizonSpec,
    l_sq: &GridFunction,
    tol: f64,
) -> Result<LichnerowiczSolution> {
    spec.validate()?;
    check_regime(geom, spec)?;
    check_l_sq(geom, l_sq)?;
    let sup = build_supersolution(geom, spec, l_sq, tol)?;
    let sub = choose_subsolution(geom, spec, tol)?;
    let problem = lichnerowicz_problem(geom, spec, l_sq, sub.phi.clone(), sup.phi.clone())?;
    let (phi, report) = monotone::iterate(&problem, tol, scalarcurv::DEFAULT_MAX_ITER)?;
    if let Some((i, &v)) = phi.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositive { what: "solution", node: i, value: v });
    }
    let residuals = lichnerowicz_residuals(geom, spec, l_sq, &phi)?;
    Ok(LichnerowiczSolution { phi, report, supersolution: sup, subsolution: sub, residuals })
}

#[derive(Debug, Clone, Serialize)]
pub struct LichnerowiczResiduals {
    /// `-Δφ - F(φ)` with fourth-order central differences.
    #[serde(skip)]
    pub interior: GridFunction,
    pub max_interior: f64,
    /// `∂_ν φ - f(φ)` with the third-order one-sided derivative.
    pub boundary: f64,
}

/// Residuals of a discrete profile measured with stencils of higher order
/// than the solver's, so they track the truncation error.
pub fn lichnerowicz_residuals(
    geom: &Arc<RadialGeometry>,
    spec: &HorizonSpec,
    l_sq: &GridFunction,
    phi: &GridFunction,
) -> Result<LichnerowiczResiduals> {
    phi.check_geometry(geom)?;
    check_l_sq(geom, l_sq)?;
    let problem = lichnerowicz_problem(geom, spec, l_sq, phi.clone(), phi.clone())?;
    let p = phi.values();
    let m = p.len();
    let h = geom.spacing();
    let mut r = problem.residual(p);
    r[0] = 0.0;
    r[m - 1] = 0.0;
    for i in 2..m - 2 {
        let d1 = (-p[i + 2] + 8.0 * p[i + 1] - 8.0 * p[i - 1] + p[i - 2]) / (12.0 * h);
        let d2 = (-p[i + 2] + 16.0 * p[i + 1] - 30.0 * p[i] + 16.0 * p[i - 1] - p[i - 2]) / (12.0 * h * h);
        r[i] = -(d2 + geom.h_r[i] * d1) - problem.interior_reaction(i, p[i]);
    }
    let dnu = -(-11.0 * p[0] + 18.0 * p[1] - 9.0 * p[2] + 2.0 * p[3]) / (6.0 * h);
    let boundary = dnu - problem.boundary_reaction(p[0]);
    let interior = GridFunction::new(geom, r)?;
    Ok(LichnerowiczResiduals { max_interior: interior.sup_abs(), interior, boundary })
}

// ---------------------------------------------------------------------------
// Initial data and constraints

/// `ĝ = φ^κ g`, `K̂ = φ^{-2} L + τ ĝ`.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub geom: Arc<RadialGeometry>,
    pub phi: GridFunction,
    /// `L_tt` in the seed metric; the angular part is `-μ/(n-1)`.
    pub mu: GridFunction,
    pub tau: f64,
    pub lambda_c: f64,
}

pub fn assemble_initial_data(
    geom: &Arc<RadialGeometry>,
    phi: &GridFunction,
    l_profile: Option<&RadialTT>,
    tau: f64,
) -> Result<InitialData> {
    phi.check_geometry(geom)?;
    if let Some((i, &v)) = phi.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositive { what: "phi", node: i, value: v });
    }
    let mu = match l_profile {
        Some(tt) => {
            tt.mu.check_geometry(geom)?;
            tt.mu.clone()
        }
        None => GridFunction::zeros(geom),
    };
    let nf = geom.n as f64;
    Ok(InitialData {
        geom: Arc::clone(geom),
        phi: phi.clone(),
        mu,
        tau,
        lambda_c: 0.5 * nf * (nf - 1.0) * (tau * tau - 1.0),
    })
}

impl InitialData {
    /// `φ^{-2-κ} μ`, the radial frame component of `φ^{-2}L` in `ĝ`.
    pub fn mu_hat(&self) -> GridFunction {
        let k = kappa(self.geom.n);
        self.phi.zip_map(&self.mu, |p, m| p.powf(-2.0 - k) * m)
    }

    /// Frame components `(K̂_rr, K̂_aa)` in `ĝ`.
    pub fn k_hat_frame(&self) -> (GridFunction, GridFunction) {
        let nf = self.geom.n as f64;
        let mh = self.mu_hat();
        (mh.map(|m| m + self.tau), mh.map(|m| -m / (nf - 1.0) + self.tau))
    }

    /// `tr_ĝ K̂` node-wise.
    pub fn trace_k_hat(&self) -> GridFunction {
        let nf = self.geom.n as f64;
        let (krr, kaa) = self.k_hat_frame();
        krr.zip_map(&kaa, |a, b| a + (nf - 1.0) * b)
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintResiduals {
    pub ham: GridFunction,
    pub mom: GridFunction,
}

/// Hamiltonian and momentum constraints of `(ĝ, K̂)`, computed from the
/// warped-product form `ĝ = dt̂² + ŝ² g_fiber` with `ŝ = φ^{κ/2} s`.
pub fn constraint_residuals(data: &InitialData) -> Result<ConstraintResiduals> {
    let g = &*data.geom;
    let n = g.n as f64;
    let k = kappa(g.n);
    let p = data.phi.values();
    let m = p.len();
    let lnphi: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let dl = g.derivative(&lnphi);
    let d2l = g.second_derivative(&lnphi);
    let (krr, kaa) = data.k_hat_frame();
    let tr = data.trace_k_hat();
    let dkrr = g.derivative(krr.values());
    let dtr = g.derivative(tr.values());
    let mut ham = vec![0.0; m];
    let mut mom = vec![0.0; m];
    for i in 0..m {
        let scale = p[i].powf(-k / 2.0);
        let sig_t = k / 2.0 * dl[i] + g.warp_log_deriv(i);
        let sig_tt = k / 2.0 * d2l[i] + g.warp_log_deriv2[i];
        let sh = scale * sig_t;
        let shh = p[i].powf(-k) * (sig_tt - k / 2.0 * dl[i] * sig_t);
        let fiber = g.fiber_curvature * p[i].powf(-k) / (g.warp[i] * g.warp[i]);
        let scal_hat = -2.0 * (n - 1.0) * (shh + sh * sh) + (n - 1.0) * (n - 2.0) * (fiber - sh * sh);
        let (a, b) = (krr.values()[i], kaa.values()[i]);
        let norm_sq = a * a + (n - 1.0) * b * b;
        ham[i] = scal_hat - 2.0 * data.lambda_c - norm_sq + tr.values()[i].powi(2);
        mom[i] = scale * dkrr[i] + (n - 1.0) * sh * (a - b) - scale * dtr[i];
    }
    Ok(ConstraintResiduals { ham: GridFunction::new(&data.geom, ham)?, mom: GridFunction::new(&data.geom, mom)? })
}

// ---------------------------------------------------------------------------
// Toric counterexample

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleTrajectory {
    pub n: usize,
    pub a: f64,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    /// `B = φ' + (n-2)/2 (φ + φ^{κ/2+1})`.
    pub b: Vec<f64>,
    pub max_abs_b: f64,
    pub terminal_r: f64,
    pub terminal_phi: f64,
    /// `min |φ - 1|` over `r ≥ r_max/2`, or over the whole run if it stopped
    /// at `φ = 0` before that.
    pub min_dist_from_one: f64,
    pub decreasing: bool,
    pub hit_zero: bool,
}

fn b_value(n: usize, phi: f64, dphi: f64) -> f64 {
    let k = kappa(n);
    dphi + half_gap(n) * (phi + phi.powf(k / 2.0 + 1.0))
}

/// `φ'' + (n-1)φ' + n(n-2)/4 (φ - φ^{κ+1}) = 0` from `φ(0) = a` with the
/// slope that makes `B(0) = 0`, until `φ ≤ 0` or `r_max`.
pub fn counterexample_integrate(n: usize, a: f64, r_max: f64, tol: f64) -> Result<CounterexampleTrajectory> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("dimension must be >= 3, got {n}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidInput(format!("need a > 0, got {a}")));
    }
    if !(r_max > 0.0) {
        return Err(Error::InvalidInput(format!("need r_max > 0, got {r_max}")));
    }
    let nf = n as f64;
    let k = kappa(n);
    let q = nf * (nf - 2.0) / 4.0;
    let rhs = |_: f64, y: &[f64; 2]| {
        let p = y[0].max(0.0);
        [y[1], -(nf - 1.0) * y[1] - q * (y[0] - p.powf(k + 1.0))]
    };
    let dphi0 = -half_gap(n) * (a + a.powf(k / 2.0 + 1.0));
    let opts = Dopri5Options { rtol: tol, atol: tol * 1e-3, h_init: 1e-4 / (1.0 + a.powf(k)), max_steps: 10_000_000 };
    let mut tr = CounterexampleTrajectory {
        n,
        a,
        r: Vec::new(),
        phi: Vec::new(),
        dphi: Vec::new(),
        b: Vec::new(),
        max_abs_b: 0.0,
        terminal_r: 0.0,
        terminal_phi: a,
        min_dist_from_one: f64::INFINITY,
        decreasing: true,
        hit_zero: false,
    };
    integrate(rhs, 0.0, [a, dphi0], r_max, &opts, |r, y| {
        if let Some(&prev) = tr.phi.last() {
            if y[0] >= prev {
                tr.decreasing = false;
            }
        }
        tr.r.push(r);
        tr.phi.push(y[0]);
        tr.dphi.push(y[1]);
        let b = if y[0] > 0.0 { b_value(n, y[0], y[1]) } else { f64::NAN };
        tr.b.push(b);
        if b.is_finite() {
            tr.max_abs_b = tr.max_abs_b.max(b.abs());
        }
        if y[0] <= 0.0 {
            tr.hit_zero = true;
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    let last = tr.r.len() - 1;
    tr.terminal_r = tr.r[last];
    tr.terminal_phi = tr.phi[last];
    let from = if tr.terminal_r >= 0.5 * r_max { 0.5 * r_max } else { 0.0 };
    tr.min_dist_from_one = tr
        .r
        .iter()
        .zip(&tr.phi)
        .filter(|(r, _)| **r >= from)
        .map(|(_, p)| (p - 1.0).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(tr)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanEntry {
    pub a: f64,
    pub max_abs_b: f64,
    pub terminal_r: f64,
    pub terminal_phi: f64,
    pub min_dist_from_one: f64,
    pub decreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleScan {
    pub n: usize,
    pub r_max: f64,
    pub entries: Vec<ScanEntry>,
    pub max_abs_b: f64,
    /// Every trajectory stays at distance ≥ 1/2 from 1 after the transient.
    pub no_solution_found: bool,
    pub summary: String,
}

pub fn counterexample_scan(n: usize, a_grid: &[f64], r_max: f64, tol: f64) -> Result<(CounterexampleScan, Vec<CounterexampleTrajectory>)> {
    let mut entries = Vec::with_capacity(a_grid.len());
    let mut trajectories = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        let tr = counterexample_integrate(n, a, r_max, tol)?;
        entries.push(ScanEntry {
            a,
            max_abs_b: tr.max_abs_b,
            terminal_r: tr.terminal_r,
            terminal_phi: tr.terminal_phi,
            min_dist_from_one: tr.min_dist_from_one,
            decreasing: tr.decreasing,
        });
        trajectories.push(tr);
    }
    let max_abs_b = entries.iter().fold(0.0f64, |m, e| m.max(e.max_abs_b));
    let no_solution_found = !entries.is_empty() && entries.iter().all(|e| e.min_dist_from_one >= 0.5);
    let summary = if no_solution_found {
        "no solution found".to_string()
    } else {
        "some trajectory approaches 1".to_string()
    };
    Ok((CounterexampleScan { n, r_max, entries, max_abs_b, no_solution_found, summary }, trajectories))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_hyperbolic_exterior, make_toric_collar};

    #[test]
    fn normalization_and_validation() {
        let s = HorizonSpec::new(3, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(s.lambda_c, -3.0);
        assert_eq!(HorizonSpec::new(3, 1.0, 1.0, 0.0).unwrap().lambda_c, 0.0);
        assert!(HorizonSpec::new(3, 0.5, 0.0, 0.0).is_err());
        assert!(HorizonSpec::new(3, 1.0, 1.5, 0.0).is_err());
        assert!(HorizonSpec::new(3, -1.0, 0.0, 0.3).is_err());
    }

    #[test]
    fn barrier_starts_at_rest() {
        let b = integrate_barrier(2.0, 3, 0.0, 1e-12).unwrap();
        assert_eq!(b.f[0], 2.0);
        assert_eq!(b.fp[0], 0.0);
        assert_eq!(energy_residual(3, 2.0, 0.0, 2.0, 0.0), 0.0);
        assert!(b.f.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn shift_shortens_blowup() {
        let t0 = blowup_time_quadrature(2.0, 4);
        let t1 = blowup_time_shifted(2.0, 4, 1.0);
        assert!(t1 < t0);
        let b = integrate_barrier(2.0, 4, 1.0, 1e-12).unwrap();
        assert!((b.blowup_time - t1).abs() < 1e-6 * t1);
    }

    #[test]
    fn toric_degenerate_regime_rejected() {
        let g = make_toric_collar(3, 1.0, 8.0, 128).unwrap();
        let spec = HorizonSpec::new(3, 1.0, -1.0, 0.0).unwrap();
        let l = GridFunction::zeros(&g);
        assert!(matches!(solve_lichnerowicz(&g, &spec, &l, 1e-10), Err(Error::CounterexampleRegime(_))));
    }

    #[test]
    fn phi_eps_at_one_is_constant() {
        let g = make_hyperbolic_exterior(3, 1.0, 8.0, 128).unwrap();
        let sub = subsolution_phi_eps(&g, 1.0, 1e-12).unwrap();
        assert!(sub.phi.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn trivial_interior_identity() {
        let g = make_hyperbolic_exterior(3, 1.0, 8.0, 128).unwrap();
        let spec = HorizonSpec::new(3, 1.0, 0.0, 0.0).unwrap();
        let one = GridFunction::constant(&g, 1.0);
        let r = lichnerowicz_residuals(&g, &spec, &GridFunction::zeros(&g), &one).unwrap();
        assert!(r.max_interior < 1e-12);
    }

    #[test]
    fn exact_hyperbolic_data_satisfies_constraints() {
        let g = make_hyperbolic_exterior(4, 1.0, 8.0, 128).unwrap();
        let one = GridFunction::constant(&g, 1.0);
        for tau in [0.0, 1.0] {
            let data = assemble_initial_data(&g, &one, None, tau).unwrap();
            let c = constraint_residuals(&data).unwrap();
            assert!(c.ham.sup_abs() < 1e-11, "{}", c.ham.sup_abs());
            assert!(c.mom.sup_abs() < 1e-12);
            assert!(data.trace_k_hat().values().iter().all(|v| (v - 4.0 * tau).abs() < 1e-14));
        }
    }

    #[test]
    fn counterexample_initial_slope() {
        let tr = counterexample_integrate(3, 1.0, 20.0, 1e-12).unwrap();
        assert_eq!(tr.dphi[0], -1.0);
        assert_eq!(tr.b[0], 0.0);
        assert!(tr.decreasing);
    }
}
