//! Prescribed scalar curvature: find `φ > 0` with `Scal(φ^κ g) = Ŝcal`,
//! `φ → 1` at infinity, and either Dirichlet data or prescribed boundary
//! mean curvature at the inner boundary.

use std::sync::Arc;

use serde::Serialize;

use crate::geometry::{MeanCurvatureConvention, RadialGeometry};
use crate::grid::{fit_decay_rate, DecayFit, GridFunction};
use crate::monotone::{self, BoundaryReaction, InnerBoundary, IterationReport, NonlinearProblem, ReactionTerm};
use crate::{conformal_laplacian_coeff, kappa, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrescribedBoundary {
    Dirichlet(f64),
    /// Target mean curvature `Ĥ ≥ 0` of the inner boundary.
    MeanCurvature(f64),
}

#[derive(Debug, Clone)]
pub struct PrescriptionSpec {
    pub geom: Arc<RadialGeometry>,
    pub scal_hat: GridFunction,
    pub boundary: PrescribedBoundary,
    /// Expected decay rate of `φ - 1` when `Ŝcal - Scal = O(ρ^δ)`.
    pub delta: Option<f64>,
    /// Dirichlet value at the truncation.
    pub outer_value: f64,
    /// Coefficient used in the mean-curvature boundary condition.
    pub convention: MeanCurvatureConvention,
}

pub const DEFAULT_MAX_ITER: usize = 500_000;

impl PrescriptionSpec {
    pub fn new(geom: &Arc<RadialGeometry>, scal_hat: GridFunction, boundary: PrescribedBoundary) -> Result<Self> {
        let spec = Self {
            geom: Arc::clone(geom),
            scal_hat,
            boundary,
            delta: None,
            outer_value: 1.0,
            convention: MeanCurvatureConvention::AsStated,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = Some(delta);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.scal_hat.check_geometry(&self.geom)?;
        if let Some((i, &v)) = self.scal_hat.values().iter().enumerate().find(|(_, &v)| !(v < 0.0)) {
            return Err(Error::InvalidInput(format!("scal_hat must be negative, got {v} at node {i}")));
        }
        match self.boundary {
            PrescribedBoundary::Dirichlet(v) if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::InvalidInput(format!("Dirichlet value must be positive, got {v}")));
            }
            PrescribedBoundary::MeanCurvature(hh) if !(hh >= 0.0 && hh.is_finite()) => {
                return Err(Error::InvalidInput(format!("target mean curvature must be >= 0, got {hh}")));
            }
            _ => {}
        }
        if let Some(d) = self.delta {
            let n = self.geom.n as f64;
            if !(d > 0.0 && d < n) {
                return Err(Error::InvalidInput(format!(
                    "delta must lie in (0, {n}); delta >= n is obstructed by the mass"
                )));
            }
        }
        if !(self.outer_value > 0.0 && self.outer_value.is_finite()) {
            return Err(Error::InvalidInput("outer value must be positive".into()));
        }
        Ok(())
    }

    fn boundary_reaction(&self) -> InnerBoundary {
        match self.boundary {
            PrescribedBoundary::Dirichlet(v) => InnerBoundary::Dirichlet(v),
            PrescribedBoundary::MeanCurvature(hh) => {
                let n = self.geom.n;
                let coef = 1.0 / self.convention.gradient_coeff(n);
                InnerBoundary::Robin(vec![
                    BoundaryReaction { coeff: coef * self.geom.h_inner, exponent: 1.0 },
                    BoundaryReaction { coeff: -coef * hh, exponent: kappa(n) / 2.0 + 1.0 },
                ])
            }
        }
    }
}

/// Interior reaction `F = (-Scal φ + Ŝcal φ^{κ+1})/c`, `c = 4(n-1)/(n-2)`.
fn interior_terms(spec: &PrescriptionSpec) -> Vec<ReactionTerm> {
    let n = spec.geom.n;
    let c = conformal_laplacian_coeff(n);
    let scal = GridFunction::new(&spec.geom, spec.geom.scal.clone()).expect("geometry profiles are finite");
    vec![
        ReactionTerm { coeff: scal.scale(-1.0 / c), exponent: 1.0 },
        ReactionTerm { coeff: spec.scal_hat.scale(1.0 / c), exponent: kappa(n) + 1.0 },
    ]
}

/// Nonlinear problem for `spec` with the given bracket.
pub fn prescription_problem(spec: &PrescriptionSpec, phi_minus: GridFunction, phi_plus: GridFunction) -> Result<NonlinearProblem> {
    spec.validate()?;
    Ok(NonlinearProblem {
        geom: Arc::clone(&spec.geom),
        interior: interior_terms(spec),
        boundary: spec.boundary_reaction(),
        outer_value: spec.outer_value,
        phi_minus,
        phi_plus,
    })
}

fn sigma_profile(geom: &Arc<RadialGeometry>, sigma: f64) -> GridFunction {
    GridFunction::from_fn(geom, |_, r| (sigma - r).max(0.0))
}

/// Largest `σ` for which `φ_σ = max(σ - ρ, 0)` is a sub-solution.
///
/// Conditions on `{ρ < σ}`: `σ^κ ≤ Scal/Ŝcal` and discrete `Δρ ≤ 0`;
/// plus `φ_σ ≤ φ₀` at the inner boundary (Dirichlet) and `φ_σ ≤ outer_value`
/// at the truncation.
pub fn subsolution_sigma(spec: &PrescriptionSpec) -> Result<(f64, GridFunction)> {
    spec.validate()?;
    let g = &*spec.geom;
    let m = g.num_nodes();
    let k = kappa(g.n);
    let ratio: Vec<f64> = g.scal.iter().zip(spec.scal_hat.values()).map(|(s, sh)| s / sh).collect();
    let lap_rho: Vec<f64> = (0..m)
        .map(|i| if i == 0 || i == m - 1 { f64::NEG_INFINITY } else { g.laplacian_at(&g.rho, i) })
        .collect();

    let mut cap = spec.outer_value + g.rho[m - 1];
    if let PrescribedBoundary::Dirichlet(v) = spec.boundary {
        cap = cap.min(v + g.rho[0]);
    }
    let feasible = |sigma: f64| -> bool {
        if sigma > cap {
            return false;
        }
        let sk = sigma.powf(k);
        (0..m).filter(|&i| g.rho[i] < sigma).all(|i| ratio[i] > 0.0 && sk <= ratio[i] && lap_rho[i] <= 0.0)
    };

    let mut sigma = if feasible(cap) {
        cap
    } else {
        let (mut lo, mut hi) = (0.0f64, cap);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    if let PrescribedBoundary::MeanCurvature(_) = spec.boundary {
        let phi = sigma_profile(&spec.geom, sigma);
        let f = spec.boundary_reaction();
        let p = phi.values();
        let lhs = g.normal_derivative(p);
        let rhs = match &f {
            InnerBoundary::Robin(ts) => ts.iter().map(|t| t.coeff * p[0].powf(t.exponent)).sum::<f64>(),
            InnerBoundary::Dirichlet(_) => unreachable!(),
        };
        if lhs > rhs {
            sigma = sigma.min(g.rho[0]);
        }
    }

    if !(sigma > g.rho[m - 1]) {
        let worst = (0..m)
            .filter(|&i| ratio[i] <= 0.0 || lap_rho[i] > 0.0)
            .map(|i| format!("node {i}: Scal/Ŝcal = {:e}, discrete Δρ = {:e}", ratio[i], lap_rho[i]))
            .next()
            .unwrap_or_else(|| {
                format!("sigma^kappa <= min Scal/Ŝcal forces sigma <= {sigma:e} <= rho(T) = {:e}", g.rho[m - 1])
            });
        return Err(Error::NoAdmissibleSigma(worst));
    }
    Ok((sigma, sigma_profile(&spec.geom, sigma)))
}

/// Constant super-solution level: `max(1, φ₀, (max Scal/Ŝcal)^{1/κ})·1.5`,
/// doubled until the Robin sign condition `f(Λ) ≤ 0` holds.
pub fn supersolution_level(spec: &PrescriptionSpec) -> Result<f64> {
    let g = &*spec.geom;
    let k = kappa(g.n);
    let rmax = g
        .scal
        .iter()
        .zip(spec.scal_hat.values())
        .map(|(s, sh)| s / sh)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut level = 1.0f64.max(spec.outer_value).max(rmax.max(0.0).powf(1.0 / k));
    if let PrescribedBoundary::Dirichlet(v) = spec.boundary {
        level = level.max(v);
    }
    level *= 1.5;
    if let PrescribedBoundary::MeanCurvature(hh) = spec.boundary {
        let hb = g.h_inner;
        let mut tries = 0;
        while hb * level - hh * level.powf(k / 2.0 + 1.0) > 0.0 {
            level *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(Error::NoAdmissibleBarrier(format!(
                    "no constant super-solution: boundary H = {hb} > 0 with target mean curvature {hh}"
                )));
            }
        }
    }
    Ok(level)
}

pub fn default_bracket(spec: &PrescriptionSpec) -> Result<(GridFunction, GridFunction)> {
    let (_, phi_sigma) = subsolution_sigma(spec)?;
    let level = supersolution_level(spec)?;
    Ok((phi_sigma, GridFunction::constant(&spec.geom, level)))
}

pub fn solve_prescription(spec: &PrescriptionSpec, tol: f64) -> Result<(GridFunction, IterationReport)> {
    let (lo, hi) = default_bracket(spec)?;
    let problem = prescription_problem(spec, lo, hi)?;
    let (phi, report) = monotone::iterate(&problem, tol, DEFAULT_MAX_ITER)?;
    if let Some((i, &v)) = phi.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositive { what: "solution", node: i, value: v });
    }
    Ok((phi, report))
}

/// `A_p = max(p, p(p-1)/2)`.
pub fn a_p(p: f64) -> f64 {
    p.max(p * (p - 1.0) / 2.0)
}

/// Both sides of the barrier validity inequality
/// `4(δ+1)(n-δ)/(n-2) > n A_{κ+1} (1-λ)`.
pub fn barrier_validity(n: usize, delta: f64, lambda: f64) -> (f64, f64) {
    let nf = n as f64;
    let lhs = 4.0 * (delta + 1.0) * (nf - delta) / (nf - 2.0);
    let rhs = nf * a_p(kappa(n) + 1.0) * (1.0 - lambda);
    (lhs, rhs)
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticBarriers {
    #[serde(rename = "K")]
    pub big_k: f64,
    pub k: f64,
    pub valid: bool,
    pub margin: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Collar `{ρ ≤ σ}` on which the upper barrier was checked.
    pub collar_sigma: f64,
    /// Collar on which the lower barrier was checked (may shrink).
    pub lower_collar_sigma: f64,
    pub upper_verified: bool,
    pub lower_verified: bool,
}

fn prescription_residual(spec: &PrescriptionSpec, phi: &[f64], i: usize) -> f64 {
    let g = &*spec.geom;
    let c = conformal_laplacian_coeff(g.n);
    let k = kappa(g.n);
    -c * g.laplacian_at(phi, i) + g.scal[i] * phi[i] - spec.scal_hat.values()[i] * phi[i].max(0.0).powf(k + 1.0)
}

/// Barriers `1 ± {K, k} ρ^δ` near infinity.
pub fn asymptotic_barriers(spec: &PrescriptionSpec, lambda: f64, big_lambda: f64) -> Result<AsymptoticBarriers> {
    spec.validate()?;
    let delta = spec
        .delta
        .ok_or_else(|| Error::InvalidInput("asymptotic barriers need delta".into()))?;
    if !(0.0..1.0).contains(&lambda) || !(big_lambda > 1.0) {
        return Err(Error::InvalidInput("need 0 <= lambda < 1 < Lambda".into()));
    }
    let (lhs, rhs) = barrier_validity(spec.geom.n, delta, lambda);
    let (sigma, _) = subsolution_sigma(spec)?;
    let g = &spec.geom;
    let m = g.num_nodes();
    let collar = |s: f64| (1..m - 1).filter(move |&i| g.rho[i] <= s);

    let mut big_k = (big_lambda - 1.0) / sigma.powf(delta);
    let mut upper_verified = false;
    for _ in 0..60 {
        let phi: Vec<f64> = g.rho.iter().map(|r| 1.0 + big_k * r.powf(delta)).collect();
        if collar(sigma).all(|i| prescription_residual(spec, &phi, i) >= 0.0) {
            upper_verified = true;
            break;
        }
        big_k *= 2.0;
    }

    let mut s = sigma;
    let mut k = (1.0 - lambda) / s.powf(delta);
    let mut lower_verified = false;
    for _ in 0..60 {
        k = (1.0 - lambda) / s.powf(delta);
        let phi: Vec<f64> = g.rho.iter().map(|r| 1.0 - k * r.powf(delta)).collect();
        if collar(s).next().is_none() {
            break;
        }
        if collar(s).all(|i| prescription_residual(spec, &phi, i) <= 0.0) {
            lower_verified = true;
            break;
        }
        s *= 0.5;
    }
    Ok(AsymptoticBarriers {
        big_k,
        k,
        valid: lhs > rhs,
        margin: lhs - rhs,
        lhs,
        rhs,
        collar_sigma: sigma,
        lower_collar_sigma: s,
        upper_verified,
        lower_verified,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayCheck {
    pub fit: DecayFit,
    pub expected_delta: f64,
    pub pass: bool,
}

/// Fits the decay of `φ - 1` and compares with `expected_delta` (5%).
pub fn verify_decay(phi: &GridFunction, expected_delta: f64) -> DecayCheck {
    let fit = fit_decay_rate(&phi.map(|v| v - 1.0));
    let pass = !fit.is_zero_marker() && (fit.delta_hat - expected_delta).abs() <= 0.05 * expected_delta;
    DecayCheck { fit, expected_delta, pass }
}
