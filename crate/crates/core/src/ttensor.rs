//! Radial transverse-traceless tensors.
//!
//! A radial traceless symmetric 2-tensor is `L = μ dt² - μ/(n-1) s² ĝ_fiber`,
//! a radial 1-form is `ψ = u dt`. With `w = u' - (s'/s)u` the conformal
//! Killing operator gives `(L̊ψ)_tt = 2(n-1)/n · w`, and
//! `(div L)_t = μ' + n (s'/s) μ`.

use std::sync::Arc;

use serde::Serialize;

use crate::geometry::{GeometryKind, RadialGeometry};
use crate::grid::{fit_decay_rate, DecayFit, GridFunction};
use crate::ode::{integrate_to_points, Dopri5Options};
use crate::{kappa, Error, Result};

#[derive(Debug, Clone)]
pub struct RadialTT {
    pub geom: Arc<RadialGeometry>,
    /// Source `L₀_tt = λ`.
    pub lambda0: GridFunction,
    /// Prescribed `L(ν, ν)` at the inner boundary.
    pub b: f64,
    /// Potential `ψ = u dt`.
    pub u: GridFunction,
    /// Result `L_tt = μ`.
    pub mu: GridFunction,
    pub w: GridFunction,
    /// `sup |L̊ψ - (2(n-1)/n) w|` with `L̊ψ` differenced from the stored `u`.
    pub potential_mismatch: f64,
    pub warnings: Vec<String>,
}

impl RadialTT {
    /// `|L|²_g = μ² n/(n-1)`.
    pub fn norm_sq(&self) -> GridFunction {
        let n = self.geom.n as f64;
        self.mu.map(|m| m * m * n / (n - 1.0))
    }

    /// `L(ν, ν) = μ(t0)`.
    pub fn l_nn(&self) -> f64 {
        self.mu.values()[0]
    }

    /// Largest reconstructed `|g^{ij} L_ij|` relative to `max |μ|`.
    pub fn trace_check(&self) -> f64 {
        trace_check(self.geom.n, self.mu.values())
    }
}

fn trace_check(n: usize, tt: &[f64]) -> f64 {
    let nf = n as f64;
    let scale = tt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = tt
        .iter()
        .map(|&v| {
            let ang = -v / (nf - 1.0);
            (v + (nf - 1.0) * ang).abs()
        })
        .fold(0.0f64, f64::max);
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

fn warp_log_derivs(geom: &RadialGeometry) -> Vec<f64> {
    (0..geom.num_nodes()).map(|i| geom.warp_log_deriv(i)).collect()
}

/// `(L̊ψ)_tt` for `ψ = u dt`, and the reconstructed relative trace.
pub fn conformal_killing_image(geom: &Arc<RadialGeometry>, u: &GridFunction) -> Result<(GridFunction, f64)> {
    u.check_geometry(geom)?;
    let n = geom.n as f64;
    let du = geom.derivative(u.values());
    let ld = warp_log_derivs(geom);
    let tt: Vec<f64> = (0..du.len())
        .map(|i| 2.0 * (n - 1.0) / n * (du[i] - ld[i] * u.values()[i]))
        .collect();
    let check = trace_check(geom.n, &tt);
    Ok((GridFunction::new(geom, tt)?, check))
}

/// Solves `div(L₀ + L̊ψ) = 0` with `L(ν, ν) = b` and `ψ` in the decay class.
///
/// The divergence equation integrates exactly to
/// `μ = b (s(t0)/s)^n`, which fixes `w = n/(2(n-1)) (μ - λ)`; the potential
/// is then the decaying solution `u = -s ∫_t^∞ w/s`.
pub fn solve_tt(geom: &Arc<RadialGeometry>, lambda0: &GridFunction, b: f64) -> Result<RadialTT> {
    lambda0.check_geometry(geom)?;
    if !b.is_finite() {
        return Err(Error::InvalidInput("b must be finite".into()));
    }
    let n = geom.n as f64;
    let m = geom.num_nodes();
    let h = geom.spacing();
    let lam = lambda0.values();
    let mut warnings = Vec::new();
    let fit = fit_decay_rate(lambda0);
    if !fit.is_zero_marker() && fit.delta_hat <= 0.0 {
        let msg = format!(
            "source does not decay (fitted rate {:.3}); the weight window is (-1, {})",
            fit.delta_hat, geom.n
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let s0 = geom.warp[0];
    let w: Vec<f64> = (0..m)
        .map(|i| n / (2.0 * (n - 1.0)) * (b * (s0 / geom.warp[i]).powf(n) - lam[i]))
        .collect();
    let q: Vec<f64> = (0..m).map(|i| w[i] / geom.warp[i]).collect();
    let mut tail = 0.0;
    if q[m - 1] != 0.0 && q[m - 2] / q[m - 1] > 1.0 {
        let rate = (q[m - 2] / q[m - 1]).ln() / h;
        tail = q[m - 1] / rate;
    }
    let mut integral = vec![0.0; m];
    integral[m - 1] = tail;
    for i in (0..m - 1).rev() {
        integral[i] = integral[i + 1] + 0.5 * h * (q[i] + q[i + 1]);
    }
    let u: Vec<f64> = (0..m).map(|i| -geom.warp[i] * integral[i]).collect();
    let u = GridFunction::new(geom, u)?;
    // u' = (s'/s)u + w holds exactly for the integral representation, so the
    // Killing image is (2(n-1)/n)w; the differenced image is kept as a check.
    let c = 2.0 * (n - 1.0) / n;
    let mu: Vec<f64> = (0..m).map(|i| lam[i] + c * w[i]).collect();
    let (lie, _) = conformal_killing_image(geom, &u)?;
    let potential_mismatch = (0..m).map(|i| (lie.values()[i] - c * w[i]).abs()).fold(0.0, f64::max);
    let mu = GridFunction::new(geom, mu)?;
    Ok(RadialTT {
        geom: Arc::clone(geom),
        lambda0: lambda0.clone(),
        b,
        u,
        mu,
        w: GridFunction::new(geom, w)?,
        potential_mismatch,
        warnings,
    })
}

/// `(div L)_t = μ' + n (s'/s) μ`.
pub fn divergence_residual(geom: &Arc<RadialGeometry>, tt: &RadialTT) -> Result<GridFunction> {
    divergence_of(geom, &tt.mu)
}

pub fn divergence_of(geom: &Arc<RadialGeometry>, mu: &GridFunction) -> Result<GridFunction> {
    mu.check_geometry(geom)?;
    let n = geom.n as f64;
    let d = geom.derivative(mu.values());
    let v = (0..d.len()).map(|i| d[i] + n * geom.warp_log_deriv(i) * mu.values()[i]).collect();
    GridFunction::new(geom, v)
}

/// Radial divergence of `φ^{-2} L` in the metric `φ^κ g`, in a unit frame.
pub fn divergence_residual_conformal(geom: &Arc<RadialGeometry>, mu: &GridFunction, phi: &GridFunction) -> Result<GridFunction> {
    mu.check_geometry(geom)?;
    phi.check_geometry(geom)?;
    let n = geom.n as f64;
    let k = kappa(geom.n);
    let p = phi.values();
    if let Some(i) = p.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive { what: "phi", node: i, value: p[i] });
    }
    let mu_hat: Vec<f64> = p.iter().zip(mu.values()).map(|(p, m)| p.powf(-2.0 - k) * m).collect();
    let lnphi: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let dl = geom.derivative(&lnphi);
    let dm = geom.derivative(&mu_hat);
    let v = (0..p.len())
        .map(|i| {
            let scale = p[i].powf(-k / 2.0);
            let sig = scale * (k / 2.0 * dl[i] + geom.warp_log_deriv(i));
            scale * dm[i] + n * sig * mu_hat[i]
        })
        .collect();
    GridFunction::new(geom, v)
}

/// Kernel element of the divergence: `μ = C sinh^{-n} t` (hyperbolic),
/// `C e^{-nt}` (toric), `C s^{-n}` (custom).
pub fn analytic_tt(geom: &Arc<RadialGeometry>, c: f64) -> RadialTT {
    let n = geom.n as i32;
    let mu = match geom.kind {
        GeometryKind::ToricCollar => GridFunction::from_fn(geom, |t, _| c * (-(n as f64) * t).exp()),
        _ => {
            let v = geom.warp.iter().map(|s| c * s.powi(-n)).collect();
            GridFunction::new(geom, v).expect("finite warp")
        }
    };
    RadialTT {
        geom: Arc::clone(geom),
        lambda0: mu.clone(),
        b: mu.values()[0],
        u: GridFunction::zeros(geom),
        w: GridFunction::zeros(geom),
        mu,
        potential_mismatch: 0.0,
        warnings: Vec::new(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndicialReport {
    pub s_minus: f64,
    pub s_plus: f64,
    pub radius: f64,
    pub expected: [f64; 2],
    pub fits: Vec<DecayFit>,
}

/// Fits the indicial exponents from the two homogeneous radial modes
/// (`λ = 0`): `u ~ e^t` and the decaying `u ~ e^{-nt}`. The compactified
/// coefficient `u/ρ` of `dρ` scales like `ρ^s`.
pub fn indicial_check(geom: &Arc<RadialGeometry>) -> Result<IndicialReport> {
    let m = geom.num_nodes();
    let rho_end = geom.rho[m - 1];
    if rho_end > 1e-4 {
        return Err(Error::InsufficientDecayWindow { rho_end, required: 1e-4 });
    }
    let nf = geom.n as f64;
    let g = Arc::clone(geom);
    let rhs = move |t: f64, y: &[f64; 2]| {
        let ld = g.warp_log_deriv_at(t);
        [ld * y[0] + y[1], -nf * ld * y[1]]
    };
    let opts = Dopri5Options { rtol: 1e-12, atol: 1e-300, h_init: geom.spacing() * 0.1, max_steps: 5_000_000 };
    let growing = integrate_to_points(&rhs, geom.t[0], [1.0, 0.0], &geom.t, &opts)?;
    let back: Vec<f64> = geom.t.iter().rev().copied().collect();
    let mut decaying = integrate_to_points(&rhs, geom.t[m - 1], [-1.0 / (nf + 1.0), 1.0], &back, &opts)?;
    decaying.reverse();

    let mut fits = Vec::new();
    for mode in [&growing, &decaying] {
        let coeff: Vec<f64> = mode.iter().zip(&geom.rho).map(|(y, r)| y[0] / r).collect();
        fits.push(fit_decay_rate(&GridFunction::new(geom, coeff)?));
    }
    let s_minus = fits[0].delta_hat.min(fits[1].delta_hat);
    let s_plus = fits[0].delta_hat.max(fits[1].delta_hat);
    Ok(IndicialReport {
        s_minus,
        s_plus,
        radius: 0.5 * (s_plus - s_minus),
        expected: [-2.0, nf - 1.0],
        fits,
    })
}
