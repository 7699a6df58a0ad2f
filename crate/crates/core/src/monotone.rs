//! Monotone sub/super-solution iteration for
//! `-Δφ = F(φ)`, `∂_ν φ = f(φ)` (or Dirichlet) with `φ(T)` pinned.
//!
//! Starting from `φ₀ = φ+`, each step solves the linear problem
//! `(-Δ + A)φ_{i+1} = Aφ_i + F(φ_i)`. It is carried out in defect form,
//! `M(φ_{i+1} - φ_i) = -R(φ_i)` with `R` the nonlinear residual, which is the
//! same iteration but keeps the update accurate near round-off.

use std::sync::Arc;

use serde::Serialize;

use crate::geometry::RadialGeometry;
use crate::grid::GridFunction;
use crate::linsolve::{assemble_operator, InnerRow, TridiagonalSystem};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReactionTerm {
    pub coeff: GridFunction,
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryReaction {
    pub coeff: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InnerBoundary {
    Dirichlet(f64),
    /// `∂_ν φ = Σ c_j φ^{γ_j}`.
    Robin(Vec<BoundaryReaction>),
}

#[derive(Debug, Clone)]
pub struct NonlinearProblem {
    pub geom: Arc<RadialGeometry>,
    pub interior: Vec<ReactionTerm>,
    pub boundary: InnerBoundary,
    pub outer_value: f64,
    pub phi_minus: GridFunction,
    pub phi_plus: GridFunction,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub sup_diff_history: Vec<f64>,
    pub bracket_violation: f64,
    #[serde(rename = "A_used")]
    pub a_used: f64,
    pub final_residual: f64,
    pub barrier_warnings: Vec<String>,
}

#[inline]
fn pow(x: f64, b: f64) -> f64 {
    if b == 1.0 {
        x
    } else {
        x.max(0.0).powf(b)
    }
}

impl NonlinearProblem {
    fn validate(&self) -> Result<()> {
        for gf in [&self.phi_minus, &self.phi_plus] {
            gf.check_geometry(&self.geom)?;
        }
        for term in &self.interior {
            term.coeff.check_geometry(&self.geom)?;
            if !term.exponent.is_finite() {
                return Err(Error::InvalidInput("non-finite reaction exponent".into()));
            }
        }
        if let InnerBoundary::Robin(terms) = &self.boundary {
            if terms.iter().any(|t| !(t.coeff.is_finite() && t.exponent.is_finite())) {
                return Err(Error::InvalidInput("non-finite boundary reaction".into()));
            }
        }
        let lo = self.phi_minus.values();
        let hi = self.phi_plus.values();
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(Error::InvalidInput(format!(
                "phi_minus > phi_plus at node {i} ({} > {})",
                lo[i], hi[i]
            )));
        }
        if self.has_negative_exponent() {
            if let Some(i) = lo.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::NonPositive { what: "phi_minus (negative exponents present)", node: i, value: lo[i] });
            }
        }
        Ok(())
    }

    fn has_negative_exponent(&self) -> bool {
        self.interior.iter().any(|t| t.exponent < 0.0)
            || matches!(&self.boundary, InnerBoundary::Robin(ts) if ts.iter().any(|t| t.exponent < 0.0))
    }

    /// `F(p_i, φ)`.
    pub fn interior_reaction(&self, i: usize, phi: f64) -> f64 {
        self.interior.iter().map(|t| t.coeff.values()[i] * pow(phi, t.exponent)).sum()
    }

    /// `f(φ)` at the inner boundary (zero for Dirichlet problems).
    pub fn boundary_reaction(&self, phi: f64) -> f64 {
        match &self.boundary {
            InnerBoundary::Dirichlet(_) => 0.0,
            InnerBoundary::Robin(ts) => ts.iter().map(|t| t.coeff * pow(phi, t.exponent)).sum(),
        }
    }

    /// Node-wise residual: `∂_ν φ - f(φ)` (or `φ - φ₀`) at node 0,
    /// `-Δφ - F(φ)` inside, `φ - outer_value` at the last node.
    pub fn residual(&self, phi: &[f64]) -> Vec<f64> {
        let g = &*self.geom;
        let m = phi.len();
        let mut r = vec![0.0; m];
        r[0] = match &self.boundary {
            InnerBoundary::Dirichlet(v) => phi[0] - v,
            InnerBoundary::Robin(_) => g.normal_derivative(phi) - self.boundary_reaction(phi[0]),
        };
        for i in 1..m - 1 {
            r[i] = -g.laplacian_at(phi, i) - self.interior_reaction(i, phi[i]);
        }
        r[m - 1] = phi[m - 1] - self.outer_value;
        r
    }

    fn inner_row(&self, a: f64) -> InnerRow {
        match self.boundary {
            InnerBoundary::Dirichlet(_) => InnerRow::Dirichlet,
            InnerBoundary::Robin(_) => InnerRow::Robin { a },
        }
    }
}

/// Number of samples per bracket interval when bounding `-∂F/∂φ`.
const DERIVATIVE_SAMPLES: usize = 1024;

/// Smallest `A ≥ 1` making `φ ↦ Aφ + F` and `φ ↦ Aφ + f` nondecreasing on
/// `[min φ-, max φ+]`, from dense sampling with a 10% margin.
pub fn choose_a(problem: &NonlinearProblem) -> Result<f64> {
    problem.validate()?;
    let lo = problem.phi_minus.min();
    let hi = problem.phi_plus.max();
    if hi < lo {
        return Err(Error::BracketDegenerate { lower: lo, upper: hi });
    }
    let m = problem.geom.num_nodes();
    let mut worst = 0.0f64;
    let mut powers = vec![0.0; problem.interior.len()];
    let mut acc = vec![0.0; m];
    for s in 0..DERIVATIVE_SAMPLES {
        let x = if hi == lo { lo } else { lo + (hi - lo) * s as f64 / (DERIVATIVE_SAMPLES - 1) as f64 };
        for (p, t) in powers.iter_mut().zip(&problem.interior) {
            *p = t.exponent * pow(x, t.exponent - 1.0);
        }
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (p, t) in powers.iter().zip(&problem.interior) {
            if *p == 0.0 {
                continue;
            }
            for (a, c) in acc.iter_mut().zip(t.coeff.values()) {
                *a -= c * p;
            }
        }
        // interior nodes only: the end rows are not reaction rows
        for &v in &acc[1..m - 1] {
            worst = worst.max(v);
        }
        if let InnerBoundary::Robin(ts) = &problem.boundary {
            let d: f64 = ts.iter().map(|t| -t.coeff * t.exponent * pow(x, t.exponent - 1.0)).sum();
            worst = worst.max(d);
        }
    }
    if !worst.is_finite() {
        return Err(Error::InvalidInput(
            "reaction derivative unbounded on the bracket; raise the bracket floor".into(),
        ));
    }
    Ok((1.1 * worst).max(1.0))
}

fn barrier_warnings(problem: &NonlinearProblem) -> Vec<String> {
    let h = problem.geom.spacing();
    let slack = 10.0 * h * h;
    let mut out = Vec::new();
    for (name, gf, sign) in [("super", &problem.phi_plus, 1.0), ("sub", &problem.phi_minus, -1.0)] {
        let p = gf.values();
        let mut r = problem.residual(p);
        let m = r.len();
        if let InnerBoundary::Dirichlet(v) = problem.boundary {
            r[0] = p[0] - v;
        }
        r[m - 1] = p[m - 1] - problem.outer_value;
        let bad: Vec<usize> = (0..m).filter(|&i| sign * r[i] < -slack).collect();
        if !bad.is_empty() {
            let msg = format!(
                "{name}-solution residual has the wrong sign at {} node(s), first at {} ({:e})",
                bad.len(),
                bad[0],
                r[bad[0]]
            );
            log::warn!("{msg}");
            out.push(msg);
        }
    }
    out
}

/// Round-off floor for the nonlinear residual of profiles of size `scale`.
fn residual_floor(geom: &RadialGeometry, a: f64, scale: f64) -> f64 {
    let h = geom.spacing();
    let hmax = geom.h_r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    8.0 * f64::EPSILON * (4.0 / (h * h) + hmax / h + a) * scale.max(1.0)
}

pub fn iterate(problem: &NonlinearProblem, tol: f64, max_iter: usize) -> Result<(GridFunction, IterationReport)> {
    let a = choose_a(problem)?;
    iterate_with_a(problem, a, tol, max_iter)
}

/// [`iterate`] with a caller-supplied `A` (must still be admissible).
pub fn iterate_with_a(
    problem: &NonlinearProblem,
    a: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(GridFunction, IterationReport)> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    let sys: TridiagonalSystem = assemble_operator(&problem.geom, a, problem.inner_row(a))?;
    let warnings = barrier_warnings(problem);

    let scale = problem.phi_plus.sup_abs();
    let slack = 1e-10 * scale.max(1.0);
    let res_floor = residual_floor(&problem.geom, a, scale);
    let diff_floor = res_floor / a;
    let lo = problem.phi_minus.values();

    let mut phi = problem.phi_plus.values().to_vec();
    let mut r = problem.residual(&phi);
    let mut report = IterationReport {
        iterations: 0,
        residual_history: Vec::new(),
        sup_diff_history: Vec::new(),
        bracket_violation: 0.0,
        a_used: a,
        final_residual: r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        barrier_warnings: warnings,
    };
    let mut prev_diff = f64::INFINITY;
    for it in 1..=max_iter {
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let d = sys.solve(&rhs);
        let mut sup_diff = 0.0f64;
        let mut violation = 0.0f64;
        for i in 0..phi.len() {
            phi[i] += d[i];
            sup_diff = sup_diff.max(d[i].abs());
            violation = violation.max(d[i]).max(lo[i] - phi[i]);
        }
        report.bracket_violation = report.bracket_violation.max(violation);
        if violation > slack {
            return Err(Error::BracketViolation { iteration: it, amount: violation });
        }
        r = problem.residual(&phi);
        let res = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        report.iterations = it;
        report.sup_diff_history.push(sup_diff);
        report.residual_history.push(res);
        report.final_residual = res;

        let diff_tol = tol.max(diff_floor);
        let q = sup_diff / prev_diff;
        let tail_ok = sup_diff <= diff_floor || (q < 1.0 && sup_diff * q / (1.0 - q) <= diff_tol);
        if sup_diff <= diff_tol && res <= (tol * a).max(res_floor) && tail_ok {
            return Ok((GridFunction::new(&problem.geom, phi)?, report));
        }
        prev_diff = sup_diff;
    }
    Err(Error::MaxIterations {
        iterations: max_iter,
        sup_diff: report.sup_diff_history.last().copied().unwrap_or(f64::NAN),
        residual: report.final_residual,
    })
}

/// Damped Newton on the same discretization, started from `initial`.
/// Used only as an independent oracle for the monotone iteration.
pub fn newton_oracle(problem: &NonlinearProblem, initial: &GridFunction, tol: f64, max_iter: usize) -> Result<GridFunction> {
    problem.validate()?;
    let g = &*problem.geom;
    let m = g.num_nodes();
    let h = g.spacing();
    let mut phi = initial.values().to_vec();
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut r = problem.residual(&phi);
    for _ in 0..max_iter {
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for i in 1..m - 1 {
            let adv = g.h_r[i] / (2.0 * h);
            lower[i] = -(1.0 / (h * h) - adv);
            upper[i] = -(1.0 / (h * h) + adv);
            let dfi: f64 = problem
                .interior
                .iter()
                .map(|t| t.coeff.values()[i] * t.exponent * pow(phi[i], t.exponent - 1.0))
                .sum();
            diag[i] = 2.0 / (h * h) - dfi;
        }
        diag[m - 1] = 1.0;
        let mut row0 = [1.0, 0.0, 0.0];
        if let InnerBoundary::Robin(ts) = &problem.boundary {
            let df: f64 = ts.iter().map(|t| t.coeff * t.exponent * pow(phi[0], t.exponent - 1.0)).sum();
            row0 = [3.0 / (2.0 * h) - df, -2.0 / h, 1.0 / (2.0 * h)];
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let d = solve_with_corner(row0, &lower, &diag, &upper, &rhs);
        let r0 = norm(&r);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = phi.iter().zip(&d).map(|(p, d)| p + step * d).collect();
            let rt = problem.residual(&trial);
            if (norm(&rt) < r0 && trial.iter().all(|v| v.is_finite())) || step < 1e-6 {
                phi = trial;
                r = rt;
                break;
            }
            step *= 0.5;
        }
        if norm(&d) * step <= tol {
            return GridFunction::new(&problem.geom, phi);
        }
    }
    Err(Error::MaxIterations { iterations: max_iter, sup_diff: f64::NAN, residual: norm(&r) })
}

fn solve_with_corner(row0: [f64; 3], lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut a = lower.to_vec();
    let mut b = diag.to_vec();
    let mut c = upper.to_vec();
    let mut d = rhs.to_vec();
    let e = row0[2] / c[1];
    b[0] = row0[0] - e * a[1];
    c[0] = row0[1] - e * b[1];
    d[0] = rhs[0] - e * rhs[1];
    a[0] = 0.0;
    for i in 1..m {
        let w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        d[i] -= w * d[i - 1];
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d[m - 1] / b[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
    }
    x
}
