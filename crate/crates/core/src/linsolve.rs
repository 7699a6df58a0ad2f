//! The linear Robin problem `-Δu + Au = g`, `∂_ν u + Au = h` at the inner
//! boundary, `u = u_outer` at the truncation.

use std::sync::Arc;

use crate::geometry::RadialGeometry;
use crate::grid::{weighted_sup_norm, GridFunction};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LinearRobinProblem {
    pub geom: Arc<RadialGeometry>,
    pub a: f64,
    pub g: GridFunction,
    pub h: f64,
    pub u_outer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerRow {
    /// `∂_ν u + A u` with the given `A`.
    Robin { a: f64 },
    /// `u`.
    Dirichlet,
}

/// Tridiagonal system after eliminating the second superdiagonal entry of
/// the one-sided boundary stencil. Right-hand sides are given in the
/// original row form; [`TridiagonalSystem::solve`] applies the elimination.
#[derive(Debug, Clone)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    /// Row 0 of the eliminated system is `row0 - elim * row1`.
    pub elim: f64,
    /// Original boundary row `(u0, u1, u2)` coefficients.
    pub row0: [f64; 3],
    // Thomas factorization
    cp: Vec<f64>,
    denom: Vec<f64>,
}

/// Largest `A` for which the eliminated Robin row keeps a non-positive
/// off-diagonal.
pub fn max_robin_coefficient(geom: &RadialGeometry) -> f64 {
    let h = geom.spacing();
    let x = geom.h_r[1] * h / 2.0;
    (2.0 + 4.0 * x) / (h * h)
}

pub(crate) fn assemble_operator(
    geom: &RadialGeometry,
    a: f64,
    inner: InnerRow,
) -> Result<TridiagonalSystem> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::NotMMatrix {
            row: 1,
            detail: format!("A = {a}; any A > 0 makes the interior rows strictly dominant"),
        });
    }
    let h = geom.spacing();
    let hmax_allowed = geom.max_admissible_spacing();
    if !(h < hmax_allowed) {
        return Err(Error::GridTooCoarse { h, required_h: hmax_allowed });
    }
    let m = geom.num_nodes();
    let h2 = h * h;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for i in 1..m - 1 {
        let adv = geom.h_r[i] / (2.0 * h);
        lower[i] = -(1.0 / h2 - adv);
        diag[i] = 2.0 / h2 + a;
        upper[i] = -(1.0 / h2 + adv);
    }
    diag[m - 1] = 1.0;

    let (row0, elim) = match inner {
        InnerRow::Dirichlet => {
            diag[0] = 1.0;
            ([1.0, 0.0, 0.0], 0.0)
        }
        InnerRow::Robin { a: ab } => {
            let row0 = [3.0 / (2.0 * h) + ab, -2.0 / h, 1.0 / (2.0 * h)];
            let elim = row0[2] / upper[1];
            diag[0] = row0[0] - elim * lower[1];
            upper[0] = row0[1] - elim * diag[1];
            if upper[0] > 0.0 {
                return Err(Error::NotMMatrix {
                    row: 0,
                    detail: format!(
                        "boundary coefficient A = {ab} too large for h = {h}; need A <= {}",
                        max_robin_coefficient(geom)
                    ),
                });
            }
            (row0, elim)
        }
    };

    for i in 0..m {
        let off = lower[i].abs() + upper[i].abs();
        if lower[i] > 0.0 || upper[i] > 0.0 || !(diag[i] > off) {
            return Err(Error::NotMMatrix {
                row: i,
                detail: format!(
                    "diag {} lower {} upper {} (need non-positive off-diagonals and strict dominance)",
                    diag[i], lower[i], upper[i]
                ),
            });
        }
    }

    let mut cp = vec![0.0; m];
    let mut denom = vec![0.0; m];
    denom[0] = diag[0];
    cp[0] = upper[0] / denom[0];
    for i in 1..m {
        denom[i] = diag[i] - lower[i] * cp[i - 1];
        cp[i] = upper[i] / denom[i];
    }
    Ok(TridiagonalSystem { lower, diag, upper, elim, row0, cp, denom })
}

impl TridiagonalSystem {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    /// Solves with a right-hand side in original row form.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.size();
        assert_eq!(rhs.len(), m);
        let mut d = vec![0.0; m];
        d[0] = (rhs[0] - self.elim * rhs[1]) / self.denom[0];
        for i in 1..m {
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / self.denom[i];
        }
        for i in (0..m - 1).rev() {
            d[i] -= self.cp[i] * d[i + 1];
        }
        d
    }

    /// Original (non-eliminated) operator applied to `u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let m = self.size();
        let mut out = vec![0.0; m];
        out[0] = self.row0[0] * u[0] + self.row0[1] * u[1] + self.row0[2] * u[2];
        for i in 1..m - 1 {
            out[i] = self.lower[i] * u[i - 1] + self.diag[i] * u[i] + self.upper[i] * u[i + 1];
        }
        out[m - 1] = self.diag[m - 1] * u[m - 1];
        out
    }
}

fn rhs_of(problem: &LinearRobinProblem) -> Vec<f64> {
    let mut rhs = problem.g.values().to_vec();
    let m = rhs.len();
    rhs[0] = problem.h;
    rhs[m - 1] = problem.u_outer;
    rhs
}

pub fn assemble(problem: &LinearRobinProblem) -> Result<TridiagonalSystem> {
    problem.g.check_geometry(&problem.geom)?;
    assemble_operator(&problem.geom, problem.a, InnerRow::Robin { a: problem.a })
}

pub fn solve(problem: &LinearRobinProblem) -> Result<GridFunction> {
    let sys = assemble(problem)?;
    let u = sys.solve(&rhs_of(problem));
    GridFunction::new(&problem.geom, u)
}

/// Componentwise backward error `max_i |(Mu - b)_i| / (|M||u| + |b|)_i`.
pub fn relative_residual(problem: &LinearRobinProblem, u: &GridFunction) -> Result<f64> {
    let sys = assemble(problem)?;
    let rhs = rhs_of(problem);
    let au = sys.apply(u.values());
    let abs_sys = TridiagonalSystem {
        lower: sys.lower.iter().map(|v| v.abs()).collect(),
        diag: sys.diag.iter().map(|v| v.abs()).collect(),
        upper: sys.upper.iter().map(|v| v.abs()).collect(),
        row0: sys.row0.map(f64::abs),
        ..sys.clone()
    };
    let abs_u: Vec<f64> = u.values().iter().map(|v| v.abs()).collect();
    let scale = abs_sys.apply(&abs_u);
    Ok((0..rhs.len())
        .map(|i| {
            let s = scale[i] + rhs[i].abs();
            if s == 0.0 {
                0.0
            } else {
                (au[i] - rhs[i]).abs() / s
            }
        })
        .fold(0.0, f64::max))
}

/// Boundary constant `B = ρ^δ A + δ ρ^{δ-1} ∂_ν ρ` at the inner boundary.
pub fn boundary_constant(problem: &LinearRobinProblem, delta: f64) -> f64 {
    let g = &problem.geom;
    let r0 = g.rho[0];
    let dn_rho = g.normal_derivative(&g.rho);
    r0.powf(delta) * problem.a + delta * r0.powf(delta - 1.0) * dn_rho
}

/// A-priori bound `(2/A)‖g‖_δ + |h|/B + |u_outer| ρ(T)^{-δ}` for `‖u‖_δ`.
pub fn apriori_bound(problem: &LinearRobinProblem, delta: f64) -> f64 {
    let b = boundary_constant(problem, delta);
    let rho_end = problem.geom.rho[problem.geom.num_nodes() - 1];
    let mut interior = problem.g.values().to_vec();
    let m = interior.len();
    interior[0] = 0.0;
    interior[m - 1] = 0.0;
    let g_in = GridFunction::new(&problem.geom, interior).expect("finite by construction");
    let boundary = if problem.h == 0.0 {
        0.0
    } else if b > 0.0 {
        problem.h.abs() / b
    } else {
        f64::INFINITY
    };
    2.0 / problem.a * weighted_sup_norm(&g_in, delta)
        + boundary
        + problem.u_outer.abs() * rho_end.powf(-delta)
}
