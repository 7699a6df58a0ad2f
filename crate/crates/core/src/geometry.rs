//! Radial model manifolds `g = dt² + s(t)² ĝ_fiber` and the conformal-change
//! formulas evaluated on them.

use std::sync::Arc;

use serde::Serialize;

use crate::grid::GridFunction;
use crate::{conformal_laplacian_coeff, kappa, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    /// Exterior of a geodesic ball in hyperbolic space, `dt² + sinh²t dΩ²`.
    HyperbolicExterior,
    /// `T^{n-1} × (0, A]` with the metric `(dy² + g_flat)/y²`, `y = A e^{-t}`.
    ToricCollar,
    Custom,
}

/// Uniform radial grid together with the geometric profiles the solvers need.
///
/// The warping function `s` and its logarithmic derivatives are carried
/// alongside `H_r = (n-1) s'/s` so that the constraint checks and the TT
/// reduction can use exact geometry instead of differencing it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGeometry {
    pub n: usize,
    pub kind: GeometryKind,
    pub t: Vec<f64>,
    pub rho: Vec<f64>,
    #[serde(rename = "H_r")]
    pub h_r: Vec<f64>,
    pub scal: Vec<f64>,
    #[serde(rename = "H_inner")]
    pub h_inner: f64,
    /// Warping function `s(t)`.
    pub warp: Vec<f64>,
    /// `d/dt (s'/s)`.
    pub warp_log_deriv2: Vec<f64>,
    /// Sectional curvature of the unit fiber (1 for spheres, 0 for tori).
    pub fiber_curvature: f64,
}

fn uniform_nodes(t0: f64, t_end: f64, num_nodes: usize) -> Result<Vec<f64>> {
    if num_nodes < 16 {
        return Err(Error::InvalidGrid(format!(
            "num_nodes must be at least 16, got {num_nodes}"
        )));
    }
    if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
        return Err(Error::InvalidGrid(format!(
            "need finite t0 < T, got t0 = {t0}, T = {t_end}"
        )));
    }
    let h = (t_end - t0) / (num_nodes - 1) as f64;
    let mut t: Vec<f64> = (0..num_nodes).map(|i| t0 + i as f64 * h).collect();
    t[num_nodes - 1] = t_end;
    Ok(t)
}

fn check_dimension(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidGrid(format!("dimension must be >= 3, got {n}")));
    }
    Ok(())
}

/// Exterior `{t ≥ t0}` of a geodesic ball in hyperbolic space, truncated at `T`.
pub fn make_hyperbolic_exterior(
    n: usize,
    t0: f64,
    t_end: f64,
    num_nodes: usize,
) -> Result<Arc<RadialGeometry>> {
    check_dimension(n)?;
    if !(t0 > 0.0) {
        return Err(Error::InvalidGrid(format!("t0 must be positive, got {t0}")));
    }
    let t = uniform_nodes(t0, t_end, num_nodes)?;
    let nf = n as f64;
    let h_r: Vec<f64> = t.iter().map(|&t| (nf - 1.0) / t.tanh()).collect();
    let geom = RadialGeometry {
        n,
        kind: GeometryKind::HyperbolicExterior,
        rho: t.iter().map(|&t| (-t).exp()).collect(),
        h_inner: h_r[0],
        h_r,
        scal: vec![-nf * (nf - 1.0); t.len()],
        warp: t.iter().map(|&t| t.sinh()).collect(),
        warp_log_deriv2: t.iter().map(|&t| -1.0 / t.sinh().powi(2)).collect(),
        fiber_curvature: 1.0,
        t,
    };
    Ok(Arc::new(geom))
}

/// Toric collar `T^{n-1} × (0, A]` with inner boundary `y = A` at `t = 0`.
pub fn make_toric_collar(
    n: usize,
    a: f64,
    t_end: f64,
    num_nodes: usize,
) -> Result<Arc<RadialGeometry>> {
    check_dimension(n)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidGrid(format!("A must be positive, got {a}")));
    }
    let t = uniform_nodes(0.0, t_end, num_nodes)?;
    let nf = n as f64;
    let len = t.len();
    let geom = RadialGeometry {
        n,
        kind: GeometryKind::ToricCollar,
        rho: t.iter().map(|&t| a * (-t).exp()).collect(),
        h_r: vec![nf - 1.0; len],
        h_inner: nf - 1.0,
        scal: vec![-nf * (nf - 1.0); len],
        warp: t.iter().map(|&t| t.exp() / a).collect(),
        warp_log_deriv2: vec![0.0; len],
        fiber_curvature: 0.0,
        t,
    };
    Ok(Arc::new(geom))
}

/// Geometry from user profiles. The grid must be uniform; the warping
/// function is recovered by integrating `H_r/(n-1)` with `s(t0) = 1`.
pub fn make_custom(
    n: usize,
    t: Vec<f64>,
    rho: Vec<f64>,
    h_r: Vec<f64>,
    scal: Vec<f64>,
    fiber_curvature: f64,
) -> Result<Arc<RadialGeometry>> {
    check_dimension(n)?;
    let len = t.len();
    if len < 16 {
        return Err(Error::InvalidGrid(format!("need at least 16 nodes, got {len}")));
    }
    if rho.len() != len || h_r.len() != len || scal.len() != len {
        return Err(Error::InvalidGrid("profile lengths differ from t".into()));
    }
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !(finite(&t) && finite(&rho) && finite(&h_r) && finite(&scal) && fiber_curvature.is_finite())
    {
        return Err(Error::InvalidGrid("non-finite profile value".into()));
    }
    let h = (t[len - 1] - t[0]) / (len - 1) as f64;
    for i in 1..len {
        if t[i] <= t[i - 1] {
            return Err(Error::InvalidGrid(format!("t not increasing at node {i}")));
        }
        if ((t[i] - t[i - 1]) - h).abs() > 1e-9 * h {
            return Err(Error::InvalidGrid(format!("t not uniform at node {i}")));
        }
        if rho[i] >= rho[i - 1] {
            return Err(Error::InvalidGrid(format!("rho not decreasing at node {i}")));
        }
    }
    if let Some(i) = rho.iter().position(|&r| r <= 0.0) {
        return Err(Error::InvalidGrid(format!("rho not positive at node {i}")));
    }
    let nf = n as f64;
    let logd: Vec<f64> = h_r.iter().map(|&x| x / (nf - 1.0)).collect();
    let mut warp = vec![1.0; len];
    let mut log_s = 0.0;
    for i in 1..len {
        log_s += 0.5 * h * (logd[i] + logd[i - 1]);
        warp[i] = log_s.exp();
    }
    let warp_log_deriv2 = first_derivative(&logd, h);
    Ok(Arc::new(RadialGeometry {
        n,
        kind: GeometryKind::Custom,
        h_inner: h_r[0],
        t,
        rho,
        h_r,
        scal,
        warp,
        warp_log_deriv2,
        fiber_curvature,
    }))
}

/// Second-order first derivative: central inside, one-sided three-point at
/// the ends.
pub(crate) fn first_derivative(u: &[f64], h: f64) -> Vec<f64> {
    let m = u.len();
    let mut d = vec![0.0; m];
    for i in 1..m - 1 {
        d[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    }
    d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    d[m - 1] = (3.0 * u[m - 1] - 4.0 * u[m - 2] + u[m - 3]) / (2.0 * h);
    d
}

/// Second-order second derivative; the ends use the four-point one-sided
/// stencil.
pub(crate) fn second_derivative(u: &[f64], h: f64) -> Vec<f64> {
    let m = u.len();
    let h2 = h * h;
    let mut d = vec![0.0; m];
    for i in 1..m - 1 {
        d[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
    }
    d[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2;
    d[m - 1] = (2.0 * u[m - 1] - 5.0 * u[m - 2] + 4.0 * u[m - 3] - u[m - 4]) / h2;
    d
}

impl RadialGeometry {
    pub fn num_nodes(&self) -> usize {
        self.t.len()
    }

    /// Grid spacing `h`.
    pub fn spacing(&self) -> f64 {
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }

    /// `s'/s = H_r/(n-1)`.
    pub fn warp_log_deriv(&self, i: usize) -> f64 {
        self.h_r[i] / (self.n as f64 - 1.0)
    }

    /// Discrete radial Laplacian `u'' + H_r u'` at an interior node.
    pub fn laplacian_at(&self, u: &[f64], i: usize) -> f64 {
        let h = self.spacing();
        (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h) + self.h_r[i] * (u[i + 1] - u[i - 1]) / (2.0 * h)
    }

    /// `∂_ν u = -u'(t0)` with the three-point one-sided stencil; `ν` is the
    /// unit normal pointing out of M at the inner boundary.
    pub fn normal_derivative(&self, u: &[f64]) -> f64 {
        let h = self.spacing();
        -(-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    }

    pub fn derivative(&self, u: &[f64]) -> Vec<f64> {
        first_derivative(u, self.spacing())
    }

    pub fn second_derivative(&self, u: &[f64]) -> Vec<f64> {
        second_derivative(u, self.spacing())
    }

    /// `s'/s` at an arbitrary `t` in the grid range (exact for the built-in
    /// models, linear interpolation of `H_r` otherwise).
    pub fn warp_log_deriv_at(&self, t: f64) -> f64 {
        match self.kind {
            GeometryKind::HyperbolicExterior => 1.0 / t.tanh(),
            GeometryKind::ToricCollar => 1.0,
            GeometryKind::Custom => {
                let h = self.spacing();
                let m = self.num_nodes();
                let x = ((t - self.t[0]) / h).clamp(0.0, (m - 1) as f64);
                let i = (x.floor() as usize).min(m - 2);
                let w = x - i as f64;
                ((1.0 - w) * self.h_r[i] + w * self.h_r[i + 1]) / (self.n as f64 - 1.0)
            }
        }
    }

    /// Largest `h` keeping the interior rows an M-matrix.
    pub fn max_admissible_spacing(&self) -> f64 {
        let hmax = self.h_r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if hmax == 0.0 {
            f64::INFINITY
        } else {
            2.0 / hmax
        }
    }
}

/// Scalar curvature of `φ^κ g`. Interior nodes use the discrete Laplacian;
/// the two end nodes are filled by cubic extrapolation and listed in
/// `extrapolated_nodes`.
#[derive(Debug, Clone)]
pub struct ConformalScalar {
    pub scal: GridFunction,
    pub extrapolated_nodes: [usize; 2],
}

fn check_positive(phi: &[f64], what: &'static str) -> Result<()> {
    if let Some((i, &v)) = phi.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositive { what, node: i, value: v });
    }
    Ok(())
}

pub fn conformal_scalar_curvature(
    geom: &Arc<RadialGeometry>,
    phi: &GridFunction,
) -> Result<ConformalScalar> {
    phi.check_geometry(geom)?;
    let p = phi.values();
    check_positive(p, "phi")?;
    let k = kappa(geom.n);
    let c = conformal_laplacian_coeff(geom.n);
    let m = p.len();
    let mut out = vec![0.0; m];
    for i in 1..m - 1 {
        let lap = geom.laplacian_at(p, i);
        out[i] = p[i].powf(-k - 1.0) * (-c * lap + geom.scal[i] * p[i]);
    }
    out[0] = 3.0 * out[1] - 3.0 * out[2] + out[3];
    out[m - 1] = 3.0 * out[m - 2] - 3.0 * out[m - 3] + out[m - 4];
    Ok(ConformalScalar {
        scal: GridFunction::new(geom, out)?,
        extrapolated_nodes: [0, m - 1],
    })
}

/// Scalar curvature of `φ₂^κ (φ₁^κ g)` computed from the already rescaled
/// curvature `scal1` of `φ₁^κ g`, using the Laplacian of the rescaled metric
/// `Δ₁ f = φ₁^{-κ}(Δf + 2⟨∇φ₁, ∇f⟩/φ₁)`.
pub fn rescale_scalar_curvature(
    geom: &Arc<RadialGeometry>,
    phi1: &GridFunction,
    scal1: &GridFunction,
    phi2: &GridFunction,
) -> Result<ConformalScalar> {
    phi1.check_geometry(geom)?;
    phi2.check_geometry(geom)?;
    scal1.check_geometry(geom)?;
    let (p1, p2, s1) = (phi1.values(), phi2.values(), scal1.values());
    check_positive(p1, "phi1")?;
    check_positive(p2, "phi2")?;
    let k = kappa(geom.n);
    let c = conformal_laplacian_coeff(geom.n);
    let h = geom.spacing();
    let m = p1.len();
    let mut out = vec![0.0; m];
    for i in 1..m - 1 {
        let d1 = (p1[i + 1] - p1[i - 1]) / (2.0 * h);
        let d2 = (p2[i + 1] - p2[i - 1]) / (2.0 * h);
        let lap1 = p1[i].powf(-k) * (geom.laplacian_at(p2, i) + 2.0 * d1 * d2 / p1[i]);
        out[i] = p2[i].powf(-k - 1.0) * (-c * lap1 + s1[i] * p2[i]);
    }
    out[0] = 3.0 * out[1] - 3.0 * out[2] + out[3];
    out[m - 1] = 3.0 * out[m - 2] - 3.0 * out[m - 3] + out[m - 4];
    Ok(ConformalScalar {
        scal: GridFunction::new(geom, out)?,
        extrapolated_nodes: [0, m - 1],
    })
}

/// Which coefficient multiplies `∇_N φ/φ` in the boundary mean-curvature
/// transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanCurvatureConvention {
    /// `2(n-1)/(n-2)`, the coefficient of the apparent-horizon derivation
    /// and of the transformation law of the second fundamental form.
    #[default]
    Geometric,
    /// `2/(n-1)` as printed in the mean-curvature prescription theorem.
    AsStated,
}

impl MeanCurvatureConvention {
    /// Coefficient `c` in `Ĥ = φ^{-κ/2}(H + c ∇_N φ/φ)`.
    pub fn gradient_coeff(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Self::Geometric => 2.0 * (n - 1.0) / (n - 2.0),
            Self::AsStated => 2.0 / (n - 1.0),
        }
    }
}

/// Mean curvature of the inner boundary for `φ^κ g`, with respect to the
/// normal pointing into M.
pub fn conformal_mean_curvature(geom: &RadialGeometry, phi: &GridFunction) -> Result<f64> {
    conformal_mean_curvature_with(geom, phi, MeanCurvatureConvention::Geometric)
}

pub fn conformal_mean_curvature_with(
    geom: &RadialGeometry,
    phi: &GridFunction,
    convention: MeanCurvatureConvention,
) -> Result<f64> {
    let p = phi.values();
    if p.len() != geom.num_nodes() {
        return Err(Error::InvalidInput("phi length differs from the grid".into()));
    }
    if !(p[0] > 0.0) {
        return Err(Error::NonPositive { what: "boundary phi", node: 0, value: p[0] });
    }
    let dn = -geom.normal_derivative(p);
    let k = kappa(geom.n);
    Ok(p[0].powf(-k / 2.0) * (geom.h_inner + convention.gradient_coeff(geom.n) * dn / p[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hyperbolic_profiles() {
        let g = make_hyperbolic_exterior(3, 1.0, 10.0, 512).unwrap();
        let expected = 2.0 * 1f64.cosh() / 1f64.sinh();
        assert_relative_eq!(g.h_r[0], expected, max_relative = 1e-15);
        assert_relative_eq!(g.h_r[0], 2.626_070_571, epsilon = 1e-9);
        assert!(g.scal.iter().all(|&s| s == -6.0));
        assert_eq!(g.h_inner, g.h_r[0]);
        assert_relative_eq!(g.rho[0], (-1.0f64).exp());
    }

    #[test]
    fn hyperbolic_far_mean_curvature_tends_to_n_minus_one() {
        let g = make_hyperbolic_exterior(4, 30.0, 40.0, 64).unwrap();
        assert!((g.h_r[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn toric_profiles() {
        let g = make_toric_collar(3, 1.0, 12.0, 512).unwrap();
        assert!(g.h_r.iter().all(|&x| x == 2.0));
        let g5 = make_toric_collar(5, 0.7, 12.0, 64).unwrap();
        assert_eq!(g5.h_inner, 4.0);
        assert_eq!(g5.rho[0], 0.7);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_hyperbolic_exterior(3, 0.0, 10.0, 64).is_err());
        assert!(make_hyperbolic_exterior(3, 1.0, 10.0, 15).is_err());
        assert!(make_hyperbolic_exterior(2, 1.0, 10.0, 64).is_err());
        assert!(make_hyperbolic_exterior(3, 2.0, 1.0, 64).is_err());
        assert!(make_toric_collar(3, -1.0, 10.0, 64).is_err());
    }

    #[test]
    fn custom_recovers_hyperbolic_warp() {
        let g = make_hyperbolic_exterior(3, 1.0, 5.0, 2001).unwrap();
        let c = make_custom(3, g.t.clone(), g.rho.clone(), g.h_r.clone(), g.scal.clone(), 1.0)
            .unwrap();
        let ratio = g.warp[0];
        for i in 0..g.num_nodes() {
            assert_relative_eq!(c.warp[i] * ratio, g.warp[i], max_relative = 1e-6);
        }
        assert!(make_custom(3, vec![0.0; 20], vec![1.0; 20], vec![1.0; 20], vec![1.0; 20], 0.0)
            .is_err());
    }

    #[test]
    fn serializes_documented_fields() {
        let g = make_toric_collar(3, 1.0, 2.0, 16).unwrap();
        let v = serde_json::to_value(&*g).unwrap();
        for key in ["n", "kind", "t", "rho", "H_r", "scal"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["kind"], "toric_collar");
    }

    #[test]
    fn scalar_curvature_of_unit_factor() {
        let g = make_hyperbolic_exterior(3, 1.0, 8.0, 256).unwrap();
        let one = GridFunction::constant(&g, 1.0);
        let s = conformal_scalar_curvature(&g, &one).unwrap();
        for &v in s.scal.values() {
            assert_relative_eq!(v, -6.0, max_relative = 1e-12);
        }
        assert_eq!(s.extrapolated_nodes, [0, 255]);
    }

    #[test]
    fn scalar_curvature_rejects_nonpositive() {
        let g = make_hyperbolic_exterior(3, 1.0, 8.0, 64).unwrap();
        let mut v = vec![1.0; 64];
        v[10] = 0.0;
        let phi = GridFunction::new(&g, v).unwrap();
        assert!(matches!(
            conformal_scalar_curvature(&g, &phi),
            Err(Error::NonPositive { node: 10, .. })
        ));
    }

    // Δρ^δ = δ(δ-n+1)ρ^δ + O(ρ^{δ+2}) on the hyperbolic model, so
    // Ŝcal(1 + ερ^δ) = -n(n-1) + ε c (δ+1)(n-δ) ρ^δ + O(ε²) + O(ερ^{δ+2}).
    #[test]
    fn linearized_scalar_curvature_near_infinity() {
        let n = 3usize;
        let delta = 1.5;
        let eps = 1e-4;
        let g = make_hyperbolic_exterior(n, 1.0, 14.0, 4001).unwrap();
        let phi = GridFunction::from_fn(&g, |_, r| 1.0 + eps * r.powf(delta));
        let s = conformal_scalar_curvature(&g, &phi).unwrap();
        let nf = n as f64;
        let c = conformal_laplacian_coeff(n);
        for i in (923..1846).step_by(97) {
            let r = g.rho[i];
            let pred = -nf * (nf - 1.0) + eps * c * (delta + 1.0) * (nf - delta) * r.powf(delta);
            let dev = (s.scal.values()[i] - pred) / (eps * r.powf(delta));
            assert!(dev.abs() < 1e-2 * c * (delta + 1.0) * (nf - delta), "node {i}: {dev}");
        }
    }

    #[test]
    fn mean_curvature_examples() {
        let g = make_hyperbolic_exterior(3, 1.0, 10.0, 512).unwrap();
        let one = GridFunction::constant(&g, 1.0);
        assert_eq!(conformal_mean_curvature(&g, &one).unwrap(), g.h_inner);
        let c = GridFunction::constant(&g, 3.0);
        assert_relative_eq!(
            conformal_mean_curvature(&g, &c).unwrap(),
            g.h_inner / 9.0,
            max_relative = 1e-14
        );
        let lin = GridFunction::from_fn(&g, |t, _| 1.0 + (t - 1.0));
        let expected = 2.0 / 1f64.tanh() + 4.0;
        assert_relative_eq!(conformal_mean_curvature(&g, &lin).unwrap(), expected, max_relative = 1e-12);
        let stated = conformal_mean_curvature_with(&g, &lin, MeanCurvatureConvention::AsStated).unwrap();
        assert_relative_eq!(stated, 2.0 / 1f64.tanh() + 1.0, max_relative = 1e-12);
    }
}
