//! Grid functions, the weighted sup norm and log-log decay fits.

use std::io::{self, Write};
use std::ops::Range;
use std::sync::Arc;

use serde::Serialize;

use crate::geometry::RadialGeometry;
use crate::{Error, Result};

/// Values on the nodes of a [`RadialGeometry`].
#[derive(Debug, Clone)]
pub struct GridFunction {
    geom: Arc<RadialGeometry>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(geom: &Arc<RadialGeometry>, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.num_nodes() {
            return Err(Error::InvalidInput(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                geom.num_nodes()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {i}")));
        }
        Ok(Self { geom: Arc::clone(geom), values })
    }

    /// Samples `f(t, ρ)` on the nodes.
    ///
    /// # Panics
    /// If `f` returns a non-finite value.
    pub fn from_fn(geom: &Arc<RadialGeometry>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = geom.t.iter().zip(&geom.rho).map(|(&t, &r)| f(t, r)).collect();
        Self::new(geom, values).expect("from_fn produced a non-finite value")
    }

    pub fn constant(geom: &Arc<RadialGeometry>, c: f64) -> Self {
        Self::from_fn(geom, |_, _| c)
    }

    pub fn zeros(geom: &Arc<RadialGeometry>) -> Self {
        Self::constant(geom, 0.0)
    }

    pub fn geom(&self) -> &Arc<RadialGeometry> {
        &self.geom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_geometry(&self, geom: &Arc<RadialGeometry>) -> Result<()> {
        if Arc::ptr_eq(&self.geom, geom) || *self.geom == **geom {
            Ok(())
        } else {
            Err(Error::InvalidInput("grid function belongs to another geometry".into()))
        }
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.geom, &other.geom) || *self.geom == *other.geom
    }

    /// # Panics
    /// If `f` returns a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self::new(&self.geom, values).expect("map produced a non-finite value")
    }

    /// # Panics
    /// If the grids differ or `f` returns a non-finite value.
    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.same_grid(other), "grid functions on different geometries");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::new(&self.geom, values).expect("zip_map produced a non-finite value")
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// One row per node: `t,rho,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,rho,value")?;
        for ((t, r), v) in self.geom.t.iter().zip(&self.geom.rho).zip(&self.values) {
            writeln!(w, "{t:e},{r:e},{v:e}")?;
        }
        Ok(())
    }
}

/// `max_i ρ_i^{-δ}|f_i|`.
pub fn weighted_sup_norm(f: &GridFunction, delta: f64) -> f64 {
    f.values
        .iter()
        .zip(&f.geom.rho)
        .fold(0.0, |m, (&v, &r)| m.max(r.powf(-delta) * v.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `log|f|` against `log ρ`; `+∞` when `f` vanishes on the window.
    pub delta_hat: f64,
    pub r2: f64,
    pub window: Range<usize>,
}

impl DecayFit {
    pub fn is_zero_marker(&self) -> bool {
        self.delta_hat == f64::INFINITY
    }
}

/// Node range of a fit: drops the 10% of nodes nearest each end.
pub fn fit_window(num_nodes: usize) -> Range<usize> {
    let skip = (num_nodes + 9) / 10;
    skip..num_nodes - skip
}

/// Least-squares slope of `log|f|` against `log ρ` over [`fit_window`].
/// Nodes where `f` is exactly zero are skipped.
pub fn fit_decay_rate(f: &GridFunction) -> DecayFit {
    let window = fit_window(f.len());
    let pts: Vec<(f64, f64)> = window
        .clone()
        .filter(|&i| f.values[i] != 0.0)
        .map(|i| (f.geom.rho[i].ln(), f.values[i].abs().ln()))
        .collect();
    if pts.len() < 2 {
        return DecayFit { delta_hat: f64::INFINITY, r2: 0.0, window };
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / m, b + y / m));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let ss_res: f64 = pts.iter().map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    DecayFit { delta_hat: slope, r2, window }
}
