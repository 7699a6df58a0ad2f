//! JSON problem specs and `--set` overrides.

use std::sync::Arc;

use ahcurv::geometry::{make_custom, make_hyperbolic_exterior, make_toric_collar, MeanCurvatureConvention};
use ahcurv::{GridFunction, RadialGeometry};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    HyperbolicExterior {
        n: usize,
        t0: f64,
        #[serde(rename = "T")]
        t_end: f64,
        num_nodes: usize,
    },
    ToricCollar {
        n: usize,
        #[serde(rename = "A")]
        a: f64,
        #[serde(rename = "T")]
        t_end: f64,
        num_nodes: usize,
    },
    Custom {
        n: usize,
        t: Vec<f64>,
        rho: Vec<f64>,
        #[serde(rename = "H_r")]
        h_r: Vec<f64>,
        scal: Vec<f64>,
        fiber_curvature: f64,
    },
}

impl GeometrySpec {
    pub fn build(&self) -> ahcurv::Result<Arc<RadialGeometry>> {
        match self {
            GeometrySpec::HyperbolicExterior { n, t0, t_end, num_nodes } => {
                make_hyperbolic_exterior(*n, *t0, *t_end, *num_nodes)
            }
            GeometrySpec::ToricCollar { n, a, t_end, num_nodes } => make_toric_collar(*n, *a, *t_end, *num_nodes),
            GeometrySpec::Custom { n, t, rho, h_r, scal, fiber_curvature } => {
                make_custom(*n, t.clone(), rho.clone(), h_r.clone(), scal.clone(), *fiber_curvature)
            }
        }
    }

    /// Same geometry with a different node count (built-in kinds only).
    pub fn with_nodes(&self, nodes: usize) -> Option<GeometrySpec> {
        let mut g = self.clone();
        match &mut g {
            GeometrySpec::HyperbolicExterior { num_nodes, .. } | GeometrySpec::ToricCollar { num_nodes, .. } => {
                *num_nodes = nodes;
                Some(g)
            }
            GeometrySpec::Custom { .. } => None,
        }
    }
}

/// Radial profile given in closed form or node by node.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `base + coeff ρ^δ`.
    RhoPower { base: f64, coeff: f64, delta: f64 },
    /// `coeff sinh(t)^{-power}`.
    SinhPower { coeff: f64, power: f64 },
    /// `coeff e^{-rate t}`.
    ExpDecay { coeff: f64, rate: f64 },
    Values { values: Vec<f64> },
}

impl Profile {
    pub fn build(&self, geom: &Arc<RadialGeometry>) -> ahcurv::Result<GridFunction> {
        let values: Vec<f64> = match self {
            Profile::Zero => vec![0.0; geom.num_nodes()],
            Profile::Constant { value } => vec![*value; geom.num_nodes()],
            Profile::RhoPower { base, coeff, delta } => geom.rho.iter().map(|r| base + coeff * r.powf(*delta)).collect(),
            Profile::SinhPower { coeff, power } => geom.t.iter().map(|t| coeff * t.sinh().powf(-power)).collect(),
            Profile::ExpDecay { coeff, rate } => geom.t.iter().map(|t| coeff * (-rate * t).exp()).collect(),
            Profile::Values { values } => values.clone(),
        };
        GridFunction::new(geom, values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-12
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol: default_tol() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Dirichlet { value: f64 },
    MeanCurvature { value: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescribeSpec {
    pub geometry: GeometrySpec,
    pub scal_hat: Profile,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub convention: Option<MeanCurvatureConvention>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub outer_value: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LSource {
    Zero,
    /// Closed-form kernel element with constant `C`.
    Analytic {
        #[serde(rename = "C")]
        c: f64,
    },
    /// Output of the TT construction for source `lambda` and boundary value `b`.
    SolveTt { lambda: Profile, b: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LichnerowiczSpec {
    pub geometry: GeometrySpec,
    pub tau: f64,
    pub epsilon: f64,
    #[serde(rename = "L_source")]
    pub l_source: LSource,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MakeTtSpec {
    pub geometry: GeometrySpec,
    #[serde(default = "zero_profile")]
    pub lambda: Profile,
    #[serde(default)]
    pub b: f64,
    /// When present the closed-form kernel element is produced instead.
    #[serde(default, rename = "C")]
    pub c: Option<f64>,
}

fn zero_profile() -> Profile {
    Profile::Zero
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AGrid {
    List(Vec<f64>),
    /// `count` log-spaced values from `min` to `max`.
    LogSpaced { min: f64, max: f64, count: usize },
}

impl AGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            AGrid::List(v) => v.clone(),
            AGrid::LogSpaced { min, max, count } => match count {
                0 => Vec::new(),
                1 => vec![*min],
                _ => (0..*count)
                    .map(|j| min * (max / min).powf(j as f64 / (*count - 1) as f64))
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_a_grid")]
    pub a_grid: AGrid,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_ode_tol")]
    pub tol: f64,
}

fn default_n() -> usize {
    3
}
fn default_a_grid() -> AGrid {
    AGrid::LogSpaced { min: 0.1, max: 10.0, count: 21 }
}
fn default_r_max() -> f64 {
    20.0
}
fn default_ode_tol() -> f64 {
    1e-13
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicialSpec {
    #[serde(default = "default_indicial_geometry")]
    pub geometry: GeometrySpec,
}

fn default_indicial_geometry() -> GeometrySpec {
    GeometrySpec::HyperbolicExterior { n: 3, t0: 1.0, t_end: 12.0, num_nodes: 2048 }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConvergenceSpec {
    PrescribeScal { levels: Vec<usize>, spec: PrescribeSpec },
    Lichnerowicz { levels: Vec<usize>, spec: LichnerowiczSpec },
    MakeTt { levels: Vec<usize>, spec: MakeTtSpec },
}

/// Applies `key=value` overrides; `key` is a dotted path, `value` is parsed
/// as JSON and falls back to a plain string.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<(), String> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| format!("override '{item}' is not of the form key=value"))?;
        if key.is_empty() {
            return Err(format!("override '{item}' has an empty key"));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut cur = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (depth, part) in parts.iter().enumerate() {
            let last = depth + 1 == parts.len();
            if let Value::Array(arr) = cur {
                let idx: usize = part.parse().map_err(|_| format!("'{part}' in '{key}' is not an array index"))?;
                let len = arr.len();
                let slot = arr.get_mut(idx).ok_or_else(|| format!("index {idx} out of range ({len}) in '{key}'"))?;
                if last {
                    *slot = value.clone();
                }
                cur = slot;
                continue;
            }
            if !cur.is_object() {
                if cur.is_null() {
                    *cur = Value::Object(Default::default());
                } else {
                    return Err(format!("'{key}' descends into a non-object at '{part}'"));
                }
            }
            let obj = cur.as_object_mut().expect("object checked above");
            if last {
                obj.insert(part.to_string(), value.clone());
            }
            cur = obj.entry(part.to_string()).or_insert(Value::Null);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_set_nested_values() {
        let mut doc = json!({"geometry": {"n": 3}, "levels": [1, 2]});
        apply_overrides(
            &mut doc,
            &["geometry.n=4".into(), "tolerances.tol=1e-9".into(), "levels.1=7".into(), "name=abc".into()],
        )
        .unwrap();
        assert_eq!(doc, json!({"geometry": {"n": 4}, "levels": [1, 7], "tolerances": {"tol": 1e-9}, "name": "abc"}));
        assert!(apply_overrides(&mut doc, &["noequals".into()]).is_err());
        assert!(apply_overrides(&mut doc, &["geometry.n.x=1".into()]).is_err());
    }

    #[test]
    fn log_spaced_grid() {
        let v = AGrid::LogSpaced { min: 0.1, max: 10.0, count: 3 }.values();
        assert_eq!(v.len(), 3);
        assert!((v[1] - 1.0).abs() < 1e-15);
    }
}
