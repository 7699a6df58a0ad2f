use std::sync::Arc;

use ahcurv::geometry::{conformal_mean_curvature_with, conformal_scalar_curvature};
use ahcurv::grid::{fit_decay_rate, weighted_sup_norm};
use ahcurv::lichnerowicz::{
    assemble_initial_data, constraint_residuals, counterexample_scan, solve_lichnerowicz_full, HorizonSpec,
};
use ahcurv::scalarcurv::{self, verify_decay, PrescribedBoundary, PrescriptionSpec};
use ahcurv::ttensor::{analytic_tt, divergence_residual, indicial_check, solve_tt, RadialTT};
use ahcurv::{Error, GridFunction, RadialGeometry};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::output::Table;
use crate::spec::*;

/// Spec problems are reported with exit code 64, solver problems with 1
/// (2 for the counterexample regime).
#[derive(Debug)]
pub enum Failure {
    Malformed(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

pub struct RunOutput {
    pub results: Value,
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

fn parse<T: DeserializeOwned>(doc: &Value) -> Result<T, Failure> {
    serde_json::from_value(doc.clone()).map_err(|e| Failure::Malformed(e.to_string()))
}

/// Errors raised while turning a spec into library objects are spec errors.
fn setup<T>(r: ahcurv::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Malformed(e.to_string()))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

pub fn run(command: &str, doc: &Value) -> Result<RunOutput, Failure> {
    match command {
        "prescribe-scal" => prescribe(&parse(doc)?),
        "lichnerowicz" => lichnerowicz(&parse(doc)?),
        "make-tt" => make_tt(&parse(doc)?),
        "counterexample" => counterexample(&parse(doc)?),
        "indicial-check" => indicial(&parse(doc)?),
        "convergence-study" => convergence(&parse(doc)?),
        other => Err(Failure::Malformed(format!("unknown command {other}"))),
    }
}

// ---------------------------------------------------------------------------

struct Prescribed {
    geom: Arc<RadialGeometry>,
    spec: PrescriptionSpec,
    phi: GridFunction,
    results: Value,
}

fn prescription_spec(s: &PrescribeSpec) -> Result<PrescriptionSpec, Failure> {
    let geom = setup(s.geometry.build())?;
    let scal_hat = setup(s.scal_hat.build(&geom))?;
    let boundary = match s.boundary {
        BoundarySpec::Dirichlet { value } => PrescribedBoundary::Dirichlet(value),
        BoundarySpec::MeanCurvature { value } => PrescribedBoundary::MeanCurvature(value),
    };
    let mut spec = setup(PrescriptionSpec::new(&geom, scal_hat, boundary))?;
    if let Some(c) = s.convention {
        spec.convention = c;
    }
    if let Some(v) = s.outer_value {
        spec.outer_value = v;
    }
    if let Some(d) = s.delta {
        spec = setup(spec.with_delta(d))?;
    }
    setup(spec.validate())?;
    Ok(spec)
}

fn solve_prescribed(s: &PrescribeSpec) -> Result<Prescribed, Failure> {
    let spec = prescription_spec(s)?;
    let geom = Arc::clone(&spec.geom);
    let (sigma, _) = scalarcurv::subsolution_sigma(&spec)?;
    let level = scalarcurv::supersolution_level(&spec)?;
    let (phi, report) = scalarcurv::solve_prescription(&spec, s.tolerances.tol)?;
    let recovered = conformal_scalar_curvature(&geom, &phi)?;
    let m = geom.num_nodes();
    let target = spec.scal_hat.values();
    let interior_err = (1..m - 1)
        .map(|i| (recovered.scal.values()[i] - target[i]).abs())
        .fold(0.0, f64::max);
    let mut results = json!({
        "sigma": sigma,
        "super_level": level,
        "iteration": to_value(&report),
        "max_abs_phi_minus_one": phi.map(|v| v - 1.0).sup_abs(),
        "scal_recovered_max_error": interior_err,
        "extrapolated_nodes": recovered.extrapolated_nodes,
        "convention": to_value(&spec.convention),
    });
    if let PrescribedBoundary::MeanCurvature(target) = spec.boundary {
        let got = conformal_mean_curvature_with(&geom, &phi, spec.convention)?;
        results["mean_curvature"] = json!({ "target": target, "recovered": got });
    }
    if let Some(d) = spec.delta {
        results["decay"] = to_value(&verify_decay(&phi, d));
    }
    Ok(Prescribed { geom, spec, phi, results })
}

fn prescribe(s: &PrescribeSpec) -> Result<RunOutput, Failure> {
    let p = solve_prescribed(s)?;
    let recovered = conformal_scalar_curvature(&p.geom, &p.phi)?;
    let mut t = Table::new(&["t", "rho", "phi", "scal_hat", "scal_recovered"]);
    for i in 0..p.geom.num_nodes() {
        t.row(&[
            p.geom.t[i],
            p.geom.rho[i],
            p.phi.values()[i],
            p.spec.scal_hat.values()[i],
            recovered.scal.values()[i],
        ]);
    }
    let warnings = p.results["iteration"]["barrier_warnings"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
        .unwrap_or_default();
    Ok(RunOutput { results: p.results, files: vec![("solution.csv".into(), t.finish())], warnings })
}

// ---------------------------------------------------------------------------

fn build_l_source(geom: &Arc<RadialGeometry>, src: &LSource) -> Result<RadialTT, Failure> {
    Ok(match src {
        LSource::Zero => analytic_tt(geom, 0.0),
        LSource::Analytic { c } => analytic_tt(geom, *c),
        LSource::SolveTt { lambda, b } => {
            let lam = setup(lambda.build(geom))?;
            setup(solve_tt(geom, &lam, *b))?
        }
    })
}

struct LichRun {
    geom: Arc<RadialGeometry>,
    results: Value,
    files: Vec<(String, String)>,
    ham: f64,
    mom: f64,
    interior: f64,
    boundary: f64,
    warnings: Vec<String>,
}

fn lichnerowicz_run(s: &LichnerowiczSpec) -> Result<LichRun, Failure> {
    let geom = setup(s.geometry.build())?;
    let tt = build_l_source(&geom, &s.l_source)?;
    let horizon = setup(HorizonSpec::new(geom.n, s.epsilon, s.tau, tt.l_nn()))?;
    let l_sq = tt.norm_sq();
    let sol = solve_lichnerowicz_full(&geom, &horizon, &l_sq, s.tolerances.tol)?;
    let data = assemble_initial_data(&geom, &sol.phi, Some(&tt), s.tau)?;
    let c = constraint_residuals(&data)?;
    let (ham, mom) = (weighted_sup_norm(&c.ham, 0.0), weighted_sup_norm(&c.mom, 0.0));

    let mut sol_t = Table::new(&["t", "rho", "phi", "phi_minus", "phi_plus", "L_sq", "mu"]);
    let mut con_t = Table::new(&["t", "rho", "ham", "mom", "interior_residual"]);
    for i in 0..geom.num_nodes() {
        sol_t.row(&[
            geom.t[i],
            geom.rho[i],
            sol.phi.values()[i],
            sol.subsolution.phi.values()[i],
            sol.supersolution.phi.values()[i],
            l_sq.values()[i],
            tt.mu.values()[i],
        ]);
        con_t.row(&[geom.t[i], geom.rho[i], c.ham.values()[i], c.mom.values()[i], sol.residuals.interior.values()[i]]);
    }
    let mut warnings = sol.report.barrier_warnings.clone();
    warnings.extend(tt.warnings.iter().cloned());
    let results = json!({
        "horizon": to_value(&horizon),
        "supersolution": to_value(&sol.supersolution),
        "subsolution": to_value(&sol.subsolution),
        "iteration": to_value(&sol.report),
        "residuals": to_value(&sol.residuals),
        "constraints": { "ham_sup": ham, "mom_sup": mom },
        "decay": to_value(&fit_decay_rate(&sol.phi.map(|v| v - 1.0))),
    });
    Ok(LichRun {
        results,
        files: vec![("solution.csv".into(), sol_t.finish()), ("constraints.csv".into(), con_t.finish())],
        ham,
        mom,
        interior: sol.residuals.max_interior,
        boundary: sol.residuals.boundary.abs(),
        geom,
        warnings,
    })
}

fn lichnerowicz(s: &LichnerowiczSpec) -> Result<RunOutput, Failure> {
    let r = lichnerowicz_run(s)?;
    Ok(RunOutput { results: r.results, files: r.files, warnings: r.warnings })
}

// ---------------------------------------------------------------------------

fn tt_build(s: &MakeTtSpec) -> Result<(Arc<RadialGeometry>, RadialTT), Failure> {
    let geom = setup(s.geometry.build())?;
    let tt = match s.c {
        Some(c) => analytic_tt(&geom, c),
        None => {
            let lam = setup(s.lambda.build(&geom))?;
            solve_tt(&geom, &lam, s.b)?
        }
    };
    Ok((geom, tt))
}

fn make_tt(s: &MakeTtSpec) -> Result<RunOutput, Failure> {
    let (geom, tt) = tt_build(s)?;
    let div = divergence_residual(&geom, &tt)?;
    let l_sq = tt.norm_sq();
    let mut t = Table::new(&["t", "rho", "lambda0", "u", "w", "mu", "L_sq", "div_residual"]);
    for i in 0..geom.num_nodes() {
        t.row(&[
            geom.t[i],
            geom.rho[i],
            tt.lambda0.values()[i],
            tt.u.values()[i],
            tt.w.values()[i],
            tt.mu.values()[i],
            l_sq.values()[i],
            div.values()[i],
        ]);
    }
    let results = json!({
        "b": tt.b,
        "L_nn": tt.l_nn(),
        "trace_check": tt.trace_check(),
        "max_divergence_residual": div.sup_abs(),
        "potential_mismatch": tt.potential_mismatch,
        "mu_decay": to_value(&fit_decay_rate(&tt.mu)),
        "h": geom.spacing(),
    });
    Ok(RunOutput { results, files: vec![("tt.csv".into(), t.finish())], warnings: tt.warnings.clone() })
}

// ---------------------------------------------------------------------------

fn counterexample(s: &CounterexampleSpec) -> Result<RunOutput, Failure> {
    let grid = s.a_grid.values();
    if grid.is_empty() || grid.iter().any(|a| !(*a > 0.0)) {
        return Err(Failure::Malformed("a_grid must be a non-empty list of positive values".into()));
    }
    if s.n < 3 {
        return Err(Failure::Malformed(format!("n must be >= 3, got {}", s.n)));
    }
    let (scan, trajectories) = counterexample_scan(s.n, &grid, s.r_max, s.tol)?;
    let mut files = Vec::new();
    for (j, tr) in trajectories.iter().enumerate() {
        let mut t = Table::new(&["r", "phi", "dphi", "B"]);
        for i in 0..tr.r.len() {
            t.row(&[tr.r[i], tr.phi[i], tr.dphi[i], tr.b[i]]);
        }
        files.push((format!("trajectory_{j:03}.csv"), t.finish()));
    }
    let summary = to_value(&scan);
    files.push(("summary.json".into(), crate::output::pretty(&summary)));
    Ok(RunOutput { results: summary, files, warnings: Vec::new() })
}

fn indicial(s: &IndicialSpec) -> Result<RunOutput, Failure> {
    let geom = setup(s.geometry.build())?;
    let r = indicial_check(&geom)?;
    Ok(RunOutput { results: to_value(&r), files: Vec::new(), warnings: Vec::new() })
}

// ---------------------------------------------------------------------------

fn level_geometry(g: &GeometrySpec, nodes: usize) -> Result<GeometrySpec, Failure> {
    g.with_nodes(nodes)
        .ok_or_else(|| Failure::Malformed("convergence studies need a built-in geometry kind".into()))
}

fn check_levels(levels: &[usize], nested: bool) -> Result<(), Failure> {
    if levels.len() < 2 {
        return Err(Failure::Malformed("need at least two levels".into()));
    }
    for w in levels.windows(2) {
        let ok = if nested { w[1] - 1 == 2 * (w[0] - 1) } else { w[1] > w[0] };
        if w[0] < 2 || !ok {
            return Err(Failure::Malformed(format!(
                "levels must be increasing{}; got {levels:?}",
                if nested { " with N_(k+1) - 1 = 2 (N_k - 1)" } else { "" }
            )));
        }
    }
    Ok(())
}

/// Ratios `e_k / e_(k+1)` and observed orders `log2` of them.
fn rates(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ratios: Vec<f64> = values.windows(2).map(|w| w[0] / w[1]).collect();
    let orders = ratios.iter().map(|r| r.log2()).collect();
    (ratios, orders)
}

fn convergence(s: &ConvergenceSpec) -> Result<RunOutput, Failure> {
    let (names, levels, rows, hs): (Vec<&str>, Vec<usize>, Vec<Vec<f64>>, Vec<f64>) = match s {
        ConvergenceSpec::PrescribeScal { levels, spec } => {
            check_levels(levels, true)?;
            let mut sols = Vec::new();
            for &n in levels {
                let mut sp = spec.clone();
                sp.geometry = level_geometry(&spec.geometry, n)?;
                sols.push(solve_prescribed(&sp)?);
            }
            let mut rows = Vec::new();
            let mut hs = Vec::new();
            for k in 0..sols.len() {
                let self_diff = if k + 1 < sols.len() {
                    let (a, b) = (sols[k].phi.values(), sols[k + 1].phi.values());
                    (0..a.len()).map(|i| (a[i] - b[2 * i]).abs()).fold(0.0, f64::max)
                } else {
                    f64::NAN
                };
                rows.push(vec![self_diff, sols[k].results["scal_recovered_max_error"].as_f64().unwrap_or(f64::NAN)]);
                hs.push(sols[k].geom.spacing());
            }
            (vec!["self_diff", "scal_error"], levels.clone(), rows, hs)
        }
        ConvergenceSpec::Lichnerowicz { levels, spec } => {
            check_levels(levels, false)?;
            let mut rows = Vec::new();
            let mut hs = Vec::new();
            for &n in levels {
                let mut sp = spec.clone();
                sp.geometry = level_geometry(&spec.geometry, n)?;
                let r = lichnerowicz_run(&sp)?;
                rows.push(vec![r.ham, r.mom, r.interior, r.boundary]);
                hs.push(r.geom.spacing());
            }
            (vec!["ham", "mom", "interior_residual", "boundary_residual"], levels.clone(), rows, hs)
        }
        ConvergenceSpec::MakeTt { levels, spec } => {
            check_levels(levels, false)?;
            let mut rows = Vec::new();
            let mut hs = Vec::new();
            for &n in levels {
                let mut sp = spec.clone();
                sp.geometry = level_geometry(&spec.geometry, n)?;
                let (geom, tt) = tt_build(&sp)?;
                rows.push(vec![divergence_residual(&geom, &tt)?.sup_abs(), tt.trace_check()]);
                hs.push(geom.spacing());
            }
            (vec!["divergence", "trace_check"], levels.clone(), rows, hs)
        }
    };
    let mut header = vec!["num_nodes", "h"];
    header.extend(&names);
    let mut t = Table::new(&header);
    for (k, row) in rows.iter().enumerate() {
        let mut r = vec![levels[k] as f64, hs[k]];
        r.extend(row);
        t.row(&r);
    }
    let mut metrics = serde_json::Map::new();
    for (j, name) in names.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
        let (ratios, orders) = rates(&vals);
        metrics.insert(name.to_string(), json!({ "values": vals, "ratios": ratios, "observed_order": orders }));
    }
    let results = json!({ "levels": levels, "h": hs, "metrics": metrics });
    Ok(RunOutput { results, files: vec![("convergence.csv".into(), t.finish())], warnings: Vec::new() })
}
