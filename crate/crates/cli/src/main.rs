//! `ahcurv` command-line front-end.

mod commands;
mod output;
mod spec;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commands::Failure;

pub const SCHEMA_VERSION: u32 = 1;

const EXIT_SOLVER: u8 = 1;
const EXIT_REGIME: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "ahcurv", version, about = "Conformal solvers on radial asymptotically hyperbolic manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON spec file; omitted fields take their defaults.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Override a spec field, e.g. `--set geometry.num_nodes=513`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Prescribe a negative scalar curvature by a conformal change.
    PrescribeScal(Common),
    /// Solve the Lichnerowicz equation with an apparent-horizon boundary.
    Lichnerowicz(Common),
    /// Build a radial TT tensor.
    MakeTt(Common),
    /// Scan the radial ODE family with no admissible solution.
    Counterexample(Common),
    /// Check the indicial exponents of the TT system.
    IndicialCheck(Common),
    /// Run a solver at several resolutions and report observed orders.
    ConvergenceStudy(Common),
}

impl Command {
    fn split(&self) -> (&'static str, &Common) {
        match self {
            Command::PrescribeScal(c) => ("prescribe-scal", c),
            Command::Lichnerowicz(c) => ("lichnerowicz", c),
            Command::MakeTt(c) => ("make-tt", c),
            Command::Counterexample(c) => ("counterexample", c),
            Command::IndicialCheck(c) => ("indicial-check", c),
            Command::ConvergenceStudy(c) => ("convergence-study", c),
        }
    }
}

fn init_logging() {
    let level = match std::env::var("AHCURV_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
}

fn load_spec(common: &Common) -> Result<Value, String> {
    let mut doc = match &common.input {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => json!({}),
    };
    spec::apply_overrides(&mut doc, &common.set)?;
    Ok(doc)
}

fn write_outputs(out: &Path, report: &Value, files: &[(String, String)]) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    for (name, contents) in files {
        fs::write(out.join(name), contents)?;
    }
    fs::write(out.join("report.json"), output::pretty(report))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    init_logging();
    let (name, common) = cli.command.split();

    let (doc, outcome) = match load_spec(common) {
        Ok(doc) => {
            log::info!("{name}: running");
            let outcome = commands::run(name, &doc);
            (doc, outcome)
        }
        Err(msg) => (Value::Null, Err(Failure::Malformed(msg))),
    };

    let (status, code, error, results, files, warnings) = match outcome {
        Ok(out) => ("ok", 0, Value::Null, out.results, out.files, out.warnings),
        Err(Failure::Malformed(msg)) => {
            eprintln!("error: malformed spec: {msg}");
            eprintln!("usage: ahcurv {name} [--input <path>] --out <dir> [--set key=value]...");
            ("malformed_spec", EXIT_USAGE, json!({ "kind": "malformed_spec", "message": msg }), Value::Null, vec![], vec![])
        }
        Err(Failure::Solver(e)) => {
            let (status, code) = match e {
                ahcurv::Error::CounterexampleRegime(_) => ("counterexample_regime", EXIT_REGIME),
                _ => ("solver_failure", EXIT_SOLVER),
            };
            log::error!("{name}: {e}");
            (status, code, json!({ "kind": e.kind(), "message": e.to_string() }), Value::Null, vec![], vec![])
        }
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": name,
        "status": status,
        "exit_code": code,
        "spec": doc,
        "error": error,
        "results": results,
        "warnings": warnings,
    });
    if let Err(e) = write_outputs(&common.out, &report, &files) {
        eprintln!("error: cannot write outputs to {}: {e}", common.out.display());
        return ExitCode::from(EXIT_SOLVER);
    }
    log::info!("{name}: {status}");
    ExitCode::from(code)
}
