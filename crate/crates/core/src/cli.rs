//! Batch front end: problem files in, CSV out.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use crate::bounds::{BoundsReport, GRoots};
use crate::continuation::{
    continue_to, variation, ContinuationOptions, ContinuationStatus, Partition, VariationMode,
};
use crate::error::{Error, Result};
use crate::expr::{parse, Var};
use crate::operators::NormKind;
use crate::oracle::direct_solve_at;
use crate::quadrature::{QuadratureRule, RuleKind};
use crate::series_engine::{evaluate_series, series_terms, ProblemSpec, DEFAULT_NODES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

fn default_zero() -> String {
    "0".into()
}

fn default_z() -> String {
    "z".into()
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

fn default_scale() -> f64 {
    1.0
}

/// JSON problem description with flat keys.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub kernel0: String,
    #[serde(default = "default_zero")]
    pub kernel1: String,
    #[serde(default = "default_zero")]
    pub forcing: String,
    #[serde(default = "default_z")]
    pub psi0: String,
    #[serde(default = "default_zero")]
    pub psi1: String,
    pub omega: f64,
    #[serde(default)]
    pub norm: NormKind,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub rule: RuleKind,
    #[serde(default = "default_scale")]
    pub base_scale: f64,
    #[serde(default)]
    pub clamp: Option<f64>,
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let field = |name: &str, src: &str| {
            parse(src).map_err(|e| Error::Config(format!("{name}: {e}")))
        };
        let p = ProblemSpec {
            kernel0: field("kernel0", &self.kernel0)?,
            kernel1: field("kernel1", &self.kernel1)?,
            forcing: field("forcing", &self.forcing)?,
            psi0: field("psi0", &self.psi0)?,
            psi1: field("psi1", &self.psi1)?,
            omega: self.omega,
            norm: self.norm,
            rule: self.rule,
            nodes: self.nodes,
            base_scale: self.base_scale,
            clamp: self.clamp,
            base_epsilon: 0.0,
        };
        p.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(p)
    }
}

#[derive(Debug, Parser)]
#[command(name = "fredholm", version, about = "Perturbation series for Fredholm and Hammerstein equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Series value at ε next to the direct solve.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 30)]
        order: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-order coefficient norms.
    Terms {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 30)]
        order: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every bound and threshold for the problem.
    Bounds {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long = "D")]
        d: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        /// ε at which the envelopes are evaluated.
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence atlas over an (ω, ε) grid.
    Sweep {
        #[arg(long)]
        problem: PathBuf,
        /// `start:stop:count`
        #[arg(long)]
        omega: String,
        /// `start:stop:count`
        #[arg(long)]
        epsilon: String,
        #[arg(long, default_value_t = 30)]
        order: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Walk to a target ε by re-expansion.
    Continue {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        #[arg(long, default_value_t = 30)]
        order: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Variation of f on a uniform grid next to ∫|f'|.
    Variation {
        #[arg(long = "fn")]
        function: String,
        #[arg(long)]
        grid: usize,
        /// Sum difference quotients instead of differences.
        #[arg(long)]
        literal: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Fixed 17-significant-digit rendering.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// `start:stop:count` with `count >= 1` evenly spaced values.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("range `{s}` must look like start:stop:count"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let k: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if k == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    if k == 1 {
        return Ok(vec![a]);
    }
    Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::Config(format!("cannot write output: {e}")))
        }
    }
}

fn load(path: &Path) -> Result<ProblemSpec> {
    ProblemFile::load(path)?.to_spec()
}

fn resonant_failure(order: usize) -> Error {
    Error::Degenerate(format!("resonant order {order} unsolvable"))
}

fn cmd_solve(problem: &Path, epsilon: f64, order: usize, out: Option<&Path>) -> Result<()> {
    let p = load(problem)?;
    let s = series_terms(&p, order)?;
    if let Some(abort) = s.diagnostics.aborted {
        return Err(resonant_failure(abort.order));
    }
    let value = evaluate_series(&s, epsilon, order)?;
    if value.outside_radius {
        eprintln!("warning: epsilon {epsilon} lies outside the guaranteed radius");
    }
    let direct = direct_solve_at(&p, epsilon, Some(&value.values))?;
    let mut csv = String::from("x,phi_series,phi_direct,abs_err\n");
    for ((x, a), b) in value.values.nodes().iter().zip(value.values.values()).zip(direct.values()) {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_num(*x),
            fmt_num(*a),
            fmt_num(*b),
            fmt_num((a - b).abs())
        ));
    }
    emit(out, &csv)
}

fn cmd_terms(problem: &Path, order: usize, out: Option<&Path>) -> Result<()> {
    let p = load(problem)?;
    let s = series_terms(&p, order)?;
    let mut csv = String::from("order,sup,l2,ratio\n");
    let norms = &s.diagnostics.order_norms;
    for (j, n) in norms.iter().enumerate() {
        let ratio = (j > 0 && norms[j - 1].sup > 0.0).then(|| n.sup / norms[j - 1].sup);
        csv.push_str(&format!(
            "{j},{},{},{}\n",
            fmt_num(n.sup),
            fmt_num(n.l2),
            fmt_opt(ratio)
        ));
    }
    emit(out, &csv)?;
    if let Some(abort) = s.diagnostics.aborted {
        return Err(resonant_failure(abort.order));
    }
    Ok(())
}

fn cmd_bounds(
    problem: &Path,
    d: Option<f64>,
    b: Option<f64>,
    epsilon: f64,
    json: bool,
    out: Option<&Path>,
) -> Result<()> {
    let p = load(problem)?;
    let report = BoundsReport::from_problem(&p, d, b, epsilon)?;
    let text = if json {
        let mut t = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
        t.push('\n');
        t
    } else {
        let mut t = String::from("quantity,value\n");
        t.push_str(&format!("norm,{}\n", report.norm));
        for (name, v) in report.rows() {
            t.push_str(&format!("{name},{}\n", fmt_opt(v)));
        }
        if let Some(GRoots::AllAdmissible) = report.g {
            t.push_str("all_omega_admissible,true\n");
        }
        t
    };
    emit(out, &text)
}

struct Cell {
    omega: f64,
    epsilon: f64,
    rho: Option<f64>,
    g_minus: Option<f64>,
    converged: bool,
    abs_err: Option<f64>,
}

fn sweep_cell(p: &ProblemSpec, omega: f64, epsilon: f64, order: usize, tol: f64) -> Cell {
    let q = p.clone().with_omega(omega);
    let bounds = BoundsReport::from_problem(&q, None, None, epsilon).ok();
    let rho = bounds.as_ref().and_then(|b| b.rho);
    let g_minus = bounds.as_ref().and_then(|b| match b.g {
        Some(GRoots::Roots { g_minus, .. }) => Some(g_minus),
        _ => None,
    });
    let err = (|| -> Result<(f64, f64)> {
        let s = series_terms(&q, order)?;
        if let Some(abort) = s.diagnostics.aborted {
            return Err(resonant_failure(abort.order));
        }
        let v = evaluate_series(&s, epsilon, order)?.values;
        let d = direct_solve_at(&q, epsilon, Some(&v))?;
        Ok((v.sub(&d)?.sup_norm(), d.sup_norm()))
    })();
    let (converged, abs_err) = match err {
        Ok((e, scale)) => (e <= tol * (1.0 + scale), Some(e)),
        Err(_) => (false, None),
    };
    Cell {
        omega,
        epsilon,
        rho,
        g_minus,
        converged,
        abs_err,
    }
}

fn cmd_sweep(
    problem: &Path,
    omega: &str,
    epsilon: &str,
    order: usize,
    tol: f64,
    out: Option<&Path>,
) -> Result<()> {
    let p = load(problem)?;
    let omegas = parse_range(omega)?;
    let epsilons = parse_range(epsilon)?;
    if epsilons.iter().any(|e| *e < 0.0) {
        return Err(Error::Config("epsilon range must be nonnegative".into()));
    }
    let grid: Vec<(f64, f64)> = omegas
        .iter()
        .flat_map(|&w| epsilons.iter().map(move |&e| (w, e)))
        .collect();
    let cells: Vec<Cell> = grid
        .par_iter()
        .map(|&(w, e)| sweep_cell(&p, w, e, order, tol))
        .collect();
    let mut csv = String::from("omega,epsilon,rho,g_minus,within_rho,converged,abs_err\n");
    for c in &cells {
        let within = c.rho.map(|r| r * c.epsilon < 1.0).unwrap_or(false);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_num(c.omega),
            fmt_num(c.epsilon),
            fmt_opt(c.rho),
            fmt_opt(c.g_minus),
            u8::from(within),
            u8::from(c.converged),
            fmt_opt(c.abs_err)
        ));
    }
    emit(out, &csv)
}

fn cmd_continue(
    problem: &Path,
    target: f64,
    step: f64,
    order: usize,
    tol: f64,
    out: Option<&Path>,
) -> Result<()> {
    let p = load(problem)?;
    let opts = ContinuationOptions {
        step_fraction: step,
        order,
        tol,
        ..ContinuationOptions::default()
    };
    let result = continue_to(&p, target, &opts)?;
    let reached = result.reached();
    let direct = direct_solve_at(&p, reached, Some(&result.solution))?;
    let final_err = result.solution.sub(&direct)?.sup_norm();
    let mut csv = String::from("index,epsilon,radius,step,final_error\n");
    let points = result.partition.points();
    for (i, eps) in points.iter().enumerate() {
        let rec = result.steps.get(i);
        let last = i + 1 == points.len();
        csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            fmt_num(*eps),
            fmt_opt(rec.and_then(|r| r.radius)),
            fmt_opt(rec.map(|r| r.step)),
            if last { fmt_num(final_err) } else { String::new() }
        ));
    }
    emit(out, &csv)?;
    match result.status {
        ContinuationStatus::Reached => Ok(()),
        ContinuationStatus::RadiusCollapse { max_reached } => Err(Error::Degenerate(format!(
            "radius collapse: maximal reached epsilon {max_reached}"
        ))),
    }
}

/// Nodes used for the reference `∫|f'|`.
const VARIATION_REFERENCE_NODES: usize = 2048;

fn cmd_variation(function: &str, grid: usize, literal: bool, out: Option<&Path>) -> Result<()> {
    let f = parse(function).map_err(|e| Error::Config(format!("fn: {e}")))?;
    f.check_variables(&[Var::X], "fn")
        .map_err(|e| Error::Config(e.to_string()))?;
    if grid == 0 {
        return Err(Error::Config("grid must be at least 1".into()));
    }
    let eval = |x: f64| f.evaluate(&crate::Bindings::new().x(x));
    let part = Partition::uniform(0.0, 1.0, grid)?;
    let values = part.points().iter().map(|&x| eval(x)).collect::<Result<Vec<_>>>()?;
    let mode = if literal {
        VariationMode::DifferenceQuotient
    } else {
        VariationMode::TotalVariation
    };
    let v = variation(&part, &values, &[], mode)?;
    let df = f.differentiate(Var::X)?;
    let rule = QuadratureRule::gauss(VARIATION_REFERENCE_NODES)?;
    let samples = rule
        .nodes()
        .iter()
        .map(|&x| df.evaluate(&crate::Bindings::new().x(x)).map(f64::abs))
        .collect::<Result<Vec<_>>>()?;
    let reference = rule.integrate(&samples)?;
    let csv = format!(
        "n,variation,integral_abs_derivative,difference\n{grid},{},{},{}\n",
        fmt_num(v),
        fmt_num(reference),
        fmt_num(v - reference)
    );
    emit(out, &csv)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            problem,
            epsilon,
            order,
            out,
        } => cmd_solve(&problem, epsilon, order, out.as_deref()),
        Command::Terms {
            problem,
            order,
            out,
        } => cmd_terms(&problem, order, out.as_deref()),
        Command::Bounds {
            problem,
            d,
            b,
            epsilon,
            json,
            out,
        } => cmd_bounds(&problem, d, b, epsilon, json, out.as_deref()),
        Command::Sweep {
            problem,
            omega,
            epsilon,
            order,
            tol,
            out,
        } => cmd_sweep(&problem, &omega, &epsilon, order, tol, out.as_deref()),
        Command::Continue {
            problem,
            target,
            step,
            order,
            tol,
            out,
        } => cmd_continue(&problem, target, step, order, tol, out.as_deref()),
        Command::Variation {
            function,
            grid,
            literal,
            out,
        } => cmd_variation(&function, grid, literal, out.as_deref()),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Failures are reported on stderr; the return value is the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_range("0.25:9:1").unwrap(), vec![0.25]);
        assert!(parse_range("0:1").is_err());
        assert!(parse_range("0:1:0").is_err());
        assert!(parse_range("a:1:2").is_err());
    }

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(12.0), "1.2000000000000000e1");
    }

    #[test]
    fn problem_file_defaults_and_errors() {
        let f: ProblemFile = serde_json::from_str(r#"{"kernel0": "x*y", "omega": 0.5}"#).unwrap();
        let p = f.to_spec().unwrap();
        assert!(p.is_linear());
        assert_eq!(p.nodes, DEFAULT_NODES);
        assert!(serde_json::from_str::<ProblemFile>(r#"{"kernel0": "x", "omega": 1, "oops": 1}"#)
            .is_err());
        let f: ProblemFile =
            serde_json::from_str(r#"{"kernel0": "x*(", "omega": 0.5}"#).unwrap();
        let err = f.to_spec().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("position 3"), "{err}");
    }
}
