//! Command-line front end: problem files in and reports out.
//!
//! Problem files are JSON documents:
//!
//! ```json
//! {
//!   "kind": "care",
//!   "field": "real",
//!   "n": 2,
//!   "a": [[0.0, 1.0], [0.0, 0.0]],
//!   "g": [[0.0, 0.0], [0.0, 1.0]],
//!   "q": [[1.0, 0.0], [0.0, 1.0]],
//!   "deltas": [1.0, 1.0, 1.4142135623730951]
//! }
//! ```
//!
//! Complex problems write every entry as a `[re, im]` pair. The optional
//! `deltas` array overrides the perturbation weights used by `cond`
//! (three values for real problems, six for complex ones).
//!
//! Exit codes: 0 success, 2 I/O or usage, 3 parse, 4 solver failure.

use crate::condnum::{condition_report, DeltaConvention};
use crate::error::Error;
use crate::harness::{reproduce_table1, reproduce_table2, run_perturbation_experiment, ExperimentRow, PerturbationSpec};
use crate::matrix::{CMat, Cpx};
use crate::riccati::{solve, RiccatiKind, RiccatiProblem, ScalarField};
use crate::sce::{
    sce_care_componentwise, sce_care_normwise, sce_dare_componentwise, sce_dare_normwise,
    SceConfig, SceStructure, DEFAULT_SAMPLES,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn to_cpx(self) -> Cpx {
        match self {
            Entry::Real(re) => Cpx::new(re, 0.0),
            Entry::Complex([re, im]) => Cpx::new(re, im),
        }
    }
}

/// On-disk problem document.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ProblemFile {
    pub kind: String,
    pub field: String,
    pub n: usize,
    pub a: Vec<Vec<Entry>>,
    pub g: Vec<Vec<Entry>>,
    pub q: Vec<Vec<Entry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
}

#[derive(Debug)]
enum CliFailure {
    Io(String),
    Parse(String),
    Solver(String),
}

impl CliFailure {
    fn exit_code(&self) -> i32 {
        match self {
            CliFailure::Io(_) => EXIT_IO,
            CliFailure::Parse(_) => EXIT_PARSE,
            CliFailure::Solver(_) => EXIT_SOLVER,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliFailure::Io(m) | CliFailure::Parse(m) | CliFailure::Solver(m) => m,
        }
    }
}

fn solver_failure(err: Error) -> CliFailure {
    CliFailure::Solver(err.to_string())
}

impl ProblemFile {
    pub fn to_problem(&self) -> Result<RiccatiProblem, String> {
        let kind = match self.kind.as_str() {
            "care" => RiccatiKind::Care,
            "dare" => RiccatiKind::Dare,
            other => return Err(format!("kind must be \"care\" or \"dare\", got \"{other}\"")),
        };
        let field = match self.field.as_str() {
            "real" => ScalarField::Real,
            "complex" => ScalarField::Complex,
            other => return Err(format!("field must be \"real\" or \"complex\", got \"{other}\"")),
        };
        let n = self.n;
        let build = |name: &str, rows: &Vec<Vec<Entry>>| -> Result<CMat, String> {
            if rows.len() != n {
                return Err(format!("matrix {name}: expected {n} rows, got {}", rows.len()));
            }
            let mut m = CMat::zeros(n, n);
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(format!(
                        "matrix {name}, row {}: expected {n} entries, got {}",
                        i + 1,
                        row.len()
                    ));
                }
                for (j, e) in row.iter().enumerate() {
                    let z = e.to_cpx();
                    if field == ScalarField::Real && z.im != 0.0 {
                        return Err(format!(
                            "matrix {name}, row {}, column {}: nonzero imaginary part in a real problem",
                            i + 1,
                            j + 1
                        ));
                    }
                    m[(i, j)] = z;
                }
            }
            Ok(m)
        };
        let a = build("a", &self.a)?;
        let g = build("g", &self.g)?;
        let q = build("q", &self.q)?;
        if let Some(d) = &self.deltas {
            let want = if field == ScalarField::Real { 3 } else { 6 };
            if d.len() != want {
                return Err(format!("deltas: expected {want} values for a {} problem, got {}", self.field, d.len()));
            }
        }
        RiccatiProblem::new(kind, field, a, g, q).map_err(|e| e.to_string())
    }

    pub fn from_problem(problem: &RiccatiProblem, deltas: Option<Vec<f64>>) -> Self {
        let n = problem.order();
        let emit = |m: &CMat| -> Vec<Vec<Entry>> {
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let z = m[(i, j)];
                            if problem.field == ScalarField::Real {
                                Entry::Real(z.re)
                            } else {
                                Entry::Complex([z.re, z.im])
                            }
                        })
                        .collect()
                })
                .collect()
        };
        ProblemFile {
            kind: match problem.kind {
                RiccatiKind::Care => "care".into(),
                RiccatiKind::Dare => "dare".into(),
            },
            field: match problem.field {
                ScalarField::Real => "real".into(),
                ScalarField::Complex => "complex".into(),
            },
            n,
            a: emit(&problem.a),
            g: emit(&problem.g),
            q: emit(&problem.q),
            deltas,
        }
    }
}

fn load_problem(path: &Path) -> Result<(RiccatiProblem, Option<Vec<f64>>), CliFailure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliFailure::Io(format!("{}: {e}", path.display())))?;
    let file: ProblemFile = serde_json::from_str(&text).map_err(|e| {
        CliFailure::Parse(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })?;
    let deltas = file.deltas.clone();
    let problem = file
        .to_problem()
        .map_err(|msg| CliFailure::Parse(format!("{}: {msg}", path.display())))?;
    Ok((problem, deltas))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SceMode {
    Normwise,
    Componentwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ReproduceTarget {
    Example1,
    Example2,
}

#[derive(Clone, Debug)]
enum DeltaArg {
    Default,
    Zhou,
    Explicit(Vec<f64>),
}

fn parse_delta_arg(s: &str) -> Result<DeltaArg, String> {
    match s {
        "default" => Ok(DeltaArg::Default),
        "zhou" => Ok(DeltaArg::Zhou),
        list => {
            let values: Result<Vec<f64>, _> = list.split(',').map(|x| x.trim().parse::<f64>()).collect();
            let values = values.map_err(|e| format!("expected `default`, `zhou`, or a comma-separated list: {e}"))?;
            if values.is_empty() {
                return Err("empty delta list".into());
            }
            Ok(DeltaArg::Explicit(values))
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "riccati-cond",
    about = "Solve symmetric algebraic Riccati equations and measure their conditioning",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem file and print the stabilizing solution.
    Solve {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Exact condition numbers and bounds at the solved solution.
    Cond {
        path: PathBuf,
        /// `default`, `zhou`, or an explicit comma-separated weight list.
        #[arg(long, value_parser = parse_delta_arg)]
        deltas: Option<DeltaArg>,
        #[arg(long)]
        json: bool,
    },
    /// Statistical per-entry condition matrix estimate.
    Sce {
        path: PathBuf,
        /// Sample count.
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SceMode::Normwise)]
        mode: SceMode,
        #[arg(long)]
        json: bool,
    },
    /// Regenerate a built-in reference table.
    Reproduce {
        #[arg(value_enum)]
        which: ReproduceTarget,
        /// Perturbation size; defaults to 1e-8 (example1) or 1e-12 (example2).
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Draw one structured perturbation, re-solve, and compare against the
    /// first-order predictions.
    Perturb {
        path: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the perturbed problem to this file.
        #[arg(long)]
        emit: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

/// Entry point for the binary: parses `std::env::args`.
pub fn run() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_from(args, &mut out, &mut err)
}

/// Testable entry point with explicit argument list and output sinks.
pub fn run_from<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            // clap help/version are not failures
            let code = if e.use_stderr() { EXIT_IO } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            let _ = writeln!(err, "error: {}", failure.message());
            failure.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliFailure> {
    match command {
        Command::Solve { path, json } => cmd_solve(&path, json, out),
        Command::Cond { path, deltas, json } => cmd_cond(&path, deltas, json, out),
        Command::Sce { path, k, seed, mode, json } => cmd_sce(&path, k, seed, mode, json, out),
        Command::Reproduce { which, epsilon, seed, json } => {
            cmd_reproduce(which, epsilon, seed, json, out)
        }
        Command::Perturb { path, epsilon, seed, emit, json } => {
            cmd_perturb(&path, epsilon, seed, emit.as_deref(), json, out)
        }
    }
}

fn write_io(out: &mut dyn Write, args: std::fmt::Arguments) -> Result<(), CliFailure> {
    out.write_fmt(args).map_err(|e| CliFailure::Io(e.to_string()))
}

macro_rules! outln {
    ($out:expr, $($arg:tt)*) => {
        write_io($out, format_args!("{}\n", format_args!($($arg)*)))?
    };
}

fn entry_grid(m: &CMat, field: ScalarField) -> Vec<Vec<Entry>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| {
                    let z = m[(i, j)];
                    if field == ScalarField::Real {
                        Entry::Real(z.re)
                    } else {
                        Entry::Complex([z.re, z.im])
                    }
                })
                .collect()
        })
        .collect()
}

fn fmt_entry(z: Cpx, field: ScalarField) -> String {
    if field == ScalarField::Real {
        format!("{:.16e}", z.re)
    } else if z.im >= 0.0 {
        format!("{:.16e}+{:.16e}i", z.re, z.im)
    } else {
        format!("{:.16e}-{:.16e}i", z.re, -z.im)
    }
}

fn print_matrix(out: &mut dyn Write, m: &CMat, field: ScalarField) -> Result<(), CliFailure> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_entry(m[(i, j)], field)).collect();
        outln!(out, "  [{}]", row.join(", "));
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput {
    kind: String,
    field: String,
    n: usize,
    solution: Vec<Vec<Entry>>,
    residual: f64,
    stability_margin: f64,
    closed_loop: Vec<Vec<Entry>>,
}

fn cmd_solve(path: &Path, json: bool, out: &mut dyn Write) -> Result<(), CliFailure> {
    let (problem, _) = load_problem(path)?;
    let sol = solve(&problem).map_err(solver_failure)?;
    if json {
        let doc = SolveOutput {
            kind: if problem.kind == RiccatiKind::Care { "care".into() } else { "dare".into() },
            field: if problem.field == ScalarField::Real { "real".into() } else { "complex".into() },
            n: problem.order(),
            solution: entry_grid(&sol.solution, problem.field),
            residual: sol.residual,
            stability_margin: sol.stability_margin,
            closed_loop: entry_grid(&sol.closed_loop, problem.field),
        };
        outln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        return Ok(());
    }
    outln!(out, "solution:");
    print_matrix(out, &sol.solution, problem.field)?;
    outln!(out, "residual:         {:.4e}", sol.residual);
    outln!(out, "stability margin: {:.4e}", sol.stability_margin);
    Ok(())
}

#[derive(Serialize)]
struct CondOutput {
    kappa1: f64,
    kappa_u: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    unstructured_kappa1_u: Option<f64>,
    mixed_m: f64,
    comp_c: f64,
    mixed_m_u: f64,
    comp_c_u: f64,
    deltas_complex: [f64; 6],
    deltas_real: [f64; 3],
    deltas_zhou: [f64; 3],
    operator_condition: f64,
    degenerate_zero_solution: bool,
}

fn cmd_cond(
    path: &Path,
    deltas: Option<DeltaArg>,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CliFailure> {
    let (problem, file_deltas) = load_problem(path)?;
    let convention = match deltas {
        Some(DeltaArg::Default) | None => match file_deltas {
            Some(values) => DeltaConvention::Explicit(values),
            None => DeltaConvention::Default,
        },
        Some(DeltaArg::Zhou) => DeltaConvention::Zhou,
        Some(DeltaArg::Explicit(values)) => DeltaConvention::Explicit(values),
    };
    let sol = solve(&problem).map_err(solver_failure)?;
    let report = condition_report(&problem, &sol.solution, &convention)
        .map_err(|e| CliFailure::Solver(e.to_string()))?;
    if json {
        let doc = CondOutput {
            kappa1: report.kappa1,
            kappa_u: report.kappa_u,
            unstructured_kappa1_u: report.unstructured_kappa1_u,
            mixed_m: report.mixed_m,
            comp_c: report.comp_c,
            mixed_m_u: report.mixed_m_u,
            comp_c_u: report.comp_c_u,
            deltas_complex: report.deltas.complex6,
            deltas_real: report.deltas.real3,
            deltas_zhou: report.deltas.zhou3,
            operator_condition: report.operator_condition,
            degenerate_zero_solution: report.degenerate_zero_solution,
        };
        outln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        return Ok(());
    }
    if report.degenerate_zero_solution {
        outln!(out, "note: zero solution, relative condition numbers reported as 0");
    }
    outln!(out, "kappa1 (exact structured):      {:.4e}", report.kappa1);
    outln!(out, "kappa_U (structured bound):     {:.4e}", report.kappa_u);
    if let Some(kz) = report.unstructured_kappa1_u {
        outln!(out, "kappa1_U (unstructured bound):  {:.4e}", kz);
    }
    outln!(out, "m  (mixed):                     {:.4e}", report.mixed_m);
    outln!(out, "c  (componentwise):             {:.4e}", report.comp_c);
    outln!(out, "m_U (mixed bound):              {:.4e}", report.mixed_m_u);
    outln!(out, "c_U (componentwise bound):      {:.4e}", report.comp_c_u);
    let d = &report.deltas;
    match problem.field {
        ScalarField::Real => outln!(
            out,
            "deltas (A, G, Q):               {:.4e}, {:.4e}, {:.4e}",
            d.real3[0],
            d.real3[1],
            d.real3[2]
        ),
        ScalarField::Complex => outln!(
            out,
            "deltas (ReA, ImA, ReG, ImG, ReQ, ImQ): {:.4e}, {:.4e}, {:.4e}, {:.4e}, {:.4e}, {:.4e}",
            d.complex6[0],
            d.complex6[1],
            d.complex6[2],
            d.complex6[3],
            d.complex6[4],
            d.complex6[5]
        ),
    }
    outln!(out, "operator condition:             {:.4e}", report.operator_condition);
    Ok(())
}

#[derive(Serialize)]
struct SceOutput {
    mode: String,
    k: usize,
    seed: u64,
    p: usize,
    wallis_ratio: f64,
    values: Vec<Vec<f64>>,
}

fn cmd_sce(
    path: &Path,
    k: usize,
    seed: u64,
    mode: SceMode,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CliFailure> {
    let (problem, _) = load_problem(path)?;
    let sol = solve(&problem).map_err(solver_failure)?;
    let structure = SceStructure::for_problem(&problem);
    let config = SceConfig::new(k, seed, structure);
    let estimate = match (problem.kind, mode) {
        (RiccatiKind::Care, SceMode::Normwise) => sce_care_normwise(&problem, &sol.solution, &config),
        (RiccatiKind::Care, SceMode::Componentwise) => {
            sce_care_componentwise(&problem, &sol.solution, &config)
        }
        (RiccatiKind::Dare, SceMode::Normwise) => sce_dare_normwise(&problem, &sol.solution, &config),
        (RiccatiKind::Dare, SceMode::Componentwise) => {
            sce_dare_componentwise(&problem, &sol.solution, &config)
        }
    }
    .map_err(solver_failure)?;
    let n = problem.order();
    if json {
        let doc = SceOutput {
            mode: match mode {
                SceMode::Normwise => "normwise".into(),
                SceMode::Componentwise => "componentwise".into(),
            },
            k: estimate.k,
            seed: estimate.seed,
            p: structure.dimension(n),
            wallis_ratio: estimate.wallis_ratio,
            values: (0..n).map(|i| (0..n).map(|j| estimate.values[(i, j)]).collect()).collect(),
        };
        outln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        return Ok(());
    }
    let label = match mode {
        SceMode::Normwise => "normwise relative condition matrix",
        SceMode::Componentwise => "componentwise relative condition matrix",
    };
    outln!(out, "{label} (k = {}, seed = {}, w_k/w_p = {:.6e}):", estimate.k, estimate.seed, estimate.wallis_ratio);
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:.4e}", estimate.values[(i, j)])).collect();
        outln!(out, "  [{}]", row.join(", "));
    }
    Ok(())
}

#[derive(Serialize)]
struct RowOutput {
    parameter: f64,
    observed_rel_fro: f64,
    pred_kappa_u: f64,
    pred_kappa1_u: f64,
    observed_rel_max: f64,
    pred_m: f64,
    observed_comp_max: f64,
    pred_c: f64,
    solve_failed: bool,
}

impl From<&ExperimentRow> for RowOutput {
    fn from(r: &ExperimentRow) -> Self {
        RowOutput {
            parameter: r.parameter,
            observed_rel_fro: r.observed_rel_fro,
            pred_kappa_u: r.pred_kappa_u,
            pred_kappa1_u: r.pred_kappa1_u,
            observed_rel_max: r.observed_rel_max,
            pred_m: r.pred_m,
            observed_comp_max: r.observed_comp_max,
            pred_c: r.pred_c,
            solve_failed: r.solve_failed,
        }
    }
}

#[derive(Serialize)]
struct ReproduceOutput {
    example: String,
    epsilon: f64,
    seed: u64,
    rows: Vec<RowOutput>,
}

fn print_table(out: &mut dyn Write, rows: &[ExperimentRow], param_name: &str) -> Result<(), CliFailure> {
    outln!(
        out,
        "{:>10} | {:>12} {:>12} {:>12}",
        param_name,
        "|dX|F/|X|F",
        "eps*kappa_U",
        "eps*kappa1_U"
    );
    for r in rows {
        outln!(
            out,
            "{:>10.3e} | {:>12.4e} {:>12.4e} {:>12.4e}",
            r.parameter,
            r.observed_rel_fro,
            r.pred_kappa_u,
            r.pred_kappa1_u
        );
    }
    outln!(out, "");
    outln!(
        out,
        "{:>10} | {:>12} {:>12} {:>12} {:>12}",
        param_name,
        "|dX|M/|X|M",
        "eps*m",
        "|dX./X|M",
        "eps*c"
    );
    for r in rows {
        outln!(
            out,
            "{:>10.3e} | {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.parameter,
            r.observed_rel_max,
            r.pred_m,
            r.observed_comp_max,
            r.pred_c
        );
    }
    for r in rows {
        if r.solve_failed {
            outln!(out, "note: perturbed solve failed at parameter {:.3e}", r.parameter);
        }
    }
    Ok(())
}

fn cmd_reproduce(
    which: ReproduceTarget,
    epsilon: Option<f64>,
    seed: u64,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CliFailure> {
    let (rows, eps, name, param) = match which {
        ReproduceTarget::Example1 => {
            let eps = epsilon.unwrap_or(1e-8);
            (reproduce_table1(eps, seed).map_err(solver_failure)?, eps, "example1", "nu")
        }
        ReproduceTarget::Example2 => {
            let eps = epsilon.unwrap_or(1e-12);
            (reproduce_table2(eps, seed).map_err(solver_failure)?, eps, "example2", "m")
        }
    };
    if json {
        let doc = ReproduceOutput {
            example: name.into(),
            epsilon: eps,
            seed,
            rows: rows.iter().map(RowOutput::from).collect(),
        };
        outln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        return Ok(());
    }
    outln!(out, "{name}, epsilon = {eps:.3e}, seed = {seed}");
    print_table(out, &rows, param)
}

#[derive(Serialize)]
struct PerturbOutput {
    epsilon: f64,
    seed: u64,
    row: RowOutput,
    #[serde(skip_serializing_if = "Option::is_none")]
    emitted: Option<String>,
}

fn cmd_perturb(
    path: &Path,
    epsilon: f64,
    seed: u64,
    emit: Option<&Path>,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CliFailure> {
    let (problem, _) = load_problem(path)?;
    let sol = solve(&problem).map_err(solver_failure)?;
    let spec = PerturbationSpec { epsilon, seed };
    let row = run_perturbation_experiment(&problem, &sol.solution, &spec, 0.0)
        .map_err(solver_failure)?;

    let emitted = if let Some(target) = emit {
        let (da, dg, dq) = crate::harness::gen_structured_perturbation(&problem, &spec);
        let perturbed = RiccatiProblem::new_unchecked(
            problem.kind,
            problem.field,
            &problem.a + da,
            &problem.g + dg,
            &problem.q + dq,
        );
        let doc = ProblemFile::from_problem(&perturbed, None);
        let text = serde_json::to_string_pretty(&doc).expect("serializable");
        std::fs::write(target, text.as_bytes())
            .map_err(|e| CliFailure::Io(format!("{}: {e}", target.display())))?;
        Some(target.display().to_string())
    } else {
        None
    };

    if json {
        let doc = PerturbOutput { epsilon, seed, row: RowOutput::from(&row), emitted };
        outln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        return Ok(());
    }
    outln!(out, "epsilon = {epsilon:.3e}, seed = {seed}");
    outln!(out, "observed |dX|F/|X|F:   {:.4e}   predicted eps*kappa_U:  {:.4e}", row.observed_rel_fro, row.pred_kappa_u);
    outln!(out, "observed |dX|M/|X|M:   {:.4e}   predicted eps*m:        {:.4e}", row.observed_rel_max, row.pred_m);
    outln!(out, "observed |dX./X|M:     {:.4e}   predicted eps*c:        {:.4e}", row.observed_comp_max, row.pred_c);
    if row.solve_failed {
        outln!(out, "note: perturbed solve failed; observed columns are zero");
    }
    if let Some(p) = emitted {
        outln!(out, "perturbed problem written to {p}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::example1_problem;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_from(
            std::iter::once("riccati-cond").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn write_example1(dir: &std::path::Path) -> PathBuf {
        let (problem, _) = example1_problem(1.0);
        let doc = ProblemFile::from_problem(&problem, None);
        let path = dir.join("example1.json");
        std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
        path
    }

    #[test]
    fn solve_reports_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_example1(dir.path());
        let (code, out, _) = run(&["solve", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("1.7320508"), "missing sqrt(3) in output: {out}");
        let (code, out, _) = run(&["solve", path.to_str().unwrap(), "--json"]);
        assert_eq!(code, EXIT_OK);
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        let x00 = doc["solution"][0][0].as_f64().unwrap();
        assert!((x00 - 3f64.sqrt()).abs() < 1e-10);
        assert!(doc["residual"].as_f64().unwrap() <= 1e-10);
    }

    #[test]
    fn missing_file_is_io_error() {
        let (code, _, err) = run(&["solve", "/nonexistent/problem.json"]);
        assert_eq!(code, EXIT_IO);
        assert!(err.contains("error"));
    }

    #[test]
    fn malformed_file_is_parse_error_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\n  \"kind\": \"care\",\n  oops\n}").unwrap();
        let (code, _, err) = run(&["solve", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_PARSE);
        assert!(err.contains("line 3"), "expected position info: {err}");
    }

    #[test]
    fn shape_mismatch_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shape.json");
        std::fs::write(
            &path,
            r#"{"kind":"care","field":"real","n":2,
               "a":[[0.0,1.0],[0.0,0.0]],
               "g":[[0.0,0.0],[0.0,1.0]],
               "q":[[1.0,0.0],[0.0,1.0,5.0]]}"#,
        )
        .unwrap();
        let (code, _, err) = run(&["solve", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_PARSE);
        assert!(err.contains("row 2"), "expected row info: {err}");
    }

    #[test]
    fn unsolvable_problem_is_solver_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("unstable.json");
        // rho(A) > 1 with G = 0 cannot be stabilized
        std::fs::write(
            &path,
            r#"{"kind":"dare","field":"real","n":2,
               "a":[[2.0,0.0],[0.0,0.5]],
               "g":[[0.0,0.0],[0.0,0.0]],
               "q":[[1.0,0.0],[0.0,1.0]]}"#,
        )
        .unwrap();
        let (code, _, err) = run(&["solve", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_SOLVER);
        assert!(!err.is_empty());
    }

    #[test]
    fn cond_prints_reference_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_example1(dir.path());
        let (code, out, _) = run(&["cond", path.to_str().unwrap(), "--json"]);
        assert_eq!(code, EXIT_OK);
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        let m = doc["mixed_m"].as_f64().unwrap();
        assert!((m - 5.0 / 3.0).abs() < 1e-4 * m, "mixed {m}");
        let ku = doc["kappa_u"].as_f64().unwrap();
        assert!((ku - 4.0054).abs() < 1e-3 * ku, "kappa_u {ku}");
        let kz = doc["unstructured_kappa1_u"].as_f64().unwrap();
        assert!((kz - 3.7258).abs() < 1e-3 * kz, "kappa1_u {kz}");
    }

    #[test]
    fn cond_respects_delta_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_example1(dir.path());
        let (code, out, _) = run(&["cond", path.to_str().unwrap(), "--deltas", "zhou", "--json"]);
        assert_eq!(code, EXIT_OK);
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        // under the Frobenius convention real3 equals zhou3
        assert_eq!(doc["deltas_real"], doc["deltas_zhou"]);

        let (code, out, _) = run(&["cond", path.to_str().unwrap(), "--deltas", "1,2,3", "--json"]);
        assert_eq!(code, EXIT_OK);
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(doc["deltas_real"][1].as_f64().unwrap(), 2.0);

        let (code, _, _) = run(&["cond", path.to_str().unwrap(), "--deltas", "nonsense"]);
        assert_eq!(code, EXIT_IO); // usage error through the flag parser
    }

    #[test]
    fn sce_is_deterministic_and_honors_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_example1(dir.path());
        let (c1, out1, _) = run(&["sce", path.to_str().unwrap(), "--seed", "5"]);
        let (c2, out2, _) = run(&["sce", path.to_str().unwrap(), "--seed", "5"]);
        assert_eq!(c1, EXIT_OK);
        assert_eq!(out1, out2);
        assert!(out1.contains("k = 5"), "default sample count: {out1}");

        let (c3, out3, _) = run(&["sce", path.to_str().unwrap(), "--seed", "6"]);
        assert_eq!(c3, EXIT_OK);
        assert_ne!(out1, out3);

        let (c4, out4, _) = run(&[
            "sce",
            path.to_str().unwrap(),
            "--mode",
            "componentwise",
            "--k",
            "10",
            "--json",
        ]);
        assert_eq!(c4, EXIT_OK);
        let doc: serde_json::Value = serde_json::from_str(&out4).unwrap();
        assert_eq!(doc["mode"], "componentwise");
        assert_eq!(doc["k"], 10);
        assert_eq!(doc["p"], 10);
    }

    #[test]
    fn sce_full_basis_matches_oracle_through_cli() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_example1(dir.path());
        let (code, out, _) = run(&["sce", path.to_str().unwrap(), "--k", "10", "--json"]);
        assert_eq!(code, EXIT_OK);
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(doc["wallis_ratio"].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn reproduce_emits_reference_columns() {
        let (code, out, _) = run(&["reproduce", "example1", "--json"]);
        assert_eq!(code, EXIT_OK);
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        let rows = doc["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 3);
        let k_u = rows[0]["pred_kappa_u"].as_f64().unwrap();
        assert!((k_u - 3.7258e-8).abs() <= 1e-3 * 3.7258e-8);
        let k1u = rows[0]["pred_kappa1_u"].as_f64().unwrap();
        assert!((k1u - 4.0054e-8).abs() <= 1e-3 * 4.0054e-8);

        // epsilon scales the predicted columns linearly
        let (_, out2, _) = run(&["reproduce", "example1", "--epsilon", "1e-10", "--json"]);
        let doc2: serde_json::Value = serde_json::from_str(&out2).unwrap();
        let k_u2 = doc2["rows"][0]["pred_kappa_u"].as_f64().unwrap();
        assert!((k_u2 - k_u / 100.0).abs() <= 1e-10 * k_u);
    }

    #[test]
    fn reproduce_is_deterministic() {
        let (c1, out1, _) = run(&["reproduce", "example2", "--seed", "3"]);
        let (c2, out2, _) = run(&["reproduce", "example2", "--seed", "3"]);
        assert_eq!(c1, EXIT_OK);
        assert_eq!(c2, EXIT_OK);
        assert_eq!(out1, out2);
    }

    #[test]
    fn perturb_round_trips_emitted_problem() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_example1(dir.path());
        let emitted = dir.path().join("perturbed.json");
        let (code, out, _) = run(&[
            "perturb",
            path.to_str().unwrap(),
            "--epsilon",
            "1e-6",
            "--seed",
            "9",
            "--emit",
            emitted.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("perturbed problem written"));

        // bit-exact decimal round trip of the emitted file
        let text = std::fs::read_to_string(&emitted).unwrap();
        let doc: ProblemFile = serde_json::from_str(&text).unwrap();
        let problem = doc.to_problem().unwrap();
        let redoc = ProblemFile::from_problem(&problem, None);
        assert_eq!(serde_json::to_string(&doc.a).unwrap(), serde_json::to_string(&redoc.a).unwrap());
        // and the perturbed problem still solves
        let (code, _, _) = run(&["solve", emitted.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
    }

    #[test]
    fn complex_problem_files_round_trip() {
        let a = CMat::from_fn(2, 2, |i, j| Cpx::new((i + 1) as f64, j as f64 - 0.5));
        let g = crate::matrix::hermitize(&CMat::from_fn(2, 2, |i, j| {
            Cpx::new(2.0 + (i == j) as u8 as f64, 0.3 * (i as f64 - j as f64))
        }));
        let q = CMat::identity(2, 2);
        let problem = RiccatiProblem::new(RiccatiKind::Care, ScalarField::Complex, a, g, q).unwrap();
        let doc = ProblemFile::from_problem(&problem, Some(vec![1.0; 6]));
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let parsed: ProblemFile = serde_json::from_str(&text).unwrap();
        let back = parsed.to_problem().unwrap();
        assert_eq!(back.a, problem.a);
        assert_eq!(back.g, problem.g);
        assert_eq!(back.q, problem.q);
        assert_eq!(parsed.deltas, Some(vec![1.0; 6]));
    }

    #[test]
    fn real_problem_rejects_imaginary_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.json");
        std::fs::write(
            &path,
            r#"{"kind":"care","field":"real","n":1,
               "a":[[[-1.0, 0.5]]], "g":[[1.0]], "q":[[1.0]]}"#,
        )
        .unwrap();
        let (code, _, err) = run(&["solve", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_PARSE);
        assert!(err.contains("imaginary"));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("solve"));
        assert!(out.contains("reproduce"));
        assert!(out.contains("perturb"));
    }
}
