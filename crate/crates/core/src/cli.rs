//! Problem files, command dispatch and report files.
//!
//! A problem file is a flat list of `key = value` lines; `#` starts a
//! comment and arrays are comma separated:
//!
//! ```text
//! m = 1
//! b = 1            # one expression per axis: b = sin(x2), -sin(x1)
//! c = 2
//! f = sin(x1)
//! n = 512          # optional from here on
//! scheme = upwind
//! tol = 1e-8
//! quad_tol = 1e-8
//! picard_tol = 1e-8
//! eps = 0.4, 0.2, 0.1, 0.05, 0.025
//! lambda_box = -1, 1
//! ```

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::characteristics::CharacteristicSolver;
use crate::constants::{
    a_priori_box, compute_constants, eps_bar, lip_bound_linear, r_of_eps, uniqueness_radius,
    ConstantsReport, EpsBar, LambdaBox, UniquenessRadius,
};
use crate::elliptic::{solve_ladder, validate_ladder, viscosity_sweep, Reference, SolverOptions};
use crate::experiments::{self, DEFAULT_LADDER};
use crate::geometry::{lip_estimate, sample, sup_norm, GridFunction, Scheme, TorusGrid};
use crate::nonlinear::{viscosity_limit_nonlinear, PicardOptions};
use crate::pde::Pde;
use crate::report::{json_object, ExperimentResult, Table, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required field `{0}`")]
    Missing(&'static str),
    #[error("field `{field}`{}: {message}", line.map_or(String::new(), |l| format!(" (line {l})")))]
    Field {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

/// A validated problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub pde: Pde,
    pub n: usize,
    pub scheme: Scheme,
    pub tol: f64,
    pub quad_tol: f64,
    pub picard_tol: f64,
    pub eps_ladder: Vec<f64>,
    pub lambda_box: Option<LambdaBox>,
    /// Samples per axis for the constants.
    pub samples: usize,
    pub max_iter: usize,
    pub picard_max_iter: usize,
}

const KEYS: [&str; 14] = [
    "m",
    "b",
    "c",
    "f",
    "n",
    "scheme",
    "tol",
    "quad_tol",
    "picard_tol",
    "eps",
    "lambda_box",
    "samples",
    "max_iter",
    "picard_max_iter",
];

pub fn load_problem(path: &Path) -> Result<ProblemSpec, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_problem(&text)
}

fn field_err(field: &str, line: usize, message: impl fmt::Display) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        line: Some(line),
        message: message.to_string(),
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, line: usize, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| field_err(field, line, e))
}

fn parse_list(field: &str, line: usize, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|s| parse_num(field, line, s)).collect()
}

pub fn parse_problem(text: &str) -> Result<ProblemSpec, ConfigError> {
    let mut entries: Vec<(&str, usize, &str)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Line {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let key = key.trim();
        let Some(key) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigError::Line {
                line,
                message: format!("unknown key `{key}`"),
            });
        };
        if entries.iter().any(|(k, _, _)| k == key) {
            return Err(ConfigError::Line {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        entries.push((key, line, value.trim()));
    }
    let get = |k: &str| {
        entries
            .iter()
            .find(|(key, _, _)| *key == k)
            .map(|(_, l, v)| (*l, *v))
    };
    let require = |k: &'static str| get(k).ok_or(ConfigError::Missing(k));

    let (ml, mv) = require("m")?;
    let m: usize = parse_num("m", ml, mv)?;
    if !(1..=2).contains(&m) {
        return Err(field_err("m", ml, "dimension must be 1 or 2"));
    }
    let (bl, bv) = require("b")?;
    let (cl, cv) = require("c")?;
    let (fl, fv) = require("f")?;
    let b_src: Vec<&str> = bv.split(',').map(str::trim).collect();
    if b_src.len() != m {
        return Err(field_err(
            "b",
            bl,
            format!("expected {m} component(s), got {}", b_src.len()),
        ));
    }
    let line_of = |field: &str| match field {
        "c" => cl,
        "f" => fl,
        _ => bl,
    };
    let pde = Pde::parse(m, &b_src, cv, fv).map_err(|e| match &e {
        crate::pde::PdeError::Parse { field, source } => field_err(field, line_of(field), source),
        crate::pde::PdeError::ForcingDependsOnLambda => field_err("f", fl, &e),
        _ => field_err("b", bl, &e),
    })?;

    let n = match get("n") {
        Some((l, v)) => parse_num("n", l, v)?,
        None if m == 1 => 512,
        None => 128,
    };
    if TorusGrid::new(m, n).is_err() {
        return Err(field_err(
            "n",
            get("n").map_or(0, |(l, _)| l),
            "need n >= 8",
        ));
    }
    let scheme = match get("scheme") {
        Some((l, v)) => v.parse::<Scheme>().map_err(|e| field_err("scheme", l, e))?,
        None => Scheme::Upwind,
    };
    let positive = |k: &'static str, default: f64| -> Result<f64, ConfigError> {
        match get(k) {
            Some((l, v)) => {
                let x: f64 = parse_num(k, l, v)?;
                if x > 0.0 && x.is_finite() {
                    Ok(x)
                } else {
                    Err(field_err(k, l, "must be positive"))
                }
            }
            None => Ok(default),
        }
    };
    let tol = positive("tol", 1e-8)?;
    let quad_tol = positive("quad_tol", tol)?;
    let picard_tol = positive("picard_tol", tol)?;
    let eps_ladder = match get("eps") {
        Some((l, v)) => {
            let ladder = parse_list("eps", l, v)?;
            validate_ladder(&ladder).map_err(|_| {
                field_err("eps", l, "ladder must be positive and strictly decreasing")
            })?;
            ladder
        }
        None => DEFAULT_LADDER.to_vec(),
    };
    let lambda_box = match get("lambda_box") {
        Some((l, v)) => {
            let bounds = parse_list("lambda_box", l, v)?;
            if bounds.len() != 2 {
                return Err(field_err("lambda_box", l, "expected `lo, hi`"));
            }
            Some(LambdaBox::new(bounds[0], bounds[1]).map_err(|e| field_err("lambda_box", l, e))?)
        }
        None => None,
    };
    let count = |k: &'static str, default: usize| -> Result<usize, ConfigError> {
        get(k).map_or(Ok(default), |(l, v)| parse_num(k, l, v))
    };
    let samples = count("samples", 64)?;
    if samples < 64 {
        return Err(field_err(
            "samples",
            get("samples").map_or(0, |(l, _)| l),
            "need at least 64",
        ));
    }
    Ok(ProblemSpec {
        pde,
        n,
        scheme,
        tol,
        quad_tol,
        picard_tol,
        eps_ladder,
        lambda_box,
        samples,
        max_iter: count("max_iter", 2_000_000)?,
        picard_max_iter: count("picard_max_iter", 50)?,
    })
}

/// Command-line overrides of a problem file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub eps: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub scheme: Option<Scheme>,
    pub tol: Option<f64>,
}

impl ProblemSpec {
    pub fn apply(mut self, o: &Overrides) -> Result<Self, ConfigError> {
        let flag = |f: &str, m: &str| ConfigError::Field {
            field: f.to_string(),
            line: None,
            message: m.to_string(),
        };
        if let Some(eps) = &o.eps {
            validate_ladder(eps)
                .map_err(|_| flag("eps", "ladder must be positive and strictly decreasing"))?;
            self.eps_ladder = eps.clone();
        }
        if let Some(n) = o.n {
            TorusGrid::new(self.pde.dim(), n).map_err(|_| flag("n", "need n >= 8"))?;
            self.n = n;
        }
        if let Some(s) = o.scheme {
            self.scheme = s;
        }
        if let Some(t) = o.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(flag("tol", "must be positive"));
            }
            self.tol = t;
        }
        Ok(self)
    }

    pub fn grid(&self) -> TorusGrid {
        TorusGrid::new(self.pde.dim(), self.n).expect("validated at load time")
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            mean_correction: true,
        }
    }

    pub fn constants(&self) -> Result<ConstantsReport, CliError> {
        let bx = match self.lambda_box {
            Some(b) => b,
            None => a_priori_box(&self.pde, self.samples).map_err(CliError::module)?,
        };
        compute_constants(&self.pde, bx, self.samples).map_err(CliError::module)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Module(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    fn module(e: impl fmt::Display) -> Self {
        CliError::Module(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Module(_) | CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Module(_) => "module",
            CliError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Structural constants and the hyperbolicity gate.
    Check,
    /// Viscous solves of a linear problem along the eps ladder.
    SolveLinear,
    /// Picard iteration down the eps ladder to the first-order limit.
    SolveNonlinear,
    /// Backward-characteristic quadrature at every node.
    Characteristics,
    /// Viscous solves compared with the characteristic solution.
    Sweep,
    /// A scripted reproduction: example1, example2, ergodic, blowup,
    /// gradient-symmetric or orbit.
    Experiment { name: String },
}

#[derive(Debug, Parser)]
#[command(
    name = "viscolab",
    version,
    about = "Viscosity and characteristic solvers on flat tori"
)]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    /// Problem file (key = value lines).
    #[arg(long, global = true)]
    pub problem: Option<PathBuf>,
    /// Directory receiving reports.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Viscosity ladder, comma separated and strictly decreasing.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub eps: Option<Vec<f64>>,
    /// Grid points per axis.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// upwind or centered.
    #[arg(long, global = true)]
    pub scheme: Option<Scheme>,
    /// Linear solver tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(dir.join(name), contents).map_err(|e| CliError::Io(e.to_string()))
}

fn constants_json(rep: &ConstantsReport, pde: &Pde) -> Vec<(String, Value)> {
    let mut e: Vec<(String, Value)> = vec![
        ("m".into(), pde.dim().into()),
        ("b0".into(), rep.b0.into()),
        ("beta".into(), rep.beta.into()),
        ("c0".into(), rep.c0.into()),
        ("f0".into(), rep.f0.into()),
        ("gamma".into(), rep.gamma.into()),
        ("r0".into(), rep.r0.into()),
        ("c0_positive".into(), rep.c0_positive.into()),
        ("cond1".into(), rep.cond1.into()),
        ("cond2".into(), rep.cond2.into()),
        ("lambda_lo".into(), rep.lambda_box.lo.into()),
        ("lambda_hi".into(), rep.lambda_box.hi.into()),
        ("samples".into(), rep.samples.into()),
        ("f_sup".into(), rep.f_sup.into()),
        ("df_sup".into(), rep.df_sup.into()),
        ("dc_sup".into(), rep.dc_sup.into()),
        ("dc_dlam_sup".into(), rep.dc_dlam_sup.into()),
    ];
    let undefined = || Value::Text("undefined".into());
    e.push((
        "eps_bar".into(),
        match eps_bar(rep) {
            Ok(EpsBar::Unbounded) => "unbounded".into(),
            Ok(EpsBar::Finite(v)) => v.into(),
            Err(_) => undefined(),
        },
    ));
    let r0 = r_of_eps(rep, 0.0).ok();
    e.push(("r_of_0".into(), r0.map_or_else(undefined, Value::from)));
    e.push((
        "rho_star_0".into(),
        rep.rho_star(0.0).map_or_else(|_| undefined(), Value::from),
    ));
    if pde.is_linear() {
        e.push((
            "lip_bound_linear_0".into(),
            lip_bound_linear(rep, 0.0).map_or_else(|_| undefined(), Value::from),
        ));
    }
    e.push((
        "uniqueness_radius".into(),
        match r0.map(|m| uniqueness_radius(rep, m)) {
            Some(Ok(UniquenessRadius::Finite(v))) => v.into(),
            Some(Ok(UniquenessRadius::Unbounded)) => "unbounded".into(),
            Some(Ok(UniquenessRadius::Degenerate)) => "degenerate".into(),
            _ => undefined(),
        },
    ));
    e
}

fn require_linear(spec: &ProblemSpec, command: &str) -> Result<(), CliError> {
    if spec.pde.is_linear() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{command} needs b and c independent of `lam`; use solve-nonlinear"
        )))
    }
}

fn check(spec: &ProblemSpec, out: &Path) -> Result<ExperimentResult, CliError> {
    let rep = spec.constants()?;
    let json = json_object(&constants_json(&rep, &spec.pde));
    write(out, "constants.json", &json)?;
    print!("{json}");
    let mut res = ExperimentResult::new("check");
    res.check(
        "c0_positive",
        rep.c0_positive,
        format!("c0 = {:.6e}", rep.c0),
    );
    res.check(
        "cond1",
        rep.cond1,
        format!("c0 - b0 - gamma = {:.6e}", rep.margin()),
    );
    res.check(
        "cond2",
        rep.cond2,
        format!(
            "(c0 - b0 - gamma)^2 - 4 f0 beta = {:.6e}",
            rep.margin().powi(2) - 4.0 * rep.f0 * rep.beta
        ),
    );
    Ok(res)
}

fn solve_linear(spec: &ProblemSpec, out: &Path) -> Result<ExperimentResult, CliError> {
    require_linear(spec, "solve-linear")?;
    let grid = spec.grid();
    let reports = solve_ladder(
        &spec.pde,
        grid,
        spec.scheme,
        &spec.eps_ladder,
        spec.solver_options(),
    )
    .map_err(CliError::module)?;
    let f = sample(spec.pde.f(), grid, None).map_err(CliError::module)?;
    let c = sample(spec.pde.c(), grid, None).map_err(CliError::module)?;
    let ratio = f.zip_with(&c, |a, b| a / b).map_err(CliError::module)?;
    let mut res = ExperimentResult::new("solve-linear");
    let mut table = Table::new(
        "solve",
        &[
            "eps",
            "residual",
            "iterations",
            "converged",
            "sup_norm",
            "lip_estimate",
            "min",
            "max",
        ],
    );
    for r in &reports {
        let u = &r.solution;
        table.push(vec![
            r.eps,
            r.residual_sup,
            r.iterations as f64,
            f64::from(u8::from(r.converged)),
            sup_norm(u),
            lip_estimate(u),
            u.min(),
            u.max(),
        ]);
        res.check(
            &format!("converged_eps_{:e}", r.eps),
            r.converged,
            format!(
                "residual {:.3e} after {} sweeps",
                r.residual_sup, r.iterations
            ),
        );
        if spec.scheme == Scheme::Upwind && r.converged {
            let slack = spec.tol / c.min().max(f64::MIN_POSITIVE) + 1e-12;
            let ok = u.min() >= ratio.min() - slack && u.max() <= ratio.max() + slack;
            res.check(
                &format!("max_principle_eps_{:e}", r.eps),
                ok,
                format!(
                    "u in [{:.6e}, {:.6e}], f/c in [{:.6e}, {:.6e}]",
                    u.min(),
                    u.max(),
                    ratio.min(),
                    ratio.max()
                ),
            );
        }
    }
    res.tables.push(table);
    if let Some(last) = reports.last() {
        write(out, "solution.csv", &last.solution.to_csv())?;
    }
    Ok(res)
}

fn sweep(spec: &ProblemSpec) -> Result<ExperimentResult, CliError> {
    require_linear(spec, "sweep")?;
    let rows = viscosity_sweep(
        &spec.pde,
        spec.grid(),
        spec.scheme,
        &spec.eps_ladder,
        Reference::Characteristics { tol: spec.quad_tol },
        spec.solver_options(),
    )
    .map_err(CliError::module)?;
    let mut res = ExperimentResult::new("sweep");
    let mut table = Table::new("sweep", &["eps", "sup_error", "iterations", "residual"]);
    for r in &rows {
        table.push(vec![
            r.eps,
            r.sup_error.unwrap_or(f64::NAN),
            r.iterations as f64,
            r.residual,
        ]);
    }
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.sup_error).collect();
    let floor = 10.0 * spec.quad_tol.max(spec.tol);
    let decreasing = errors.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor);
    res.check(
        "errors_decreasing",
        decreasing,
        errors
            .iter()
            .map(|e| format!("{e:.3e}"))
            .collect::<Vec<_>>()
            .join(", "),
    );
    res.tables.push(table);
    Ok(res)
}

fn characteristics(spec: &ProblemSpec, out: &Path) -> Result<ExperimentResult, CliError> {
    require_linear(spec, "characteristics")?;
    let u: GridFunction = CharacteristicSolver::new(&spec.pde, spec.quad_tol)
        .and_then(|s| s.value_on_grid(spec.grid()))
        .map_err(CliError::module)?;
    write(out, "characteristics.csv", &u.to_csv())?;
    let mut res = ExperimentResult::new("characteristics");
    res.param("sup_norm", sup_norm(&u));
    res.check("quadrature", true, format!("{} nodes", u.values().len()));
    Ok(res)
}

fn solve_nonlinear(spec: &ProblemSpec, out: &Path) -> Result<ExperimentResult, CliError> {
    let rep = spec.constants()?;
    let mut res = ExperimentResult::new("solve-nonlinear");
    res.check(
        "gate",
        rep.gate_passed(),
        format!("c0 - b0 - gamma = {:.6e}", rep.margin()),
    );
    if !rep.gate_passed() {
        return Ok(res);
    }
    let opts = PicardOptions {
        tol: spec.picard_tol,
        max_iter: spec.picard_max_iter,
        scheme: spec.scheme,
        linear: SolverOptions {
            tol: spec.tol.min(0.01 * spec.picard_tol),
            ..spec.solver_options()
        },
    };
    let lim = viscosity_limit_nonlinear(&spec.pde, &rep, spec.grid(), &spec.eps_ladder, opts)
        .map_err(CliError::module)?;
    write(out, "cauchy.csv", &lim.to_csv())?;
    write(out, "limit.csv", &lim.limit.to_csv())?;
    // trace of the smallest positive viscosity
    if let Some(t) = lim.traces.iter().rev().nth(1) {
        write(out, "trace.csv", &t.to_csv())?;
    }
    res.check(
        "cauchy",
        lim.cauchy,
        "successive differences never grow by more than 25%",
    );
    let bound = 10.0 * spec.picard_tol;
    res.check(
        "first_order_residual",
        lim.first_order_residual <= bound,
        format!("{:.3e} (bound {bound:.1e})", lim.first_order_residual),
    );
    if lim.traces.iter().any(|t| t.left_lambda_box) {
        res.note("some Picard iterate left the lambda box used for the constants");
    }
    Ok(res)
}

/// Runs one command and writes its reports into `out`.
pub fn dispatch(
    command: &Command,
    spec: Option<&ProblemSpec>,
    overrides: &Overrides,
    out: &Path,
) -> Result<ExperimentResult, CliError> {
    let need = || spec.ok_or_else(|| CliError::Usage("this command needs --problem".into()));
    let res = match command {
        Command::Check => check(need()?, out)?,
        Command::SolveLinear => solve_linear(need()?, out)?,
        Command::SolveNonlinear => solve_nonlinear(need()?, out)?,
        Command::Characteristics => characteristics(need()?, out)?,
        Command::Sweep => sweep(need()?)?,
        Command::Experiment { name } => {
            if !experiments::NAMES.contains(&name.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown experiment `{name}` (expected one of {})",
                    experiments::NAMES.join(", ")
                )));
            }
            experiments::run_named(name, overrides.n, overrides.eps.as_deref())
                .map_err(CliError::module)?
        }
    };
    res.write_to(out).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(res)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let Some(out) = args.out.clone() else {
        eprintln!("error: --out <dir> is required");
        return 2;
    };
    let overrides = Overrides {
        eps: args.eps.clone(),
        n: args.n,
        scheme: args.scheme,
        tol: args.tol,
    };
    let result = (|| {
        let spec = match &args.problem {
            Some(p) => Some(load_problem(p)?.apply(&overrides)?),
            None => None,
        };
        dispatch(&args.command, spec.as_ref(), &overrides, &out)
    })();
    match result {
        Ok(res) => {
            print!("{}", res.verdict_text());
            i32::from(!res.passed())
        }
        Err(e) => {
            let report = json_object(&[
                ("error".into(), Value::Text(e.kind().into())),
                ("message".into(), Value::Text(e.to_string())),
            ]);
            let _ = write(&out, "error.json", &report);
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_gets_defaults() {
        let spec = parse_problem("m = 1\nb = 1\nc = 2\nf = sin(x1)\n").unwrap();
        assert_eq!(spec.n, 512);
        assert_eq!(spec.scheme, Scheme::Upwind);
        assert_eq!(spec.tol, 1e-8);
        assert_eq!(spec.eps_ladder, DEFAULT_LADDER.to_vec());
        let two = parse_problem("m = 2\nb = 1, sqrt(2)\nc = 1\nf = 2 + cos(x1)").unwrap();
        assert_eq!(two.n, 128);
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        assert_eq!(
            parse_problem("m = 1\nb = 1\nf = 1\n"),
            Err(ConfigError::Missing("c"))
        );
        match parse_problem("m = 1\nb = 1\nc = 2\nf = 1\neps = 0.1, 0.2\n") {
            Err(ConfigError::Field { field, line, .. }) => {
                assert_eq!((field.as_str(), line), ("eps", Some(5)));
            }
            other => panic!("{other:?}"),
        }
        match parse_problem("m = 1\nb = 1\nc = cos(\nf = 1\n") {
            Err(ConfigError::Field { field, line, .. }) => {
                assert_eq!((field.as_str(), line), ("c", Some(3)));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_problem("m = 1\nwhat = 3\n"),
            Err(ConfigError::Line { line: 2, .. })
        ));
        assert!(matches!(
            parse_problem("m = 1\nm = 1\n"),
            Err(ConfigError::Line { line: 2, .. })
        ));
        assert!(parse_problem("m = 1\nb = 1\nc = 2\nf = 1\nn = 4\n").is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let spec = parse_problem("# header\nm = 1 # dimension\nb = 1\nc = 2\nf = 1\n").unwrap();
        let o = Overrides {
            eps: Some(vec![0.3, 0.1]),
            n: Some(64),
            scheme: Some(Scheme::Centered),
            tol: Some(1e-6),
        };
        let s = spec.clone().apply(&o).unwrap();
        assert_eq!((s.n, s.scheme, s.tol), (64, Scheme::Centered, 1e-6));
        assert_eq!(s.eps_ladder, vec![0.3, 0.1]);
        let bad = Overrides {
            eps: Some(vec![0.1, 0.3]),
            ..Overrides::default()
        };
        assert!(spec.apply(&bad).is_err());
    }
}
