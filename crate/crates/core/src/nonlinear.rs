//! Picard iteration for `<b(u,x), grad u> + c(u,x) u = f`.
//!
//! Each step freezes `lam = u_k` in the coefficients and solves a linear
//! problem, either the viscous grid equation or the backward integral. Under
//! the gate every iterate is `R(ε)`-Lipschitz and the increments
//! `w_k = u_{k+1} - u_k` shrink by at least `ρ* = (beta R(ε) + gamma)/c0`.

use thiserror::Error;

use crate::characteristics::{flow, CharError, CharacteristicSolver};
use crate::constants::{ConstantsError, ConstantsReport};
use crate::elliptic::{
    assemble, solve_with, validate_ladder, EllipticError, SolveReport, SolverOptions,
};
use crate::geometry::{lip_estimate, sup_norm, torus_distance, GridFunction, Scheme, TorusGrid};
use crate::pde::Pde;

#[derive(Debug, Clone, Error)]
pub enum NonlinearError {
    #[error(transparent)]
    Gate(#[from] ConstantsError),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Characteristics(#[from] CharError),
    #[error("linear solve did not converge at Picard step {step}: residual {residual:e}")]
    LinearSolve { step: usize, residual: f64 },
    #[error("Picard iteration diverged: {consecutive} consecutive ratios >= 1")]
    Diverged {
        consecutive: usize,
        trace: Box<PicardTrace>,
    },
    #[error("Picard iteration did not reach tol after {0} steps")]
    MaxIter(usize),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// History of one Picard run.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardTrace {
    /// `u_0, u_1, ...`.
    pub iterates: Vec<GridFunction>,
    /// `‖u_{k+1} - u_k‖_∞`.
    pub w_norms: Vec<f64>,
    /// `‖w_k‖ / ‖w_{k-1}‖`; `None` for `k = 0` or a zero denominator.
    pub ratios: Vec<Option<f64>>,
    pub rho_star: Option<f64>,
    pub converged: bool,
    /// Some iterate left the `lam` box the constants were computed on.
    pub left_lambda_box: bool,
}

impl PicardTrace {
    fn new(u0: GridFunction, rho_star: Option<f64>) -> Self {
        Self {
            iterates: vec![u0],
            w_norms: Vec::new(),
            ratios: Vec::new(),
            rho_star,
            converged: false,
            left_lambda_box: false,
        }
    }

    /// Records `u_{k+1}`; returns the number of trailing ratios `>= 1`.
    fn push(&mut self, next: GridFunction, rep: &ConstantsReport) -> usize {
        let last = self.iterates.last().expect("trace starts with u0");
        let w = next.sup_distance(last).unwrap_or(f64::INFINITY);
        let ratio = match self.w_norms.last() {
            Some(&prev) if prev > 0.0 => Some(w / prev),
            _ => None,
        };
        if next.min() < rep.lambda_box.lo || next.max() > rep.lambda_box.hi {
            self.left_lambda_box = true;
        }
        self.w_norms.push(w);
        self.ratios.push(ratio);
        self.iterates.push(next);
        self.ratios
            .iter()
            .rev()
            .take_while(|r| matches!(r, Some(v) if *v >= 1.0))
            .count()
    }

    pub fn last(&self) -> &GridFunction {
        self.iterates.last().expect("trace starts with u0")
    }

    /// CSV with header `k,w_norm,ratio,rho_star`; missing values are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,w_norm,ratio,rho_star\n");
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        for (k, (w, r)) in self.w_norms.iter().zip(&self.ratios).enumerate() {
            out.push_str(&format!(
                "{k},{w:.16e},{},{}\n",
                fmt(*r),
                fmt(self.rho_star)
            ));
        }
        out
    }
}

const DIVERGENCE_RUN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
    pub linear: SolverOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
            scheme: Scheme::Upwind,
            linear: SolverOptions {
                tol: 1e-11,
                ..SolverOptions::default()
            },
        }
    }
}

fn require_gate(rep: &ConstantsReport) -> Result<(), NonlinearError> {
    crate::constants::eps_bar(rep)?;
    Ok(())
}

/// `sup |A(u) u - f|`, the residual of the discrete nonlinear equation.
pub fn nonlinear_residual(
    pde: &Pde,
    eps: f64,
    scheme: Scheme,
    u: &GridFunction,
) -> Result<f64, NonlinearError> {
    let sys = assemble(pde, u.grid(), eps, scheme, Some(u))?;
    Ok(sys
        .residual(u.values())
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs())))
}

/// Picard iteration on the viscous equation. `eps = 0` is accepted with
/// the upwind scheme and solves the first-order grid equation directly.
pub fn picard_elliptic(
    pde: &Pde,
    constants: &ConstantsReport,
    eps: f64,
    u0: &GridFunction,
    opts: PicardOptions,
) -> Result<(SolveReport, PicardTrace), NonlinearError> {
    require_gate(constants)?;
    let rho_star = constants.rho_star(eps)?;
    let mut trace = PicardTrace::new(u0.clone(), Some(rho_star));
    for step in 0..opts.max_iter {
        let current = trace.last().clone();
        let sys = assemble(pde, current.grid(), eps, opts.scheme, Some(&current))?;
        let rep = solve_with(&sys, Some(&current), opts.linear);
        if !rep.converged {
            return Err(NonlinearError::LinearSolve {
                step,
                residual: rep.residual_sup,
            });
        }
        let run = trace.push(rep.solution, constants);
        if *trace.w_norms.last().unwrap() < opts.tol {
            trace.converged = true;
            let solution = trace.last().clone();
            let residual_sup = nonlinear_residual(pde, eps, opts.scheme, &solution)?;
            return Ok((
                SolveReport {
                    solution,
                    residual_sup,
                    iterations: step + 1,
                    eps,
                    converged: true,
                },
                trace,
            ));
        }
        if run >= DIVERGENCE_RUN {
            return Err(NonlinearError::Diverged {
                consecutive: run,
                trace: Box::new(trace),
            });
        }
    }
    Err(NonlinearError::MaxIter(opts.max_iter))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Truncation tolerance of each backward integral.
    pub quad_tol: f64,
    /// RK4 step; `None` picks one from `quad_tol`.
    pub dt: Option<f64>,
}

impl Default for IntegralOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            quad_tol: 1e-9,
            dt: None,
        }
    }
}

/// Fixed point of `u ↦ ∫_{-∞}^0 f(φ^u_t x) exp(-∫_t^0 c(u, φ^u_s x) ds) dt`
/// at the grid nodes, `φ^u` being the flow of `b(u(x), x)` with `u`
/// interpolated between nodes.
pub fn picard_integral(
    pde: &Pde,
    constants: &ConstantsReport,
    grid: TorusGrid,
    u0: &GridFunction,
    opts: IntegralOptions,
) -> Result<(GridFunction, PicardTrace), NonlinearError> {
    require_gate(constants)?;
    if u0.grid() != grid {
        return Err(NonlinearError::Precondition(
            "u0 lives on another grid".into(),
        ));
    }
    let rho_star = constants.rho_star(0.0).ok();
    let mut trace = PicardTrace::new(u0.clone(), rho_star);
    for _ in 0..opts.max_iter {
        let current = trace.last().clone();
        let mut solver = CharacteristicSolver::frozen(
            pde,
            &current,
            constants.c0,
            constants.f_sup,
            opts.quad_tol,
        )?;
        if let Some(dt) = opts.dt {
            solver = solver.with_step(dt)?;
        }
        let next = solver.value_on_grid(grid)?;
        let run = trace.push(next, constants);
        if *trace.w_norms.last().unwrap() < opts.tol {
            trace.converged = true;
            return Ok((trace.last().clone(), trace));
        }
        if run >= DIVERGENCE_RUN {
            return Err(NonlinearError::Diverged {
                consecutive: run,
                trace: Box::new(trace),
            });
        }
    }
    Err(NonlinearError::MaxIter(opts.max_iter))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRow {
    pub eps: f64,
    pub picard_iterations: usize,
    pub residual: f64,
    /// `‖u_{ε_{i-1}} - u_{ε_i}‖_∞`.
    pub diff_to_previous: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViscosityLimit {
    /// One row per ladder value followed by a final `ε = 0` row.
    pub rows: Vec<LimitRow>,
    pub limit: GridFunction,
    /// Residual of the limit in the upwind first-order grid equation.
    pub first_order_residual: f64,
    /// Successive differences never grow by more than 25%.
    pub cauchy: bool,
    pub traces: Vec<PicardTrace>,
}

impl ViscosityLimit {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,picard_iterations,residual,diff_to_previous\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{},{:.16e},{}\n",
                r.eps,
                r.picard_iterations,
                r.residual,
                r.diff_to_previous
                    .map_or(String::new(), |d| format!("{d:.16e}"))
            ));
        }
        out
    }
}

/// Runs [`picard_elliptic`] down the ladder, each value warm-started from
/// the previous one, and ends with the upwind `ε = 0` equation.
pub fn viscosity_limit_nonlinear(
    pde: &Pde,
    constants: &ConstantsReport,
    grid: TorusGrid,
    eps_ladder: &[f64],
    opts: PicardOptions,
) -> Result<ViscosityLimit, NonlinearError> {
    validate_ladder(eps_ladder)?;
    require_gate(constants)?;
    let mut u = GridFunction::zeros(grid);
    let mut rows = Vec::with_capacity(eps_ladder.len() + 1);
    let mut traces = Vec::with_capacity(eps_ladder.len() + 1);
    let mut diffs = Vec::new();
    for (i, &eps) in eps_ladder.iter().chain(&[0.0]).enumerate() {
        let scheme = if eps == 0.0 {
            Scheme::Upwind
        } else {
            opts.scheme
        };
        let (rep, trace) =
            picard_elliptic(pde, constants, eps, &u, PicardOptions { scheme, ..opts })?;
        let diff = (i > 0).then(|| rep.solution.sup_distance(&u).unwrap_or(f64::INFINITY));
        if let Some(d) = diff {
            diffs.push(d);
        }
        rows.push(LimitRow {
            eps,
            picard_iterations: rep.iterations,
            residual: rep.residual_sup,
            diff_to_previous: diff,
        });
        traces.push(trace);
        u = rep.solution;
    }
    let floor = 10.0 * opts.tol;
    let cauchy = diffs.windows(2).all(|w| w[1] <= 1.25 * w[0] + floor);
    let first_order_residual = rows.last().expect("ladder is nonempty").residual;
    Ok(ViscosityLimit {
        rows,
        limit: u,
        first_order_residual,
        cauchy,
        traces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallSample {
    pub t: f64,
    pub x: [f64; 2],
    pub distance: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    /// `b0 + beta M`.
    pub rate: f64,
    pub max_ratio: f64,
    pub pass: bool,
    pub samples: Vec<GronwallSample>,
}

/// Compares the flows of `b(u_a, ·)` and `b(u_b, ·)` with the bound
/// `beta ‖u_b - u_a‖ e^{|t|(b0 + beta M)} / (b0 + beta M)` on a
/// `samples × samples^m` grid of times in `[-t_max, t_max]` and points.
#[allow(clippy::too_many_arguments)]
pub fn gronwall_certificate(
    pde: &Pde,
    constants: &ConstantsReport,
    u_a: &GridFunction,
    u_b: &GridFunction,
    m: f64,
    t_max: f64,
    samples: usize,
    dt: f64,
) -> Result<GronwallReport, NonlinearError> {
    for (name, u) in [("u_a", u_a), ("u_b", u_b)] {
        let lip = lip_estimate(u);
        if lip > m * (1.0 + 1e-12) {
            return Err(NonlinearError::Precondition(format!(
                "lip_estimate({name}) = {lip} exceeds M = {m}"
            )));
        }
    }
    let rate = constants.b0 + constants.beta * m;
    if constants.beta > 0.0 && rate <= 0.0 {
        return Err(NonlinearError::Precondition(format!(
            "b0 + beta M = {rate} is not positive"
        )));
    }
    if samples < 2 {
        return Err(NonlinearError::Precondition(
            "need at least 2 samples".into(),
        ));
    }
    let v = u_b.sup_distance(u_a).map_err(EllipticError::from)?;
    let dim = pde.dim();
    let mut points = Vec::new();
    let per_axis = samples;
    let h = std::f64::consts::TAU / per_axis as f64;
    for k in 0..per_axis.pow(dim as u32) {
        points.push([(k % per_axis) as f64 * h, (k / per_axis) as f64 * h]);
    }
    let mut out = Vec::new();
    let mut max_ratio = 0.0f64;
    for j in 0..samples {
        let t = -t_max + 2.0 * t_max * j as f64 / (samples - 1) as f64;
        let bound = if constants.beta == 0.0 || v == 0.0 {
            0.0
        } else {
            constants.beta * v * (t.abs() * rate).exp() / rate
        };
        for x in &points {
            let ya = flow(pde.b(), &x[..dim], t, dt, Some(u_a))?;
            let yb = flow(pde.b(), &x[..dim], t, dt, Some(u_b))?;
            let d = torus_distance(&ya, &yb);
            let ratio = if bound > 0.0 {
                d / bound
            } else if d <= 1e-14 {
                0.0
            } else {
                f64::INFINITY
            };
            max_ratio = max_ratio.max(ratio);
            out.push(GronwallSample {
                t,
                x: *x,
                distance: d,
                bound,
            });
        }
    }
    Ok(GronwallReport {
        rate,
        max_ratio,
        pass: max_ratio <= 1.01,
        samples: out,
    })
}

/// `sup_norm` of every Picard iterate; a convenience for reports.
pub fn iterate_norms(trace: &PicardTrace) -> Vec<f64> {
    trace.iterates.iter().map(sup_norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{a_priori_box, compute_constants};

    fn setup(b: &str, c: &str, f: &str, n: usize) -> (Pde, ConstantsReport, TorusGrid) {
        let pde = Pde::parse(1, &[b], c, f).unwrap();
        let bx = a_priori_box(&pde, 64).unwrap();
        let rep = compute_constants(&pde, bx, 64).unwrap();
        (pde, rep, TorusGrid::new(1, n).unwrap())
    }

    #[test]
    fn zero_forcing_stops_immediately() {
        let (pde, rep, grid) = setup("1 + 0.1*lam", "2 + 0.1*lam", "0", 64);
        let (sol, trace) = picard_elliptic(
            &pde,
            &rep,
            0.1,
            &GridFunction::zeros(grid),
            PicardOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.solution.values().iter().all(|&v| v == 0.0));
        assert_eq!(trace.w_norms, vec![0.0]);
    }

    #[test]
    fn linear_problem_is_stationary_after_first_solve() {
        let (pde, rep, grid) = setup("1", "2", "sin(x1)", 128);
        let (sol, trace) = picard_elliptic(
            &pde,
            &rep,
            0.1,
            &GridFunction::zeros(grid),
            PicardOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.iterations, 2);
        assert!(trace.w_norms[1] < 1e-9);
    }

    #[test]
    fn gate_failure_is_an_error() {
        let (pde, rep, grid) = setup("1 + 5*lam", "1", "2 + sin(x1)", 64);
        assert!(!rep.gate_passed());
        assert!(matches!(
            picard_elliptic(
                &pde,
                &rep,
                0.1,
                &GridFunction::zeros(grid),
                PicardOptions::default()
            ),
            Err(NonlinearError::Gate(_))
        ));
    }

    #[test]
    fn integral_route_reproduces_linear_characteristics() {
        let (pde, rep, grid) = setup("1", "2", "sin(x1)", 64);
        let opts = IntegralOptions {
            tol: 1e-9,
            quad_tol: 1e-9,
            ..IntegralOptions::default()
        };
        let (u, _) = picard_integral(&pde, &rep, grid, &GridFunction::zeros(grid), opts).unwrap();
        let reference = CharacteristicSolver::new(&pde, 1e-9)
            .unwrap()
            .value_on_grid(grid)
            .unwrap();
        assert!(u.sup_distance(&reference).unwrap() <= 2e-9);
    }

    #[test]
    fn gronwall_trivial_cases() {
        let (pde, rep, grid) = setup("1 + 0.1*lam", "3", "1 + 0.5*sin(x1)", 64);
        let u = GridFunction::from_fn(grid, |x| 0.3 + 0.1 * x[0].sin());
        let same = gronwall_certificate(&pde, &rep, &u, &u, 1.0, 1.0, 5, 0.01).unwrap();
        assert!(same.pass && same.max_ratio == 0.0);
        let (lin, rep_lin, _) = setup("1 + sin(x1)*0.5", "3", "1", 64);
        let other = u.map(|v| v + 0.01);
        let r = gronwall_certificate(&lin, &rep_lin, &u, &other, 1.0, 1.0, 5, 0.01).unwrap();
        assert!(r.pass && r.samples.iter().all(|s| s.distance == 0.0));
        let steep = GridFunction::from_fn(grid, |x| 3.0 * x[0].sin());
        assert!(matches!(
            gronwall_certificate(&pde, &rep, &steep, &u, 1.0, 1.0, 5, 0.01),
            Err(NonlinearError::Precondition(_))
        ));
    }
}
