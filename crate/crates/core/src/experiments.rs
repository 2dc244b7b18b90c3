//! Scripted reproductions: the two explicit nonlinear examples on the
//! circle, the ergodic time average on the 2-torus, and the divergence of
//! viscous approximations when the zero-order term vanishes.
//!
//! Both explicit examples are built from a linear surrogate
//! `U' + K U = f` and a substitution `U = U(u, x)`. Writing
//! `b = ∂U/∂λ` and `c λ = ∂U/∂x + K U` turns `<b(u,x), u'> + c(u,x) u = f`
//! into the surrogate, so every pointwise root `u` of `U(u, x) = U(x)` that
//! is smooth in `x` solves the nonlinear equation.

use std::f64::consts::TAU;

use rayon::prelude::*;
use thiserror::Error;

use crate::characteristics::{
    find_period_s1, periodic_orbit_forms, periodic_orbit_value, CharError, CharacteristicSolver,
};
use crate::constants::{
    a_priori_box, classify_repeller, compute_constants, jacobian_at, ConstantsError, LambdaBox,
    RepellerClass,
};
use crate::elliptic::{assemble, solve_with, validate_ladder, EllipticError, SolverOptions};
use crate::expr::{EvalError, FieldExpr, Node, ParseError, Var};
use crate::geometry::{sup_norm, GeometryError, GridFunction, Scheme, TorusGrid};
use crate::nonlinear::{
    picard_integral, viscosity_limit_nonlinear, IntegralOptions, NonlinearError, PicardOptions,
};
use crate::pde::{Pde, PdeError};
use crate::report::{ExperimentResult, Table};

#[derive(Debug, Clone, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Characteristics(#[from] CharError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Nonlinear(#[from] NonlinearError),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

type Result<T> = std::result::Result<T, ExperimentError>;

pub const DEFAULT_LADDER: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

/// Experiments runnable by name from the command line.
pub const NAMES: [&str; 6] = [
    "example1",
    "example2",
    "ergodic",
    "blowup",
    "gradient-symmetric",
    "orbit",
];

fn num(v: f64) -> String {
    format!("({v:?})")
}

fn grid1(n: usize) -> Result<TorusGrid> {
    Ok(TorusGrid::new(1, n)?)
}

/// Deterministic points of `[0, 2π) × [lo, hi]` from an additive
/// recurrence with irrational steps.
fn weyl_points(count: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let (a, b) = (0.5 * (5f64.sqrt() - 1.0), 2f64.sqrt() - 1.0);
    (1..=count)
        .map(|k| {
            let s = (k as f64 * a).fract();
            let t = (k as f64 * b).fract();
            (TAU * s, lo + (hi - lo) * t)
        })
        .collect()
}

/// Solution of `U' + K U = f` at the nodes, by the closed-orbit formula
/// along `x' = 1`.
pub fn linear_surrogate(k: f64, f: &FieldExpr, grid: TorusGrid) -> Result<GridFunction> {
    let pde = Pde::new(
        vec![FieldExpr::constant(1.0, 1)],
        FieldExpr::constant(k, 1),
        f.clone(),
    )?;
    let orbit = find_period_s1(&pde.b()[0], 1e-12)?;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| periodic_orbit_value(&pde, &orbit, grid.coords(i)[0]))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(GridFunction::new(grid, values)?)
}

/// Eighth-order central difference of a periodic grid function.
pub fn periodic_derivative(u: &GridFunction) -> GridFunction {
    const W: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let grid = u.grid();
    let h = grid.spacing();
    let v = u.values();
    let values = (0..grid.len())
        .map(|i| {
            W.iter()
                .enumerate()
                .map(|(j, w)| {
                    let s = j as isize + 1;
                    w * (v[grid.neighbor(i, 0, s)] - v[grid.neighbor(i, 0, -s)])
                })
                .sum::<f64>()
                / h
        })
        .collect();
    GridFunction::new(grid, values).expect("finite differences of finite values")
}

/// `sup |b(u,x) u' + c(u,x) u - f|` with an eighth-order derivative.
pub fn first_order_residual(pde: &Pde, u: &GridFunction) -> Result<f64> {
    let du = periodic_derivative(u);
    let grid = u.grid();
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let x = [grid.coords(i)[0]];
        let lam = u.values()[i];
        let r = pde.b()[0].eval(&x, lam)? * du.values()[i] + pde.c().eval(&x, lam)? * lam
            - pde.f().eval(&x, 0.0)?;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// `c(λ, x) = (∂U/∂x + K U)/λ` and `b = ∂U/∂λ` for a substitution `U(λ, x)`.
pub fn derived_coefficients(substitution: &FieldExpr, k: f64) -> (FieldExpr, FieldExpr) {
    let b = substitution.differentiate(Var::Lam);
    let ux = substitution.differentiate(Var::Axis(0));
    let c = Node::div(
        Node::add(
            ux.into_node(),
            Node::mul(Node::c(k), substitution.node().clone()),
        ),
        Node::var(Var::Lam),
    );
    (b, FieldExpr::from_node(c, 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example1Params {
    pub k: f64,
    pub beta: f64,
    pub alpha: f64,
    pub f: String,
    pub n: usize,
    pub eps_ladder: Vec<f64>,
    pub tol: f64,
    /// Run the nonlinear viscosity limit and the integral route.
    pub run_limit: bool,
}

impl Default for Example1Params {
    fn default() -> Self {
        Self {
            k: 10.0,
            beta: 0.1,
            alpha: 0.5,
            f: "2 + sin(x1)".into(),
            n: 512,
            eps_ladder: DEFAULT_LADDER.to_vec(),
            tol: 1e-9,
            run_limit: true,
        }
    }
}

/// Stated coefficients of the first example:
/// `b = 1 + β(1 + α cos x) λ`,
/// `c = K + Kβ(1 + α cos x) λ/2 - βα λ sin x / 2`.
pub fn example1_pde(k: f64, beta: f64, alpha: f64, f: &str) -> Result<Pde> {
    let (k, b, a) = (num(k), num(beta), num(alpha));
    Ok(Pde::parse(
        1,
        &[&format!("1 + {b}*(1 + {a}*cos(x1))*lam")],
        &format!("{k} + {k}*{b}*(1 + {a}*cos(x1))*lam/2 - {b}*{a}*lam*sin(x1)/2"),
        f,
    )?)
}

/// `U(λ, x) = λ + β(1 + α cos x) λ²/2`.
pub fn example1_substitution(beta: f64, alpha: f64) -> Result<FieldExpr> {
    Ok(FieldExpr::parse(
        &format!("lam + {}*(1 + {}*cos(x1))*lam^2/2", num(beta), num(alpha)),
        1,
    )?)
}

/// Branches of `U = u + β(1 + α cos x) u²/2` from the surrogate values.
#[derive(Debug, Clone, PartialEq)]
pub struct Branches {
    pub discriminant: GridFunction,
    /// `None` where the discriminant is not positive.
    pub plus: Vec<Option<f64>>,
    /// Absent entirely when `β = 0`.
    pub minus: Option<Vec<Option<f64>>>,
}

pub fn example1_branches(surrogate: &GridFunction, beta: f64, alpha: f64) -> Branches {
    let grid = surrogate.grid();
    let q: Vec<f64> = (0..grid.len())
        .map(|i| beta * (1.0 + alpha * grid.coords(i)[0].cos()))
        .collect();
    let disc: Vec<f64> = surrogate
        .values()
        .iter()
        .zip(&q)
        .map(|(u, q)| 1.0 + 2.0 * q * u)
        .collect();
    // u+ = 2U/(1 + √Δ) is the cancellation-free form of (-1 + √Δ)/q
    let plus = disc
        .iter()
        .zip(surrogate.values())
        .map(|(d, u)| (*d > 0.0).then(|| 2.0 * u / (1.0 + d.sqrt())))
        .collect();
    let minus = (beta != 0.0).then(|| {
        disc.iter()
            .zip(&q)
            .map(|(d, q)| (*d > 0.0 && *q != 0.0).then(|| (-1.0 - d.sqrt()) / q))
            .collect()
    });
    Branches {
        discriminant: GridFunction::new(grid, disc).expect("finite discriminant"),
        plus,
        minus,
    }
}

/// Maximal runs of nodes where `values <= 0`, as `(x_start, x_end)`.
pub fn nonpositive_intervals(g: &GridFunction) -> Vec<(f64, f64)> {
    let grid = g.grid();
    let n = grid.len();
    let bad: Vec<bool> = g.values().iter().map(|v| *v <= 0.0).collect();
    if bad.iter().all(|b| *b) {
        return vec![(0.0, TAU)];
    }
    // start scanning just after a good node so wrapped runs stay whole
    let first_good = bad.iter().position(|b| !b).expect("some node is good");
    let mut out = Vec::new();
    let mut run: Option<usize> = None;
    for step in 1..=n {
        let i = (first_good + step) % n;
        match (bad[i], run) {
            (true, None) => run = Some(i),
            (false, Some(s)) => {
                let end = (i + n - 1) % n;
                out.push((grid.coords(s)[0], grid.coords(end)[0]));
                run = None;
            }
            _ => {}
        }
    }
    out
}

fn collect_branch(branch: &[Option<f64>], grid: TorusGrid) -> Option<GridFunction> {
    let values: Option<Vec<f64>> = branch.iter().copied().collect();
    values.map(|v| GridFunction::new(grid, v).expect("finite branch"))
}

pub fn example1(p: &Example1Params) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new("example1");
    res.param("K", p.k);
    res.param("beta", p.beta);
    res.param("alpha", p.alpha);
    res.param("f", p.f.as_str());
    res.param("n", p.n);
    if p.k <= 0.0 {
        return Err(ExperimentError::Precondition(format!(
            "K = {} must be positive",
            p.k
        )));
    }
    if p.alpha.abs() >= 1.0 {
        return Err(ExperimentError::Precondition(format!(
            "|alpha| = {} must be below 1",
            p.alpha.abs()
        )));
    }
    let grid = grid1(p.n)?;
    let f = FieldExpr::parse(&p.f, 1)?;
    let f_grid = GridFunction::from_fn(grid, |x| f.eval(&x[..1], 0.0).unwrap_or(f64::NAN));
    if !f_grid.values().iter().all(|v| *v > 0.0) {
        return Err(ExperimentError::Precondition("f must be positive".into()));
    }

    let surrogate = linear_surrogate(p.k, &f, grid)?;
    let br = example1_branches(&surrogate, p.beta, p.alpha);
    let mut table = Table::new("branches", &["x", "U", "discriminant", "u_plus", "u_minus"]);
    for i in 0..grid.len() {
        table.push(vec![
            grid.coords(i)[0],
            surrogate.values()[i],
            br.discriminant.values()[i],
            br.plus[i].unwrap_or(f64::NAN),
            br.minus.as_ref().and_then(|m| m[i]).unwrap_or(f64::NAN),
        ]);
    }
    res.tables.push(table);

    let gaps = nonpositive_intervals(&br.discriminant);
    let mut gap_table = Table::new("nonexistence", &["x_start", "x_end"]);
    for (a, b) in &gaps {
        gap_table.push(vec![*a, *b]);
    }
    res.tables.push(gap_table);
    res.param("discriminant_min", br.discriminant.min());
    res.check(
        "discriminant_positive",
        gaps.is_empty(),
        format!(
            "min discriminant {:.6e}, {} nonexistence interval(s)",
            br.discriminant.min(),
            gaps.len()
        ),
    );

    let pde = example1_pde(p.k, p.beta, p.alpha, &p.f)?;
    let u_plus = collect_branch(&br.plus, grid);
    let u_minus = br.minus.as_ref().and_then(|m| collect_branch(m, grid));
    let branch_count = usize::from(u_plus.is_some()) + usize::from(u_minus.is_some());
    res.param("branch_count", branch_count);

    // substitution consistency: derived and stated coefficients agree
    let subst = example1_substitution(p.beta, p.alpha)?;
    let (b_der, c_der) = derived_coefficients(&subst, p.k);
    let mut worst = 0.0f64;
    for (x, lam) in weyl_points(1000, -2.0, 2.0) {
        if lam.abs() < 0.05 {
            continue;
        }
        let pairs = [(&b_der, &pde.b()[0]), (&c_der, pde.c())];
        for (d, s) in pairs {
            let (dv, sv) = (d.eval(&[x], lam)?, s.eval(&[x], lam)?);
            worst = worst.max((dv - sv).abs() / sv.abs().max(1.0));
        }
    }
    res.check(
        "coefficient_consistency",
        worst <= 1e-12,
        format!("max relative gap {worst:.3e} at 1000 points"),
    );

    if let Some(up) = &u_plus {
        let r = first_order_residual(&pde, up)?;
        res.param("residual_u_plus", r);
        res.check("residual_u_plus", r <= 1e-6, format!("{r:.3e}"));
        res.check(
            "u_plus_positive",
            up.min() > 0.0,
            format!("min {:.6e}", up.min()),
        );
    }
    if let Some(um) = &u_minus {
        let r = first_order_residual(&pde, um)?;
        res.param("residual_u_minus", r);
        res.check("residual_u_minus", r <= 1e-6, format!("{r:.3e}"));
        res.check(
            "u_minus_negative",
            um.max() < 0.0,
            format!("max {:.6e}", um.max()),
        );
    }

    if !p.run_limit {
        return Ok(res);
    }
    let bx = a_priori_box(&pde, 64)?;
    let rep = compute_constants(&pde, bx, 64)?;
    res.param("lambda_lo", bx.lo);
    res.param("lambda_hi", bx.hi);
    res.param("b0", rep.b0);
    res.param("c0", rep.c0);
    res.param("gamma", rep.gamma);
    res.param("f0", rep.f0);
    res.param("beta_const", rep.beta);
    if !rep.gate_passed() {
        res.note("hyperbolicity gate fails on the a-priori box; nonlinear solves skipped");
        return Ok(res);
    }
    let opts = PicardOptions {
        tol: p.tol,
        ..PicardOptions::default()
    };
    let lim = viscosity_limit_nonlinear(&pde, &rep, grid, &p.eps_ladder, opts)?;
    let mut cauchy = Table::new(
        "cauchy",
        &["eps", "picard_iterations", "residual", "diff_to_previous"],
    );
    for r in &lim.rows {
        cauchy.push(vec![
            r.eps,
            r.picard_iterations as f64,
            r.residual,
            r.diff_to_previous.unwrap_or(f64::NAN),
        ]);
    }
    res.tables.push(cauchy);
    res.check(
        "cauchy",
        lim.cauchy,
        "successive differences never grow by more than 25%",
    );

    let (integral, _) = picard_integral(
        &pde,
        &rep,
        grid,
        &GridFunction::zeros(grid),
        IntegralOptions::default(),
    )?;
    let routes = lim.limit.sup_distance(&integral)?;
    res.param("route_gap", routes);
    res.check("routes_agree", routes <= 1e-2, format!("{routes:.3e}"));

    let mut limit_table = Table::new("limit", &["x", "viscosity_limit", "integral_route"]);
    for i in 0..grid.len() {
        limit_table.push(vec![
            grid.coords(i)[0],
            lim.limit.values()[i],
            integral.values()[i],
        ]);
    }
    res.tables.push(limit_table);

    let d_plus = u_plus
        .as_ref()
        .map(|u| lim.limit.sup_distance(u))
        .transpose()?;
    let d_minus = u_minus
        .as_ref()
        .map(|u| lim.limit.sup_distance(u))
        .transpose()?;
    let selected = match (d_plus, d_minus) {
        (Some(a), Some(b)) if b < a => "u_minus",
        (Some(_), _) => "u_plus",
        (None, Some(_)) => "u_minus",
        (None, None) => "none",
    };
    res.param("selected_branch", selected);
    if let Some(d) = d_plus {
        res.param("limit_to_u_plus", d);
        res.check("limit_is_u_plus", d <= 1e-2, format!("{d:.3e}"));
        let di = integral.sup_distance(u_plus.as_ref().unwrap())?;
        res.check("integral_is_u_plus", di <= 1e-2, format!("{di:.3e}"));
    }
    if let Some(d) = d_minus {
        res.param("limit_to_u_minus", d);
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example2Params {
    pub k: f64,
    pub beta: f64,
    pub alpha: f64,
    pub f: String,
    pub n: usize,
    /// Subintervals of the bracketing scan.
    pub scan: usize,
}

impl Default for Example2Params {
    fn default() -> Self {
        Self {
            k: 10.0,
            beta: 0.1,
            alpha: 0.5,
            f: "2 + sin(x1)".into(),
            n: 512,
            scan: 2000,
        }
    }
}

/// `g(u) = (e^{-u²} - 1)/u`, continued by `g(0) = 0`.
pub fn example2_g(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        (-u * u).exp_m1() / u
    }
}

/// `U(λ, x) = λ - (β/2)(1 + α cos x)(e^{-λ²} - 1)/λ`.
pub fn example2_substitution(beta: f64, alpha: f64) -> Result<FieldExpr> {
    Ok(FieldExpr::parse(
        &format!(
            "lam - {}/2*(1 + {}*cos(x1))*(exp(-lam^2) - 1)/lam",
            num(beta),
            num(alpha)
        ),
        1,
    )?)
}

/// All roots of `h` on `[lo, hi]` found by a sign scan and bisection.
pub fn bracketed_roots(h: impl Fn(f64) -> f64, lo: f64, hi: f64, scan: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let xs: Vec<f64> = (0..=scan)
        .map(|k| lo + (hi - lo) * k as f64 / scan as f64)
        .collect();
    let hs: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    for k in 0..scan {
        let (mut a, mut b) = (xs[k], xs[k + 1]);
        let (mut ha, hb) = (hs[k], hs[k + 1]);
        if ha == 0.0 {
            roots.push(a);
            continue;
        }
        if k + 1 == scan && hb == 0.0 {
            roots.push(b);
        }
        if ha * hb >= 0.0 {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let hm = h(m);
            if hm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if ha * hm < 0.0 {
                b = m;
            } else {
                a = m;
                ha = hm;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

pub fn example2(p: &Example2Params) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new("example2");
    res.param("K", p.k);
    res.param("beta", p.beta);
    res.param("alpha", p.alpha);
    res.param("f", p.f.as_str());
    res.param("n", p.n);
    if p.k <= 0.0 || p.beta < 0.0 {
        return Err(ExperimentError::Precondition(
            "need K > 0 and beta >= 0".into(),
        ));
    }
    let grid = grid1(p.n)?;
    let f = FieldExpr::parse(&p.f, 1)?;
    let surrogate = linear_surrogate(p.k, &f, grid)?;

    // g(λ)/λ ∈ [-1, 0), so c = K + (β/2)[α sin x - K(1 + α cos x)] g(λ)/λ
    // stays within K ± (β/2)(K(1 + |α|) + |α|).
    let spread = 0.5 * p.beta * (p.k * (1.0 + p.alpha.abs()) + p.alpha.abs());
    let (cmin, cmax) = (p.k - spread, p.k + spread);
    if cmin <= 0.0 {
        return Err(ExperimentError::Precondition(format!(
            "K = {} too small: c may vanish",
            p.k
        )));
    }
    let f_grid = GridFunction::from_fn(grid, |x| f.eval(&x[..1], 0.0).unwrap_or(f64::NAN));
    let (fmin, fmax) = (f_grid.min(), f_grid.max());
    let lo = (fmin / cmax).min(fmin / cmin);
    let hi = (fmax / cmin).max(fmax / cmax);
    let pad = 1e-9 * (hi - lo).abs().max(1e-3);
    let bx = LambdaBox::new(lo - pad, hi + pad)?;
    res.param("lambda_lo", bx.lo);
    res.param("lambda_hi", bx.hi);

    let subst = example2_substitution(p.beta, p.alpha)?;
    let (b, c) = derived_coefficients(&subst, p.k);
    let pde = Pde::new(vec![b], c, f)?;
    if bx.lo <= 0.0 && bx.hi >= 0.0 {
        res.note(
            "lambda box contains 0 where the derived coefficients are singular; gate not evaluated",
        );
    } else {
        let rep = compute_constants(&pde, bx, 64)?;
        res.param("c0", rep.c0);
        res.param("b0", rep.b0);
        res.param("gamma", rep.gamma);
        res.check(
            "gate",
            rep.gate_passed(),
            format!("c0 - b0 - gamma = {:.6e}", rep.margin()),
        );
    }

    let mut table = Table::new(
        "roots",
        &["x", "U", "count", "root_min", "root_max", "residual"],
    );
    let (mut min_count, mut max_count, mut worst) = (usize::MAX, 0usize, 0.0f64);
    for i in 0..grid.len() {
        let x = grid.coords(i)[0];
        let q = 0.5 * p.beta * (1.0 + p.alpha * x.cos());
        let target = surrogate.values()[i];
        let h = |u: f64| u - q * example2_g(u) - target;
        let roots = bracketed_roots(h, bx.lo, bx.hi, p.scan);
        let resid = roots.iter().fold(0.0f64, |m, &r| m.max(h(r).abs()));
        worst = worst.max(resid);
        min_count = min_count.min(roots.len());
        max_count = max_count.max(roots.len());
        table.push(vec![
            x,
            target,
            roots.len() as f64,
            roots.first().copied().unwrap_or(f64::NAN),
            roots.last().copied().unwrap_or(f64::NAN),
            resid,
        ]);
    }
    res.tables.push(table);
    res.param("min_root_count", min_count);
    res.param("max_root_count", max_count);
    res.param("max_residual", worst);
    res.check(
        "roots_found",
        min_count >= 1,
        format!("root counts in [{min_count}, {max_count}]"),
    );
    res.check("root_residual", worst <= 1e-8, format!("{worst:.3e}"));
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicParams {
    pub f: String,
    pub c: f64,
    pub omega: f64,
    pub t_max: f64,
    pub dt: f64,
}

impl Default for ErgodicParams {
    fn default() -> Self {
        Self {
            f: "2 + cos(x1)".into(),
            c: 1.0,
            omega: 2f64.sqrt(),
            t_max: 1e4,
            dt: 0.01,
        }
    }
}

/// Time average of `u` along the line of slope `omega` through the origin,
/// compared with the space average of `f/c`.
pub fn ergodic_average(p: &ErgodicParams) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new("ergodic");
    res.param("f", p.f.as_str());
    res.param("c", p.c);
    res.param("omega", p.omega);
    res.param("t_max", p.t_max);
    res.param("dt", p.dt);
    if !(p.c > 0.0 && p.dt > 0.0 && p.t_max > 0.0) {
        return Err(ExperimentError::Precondition(
            "need c, dt, t_max > 0".into(),
        ));
    }
    let pde = Pde::new(
        vec![FieldExpr::constant(1.0, 2), FieldExpr::constant(p.omega, 2)],
        FieldExpr::constant(p.c, 2),
        FieldExpr::parse(&p.f, 2)?,
    )?;
    let u0 = CharacteristicSolver::new(&pde, 1e-10)?.value_at(&[0.0, 0.0])?;
    res.param("u_at_origin", u0);

    // y' = f(x(t)) - c y along x(t) = t (1, ω), with Y' = y
    let f = pde.f();
    let fx = |t: f64| -> std::result::Result<f64, EvalError> {
        f.eval(&[t.rem_euclid(TAU), (p.omega * t).rem_euclid(TAU)], 0.0)
    };
    let steps = (p.t_max / p.dt).ceil() as usize;
    let h = p.t_max / steps as f64;
    let mut checkpoints: Vec<f64> = (1..)
        .map(|k| 10f64.powi(k))
        .take_while(|t| *t < p.t_max)
        .collect();
    checkpoints.push(p.t_max);
    let mut table = Table::new("average", &["t", "time_average"]);
    let (mut y, mut big_y) = (u0, 0.0);
    let mut next = 0;
    for s in 0..steps {
        let t = s as f64 * h;
        let (f0, fm, f1) = (fx(t)?, fx(t + 0.5 * h)?, fx(t + h)?);
        let k1 = f0 - p.c * y;
        let k2 = fm - p.c * (y + 0.5 * h * k1);
        let k3 = fm - p.c * (y + 0.5 * h * k2);
        let k4 = f1 - p.c * (y + h * k3);
        big_y += h / 6.0 * (y + 2.0 * (y + 0.5 * h * k1) + 2.0 * (y + 0.5 * h * k2) + (y + h * k3));
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let t_end = (s + 1) as f64 * h;
        while next < checkpoints.len() && t_end >= checkpoints[next] * (1.0 - 1e-12) {
            table.push(vec![t_end, big_y / t_end]);
            next += 1;
        }
    }
    let grid = TorusGrid::new(2, 256)?;
    let fbar = crate::geometry::sample(f, grid, None)?;
    let space = fbar.values().iter().sum::<f64>() / grid.len() as f64 / p.c;
    let avg = big_y / p.t_max;
    res.tables.push(table);
    res.param("time_average", avg);
    res.param("space_average", space);
    res.check(
        "time_average_matches_space_average",
        (avg - space).abs() <= 1e-2,
        format!("|{avg:.6} - {space:.6}| = {:.3e}", (avg - space).abs()),
    );
    Ok(res)
}

/// Solves `ε(-Δ)u + <b, grad u> + ε u = f` down a ladder.
fn zero_order_ladder(
    b: &[FieldExpr],
    f: &FieldExpr,
    grid: TorusGrid,
    ladder: &[f64],
) -> Result<Vec<(f64, GridFunction, usize)>> {
    validate_ladder(ladder)?;
    ladder
        .par_iter()
        .map(|&eps| {
            let pde = Pde::new(b.to_vec(), FieldExpr::constant(eps, grid.dim()), f.clone())?;
            let sys = assemble(&pde, grid, eps, Scheme::Upwind, None)?;
            // the solution scales like 1/ε, so the residual target does too
            let opts = SolverOptions {
                tol: 1e-10,
                max_iter: 2_000_000,
                mean_correction: true,
            };
            let rep = solve_with(&sys, None, opts);
            if !rep.converged {
                return Err(EllipticError::NotConverged {
                    eps,
                    residual: rep.residual_sup,
                    iterations: rep.iterations,
                }
                .into());
            }
            Ok((eps, rep.solution, rep.iterations))
        })
        .collect()
}

fn growth_checks(res: &mut ExperimentResult, label: &str, values: &[f64]) {
    let incs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let increasing = incs.iter().all(|d| *d > 0.0);
    res.check(
        &format!("{label}_strictly_increasing"),
        increasing,
        format!("{values:.6?}"),
    );
    let log_like = incs.windows(2).all(|w| w[1] >= 0.5 * w[0]);
    res.check(
        &format!("{label}_increments_not_shrinking"),
        increasing && log_like,
        format!("increments {incs:.6?}"),
    );
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupParams {
    pub b: Vec<String>,
    pub f: String,
    pub a: Vec<f64>,
    pub eps_ladder: Vec<f64>,
    pub n: usize,
    /// Zero-order coefficient of the contrast run.
    pub control_c: Option<f64>,
}

impl Default for BlowupParams {
    fn default() -> Self {
        Self {
            b: vec!["sin(x1)".into()],
            f: "1".into(),
            a: vec![0.0],
            eps_ladder: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
            n: 512,
            control_c: Some(2.0),
        }
    }
}

pub fn blowup_zero_order(p: &BlowupParams) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new("blowup");
    let dim = p.a.len();
    res.param("b", p.b.join(", "));
    res.param("f", p.f.as_str());
    res.param("n", p.n);
    if dim != p.b.len() {
        return Err(ExperimentError::Precondition(
            "point and field dimensions differ".into(),
        ));
    }
    let b =
        p.b.iter()
            .map(|s| FieldExpr::parse(s, dim))
            .collect::<std::result::Result<Vec<_>, _>>()?;
    let f = FieldExpr::parse(&p.f, dim)?;
    let speed = b
        .iter()
        .map(|e| e.eval(&p.a, 0.0).map(|v| v * v))
        .sum::<std::result::Result<f64, _>>()?
        .sqrt();
    if speed > 1e-10 {
        return Err(ExperimentError::Precondition(format!(
            "|b(a)| = {speed:e} is not zero"
        )));
    }
    let class = classify_repeller(&jacobian_at(&b, &p.a, 0.0)?, dim);
    if class == RepellerClass::NotRepeller {
        return Err(ExperimentError::Precondition(
            "linearization of b at a is not a repeller".into(),
        ));
    }
    res.param("linearization", format!("{class:?}"));
    let grid = TorusGrid::new(dim, p.n)?;
    let f_grid = crate::geometry::sample(&f, grid, None)?;
    let fa = f.eval(&p.a, 0.0)?;
    let f_zero = sup_norm(&f_grid) == 0.0;
    if !f_zero && fa.abs() <= 1e-12 {
        return Err(ExperimentError::Precondition("f(a) = 0".into()));
    }
    let runs = zero_order_ladder(&b, &f, grid, &p.eps_ladder)?;
    let mut table = Table::new("growth", &["eps", "u_at_a", "max_abs_u", "iterations"]);
    let sign = if fa < 0.0 { -1.0 } else { 1.0 };
    let mut at_a = Vec::new();
    for (eps, u, it) in &runs {
        let v = u.interpolate(&p.a);
        at_a.push(sign * v);
        table.push(vec![*eps, v, sup_norm(u), *it as f64]);
    }
    res.tables.push(table);
    if f_zero {
        let worst = runs.iter().fold(0.0f64, |m, (_, u, _)| m.max(sup_norm(u)));
        res.check(
            "zero_solution",
            worst == 0.0,
            format!("max |u| = {worst:e}"),
        );
    } else {
        growth_checks(&mut res, "u_at_a", &at_a);
    }
    if let Some(c) = p.control_c {
        let eps = *p.eps_ladder.last().expect("ladder validated");
        let pde = Pde::new(b.clone(), FieldExpr::constant(c, dim), f.clone())?;
        let rep = solve_with(
            &assemble(&pde, grid, eps, Scheme::Upwind, None)?,
            None,
            SolverOptions::default(),
        );
        let v = rep.solution.interpolate(&p.a);
        let target = fa / c;
        res.param("control_value", v);
        res.check(
            "control_converges",
            rep.converged && (v - target).abs() <= 1e-2,
            format!("u(a) = {v:.6} vs f(a)/c = {target:.6}"),
        );
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientParams {
    pub phi: String,
    pub f: String,
    pub eps_ladder: Vec<f64>,
    pub n: usize,
}

impl Default for GradientParams {
    fn default() -> Self {
        Self {
            phi: "cos(2*x1)".into(),
            f: "sin(x1)".into(),
            eps_ladder: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
            n: 512,
        }
    }
}

/// Local minima of a circle function with positive second derivative.
pub fn minima_s1(phi: &FieldExpr) -> Result<Vec<f64>> {
    let d1 = phi.differentiate(Var::Axis(0));
    let d2 = d1.differentiate(Var::Axis(0));
    let n = 4096;
    let h = TAU / n as f64;
    let vals = (0..n)
        .map(|i| phi.eval(&[i as f64 * h], 0.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut out: Vec<f64> = Vec::new();
    for i in 0..n {
        let (l, r) = (vals[(i + n - 1) % n], vals[(i + 1) % n]);
        if vals[i] <= l && vals[i] < r {
            let mut x = i as f64 * h;
            for _ in 0..50 {
                let (g, c) = (d1.eval(&[x], 0.0)?, d2.eval(&[x], 0.0)?);
                if c <= 0.0 {
                    break;
                }
                let step = g / c;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let x = x.rem_euclid(TAU);
            if d2.eval(&[x], 0.0)? > 0.0 && !out.iter().any(|y| (y - x).abs() < 1e-9) {
                out.push(x);
            }
        }
    }
    Ok(out)
}

pub fn gradient_symmetric(p: &GradientParams) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new("gradient-symmetric");
    res.param("phi", p.phi.as_str());
    res.param("f", p.f.as_str());
    res.param("n", p.n);
    let phi = FieldExpr::parse(&p.phi, 1)?;
    let f = FieldExpr::parse(&p.f, 1)?;
    for k in 0..257 {
        let x = TAU * k as f64 / 257.0;
        let (a, b) = (phi.eval(&[x], 0.0)?, phi.eval(&[-x], 0.0)?);
        if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(ExperimentError::Precondition(format!(
                "phi is not even at x = {x}"
            )));
        }
        let (a, b) = (f.eval(&[x], 0.0)?, f.eval(&[-x], 0.0)?);
        if (a + b).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(ExperimentError::Precondition(format!(
                "f is not odd at x = {x}"
            )));
        }
    }
    let b = phi.differentiate(Var::Axis(0));
    res.param("b", b.to_string());
    let grid = grid1(p.n)?;
    let f_zero = sup_norm(&crate::geometry::sample(&f, grid, None)?) == 0.0;
    let minima = minima_s1(&phi)?;
    let mut chosen = None;
    for &a in &minima {
        if f.eval(&[a], 0.0)?.abs() > 1e-10 {
            chosen = Some(a);
            break;
        }
    }
    if chosen.is_none() && !f_zero {
        return Err(ExperimentError::Precondition(format!(
            "f vanishes at every minimum of phi ({minima:.6?})"
        )));
    }
    if let Some(a) = chosen {
        res.param("minimum", a);
        res.param(
            "b_prime_at_minimum",
            b.differentiate(Var::Axis(0)).eval(&[a], 0.0)?,
        );
    }
    let runs = zero_order_ladder(&[b], &f, grid, &p.eps_ladder)?;
    let mut table = Table::new("growth", &["eps", "max_abs_u", "iterations"]);
    let mut maxima = Vec::new();
    for (eps, u, it) in &runs {
        maxima.push(sup_norm(u));
        table.push(vec![*eps, sup_norm(u), *it as f64]);
    }
    res.tables.push(table);
    if f_zero {
        let worst = maxima.iter().fold(0.0f64, |m, v| m.max(*v));
        res.check(
            "zero_solution",
            worst == 0.0,
            format!("max |u| = {worst:e}"),
        );
    } else {
        growth_checks(&mut res, "max_abs_u", &maxima);
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitParams {
    pub b: String,
    pub c: String,
    pub f: String,
    pub phases: usize,
}

impl Default for OrbitParams {
    fn default() -> Self {
        Self {
            b: "1 + 0.5*sin(x1)".into(),
            c: "2".into(),
            f: "2 + cos(x1)".into(),
            phases: 64,
        }
    }
}

/// Closed-orbit formula against long-horizon quadrature at evenly spaced
/// phases, for both orderings of its two coefficients.
pub fn orbit_report(p: &OrbitParams) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new("orbit");
    res.param("b", p.b.as_str());
    res.param("c", p.c.as_str());
    res.param("f", p.f.as_str());
    let pde = Pde::parse(1, &[&p.b], &p.c, &p.f)?;
    let orbit = find_period_s1(&pde.b()[0], 1e-12)?;
    res.param("period", orbit.period);
    let solver = CharacteristicSolver::new(&pde, 1e-10)?;
    let mut table = Table::new(
        "orbit",
        &["t", "point", "derived", "swapped", "characteristics"],
    );
    let (mut worst_derived, mut worst_swapped) = (0.0f64, 0.0f64);
    for k in 0..p.phases {
        let t = orbit.period * k as f64 / p.phases as f64;
        let v = periodic_orbit_forms(&pde, &orbit, t)?;
        let q = solver.value_at(&[v.point])?;
        worst_derived = worst_derived.max((v.derived - q).abs());
        worst_swapped = worst_swapped.max((v.swapped - q).abs());
        table.push(vec![t, v.point, v.derived, v.swapped, q]);
    }
    res.tables.push(table);
    res.param("max_gap_derived", worst_derived);
    res.param("max_gap_swapped", worst_swapped);
    res.check(
        "orbit_formula",
        worst_derived <= 1e-6,
        format!("max gap {worst_derived:.3e} over {} phases", p.phases),
    );
    res.note(format!(
        "with the two coefficients exchanged the formula misses by up to {worst_swapped:.3e}"
    ));
    Ok(res)
}

/// Runs a named experiment with its defaults, overriding grid size and
/// ladder where given.
pub fn run_named(name: &str, n: Option<usize>, ladder: Option<&[f64]>) -> Result<ExperimentResult> {
    match name {
        "example1" => {
            let mut p = Example1Params::default();
            if let Some(n) = n {
                p.n = n;
            }
            if let Some(l) = ladder {
                p.eps_ladder = l.to_vec();
            }
            example1(&p)
        }
        "example2" => {
            let mut p = Example2Params::default();
            if let Some(n) = n {
                p.n = n;
            }
            example2(&p)
        }
        "ergodic" => ergodic_average(&ErgodicParams::default()),
        "blowup" => {
            let mut p = BlowupParams::default();
            if let Some(n) = n {
                p.n = n;
            }
            if let Some(l) = ladder {
                p.eps_ladder = l.to_vec();
            }
            blowup_zero_order(&p)
        }
        "gradient-symmetric" => {
            let mut p = GradientParams::default();
            if let Some(n) = n {
                p.n = n;
            }
            if let Some(l) = ladder {
                p.eps_ladder = l.to_vec();
            }
            gradient_symmetric(&p)
        }
        "orbit" => orbit_report(&OrbitParams::default()),
        other => Err(ExperimentError::Precondition(format!(
            "unknown experiment `{other}` (expected one of {})",
            NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weyl_points_fill_the_box() {
        let pts = weyl_points(1000, -2.0, 2.0);
        assert!(pts
            .iter()
            .all(|(x, l)| (0.0..TAU).contains(x) && (-2.0..=2.0).contains(l)));
        assert!(pts.iter().any(|(x, _)| *x < 0.1) && pts.iter().any(|(x, _)| *x > 6.1));
    }

    #[test]
    fn derivative_stencil_is_eighth_order() {
        let err = |n: usize| {
            let grid = TorusGrid::new(1, n).unwrap();
            let u = GridFunction::from_fn(grid, |x| (3.0 * x[0]).sin());
            let exact = GridFunction::from_fn(grid, |x| 3.0 * (3.0 * x[0]).cos());
            periodic_derivative(&u).sup_distance(&exact).unwrap()
        };
        let (coarse, fine) = (err(32), err(64));
        // halving h should shrink the error by about 2^8
        assert!(coarse / fine > 200.0, "{coarse} / {fine}");
        assert!(err(256) < 1e-11);
    }

    #[test]
    fn nonpositive_runs_wrap_around() {
        let grid = TorusGrid::new(1, 8).unwrap();
        let g = GridFunction::new(grid, vec![-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0]).unwrap();
        let runs = nonpositive_intervals(&g);
        assert_eq!(runs.len(), 2);
        let h = grid.spacing();
        assert!(runs.contains(&(3.0 * h, 4.0 * h)));
        assert!(runs.contains(&(7.0 * h, 0.0)));
        let pos = GridFunction::constant(grid, 1.0);
        assert!(nonpositive_intervals(&pos).is_empty());
    }

    #[test]
    fn g_is_odd_and_vanishes_at_zero() {
        assert_eq!(example2_g(0.0), 0.0);
        for u in [1e-9, 0.1, 2.0] {
            assert_eq!(example2_g(-u), -example2_g(u));
        }
        assert!((example2_g(1e-6) + 1e-6).abs() < 1e-15);
    }

    #[test]
    fn bracketing_finds_all_simple_roots() {
        let roots = bracketed_roots(|x| (x - 0.3) * (x + 0.2) * (x - 1.1), -1.0, 2.0, 100);
        assert_eq!(roots.len(), 3);
        for (r, e) in roots.iter().zip([-0.2, 0.3, 1.1]) {
            assert!((r - e).abs() < 1e-14);
        }
    }

    #[test]
    fn minima_of_cosines() {
        let m = minima_s1(&FieldExpr::parse("cos(2*x1)", 1).unwrap()).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.iter().any(|x| (x - PI / 2.0).abs() < 1e-12));
        let m = minima_s1(&FieldExpr::parse("cos(x1)", 1).unwrap()).unwrap();
        assert_eq!(m.len(), 1);
        assert!((m[0] - PI).abs() < 1e-12);
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        assert!(run_named("nope", None, None).is_err());
    }
}
