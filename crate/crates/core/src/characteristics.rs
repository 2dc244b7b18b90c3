//! Integral curves of `b` and the solution formulas built on them.
//!
//! For the linear problem `<b, grad u> + c u = f` with `c > 0` the solution
//! is the backward integral
//!
//! ```text
//! u(P) = ∫_{-∞}^0 f(φ_s P) exp(-∫_s^0 c(φ_r P) dr) ds,
//! ```
//!
//! which we evaluate by integrating the augmented system
//! `y' = -b(y)`, `E' = c(y)`, `Q' = f(y) e^{-E}` with RK4 up to the horizon
//! `T* = ln(‖f‖/(c0 tol))/c0`, beyond which the tail is below `tol`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{EvalError, FieldExpr};
use crate::geometry::{torus_distance, GridFunction, TorusGrid};
use crate::pde::Pde;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CharError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("step size must be positive and finite, got {0}")]
    Step(f64),
    #[error("point has {got} coordinates, field has dimension {need}")]
    Dimension { got: usize, need: usize },
    #[error("b or c depends on `lam`; freeze it with a lambda field first")]
    Nonlinear,
    #[error("c must be positive, sampled minimum is {0}")]
    NonPositiveC(f64),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("|b(P)| = {0} is not zero: P is not a fixed point")]
    NotFixedPoint(f64),
    #[error("no periodic orbit: {0}")]
    NoOrbit(String),
    #[error("orbit decay C(T) = {0} is not below 1")]
    NotContracting(f64),
    #[error("orbit was computed for a different drift")]
    OrbitMismatch,
}

type P2 = [f64; 2];

fn point(x: &[f64], dim: usize) -> Result<P2, CharError> {
    if x.len() != dim || !(1..=2).contains(&dim) {
        return Err(CharError::Dimension {
            got: x.len(),
            need: dim,
        });
    }
    let mut p = [0.0; 2];
    p[..dim].copy_from_slice(x);
    Ok(p)
}

fn wrap(p: P2, dim: usize) -> P2 {
    let mut q = p;
    for v in q.iter_mut().take(dim) {
        *v = v.rem_euclid(TAU);
    }
    q
}

/// Coefficients with `lam` replaced by an interpolated grid function.
#[derive(Clone, Copy)]
struct Frozen<'a> {
    b: &'a [FieldExpr],
    lambda: Option<&'a GridFunction>,
}

impl Frozen<'_> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn lam(&self, e: &FieldExpr, x: &P2) -> f64 {
        match self.lambda {
            Some(l) if e.depends_on_lambda() => l.interpolate(&x[..self.dim()]),
            _ => 0.0,
        }
    }

    fn eval(&self, e: &FieldExpr, x: &P2) -> Result<f64, CharError> {
        Ok(e.eval(&x[..self.dim()], self.lam(e, x))?)
    }

    fn drift(&self, x: &P2) -> Result<P2, CharError> {
        let mut v = [0.0; 2];
        for (k, e) in self.b.iter().enumerate() {
            v[k] = self.eval(e, x)?;
        }
        Ok(v)
    }
}

fn check_frozen(b: &[FieldExpr], lambda: Option<&GridFunction>) -> Result<(), CharError> {
    if lambda.is_none() && b.iter().any(FieldExpr::depends_on_lambda) {
        return Err(CharError::Nonlinear);
    }
    Ok(())
}

fn rk4_step(field: &Frozen, x: P2, h: f64) -> Result<P2, CharError> {
    let dim = field.dim();
    let add = |a: P2, k: P2, s: f64| [a[0] + s * k[0], a[1] + s * k[1]];
    let k1 = field.drift(&x)?;
    let k2 = field.drift(&add(x, k1, 0.5 * h))?;
    let k3 = field.drift(&add(x, k2, 0.5 * h))?;
    let k4 = field.drift(&add(x, k3, h))?;
    let mut y = x;
    for i in 0..dim {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(wrap(y, dim))
}

fn steps_for(t: f64, dt: f64) -> Result<(usize, f64), CharError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CharError::Step(dt));
    }
    if t == 0.0 {
        return Ok((0, 0.0));
    }
    let n = (t.abs() / dt).ceil().max(1.0) as usize;
    Ok((n, t / n as f64))
}

/// `φ_t(x0)`, the time-`t` flow of `b`, by RK4 with steps of at most `dt`.
/// A `lam`-dependent field needs `lambda_field`, which is interpolated
/// along the curve.
pub fn flow(
    b: &[FieldExpr],
    x0: &[f64],
    t: f64,
    dt: f64,
    lambda_field: Option<&GridFunction>,
) -> Result<Vec<f64>, CharError> {
    let traj = trajectory(b, x0, t, dt, lambda_field)?;
    Ok(traj.states.last().expect("trajectory has a start")[..b.len()].to_vec())
}

/// The sampled curve `s ↦ φ_s(x0)` for `s` between 0 and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    /// Signed step between consecutive states.
    pub step: f64,
    pub states: Vec<[f64; 2]>,
}

pub fn trajectory(
    b: &[FieldExpr],
    x0: &[f64],
    t: f64,
    dt: f64,
    lambda_field: Option<&GridFunction>,
) -> Result<Trajectory, CharError> {
    check_frozen(b, lambda_field)?;
    let dim = b.len();
    let field = Frozen {
        b,
        lambda: lambda_field,
    };
    let (n, h) = steps_for(t, dt)?;
    let mut x = wrap(point(x0, dim)?, dim);
    let mut states = Vec::with_capacity(n + 1);
    states.push(x);
    for _ in 0..n {
        x = rk4_step(&field, x, h)?;
        states.push(x);
    }
    Ok(Trajectory {
        dim,
        step: h,
        states,
    })
}

/// Differential `dφ_t` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent {
    pub dim: usize,
    pub matrix: [[f64; 2]; 2],
}

impl Tangent {
    /// Operator 2-norm.
    pub fn op_norm(&self) -> f64 {
        let m = &self.matrix;
        if self.dim == 1 {
            return m[0][0].abs();
        }
        // largest eigenvalue of MᵀM
        let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
        let d = m[0][1] * m[0][1] + m[1][1] * m[1][1];
        let o = m[0][0] * m[0][1] + m[1][0] * m[1][1];
        (0.5 * (a + d) + (0.25 * (a - d) * (a - d) + o * o).sqrt()).sqrt()
    }
}

/// Integrates `x' = b(x)`, `V' = Db(x) V`, `V(0) = I` to time `t`.
///
/// For `t > 0` the norm is at most `exp(b0 t)`. Backward in time the rate
/// is minus the smallest eigenvalue of the symmetric part of `Db` instead.
pub fn tangent_flow(b: &[FieldExpr], x0: &[f64], t: f64, dt: f64) -> Result<Tangent, CharError> {
    check_frozen(b, None)?;
    let dim = b.len();
    let jac: Vec<Vec<FieldExpr>> = b.iter().map(FieldExpr::gradient).collect();
    let (n, h) = steps_for(t, dt)?;
    // state: x (2) then V row-major (4)
    let rhs = |s: &[f64; 6]| -> Result<[f64; 6], CharError> {
        let x = &s[..dim];
        let mut out = [0.0; 6];
        let mut j = [[0.0; 2]; 2];
        for i in 0..dim {
            out[i] = b[i].eval(x, 0.0)?;
            for k in 0..dim {
                j[i][k] = jac[i][k].eval(x, 0.0)?;
            }
        }
        for i in 0..2 {
            for k in 0..2 {
                out[2 + 2 * i + k] = j[i][0] * s[2 + k] + j[i][1] * s[4 + k];
            }
        }
        Ok(out)
    };
    let x = point(x0, dim)?;
    let mut s = [x[0], x[1], 1.0, 0.0, 0.0, if dim == 2 { 1.0 } else { 0.0 }];
    for _ in 0..n {
        s = rk4_generic(&rhs, s, h)?;
    }
    Ok(Tangent {
        dim,
        matrix: [[s[2], s[3]], [s[4], s[5]]],
    })
}

fn rk4_generic<const N: usize>(
    rhs: &impl Fn(&[f64; N]) -> Result<[f64; N], CharError>,
    s: [f64; N],
    h: f64,
) -> Result<[f64; N], CharError> {
    let shift = |a: &[f64; N], k: &[f64; N], c: f64| {
        let mut o = *a;
        for i in 0..N {
            o[i] += c * k[i];
        }
        o
    };
    let k1 = rhs(&s)?;
    let k2 = rhs(&shift(&s, &k1, 0.5 * h))?;
    let k3 = rhs(&shift(&s, &k2, 0.5 * h))?;
    let k4 = rhs(&shift(&s, &k3, h))?;
    let mut o = s;
    for i in 0..N {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(o)
}

/// Default RK4 step for a requested accuracy.
pub fn default_step(tol: f64) -> f64 {
    (0.5 * tol.powf(0.25)).clamp(1e-3, 0.05)
}

/// Backward-characteristic evaluator for `<b, grad u> + c u = f`.
///
/// Built once per problem; `lam`, if present, is frozen to an interpolated
/// grid function.
#[derive(Clone)]
pub struct CharacteristicSolver<'a> {
    pde: &'a Pde,
    lambda: Option<&'a GridFunction>,
    horizon: f64,
    dt: f64,
}

fn sample_bounds(pde: &Pde, lambda: Option<&GridFunction>) -> Result<(f64, f64, f64), CharError> {
    let n = if pde.dim() == 1 { 1024 } else { 128 };
    let grid = TorusGrid::new(pde.dim(), n).expect("valid sampling grid");
    let field = Frozen { b: pde.b(), lambda };
    let (mut c0, mut f_sup, mut b_sup) = (f64::INFINITY, 0.0f64, 0.0f64);
    for i in 0..grid.len() {
        let x = grid.coords(i);
        c0 = c0.min(field.eval(pde.c(), &x)?);
        f_sup = f_sup.max(pde.f().eval(&x[..pde.dim()], 0.0)?.abs());
        let v = field.drift(&x)?;
        b_sup = b_sup.max(v[0].hypot(v[1]));
    }
    Ok((c0, f_sup, b_sup))
}

impl<'a> CharacteristicSolver<'a> {
    /// Linear problems only.
    pub fn new(pde: &'a Pde, tol: f64) -> Result<Self, CharError> {
        if !pde.is_linear() {
            return Err(CharError::Nonlinear);
        }
        let (c0, f_sup, b_sup) = sample_bounds(pde, None)?;
        Self::build(pde, None, c0, f_sup, b_sup, tol)
    }

    /// Freezes `lam = lambda(x)` in `b` and `c`; `c0` and `f_sup` bound
    /// `c` from below and `|f|` from above.
    pub fn frozen(
        pde: &'a Pde,
        lambda: &'a GridFunction,
        c0: f64,
        f_sup: f64,
        tol: f64,
    ) -> Result<Self, CharError> {
        let (c_sampled, _, b_sup) = sample_bounds(pde, Some(lambda))?;
        Self::build(pde, Some(lambda), c0.min(c_sampled), f_sup, b_sup, tol)
    }

    fn build(
        pde: &'a Pde,
        lambda: Option<&'a GridFunction>,
        c0: f64,
        f_sup: f64,
        b_sup: f64,
        tol: f64,
    ) -> Result<Self, CharError> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CharError::Tolerance(tol));
        }
        if c0 <= 0.0 {
            return Err(CharError::NonPositiveC(c0));
        }
        // sampled extrema are padded so the discarded tail stays below tol
        let (c0, f_sup) = (0.99 * c0, 1.01 * f_sup);
        let horizon = if f_sup == 0.0 {
            0.0
        } else {
            ((f_sup / (c0 * tol)).ln() / c0).max(0.0)
        };
        Ok(Self {
            pde,
            lambda,
            horizon,
            dt: default_step(tol) / b_sup.max(1.0),
        })
    }

    pub fn with_step(mut self, dt: f64) -> Result<Self, CharError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CharError::Step(dt));
        }
        self.dt = dt;
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.dt
    }

    pub fn value_at(&self, p: &[f64]) -> Result<f64, CharError> {
        let dim = self.pde.dim();
        let x = point(p, dim)?;
        if self.horizon == 0.0 {
            return Ok(0.0);
        }
        let field = Frozen {
            b: self.pde.b(),
            lambda: self.lambda,
        };
        let (n, h) = steps_for(self.horizon, self.dt)?;
        // state: y (2), E = ∫c, Q = ∫ f e^{-E}
        let rhs = |s: &[f64; 4]| -> Result<[f64; 4], CharError> {
            let y = [s[0], s[1]];
            let v = field.drift(&y)?;
            let c = field.eval(self.pde.c(), &y)?;
            let f = self.pde.f().eval(&y[..dim], 0.0)?;
            Ok([-v[0], -v[1], c, f * (-s[2]).exp()])
        };
        let mut s = [x[0], x[1], 0.0, 0.0];
        for _ in 0..n {
            s = rk4_generic(&rhs, s, h)?;
            let y = wrap([s[0], s[1]], dim);
            s[0] = y[0];
            s[1] = y[1];
        }
        Ok(s[3])
    }

    /// Values at every node, in parallel.
    pub fn value_on_grid(&self, grid: TorusGrid) -> Result<GridFunction, CharError> {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| self.value_at(&grid.coords(i)[..grid.dim()]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GridFunction::new(grid, values).map_err(|_| EvalError::NonFinite)?)
    }
}

/// `u(P)` for a linear problem by backward characteristics.
pub fn solve_by_characteristics(pde: &Pde, p: &[f64], tol: f64) -> Result<f64, CharError> {
    CharacteristicSolver::new(pde, tol)?.value_at(p)
}

/// At a zero of `b` the equation collapses to `c u = f`.
pub fn fixed_point_value(pde: &Pde, p: &[f64]) -> Result<f64, CharError> {
    if !pde.is_linear() {
        return Err(CharError::Nonlinear);
    }
    let x = point(p, pde.dim())?;
    let field = Frozen {
        b: pde.b(),
        lambda: None,
    };
    let v = field.drift(&x)?;
    let norm = v[0].hypot(v[1]);
    if norm > 1e-10 {
        return Err(CharError::NotFixedPoint(norm));
    }
    let c = pde.c().eval(p, 0.0)?;
    if c <= 0.0 {
        return Err(CharError::NonPositiveC(c));
    }
    Ok(pde.f().eval(p, 0.0)? / c)
}

/// Composite adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    // split first so a symmetric integrand cannot fool the initial estimate
    let pieces = 16;
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            rec(f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 50)
        })
        .sum()
}

/// A closed orbit of a nonvanishing field on the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitData {
    pub field: FieldExpr,
    pub start: f64,
    pub period: f64,
    /// +1 when the orbit runs in the positive direction.
    pub direction: f64,
}

impl OrbitData {
    fn step(&self) -> f64 {
        (self.period / 8192.0).min(1e-3)
    }

    /// `p(t)`, reduced to `[0, 2π)`.
    pub fn point_at(&self, t: f64) -> Result<f64, CharError> {
        Ok(flow(
            std::slice::from_ref(&self.field),
            &[self.start],
            t,
            self.step(),
            None,
        )?[0])
    }

    /// `C(t) = exp(-∫_0^t c(p(s)) ds)` at each requested time.
    pub fn decay(&self, c: &FieldExpr, times: &[f64]) -> Result<Vec<f64>, CharError> {
        times
            .iter()
            .map(|&t| {
                let s = integrate_orbit(self, c, &FieldExpr::constant(0.0, 1), 0.0, t)?;
                Ok((-s[1]).exp())
            })
            .collect()
    }
}

/// Finds the period of `x' = b(x)` on the circle, `T = |∫_0^{2π} dx / b|`.
pub fn find_period_s1(b: &FieldExpr, tol: f64) -> Result<OrbitData, CharError> {
    if b.dim() != 1 {
        return Err(CharError::Dimension {
            got: b.dim(),
            need: 1,
        });
    }
    if b.depends_on_lambda() {
        return Err(CharError::Nonlinear);
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CharError::Tolerance(tol));
    }
    let scan = 4096;
    let mut lo = f64::INFINITY;
    let mut sign = 0.0;
    for i in 0..scan {
        let v = b.eval(&[TAU * i as f64 / scan as f64], 0.0)?;
        if sign == 0.0 {
            sign = v.signum();
        } else if v.signum() != sign {
            return Err(CharError::NoOrbit("b changes sign".into()));
        }
        lo = lo.min(v.abs());
    }
    if lo < 1e-8 {
        return Err(CharError::NoOrbit(format!(
            "b nearly vanishes (min |b| = {lo:e})"
        )));
    }
    let inv = |x: f64| 1.0 / b.eval(&[x], 0.0).unwrap_or(f64::NAN);
    let period = adaptive_simpson(&inv, 0.0, TAU, tol).abs();
    if !period.is_finite() {
        return Err(CharError::NoOrbit("period integral is not finite".into()));
    }
    let orbit = OrbitData {
        field: b.clone(),
        start: 0.0,
        period,
        direction: sign,
    };
    let end = orbit.point_at(period)?;
    let gap = torus_distance(&[end], &[orbit.start]);
    if gap > 1e-8 {
        return Err(CharError::NoOrbit(format!(
            "orbit fails to close (gap {gap:e})"
        )));
    }
    Ok(orbit)
}

/// Integrates `(p, E, W)` with `p' = b(p)`, `E' = c(p)`, `W' = f(p) - c(p) W`
/// from time `a` to `b` starting at `p(a)`; returns `[p, E, W]` at `b`
/// relative to `E(a) = W(a) = 0`.
fn integrate_orbit(
    orbit: &OrbitData,
    c: &FieldExpr,
    f: &FieldExpr,
    a: f64,
    b: f64,
) -> Result<[f64; 3], CharError> {
    let start = if a == 0.0 {
        orbit.start
    } else {
        orbit.point_at(a)?
    };
    let h_max = orbit.step();
    let (n, h) = steps_for(b - a, h_max)?;
    let rhs = |s: &[f64; 3]| -> Result<[f64; 3], CharError> {
        let x = [s[0]];
        let cv = c.eval(&x, 0.0)?;
        Ok([orbit.field.eval(&x, 0.0)?, cv, f.eval(&x, 0.0)? - cv * s[2]])
    };
    let mut s = [start, 0.0, 0.0];
    for _ in 0..n {
        s = rk4_generic(&rhs, s, h)?;
    }
    s[0] = s[0].rem_euclid(TAU);
    Ok(s)
}

/// The two readings of the closed-orbit formula at `p(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitValues {
    pub point: f64,
    /// `C(t)[C(T)/(1-C(T)) ∫_t^T f/C + 1/(1-C(T)) ∫_0^t f/C]`, which follows
    /// from `d/ds (u/C) = f/C` and periodicity.
    pub derived: f64,
    /// The same expression with the two coefficients exchanged.
    pub swapped: f64,
    pub decay_period: f64,
}

pub fn periodic_orbit_forms(
    pde: &Pde,
    orbit: &OrbitData,
    t: f64,
) -> Result<OrbitValues, CharError> {
    if pde.dim() != 1 {
        return Err(CharError::Dimension {
            got: pde.dim(),
            need: 1,
        });
    }
    if !pde.is_linear() {
        return Err(CharError::Nonlinear);
    }
    if pde.b()[0] != orbit.field {
        return Err(CharError::OrbitMismatch);
    }
    let t = t.rem_euclid(orbit.period);
    let at_t = integrate_orbit(orbit, pde.c(), pde.f(), 0.0, t)?;
    let rest = integrate_orbit(orbit, pde.c(), pde.f(), t, orbit.period)?;
    let c_t = (-at_t[1]).exp();
    let c_big = (-(at_t[1] + rest[1])).exp();
    if c_big >= 1.0 {
        return Err(CharError::NotContracting(c_big));
    }
    // W(t) = C(t) ∫_0^t f/C and W(T) chain through the second leg.
    let w_t = at_t[2];
    let w_big = rest[2] + (-rest[1]).exp() * w_t;
    // C(t) I_a and C(t) C(T) I_b with I_a = ∫_0^t f/C, I_b = ∫_t^T f/C
    let a_term = w_t;
    let b_term = c_t * w_big - c_big * w_t;
    Ok(OrbitValues {
        point: at_t[0],
        derived: (b_term + a_term) / (1.0 - c_big),
        swapped: (c_big * a_term + b_term / c_big) / (1.0 - c_big),
        decay_period: c_big,
    })
}

/// `u(p(t))` on a closed orbit of a circle field.
pub fn periodic_orbit_value(pde: &Pde, orbit: &OrbitData, t: f64) -> Result<f64, CharError> {
    Ok(periodic_orbit_forms(pde, orbit, t)?.derived)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str, dim: usize) -> FieldExpr {
        FieldExpr::parse(s, dim).unwrap()
    }

    #[test]
    fn constant_flow_translates() {
        let b = [e("1", 1)];
        let x = flow(&b, &[0.0], std::f64::consts::PI, 0.01, None).unwrap();
        assert!((x[0] - std::f64::consts::PI).abs() < 1e-12);
        let b2 = [e("1", 2), e("2", 2)];
        let x = flow(&b2, &[0.5, 0.5], 1.0, 0.1, None).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-12 && (x[1] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn flow_is_invertible() {
        let b = [e("sin(x1) + 1.5", 1)];
        let y = flow(&b, &[1.0], 2.0, 1e-3, None).unwrap();
        let x = flow(&b, &y, -2.0, 1e-3, None).unwrap();
        assert!(torus_distance(&x, &[1.0]) < 1e-10);
    }

    #[test]
    fn rejects_bad_steps_and_nonlinear_fields() {
        let b = [e("1", 1)];
        assert!(matches!(
            flow(&b, &[0.0], 1.0, 0.0, None),
            Err(CharError::Step(_))
        ));
        let nl = [e("1 + lam", 1)];
        assert!(matches!(
            flow(&nl, &[0.0], 1.0, 0.1, None),
            Err(CharError::Nonlinear)
        ));
    }

    #[test]
    fn trajectory_steps_are_bounded_by_speed() {
        let b = [e("2 + sin(x1)", 1)];
        let tr = trajectory(&b, &[0.3], 3.0, 0.01, None).unwrap();
        for w in tr.states.windows(2) {
            assert!(torus_distance(&w[0][..1], &w[1][..1]) <= 3.0 * 0.01 * 1.01);
        }
    }

    #[test]
    fn tangent_flow_of_linear_saddle() {
        // near x = 0, b = sin x ≈ x: dφ_t(0) = e^t
        let b = [e("sin(x1)", 1)];
        let t = tangent_flow(&b, &[0.0], 1.0, 1e-3).unwrap();
        assert!((t.op_norm() - 1f64.exp()).abs() < 1e-9);
        let b = [e("sin(x1)", 2), e("-sin(x2)", 2)];
        let t = tangent_flow(&b, &[0.0, 0.0], 0.5, 1e-3).unwrap();
        assert!((t.op_norm() - 0.5f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_integral_matches_closed_form() {
        // u' + 2u = sin x → u = (2 sin x - cos x)/5
        let pde = Pde::parse(1, &["1"], "2", "sin(x1)").unwrap();
        for x in [0.0, 1.0, 4.0] {
            let u = solve_by_characteristics(&pde, &[x], 1e-8).unwrap();
            assert!((u - (2.0 * x.sin() - x.cos()) / 5.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_forcing_and_fixed_points() {
        let pde = Pde::parse(1, &["1"], "2", "0").unwrap();
        assert_eq!(solve_by_characteristics(&pde, &[1.0], 1e-8).unwrap(), 0.0);
        let pde = Pde::parse(1, &["sin(x1)"], "2", "3").unwrap();
        assert_eq!(fixed_point_value(&pde, &[0.0]).unwrap(), 1.5);
        assert!(matches!(
            fixed_point_value(&pde, &[1.0]),
            Err(CharError::NotFixedPoint(_))
        ));
    }

    #[test]
    fn nonpositive_c_is_rejected() {
        let pde = Pde::parse(1, &["1"], "cos(x1)", "1").unwrap();
        assert!(matches!(
            solve_by_characteristics(&pde, &[0.0], 1e-6),
            Err(CharError::NonPositiveC(_))
        ));
    }

    #[test]
    fn simpson_is_accurate() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn orbit_periods() {
        let o = find_period_s1(&e("1", 1), 1e-10).unwrap();
        assert!((o.period - TAU).abs() < 1e-10);
        let o = find_period_s1(&e("2 + sin(x1)", 1), 1e-10).unwrap();
        assert!((o.period - TAU / 3f64.sqrt()).abs() < 1e-8);
        let o = find_period_s1(&e("-1", 1), 1e-10).unwrap();
        assert_eq!(o.direction, -1.0);
        assert!(matches!(
            find_period_s1(&e("sin(x1)", 1), 1e-10),
            Err(CharError::NoOrbit(_))
        ));
    }

    #[test]
    fn orbit_formula_matches_characteristics() {
        let pde = Pde::parse(1, &["2 + sin(x1)"], "1.5 + 0.5*cos(x1)", "sin(x1) + 0.3").unwrap();
        let orbit = find_period_s1(&pde.b()[0], 1e-12).unwrap();
        for t in [0.0, 0.7, 2.0] {
            let v = periodic_orbit_forms(&pde, &orbit, t).unwrap();
            let oracle = solve_by_characteristics(&pde, &[v.point], 1e-10).unwrap();
            assert!(
                (v.derived - oracle).abs() < 1e-7,
                "{} vs {oracle}",
                v.derived
            );
            assert!((v.swapped - oracle).abs() > 1e-3);
        }
    }

    #[test]
    fn orbit_decay_is_exponential_of_c() {
        let orbit = find_period_s1(&e("1", 1), 1e-12).unwrap();
        let d = orbit.decay(&e("2", 1), &[0.0, 1.0]).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-15 && (d[1] - (-2f64).exp()).abs() < 1e-12);
    }
}
