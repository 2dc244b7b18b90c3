//! The structural constants of a problem and the hyperbolicity gate.
//!
//! With `b_λ = b(λ, ·)` and `c_λ = c(λ, ·)`:
//!
//! * `b0 = sup <∇_X b, X>` over unit tangent vectors: the largest eigenvalue
//!   of the symmetric part of the Jacobian of `b_λ`;
//! * `beta = ‖∂b/∂λ‖_∞`;
//! * `c0 = inf c`;
//! * `f0 = ‖df‖_∞ + ‖f‖_∞ ‖dc‖_∞ / c0`;
//! * `gamma = ‖∂c/∂λ‖_∞ ‖f‖_∞ / c0`;
//! * `r0`, the Ricci bound, is zero on a flat torus.
//!
//! Suprema in `λ` are taken over a finite box that contains the a-priori
//! range of the solution. The gate is `c0 - b0 - gamma > 0` and
//! `(c0 - b0 - gamma)² - 4 f0 beta > 0`; `R(ε)`, the smaller root of
//! `beta X² - X (c0 - b0 - ε r0 - gamma) + f0`, bounds the Lipschitz
//! constant of every Picard iterate.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::expr::{EvalError, FieldExpr, Var};
use crate::pde::Pde;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstantsError {
    #[error("need at least 64 samples per axis, got {0}")]
    TooFewSamples(usize),
    #[error("invalid lambda box [{lo}, {hi}]")]
    InvalidBox { lo: f64, hi: f64 },
    #[error("evaluating {what} failed: {source}")]
    Eval {
        what: &'static str,
        source: EvalError,
    },
    #[error("hyperbolicity gate not satisfied: {0}")]
    Gate(String),
    #[error("c is not positive on the lambda box (min c = {0})")]
    NonPositiveC(f64),
    #[error("epsilon {0} outside the admissible range")]
    Epsilon(f64),
    #[error("a-priori lambda box did not stabilize; supply lambda_box explicitly")]
    BoxDiverged,
}

/// Closed interval of `λ` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaBox {
    pub lo: f64,
    pub hi: f64,
}

impl LambdaBox {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ConstantsError> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ConstantsError::InvalidBox { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        self.lo <= lo && hi <= self.hi
    }

    fn points(&self, samples: usize) -> Vec<f64> {
        if self.lo == self.hi {
            return vec![self.lo];
        }
        (0..samples)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (samples - 1) as f64)
            .collect()
    }
}

/// Everything the estimates need, plus the raw suprema they are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsReport {
    pub b0: f64,
    pub beta: f64,
    pub c0: f64,
    pub f0: f64,
    pub gamma: f64,
    pub r0: f64,
    pub cond1: bool,
    pub cond2: bool,
    /// `c0 > 0`; when false the gate is reported as failed.
    pub c0_positive: bool,
    pub lambda_box: LambdaBox,
    pub samples: usize,
    pub f_sup: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub df_sup: f64,
    pub c_max: f64,
    pub dc_sup: f64,
    pub dc_dlam_sup: f64,
}

impl ConstantsReport {
    pub fn gate_passed(&self) -> bool {
        self.cond1 && self.cond2
    }

    /// `c0 - b0 - gamma`.
    pub fn margin(&self) -> f64 {
        self.c0 - self.b0 - self.gamma
    }

    /// Contraction factor `(beta R(ε) + gamma)/c0` of the Picard increments.
    pub fn rho_star(&self, eps: f64) -> Result<f64, ConstantsError> {
        Ok((self.beta * r_of_eps(self, eps)? + self.gamma) / self.c0)
    }
}

/// Upper end of the admissible viscosity range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsBar {
    Finite(f64),
    /// `r0 = 0`: every `ε ≥ 0` is admissible.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UniquenessRadius {
    Finite(f64),
    /// No `λ`-dependence at all: uniqueness is unconditional.
    Unbounded,
    /// `b0 = 0` with `beta > 0`; the radius formula divides by `b0`.
    Degenerate,
}

struct Derivatives {
    jac: Vec<Vec<FieldExpr>>,
    db_dlam: Vec<FieldExpr>,
    dc_dx: Vec<FieldExpr>,
    dc_dlam: FieldExpr,
    df_dx: Vec<FieldExpr>,
}

impl Derivatives {
    fn new(pde: &Pde) -> Self {
        Self {
            jac: pde.b().iter().map(FieldExpr::gradient).collect(),
            db_dlam: pde.b().iter().map(|e| e.differentiate(Var::Lam)).collect(),
            dc_dx: pde.c().gradient(),
            dc_dlam: pde.c().differentiate(Var::Lam),
            df_dx: pde.f().gradient(),
        }
    }
}

fn x_samples(dim: usize, samples: usize) -> Vec<[f64; 2]> {
    let h = TAU / samples as f64;
    if dim == 1 {
        (0..samples).map(|i| [i as f64 * h, 0.0]).collect()
    } else {
        (0..samples * samples)
            .map(|k| [(k % samples) as f64 * h, (k / samples) as f64 * h])
            .collect()
    }
}

fn ev(e: &FieldExpr, x: &[f64; 2], lam: f64, what: &'static str) -> Result<f64, ConstantsError> {
    e.eval(&x[..e.dim()], lam)
        .map_err(|source| ConstantsError::Eval { what, source })
}

/// Largest eigenvalue of the symmetric part of a 1×1 or 2×2 matrix.
pub fn sym_max_eigenvalue(m: &[[f64; 2]; 2], dim: usize) -> f64 {
    if dim == 1 {
        return m[0][0];
    }
    let a = m[0][0];
    let d = m[1][1];
    let off = 0.5 * (m[0][1] + m[1][0]);
    0.5 * (a + d) + (0.25 * (a - d) * (a - d) + off * off).sqrt()
}

/// Jacobian `∂b_i/∂x_k` of the field at a point for a fixed `λ`.
pub fn jacobian_at(b: &[FieldExpr], x: &[f64], lam: f64) -> Result<[[f64; 2]; 2], EvalError> {
    let mut m = [[0.0; 2]; 2];
    for (i, bi) in b.iter().enumerate() {
        for (k, d) in bi.gradient().iter().enumerate() {
            m[i][k] = d.eval(x, lam)?;
        }
    }
    Ok(m)
}

/// Dense sampling of the constants over `V × lambda_box`.
pub fn compute_constants(
    pde: &Pde,
    lambda_box: LambdaBox,
    samples: usize,
) -> Result<ConstantsReport, ConstantsError> {
    if samples < 64 {
        return Err(ConstantsError::TooFewSamples(samples));
    }
    let dim = pde.dim();
    let d = Derivatives::new(pde);
    let xs = x_samples(dim, samples);
    let lams = lambda_box.points(samples);

    let (mut f_sup, mut f_min, mut f_max, mut df_sup) =
        (0.0f64, f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for x in &xs {
        let fv = ev(pde.f(), x, 0.0, "f")?;
        f_sup = f_sup.max(fv.abs());
        f_min = f_min.min(fv);
        f_max = f_max.max(fv);
        let mut g2 = 0.0;
        for e in &d.df_dx {
            g2 += ev(e, x, 0.0, "df")?.powi(2);
        }
        df_sup = df_sup.max(g2.sqrt());
    }

    let mut b0 = f64::NEG_INFINITY;
    let (mut beta, mut c_min, mut c_max, mut dc_sup, mut dc_dlam_sup) =
        (0.0f64, f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let b_lam_dep = pde.b().iter().any(FieldExpr::depends_on_lambda);
    let c_lam_dep = pde.c().depends_on_lambda();
    for (li, &lam) in lams.iter().enumerate() {
        for x in &xs {
            if li == 0 || b_lam_dep {
                let mut m = [[0.0; 2]; 2];
                for (i, row) in d.jac.iter().enumerate() {
                    for (k, e) in row.iter().enumerate() {
                        m[i][k] = ev(e, x, lam, "jacobian of b")?;
                    }
                }
                b0 = b0.max(sym_max_eigenvalue(&m, dim));
                let mut n2 = 0.0;
                for e in &d.db_dlam {
                    n2 += ev(e, x, lam, "db/dlam")?.powi(2);
                }
                beta = beta.max(n2.sqrt());
            }
            if li == 0 || c_lam_dep {
                let cv = ev(pde.c(), x, lam, "c")?;
                c_min = c_min.min(cv);
                c_max = c_max.max(cv);
                let mut g2 = 0.0;
                for e in &d.dc_dx {
                    g2 += ev(e, x, lam, "dc")?.powi(2);
                }
                dc_sup = dc_sup.max(g2.sqrt());
                dc_dlam_sup = dc_dlam_sup.max(ev(&d.dc_dlam, x, lam, "dc/dlam")?.abs());
            }
        }
    }

    let c0 = c_min;
    let c0_positive = c0 > 0.0;
    let (f0, gamma) = if c0_positive {
        (df_sup + f_sup * dc_sup / c0, dc_dlam_sup * f_sup / c0)
    } else {
        (f64::NAN, f64::NAN)
    };
    let margin = c0 - b0 - gamma;
    let cond1 = c0_positive && margin > 0.0;
    let cond2 = cond1 && margin * margin - 4.0 * f0 * beta > 0.0;
    Ok(ConstantsReport {
        b0,
        beta,
        c0,
        f0,
        gamma,
        r0: 0.0,
        cond1,
        cond2,
        c0_positive,
        lambda_box,
        samples,
        f_sup,
        f_min,
        f_max,
        df_sup,
        c_max,
        dc_sup,
        dc_dlam_sup,
    })
}

/// A box containing `[min f / max c, max f / min c]` evaluated over the box
/// itself, grown from `{0}` by fixed-point iteration.
///
/// The box always contains 0, the default first Picard iterate.
pub fn a_priori_box(pde: &Pde, samples: usize) -> Result<LambdaBox, ConstantsError> {
    let samples = samples.max(64);
    let xs = x_samples(pde.dim(), samples);
    let mut fmin = f64::INFINITY;
    let mut fmax = f64::NEG_INFINITY;
    for x in &xs {
        let v = ev(pde.f(), x, 0.0, "f")?;
        fmin = fmin.min(v);
        fmax = fmax.max(v);
    }
    let mut current = LambdaBox { lo: 0.0, hi: 0.0 };
    for _ in 0..60 {
        let (mut cmin, mut cmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for lam in current.points(samples) {
            for x in &xs {
                let v = ev(pde.c(), x, lam, "c")?;
                cmin = cmin.min(v);
                cmax = cmax.max(v);
            }
        }
        if cmin <= 0.0 {
            return Err(ConstantsError::NonPositiveC(cmin));
        }
        let lo = (fmin / cmax).min(fmin / cmin).min(0.0);
        let hi = (fmax / cmin).max(fmax / cmax).max(0.0);
        if current.contains(lo, hi)
            && !(current.lo == 0.0 && current.hi == 0.0 && (lo < 0.0 || hi > 0.0))
        {
            return Ok(current);
        }
        let pad = 0.02 * (hi - lo) + 1e-12;
        current = LambdaBox {
            lo: if lo < 0.0 { lo - pad } else { 0.0 },
            hi: if hi > 0.0 { hi + pad } else { 0.0 },
        };
    }
    Err(ConstantsError::BoxDiverged)
}

fn require_gate(rep: &ConstantsReport) -> Result<(), ConstantsError> {
    if !rep.c0_positive {
        return Err(ConstantsError::Gate(format!(
            "c0 = {} is not positive",
            rep.c0
        )));
    }
    if !rep.cond1 {
        return Err(ConstantsError::Gate(format!(
            "c0 - b0 - gamma = {} is not positive",
            rep.margin()
        )));
    }
    if !rep.cond2 {
        return Err(ConstantsError::Gate(format!(
            "(c0 - b0 - gamma)^2 - 4 f0 beta = {} is not positive",
            rep.margin().powi(2) - 4.0 * rep.f0 * rep.beta
        )));
    }
    Ok(())
}

pub fn eps_bar(rep: &ConstantsReport) -> Result<EpsBar, ConstantsError> {
    require_gate(rep)?;
    if rep.r0 == 0.0 {
        return Ok(EpsBar::Unbounded);
    }
    Ok(EpsBar::Finite(
        (rep.margin() - 2.0 * (rep.f0 * rep.beta).sqrt()) / rep.r0,
    ))
}

/// Smaller root of `beta X² - X (c0 - b0 - ε r0 - gamma) + f0 = 0`.
pub fn r_of_eps(rep: &ConstantsReport, eps: f64) -> Result<f64, ConstantsError> {
    if let EpsBar::Finite(bar) = eps_bar(rep)? {
        if eps >= bar {
            return Err(ConstantsError::Epsilon(eps));
        }
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(ConstantsError::Epsilon(eps));
    }
    let d = rep.c0 - rep.b0 - eps * rep.r0 - rep.gamma;
    let disc = d * d - 4.0 * rep.beta * rep.f0;
    if d <= 0.0 || disc < 0.0 {
        return Err(ConstantsError::Epsilon(eps));
    }
    // 2 f0 / (d + sqrt(disc)) is the small root without cancellation, and
    // reduces to f0 / d when beta = 0.
    Ok(2.0 * rep.f0 / (d + disc.sqrt()))
}

/// Lipschitz bound `f0 / (c0 - ε r0 - b0)` of the linear viscous solution.
pub fn lip_bound_linear(rep: &ConstantsReport, eps: f64) -> Result<f64, ConstantsError> {
    let denom = rep.c0 - eps * rep.r0 - rep.b0;
    if !rep.c0_positive || denom <= 0.0 {
        return Err(ConstantsError::Gate(format!(
            "c0 - eps r0 - b0 = {denom} is not positive"
        )));
    }
    Ok(rep.f0 / denom)
}

/// Radius in `C^{0,1}` of the set of right-hand sides for which an
/// `M`-Lipschitz solution is unique.
pub fn uniqueness_radius(
    rep: &ConstantsReport,
    m: f64,
) -> Result<UniquenessRadius, ConstantsError> {
    if rep.beta == 0.0 && rep.dc_dlam_sup == 0.0 {
        return Ok(UniquenessRadius::Unbounded);
    }
    let mut inv = 0.0;
    if rep.beta > 0.0 {
        if rep.b0 <= 0.0 {
            return Ok(UniquenessRadius::Degenerate);
        }
        let denom = rep.c0 - rep.b0 - m * rep.beta;
        if denom <= 0.0 {
            return Err(ConstantsError::Gate(format!(
                "c0 - b0 - M beta = {denom} is not positive"
            )));
        }
        inv += rep.beta / (denom * rep.b0) * (1.0 + m * rep.dc_dlam_sup + rep.dc_sup);
    }
    if !rep.c0_positive {
        return Err(ConstantsError::Gate(format!(
            "c0 = {} is not positive",
            rep.c0
        )));
    }
    inv += rep.dc_dlam_sup / (rep.c0 * rep.c0);
    Ok(UniquenessRadius::Finite(1.0 / inv))
}

/// Shape of the linear part `B` of a field at a zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RepellerClass {
    /// `B` symmetric positive definite.
    SymmetricPositive,
    /// `B = S + A` with `S` symmetric positive definite and `SA` antisymmetric.
    SymmetricPlusSkew {
        s: [[f64; 2]; 2],
    },
    NotRepeller,
}

fn is_spd(s: &[[f64; 2]; 2], dim: usize) -> bool {
    if dim == 1 {
        return s[0][0] > 0.0;
    }
    s[0][0] > 0.0 && s[0][0] * s[1][1] - s[0][1] * s[1][0] > 0.0
}

/// Classifies the linearization of `b` at a zero.
pub fn classify_repeller(b: &[[f64; 2]; 2], dim: usize) -> RepellerClass {
    if dim == 1 {
        return if b[0][0] > 0.0 {
            RepellerClass::SymmetricPositive
        } else {
            RepellerClass::NotRepeller
        };
    }
    let scale = b
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    if (b[0][1] - b[1][0]).abs() <= 1e-12 * scale {
        return if is_spd(b, 2) {
            RepellerClass::SymmetricPositive
        } else {
            RepellerClass::NotRepeller
        };
    }
    // Look for S with sym(S B) = S², i.e. S B + Bᵀ S = 2 S², by Newton's method
    // on the three entries of S.
    let residual = |p: [f64; 3]| -> [f64; 3] {
        let s = [[p[0], p[1]], [p[1], p[2]]];
        let mut r = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut sb = 0.0;
                let mut bts = 0.0;
                let mut ss = 0.0;
                for k in 0..2 {
                    sb += s[i][k] * b[k][j];
                    bts += b[k][i] * s[k][j];
                    ss += s[i][k] * s[k][j];
                }
                r[i][j] = sb + bts - 2.0 * ss;
            }
        }
        [r[0][0], r[0][1], r[1][1]]
    };
    let tr = 0.5 * (b[0][0] + b[1][1]);
    let starts = [
        [b[0][0], 0.5 * (b[0][1] + b[1][0]), b[1][1]],
        [tr, 0.0, tr],
        [tr.abs().max(1.0), 0.1, tr.abs().max(1.0)],
        [2.0 * tr.abs().max(1.0), -0.3, 0.5 * tr.abs().max(1.0)],
    ];
    for start in starts {
        let mut p = start;
        for _ in 0..100 {
            let r = residual(p);
            let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm <= 1e-13 * scale * scale {
                let s = [[p[0], p[1]], [p[1], p[2]]];
                let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
                if s[0][0] > 1e-8 * scale && det > 1e-8 * scale * scale {
                    return RepellerClass::SymmetricPlusSkew { s };
                }
                break;
            }
            let mut jac = [[0.0; 3]; 3];
            for k in 0..3 {
                let step = 1e-7 * (1.0 + p[k].abs());
                let mut q = p;
                q[k] += step;
                let rq = residual(q);
                for i in 0..3 {
                    jac[i][k] = (rq[i] - r[i]) / step;
                }
            }
            match solve3(jac, [-r[0], -r[1], -r[2]]) {
                Some(dp) => {
                    for k in 0..3 {
                        p[k] += dp[k];
                    }
                }
                None => break,
            }
        }
    }
    RepellerClass::NotRepeller
}

#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let factor = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= factor * a[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = rhs[row];
        for k in row + 1..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}
