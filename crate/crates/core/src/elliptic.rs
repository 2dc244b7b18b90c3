//! The regularized equation `ε(-Δ)u + <b, grad u> + c u = f` on a grid.
//!
//! Rows of `A = εL + B + diag(c)` use the five- or three-point Laplacian and
//! one-sided (upwind) or central advection. With upwind advection and
//! `c > 0`, `A` is an M-matrix: positive diagonal, nonpositive off-diagonal
//! entries and strict diagonal dominance. Gauss-Seidel then converges and
//! the residual controls the error, `‖u - u_h‖ ≤ ‖r‖ / min c`.

use rayon::prelude::*;
use thiserror::Error;

use crate::characteristics::{CharError, CharacteristicSolver};
use crate::geometry::{sample, GeometryError, GridFunction, Scheme, TorusGrid};
use crate::pde::Pde;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EllipticError {
    #[error("epsilon must be finite and nonnegative, got {0}")]
    Epsilon(f64),
    #[error("the centered scheme needs epsilon > 0")]
    CenteredWithoutViscosity,
    #[error("grid dimension {grid} does not match problem dimension {pde}")]
    Dimension { grid: usize, pde: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("epsilon ladder must be positive and strictly decreasing")]
    Ladder,
    #[error(
        "solver did not converge at eps = {eps}: residual {residual:e} after {iterations} sweeps"
    )]
    NotConverged {
        eps: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("reference solution: {0}")]
    Reference(#[from] CharError),
}

/// Compressed sparse rows with the diagonal position of each row cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<usize>,
}

impl SparseMatrix {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            // merge duplicates, which appear when neighbors coincide
            row.sort_by_key(|&(j, _)| j);
            let mut d = None;
            for (j, v) in row {
                if cols.len() > row_ptr[i] && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    if j == i {
                        d = Some(cols.len());
                    }
                    cols.push(j);
                    vals.push(v);
                }
            }
            diag.push(d.expect("every row carries a diagonal entry"));
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
            diag,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.vals[self.diag[i]]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.iter().position(|&k| k == j).map_or(0.0, |p| v[p])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }
}

/// `A u = f` for one value of `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub grid: TorusGrid,
    pub matrix: SparseMatrix,
    pub rhs: GridFunction,
    /// `c` at the nodes; also the row sums of `A`.
    pub c: GridFunction,
    pub eps: f64,
    pub scheme: Scheme,
}

impl LinearSystem {
    pub fn is_m_matrix(&self) -> bool {
        (0..self.matrix.size()).all(|i| {
            let (cols, vals) = self.matrix.row(i);
            let d = self.matrix.diagonal(i);
            let mut off = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    if v > 0.0 {
                        return false;
                    }
                    off += v.abs();
                }
            }
            d > 0.0 && d > off
        })
    }

    /// `f - A u`.
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let au = self.matrix.mul_vec(u);
        self.rhs
            .values()
            .iter()
            .zip(au)
            .map(|(f, a)| f - a)
            .collect()
    }
}

/// Builds `A = εL + B + diag(c)`; `lam` in `b` and `c` is read from
/// `lambda_field` when given.
pub fn assemble(
    pde: &Pde,
    grid: TorusGrid,
    eps: f64,
    scheme: Scheme,
    lambda_field: Option<&GridFunction>,
) -> Result<LinearSystem, EllipticError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(EllipticError::Epsilon(eps));
    }
    if scheme == Scheme::Centered && eps == 0.0 {
        return Err(EllipticError::CenteredWithoutViscosity);
    }
    if grid.dim() != pde.dim() {
        return Err(EllipticError::Dimension {
            grid: grid.dim(),
            pde: pde.dim(),
        });
    }
    let b = pde
        .b()
        .iter()
        .map(|e| sample(e, grid, lambda_field))
        .collect::<Result<Vec<_>, _>>()?;
    let c = sample(pde.c(), grid, lambda_field)?;
    let rhs = sample(pde.f(), grid, None)?;
    let h = grid.spacing();
    let diff = eps / (h * h);
    let rows = (0..grid.len())
        .map(|i| {
            let mut row = Vec::with_capacity(1 + 2 * grid.dim());
            let mut centre = c.values()[i];
            for (axis, bk) in b.iter().enumerate() {
                let fwd = grid.neighbor(i, axis, 1);
                let bwd = grid.neighbor(i, axis, -1);
                centre += 2.0 * diff;
                row.push((fwd, -diff));
                row.push((bwd, -diff));
                let s = bk.values()[i] / h;
                match scheme {
                    Scheme::Upwind if s > 0.0 => {
                        centre += s;
                        row.push((bwd, -s));
                    }
                    Scheme::Upwind => {
                        centre -= s;
                        row.push((fwd, s));
                    }
                    Scheme::Centered => {
                        row.push((fwd, 0.5 * s));
                        row.push((bwd, -0.5 * s));
                    }
                }
            }
            row.push((i, centre));
            row
        })
        .collect();
    Ok(LinearSystem {
        grid,
        matrix: SparseMatrix::from_rows(rows),
        rhs,
        c,
        eps,
        scheme,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Shift by the constant that cancels the mean residual after each
    /// sweep; constants are cheap to correct because `A 1 = c`.
    pub mean_correction: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
            mean_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub residual_sup: f64,
    pub iterations: usize,
    pub eps: f64,
    pub converged: bool,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn solve(system: &LinearSystem, tol: f64, max_iter: usize) -> SolveReport {
    solve_with(
        system,
        None,
        SolverOptions {
            tol,
            max_iter,
            ..SolverOptions::default()
        },
    )
}

/// Symmetric Gauss-Seidel (one forward and one backward sweep per
/// iteration) from `initial`, or zero.
pub fn solve_with(
    system: &LinearSystem,
    initial: Option<&GridFunction>,
    opts: SolverOptions,
) -> SolveReport {
    let a = &system.matrix;
    let f = system.rhs.values();
    let n = a.size();
    let mut u = match initial {
        Some(g) if g.grid() == system.grid => g.values().to_vec(),
        _ => vec![0.0; n],
    };
    let c_sum: f64 = system.c.values().iter().sum();
    let relax = |u: &mut Vec<f64>, i: usize| {
        let (cols, vals) = a.row(i);
        let mut acc = f[i];
        for (&j, &v) in cols.iter().zip(vals) {
            if j != i {
                acc -= v * u[j];
            }
        }
        u[i] = acc / a.diagonal(i);
    };
    let mut residual = sup(&system.residual(&u));
    let mut iterations = 0;
    while residual > opts.tol && residual.is_finite() && iterations < opts.max_iter {
        for i in 0..n {
            relax(&mut u, i);
        }
        for i in (0..n).rev() {
            relax(&mut u, i);
        }
        iterations += 1;
        let mut r = system.residual(&u);
        if opts.mean_correction && c_sum != 0.0 {
            let shift = r.iter().sum::<f64>() / c_sum;
            for (ui, (ri, ci)) in u.iter_mut().zip(r.iter_mut().zip(system.c.values())) {
                *ui += shift;
                *ri -= shift * ci;
            }
        }
        residual = sup(&r);
    }
    let converged = residual <= opts.tol;
    let solution = if u.iter().all(|v| v.is_finite()) {
        GridFunction::new(system.grid, u).expect("length matches grid")
    } else {
        GridFunction::constant(system.grid, f64::NAN)
    };
    SolveReport {
        solution,
        residual_sup: residual,
        iterations,
        eps: system.eps,
        converged,
    }
}

/// Reference used by [`viscosity_sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// Backward-characteristic quadrature at the nodes, to tolerance `tol`.
    Characteristics {
        tol: f64,
    },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    /// `None` without a reference.
    pub sup_error: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn validate_ladder(ladder: &[f64]) -> Result<(), EllipticError> {
    let ok = !ladder.is_empty()
        && ladder.iter().all(|e| *e > 0.0 && e.is_finite())
        && ladder.windows(2).all(|w| w[1] < w[0]);
    if ok {
        Ok(())
    } else {
        Err(EllipticError::Ladder)
    }
}

/// Solves along a decreasing `ε` ladder, warm-starting each solve from the
/// previous one, and measures the distance to the inviscid solution.
pub fn viscosity_sweep(
    pde: &Pde,
    grid: TorusGrid,
    scheme: Scheme,
    eps_ladder: &[f64],
    reference: Reference,
    opts: SolverOptions,
) -> Result<Vec<SweepRow>, EllipticError> {
    validate_ladder(eps_ladder)?;
    let reference = match reference {
        Reference::Characteristics { tol } => {
            Some(CharacteristicSolver::new(pde, tol)?.value_on_grid(grid)?)
        }
        Reference::None => None,
    };
    let mut rows = Vec::with_capacity(eps_ladder.len());
    let mut previous: Option<GridFunction> = None;
    for &eps in eps_ladder {
        let system = assemble(pde, grid, eps, scheme, None)?;
        let rep = solve_with(&system, previous.as_ref(), opts);
        if !rep.converged {
            return Err(EllipticError::NotConverged {
                eps,
                residual: rep.residual_sup,
                iterations: rep.iterations,
            });
        }
        let sup_error = match &reference {
            Some(r) => Some(rep.solution.sup_distance(r)?),
            None => None,
        };
        rows.push(SweepRow {
            eps,
            sup_error,
            iterations: rep.iterations,
            residual: rep.residual_sup,
        });
        previous = Some(rep.solution);
    }
    Ok(rows)
}

/// Solves every `ε` of a ladder independently and in parallel.
pub fn solve_ladder(
    pde: &Pde,
    grid: TorusGrid,
    scheme: Scheme,
    eps_ladder: &[f64],
    opts: SolverOptions,
) -> Result<Vec<SolveReport>, EllipticError> {
    eps_ladder
        .par_iter()
        .map(|&eps| {
            Ok(solve_with(
                &assemble(pde, grid, eps, scheme, None)?,
                None,
                opts,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pde(b: &str, c: &str, f: &str) -> Pde {
        Pde::parse(1, &[b], c, f).unwrap()
    }

    #[test]
    fn transport_free_system_is_diagonal() {
        let grid = TorusGrid::new(1, 16).unwrap();
        let sys = assemble(
            &pde("0", "2 + cos(x1)", "1"),
            grid,
            0.0,
            Scheme::Upwind,
            None,
        )
        .unwrap();
        for i in 0..grid.len() {
            let (cols, _) = sys.matrix.row(i);
            for &j in cols {
                if j != i {
                    assert_eq!(sys.matrix.get(i, j), 0.0);
                }
            }
            assert_eq!(sys.matrix.diagonal(i), sys.c.values()[i]);
        }
    }

    #[test]
    fn row_sums_equal_c() {
        let grid = TorusGrid::new(2, 12).unwrap();
        let p = Pde::parse(2, &["sin(x2)", "cos(x1) - 0.3"], "1.5", "0").unwrap();
        for scheme in [Scheme::Upwind, Scheme::Centered] {
            let sys = assemble(&p, grid, 0.7, scheme, None).unwrap();
            let ones = vec![1.0; grid.len()];
            for (s, c) in sys.matrix.mul_vec(&ones).iter().zip(sys.c.values()) {
                assert!((s - c).abs() <= 1e-12 * sys.matrix.diagonal(0));
            }
        }
    }

    #[test]
    fn pure_diffusion_is_symmetric_positive_definite() {
        let grid = TorusGrid::new(1, 8).unwrap();
        let sys = assemble(&pde("0", "1", "0"), grid, 1.0, Scheme::Upwind, None).unwrap();
        let h2 = grid.spacing().powi(2);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(sys.matrix.get(i, j), sys.matrix.get(j, i));
            }
            assert!((sys.matrix.diagonal(i) - (1.0 + 2.0 / h2)).abs() < 1e-12);
            assert!((sys.matrix.get(i, (i + 1) % 8) + 1.0 / h2).abs() < 1e-12);
        }
        // eigenvalues 1 + (4/h²) sin²(πk/8) > 0 are exhibited by Fourier modes
        for k in 0..8 {
            let v: Vec<f64> = (0..8)
                .map(|j| (std::f64::consts::TAU * (k * j) as f64 / 8.0).cos())
                .collect();
            let av = sys.matrix.mul_vec(&v);
            let lam = 1.0 + 4.0 / h2 * (std::f64::consts::PI * k as f64 / 8.0).sin().powi(2);
            for j in 0..8 {
                assert!((av[j] - lam * v[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn upwind_is_m_matrix_and_centered_needs_viscosity() {
        let grid = TorusGrid::new(1, 64).unwrap();
        let p = pde("sin(x1)", "1 + 0.5*cos(x1)", "1");
        for eps in [0.0, 0.1] {
            assert!(assemble(&p, grid, eps, Scheme::Upwind, None)
                .unwrap()
                .is_m_matrix());
        }
        assert!(matches!(
            assemble(&p, grid, 0.0, Scheme::Centered, None),
            Err(EllipticError::CenteredWithoutViscosity)
        ));
        assert!(matches!(
            assemble(&p, grid, -1.0, Scheme::Upwind, None),
            Err(EllipticError::Epsilon(_))
        ));
    }

    #[test]
    fn diagonal_system_solves_in_one_sweep() {
        let grid = TorusGrid::new(1, 32).unwrap();
        let sys = assemble(&pde("0", "2", "3"), grid, 0.0, Scheme::Upwind, None).unwrap();
        let rep = solve(&sys, 1e-12, 10);
        assert!(rep.converged && rep.iterations == 1);
        assert!(rep.solution.values().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn constant_coefficient_trig_solution() {
        let grid = TorusGrid::new(1, 256).unwrap();
        let eps = 0.5;
        let sys = assemble(&pde("1", "2", "sin(x1)"), grid, eps, Scheme::Upwind, None).unwrap();
        let rep = solve(&sys, 1e-10, 100_000);
        assert!(rep.converged);
        let k = 2.0 + eps;
        let exact = GridFunction::from_fn(grid, |x| (k * x[0].sin() - x[0].cos()) / (k * k + 1.0));
        assert!(rep.solution.sup_distance(&exact).unwrap() < 5e-3);
        let recomputed = sup(&sys.residual(rep.solution.values()));
        assert!((recomputed - rep.residual_sup).abs() < 1e-12);
    }

    #[test]
    fn ladder_validation() {
        assert!(validate_ladder(&[0.4, 0.2]).is_ok());
        assert!(validate_ladder(&[0.2, 0.4]).is_err());
        assert!(validate_ladder(&[0.2, 0.0]).is_err());
        assert!(validate_ladder(&[]).is_err());
    }

    #[test]
    fn zero_forcing_sweep_is_exact() {
        let grid = TorusGrid::new(1, 64).unwrap();
        let rows = viscosity_sweep(
            &pde("1", "2", "0"),
            grid,
            Scheme::Upwind,
            &[0.4, 0.1],
            Reference::Characteristics { tol: 1e-8 },
            SolverOptions::default(),
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.sup_error.unwrap() <= 1e-10));
    }
}
