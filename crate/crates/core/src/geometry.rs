//! Uniform periodic grids on the flat torus `[0, 2π)^m` and the discrete
//! operators used by the elliptic solver.
//!
//! Nodes are numbered with the `x1` index running fastest: node
//! `i + n*j` sits at `(i*h, j*h)`. The Laplacian here follows the
//! positive sign convention `Δ = -div grad`, so [`neg_laplacian`] returns a
//! positive semidefinite operator applied to `u`.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::expr::{EvalError, FieldExpr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("grid needs dimension 1 or 2 and at least 8 points per axis (got m={dim}, n={n})")]
    InvalidGrid { dim: usize, n: usize },
    #[error("expression depends on `lam` but no lambda field was supplied")]
    MissingLambdaField,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },
    #[error("expected {expected} field components, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("evaluation failed at node {index}: {source}")]
    Eval { index: usize, source: EvalError },
}

/// A uniform periodic grid with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self, GeometryError> {
        if !(1..=2).contains(&dim) || n < 8 {
            return Err(GeometryError::InvalidGrid { dim, n });
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    /// Total number of nodes, `n^m`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Integer index of `node` along `axis`.
    #[inline]
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        if axis == 0 {
            node % self.n
        } else {
            node / self.n
        }
    }

    /// Coordinates of a node; the second entry is zero on the circle.
    #[inline]
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let h = self.spacing();
        if self.dim == 1 {
            [node as f64 * h, 0.0]
        } else {
            [(node % self.n) as f64 * h, (node / self.n) as f64 * h]
        }
    }

    /// Node reached from `node` by `offset` steps along `axis`, wrapping around.
    #[inline]
    pub fn neighbor(&self, node: usize, axis: usize, offset: isize) -> usize {
        let n = self.n as isize;
        if axis == 0 {
            let i = (node % self.n) as isize;
            let wrapped = (i + offset).rem_euclid(n) as usize;
            node - (node % self.n) + wrapped
        } else {
            let j = (node / self.n) as isize;
            let wrapped = (j + offset).rem_euclid(n) as usize;
            node % self.n + self.n * wrapped
        }
    }
}

/// Values attached to the nodes of a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() != grid.len() {
            return Err(GeometryError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples a closure at every node.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, GeometryError> {
        if self.grid != other.grid {
            return Err(GeometryError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `max |self - other|` over the nodes.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64, GeometryError> {
        Ok(sup_norm(&self.zip_with(other, |a, b| a - b)?))
    }

    /// Translation by one node: the result at node `i` is the value at `i + e_axis`.
    pub fn shifted(&self, axis: usize, steps: isize) -> Self {
        let values = (0..self.grid.len())
            .map(|i| self.values[self.grid.neighbor(i, axis, steps)])
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Periodic piecewise-(bi)linear interpolation at an arbitrary point.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let n = self.grid.n;
        let h = self.grid.spacing();
        let locate = |coord: f64| {
            let s = coord.rem_euclid(TAU) / h;
            let base = s.floor();
            let i = (base as usize) % n;
            (i, (i + 1) % n, s - base)
        };
        let (i0, i1, tx) = locate(x[0]);
        if self.grid.dim == 1 {
            return (1.0 - tx) * self.values[i0] + tx * self.values[i1];
        }
        let (j0, j1, ty) = locate(x[1]);
        let v = |i: usize, j: usize| self.values[i + n * j];
        (1.0 - ty) * ((1.0 - tx) * v(i0, j0) + tx * v(i1, j0))
            + ty * ((1.0 - tx) * v(i0, j1) + tx * v(i1, j1))
    }

    /// CSV with one row per node: `x1[,x2],value`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(if self.grid.dim == 1 {
            "x1,value\n"
        } else {
            "x1,x2,value\n"
        });
        for (i, v) in self.values.iter().enumerate() {
            let x = self.grid.coords(i);
            if self.grid.dim == 1 {
                let _ = writeln!(out, "{:.16e},{:.16e}", x[0], v);
            } else {
                let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", x[0], x[1], v);
            }
        }
        out
    }
}

/// Advection discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// One-sided differences taken against the flow; monotone.
    #[default]
    Upwind,
    /// Second-order central differences.
    Centered,
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "upwind" => Ok(Scheme::Upwind),
            "centered" => Ok(Scheme::Centered),
            other => Err(format!(
                "unknown scheme `{other}` (expected upwind|centered)"
            )),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Upwind => "upwind",
            Scheme::Centered => "centered",
        })
    }
}

/// Evaluates `e` at every node. `lam` is read from `lambda_field` when the
/// expression depends on it.
pub fn sample(
    e: &FieldExpr,
    grid: TorusGrid,
    lambda_field: Option<&GridFunction>,
) -> Result<GridFunction, GeometryError> {
    if e.depends_on_lambda() && lambda_field.is_none() {
        return Err(GeometryError::MissingLambdaField);
    }
    if let Some(l) = lambda_field {
        if l.grid != grid {
            return Err(GeometryError::GridMismatch);
        }
    }
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.coords(i);
            let lam = lambda_field.map_or(0.0, |l| l.values[i]);
            e.eval(&x[..grid.dim], lam)
                .map_err(|source| GeometryError::Eval { index: i, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GridFunction { grid, values })
}

/// `Δu = -(sum of second central differences)/h²` with periodic wrap.
pub fn neg_laplacian(u: &GridFunction) -> GridFunction {
    let grid = u.grid;
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let values = (0..grid.len())
        .map(|i| {
            let mut acc = 0.0;
            for axis in 0..grid.dim {
                let fwd = u.values[grid.neighbor(i, axis, 1)];
                let bwd = u.values[grid.neighbor(i, axis, -1)];
                acc += (u.values[i] - fwd) + (u.values[i] - bwd);
            }
            acc * inv_h2
        })
        .collect();
    GridFunction { grid, values }
}

/// Discrete `<b, grad u>`.
///
/// With [`Scheme::Upwind`] each axis uses the backward difference where the
/// corresponding component of `b` is positive and the forward difference
/// otherwise.
pub fn advect(
    b: &[GridFunction],
    u: &GridFunction,
    scheme: Scheme,
) -> Result<GridFunction, GeometryError> {
    let grid = u.grid;
    if b.len() != grid.dim {
        return Err(GeometryError::ComponentCount {
            expected: grid.dim,
            got: b.len(),
        });
    }
    if b.iter().any(|bk| bk.grid != grid) {
        return Err(GeometryError::GridMismatch);
    }
    let h = grid.spacing();
    let values = (0..grid.len())
        .map(|i| {
            let mut acc = 0.0;
            for (axis, bk) in b.iter().enumerate() {
                let speed = bk.values[i];
                let fwd = u.values[grid.neighbor(i, axis, 1)];
                let bwd = u.values[grid.neighbor(i, axis, -1)];
                let here = u.values[i];
                let slope = match scheme {
                    Scheme::Upwind if speed > 0.0 => (here - bwd) / h,
                    Scheme::Upwind => (fwd - here) / h,
                    Scheme::Centered => (fwd - bwd) / (2.0 * h),
                };
                acc += speed * slope;
            }
            acc
        })
        .collect();
    Ok(GridFunction { grid, values })
}

pub fn sup_norm(u: &GridFunction) -> f64 {
    u.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Largest forward difference quotient over all axes and nodes; the
/// discrete stand-in for `‖du‖_∞`.
pub fn lip_estimate(u: &GridFunction) -> f64 {
    let grid = u.grid;
    let h = grid.spacing();
    let mut best = 0.0f64;
    for i in 0..grid.len() {
        for axis in 0..grid.dim {
            let d = (u.values[grid.neighbor(i, axis, 1)] - u.values[i]).abs() / h;
            best = best.max(d);
        }
    }
    best
}

/// Largest second difference quotient `|u(i+1) - 2u(i) + u(i-1)|/h²` over
/// all axes and nodes.
pub fn second_difference_max(u: &GridFunction) -> f64 {
    let grid = u.grid;
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut best = 0.0f64;
    for i in 0..grid.len() {
        for axis in 0..grid.dim {
            let d = u.values[grid.neighbor(i, axis, 1)] - 2.0 * u.values[i]
                + u.values[grid.neighbor(i, axis, -1)];
            best = best.max(d.abs() * inv_h2);
        }
    }
    best
}

/// Distance between two points of the torus (shortest periodic image).
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).rem_euclid(TAU);
            let d = d.min(TAU - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}
