//! The data `(b, c, f)` of an equation `<b(u,x), grad u> + c(u,x) u = f(x)`.

use thiserror::Error;

use crate::expr::{FieldExpr, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("field `{field}`: {source}")]
    Parse { field: String, source: ParseError },
    #[error("b needs {expected} components, got {got}")]
    Components { expected: usize, got: usize },
    #[error("field `{field}` is declared for dimension {got}, problem has dimension {expected}")]
    Dimension {
        field: String,
        expected: usize,
        got: usize,
    },
    #[error("the right-hand side f may not depend on `lam`")]
    ForcingDependsOnLambda,
}

/// A first-order problem on the flat torus of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pde {
    dim: usize,
    b: Vec<FieldExpr>,
    c: FieldExpr,
    f: FieldExpr,
}

impl Pde {
    pub fn new(b: Vec<FieldExpr>, c: FieldExpr, f: FieldExpr) -> Result<Self, PdeError> {
        let dim = c.dim();
        if b.len() != dim {
            return Err(PdeError::Components {
                expected: dim,
                got: b.len(),
            });
        }
        for (name, e) in b
            .iter()
            .enumerate()
            .map(|(k, e)| (format!("b{}", k + 1), e))
            .chain([("f".to_string(), &f)])
        {
            if e.dim() != dim {
                return Err(PdeError::Dimension {
                    field: name,
                    expected: dim,
                    got: e.dim(),
                });
            }
        }
        if f.depends_on_lambda() {
            return Err(PdeError::ForcingDependsOnLambda);
        }
        Ok(Self { dim, b, c, f })
    }

    /// Parses the textual fields; `b` holds one expression per axis.
    pub fn parse(dim: usize, b: &[&str], c: &str, f: &str) -> Result<Self, PdeError> {
        let parse = |field: String, src: &str| {
            FieldExpr::parse(src, dim).map_err(|source| PdeError::Parse { field, source })
        };
        let b = b
            .iter()
            .enumerate()
            .map(|(k, src)| parse(format!("b{}", k + 1), src))
            .collect::<Result<Vec<_>, _>>()?;
        let c = parse("c".into(), c)?;
        let f = parse("f".into(), f)?;
        Self::new(b, c, f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn b(&self) -> &[FieldExpr] {
        &self.b
    }

    pub fn c(&self) -> &FieldExpr {
        &self.c
    }

    pub fn f(&self) -> &FieldExpr {
        &self.f
    }

    /// True when neither `b` nor `c` depends on `lam`.
    pub fn is_linear(&self) -> bool {
        !self.c.depends_on_lambda() && self.b.iter().all(|e| !e.depends_on_lambda())
    }

    /// Same `b` and `f`, zero-order coefficient replaced.
    pub fn with_c(&self, c: FieldExpr) -> Result<Self, PdeError> {
        Self::new(self.b.clone(), c, self.f.clone())
    }

    pub fn with_f(&self, f: FieldExpr) -> Result<Self, PdeError> {
        Self::new(self.b.clone(), self.c.clone(), f)
    }
}
