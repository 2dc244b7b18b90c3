//! Guide chapters compiled as doctests, one module per chapter so a
//! failing listing points at its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/expressions.md")]
pub mod expressions {}
#[doc = include_str!("../../../book/src/grids.md")]
pub mod grids {}
#[doc = include_str!("../../../book/src/characteristics.md")]
pub mod characteristics {}
#[doc = include_str!("../../../book/src/viscosity.md")]
pub mod viscosity {}
#[doc = include_str!("../../../book/src/nonlinear.md")]
pub mod nonlinear {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
