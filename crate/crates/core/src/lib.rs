//! Structure-preserving interpolatory model reduction for polynomial
//! structured dynamical systems.

pub mod basis;
pub mod bench;
pub mod bundle;
pub mod cli;
pub mod drop;
pub mod error;
pub mod expr;
pub mod lu;
pub mod model;
pub mod mtx;
pub mod signal;
pub mod simulate;
pub mod sparse;
pub mod svd;
pub mod tensor;
pub mod transfer;

pub use error::{MorError, Result};
pub use expr::{ScalarExpr, Var};
pub use model::{BilinTerm, Family, ParamMatrix, PolyTerm, ReducedSystem, StructuredOperator, System, C64};
