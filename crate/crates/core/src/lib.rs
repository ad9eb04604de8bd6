pub mod check;
pub mod doubling;
pub mod entropy;
pub mod error;
pub mod heat_calculus;
pub mod identities;
pub mod liyau;
pub mod model_spaces;
pub mod quadrature;
pub mod run;

pub use check::{CheckReport, Verdict};
pub use error::{Error, Result};
pub use model_spaces::{KernelEval, ModelSpace, Offset};
pub use quadrature::QuadratureSpec;
