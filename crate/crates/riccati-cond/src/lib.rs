pub mod cli;
pub mod condnum;
pub mod error;
pub mod harness;
pub mod lyapunov;
pub mod matrix;
pub mod riccati;
pub mod sce;
pub mod schur;
pub mod structured;

pub use error::{Error, Result};
pub use matrix::{CMat, CVec, Cpx, RMat, RVec};
