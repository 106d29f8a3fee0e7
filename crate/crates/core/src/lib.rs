pub mod arch;
pub mod checkpoint;
pub mod cli;
pub mod cohort;
pub mod data;
pub mod error;
pub mod kv;
pub mod eval;
pub mod gradcheck;
pub mod nn;
pub mod parallel;
pub mod profile;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
