#![no_std]

extern crate alloc;

pub mod cksvd;
pub mod conv;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod math;
pub mod omp;
pub mod preprocess;
pub mod signal;
pub mod simulate;
pub mod theory;

pub use error::{Error, Result};
