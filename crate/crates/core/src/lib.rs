#![doc = include_str!("../README.md")]

pub mod baselines;
pub mod diagnostics;
pub mod dictionary;
pub mod error;
pub mod estimation;
pub mod forward;
pub mod grid;
pub mod harness;
pub mod inversion;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod operator;

pub use error::{Error, Result};
