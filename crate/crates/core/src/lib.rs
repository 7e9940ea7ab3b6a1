#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod config;
pub mod energy;
pub mod error;
pub mod field;
pub mod form;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod nonlinearity;
pub mod pipeline;
pub mod reduction;
pub mod solver;
pub mod spectrum;
pub mod subspaces;

pub use error::{Error, Result};
