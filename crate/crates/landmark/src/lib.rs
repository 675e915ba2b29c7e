//! File formats, dataset manifests and the `landmark` command line on top
//! of `landmark-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod npy;
pub mod overlay;
pub mod report;
pub mod run;
pub mod synth;

pub use error::{Error, Result};
