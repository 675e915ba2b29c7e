//! Multi-domain anatomical landmark detection: heatmap codec, the fused
//! local/global network and its baselines, training and evaluation.
//!
//! The crate is `no_std` (with `alloc`); file formats and the command line
//! live in the `landmark` crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod heatmap;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use heatmap::{decode_heatmap, encode_heatmap, CoordinateSpace, GaussianScale, Heatmap, LandmarkSet, Point};
pub use model::{fuse, Model, ModelConfig, Variant};
pub use tensor::Tensor;
