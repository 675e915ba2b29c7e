//! Domain descriptions, resizing with landmark transforms, training
//! augmentation and mixed-domain batch scheduling.

pub mod augment;
pub mod domain;
pub mod sample;
pub mod sampler;

pub use augment::{augment, Affine, AugmentConfig, AugmentPlan};
pub use domain::{DomainSpec, Spacing, Unit};
pub use sample::{holdout_validation, resize_with_landmarks, Raster, ResizeTransform, Sample};
pub use sampler::{Batch, MixedBatchSampler};
