//! Binary cross-entropy between predicted and target heatmaps.
//!
//! Reduction: sum over channels and pixels, mean over the batch.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::tensor::Tensor;

/// Predictions are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

#[inline]
fn term(f: f64, y: f64) -> f64 {
    let f = f.clamp(EPS, 1.0 - EPS);
    -y * libm::log(f) - (1.0 - y) * libm::log(1.0 - f)
}

/// Summed loss of each image in the batch.
pub fn bce_per_image(pred: &Tensor, target: &Tensor) -> Vec<f64> {
    assert_eq!(pred.shape(), target.shape(), "bce: prediction/target shape mismatch");
    (0..pred.batch())
        .map(|i| {
            pred.image(i)
                .iter()
                .zip(target.image(i))
                .map(|(&f, &y)| term(f, y))
                .sum()
        })
        .collect()
}

pub fn bce_loss(pred: &Tensor, target: &Tensor) -> f64 {
    let per = bce_per_image(pred, target);
    per.iter().sum::<f64>() / per.len().max(1) as f64
}

/// `d loss / d pred = (f - y) / (f (1 - f)) / batch`, with `f` clamped as
/// in the forward pass (the clamp passes gradients straight through).
pub fn bce_grad(pred: &Tensor, target: &Tensor) -> Tensor {
    assert_eq!(pred.shape(), target.shape(), "bce: prediction/target shape mismatch");
    let inv_batch = 1.0 / pred.batch().max(1) as f64;
    pred.zip_map(target, |f, y| {
        let f = f.clamp(EPS, 1.0 - EPS);
        (f - y) / (f * (1.0 - f)) * inv_batch
    })
}

/// Loss of a single predicted heatmap against its target.
pub fn bce_heatmap_loss(pred: &Heatmap, target: &Heatmap) -> Result<f64> {
    if (pred.channels, pred.height, pred.width) != (target.channels, target.height, target.width) {
        return Err(Error::ShapeMismatch(alloc::format!(
            "prediction {}x{}x{} vs target {}x{}x{}",
            pred.channels,
            pred.height,
            pred.width,
            target.channels,
            target.height,
            target.width
        )));
    }
    Ok(pred.values.iter().zip(&target.values).map(|(&f, &y)| term(f, y)).sum())
}
