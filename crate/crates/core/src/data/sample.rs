use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::heatmap::{CoordinateSpace, LandmarkSet, Point};
use crate::ops::resample::bilinear_resize;
use crate::tensor::Tensor;

/// A `[C,H,W]` image with intensities in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "raster size mismatch");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec([1, self.channels, self.height, self.width], self.data.clone())
    }
}

/// Axis-aligned scaling between native and resized pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResizeTransform {
    pub scale_x: f64,
    pub scale_y: f64,
}

impl ResizeTransform {
    pub fn between(native: (usize, usize), resized: (usize, usize)) -> Self {
        Self {
            scale_x: resized.1 as f64 / native.1 as f64,
            scale_y: resized.0 as f64 / native.0 as f64,
        }
    }

    pub fn to_resized(&self, p: Point) -> Point {
        Point::new(p.x * self.scale_x, p.y * self.scale_y)
    }

    pub fn to_native(&self, p: Point) -> Point {
        Point::new(p.x / self.scale_x, p.y / self.scale_y)
    }

    pub fn set_to_native(&self, set: &LandmarkSet) -> LandmarkSet {
        LandmarkSet {
            points: set.points.iter().map(|&p| self.to_native(p)).collect(),
            space: CoordinateSpace::Native,
            ..set.clone()
        }
    }
}

/// One training or test image at working resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub domain_id: String,
    pub image: Raster,
    /// Landmarks in resized coordinates.
    pub landmarks: LandmarkSet,
    /// Original `(height, width)`.
    pub native_size: (usize, usize),
    pub transform: ResizeTransform,
}

impl Sample {
    /// Ground truth mapped back to native coordinates.
    pub fn native_landmarks(&self) -> LandmarkSet {
        self.transform.set_to_native(&self.landmarks)
    }
}

/// Bilinear resize to `resize_to = (H, W)`; landmarks scale by
/// `(W/W0, H/H0)` per axis.
pub fn resize_with_landmarks(image: &Raster, landmarks: &LandmarkSet, resize_to: (usize, usize)) -> Result<Sample> {
    if image.height == 0 || image.width == 0 || image.channels == 0 {
        return Err(Error::Empty("native image"));
    }
    if resize_to.0 == 0 || resize_to.1 == 0 {
        return Err(Error::Empty("resize target"));
    }
    if landmarks.space != CoordinateSpace::Native {
        return Err(Error::InvalidConfig(
            "landmarks to resize must be in native space".into(),
        ));
    }
    landmarks.check_bounds(image.height, image.width)?;
    let native = (image.height, image.width);
    let transform = ResizeTransform::between(native, resize_to);
    let resized = if native == resize_to {
        image.clone()
    } else {
        let t = bilinear_resize(&image.to_tensor(), resize_to.0, resize_to.1);
        Raster::new(image.channels, resize_to.0, resize_to.1, t.into_vec())
    };
    let points = landmarks.points.iter().map(|&p| transform.to_resized(p)).collect();
    Ok(Sample {
        domain_id: landmarks.domain_id.clone(),
        image: resized,
        landmarks: LandmarkSet {
            points,
            space: CoordinateSpace::Resized,
            ..landmarks.clone()
        },
        native_size: native,
        transform,
    })
}

/// Splits off the last 10% (at least one sample when there are two or more)
/// as a validation set.
pub fn holdout_validation<T>(mut train: Vec<T>) -> (Vec<T>, Vec<T>) {
    let n = train.len();
    let count = if n >= 2 {
        (libm::round(n as f64 * 0.1) as usize).max(1)
    } else {
        0
    };
    let val = train.split_off(n - count);
    (train, val)
}
