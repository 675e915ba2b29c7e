//! Gaussian heatmap targets and argmax decoding.
//!
//! Coordinates follow one convention throughout the crate: `x` is the
//! column, `y` is the row, origin at the top-left pixel.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateSpace {
    /// Pixel coordinates of the original image file.
    Native,
    /// Pixel coordinates after resizing to the domain's working size.
    Resized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub domain_id: String,
    pub image_id: String,
    pub points: Vec<Point>,
    pub space: CoordinateSpace,
}

impl LandmarkSet {
    pub fn new(
        domain_id: impl Into<String>,
        image_id: impl Into<String>,
        points: Vec<Point>,
        space: CoordinateSpace,
    ) -> Self {
        Self {
            domain_id: domain_id.into(),
            image_id: image_id.into(),
            points,
            space,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the landmark count and that every point lies in `[0,w) x [0,h)`.
    pub fn validate(&self, expected: usize, height: usize, width: usize) -> Result<()> {
        if self.points.len() != expected {
            return Err(Error::LandmarkCount {
                expected,
                found: self.points.len(),
            });
        }
        self.check_bounds(height, width)
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        match self.first_out_of_bounds(height, width) {
            Some(index) => {
                let p = self.points[index];
                Err(Error::PointOutOfBounds {
                    index,
                    x: p.x,
                    y: p.y,
                    width,
                    height,
                })
            }
            None => Ok(()),
        }
    }

    pub fn first_out_of_bounds(&self, height: usize, width: usize) -> Option<usize> {
        self.points
            .iter()
            .position(|p| !(p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64))
    }
}

/// Scaling of the encoded Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianScale {
    /// `1 / (sqrt(2 pi) sigma)` in front of the exponential (peak ~0.133 at sigma 3).
    #[default]
    Verbatim,
    /// Peak value 1.
    PeakNormalized,
}

impl GaussianScale {
    pub fn peak(self, sigma: f64) -> f64 {
        match self {
            GaussianScale::Verbatim => 1.0 / (libm::sqrt(2.0 * PI) * sigma),
            GaussianScale::PeakNormalized => 1.0,
        }
    }
}

/// Per-landmark maps for one image, shape `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub domain_id: String,
    pub sigma: f64,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn channel(&self, k: usize) -> &[f64] {
        let p = self.height * self.width;
        &self.values[k * p..(k + 1) * p]
    }

    #[inline]
    pub fn at(&self, k: usize, x: usize, y: usize) -> f64 {
        self.values[(k * self.height + y) * self.width + x]
    }
}

pub fn encode_heatmap(landmarks: &LandmarkSet, height: usize, width: usize, sigma: f64) -> Result<Heatmap> {
    encode_heatmap_with(landmarks, height, width, sigma, GaussianScale::Verbatim)
}

/// One Gaussian channel per landmark, evaluated at every integer pixel with
/// no truncation radius.
pub fn encode_heatmap_with(
    landmarks: &LandmarkSet,
    height: usize,
    width: usize,
    sigma: f64,
    scale: GaussianScale,
) -> Result<Heatmap> {
    if landmarks.space != CoordinateSpace::Resized {
        return Err(Error::NativeSpace);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidSigma(sigma));
    }
    landmarks.check_bounds(height, width)?;
    let mut values = vec![0.0; landmarks.len() * height * width];
    encode_into(&landmarks.points, height, width, sigma, scale, &mut values);
    Ok(Heatmap {
        domain_id: landmarks.domain_id.clone(),
        sigma,
        channels: landmarks.len(),
        height,
        width,
        values,
    })
}

/// Writes `points.len()` Gaussian planes into `out` (no validation).
pub(crate) fn encode_into(
    points: &[Point],
    height: usize,
    width: usize,
    sigma: f64,
    scale: GaussianScale,
    out: &mut [f64],
) {
    let peak = scale.peak(sigma);
    let denom = 2.0 * sigma * sigma;
    let plane = height * width;
    let mut gx = vec![0.0; width];
    let mut gy = vec![0.0; height];
    for (k, p) in points.iter().enumerate() {
        // exp(-(dx^2 + dy^2) / 2s^2) factorizes into a row and a column term.
        for (x, g) in gx.iter_mut().enumerate() {
            let d = x as f64 - p.x;
            *g = libm::exp(-d * d / denom);
        }
        for (y, g) in gy.iter_mut().enumerate() {
            let d = y as f64 - p.y;
            *g = peak * libm::exp(-d * d / denom);
        }
        let dst = &mut out[k * plane..(k + 1) * plane];
        for (y, row) in dst.chunks_exact_mut(width).enumerate() {
            let ry = gy[y];
            for (v, &cx) in row.iter_mut().zip(&gx) {
                *v = ry * cx;
            }
        }
    }
}

/// Argmax of each channel. Ties resolve to the smallest row-major index.
pub fn decode_heatmap(heatmap: &Heatmap) -> Result<LandmarkSet> {
    let points = decode_planes(&heatmap.values, heatmap.channels, heatmap.height, heatmap.width)?;
    Ok(LandmarkSet::new(
        heatmap.domain_id.clone(),
        String::new(),
        points,
        CoordinateSpace::Resized,
    ))
}

/// Argmax decoding over a raw `[channels, height, width]` buffer.
pub fn decode_planes(values: &[f64], channels: usize, height: usize, width: usize) -> Result<Vec<Point>> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::Empty("heatmap"));
    }
    let plane = height * width;
    assert_eq!(values.len(), channels * plane, "heatmap buffer size mismatch");
    values
        .chunks_exact(plane)
        .enumerate()
        .map(|(k, ch)| {
            let mut best = 0;
            for (i, &v) in ch.iter().enumerate() {
                if v.is_nan() {
                    return Err(Error::NaNInChannel { channel: k });
                }
                if v > ch[best] {
                    best = i;
                }
            }
            Ok(Point::new((best % width) as f64, (best / width) as f64))
        })
        .collect()
}
