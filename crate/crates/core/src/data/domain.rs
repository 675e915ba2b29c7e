use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How pixel distances convert to physical units for a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spacing {
    /// Fixed isotropic spacing of the native image.
    Uniform { mm_per_px: f64 },
    /// Per-image scale so that the distance between two ground-truth
    /// landmarks equals `width_mm`.
    WristCalibrated {
        width_mm: f64,
        index_a: usize,
        index_b: usize,
    },
    /// No physical spacing; report native pixels.
    PixelOnly,
}

impl Spacing {
    pub fn unit(&self) -> Unit {
        match self {
            Spacing::PixelOnly => Unit::Px,
            _ => Unit::Mm,
        }
    }

    /// SDR thresholds used when a manifest does not list its own.
    pub fn default_thresholds(&self) -> Vec<f64> {
        match self {
            Spacing::Uniform { .. } => vec![2.0, 2.5, 3.0, 4.0],
            Spacing::WristCalibrated { .. } => vec![2.0, 4.0, 10.0],
            Spacing::PixelOnly => vec![3.0, 6.0, 9.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Mm,
    Px,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Mm => "mm",
            Unit::Px => "px",
        }
    }
}

/// Static description of one dataset / anatomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_id: String,
    pub name: String,
    pub num_landmarks: usize,
    #[serde(default = "one")]
    pub in_channels: usize,
    /// Working size as `(height, width)`.
    pub resize_to: (usize, usize),
    pub spacing: Spacing,
    /// `(train_count, test_count)` taken in record order.
    pub split: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdr_thresholds: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

impl DomainSpec {
    pub fn thresholds(&self) -> Vec<f64> {
        self.sdr_thresholds
            .clone()
            .unwrap_or_else(|| self.spacing.default_thresholds())
    }

    /// Checks the spec on its own and against the network's size constraints.
    pub fn validate(&self, size_divisor: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("domain `{}`: {msg}", self.domain_id)));
        if self.domain_id.is_empty() || self.domain_id.contains(':') {
            return bad("domain_id must be non-empty and must not contain ':'".to_string());
        }
        if self.num_landmarks == 0 {
            return bad("num_landmarks must be at least 1".to_string());
        }
        if self.in_channels == 0 {
            return bad("in_channels must be at least 1".to_string());
        }
        let (h, w) = self.resize_to;
        if h == 0 || w == 0 || h % size_divisor != 0 || w % size_divisor != 0 {
            return bad(format!(
                "resize_to {h}x{w} must be positive and divisible by {size_divisor}"
            ));
        }
        match self.spacing {
            Spacing::Uniform { mm_per_px } if !(mm_per_px > 0.0) => {
                return bad("mm_per_px must be positive".to_string());
            }
            Spacing::WristCalibrated {
                width_mm,
                index_a,
                index_b,
            } => {
                if !(width_mm > 0.0) {
                    return bad("width_mm must be positive".to_string());
                }
                if index_a == index_b || index_a >= self.num_landmarks || index_b >= self.num_landmarks {
                    return bad(format!(
                        "calibration indices ({index_a}, {index_b}) must be distinct landmark indices"
                    ));
                }
            }
            _ => {}
        }
        if let Some(t) = &self.sdr_thresholds {
            if t.iter().any(|v| !(*v >= 0.0)) {
                return bad("sdr thresholds must be non-negative".to_string());
            }
        }
        Ok(())
    }

    /// Cephalometric head X-rays: 19 landmarks, 0.1 mm pixels.
    pub fn head() -> Self {
        Self {
            domain_id: "head".into(),
            name: "cephalometric head".into(),
            num_landmarks: 19,
            in_channels: 1,
            resize_to: (512, 416),
            spacing: Spacing::Uniform { mm_per_px: 0.1 },
            split: (150, 250),
            sdr_thresholds: None,
        }
    }

    /// Hand X-rays: 37 landmarks, wrist width of 50 mm between points 1 and 5.
    pub fn hand() -> Self {
        Self {
            domain_id: "hand".into(),
            name: "hand".into(),
            num_landmarks: 37,
            in_channels: 1,
            resize_to: (512, 368),
            spacing: Spacing::WristCalibrated {
                width_mm: 50.0,
                index_a: 0,
                index_b: 4,
            },
            split: (609, 300),
            sdr_thresholds: None,
        }
    }

    /// Chest X-rays: six lung boundary points, pixel metrics only.
    pub fn chest() -> Self {
        Self {
            domain_id: "chest".into(),
            name: "chest".into(),
            num_landmarks: 6,
            in_channels: 1,
            resize_to: (512, 512),
            spacing: Spacing::PixelOnly,
            split: (229, 50),
            sdr_thresholds: None,
        }
    }
}
