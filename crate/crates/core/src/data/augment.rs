//! Small random rotations and translations applied jointly to an image and
//! its landmarks.

use alloc::vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sample::{Raster, Sample};
use crate::heatmap::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub rotate_prob: f64,
    /// Rotation magnitude; the sign is drawn uniformly.
    pub rotate_deg: f64,
    pub translate_prob: f64,
    /// Integer shifts are drawn from `[-max_shift, max_shift]` per axis.
    pub max_shift: i32,
    /// Redraws allowed when a landmark leaves the frame.
    pub max_attempts: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotate_prob: 0.1,
            rotate_deg: 2.0,
            translate_prob: 0.1,
            max_shift: 10,
            max_attempts: 10,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            rotate_prob: 0.0,
            translate_prob: 0.0,
            ..Self::default()
        }
    }
}

/// `p -> (a x + b y + tx, c x + d y + ty)` in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            tx: dx,
            ty: dy,
            ..Self::IDENTITY
        }
    }

    /// Rotation by `degrees` about `center` (positive turns +x towards +y).
    pub fn rotation_about(center: Point, degrees: f64) -> Self {
        let r = degrees.to_radians();
        let (s, c) = (libm::sin(r), libm::cos(r));
        Self {
            a: c,
            b: -s,
            c: s,
            d: c,
            tx: center.x - c * center.x + s * center.y,
            ty: center.y - s * center.x - c * center.y,
        }
    }

    /// `other` applied after `self`.
    pub fn then(&self, other: &Affine) -> Affine {
        Affine {
            a: other.a * self.a + other.b * self.c,
            b: other.a * self.b + other.b * self.d,
            c: other.c * self.a + other.d * self.c,
            d: other.c * self.b + other.d * self.d,
            tx: other.a * self.tx + other.b * self.ty + other.tx,
            ty: other.c * self.tx + other.d * self.ty + other.ty,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.a * p.x + self.b * p.y + self.tx,
            self.c * p.x + self.d * p.y + self.ty,
        )
    }

    pub fn inverse(&self) -> Affine {
        let det = self.a * self.d - self.b * self.c;
        let (a, b, c, d) = (self.d / det, -self.b / det, -self.c / det, self.a / det);
        Affine {
            a,
            b,
            c,
            d,
            tx: -(a * self.tx + b * self.ty),
            ty: -(c * self.tx + d * self.ty),
        }
    }
}

/// Resamples `image` so that content at `p` moves to `map(p)`; pixels with
/// no source are zero.
pub fn warp_raster(image: &Raster, map: &Affine) -> Raster {
    let inv = map.inverse();
    let (h, w) = (image.height, image.width);
    let plane = h * w;
    let mut out = vec![0.0; image.data.len()];
    let fetch = |src: &[f64], x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            src[y as usize * w + x as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            let s = inv.apply(Point::new(x as f64, y as f64));
            let (fx, fy) = (libm::floor(s.x), libm::floor(s.y));
            let (wx, wy) = (s.x - fx, s.y - fy);
            let (x0, y0) = (fx as isize, fy as isize);
            for ch in 0..image.channels {
                let src = &image.data[ch * plane..(ch + 1) * plane];
                let top = fetch(src, x0, y0) * (1.0 - wx) + fetch(src, x0 + 1, y0) * wx;
                let bot = fetch(src, x0, y0 + 1) * (1.0 - wx) + fetch(src, x0 + 1, y0 + 1) * wx;
                out[ch * plane + y * w + x] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    Raster::new(image.channels, h, w, out)
}

/// The random choices made for one augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentPlan {
    pub rotation_deg: Option<f64>,
    pub shift: Option<(i32, i32)>,
}

impl AugmentPlan {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, cfg: &AugmentConfig) -> Self {
        let rotation_deg = rng.random_bool(cfg.rotate_prob.clamp(0.0, 1.0)).then(|| {
            if rng.random_bool(0.5) {
                cfg.rotate_deg
            } else {
                -cfg.rotate_deg
            }
        });
        let shift = rng.random_bool(cfg.translate_prob.clamp(0.0, 1.0)).then(|| {
            (
                rng.random_range(-cfg.max_shift..=cfg.max_shift),
                rng.random_range(-cfg.max_shift..=cfg.max_shift),
            )
        });
        Self { rotation_deg, shift }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation_deg.is_none() && self.shift.is_none()
    }

    /// Rotation about the image centre, then translation.
    pub fn affine(&self, height: usize, width: usize) -> Affine {
        let center = Point::new((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let rot = self
            .rotation_deg
            .map_or(Affine::IDENTITY, |deg| Affine::rotation_about(center, deg));
        let (dx, dy) = self.shift.unwrap_or((0, 0));
        rot.then(&Affine::translation(dx as f64, dy as f64))
    }

    /// Applies the plan, or returns `None` if a landmark would leave the frame.
    pub fn apply(&self, sample: &Sample) -> Option<Sample> {
        if self.is_identity() {
            return Some(sample.clone());
        }
        let (h, w) = (sample.image.height, sample.image.width);
        let map = self.affine(h, w);
        let mut landmarks = sample.landmarks.clone();
        for p in &mut landmarks.points {
            *p = map.apply(*p);
        }
        if landmarks.first_out_of_bounds(h, w).is_some() {
            return None;
        }
        Some(Sample {
            image: warp_raster(&sample.image, &map),
            landmarks,
            ..sample.clone()
        })
    }
}

/// Draws plans until one keeps every landmark inside the frame; falls back
/// to the unchanged sample after `max_attempts` draws.
pub fn augment<R: Rng + ?Sized>(sample: &Sample, cfg: &AugmentConfig, rng: &mut R) -> Sample {
    for _ in 0..cfg.max_attempts.max(1) {
        if let Some(out) = AugmentPlan::draw(rng, cfg).apply(sample) {
            return out;
        }
    }
    sample.clone()
}
