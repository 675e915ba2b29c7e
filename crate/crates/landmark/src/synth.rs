//! Deterministic synthetic datasets: blobs joined by bars, posed randomly,
//! with the blob centres as landmarks.

use std::path::{Path, PathBuf};

use landmark_core::data::{DomainSpec, Raster, Spacing};
use landmark_core::heatmap::Point;
use landmark_core::rng::{substream, Stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{create_dir, write_annotation, write_gray_png, write_json};
use crate::manifest::{ManifestFile, Record};

/// Minimum distance of every landmark from the image border, in pixels.
pub const BORDER_MARGIN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub images_per_domain: usize,
    /// One entry per domain.
    pub landmarks: Vec<usize>,
    pub size: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.images_per_domain < 2 {
            return Err(Error::Validation(
                "at least 2 images per domain are needed for a train/test split".into(),
            ));
        }
        if self.landmarks.is_empty() || self.landmarks.contains(&0) {
            return Err(Error::Validation("every domain needs at least one landmark".into()));
        }
        if self.size < 32 {
            return Err(Error::Validation("size must be at least 32".into()));
        }
        Ok(())
    }

    /// `(train, test)`: a quarter (at least one image) is held out for test.
    pub fn split(&self) -> (usize, usize) {
        let n = self.images_per_domain;
        let test = (n / 4).max(1);
        (n - test, test)
    }
}

/// Landmark layout of one domain, centred on the origin.
#[derive(Debug, Clone)]
struct Template {
    offsets: Vec<Point>,
    background: f64,
}

impl Template {
    fn draw(rng: &mut ChaCha8Rng, landmarks: usize, size: usize, domain: usize) -> Self {
        let radius = size as f64 * 0.3;
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let offsets = (0..landmarks)
            .map(|k| {
                let a = phase + std::f64::consts::TAU * k as f64 / landmarks as f64 + rng.random_range(-0.25..0.25);
                let r = radius * rng.random_range(0.45..1.0);
                Point::new(r * a.cos(), r * a.sin())
            })
            .collect();
        Self {
            offsets,
            background: 0.08 + 0.04 * (domain % 3) as f64,
        }
    }

    /// Rotates, scales and places the layout; rounds to whole pixels.
    fn pose(&self, rng: &mut ChaCha8Rng, size: usize) -> Vec<Point> {
        let hi = size as f64 - 1.0 - BORDER_MARGIN;
        loop {
            let angle = rng.random_range(-0.35..0.35f64);
            let scale = rng.random_range(0.85..1.1);
            let c = size as f64 / 2.0;
            let cx = c + rng.random_range(-0.08..0.08) * size as f64;
            let cy = c + rng.random_range(-0.08..0.08) * size as f64;
            let (s, co) = angle.sin_cos();
            let pts: Vec<Point> = self
                .offsets
                .iter()
                .map(|o| {
                    let x = cx + scale * (co * o.x - s * o.y);
                    let y = cy + scale * (s * o.x + co * o.y);
                    Point::new(x.round(), y.round())
                })
                .collect();
            let inside = pts
                .iter()
                .all(|p| p.x >= BORDER_MARGIN && p.y >= BORDER_MARGIN && p.x <= hi && p.y <= hi);
            if inside {
                return pts;
            }
        }
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.x - a.x - t * dx).hypot(p.y - a.y - t * dy)
}

fn render(points: &[Point], template: &Template, size: usize, rng: &mut ChaCha8Rng) -> Raster {
    let k = points.len();
    let tilt = rng.random_range(-0.05..0.05);
    let mut data = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            let p = Point::new(x as f64, y as f64);
            let mut v = template.background + tilt * (x as f64 / size as f64 - 0.5) + rng.random_range(-0.02..0.02);
            for w in points.windows(2) {
                let d = segment_distance(p, w[0], w[1]);
                v = v.max(0.3 * (-d * d / 1.5).exp());
            }
            for (i, c) in points.iter().enumerate() {
                // Each landmark gets its own size and brightness.
                let r = 1.2 + 0.6 * (i % 3) as f64;
                let amp = 0.55 + 0.45 * (i + 1) as f64 / k as f64;
                let d2 = (p.x - c.x).powi(2) + (p.y - c.y).powi(2);
                v = v.max(amp * (-d2 / (2.0 * r * r)).exp());
            }
            data[y * size + x] = v.clamp(0.0, 1.0);
        }
    }
    Raster::new(1, size, size, data)
}

pub fn domain_id(index: usize) -> String {
    format!("synth{index}")
}

/// Writes `out/<domain>/manifest.json` with `images/` and `landmarks/`
/// beside it, one directory per domain. Returns the manifest paths.
pub fn generate(out: &Path, spec: &SynthSpec) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    let mut rng = substream(spec.seed, Stream::Synth);
    let mut manifests = Vec::new();
    for (d, &k) in spec.landmarks.iter().enumerate() {
        let id = domain_id(d);
        let dir = out.join(&id);
        create_dir(&dir.join("images"))?;
        create_dir(&dir.join("landmarks"))?;
        let template = Template::draw(&mut rng, k, spec.size, d);
        let mut records = Vec::new();
        for i in 0..spec.images_per_domain {
            let name = format!("{i:04}");
            let points = template.pose(&mut rng, spec.size);
            let raster = render(&points, &template, spec.size, &mut rng);
            let image = PathBuf::from("images").join(format!("{name}.png"));
            let landmarks = PathBuf::from("landmarks").join(format!("{name}.csv"));
            write_gray_png(&dir.join(&image), &raster)?;
            write_annotation(&dir.join(&landmarks), &points)?;
            records.push(Record {
                id: Some(name),
                image,
                landmarks,
            });
        }
        let manifest = ManifestFile {
            spec: DomainSpec {
                domain_id: id.clone(),
                name: format!("synthetic domain {d}"),
                num_landmarks: k,
                in_channels: 1,
                resize_to: (spec.size, spec.size),
                spacing: Spacing::PixelOnly,
                split: spec.split(),
                sdr_thresholds: None,
            },
            records,
        };
        let path = dir.join("manifest.json");
        write_json(&path, &manifest)?;
        manifests.push(path);
    }
    Ok(manifests)
}
