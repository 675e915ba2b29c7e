#![allow(dead_code)]

pub mod gradcheck;

use landmark_core::data::{DomainSpec, Raster, Sample, Spacing};
use landmark_core::heatmap::{CoordinateSpace, LandmarkSet, Point};
use landmark_core::model::{Model, ModelConfig, Param, Parameterized, Variant};
use landmark_core::tensor::Tensor;
use landmark_core::train::assemble_batch;
use landmark_core::GaussianScale;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn spec(id: &str, landmarks: usize, size: usize) -> DomainSpec {
    DomainSpec {
        domain_id: id.into(),
        name: id.into(),
        num_landmarks: landmarks,
        in_channels: 1,
        resize_to: (size, size),
        spacing: Spacing::PixelOnly,
        split: (4, 1),
        sdr_thresholds: None,
    }
}

/// Small network over `landmarks.len()` square domains.
pub fn toy_config(landmarks: &[usize], size: usize, depth: usize, base: usize) -> ModelConfig {
    let domains = landmarks
        .iter()
        .enumerate()
        .map(|(i, &k)| spec(&format!("d{i}"), k, size))
        .collect();
    ModelConfig {
        depth,
        base_channels: base,
        ..ModelConfig::with_domains(domains)
    }
}

pub fn build(variant: Variant, config: ModelConfig, seed: u64) -> Model {
    Model::build(variant, config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub fn random_sample(rng: &mut ChaCha8Rng, domain: &str, landmarks: usize, size: usize) -> Sample {
    let data = (0..size * size).map(|_| rng.random::<f64>()).collect();
    let margin = 2.0;
    let points = (0..landmarks)
        .map(|_| {
            Point::new(
                rng.random_range(margin..size as f64 - margin).round(),
                rng.random_range(margin..size as f64 - margin).round(),
            )
        })
        .collect();
    Sample {
        domain_id: domain.into(),
        image: Raster::new(1, size, size, data),
        landmarks: LandmarkSet::new(domain, "img", points, CoordinateSpace::Resized),
        native_size: (size, size),
        transform: landmark_core::data::ResizeTransform {
            scale_x: 1.0,
            scale_y: 1.0,
        },
    }
}

/// A random batch for one domain plus its encoded targets.
pub fn random_batch(seed: u64, batch: usize, landmarks: usize, size: usize) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = (0..batch)
        .map(|_| random_sample(&mut rng, "d", landmarks, size))
        .collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    assemble_batch(&refs, 3.0, GaussianScale::Verbatim)
}

pub fn params(model: &Model) -> Vec<Param> {
    let mut out = Vec::new();
    model.visit(&mut |p| out.push(p.clone()));
    out
}

/// Applies `f` to the `index`-th parameter in visiting order.
pub fn with_param(model: &mut Model, index: usize, f: impl FnOnce(&mut Param)) {
    let mut i = 0;
    let mut f = Some(f);
    model.visit_mut(&mut |p| {
        if i == index {
            (f.take().unwrap())(p);
        }
        i += 1;
    });
}
