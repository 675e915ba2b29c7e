//! Radial errors, MRE/SDR summaries and per-domain evaluation.
//!
//! Errors are measured at native resolution: predictions decoded at working
//! resolution are mapped back through the inverse resize before the domain's
//! spacing rule is applied. A distance equal to an SDR threshold counts as
//! a success.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{DomainSpec, Sample, Spacing, Unit};
use crate::error::{Error, Result};
use crate::heatmap::{decode_planes, encode_into, CoordinateSpace, GaussianScale, LandmarkSet};
use crate::model::Model;
use crate::tensor::Tensor;

/// SDR thresholds of the mixed-set aggregate, in native pixels.
pub const AGGREGATE_THRESHOLDS: [f64; 3] = [2.0, 4.0, 6.0];

/// Euclidean distance between corresponding points after scaling the x and
/// y offsets by `scale`.
///
/// Panics if the sets differ in length.
pub fn radial_errors(predicted: &LandmarkSet, truth: &LandmarkSet, scale: (f64, f64)) -> Vec<f64> {
    assert_eq!(
        predicted.len(),
        truth.len(),
        "radial_errors: {} predicted vs {} true landmarks",
        predicted.len(),
        truth.len()
    );
    predicted
        .points
        .iter()
        .zip(&truth.points)
        .map(|(p, t)| libm::hypot((p.x - t.x) * scale.0, (p.y - t.y) * scale.1))
        .collect()
}

/// Millimetres per pixel from two ground-truth landmarks assumed to span
/// `width_mm`.
pub fn wrist_scale(truth: &LandmarkSet, width_mm: f64, index_a: usize, index_b: usize) -> Result<f64> {
    let (Some(p), Some(q)) = (truth.points.get(index_a), truth.points.get(index_b)) else {
        return Err(Error::InvalidConfig(alloc::format!(
            "calibration indices {index_a},{index_b} out of range for {} landmarks",
            truth.len()
        )));
    };
    let d = libm::hypot(p.x - q.x, p.y - q.y);
    if !(d > 0.0) {
        return Err(Error::DegenerateCalibration);
    }
    Ok(width_mm / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdrEntry {
    pub threshold: f64,
    /// Percentage in `[0, 100]`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mre: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Sorted by threshold.
    pub sdr: Vec<SdrEntry>,
    pub n_images: usize,
    pub n_landmarks: usize,
}

/// MRE, STD and SDR over all distances, taken in image order then landmark
/// order.
pub fn summarize(errors: &[Vec<f64>], thresholds: &[f64]) -> Result<Summary> {
    let n: usize = errors.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::Empty("error collection"));
    }
    let all = || errors.iter().flatten().copied();
    let mre = all().sum::<f64>() / n as f64;
    let std = libm::sqrt(all().map(|e| (e - mre) * (e - mre)).sum::<f64>() / n as f64);
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let sdr = ts
        .into_iter()
        .map(|threshold| SdrEntry {
            threshold,
            rate: 100.0 * all().filter(|&e| e <= threshold).count() as f64 / n as f64,
        })
        .collect();
    Ok(Summary {
        mre,
        std,
        sdr,
        n_images: errors.len(),
        n_landmarks: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub domain_id: String,
    pub unit: Unit,
    pub mre: f64,
    pub std: f64,
    pub sdr: Vec<SdrEntry>,
    pub n_images: usize,
    pub n_landmarks: usize,
}

impl DomainReport {
    pub fn new(domain_id: impl Into<String>, unit: Unit, summary: Summary) -> Self {
        Self {
            domain_id: domain_id.into(),
            unit,
            mre: summary.mre,
            std: summary.std,
            sdr: summary.sdr,
            n_images: summary.n_images,
            n_landmarks: summary.n_landmarks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub domains: Vec<DomainReport>,
    /// All domains pooled, in native pixels.
    pub aggregate: DomainReport,
}

/// Anything that maps a sample to `[1, C', H, W]` heatmaps.
pub trait Predictor {
    fn heatmaps(&self, sample: &Sample, domain: usize) -> Result<Tensor>;
}

impl Predictor for Model {
    fn heatmaps(&self, sample: &Sample, domain: usize) -> Result<Tensor> {
        self.infer(&sample.image.to_tensor(), domain)
    }
}

/// Encodes each sample's own ground truth: an upper bound for the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthOracle {
    pub sigma: f64,
}

impl Predictor for GroundTruthOracle {
    fn heatmaps(&self, sample: &Sample, _domain: usize) -> Result<Tensor> {
        let (h, w) = (sample.image.height, sample.image.width);
        sample.landmarks.check_bounds(h, w)?;
        let mut t = Tensor::zeros([1, sample.landmarks.len(), h, w]);
        encode_into(
            &sample.landmarks.points,
            h,
            w,
            self.sigma,
            GaussianScale::Verbatim,
            t.data_mut(),
        );
        Ok(t)
    }
}

/// Decodes a sample's heatmaps and maps the result to native coordinates.
pub fn predict_native<P: Predictor + ?Sized>(predictor: &P, sample: &Sample, domain: usize) -> Result<LandmarkSet> {
    let hm = predictor.heatmaps(sample, domain)?;
    let points = decode_planes(hm.image(0), hm.channels(), hm.height(), hm.width())?;
    let resized = LandmarkSet::new(
        sample.domain_id.clone(),
        sample.landmarks.image_id.clone(),
        points,
        CoordinateSpace::Resized,
    );
    Ok(sample.transform.set_to_native(&resized))
}

/// Per-axis factor converting native pixel offsets to the domain's unit.
pub fn measurement_scale(spacing: &Spacing, native_truth: &LandmarkSet) -> Result<(f64, f64)> {
    Ok(match *spacing {
        Spacing::Uniform { mm_per_px } => (mm_per_px, mm_per_px),
        Spacing::WristCalibrated {
            width_mm,
            index_a,
            index_b,
        } => {
            let s = wrist_scale(native_truth, width_mm, index_a, index_b)?;
            (s, s)
        }
        Spacing::PixelOnly => (1.0, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: DomainReport,
    /// Native-space predictions, one per sample.
    pub predictions: Vec<LandmarkSet>,
    /// Distances in the domain's unit.
    pub errors: Vec<Vec<f64>>,
    /// Distances in native pixels.
    pub pixel_errors: Vec<Vec<f64>>,
}

/// Runs `predictor` over `samples` of domain index `domain`. `thresholds`
/// defaults to the domain's configured SDR thresholds.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    samples: &[Sample],
    domain: usize,
    spec: &DomainSpec,
    thresholds: Option<&[f64]>,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let mut predictions = Vec::with_capacity(samples.len());
    let mut errors = Vec::with_capacity(samples.len());
    let mut pixel_errors = Vec::with_capacity(samples.len());
    for sample in samples {
        let truth = sample.native_landmarks();
        let pred = predict_native(predictor, sample, domain)?;
        if pred.len() != truth.len() {
            return Err(Error::LandmarkCount {
                expected: truth.len(),
                found: pred.len(),
            });
        }
        let scale = measurement_scale(&spec.spacing, &truth)?;
        errors.push(radial_errors(&pred, &truth, scale));
        pixel_errors.push(radial_errors(&pred, &truth, (1.0, 1.0)));
        predictions.push(pred);
    }
    let ts = match thresholds {
        Some(t) => t.to_vec(),
        None => spec.thresholds(),
    };
    let report = DomainReport::new(spec.domain_id.clone(), spec.spacing.unit(), summarize(&errors, &ts)?);
    Ok(Evaluation {
        report,
        predictions,
        errors,
        pixel_errors,
    })
}

/// Pools native-pixel errors of several domains.
pub fn aggregate(evaluations: &[Evaluation], thresholds: &[f64]) -> Result<DomainReport> {
    let pooled: Vec<Vec<f64>> = evaluations
        .iter()
        .flat_map(|e| e.pixel_errors.iter().cloned())
        .collect();
    Ok(DomainReport::new("mixed", Unit::Px, summarize(&pooled, thresholds)?))
}

pub fn report(evaluations: &[Evaluation], thresholds: &[f64]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        domains: evaluations.iter().map(|e| e.report.clone()).collect(),
        aggregate: aggregate(evaluations, thresholds)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::Point;

    fn set(points: &[(f64, f64)]) -> LandmarkSet {
        LandmarkSet::new(
            "d",
            "i",
            points.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            CoordinateSpace::Native,
        )
    }

    #[test]
    fn radial_examples() {
        assert_eq!(
            radial_errors(&set(&[(3.0, 4.0)]), &set(&[(0.0, 0.0)]), (1.0, 1.0)),
            [5.0]
        );
        assert_eq!(
            radial_errors(&set(&[(7.5, 2.0)]), &set(&[(7.5, 2.0)]), (1.0, 1.0)),
            [0.0]
        );
        let mm = radial_errors(&set(&[(20.0, 0.0)]), &set(&[(0.0, 0.0)]), (0.1, 0.1));
        assert!((mm[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn radial_count_mismatch_panics() {
        radial_errors(&set(&[(0.0, 0.0)]), &set(&[(0.0, 0.0), (1.0, 1.0)]), (1.0, 1.0));
    }

    #[test]
    fn wrist_examples() {
        let t = set(&[(0.0, 0.0), (0.0, 100.0)]);
        let s = wrist_scale(&t, 50.0, 0, 1).unwrap();
        assert_eq!(s, 0.5);
        assert_eq!(10.0 * s, 5.0);
        let z = set(&[(0.0, 0.0), (0.0, 0.0)]);
        assert_eq!(wrist_scale(&z, 50.0, 0, 1), Err(Error::DegenerateCalibration));
        assert!(wrist_scale(&t, 50.0, 0, 2).is_err());
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[vec![1.0, 2.0, 3.0, 4.0]], &[2.0]).unwrap();
        assert_eq!(s.sdr[0].rate, 50.0);
        let s = summarize(&[vec![1.0, 2.0], vec![3.0]], &[]).unwrap();
        assert_eq!(s.mre, 2.0);
        assert_eq!((s.n_images, s.n_landmarks), (2, 3));
        let s = summarize(&[vec![0.0]], &[0.0, 1.0, 5.0]).unwrap();
        assert_eq!((s.mre, s.std), (0.0, 0.0));
        assert!(s.sdr.iter().all(|e| e.rate == 100.0));
        assert_eq!(summarize(&[], &[1.0]), Err(Error::Empty("error collection")));
        assert!(summarize(&[vec![]], &[1.0]).is_err());
    }

    #[test]
    fn thresholds_sorted() {
        let s = summarize(&[vec![1.0, 5.0]], &[4.0, 2.0, 10.0]).unwrap();
        let ts: Vec<f64> = s.sdr.iter().map(|e| e.threshold).collect();
        assert_eq!(ts, [2.0, 4.0, 10.0]);
    }
}
