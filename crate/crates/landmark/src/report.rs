//! Evaluation command: metrics over manifests, written as JSON, a text
//! table and a per-landmark error CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use landmark_core::data::DomainSpec;
use landmark_core::metrics::{
    evaluate, report, Evaluation, GroundTruthOracle, MetricsReport, Predictor, AGGREGATE_THRESHOLDS,
};
use landmark_core::model::Model;

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::io::{create_dir, write_json};
use crate::manifest::{Manifest, Split};

#[derive(Debug, Clone)]
pub struct EvalRequest {
    /// Required unless `oracle` is set.
    pub checkpoint: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub split: Split,
    /// Replaces every domain's SDR thresholds.
    pub sdr: Option<Vec<f64>>,
    /// Score the encoded ground truth instead of a model.
    pub oracle: bool,
    pub sigma: f64,
    pub out: PathBuf,
}

/// Index of `spec` in the checkpoint's domain list, after checking the
/// two agree on everything the network depends on.
pub fn match_domain(model_domains: &[DomainSpec], spec: &DomainSpec) -> Result<usize> {
    let index = model_domains
        .iter()
        .position(|d| d.domain_id == spec.domain_id)
        .ok_or_else(|| {
            let known: Vec<&str> = model_domains.iter().map(|d| d.domain_id.as_str()).collect();
            Error::Validation(format!(
                "domain `{}` is not in the checkpoint (known: {})",
                spec.domain_id,
                known.join(", ")
            ))
        })?;
    let d = &model_domains[index];
    if (d.num_landmarks, d.in_channels, d.resize_to) != (spec.num_landmarks, spec.in_channels, spec.resize_to) {
        return Err(Error::Validation(format!(
            "domain `{}`: manifest ({} landmarks, {:?}) disagrees with checkpoint ({} landmarks, {:?})",
            spec.domain_id, spec.num_landmarks, spec.resize_to, d.num_landmarks, d.resize_to
        )));
    }
    Ok(index)
}

pub fn run_evaluation(req: &EvalRequest) -> Result<(MetricsReport, Vec<Evaluation>)> {
    if req.manifests.is_empty() {
        return Err(Error::Validation("at least one --manifest is required".into()));
    }
    let model: Option<Model> = match (&req.checkpoint, req.oracle) {
        (_, true) => None,
        (Some(path), false) => Some(checkpoint::load(path)?.0),
        (None, false) => {
            return Err(Error::Validation(
                "--checkpoint is required unless --oracle is given".into(),
            ))
        }
    };
    if let Some(t) = &req.sdr {
        if t.is_empty() || t.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Validation("--sdr needs non-negative thresholds".into()));
        }
    }
    let manifests = req
        .manifests
        .iter()
        .map(|p| Manifest::load(p))
        .collect::<Result<Vec<_>>>()?;
    let oracle = GroundTruthOracle { sigma: req.sigma };
    let mut evals = Vec::with_capacity(manifests.len());
    for (i, m) in manifests.iter().enumerate() {
        let (predictor, index): (&dyn Predictor, usize) = match &model {
            Some(model) => (model, match_domain(&model.config().domains, &m.spec)?),
            None => (&oracle, i),
        };
        let samples = m.samples(req.split)?;
        if samples.is_empty() {
            return Err(Error::Validation(format!(
                "domain `{}` has no records in the {:?} split",
                m.spec.domain_id, req.split
            )));
        }
        evals.push(evaluate(predictor, &samples, index, &m.spec, req.sdr.as_deref())?);
    }
    let metrics = report(&evals, &AGGREGATE_THRESHOLDS)?;
    create_dir(&req.out)?;
    write_json(&req.out.join("report.json"), &metrics)?;
    let table = req.out.join("report.txt");
    fs::write(&table, render_table(&metrics)).map_err(|e| Error::io(&table, e))?;
    write_errors_csv(&req.out.join("errors.csv"), &evals)?;
    Ok((metrics, evals))
}

fn fmt_threshold(t: f64) -> String {
    let s = format!("{t}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

/// One block per domain plus the pooled block: MRE±STD followed by the
/// SDR columns.
pub fn render_table(metrics: &MetricsReport) -> String {
    let mut out = String::new();
    for r in metrics.domains.iter().chain(std::iter::once(&metrics.aggregate)) {
        let unit = r.unit.as_str();
        let _ = writeln!(
            out,
            "{}  ({unit}, native resolution, {} images, {} landmarks)",
            r.domain_id, r.n_images, r.n_landmarks
        );
        let mut head = format!("  {:<16}", format!("MRE±STD ({unit})"));
        let mut row = format!("  {:<16}", format!("{:.2}±{:.2}", r.mre, r.std));
        for s in &r.sdr {
            let _ = write!(head, "{:>10}", format!("SDR {}{unit}", fmt_threshold(s.threshold)));
            let _ = write!(row, "{:>10.2}", s.rate);
        }
        let _ = writeln!(out, "{}\n{}\n", head.trim_end(), row.trim_end());
    }
    out
}

fn write_errors_csv(path: &Path, evals: &[Evaluation]) -> Result<()> {
    let mut out = String::from("domain,image,landmark,error,unit,error_px\n");
    for e in evals {
        for (pred, (errs, px)) in e.predictions.iter().zip(e.errors.iter().zip(&e.pixel_errors)) {
            for (k, (err, p)) in errs.iter().zip(px).enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{k},{err},{},{p}",
                    e.report.domain_id,
                    pred.image_id,
                    e.report.unit.as_str()
                );
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use landmark_core::data::Unit;
    use landmark_core::metrics::{DomainReport, SdrEntry};

    fn rep(id: &str, unit: Unit, ts: &[f64]) -> DomainReport {
        DomainReport {
            domain_id: id.into(),
            unit,
            mre: 1.5,
            std: 0.25,
            sdr: ts
                .iter()
                .map(|&t| SdrEntry {
                    threshold: t,
                    rate: 50.0,
                })
                .collect(),
            n_images: 2,
            n_landmarks: 6,
        }
    }

    #[test]
    fn table_lists_every_threshold() {
        let m = MetricsReport {
            domains: vec![rep("head", Unit::Mm, &[2.0, 2.5, 3.0, 4.0])],
            aggregate: rep("mixed", Unit::Px, &[2.0, 4.0, 6.0]),
        };
        let t = render_table(&m);
        assert!(t.contains("SDR 2.5mm"), "{t}");
        assert!(t.contains("SDR 6px"));
        assert!(t.contains("1.50±0.25"));
        assert!(t.starts_with("head  (mm"));
    }

    #[test]
    fn domain_matching() {
        let mut a = DomainSpec::head();
        let b = DomainSpec::chest();
        assert_eq!(match_domain(&[b.clone(), a.clone()], &a).unwrap(), 1);
        assert!(match_domain(std::slice::from_ref(&b), &a)
            .unwrap_err()
            .to_string()
            .contains("known: chest"));
        let orig = a.clone();
        a.num_landmarks = 3;
        assert!(match_domain(&[orig], &a).is_err());
    }
}
