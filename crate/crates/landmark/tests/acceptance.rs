//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure or exceeded runtime budget.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::gradcheck::check;
use common::*;
use landmark::checkpoint;
use landmark::io::read_points;
use landmark_core::data::{DomainSpec, Sample};
use landmark_core::heatmap::{decode_planes, encode_heatmap, CoordinateSpace, LandmarkSet, Point};
use landmark_core::metrics::{radial_errors, summarize, wrist_scale, MetricsReport};
use landmark_core::model::{fuse, ModelConfig, SeparableBlock, Variant};
use landmark_core::tensor::Tensor;
use landmark_core::train::{bce_grad, validation_loss, TrainConfig};
use landmark_core::{decode_heatmap, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "separable weight formula",
            budget: secs(10),
            run: parameter_formula,
        },
        Criterion {
            id: 2,
            name: "parameter ordering",
            budget: secs(30),
            run: parameter_ordering,
        },
        Criterion {
            id: 3,
            name: "gradient check",
            budget: secs(300),
            run: gradient_check,
        },
        Criterion {
            id: 4,
            name: "domain isolation",
            budget: secs(60),
            run: domain_isolation,
        },
        Criterion {
            id: 5,
            name: "codec round trip",
            budget: secs(30),
            run: codec_round_trip,
        },
        Criterion {
            id: 6,
            name: "overfit convergence",
            budget: secs(600),
            run: overfit_convergence,
        },
        Criterion {
            id: 7,
            name: "metrics oracle",
            budget: secs(10),
            run: metrics_oracle,
        },
        Criterion {
            id: 8,
            name: "fusion identities",
            budget: secs(5),
            run: fusion_identities,
        },
        Criterion {
            id: 9,
            name: "end-to-end pipeline",
            budget: secs(300),
            run: end_to_end,
        },
        Criterion {
            id: 10,
            name: "checkpoint round trip",
            budget: Duration::MAX,
            run: checkpoint_round_trip,
        },
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let mut outcome = (c.run)();
        let elapsed = start.elapsed();
        if outcome.is_ok() && elapsed > c.budget {
            outcome = Err(format!("took {elapsed:.1?}, budget {:?}", c.budget));
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{:>2}] {} ({elapsed:.2?}): {detail}", c.id, c.name);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn parameter_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (n, m, t) = (
            rng.random_range(1..=64),
            rng.random_range(1..=64),
            rng.random_range(1..=5),
        );
        let ids: Vec<String> = (0..t).map(|i| format!("d{i}")).collect();
        let block = SeparableBlock::with_defaults("block", n, m, &ids, &mut rng);
        let expected = 9 * n * t + n * m;
        ensure!(
            block.conv_weight_count() == expected,
            "N={n} M={m} T={t}: {} != {expected}",
            block.conv_weight_count()
        );
    }
    Ok("100 random (N, M, T) match 9NT + NM".into())
}

fn parameter_ordering() -> Outcome {
    let config = ModelConfig::with_domains(vec![DomainSpec::head(), DomainSpec::hand(), DomainSpec::chest()]);
    let count = |v| build(v, config.clone(), 0).count_params();
    let (g, u, t) = (count(Variant::Gu2net), count(Variant::Unet), count(Variant::TriUnet));
    ensure!(
        g.total < u.total && u.total < t.total,
        "totals {} / {} / {}",
        g.total,
        u.total,
        t.total
    );
    ensure!(
        t.conv_weights == 3 * u.conv_weights,
        "tri conv {} vs 3 x {}",
        t.conv_weights,
        u.conv_weights
    );
    Ok(format!(
        "gu2net {} < unet {} < tri_unet {}; tri conv = 3 x {}",
        g.total, u.total, t.total, u.conv_weights
    ))
}

fn gradient_check() -> Outcome {
    let mut model = build(Variant::Gu2net, toy_config(&[3, 2], 16, 2, 8), 11);
    let (x0, y0) = random_batch(1, 2, 3, 16);
    let (x1, y1) = random_batch(2, 2, 2, 16);
    let mut results = check(&mut model, &x0, &y0, 0, 101);
    results.extend(check(&mut model, &x1, &y1, 1, 102));
    let groups = params(&model).iter().filter(|p| p.learnable()).count();
    let covered: BTreeSet<&str> = results.iter().map(|r| r.name.as_str()).collect();
    ensure!(covered.len() == groups, "{} of {groups} groups checked", covered.len());
    let compared: usize = results.iter().map(|r| r.compared).sum();
    let kinked: usize = results.iter().map(|r| r.kinked).sum();
    ensure!(
        kinked * 20 < compared + kinked,
        "{kinked} of {} entries straddle a kink",
        compared + kinked
    );
    let worst = results
        .iter()
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
        .expect("groups");
    ensure!(
        results.iter().all(|r| r.compared > 0),
        "a group had only kinked entries"
    );
    ensure!(
        worst.rel_error < 1e-4,
        "group {} relative error {:e}",
        worst.name,
        worst.rel_error
    );
    Ok(format!(
        "{groups} groups, {compared} entries, worst {:.2e} ({}), {kinked} kink entries skipped",
        worst.rel_error, worst.name
    ))
}

fn domain_isolation() -> Outcome {
    use landmark_core::model::{Role, Scope};
    let mut model = build(Variant::Gu2net, toy_config(&[3, 2], 16, 2, 8), 3);
    let (x, y) = random_batch(4, 2, 3, 16);
    model.zero_grad();
    let pred = model.forward(&x, 0).map_err(|e| e.to_string())?;
    model.backward(&bce_grad(&pred, &y));
    let all = params(&model);
    let foreign: Vec<_> = all.iter().filter(|p| p.scope == Scope::Domain(1)).collect();
    let kinds = [
        foreign.iter().any(|p| p.name.contains(".depthwise:")),
        foreign.iter().any(|p| p.name.starts_with("global.")),
        foreign.iter().any(|p| p.role == Role::HeadWeight),
    ];
    ensure!(kinds.iter().all(|&k| k), "domain-1 banks missing: {kinds:?}");
    for p in &foreign {
        ensure!(p.grad.iter().all(|&g| g == 0.0), "{} received gradient", p.name);
    }
    let pointwise: Vec<_> = all.iter().filter(|p| p.name.ends_with(".pointwise")).collect();
    ensure!(!pointwise.is_empty(), "no shared point-wise banks");
    for p in &pointwise {
        ensure!(p.grad.iter().any(|&g| g != 0.0), "{} has zero gradient", p.name);
    }
    Ok(format!(
        "{} domain-1 arrays zero, {} point-wise banks nonzero",
        foreign.len(),
        pointwise.len()
    ))
}

fn codec_round_trip() -> Outcome {
    let expected_peak = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * 3.0);
    let mut positions = 0;
    for y in 1..31 {
        for x in 1..31 {
            let p = Point::new(x as f64, y as f64);
            let set = LandmarkSet::new("d", "i", vec![p], CoordinateSpace::Resized);
            let h = encode_heatmap(&set, 32, 32, 3.0).map_err(|e| e.to_string())?;
            let peak = h.at(0, x, y);
            ensure!((peak - expected_peak).abs() <= 1e-9, "peak {peak} at ({x}, {y})");
            let back = decode_heatmap(&h).map_err(|e| e.to_string())?;
            ensure!(back.points == vec![p], "({x}, {y}) decoded as {:?}", back.points);
            positions += 1;
        }
    }
    Ok(format!("{positions} positions exact, peak {expected_peak:.5}"))
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let images = rng.random_range(1..12);
        let errors: Vec<Vec<f64>> = (0..images)
            .map(|_| {
                (0..rng.random_range(1..8))
                    .map(|_| rng.random_range(0.0..20.0))
                    .collect()
            })
            .collect();
        let thresholds: Vec<f64> = (0..rng.random_range(1..5))
            .map(|_| rng.random_range(0.0..25.0))
            .collect();
        let s = summarize(&errors, &thresholds).map_err(|e| e.to_string())?;
        let (mre, std, sdr) = naive_summary(&errors, &thresholds);
        ensure!(
            s.mre == mre && s.std == std,
            "case {case}: summary differs from the oracle"
        );
        ensure!(
            s.sdr.iter().map(|e| e.rate).eq(sdr),
            "case {case}: SDR differs from the oracle"
        );
        ensure!(
            s.sdr.windows(2).all(|w| w[0].rate <= w[1].rate),
            "case {case}: SDR not monotone"
        );

        let n = rng.random_range(1..10);
        let mut pts = || -> Vec<Point> {
            (0..n)
                .map(|_| Point::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)))
                .collect()
        };
        let (p, t) = (pts(), pts());
        let scale = (rng.random_range(0.01..2.0), rng.random_range(0.01..2.0));
        let got = radial_errors(&native(p.clone()), &native(t.clone()), scale);
        for i in 0..n {
            let dx = (p[i].x - t[i].x) * scale.0;
            let dy = (p[i].y - t[i].y) * scale.1;
            let want = (dx * dx + dy * dy).sqrt();
            ensure!(
                (got[i] - want).abs() <= 1e-12 * (1.0 + want),
                "case {case}: radial {} vs {want}",
                got[i]
            );
        }
    }
    let wrist = native(vec![Point::new(0.0, 0.0), Point::new(0.0, 100.0)]);
    let mm = wrist_scale(&wrist, 50.0, 0, 1).map_err(|e| e.to_string())?;
    ensure!(mm == 0.5, "wrist scale {mm}");
    Ok("1000 instances match, SDR monotone, wrist 0.5 mm/px".into())
}

fn fusion_identities() -> Outcome {
    let model = build(Variant::LocalOnly, toy_config(&[4], 16, 2, 4), 6);
    let (x, _) = random_batch(1, 1, 4, 16);
    let l = model.infer(&x, 0).map_err(|e| e.to_string())?;
    ensure!(fuse(&l, &Tensor::filled(l.shape(), 1.0)) == l, "fuse(L, 1) != L");
    let g = build(Variant::GlobalOnly, toy_config(&[4], 16, 2, 4), 7)
        .infer(&x, 0)
        .map_err(|e| e.to_string())?;
    let base = decode_planes(fuse(&l, &g).data(), 4, 16, 16).map_err(|e| e.to_string())?;
    for c in [0.1, 1.0, 10.0] {
        let scaled = decode_planes(fuse(&l, &g.map(|v| v * c)).data(), 4, 16, 16).map_err(|e| e.to_string())?;
        ensure!(scaled == base, "argmax changed at c = {c}");
    }
    Ok("identity bit-exact, argmax invariant for c in {0.1, 1, 10}".into())
}

fn checkpoint_round_trip() -> Outcome {
    let model = build(Variant::Gu2net, toy_config(&[3, 2], 16, 2, 8), 21);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<Sample> = (0..3).map(|_| random_sample(&mut rng, "d1", 2, 16)).collect();
    let config = TrainConfig::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.ckpt");
    checkpoint::save(&path, &model, None).map_err(|e| e.to_string())?;
    let (loaded, _) = checkpoint::load(&path).map_err(|e| e.to_string())?;
    let loss = |m: &Model| validation_loss(m, &samples, 1, &config).map_err(|e| e.to_string());
    let (a, b) = (loss(&model)?, loss(&loaded)?);
    ensure!((a - b).abs() <= 1e-12, "validation loss {a} vs {b}");
    Ok(format!("validation loss {a:.6} reproduced (diff {:e})", (a - b).abs()))
}

fn overfit_convergence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    cli(
        root,
        &[
            "synth",
            "--out",
            "data",
            "--domains",
            "2",
            "--images",
            "8",
            "--landmarks",
            "3,5",
            "--size",
            "64",
            "--seed",
            "0",
        ],
    )?;
    cli(root, &["train", "--config", "data/config.json", "--epochs", "300"])?;
    cli(
        root,
        &[
            "evaluate",
            "--checkpoint",
            "data/run/last.ckpt",
            "--config",
            "data/config.json",
            "--split",
            "fit",
            "--out",
            "fit",
        ],
    )?;
    let report: MetricsReport = read_json(&root.join("fit/report.json"))?;
    let mut detail = Vec::new();
    for d in &report.domains {
        ensure!(d.mre < 2.0, "domain {} MRE {:.3} px", d.domain_id, d.mre);
        detail.push(format!("{} {:.3} px", d.domain_id, d.mre));
    }
    ensure!(report.domains.len() == 2, "{} domains reported", report.domains.len());
    for d in 0..2 {
        let image = format!("data/synth{d}/images/0000.png");
        let pred = format!("pred{d}.csv");
        cli(
            root,
            &[
                "predict",
                "--checkpoint",
                "data/run/last.ckpt",
                "--image",
                &image,
                "--domain",
                &format!("synth{d}"),
                "--out",
                &pred,
            ],
        )?;
        let got = read_points(&root.join(&pred)).map_err(|e| e.to_string())?;
        let want = read_points(&root.join(format!("data/synth{d}/landmarks/0000.csv"))).map_err(|e| e.to_string())?;
        ensure!(
            got.len() == want.len(),
            "synth{d}: {} predicted points for {} labels",
            got.len(),
            want.len()
        );
        for (i, (p, q)) in got.iter().zip(&want).enumerate() {
            let e = (p.x - q.x).hypot(p.y - q.y);
            ensure!(e <= 2.0, "synth{d} landmark {i} predicted {e:.2} px from its label");
        }
    }
    Ok(format!(
        "training-set MRE {}; predict within 2 px on a training image",
        detail.join(", ")
    ))
}

fn end_to_end() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let expected = [
        "data/run/history.csv",
        "data/run/best.ckpt",
        "data/run/last.ckpt",
        "data/run/config.json",
        "eval/report.json",
        "eval/report.txt",
        "eval/errors.csv",
        "pred.csv",
        "heatmaps.npy",
        "overlay.png",
    ];
    for f in expected {
        ensure!(a.path().join(f).is_file(), "missing artifact {f}");
    }
    let (fa, fb) = (file_set(a.path()), file_set(b.path()));
    ensure!(fa == fb, "file sets differ between identical runs");
    for f in ["data/run/history.csv", "pred.csv"] {
        let same = std::fs::read(a.path().join(f)).ok() == std::fs::read(b.path().join(f)).ok();
        ensure!(same, "{f} differs between identical runs");
    }
    Ok(format!("{} files, identical across two seeded runs", fa.len()))
}

fn pipeline(root: &Path) -> Result<(), String> {
    cli(
        root,
        &["synth", "--out", "data", "--images", "4", "--size", "32", "--seed", "3"],
    )?;
    cli(root, &["train", "--config", "data/config.json", "--epochs", "2"])?;
    cli(
        root,
        &[
            "evaluate",
            "--checkpoint",
            "data/run/best.ckpt",
            "--config",
            "data/config.json",
            "--out",
            "eval",
        ],
    )?;
    let image = "data/synth0/images/0000.png";
    cli(
        root,
        &[
            "predict",
            "--checkpoint",
            "data/run/best.ckpt",
            "--image",
            image,
            "--domain",
            "synth0",
            "--out",
            "pred.csv",
            "--dump-heatmaps",
            "heatmaps.npy",
        ],
    )?;
    cli(
        root,
        &[
            "visualize",
            "--image",
            image,
            "--pred",
            "pred.csv",
            "--truth",
            "data/synth0/landmarks/0000.csv",
            "--out",
            "overlay.png",
        ],
    )
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_landmark"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "`landmark {}` exited with {}: {}",
        args.join(" "),
        out.status,
        String::from_utf8_lossy(&out.stderr).trim()
    );
    Ok(())
}

fn file_set(root: &Path) -> BTreeSet<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeSet<PathBuf>) {
        for entry in std::fs::read_dir(dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.insert(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(root, root, &mut out);
    out
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn native(points: Vec<Point>) -> LandmarkSet {
    LandmarkSet::new("d", "i", points, CoordinateSpace::Native)
}

fn naive_summary(errors: &[Vec<f64>], thresholds: &[f64]) -> (f64, f64, Vec<f64>) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for image in errors {
        for &e in image {
            sum += e;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    let mut sq = 0.0;
    for image in errors {
        for &e in image {
            sq += (e - mean) * (e - mean);
        }
    }
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let sdr = ts
        .iter()
        .map(|&t| {
            let mut hits = 0usize;
            for image in errors {
                for &e in image {
                    if e <= t {
                        hits += 1;
                    }
                }
            }
            100.0 * hits as f64 / n as f64
        })
        .collect();
    (mean, (sq / n as f64).sqrt(), sdr)
}
