use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use landmark_core::data::{resize_with_landmarks, DomainSpec};
use landmark_core::heatmap::{decode_planes, CoordinateSpace, LandmarkSet};
use landmark_core::model::{ModelConfig, Variant};

use crate::audit;
use crate::checkpoint;
use crate::error::{require_file, Error, Result};
use crate::io::{create_dir, read_image, read_points, write_json, write_points};
use crate::manifest::Split;
use crate::npy;
use crate::overlay;
use crate::report::{match_domain, render_table, run_evaluation, EvalRequest};
use crate::run::{run_training, Overrides, RunConfig};
use crate::synth::{self, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "landmark", version, about = "Multi-domain anatomical landmark detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on one or more dataset manifests.
    Train(TrainArgs),
    /// Compute MRE/SDR reports for a checkpoint.
    Evaluate(EvaluateArgs),
    /// Detect landmarks in a single image.
    Predict(PredictArgs),
    /// Draw predicted (red) and ground-truth (green) landmarks.
    Visualize(VisualizeArgs),
    /// Generate synthetic datasets with manifests and a run config.
    Synth(SynthArgs),
    /// Count parameters of every variant and verify the accounting rules.
    AuditParams(AuditArgs),
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: landmark_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest; repeat for several domains. Replaces the config's list.
    #[arg(long = "manifest")]
    pub manifests: Vec<PathBuf>,
    /// gu2net, unet, tri_unet, local_only or global_only.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset manifest; repeat for several domains.
    #[arg(long = "manifest")]
    pub manifests: Vec<PathBuf>,
    /// Take the manifest list from a run configuration instead.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    /// Comma-separated SDR thresholds for every domain, e.g. `2,4`.
    #[arg(long, value_delimiter = ',')]
    pub sdr: Option<Vec<f64>>,
    /// Score encoded ground truth instead of a model.
    #[arg(long)]
    pub oracle: bool,
    /// Gaussian width used by `--oracle`.
    #[arg(long, default_value_t = 3.0)]
    pub sigma: f64,
    /// Report directory; defaults to the checkpoint's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Domain id as listed in the checkpoint.
    #[arg(long)]
    pub domain: String,
    /// Output CSV (`index,x,y`, native pixels); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the heatmaps as a `[C', H, W]` float64 `.npy` array.
    #[arg(long)]
    pub dump_heatmaps: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Predicted landmarks CSV.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth landmarks CSV; enables the MRE label.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of domains; defaults to the length of `--landmarks`.
    #[arg(long)]
    pub domains: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub images: usize,
    /// Landmarks per domain, comma-separated; a single value applies to all.
    #[arg(long, value_delimiter = ',', default_value = "3,5")]
    pub landmarks: Vec<usize>,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Run configuration; domains come from its manifests. Defaults to
    /// head, hand and chest presets.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the audit as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Visualize(a) => cmd_visualize(a),
        Command::Synth(a) => cmd_synth(a),
        Command::AuditParams(a) => cmd_audit(a),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => {
            require_file(p, "config")?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        variant: a.variant,
        epochs: a.epochs,
        seed: a.seed,
        out: a.out,
        manifests: a.manifests,
    });
    run_training(&mut config, &mut std::io::stderr())?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let manifests = match (&a.config, a.manifests.is_empty()) {
        (Some(p), true) => {
            require_file(p, "config")?;
            RunConfig::load(p)?.manifests
        }
        _ => a.manifests,
    };
    let out = a.out.unwrap_or_else(|| match &a.checkpoint {
        Some(c) if !a.oracle => c.parent().map(Path::to_path_buf).unwrap_or_default(),
        _ => PathBuf::from("."),
    });
    let req = EvalRequest {
        checkpoint: a.checkpoint,
        manifests,
        split: a.split,
        sdr: a.sdr,
        oracle: a.oracle,
        sigma: a.sigma,
        out,
    };
    let (metrics, _) = run_evaluation(&req)?;
    print!("{}", render_table(&metrics));
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let (model, _) = checkpoint::load(&a.checkpoint)?;
    require_file(&a.image, "image")?;
    let domains = &model.config().domains;
    let spec: &DomainSpec = domains.iter().find(|d| d.domain_id == a.domain).ok_or_else(|| {
        let known: Vec<&str> = domains.iter().map(|d| d.domain_id.as_str()).collect();
        Error::Validation(format!(
            "unknown domain `{}` (checkpoint has: {})",
            a.domain,
            known.join(", ")
        ))
    })?;
    let index = match_domain(domains, spec)?;
    let image = read_image(&a.image)?;
    let empty = LandmarkSet::new(spec.domain_id.clone(), "", Vec::new(), CoordinateSpace::Native);
    let sample = resize_with_landmarks(&image, &empty, spec.resize_to)?;
    let heatmaps = model.infer(&sample.image.to_tensor(), index)?;
    let [_, c, h, w] = heatmaps.shape();
    let points = decode_planes(heatmaps.image(0), c, h, w)?;
    let native: Vec<_> = points.into_iter().map(|p| sample.transform.to_native(p)).collect();
    if let Some(path) = &a.dump_heatmaps {
        npy::write(path, &[c, h, w], heatmaps.image(0))?;
    }
    match &a.out {
        Some(path) => write_points(path, &native)?,
        None => {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "index,x,y");
            for (i, p) in native.iter().enumerate() {
                let _ = writeln!(out, "{i},{},{}", p.x, p.y);
            }
        }
    }
    Ok(())
}

fn cmd_visualize(a: VisualizeArgs) -> Result<()> {
    require_file(&a.image, "image")?;
    require_file(&a.pred, "prediction CSV")?;
    let image = read_image(&a.image)?;
    let pred = read_points(&a.pred)?;
    let truth = match &a.truth {
        Some(t) => {
            require_file(t, "ground-truth CSV")?;
            Some(read_points(t)?)
        }
        None => None,
    };
    let img = overlay::render(&image, &pred, truth.as_deref())?;
    overlay::write(&a.out, &img)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let domains = a.domains.unwrap_or(a.landmarks.len());
    let landmarks = match a.landmarks.as_slice() {
        [k] => vec![*k; domains],
        list if list.len() == domains => list.to_vec(),
        list => {
            return Err(Error::Validation(format!(
                "--landmarks lists {} values for {domains} domains",
                list.len()
            )))
        }
    };
    if domains == 0 {
        return Err(Error::Validation("--domains must be at least 1".into()));
    }
    let spec = SynthSpec {
        images_per_domain: a.images,
        landmarks,
        size: a.size,
        seed: a.seed,
    };
    create_dir(&a.out)?;
    let manifests = synth::generate(&a.out, &spec)?;
    let config = RunConfig {
        manifests: manifests
            .iter()
            .map(|m| {
                m.strip_prefix(&a.out)
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|_| m.clone())
            })
            .collect(),
        out: PathBuf::from("run"),
        train: landmark_core::train::TrainConfig {
            seed: a.seed,
            ..Default::default()
        },
        ..RunConfig::default()
    };
    write_json(&a.out.join("config.json"), &config)?;
    eprintln!("wrote {} domains x {} images to {}", domains, a.images, a.out.display());
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> Result<()> {
    let model = match &a.config {
        Some(p) => {
            require_file(p, "config")?;
            let mut c = RunConfig::load(p)?;
            c.resolve()?;
            c.model
        }
        None => ModelConfig::with_domains(vec![DomainSpec::head(), DomainSpec::hand(), DomainSpec::chest()]),
    };
    let result = audit::audit(&model)?;
    print!("{}", audit::render(&result));
    if let Some(p) = &a.json {
        write_json(p, &result)?;
    }
    if result.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = result
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(Error::Runtime(format!(
            "accounting checks failed: {}",
            failed.join("; ")
        )))
    }
}
