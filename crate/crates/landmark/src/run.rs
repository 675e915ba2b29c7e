//! Run configuration and the training command.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use landmark_core::model::{Model, ModelConfig, Variant};
use landmark_core::rng::{substream, Stream};
use landmark_core::train::{train, DomainData, EpochRecord, TrainConfig, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, TrainingMeta};
use crate::error::{Error, Result};
use crate::io::{create_dir, read_json, write_json};
use crate::manifest::{Manifest, Split};

/// Everything a training run needs, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    /// Domains are filled in from the manifests.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Relative paths resolve against the config file's directory.
    pub manifests: Vec<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Gu2net,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            manifests: Vec::new(),
            out: PathBuf::from("runs/latest"),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub variant: Option<Variant>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
}

impl RunConfig {
    /// Reads a config; relative manifest and output paths are taken
    /// relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config: RunConfig = read_json(path, "config")?;
        let base = path.parent().unwrap_or(Path::new(""));
        for m in &mut config.manifests {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        if config.out.is_relative() {
            config.out = base.join(&config.out);
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(s) = o.seed {
            self.train.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if !o.manifests.is_empty() {
            self.manifests = o.manifests.clone();
        }
    }

    /// Loads the manifests, fills the domain list and validates the whole
    /// configuration. The heatmap width is taken from the training section.
    pub fn resolve(&mut self) -> Result<Vec<Manifest>> {
        if self.manifests.is_empty() {
            return Err(Error::Validation(
                "manifests: at least one dataset manifest is required".into(),
            ));
        }
        let manifests = self
            .manifests
            .iter()
            .map(|p| Manifest::load(p))
            .collect::<Result<Vec<_>>>()?;
        self.model.domains = manifests.iter().map(|m| m.spec.clone()).collect();
        self.model.sigma = self.train.sigma;
        self.model.validate().map_err(|e| Error::from(e).context("model"))?;
        self.train.validate().map_err(|e| Error::from(e).context("train"))?;
        Ok(manifests)
    }
}

pub const HISTORY_HEADER: &str = "epoch,domain,train_loss,val_loss,lr\n";

/// Per-domain rows plus an `all` row with the pooled losses that drive
/// checkpoint selection.
pub fn history_rows(r: &EpochRecord) -> String {
    let mut out = String::new();
    for d in &r.domains {
        let val = d.val_loss.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, d.domain_id, d.train_loss, val, r.lr
        ));
    }
    out.push_str(&format!("{},all,{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.lr));
    out
}

/// Trains per `config` and writes `config.json`, `history.csv`,
/// `best.ckpt` and `last.ckpt` into `config.out`.
pub fn run_training(config: &mut RunConfig, log: &mut dyn Write) -> Result<TrainOutcome> {
    let manifests = config.resolve()?;
    let mut data = Vec::with_capacity(manifests.len());
    for m in &manifests {
        data.push(DomainData {
            fit: m.samples(Split::Fit)?,
            val: m.samples(Split::Val)?,
        });
    }
    let mut rng = substream(config.train.seed, Stream::Init);
    let mut model = Model::build(config.variant, config.model.clone(), &mut rng)?;

    let out = config.out.clone();
    create_dir(&out)?;
    write_json(&out.join("config.json"), config)?;
    let history = out.join("history.csv");
    fs::write(&history, HISTORY_HEADER).map_err(|e| Error::io(&history, e))?;
    let (best_path, last_path) = (out.join("best.ckpt"), out.join("last.ckpt"));

    let mut observer = |r: &EpochRecord, model: &Model, improved: bool| -> std::result::Result<(), String> {
        let append = || -> std::io::Result<()> {
            let mut f = OpenOptions::new().append(true).open(&history)?;
            f.write_all(history_rows(r).as_bytes())
        };
        append().map_err(|e| format!("{}: {e}", history.display()))?;
        let meta = Some(TrainingMeta {
            epoch: r.epoch,
            val_loss: r.val_loss,
        });
        if improved {
            checkpoint::save(&best_path, model, meta).map_err(|e| e.to_string())?;
        }
        checkpoint::save(&last_path, model, meta).map_err(|e| e.to_string())?;
        let _ = writeln!(
            log,
            "epoch {:>4}  lr {:.2e}  train {:.4}  val {:.4}{}",
            r.epoch,
            r.lr,
            r.train_loss,
            r.val_loss,
            if improved { "  *" } else { "" }
        );
        Ok(())
    };
    let outcome = train(&mut model, &data, &config.train, &mut observer)?;
    let _ = writeln!(
        log,
        "best epoch {} (val {:.4}); artifacts in {}",
        outcome.best_epoch,
        outcome.best_val_loss,
        out.display()
    );
    Ok(outcome)
}
