use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use fgmask::pretext::{save_checkpoint, train, TrainConfig};
use fgmask::{MaskStrategy, Shape3, Volume3D};
use rayon::prelude::*;
use serde_json::json;

use super::{parse_shape, Intensity};
use crate::manifest::Recorder;

/// Training options shared by `pretrain` and `sweep`.
#[derive(Debug, Clone, clap::Args)]
pub struct TrainArgs {
    /// Training config JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub weight_decay: Option<f64>,

    #[arg(long, value_parser = parse_shape)]
    pub sub: Option<Shape3>,

    #[arg(long)]
    pub bottleneck: Option<usize>,

    #[command(flatten)]
    pub intensity: Intensity,
}

impl TrainArgs {
    pub fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => TrainConfig::default(),
        };
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.learning_rate = lr;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(wd) = self.weight_decay {
            cfg.weight_decay = wd;
        }
        if let Some(sub) = self.sub {
            cfg.sub = sub;
        }
        if let Some(m) = self.bottleneck {
            cfg.bottleneck = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_all(&self, paths: &[PathBuf]) -> Result<Vec<Volume3D>> {
        paths.par_iter().map(|p| self.intensity.load(p)).collect()
    }

    pub fn record_inputs(&self, rec: &mut Recorder, volumes: &[PathBuf]) {
        if let Some(c) = &self.config {
            rec.input(c);
        }
        for p in volumes {
            rec.input(p);
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(required = true)]
    pub volumes: Vec<PathBuf>,

    #[command(flatten)]
    pub train: TrainArgs,

    #[arg(long)]
    pub strategy: Option<MaskStrategy>,

    #[arg(long)]
    pub ratio: Option<f64>,

    #[arg(long)]
    pub out: PathBuf,
}

fn write_text(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(args: Args) -> Result<ExitCode> {
    let mut cfg = args.train.config()?;
    if let Some(s) = args.strategy {
        cfg.strategy = s;
    }
    if let Some(r) = args.ratio {
        cfg.mask_ratio = r;
    }
    cfg.validate()?;
    let volumes = args.train.load_all(&args.volumes)?;
    let outcome = train(&volumes, &cfg)?;

    let mut rec = Recorder::new(
        "pretrain",
        &args.out,
        json!({ "window": args.train.intensity.describe(), "train": cfg }),
    )?;
    args.train.record_inputs(&mut rec, &args.volumes);
    save_checkpoint(&outcome.model, &rec.output("model.fmpt"))?;
    write_text(&rec.output("loss_history.csv"), outcome.history_csv())?;
    write_text(&rec.output("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;

    let decreased = outcome.final_loss < outcome.initial_loss;
    if !decreased {
        log::warn!("held-out loss did not decrease ({} -> {})", outcome.initial_loss, outcome.final_loss);
    }
    rec.summary(json!({
        "initial_loss": outcome.initial_loss,
        "final_loss": outcome.final_loss,
        "loss_ratio": outcome.final_loss / outcome.initial_loss,
        "decreased": decreased,
    }));
    rec.finish()?;
    println!(
        "masked L1 {:.6} -> {:.6} over {} epochs",
        outcome.initial_loss, outcome.final_loss, cfg.epochs
    );
    Ok(ExitCode::SUCCESS)
}
