use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use fgmask::roi::{calibrate_threshold, region_histograms, CalibrationOptions, CALIBRATION_BINS, DEFAULT_EPS_BG, DEFAULT_EPS_FG};
use fgmask::Histogram;
use rayon::prelude::*;
use serde_json::json;

use super::{load_labels, Intensity};
use crate::manifest::{write_atomic, Recorder};
use crate::svg;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input volumes.
    #[arg(long, num_args = 1.., required = true)]
    pub volumes: Vec<PathBuf>,

    /// Label maps, one per volume.
    #[arg(long, num_args = 1.., required = true)]
    pub labels: Vec<PathBuf>,

    #[command(flatten)]
    pub intensity: Intensity,

    /// Histogram bins over [0, 1].
    #[arg(long, default_value_t = CALIBRATION_BINS)]
    pub bins: usize,

    /// Largest background mass allowed above the threshold.
    #[arg(long, default_value_t = DEFAULT_EPS_BG)]
    pub eps_bg: f64,

    /// Largest foreground mass allowed below the threshold.
    #[arg(long, default_value_t = DEFAULT_EPS_FG)]
    pub eps_fg: f64,

    /// Also draw the two distributions as SVG.
    #[arg(long)]
    pub svg: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<ExitCode> {
    if args.labels.len() != args.volumes.len() {
        bail!("{} label maps for {} volumes", args.labels.len(), args.volumes.len());
    }
    let per_volume = args
        .volumes
        .par_iter()
        .zip(&args.labels)
        .map(|(vp, lp)| {
            let v = args.intensity.load(vp)?;
            Ok(region_histograms(&v, &load_labels(lp)?, args.bins)?)
        })
        .collect::<Result<Vec<(Histogram, Histogram)>>>()?;
    let mut fg = Histogram::empty(args.bins, 0.0, 1.0)?;
    let mut bg = Histogram::empty(args.bins, 0.0, 1.0)?;
    for (f, b) in &per_volume {
        fg.merge(f)?;
        bg.merge(b)?;
    }

    let mut rec = Recorder::new(
        "calibrate",
        &args.out,
        json!({
            "window": args.intensity.describe(),
            "bins": args.bins,
            "eps_bg": args.eps_bg,
            "eps_fg": args.eps_fg,
        }),
    )?;
    for p in args.volumes.iter().chain(&args.labels) {
        rec.input(p);
    }
    std::fs::write(rec.output("fg_histogram.csv"), fg.to_csv())?;
    std::fs::write(rec.output("bg_histogram.csv"), bg.to_csv())?;

    let opts = CalibrationOptions { eps_bg: args.eps_bg, eps_fg: args.eps_fg };
    let estimate = calibrate_threshold(&fg, &bg, &opts);
    if args.svg {
        let lambda = estimate.as_ref().ok().map(|e| e.lambda_hat);
        let chart = svg::histogram_chart("Normalized intensity", &fg, &bg, lambda);
        std::fs::write(rec.output("histograms.svg"), chart)?;
    }
    let estimate = estimate?;
    let mut text = serde_json::to_string_pretty(&estimate)?;
    text.push('\n');
    write_atomic(&rec.output("threshold.json"), text.as_bytes())?;
    rec.summary(json!({
        "volumes": args.volumes.len(),
        "lambda_hat": estimate.lambda_hat,
        "bin_index": estimate.bin_index,
    }));
    rec.finish()?;
    println!("lambda_hat = {:.4} (bin {})", estimate.lambda_hat, estimate.bin_index);
    Ok(ExitCode::SUCCESS)
}
