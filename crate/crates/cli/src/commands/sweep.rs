use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use fgmask::pretext::{strategy_sweep, sweep_csv};
use fgmask::MaskStrategy;
use serde_json::json;

use super::pretrain::TrainArgs;
use crate::manifest::Recorder;
use crate::svg;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(required = true)]
    pub volumes: Vec<PathBuf>,

    #[command(flatten)]
    pub train: TrainArgs,

    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8")]
    pub ratios: Vec<f64>,

    #[arg(long, value_delimiter = ',', default_value = "foreground_hu,random,local_block")]
    pub strategies: Vec<MaskStrategy>,

    /// Also draw the table as an SVG bar chart.
    #[arg(long)]
    pub svg: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<ExitCode> {
    let cfg = args.train.config()?;
    let volumes = args.train.load_all(&args.volumes)?;
    let rows = strategy_sweep(&volumes, &args.strategies, &args.ratios, &cfg);
    for r in &rows {
        if let Some(e) = &r.error {
            log::warn!("{} at ratio {}: {e}", r.strategy, r.ratio);
        }
    }

    let mut rec = Recorder::new(
        "sweep",
        &args.out,
        json!({
            "window": args.train.intensity.describe(),
            "train": cfg,
            "ratios": args.ratios,
            "strategies": args.strategies,
        }),
    )?;
    args.train.record_inputs(&mut rec, &args.volumes);
    let csv = sweep_csv(&rows);
    std::fs::write(rec.output("sweep.csv"), &csv)?;
    if args.svg {
        std::fs::write(rec.output("sweep.svg"), svg::sweep_chart(&rows))?;
    }
    rec.summary(json!({
        "cells": rows.len(),
        "failed": rows.iter().filter(|r| r.error.is_some()).count(),
    }));
    rec.finish()?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}
