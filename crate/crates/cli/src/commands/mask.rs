use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use fgmask::masking::{apply_mask, DEFAULT_LAMBDA, DEFAULT_RATIO};
use fgmask::nifti::write_nifti;
use fgmask::partition::pad_to_divisible;
use fgmask::{build_mask_plan, MaskConfig, MaskStrategy, Shape3};
use serde_json::json;

use super::{parse_shape, Intensity};
use crate::manifest::Recorder;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input volume (.nii, .nii.gz or .hdr).
    pub input: PathBuf,

    #[command(flatten)]
    pub intensity: Intensity,

    /// Subvolume shape, `N` or `H,W,D`.
    #[arg(long, value_parser = parse_shape, default_value = "16,16,16")]
    pub sub: Shape3,

    /// Foreground threshold on mean normalized intensity.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,

    /// Fraction of eligible subvolumes to mask.
    #[arg(long, default_value_t = DEFAULT_RATIO)]
    pub ratio: f64,

    /// foreground_hu, random or local_block.
    #[arg(long, default_value = "foreground_hu")]
    pub strategy: MaskStrategy,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Value written into masked subvolumes.
    #[arg(long, default_value_t = 0.0)]
    pub fill: f32,

    /// Zero-pad the high end of each axis up to a multiple of the subvolume.
    #[arg(long)]
    pub pad: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<ExitCode> {
    let volume = args.intensity.load(&args.input)?;
    let volume = if args.pad { pad_to_divisible(&volume, args.sub, 0.0)? } else { volume };
    let cfg = MaskConfig {
        sub: args.sub,
        lambda: args.lambda,
        ratio: args.ratio,
        strategy: args.strategy,
        seed: args.seed,
    };
    let mut plan = build_mask_plan(&volume, &cfg)?;
    if !args.intensity.normalized {
        plan.window = Some(args.intensity.window);
    }
    let masked = apply_mask(&volume, &plan, args.fill)?;

    let mut rec = Recorder::new(
        "mask",
        &args.out,
        json!({
            "window": args.intensity.describe(),
            "lambda": cfg.lambda,
            "ratio": cfg.ratio,
            "strategy": cfg.strategy,
            "seed": cfg.seed,
            "sub": cfg.sub,
            "fill": args.fill,
            "pad": args.pad,
        }),
    )?;
    rec.input(&args.input);
    write_nifti(&masked, rec.output("masked.nii.gz"), true)?;
    std::fs::write(rec.output("plan.json"), plan.to_json()?)?;
    rec.summary(json!({
        "volume_shape": volume.shape(),
        "grid": plan.grid.grid,
        "subvolumes": plan.grid.count(),
        "foreground": plan.foreground_indices().len(),
        "eligible": plan.eligible_count(),
        "masked": plan.masked_count(),
        "rng_algorithm": plan.rng_algorithm,
    }));
    rec.finish()?;
    println!(
        "P = {}, foreground = {}, masked = {} -> {}",
        plan.grid.count(),
        plan.foreground_indices().len(),
        plan.masked_count(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
