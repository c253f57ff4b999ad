use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use fgmask::masking::verify_plan;
use fgmask::nifti::read_nifti;
use fgmask::partition::pad_to_divisible;
use fgmask::{normalize, IntensityUnit, MaskPlan};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Plan JSON written by `fgmask mask`.
    pub plan: PathBuf,

    /// Source volume the plan was built from.
    pub volume: PathBuf,

    /// The volume already holds normalized intensities.
    #[arg(long)]
    pub normalized: bool,
}

pub fn run(args: Args) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.plan).with_context(|| format!("reading {}", args.plan.display()))?;
    let plan = MaskPlan::from_json(&text).with_context(|| format!("parsing {}", args.plan.display()))?;
    let raw = read_nifti(&args.volume).with_context(|| format!("reading {}", args.volume.display()))?;
    let volume = match (args.normalized, plan.window) {
        (false, Some(w)) => normalize(&raw, &w)?,
        _ => raw.with_voxels(raw.voxels().to_vec(), IntensityUnit::Normalized)?,
    };
    let volume = if volume.shape() != plan.grid.volume_shape {
        pad_to_divisible(&volume, plan.grid.sub_shape, 0.0)?
    } else {
        volume
    };

    let violations = verify_plan(&plan, &volume);
    if violations.is_empty() {
        println!(
            "ok: {} subvolumes, {} foreground, {} masked",
            plan.entries.len(),
            plan.foreground_indices().len(),
            plan.masked_count()
        );
        return Ok(ExitCode::SUCCESS);
    }
    for v in &violations {
        println!("violation: {v}");
    }
    println!("{} violation(s)", violations.len());
    Ok(ExitCode::from(1))
}
