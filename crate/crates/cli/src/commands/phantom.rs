use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use fgmask::nifti::write_nifti;
use fgmask::{generate_phantom, PhantomSpec, Shape3, WindowSpec};
use serde_json::json;

use super::{parse_shape, parse_window};
use crate::manifest::Recorder;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Phantom spec JSON; the built-in abdomen layout when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,

    /// Volume shape for the built-in layout.
    #[arg(long, value_parser = parse_shape, default_value = "96")]
    pub shape: Shape3,

    /// Noise seed for the built-in layout (a spec file carries its own).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Window used to store the phantom in HU.
    #[arg(long, value_parser = parse_window, default_value = "-175,250", allow_hyphen_values = true)]
    pub window: WindowSpec,

    /// Write uncompressed `.nii` files.
    #[arg(long)]
    pub no_gzip: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<ExitCode> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<PhantomSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => PhantomSpec { seed: args.seed, ..PhantomSpec::standard(args.shape) },
    };
    let mut rec = Recorder::new(
        "phantom",
        &args.out,
        json!({ "spec": spec, "window": args.window, "gzip": !args.no_gzip }),
    )?;
    if let Some(path) = &args.spec {
        rec.input(path);
    }

    let (volume, labels) = generate_phantom(&spec)?;
    let hu = fgmask::intensity::denormalize(&volume, &args.window)?;
    let ext = if args.no_gzip { "nii" } else { "nii.gz" };
    write_nifti(&hu, rec.output(&format!("phantom.{ext}")), !args.no_gzip)?;
    write_nifti(&labels.to_volume(&volume)?, rec.output(&format!("labels.{ext}")), !args.no_gzip)?;

    let spec_path = rec.output("spec.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(&spec)? + "\n")?;

    rec.summary(json!({
        "shape": spec.shape,
        "organs": spec.organs.len(),
        "foreground_voxels": labels.foreground_count(),
    }));
    rec.finish()?;
    println!("wrote phantom {:?} to {}", spec.shape, args.out.display());
    Ok(ExitCode::SUCCESS)
}
