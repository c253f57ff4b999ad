pub mod analyze;
pub mod calibrate;
pub mod mask;
pub mod phantom;
pub mod pretrain;
pub mod sweep;
pub mod verify;

use std::path::Path;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use fgmask::nifti::read_nifti;
use fgmask::{normalize, LabelVolume, Shape3, Volume3D, WindowSpec};

pub fn parse_shape(s: &str) -> Result<Shape3, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let nums = parts
        .iter()
        .map(|p| p.parse::<usize>().map_err(|_| format!("{p:?} is not a positive integer")))
        .collect::<Result<Vec<_>, _>>()?;
    let shape = match nums.as_slice() {
        [n] => [*n; 3],
        [a, b, c] => [*a, *b, *c],
        _ => return Err(format!("expected N or A,B,C, got {s:?}")),
    };
    if shape.contains(&0) {
        return Err("dimensions must be positive".into());
    }
    Ok(shape)
}

pub fn parse_window(s: &str) -> Result<WindowSpec, String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected MIN,MAX, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad HU value {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad HU value {hi:?}"))?;
    WindowSpec::new(lo, hi).map_err(|e| e.to_string())
}

/// How input volumes are brought onto the normalized scale.
#[derive(Debug, Clone, ClapArgs)]
pub struct Intensity {
    /// HU window mapped onto [0, 1].
    #[arg(long, value_parser = parse_window, default_value = "-175,250", allow_hyphen_values = true)]
    pub window: WindowSpec,

    /// Inputs already hold normalized intensities; skip windowing.
    #[arg(long)]
    pub normalized: bool,
}

impl Intensity {
    pub fn load(&self, path: &Path) -> Result<Volume3D> {
        let raw = read_nifti(path).with_context(|| format!("reading {}", path.display()))?;
        if self.normalized {
            let unit = fgmask::IntensityUnit::Normalized;
            return Ok(raw.with_voxels(raw.voxels().to_vec(), unit)?);
        }
        Ok(normalize(&raw, &self.window)?)
    }

    pub fn describe(&self) -> serde_json::Value {
        if self.normalized {
            serde_json::Value::Null
        } else {
            serde_json::to_value(self.window).unwrap_or_default()
        }
    }
}

pub fn load_labels(path: &Path) -> Result<LabelVolume> {
    let v = read_nifti(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(LabelVolume::from_volume(&v)?)
}

pub fn file_stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for ext in [".nii.gz", ".nii", ".hdr", ".img"] {
        if let Some(stem) = name.strip_suffix(ext) {
            return stem.to_string();
        }
    }
    name
}
