//! Dense 3D scalar volumes.
//!
//! Voxels are stored with x varying fastest, then y, then z, which is also the
//! on-disk order of NIfTI-1 payloads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volume extent `[H, W, C]` in voxels.
pub type Shape3 = [usize; 3];

pub type Affine = [[f64; 4]; 4];

pub const IDENTITY_AFFINE: Affine = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntensityUnit {
    /// Hounsfield units as stored in the scan (after slope/intercept).
    RawHU,
    /// Windowed intensities in `[0, 1]`.
    Normalized,
}

#[inline]
pub fn linear_index(shape: Shape3, x: usize, y: usize, z: usize) -> usize {
    x + shape[0] * (y + shape[1] * z)
}

pub fn voxel_count(shape: Shape3) -> usize {
    shape[0] * shape[1] * shape[2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    shape: Shape3,
    voxels: Vec<f32>,
    spacing: [f64; 3],
    affine: Affine,
    unit: IntensityUnit,
}

impl Volume3D {
    pub fn new(
        shape: Shape3,
        voxels: Vec<f32>,
        spacing: [f64; 3],
        affine: Affine,
        unit: IntensityUnit,
    ) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidVolume(format!("shape {shape:?} has a zero extent")));
        }
        if voxels.len() != voxel_count(shape) {
            return Err(Error::InvalidVolume(format!(
                "{} voxels for shape {shape:?} (expected {})",
                voxels.len(),
                voxel_count(shape)
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!("spacing {spacing:?} must be positive")));
        }
        if unit == IntensityUnit::Normalized {
            if let Some(i) = voxels.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidVolume(format!(
                    "normalized voxel {i} = {} lies outside [0, 1]",
                    voxels[i]
                )));
            }
        }
        Ok(Volume3D {
            shape,
            voxels,
            spacing,
            affine,
            unit,
        })
    }

    /// Unit-spacing, identity-affine volume.
    pub fn from_voxels(shape: Shape3, voxels: Vec<f32>, unit: IntensityUnit) -> Result<Self> {
        Self::new(shape, voxels, [1.0; 3], IDENTITY_AFFINE, unit)
    }

    pub fn filled(shape: Shape3, value: f32, unit: IntensityUnit) -> Result<Self> {
        Self::from_voxels(shape, vec![value; voxel_count(shape)], unit)
    }

    /// Same geometry, new voxels and unit.
    pub fn with_voxels(&self, voxels: Vec<f32>, unit: IntensityUnit) -> Result<Self> {
        Self::new(self.shape, voxels, self.spacing, self.affine, unit)
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn unit(&self) -> IntensityUnit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[linear_index(self.shape, x, y, z)]
    }
}

/// Integer organ labels: 0 is background, `k > 0` is organ `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    shape: Shape3,
    labels: Vec<u16>,
}

impl LabelVolume {
    pub fn new(shape: Shape3, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != voxel_count(shape) {
            return Err(Error::InvalidVolume(format!(
                "{} labels for shape {shape:?}",
                labels.len()
            )));
        }
        Ok(LabelVolume { shape, labels })
    }

    /// Round each voxel of a volume to the nearest non-negative label.
    pub fn from_volume(v: &Volume3D) -> Result<Self> {
        let labels = v
            .voxels()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if !x.is_finite() || x < -0.5 || x > u16::MAX as f32 {
                    Err(Error::InvalidVolume(format!("voxel {i} = {x} is not a label")))
                } else {
                    Ok(x.round() as u16)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(v.shape(), labels)
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }

    /// Labels as a float volume sharing the geometry of `like`.
    pub fn to_volume(&self, like: &Volume3D) -> Result<Volume3D> {
        if like.shape() != self.shape {
            return Err(Error::Shape(format!(
                "label shape {:?} vs volume shape {:?}",
                self.shape,
                like.shape()
            )));
        }
        like.with_voxels(
            self.labels.iter().map(|&l| l as f32).collect(),
            IntensityUnit::RawHU,
        )
    }
}
