//! Synthetic CT phantoms: ellipsoidal organs on a dark background.
//!
//! Phantoms are generated directly in normalized intensity, so they stand in
//! for a windowed abdominal scan. Labels follow the organ list order (organ `k`
//! gets label `k + 1`); air pockets carve label-0, intensity-0 holes.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stage, SeededRng};
use crate::volume::{
    linear_index, voxel_count, IntensityUnit, LabelVolume, Shape3, Volume3D, IDENTITY_AFFINE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        let p = [x as f64, y as f64, z as f64];
        let mut s = 0.0;
        for i in 0..3 {
            let t = (p[i] - self.center[i]) / self.radii[i];
            s += t * t;
        }
        s <= 1.0
    }

    fn check(&self, shape: Shape3, what: &str) -> Result<()> {
        for i in 0..3 {
            let (c, r) = (self.center[i], self.radii[i]);
            if !(r > 0.0) || !r.is_finite() || !c.is_finite() {
                return Err(Error::Spec(format!("{what}: radius {r} / center {c} on axis {i}")));
            }
            if c - r < 0.0 || c + r > (shape[i] - 1) as f64 {
                return Err(Error::Spec(format!(
                    "{what} extends outside the volume on axis {i} ([{}, {}] vs [0, {}])",
                    c - r,
                    c + r,
                    shape[i] - 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Organ {
    #[serde(flatten)]
    pub shape: Ellipsoid,
    /// Mean normalized intensity.
    pub mean: f64,
    /// Per-voxel Gaussian noise.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: Shape3,
    #[serde(default = "unit_spacing")]
    pub spacing: [f64; 3],
    pub background_level: f64,
    #[serde(default)]
    pub background_sigma: f64,
    #[serde(default)]
    pub organs: Vec<Organ>,
    #[serde(default)]
    pub air_pockets: Vec<Ellipsoid>,
    pub seed: u64,
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shape.contains(&0) {
            return Err(Error::Spec(format!("shape {:?} has a zero extent", self.shape)));
        }
        if !(0.0..0.1).contains(&self.background_level) {
            return Err(Error::Spec(format!(
                "background level {} must lie in [0, 0.1)",
                self.background_level
            )));
        }
        if !(self.background_sigma >= 0.0) || !self.background_sigma.is_finite() {
            return Err(Error::Spec("background sigma must be non-negative".into()));
        }
        for (k, organ) in self.organs.iter().enumerate() {
            if !(0.1..=1.0).contains(&organ.mean) {
                return Err(Error::Spec(format!(
                    "organ {k} mean {} must lie in [0.1, 1]",
                    organ.mean
                )));
            }
            if !(organ.sigma >= 0.0) || !organ.sigma.is_finite() {
                return Err(Error::Spec(format!("organ {k} sigma must be non-negative")));
            }
            organ.shape.check(self.shape, &format!("organ {k}"))?;
        }
        for (k, pocket) in self.air_pockets.iter().enumerate() {
            pocket.check(self.shape, &format!("air pocket {k}"))?;
        }
        Ok(())
    }

    /// Abdomen-like layout scaled to `shape`: a soft-tissue body filling most
    /// of the field of view, three organs inside it and one gas pocket. Seed 0.
    pub fn standard(shape: Shape3) -> Self {
        let s = shape.map(|d| d as f64);
        let at = |fx: f64, fy: f64, fz: f64| [fx * (s[0] - 1.0), fy * (s[1] - 1.0), fz * (s[2] - 1.0)];
        let r = |fx: f64, fy: f64, fz: f64| [fx * s[0], fy * s[1], fz * s[2]];
        let organ = |center, radii, mean, sigma| Organ { shape: Ellipsoid { center, radii }, mean, sigma };
        PhantomSpec {
            shape,
            spacing: unit_spacing(),
            background_level: 0.0,
            background_sigma: 0.0,
            organs: vec![
                organ(at(0.5, 0.5, 0.5), r(0.46, 0.4, 0.46), 0.45, 0.03),
                organ(at(0.38, 0.45, 0.5), r(0.2, 0.18, 0.22), 0.6, 0.04),
                organ(at(0.7, 0.58, 0.45), r(0.1, 0.12, 0.14), 0.75, 0.04),
                organ(at(0.62, 0.34, 0.6), r(0.08, 0.07, 0.1), 0.35, 0.04),
            ],
            air_pockets: vec![Ellipsoid { center: at(0.55, 0.68, 0.62), radii: r(0.05, 0.04, 0.05) }],
            seed: 0,
        }
    }
}

/// Parameter ranges for drawing random phantom specs.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomFamily {
    pub organ_count: (usize, usize),
    /// Radius as a fraction of the axis extent.
    pub radius_fraction: (f64, f64),
    pub organ_mean: (f64, f64),
    pub organ_sigma: (f64, f64),
    pub background_level: (f64, f64),
    pub background_sigma: (f64, f64),
    pub air_pockets: (usize, usize),
}

impl PhantomFamily {
    /// Abdomen-like: organs in `[0.4, 0.9]`, air clamped to zero.
    pub fn abdomen() -> Self {
        PhantomFamily {
            organ_count: (2, 4),
            radius_fraction: (0.12, 0.25),
            organ_mean: (0.4, 0.9),
            organ_sigma: (0.03, 0.08),
            background_level: (0.0, 0.0),
            background_sigma: (0.0, 0.0),
            air_pockets: (0, 2),
        }
    }

    /// Small organs that cover only a minority of subvolumes.
    pub fn sparse() -> Self {
        PhantomFamily {
            organ_count: (1, 2),
            radius_fraction: (0.08, 0.14),
            ..Self::abdomen()
        }
    }

    /// Noisy low-intensity background below 0.1, organs in `[0.4, 0.9]`.
    pub fn noisy_background() -> Self {
        PhantomFamily {
            background_level: (0.0, 0.04),
            background_sigma: (0.005, 0.01),
            ..Self::abdomen()
        }
    }

    pub fn sample(&self, shape: Shape3, seed: u64) -> PhantomSpec {
        let mut rng = SeededRng::new(seed);
        let mut uniform = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.unit_f64();
        let count = |(lo, hi): (usize, usize), u: f64| lo + ((hi - lo + 1) as f64 * u) as usize;
        let n_organs = count(self.organ_count, uniform((0.0, 1.0))).min(self.organ_count.1);
        let n_pockets = count(self.air_pockets, uniform((0.0, 1.0))).min(self.air_pockets.1);

        let ellipsoid = |frac: (f64, f64), uniform: &mut dyn FnMut((f64, f64)) -> f64| {
            let mut center = [0.0; 3];
            let mut radii = [0.0; 3];
            for i in 0..3 {
                let extent = (shape[i] - 1) as f64;
                let r = (uniform(frac) * shape[i] as f64).clamp(0.5, extent / 2.0);
                radii[i] = r;
                center[i] = uniform((r, extent - r));
            }
            Ellipsoid { center, radii }
        };

        let organs: Vec<Organ> = (0..n_organs)
            .map(|_| {
                let shape = ellipsoid(self.radius_fraction, &mut uniform);
                Organ {
                    shape,
                    mean: uniform(self.organ_mean),
                    sigma: uniform(self.organ_sigma),
                }
            })
            .collect();
        let air_pockets = (0..n_pockets)
            .map(|_| {
                let pocket_frac = (self.radius_fraction.0 / 3.0, self.radius_fraction.1 / 3.0);
                ellipsoid(pocket_frac, &mut uniform)
            })
            .collect();
        PhantomSpec {
            shape,
            spacing: unit_spacing(),
            background_level: uniform(self.background_level),
            background_sigma: uniform(self.background_sigma),
            organs,
            air_pockets,
            seed,
        }
    }
}

/// Render a phantom: normalized volume plus organ labels.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume3D, LabelVolume)> {
    spec.validate()?;
    let shape = spec.shape;
    let n = voxel_count(shape);
    let mut labels = vec![0u16; n];
    for (k, organ) in spec.organs.iter().enumerate() {
        paint(shape, &organ.shape, &mut labels, (k + 1) as u16);
    }
    let mut air = vec![false; n];
    for pocket in &spec.air_pockets {
        for_each_inside(shape, pocket, |i| air[i] = true);
    }

    let mut rng = SeededRng::new(derive_seed(spec.seed, stage::PHANTOM));
    let mut voxels = Vec::with_capacity(n);
    for i in 0..n {
        let z: f64 = StandardNormal.sample(rng.inner_mut());
        if air[i] {
            labels[i] = 0;
            voxels.push(0.0f32);
            continue;
        }
        let (mean, sigma) = match labels[i] {
            0 => (spec.background_level, spec.background_sigma),
            k => {
                let organ = &spec.organs[k as usize - 1];
                (organ.mean, organ.sigma)
            }
        };
        voxels.push((mean + sigma * z).clamp(0.0, 1.0) as f32);
    }
    let volume = Volume3D::new(
        shape,
        voxels,
        spec.spacing,
        IDENTITY_AFFINE,
        IntensityUnit::Normalized,
    )?;
    Ok((volume, LabelVolume::new(shape, labels)?))
}

fn paint(shape: Shape3, e: &Ellipsoid, labels: &mut [u16], value: u16) {
    for_each_inside(shape, e, |i| labels[i] = value);
}

fn for_each_inside(shape: Shape3, e: &Ellipsoid, mut f: impl FnMut(usize)) {
    let lo = |i: usize| (e.center[i] - e.radii[i]).floor().max(0.0) as usize;
    let hi = |i: usize| ((e.center[i] + e.radii[i]).ceil() as usize).min(shape[i] - 1);
    for z in lo(2)..=hi(2) {
        for y in lo(1)..=hi(1) {
            for x in lo(0)..=hi(0) {
                if e.contains(x, y, z) {
                    f(linear_index(shape, x, y, z));
                }
            }
        }
    }
}
