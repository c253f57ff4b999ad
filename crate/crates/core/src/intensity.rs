//! HU windowing and intensity histograms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{IntensityUnit, Volume3D};

/// Linear HU window mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub hu_min: f64,
    pub hu_max: f64,
}

impl Default for WindowSpec {
    /// Abdominal soft-tissue window, -175 to 250 HU.
    fn default() -> Self {
        WindowSpec {
            hu_min: -175.0,
            hu_max: 250.0,
        }
    }
}

impl WindowSpec {
    pub fn new(hu_min: f64, hu_max: f64) -> Result<Self> {
        let w = WindowSpec { hu_min, hu_max };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hu_min < self.hu_max) || !self.hu_min.is_finite() || !self.hu_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "window [{}, {}] needs hu_min < hu_max",
                self.hu_min, self.hu_max
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, hu: f32) -> f32 {
        let t = (hu as f64 - self.hu_min) / (self.hu_max - self.hu_min);
        t.clamp(0.0, 1.0) as f32
    }

    /// Inverse of [`apply`](Self::apply) on `[0, 1]`.
    #[inline]
    pub fn to_hu(&self, x: f32) -> f32 {
        (self.hu_min + x as f64 * (self.hu_max - self.hu_min)) as f32
    }
}

/// Window a raw-HU volume into `[0, 1]`.
pub fn normalize(v: &Volume3D, window: &WindowSpec) -> Result<Volume3D> {
    window.validate()?;
    if v.unit() != IntensityUnit::RawHU {
        return Err(Error::Unit("volume is already normalized".into()));
    }
    if let Some(i) = v.voxels().iter().position(|x| x.is_nan()) {
        return Err(Error::NonFinite(i));
    }
    let voxels = v.voxels().iter().map(|&x| window.apply(x)).collect();
    v.with_voxels(voxels, IntensityUnit::Normalized)
}

/// Map a normalized volume back to HU through `window`.
pub fn denormalize(v: &Volume3D, window: &WindowSpec) -> Result<Volume3D> {
    window.validate()?;
    if v.unit() != IntensityUnit::Normalized {
        return Err(Error::Unit("volume is not normalized".into()));
    }
    let voxels = v.voxels().iter().map(|&x| window.to_hu(x)).collect();
    v.with_voxels(voxels, IntensityUnit::RawHU)
}

/// Fixed-width histogram over `[lo, hi]`.
///
/// Out-of-range values land in the end bins. A value on an interior edge
/// belongs to the bin above it, and `hi` itself belongs to the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn empty(bin_count: usize, lo: f64, hi: f64) -> Result<Self> {
        if bin_count < 2 {
            return Err(Error::InvalidParameter(format!("bin count {bin_count} < 2")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("histogram range [{lo}, {hi}]")));
        }
        Ok(Histogram {
            lo,
            hi,
            counts: vec![0; bin_count],
            total: 0,
        })
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bin_count() as f64
    }

    /// Lower edge of bin `i` (`i == bin_count` gives `hi`).
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.bin_count() {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * i as f64 / self.bin_count() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edge(i) + self.edge(i + 1))
    }

    pub fn bin_of(&self, x: f64) -> usize {
        let n = self.bin_count();
        if x <= self.lo {
            return 0;
        }
        if x >= self.hi {
            return n - 1;
        }
        let mut i = (((x - self.lo) / (self.hi - self.lo)) * n as f64).floor() as usize;
        i = i.min(n - 1);
        while i > 0 && x < self.edge(i) {
            i -= 1;
        }
        while i + 1 < n && x >= self.edge(i + 1) {
            i += 1;
        }
        i
    }

    pub fn add(&mut self, x: f64) {
        let i = self.bin_of(x);
        self.counts[i] += 1;
        self.total += 1;
    }

    /// Add another histogram with identical binning.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if !self.same_binning(other) {
            return Err(Error::Shape("histograms use different binning".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn same_binning(&self, other: &Histogram) -> bool {
        self.bin_count() == other.bin_count() && self.lo == other.lo && self.hi == other.hi
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Fraction of the total held in bins `i..`.
    pub fn mass_from(&self, i: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts[i..].iter().sum::<u64>() as f64 / self.total as f64
    }

    /// `bin_lo,bin_hi,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.edge(i), self.edge(i + 1), c);
        }
        out
    }
}

pub fn histogram(values: &[f32], bin_count: usize, range: (f64, f64)) -> Result<Histogram> {
    histogram_f64(values.iter().map(|&v| v as f64), bin_count, range)
}

pub fn histogram_f64(
    values: impl IntoIterator<Item = f64>,
    bin_count: usize,
    (lo, hi): (f64, f64),
) -> Result<Histogram> {
    let mut h = Histogram::empty(bin_count, lo, hi)?;
    for (i, x) in values.into_iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite(i));
        }
        h.add(x);
    }
    if h.total == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(h)
}
