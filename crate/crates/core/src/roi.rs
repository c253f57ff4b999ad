//! Foreground/background information measures and threshold calibration.
//!
//! All measures are plug-in histogram estimates on normalized intensities:
//!
//! * Shannon entropy in bits over 256 bins of `[0, 1]`.
//! * LMC statistical complexity `C = (H / log2 B) * sum_i (p_i - 1/B)^2`,
//!   zero for both constant and uniform fields.
//! * Spatial mutual information between each region voxel and its neighbour
//!   at a fixed offset (default `+1` along x), over a 64 x 64 joint histogram.
//!   Only pairs with both voxels inside the region count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::{histogram_f64, Histogram};
use crate::partition::{extract_unchecked, GridPlan};
use crate::volume::{linear_index, IntensityUnit, LabelVolume, Volume3D};

pub const ENTROPY_BINS: usize = 256;
pub const MI_BINS: usize = 64;
pub const MI_OFFSET: [i64; 3] = [1, 0, 0];
pub const CALIBRATION_BINS: usize = 20;
pub const DEFAULT_EPS_BG: f64 = 0.05;
pub const DEFAULT_EPS_FG: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Foreground,
    Background,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Foreground => "foreground",
            Region::Background => "background",
        }
    }
}

/// How voxels are assigned to the foreground.
#[derive(Debug, Clone, Copy)]
pub enum RegionSelector<'a> {
    /// Label > 0.
    Labels(&'a LabelVolume),
    /// Normalized intensity >= lambda.
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSplit {
    /// Per-voxel foreground flag, volume order.
    pub membership: Vec<bool>,
    pub foreground: Vec<f32>,
    pub background: Vec<f32>,
}

impl RegionSplit {
    pub fn values(&self, region: Region) -> &[f32] {
        match region {
            Region::Foreground => &self.foreground,
            Region::Background => &self.background,
        }
    }

    pub fn mask(&self, region: Region) -> Vec<bool> {
        match region {
            Region::Foreground => self.membership.clone(),
            Region::Background => self.membership.iter().map(|&m| !m).collect(),
        }
    }
}

fn require_normalized(v: &Volume3D) -> Result<()> {
    if v.unit() != IntensityUnit::Normalized {
        return Err(Error::Unit("region analysis expects a normalized volume".into()));
    }
    Ok(())
}

pub fn region_split(v: &Volume3D, selector: RegionSelector<'_>) -> Result<RegionSplit> {
    require_normalized(v)?;
    let membership: Vec<bool> = match selector {
        RegionSelector::Labels(labels) => {
            if labels.shape() != v.shape() {
                return Err(Error::Shape(format!(
                    "labels {:?} vs volume {:?}",
                    labels.shape(),
                    v.shape()
                )));
            }
            labels.labels().iter().map(|&l| l > 0).collect()
        }
        RegionSelector::Threshold(lambda) => {
            v.voxels().iter().map(|&x| x as f64 >= lambda).collect()
        }
    };
    let mut foreground = Vec::new();
    let mut background = Vec::new();
    for (&x, &m) in v.voxels().iter().zip(&membership) {
        if m {
            foreground.push(x);
        } else {
            background.push(x);
        }
    }
    Ok(RegionSplit {
        membership,
        foreground,
        background,
    })
}

/// Entropy in bits of a histogram's empirical distribution (`0 log 0 = 0`).
pub fn histogram_entropy(h: &Histogram) -> f64 {
    let total = h.total as f64;
    let mut e = 0.0;
    for &c in &h.counts {
        if c > 0 {
            let p = c as f64 / total;
            e -= p * p.log2();
        }
    }
    e
}

pub fn shannon_entropy(values: &[f32], bin_count: usize, range: (f64, f64)) -> Result<f64> {
    let h = histogram_f64(values.iter().map(|&v| v as f64), bin_count, range)?;
    Ok(histogram_entropy(&h))
}

/// LMC complexity of a histogram.
pub fn histogram_complexity(h: &Histogram) -> f64 {
    let b = h.bin_count() as f64;
    let h_norm = histogram_entropy(h) / b.log2();
    let uniform = 1.0 / b;
    let diseq: f64 = h.probabilities().iter().map(|p| (p - uniform).powi(2)).sum();
    h_norm * diseq
}

/// LMC complexity over `bin_count` bins of `[0, 1]`.
pub fn complexity(values: &[f32], bin_count: usize) -> Result<f64> {
    let h = histogram_f64(values.iter().map(|&v| v as f64), bin_count, (0.0, 1.0))?;
    Ok(histogram_complexity(&h))
}

/// Plug-in mutual information in bits between paired samples.
pub fn mutual_information_pairs(
    pairs: impl IntoIterator<Item = (f64, f64)>,
    bin_count: usize,
    range: (f64, f64),
) -> Result<f64> {
    let binning = Histogram::empty(bin_count, range.0, range.1)?;
    let mut joint = vec![0u64; bin_count * bin_count];
    let mut row = vec![0u64; bin_count];
    let mut col = vec![0u64; bin_count];
    let mut n = 0u64;
    for (i, (a, b)) in pairs.into_iter().enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite(i));
        }
        let (ia, ib) = (binning.bin_of(a), binning.bin_of(b));
        joint[ia * bin_count + ib] += 1;
        row[ia] += 1;
        col[ib] += 1;
        n += 1;
    }
    if n < 2 {
        return Err(Error::InsufficientPairs { pairs: n as usize });
    }
    let total = n as f64;
    let ent = |counts: &[u64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.log2()
            })
            .sum()
    };
    let mi = ent(&row) + ent(&col) - ent(&joint);
    Ok(mi.max(0.0))
}

/// Spatial neighbour MI inside `region` (all voxels when `None`).
pub fn mutual_information(
    v: &Volume3D,
    region: Option<&[bool]>,
    offset: [i64; 3],
    bin_count: usize,
) -> Result<f64> {
    require_normalized(v)?;
    if let Some(r) = region {
        if r.len() != v.len() {
            return Err(Error::Shape(format!("{} region flags for {} voxels", r.len(), v.len())));
        }
    }
    let shape = v.shape();
    let inside = |i: usize| region.is_none_or(|r| r[i]);
    let range = |axis: usize| {
        let n = shape[axis] as i64;
        let o = offset[axis];
        (0.max(-o), n.min(n - o))
    };
    let (rx, ry, rz) = (range(0), range(1), range(2));
    let mut pairs = Vec::new();
    for z in rz.0..rz.1 {
        for y in ry.0..ry.1 {
            for x in rx.0..rx.1 {
                let i = linear_index(shape, x as usize, y as usize, z as usize);
                let j = linear_index(
                    shape,
                    (x + offset[0]) as usize,
                    (y + offset[1]) as usize,
                    (z + offset[2]) as usize,
                );
                if inside(i) && inside(j) {
                    pairs.push((v.voxels()[i] as f64, v.voxels()[j] as f64));
                }
            }
        }
    }
    mutual_information_pairs(pairs, bin_count, (0.0, 1.0))
}

/// Measures for one region. `None` marks a metric that is undefined because
/// the region is empty (or, for MI, has fewer than two neighbour pairs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: Region,
    pub voxel_count: usize,
    pub entropy: Option<f64>,
    pub complexity: Option<f64>,
    pub mutual_information: Option<f64>,
}

impl RegionReport {
    pub const CSV_HEADER: &'static str = "volume,region,voxels,entropy_bits,complexity,mi_bits";

    pub fn csv_row(&self, volume: &str) -> String {
        let f = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{volume},{},{},{},{},{}",
            self.region.as_str(),
            self.voxel_count,
            f(self.entropy),
            f(self.complexity),
            f(self.mutual_information)
        )
    }
}

pub fn region_report(v: &Volume3D, split: &RegionSplit, region: Region) -> Result<RegionReport> {
    let values = split.values(region);
    if values.is_empty() {
        return Ok(RegionReport {
            region,
            voxel_count: 0,
            entropy: None,
            complexity: None,
            mutual_information: None,
        });
    }
    let h = histogram_f64(values.iter().map(|&x| x as f64), ENTROPY_BINS, (0.0, 1.0))?;
    let mask = split.mask(region);
    let mi = match mutual_information(v, Some(&mask), MI_OFFSET, MI_BINS) {
        Ok(mi) => Some(mi),
        Err(Error::InsufficientPairs { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(RegionReport {
        region,
        voxel_count: values.len(),
        entropy: Some(histogram_entropy(&h)),
        complexity: Some(histogram_complexity(&h)),
        mutual_information: mi,
    })
}

/// Foreground and background reports for one volume.
pub fn analyze_regions(v: &Volume3D, selector: RegionSelector<'_>) -> Result<[RegionReport; 2]> {
    let split = region_split(v, selector)?;
    Ok([
        region_report(v, &split, Region::Foreground)?,
        region_report(v, &split, Region::Background)?,
    ])
}

/// Entropy (256 bins) of every subvolume, in flat-index order.
pub fn subvolume_entropies(v: &Volume3D, grid: &GridPlan) -> Result<Vec<f64>> {
    if v.shape() != grid.volume_shape {
        return Err(Error::Shape("grid does not match volume".into()));
    }
    (0..grid.count())
        .into_par_iter()
        .map(|p| shannon_entropy(&extract_unchecked(v.voxels(), grid, p).voxels, ENTROPY_BINS, (0.0, 1.0)))
        .collect()
}

/// Foreground and background histograms of one labelled volume.
pub fn region_histograms(
    v: &Volume3D,
    labels: &LabelVolume,
    bin_count: usize,
) -> Result<(Histogram, Histogram)> {
    let split = region_split(v, RegionSelector::Labels(labels))?;
    let mut fg = Histogram::empty(bin_count, 0.0, 1.0)?;
    let mut bg = Histogram::empty(bin_count, 0.0, 1.0)?;
    split.foreground.iter().for_each(|&x| fg.add(x as f64));
    split.background.iter().for_each(|&x| bg.add(x as f64));
    Ok((fg, bg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdMethod {
    ValleySeek,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Largest background mass allowed at or above the threshold bin.
    pub eps_bg: f64,
    /// Largest foreground mass allowed below the threshold bin.
    pub eps_fg: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            eps_bg: DEFAULT_EPS_BG,
            eps_fg: DEFAULT_EPS_FG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub lambda_hat: f64,
    pub method: ThresholdMethod,
    pub bin_index: usize,
    pub eps_bg: f64,
    pub eps_fg: f64,
    pub bg_mass_above: f64,
    pub fg_mass_above: f64,
    pub fg_hist: Histogram,
    pub bg_hist: Histogram,
}

/// Pick the lowest bin center `t` whose bin starts a tail holding less than
/// `eps_bg` of the background and more than `1 - eps_fg` of the foreground.
///
/// "Mass above `t`" counts every bin from the one containing `t` upward.
pub fn calibrate_threshold(
    fg_hist: &Histogram,
    bg_hist: &Histogram,
    opts: &CalibrationOptions,
) -> Result<ThresholdEstimate> {
    if !fg_hist.same_binning(bg_hist) {
        return Err(Error::Shape("foreground and background binning differ".into()));
    }
    if fg_hist.total == 0 || bg_hist.total == 0 {
        return Err(Error::EmptyInput);
    }
    for i in 0..fg_hist.bin_count() {
        let bg_above = bg_hist.mass_from(i);
        let fg_above = fg_hist.mass_from(i);
        if bg_above < opts.eps_bg && fg_above > 1.0 - opts.eps_fg {
            return Ok(ThresholdEstimate {
                lambda_hat: fg_hist.center(i),
                method: ThresholdMethod::ValleySeek,
                bin_index: i,
                eps_bg: opts.eps_bg,
                eps_fg: opts.eps_fg,
                bg_mass_above: bg_above,
                fg_mass_above: fg_above,
                fg_hist: fg_hist.clone(),
                bg_hist: bg_hist.clone(),
            });
        }
    }
    Err(Error::NoSeparation)
}
