//! Foreground masking of subvolumes.
//!
//! Each subvolume is characterized by its mean normalized intensity and is
//! foreground when that mean is at least `lambda`. A mask plan then hides a
//! fraction `ratio` of the eligible subvolumes: the foreground ones for
//! [`MaskStrategy::ForegroundHU`], all of them for the two baselines. The
//! masked count is `round(ratio * eligible)` with halves rounded up.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::WindowSpec;
use crate::partition::{extract_unchecked, plan_grid, scatter, GridPlan, Subvolume};
use crate::rng::{SeededRng, RNG_ALGORITHM};
use crate::volume::{IntensityUnit, Shape3, Volume3D};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_RATIO: f64 = 0.6;
pub const DEFAULT_SUB: Shape3 = [16, 16, 16];
/// Tolerance when re-deriving characterization values from a volume.
pub const CHAR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    /// Mask only subvolumes whose mean intensity reaches lambda.
    #[serde(rename = "foreground_hu")]
    ForegroundHU,
    /// Uniform sample over all subvolumes.
    Random,
    /// One contiguous box of grid cells.
    LocalBlock,
}

impl MaskStrategy {
    pub const ALL: [MaskStrategy; 3] =
        [MaskStrategy::ForegroundHU, MaskStrategy::Random, MaskStrategy::LocalBlock];

    pub fn as_str(&self) -> &'static str {
        match self {
            MaskStrategy::ForegroundHU => "foreground_hu",
            MaskStrategy::Random => "random",
            MaskStrategy::LocalBlock => "local_block",
        }
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "foreground_hu" | "foreground" | "ours" => Ok(MaskStrategy::ForegroundHU),
            "random" => Ok(MaskStrategy::Random),
            "local_block" | "local" => Ok(MaskStrategy::LocalBlock),
            other => Err(Error::InvalidParameter(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub sub: Shape3,
    pub lambda: f64,
    pub ratio: f64,
    pub strategy: MaskStrategy,
    pub seed: u64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            sub: DEFAULT_SUB,
            lambda: DEFAULT_LAMBDA,
            ratio: DEFAULT_RATIO,
            strategy: MaskStrategy::ForegroundHU,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub p: usize,
    #[serde(rename = "char")]
    pub char_value: f64,
    #[serde(rename = "fg")]
    pub is_foreground: bool,
    #[serde(rename = "masked")]
    pub is_masked: bool,
}

/// Per-subvolume masking decisions plus everything needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub grid: GridPlan,
    pub lambda: f64,
    pub ratio: f64,
    pub strategy: MaskStrategy,
    pub seed: u64,
    pub rng_algorithm: String,
    /// HU window the source volume was normalized with, if known.
    pub window: Option<WindowSpec>,
    pub entries: Vec<MaskEntry>,
}

impl MaskPlan {
    pub fn masked_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_masked).count()
    }

    pub fn foreground_indices(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| e.is_foreground).map(|e| e.p).collect()
    }

    pub fn eligible_count(&self) -> usize {
        match self.strategy {
            MaskStrategy::ForegroundHU => self.entries.iter().filter(|e| e.is_foreground).count(),
            MaskStrategy::Random | MaskStrategy::LocalBlock => self.entries.len(),
        }
    }

    pub fn config(&self) -> MaskConfig {
        MaskConfig {
            sub: self.grid.sub_shape,
            lambda: self.lambda,
            ratio: self.ratio,
            strategy: self.strategy,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Masked count for `eligible` entries; halves round away from zero.
///
/// Products within a relative 1e-9 of a half count as that half, so a
/// decimal ratio such as 0.29 gives `round(0.29 * 50) = 15` even though the
/// binary product is 14.4999...
pub fn target_count(ratio: f64, eligible: usize) -> usize {
    let x = ratio * eligible as f64;
    let half = (x - 0.5).round() + 0.5;
    if (x - half).abs() <= 1e-9 * x.max(1.0) {
        half.ceil() as usize
    } else {
        x.round() as usize
    }
}

/// Mean voxel value of a block.
pub fn characterize(sub: &Subvolume) -> f64 {
    mean(&sub.voxels)
}

fn mean(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
}

/// Foreground iff `char_value >= lambda`.
#[inline]
pub fn classify_foreground(char_value: f64, lambda: f64) -> bool {
    char_value >= lambda
}

/// Characterization values of all subvolumes, in flat-index order.
pub fn characterize_all(v: &Volume3D, g: &GridPlan) -> Result<Vec<f64>> {
    if v.shape() != g.volume_shape {
        return Err(Error::Shape(format!(
            "volume shape {:?} vs grid {:?}",
            v.shape(),
            g.volume_shape
        )));
    }
    Ok((0..g.count())
        .into_par_iter()
        .map(|p| characterize(&extract_unchecked(v.voxels(), g, p)))
        .collect())
}

pub fn build_mask_plan(v: &Volume3D, cfg: &MaskConfig) -> Result<MaskPlan> {
    if v.unit() != IntensityUnit::Normalized {
        return Err(Error::Unit("mask plans are built on normalized volumes".into()));
    }
    if !(cfg.ratio > 0.0 && cfg.ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!("ratio {} outside (0, 1]", cfg.ratio)));
    }
    if !cfg.lambda.is_finite() {
        return Err(Error::InvalidParameter("lambda must be finite".into()));
    }
    let grid = plan_grid(v.shape(), cfg.sub)?;
    let chars = characterize_all(v, &grid)?;
    let fg: Vec<bool> = chars.iter().map(|&c| classify_foreground(c, cfg.lambda)).collect();
    let masked = select(&grid, &fg, cfg)?;
    let entries = chars
        .into_iter()
        .zip(fg)
        .zip(masked)
        .enumerate()
        .map(|(p, ((char_value, is_foreground), is_masked))| MaskEntry {
            p,
            char_value,
            is_foreground,
            is_masked,
        })
        .collect();
    Ok(MaskPlan {
        grid,
        lambda: cfg.lambda,
        ratio: cfg.ratio,
        strategy: cfg.strategy,
        seed: cfg.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        window: None,
        entries,
    })
}

/// Sampling pass shared by plan building and plan verification.
fn select(grid: &GridPlan, fg: &[bool], cfg: &MaskConfig) -> Result<Vec<bool>> {
    let total = grid.count();
    let mut rng = SeededRng::new(cfg.seed);
    let mut masked = vec![false; total];
    match cfg.strategy {
        MaskStrategy::ForegroundHU => {
            let eligible: Vec<usize> = (0..total).filter(|&p| fg[p]).collect();
            if eligible.is_empty() {
                return Err(Error::NoForeground { lambda: cfg.lambda });
            }
            let k = nonzero_count(cfg.ratio, eligible.len())?;
            for p in rng.choose_k(&eligible, k) {
                masked[p] = true;
            }
        }
        MaskStrategy::Random => {
            let all: Vec<usize> = (0..total).collect();
            let k = nonzero_count(cfg.ratio, total)?;
            for p in rng.choose_k(&all, k) {
                masked[p] = true;
            }
        }
        MaskStrategy::LocalBlock => {
            let k = nonzero_count(cfg.ratio, total)?;
            for p in local_block(grid, k, &mut rng) {
                masked[p] = true;
            }
        }
    }
    Ok(masked)
}

fn nonzero_count(ratio: f64, eligible: usize) -> Result<usize> {
    match target_count(ratio, eligible) {
        0 => Err(Error::DegenerateRatio { ratio, eligible }),
        k => Ok(k.min(eligible)),
    }
}

/// Smallest box of grid cells holding at least `k` cells, preferring the most
/// cube-like shape, then lexicographic order.
fn block_extent(grid: Shape3, k: usize) -> Shape3 {
    let mut best: Option<(usize, usize, Shape3)> = None;
    for a in 1..=grid[0] {
        for b in 1..=grid[1] {
            for c in 1..=grid[2] {
                let vol = a * b * c;
                if vol < k {
                    continue;
                }
                let spread = a.max(b).max(c) - a.min(b).min(c);
                let key = (vol, spread, [a, b, c]);
                if best.is_none_or(|cur| key < cur) {
                    best = Some(key);
                }
            }
        }
    }
    best.expect("k <= P guarantees a box").2
}

/// `k` cells of one axis-aligned box at a seeded corner, filled in raster
/// order (depth fastest) so the selection is face-connected.
fn local_block(grid: &GridPlan, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let ext = block_extent(grid.grid, k);
    let corner: [usize; 3] =
        std::array::from_fn(|a| rng.below((grid.grid[a] - ext[a] + 1) as u64) as usize);
    let mut out = Vec::with_capacity(k);
    'fill: for i in 0..ext[0] {
        for j in 0..ext[1] {
            for l in 0..ext[2] {
                if out.len() == k {
                    break 'fill;
                }
                out.push(grid.flat([corner[0] + i, corner[1] + j, corner[2] + l]));
            }
        }
    }
    out
}

/// Replace every masked subvolume with `fill`.
pub fn apply_mask(v: &Volume3D, plan: &MaskPlan, fill: f32) -> Result<Volume3D> {
    fill_where(v, plan, fill, |e| e.is_masked)
}

/// The product form `M_F(X_p) * X_p` read literally: background subvolumes
/// are replaced by `fill`, foreground ones pass through.
pub fn apply_foreground_gate(v: &Volume3D, plan: &MaskPlan, fill: f32) -> Result<Volume3D> {
    fill_where(v, plan, fill, |e| !e.is_foreground)
}

fn fill_where(
    v: &Volume3D,
    plan: &MaskPlan,
    fill: f32,
    pick: impl Fn(&MaskEntry) -> bool,
) -> Result<Volume3D> {
    if v.shape() != plan.grid.volume_shape || plan.entries.len() != plan.grid.count() {
        return Err(Error::Shape(format!(
            "plan grid {:?} does not match volume {:?}",
            plan.grid.volume_shape,
            v.shape()
        )));
    }
    let block = vec![fill; plan.grid.sub_len()];
    let mut voxels = v.voxels().to_vec();
    for e in plan.entries.iter().filter(|e| pick(e)) {
        scatter(&mut voxels, &plan.grid, e.p, &block);
    }
    v.with_voxels(voxels, v.unit())
}

/// Flat indices of masked subvolumes, ascending.
pub fn masked_indices(plan: &MaskPlan) -> Vec<usize> {
    let mut idx: Vec<usize> = plan.entries.iter().filter(|e| e.is_masked).map(|e| e.p).collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub entry: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.entry {
            Some(p) => write!(f, "entry {p}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Re-derive every plan invariant from the normalized source volume.
pub fn verify_plan(plan: &MaskPlan, v: &Volume3D) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut global = |m: String| out.push(Violation { entry: None, message: m });
    if let Err(e) = plan.grid.validate() {
        global(format!("grid: {e}"));
        return out;
    }
    if v.shape() != plan.grid.volume_shape {
        global(format!("volume shape {:?} vs plan {:?}", v.shape(), plan.grid.volume_shape));
        return out;
    }
    if v.unit() != IntensityUnit::Normalized {
        global("volume is not normalized".into());
        return out;
    }
    if plan.entries.len() != plan.grid.count() {
        global(format!("{} entries for P = {}", plan.entries.len(), plan.grid.count()));
        return out;
    }
    if !(plan.ratio > 0.0 && plan.ratio <= 1.0) {
        global(format!("ratio {} outside (0, 1]", plan.ratio));
    }
    if plan.rng_algorithm != RNG_ALGORITHM {
        global(format!("unknown rng algorithm {:?}", plan.rng_algorithm));
    }

    let chars = characterize_all(v, &plan.grid).expect("shape checked");
    for (p, e) in plan.entries.iter().enumerate() {
        let mut bad = |m: String| out.push(Violation { entry: Some(p), message: m });
        if e.p != p {
            bad(format!("index field {} out of order", e.p));
        }
        let drift = (e.char_value - chars[p]).abs();
        if !(drift <= CHAR_TOLERANCE) {
            bad(format!("char {} differs from recomputed {} by {drift:e}", e.char_value, chars[p]));
        }
        if e.is_foreground != classify_foreground(chars[p], plan.lambda) {
            bad(format!("fg = {} but mean {} vs lambda {}", e.is_foreground, chars[p], plan.lambda));
        }
        if plan.strategy == MaskStrategy::ForegroundHU && e.is_masked && !e.is_foreground {
            bad("masked background subvolume".into());
        }
    }

    let expected = target_count(plan.ratio, plan.eligible_count());
    if plan.masked_count() != expected {
        out.push(Violation {
            entry: None,
            message: format!("{} masked, ratio law requires {expected}", plan.masked_count()),
        });
    }

    if out.is_empty() {
        let fg: Vec<bool> = plan.entries.iter().map(|e| e.is_foreground).collect();
        match select(&plan.grid, &fg, &plan.config()) {
            Ok(masked) => {
                if let Some(p) = (0..masked.len()).find(|&p| masked[p] != plan.entries[p].is_masked) {
                    out.push(Violation {
                        entry: Some(p),
                        message: "masked set does not reproduce from the seed".into(),
                    });
                }
            }
            Err(e) => out.push(Violation { entry: None, message: format!("resampling: {e}") }),
        }
    }
    out
}
