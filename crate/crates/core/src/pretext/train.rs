use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{batch_loss, gradient, Batch, Gradients, PretextModel};
use crate::error::{Error, Result};
use crate::masking::{apply_mask, build_mask_plan, MaskConfig, MaskStrategy, DEFAULT_LAMBDA, DEFAULT_RATIO};
use crate::rng::{derive_seed, stage};
use crate::volume::{voxel_count, Shape3, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Masked subvolumes per update; 0 means one full-batch step per epoch.
    pub batch_size: usize,
    pub seed: u64,
    pub mask_ratio: f64,
    pub strategy: MaskStrategy,
    pub lambda: f64,
    /// Decoupled decay applied to W1 and W2 only.
    pub weight_decay: f64,
    pub sub: Shape3,
    pub bottleneck: usize,
    pub fill: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            epochs: 50,
            batch_size: 0,
            seed: 0,
            mask_ratio: DEFAULT_RATIO,
            strategy: MaskStrategy::ForegroundHU,
            lambda: DEFAULT_LAMBDA,
            weight_decay: 0.05,
            sub: [4, 4, 4],
            bottleneck: 16,
            fill: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidParameter(format!("learning rate {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidParameter(format!("weight decay {}", self.weight_decay)));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!("mask ratio {} outside (0, 1]", self.mask_ratio)));
        }
        if self.bottleneck == 0 || self.bottleneck >= voxel_count(self.sub) {
            return Err(Error::InvalidParameter(format!(
                "bottleneck {} must be in 1..{}",
                self.bottleneck,
                voxel_count(self.sub)
            )));
        }
        Ok(())
    }

    fn mask_config(&self, seed: u64) -> MaskConfig {
        MaskConfig {
            sub: self.sub,
            lambda: self.lambda,
            ratio: self.mask_ratio,
            strategy: self.strategy,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss of the updates made during the epoch.
    pub train_loss: f64,
    /// Loss on the fixed held-out masks after the epoch.
    pub heldout_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: PretextModel,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// `epoch,train_loss,heldout_loss` rows; epoch 0 holds the untrained loss.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,heldout_loss\n");
        let _ = writeln!(out, "0,,{}", self.initial_loss);
        for r in &self.epochs {
            let _ = writeln!(out, "{},{},{}", r.epoch + 1, r.train_loss, r.heldout_loss);
        }
        out
    }
}

/// Masked and unmasked pairs for one plan per volume; only masked samples
/// are kept since the loss ignores the rest.
fn masked_samples(volumes: &[Volume3D], cfg: &TrainConfig, seed_of: impl Fn(usize) -> u64) -> Result<Batch> {
    let mut batch = Batch::default();
    for (vi, v) in volumes.iter().enumerate() {
        let plan = build_mask_plan(v, &cfg.mask_config(seed_of(vi)))?;
        let input = apply_mask(v, &plan, cfg.fill)?;
        batch
            .samples
            .extend(Batch::from_volumes(&input, v, &plan)?.masked_only().samples);
    }
    Ok(batch)
}

fn volume_offset(vi: usize) -> u64 {
    (vi as u64).wrapping_mul(stage::VOLUME_STRIDE)
}

/// Masked L1 loss of `model` on held-out masks of `volumes`. The masks come
/// from `cfg` with the seed offset by [`stage::HELDOUT`], and do not change
/// between calls.
pub fn evaluate_masked_loss(model: &PretextModel, volumes: &[Volume3D], cfg: &TrainConfig) -> Result<f64> {
    if volumes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let base = derive_seed(cfg.seed, stage::HELDOUT);
    let batch = masked_samples(volumes, cfg, |vi| base.wrapping_add(volume_offset(vi)))?;
    batch_loss(model, &batch)
}

fn step(model: &mut PretextModel, g: &Gradients, lr: f64, wd: f64) {
    let decay = 1.0 - lr * wd;
    for (w, d) in model.w1.iter_mut().zip(&g.w1) {
        *w = *w * decay - lr * d;
    }
    for (w, d) in model.w2.iter_mut().zip(&g.w2) {
        *w = *w * decay - lr * d;
    }
    for (b, d) in model.b1.iter_mut().zip(&g.b1) {
        *b -= lr * d;
    }
    for (b, d) in model.b2.iter_mut().zip(&g.b2) {
        *b -= lr * d;
    }
}

/// Train a fresh model on `volumes`.
///
/// Epoch `e` masks volume `i` with seed `cfg.seed + e + i * VOLUME_STRIDE`.
/// The recorded loss history is the held-out loss after each epoch.
pub fn train(volumes: &[Volume3D], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if volumes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = voxel_count(cfg.sub);
    let mut model = PretextModel::init(n, cfg.bottleneck, derive_seed(cfg.seed, stage::INIT))?;
    let initial_loss = evaluate_masked_loss(&model, volumes, cfg)?;
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let epoch_seed = cfg.seed.wrapping_add(epoch as u64);
        let batch = masked_samples(volumes, cfg, |vi| epoch_seed.wrapping_add(volume_offset(vi)))?;
        let size = if cfg.batch_size == 0 { batch.samples.len().max(1) } else { cfg.batch_size };
        let checkpoint = model.clone();
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for chunk in batch.samples.chunks(size) {
            let part = Batch { samples: chunk.to_vec() };
            let (loss, g) = gradient(&model, &part)?;
            step(&mut model, &g, cfg.learning_rate, cfg.weight_decay);
            if !loss.is_finite() || !model.is_finite() {
                return Err(Error::Divergence { epoch, last_finite: Box::new(checkpoint) });
            }
            loss_sum += loss;
            steps += 1;
        }
        let heldout_loss = evaluate_masked_loss(&model, volumes, cfg)?;
        if !heldout_loss.is_finite() {
            return Err(Error::Divergence { epoch, last_finite: Box::new(checkpoint) });
        }
        model.loss_history.push(heldout_loss);
        records.push(EpochRecord {
            epoch,
            train_loss: if steps == 0 { 0.0 } else { loss_sum / steps as f64 },
            heldout_loss,
        });
    }

    let final_loss = records.last().map_or(initial_loss, |r| r.heldout_loss);
    Ok(TrainOutcome { model, initial_loss, final_loss, epochs: records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: MaskStrategy,
    pub ratio: f64,
    /// NaN when the cell failed.
    pub final_loss: f64,
    pub epochs: usize,
    pub seed: u64,
    pub error: Option<String>,
}

/// Train one model per (strategy, ratio) cell. A failing cell is reported in
/// its row and the rest of the sweep still runs.
pub fn strategy_sweep(
    volumes: &[Volume3D],
    strategies: &[MaskStrategy],
    ratios: &[f64],
    base: &TrainConfig,
) -> Vec<SweepRow> {
    let cells: Vec<(MaskStrategy, f64)> = strategies
        .iter()
        .flat_map(|&s| ratios.iter().map(move |&r| (s, r)))
        .collect();
    cells
        .into_par_iter()
        .map(|(strategy, ratio)| {
            let cfg = TrainConfig { strategy, mask_ratio: ratio, ..*base };
            let (final_loss, error) = match train(volumes, &cfg) {
                Ok(out) => (out.final_loss, None),
                Err(e) => (f64::NAN, Some(e.to_string())),
            };
            SweepRow { strategy, ratio, final_loss, epochs: cfg.epochs, seed: cfg.seed, error }
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("strategy,ratio,final_loss,epochs,seed\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{},{}", r.strategy, r.ratio, r.final_loss, r.epochs, r.seed);
    }
    out
}
