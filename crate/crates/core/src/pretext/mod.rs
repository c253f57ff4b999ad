//! Masked-reconstruction pretext task at desk scale.
//!
//! [`PretextModel`] is a two-layer autoencoder applied to each subvolume on
//! its own: `y = W2 * relu(W1 * x + b1) + b2`. The input is the masked volume,
//! so masked subvolumes arrive as fill-value blocks. The loss is the mean
//! absolute error over voxels of masked subvolumes only; everything else
//! contributes exactly zero. Gradients are computed by hand, with the
//! subgradient of `|.|` and of `relu` taken as 0 at their kinks.
//!
//! Arithmetic is f64 throughout. Checkpoints store parameters as f32.

mod checkpoint;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use train::{
    evaluate_masked_loss, strategy_sweep, sweep_csv, train, EpochRecord, SweepRow, TrainConfig,
    TrainOutcome,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskPlan;
use crate::partition::{extract_unchecked, GridPlan};
use crate::rng::SeededRng;
use crate::volume::Volume3D;

/// Samples per gradient chunk. Chunks are reduced in index order, so results
/// do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretextModel {
    /// Flattened subvolume size.
    pub n: usize,
    /// Bottleneck width.
    pub m: usize,
    /// `m x n`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `n x m`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub init_seed: Option<u64>,
    pub loss_history: Vec<f64>,
}

/// Intermediate values of one forward pass.
struct Trace {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

impl PretextModel {
    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 || m >= n {
            return Err(Error::InvalidParameter(format!(
                "need 0 < bottleneck ({m}) < subvolume size ({n})"
            )));
        }
        Ok(PretextModel {
            n,
            m,
            w1: vec![0.0; m * n],
            b1: vec![0.0; m],
            w2: vec![0.0; n * m],
            b2: vec![0.0; n],
            init_seed: None,
            loss_history: Vec::new(),
        })
    }

    /// Every parameter uniform in `[-1/sqrt(n), 1/sqrt(n)]`, drawn in the
    /// order W1, b1, W2, b2.
    pub fn init(n: usize, m: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(n, m)?;
        let bound = 1.0 / (n as f64).sqrt();
        let mut rng = SeededRng::new(seed);
        for i in 0..model.param_count() {
            model.set_param(i, bound * (2.0 * rng.unit_f64() - 1.0));
        }
        model.init_seed = Some(seed);
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        2 * self.n * self.m + self.n + self.m
    }

    /// Parameter `i` in the flat order W1, b1, W2, b2.
    pub fn param(&self, i: usize) -> f64 {
        let (block, j) = self.locate(i);
        match block {
            0 => self.w1[j],
            1 => self.b1[j],
            2 => self.w2[j],
            _ => self.b2[j],
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let (block, j) = self.locate(i);
        match block {
            0 => self.w1[j] = v,
            1 => self.b1[j] = v,
            2 => self.w2[j] = v,
            _ => self.b2[j] = v,
        }
    }

    fn locate(&self, i: usize) -> (usize, usize) {
        let mn = self.m * self.n;
        if i < mn {
            (0, i)
        } else if i < mn + self.m {
            (1, i - mn)
        } else if i < 2 * mn + self.m {
            (2, i - mn - self.m)
        } else {
            assert!(i < self.param_count(), "parameter index {i} out of range");
            (3, i - 2 * mn - self.m)
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.n {
            return Err(Error::Shape(format!("input of {} values, model expects {}", input.len(), self.n)));
        }
        Ok(self.trace(input).out)
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let (n, m) = (self.n, self.m);
        let mut pre = self.b1.clone();
        for (j, z) in pre.iter_mut().enumerate() {
            let row = &self.w1[j * n..(j + 1) * n];
            *z += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let mut out = self.b2.clone();
        for (v, o) in out.iter_mut().enumerate() {
            let row = &self.w2[v * m..(v + 1) * m];
            *o += row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        Trace { pre, hidden, out }
    }
}

/// Parameter-shaped gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &PretextModel) -> Self {
        Gradients {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: vec![0.0; model.b2.len()],
        }
    }

    /// Component `i` in the model's flat parameter order.
    pub fn flat(&self, i: usize) -> f64 {
        let (mn, m) = (self.w1.len(), self.b1.len());
        if i < mn {
            self.w1[i]
        } else if i < mn + m {
            self.b1[i - mn]
        } else if i < 2 * mn + m {
            self.w2[i - mn - m]
        } else {
            self.b2[i - 2 * mn - m]
        }
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// One subvolume: model input, reconstruction target, and whether the loss
/// sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub p: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub masked: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub samples: Vec<Sample>,
}

impl Batch {
    /// Pair each block of `input` (normally the masked volume) with the block
    /// of `target` at the same grid position.
    pub fn from_volumes(input: &Volume3D, target: &Volume3D, plan: &MaskPlan) -> Result<Self> {
        let g = &plan.grid;
        for v in [input, target] {
            if v.shape() != g.volume_shape {
                return Err(Error::Shape(format!("volume {:?} vs plan grid {:?}", v.shape(), g.volume_shape)));
            }
        }
        if plan.entries.len() != g.count() {
            return Err(Error::Shape("plan entries do not cover the grid".into()));
        }
        let samples = plan
            .entries
            .iter()
            .map(|e| Sample {
                p: e.p,
                input: block_f64(input, g, e.p),
                target: block_f64(target, g, e.p),
                masked: e.is_masked,
            })
            .collect();
        Ok(Batch { samples })
    }

    pub fn masked_count(&self) -> usize {
        self.samples.iter().filter(|s| s.masked).count()
    }

    pub fn masked_only(&self) -> Batch {
        Batch {
            samples: self.samples.iter().filter(|s| s.masked).cloned().collect(),
        }
    }
}

fn block_f64(v: &Volume3D, g: &GridPlan, p: usize) -> Vec<f64> {
    extract_unchecked(v.voxels(), g, p)
        .voxels
        .into_iter()
        .map(|x| x as f64)
        .collect()
}

/// Per-subvolume reconstructions of `input`, in flat-index order.
pub fn reconstruct(model: &PretextModel, input: &Volume3D, grid: &GridPlan) -> Result<Vec<Vec<f64>>> {
    if input.shape() != grid.volume_shape {
        return Err(Error::Shape("input does not match grid".into()));
    }
    if grid.sub_len() != model.n {
        return Err(Error::Shape(format!("subvolume size {} vs model n {}", grid.sub_len(), model.n)));
    }
    Ok((0..grid.count())
        .into_par_iter()
        .map(|p| model.trace(&block_f64(input, grid, p)).out)
        .collect())
}

/// Mean absolute error over the voxels of masked subvolumes.
pub fn masked_l1_loss(target: &Volume3D, recon: &[Vec<f64>], plan: &MaskPlan) -> Result<f64> {
    let g = &plan.grid;
    if target.shape() != g.volume_shape || recon.len() != g.count() {
        return Err(Error::Shape(format!(
            "{} reconstructions / target {:?} vs grid of {} over {:?}",
            recon.len(),
            target.shape(),
            g.count(),
            g.volume_shape
        )));
    }
    let mut sum = 0.0;
    let mut blocks = 0usize;
    for e in plan.entries.iter().filter(|e| e.is_masked) {
        let t = extract_unchecked(target.voxels(), g, e.p).voxels;
        let r = &recon[e.p];
        if r.len() != t.len() {
            return Err(Error::Shape(format!("reconstruction {} has {} values", e.p, r.len())));
        }
        sum += r.iter().zip(&t).map(|(&r, &t)| (r - t as f64).abs()).sum::<f64>();
        blocks += 1;
    }
    if blocks == 0 {
        return Err(Error::DegenerateRatio { ratio: plan.ratio, eligible: plan.eligible_count() });
    }
    Ok(sum / (blocks * g.sub_len()) as f64)
}

/// Masked L1 loss of `model` on a batch, without gradients.
pub fn batch_loss(model: &PretextModel, batch: &Batch) -> Result<f64> {
    let k = batch.masked_count();
    if k == 0 {
        return Err(Error::DegenerateRatio { ratio: 0.0, eligible: batch.samples.len() });
    }
    let mut sum = 0.0;
    for s in batch.samples.iter().filter(|s| s.masked) {
        check_sample(model, s)?;
        let out = model.trace(&s.input).out;
        sum += out.iter().zip(&s.target).map(|(o, t)| (o - t).abs()).sum::<f64>();
    }
    Ok(sum / (k * model.n) as f64)
}

fn check_sample(model: &PretextModel, s: &Sample) -> Result<()> {
    if s.input.len() != model.n || s.target.len() != model.n {
        return Err(Error::Shape(format!(
            "sample {} has {}/{} values, model expects {}",
            s.p,
            s.input.len(),
            s.target.len(),
            model.n
        )));
    }
    Ok(())
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Analytic gradient of the batch's masked L1 loss, with the loss itself.
pub fn gradient(model: &PretextModel, batch: &Batch) -> Result<(f64, Gradients)> {
    let masked: Vec<&Sample> = batch.samples.iter().filter(|s| s.masked).collect();
    if masked.is_empty() {
        return Ok((0.0, Gradients::zeros_like(model)));
    }
    for s in &masked {
        check_sample(model, s)?;
    }
    let scale = 1.0 / (masked.len() * model.n) as f64;
    let partials: Vec<(f64, Gradients)> = masked
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = Gradients::zeros_like(model);
            let mut loss = 0.0;
            for s in chunk {
                loss += accumulate(model, s, scale, &mut g);
            }
            (loss, g)
        })
        .collect();
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        total.add_assign(g);
    }
    Ok((loss * scale, total))
}

/// Add one sample's gradient contribution; returns its summed |residual|.
fn accumulate(model: &PretextModel, s: &Sample, scale: f64, g: &mut Gradients) -> f64 {
    let (n, m) = (model.n, model.m);
    let t = model.trace(&s.input);
    let mut abs_sum = 0.0;
    let mut grad_hidden = vec![0.0; m];
    for v in 0..n {
        let r = t.out[v] - s.target[v];
        abs_sum += r.abs();
        let go = sign(r) * scale;
        if go == 0.0 {
            continue;
        }
        g.b2[v] += go;
        let row = v * m;
        for j in 0..m {
            g.w2[row + j] += go * t.hidden[j];
            grad_hidden[j] += go * model.w2[row + j];
        }
    }
    for j in 0..m {
        if t.pre[j] <= 0.0 {
            continue;
        }
        let gz = grad_hidden[j];
        g.b1[j] += gz;
        let row = j * n;
        for (w, &x) in g.w1[row..row + n].iter_mut().zip(&s.input) {
            *w += gz * x;
        }
    }
    abs_sum
}
