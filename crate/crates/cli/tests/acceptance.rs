//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fgmask::masking::{apply_mask, masked_indices};
use fgmask::nifti::{decode_nifti, encode_nifti, read_nifti, write_nifti};
use fgmask::partition::{extract_all, reassemble};
use fgmask::phantom::{Ellipsoid, Organ, PhantomFamily};
use fgmask::pretext::{
    gradient, masked_l1_loss, reconstruct, strategy_sweep, sweep_csv, train, Batch, PretextModel, TrainConfig,
};
use fgmask::rng::SeededRng;
use fgmask::roi::{analyze_regions, calibrate_threshold, region_histograms, subvolume_entropies};
use fgmask::roi::{CalibrationOptions, RegionSelector, CALIBRATION_BINS};
use fgmask::volume::voxel_count;
use fgmask::{
    build_mask_plan, generate_phantom, plan_grid, IntensityUnit, MaskConfig, MaskStrategy, PhantomSpec, Shape3,
    Volume3D,
};
use serde_json::Value;

/// Runtime ceilings.
const PARTITION_BUDGET: Duration = Duration::from_secs(10);
const CALIBRATION_BUDGET: Duration = Duration::from_secs(30);
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);

/// Finite-difference step and relative tolerance for the gradient check.
const FD_STEP: f64 = 1e-4;
const FD_REL_TOL: f64 = 1e-4;
const FD_MIN_ANALYTIC: f64 = 1e-6;

const LAMBDA_RANGE: (f64, f64) = (0.05, 0.2);
const LOSS_RATIO_CEILING: f64 = 0.5;
const ENTROPY_GAP_FACTOR: f64 = 5.0;
const SEPARATION_MIN_WINS: usize = 28;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
type Corruption = (&'static str, Box<dyn Fn(&mut Vec<u8>)>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn phantom_of(spec: &PhantomSpec) -> Volume3D {
    generate_phantom(spec).expect("phantom").0
}

fn random_volume(shape: Shape3, rng: &mut SeededRng) -> Volume3D {
    let vox = (0..voxel_count(shape)).map(|_| rng.unit_f64() as f32).collect();
    Volume3D::from_voxels(shape, vox, IntensityUnit::Normalized).unwrap()
}

fn c1_partition_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededRng::new(1);
    for case in 0..200 {
        let mut sub = [0; 3];
        let mut shape = [0; 3];
        for a in 0..3 {
            sub[a] = 1 + rng.below(16) as usize;
            shape[a] = sub[a] * (1 + rng.below((64 / sub[a]) as u64) as usize);
        }
        let v = random_volume(shape, &mut rng);
        let g = plan_grid(shape, sub).map_err(e)?;
        let back = reassemble(&g, &extract_all(&v, &g).map_err(e)?, IntensityUnit::Normalized).map_err(e)?;
        let same = back.voxels().iter().zip(v.voxels()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("case {case}: shape {shape:?} sub {sub:?} differs"))?;
    }
    let t = start.elapsed();
    ensure(t < PARTITION_BUDGET, || format!("took {t:?}"))?;
    Ok(format!("200 random grids bit-exact in {:.2}s", t.as_secs_f64()))
}

/// Mean of block `(i, j, k)` walked voxel by voxel in global coordinates.
fn brute_mean(v: &Volume3D, sub: Shape3, [i, j, k]: [usize; 3]) -> f64 {
    let mut sum = 0.0f64;
    for z in k * sub[2]..(k + 1) * sub[2] {
        for y in j * sub[1]..(j + 1) * sub[1] {
            for x in i * sub[0]..(i + 1) * sub[0] {
                sum += v.get(x, y, z) as f64;
            }
        }
    }
    sum / voxel_count(sub) as f64
}

fn c2_oracle_equivalence() -> Outcome {
    let sub = [8, 8, 8];
    let mut total_fg = 0;
    for seed in 0..50 {
        let v = phantom_of(&PhantomFamily::abdomen().sample([32, 32, 32], seed));
        let cfg = MaskConfig { sub, lambda: 0.1, ratio: 1.0, strategy: MaskStrategy::ForegroundHU, seed };
        let plan = build_mask_plan(&v, &cfg).map_err(e)?;
        let mut expected = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    if brute_mean(&v, sub, [i, j, k]) >= 0.1 {
                        expected.push((i * 4 + j) * 4 + k);
                    }
                }
            }
        }
        let got = masked_indices(&plan);
        ensure(got == expected, || format!("seed {seed}: masked {got:?} vs brute force {expected:?}"))?;
        total_fg += expected.len();
    }
    Ok(format!("50 phantoms, {total_fg} foreground subvolumes, exact set equality"))
}

fn c3_ratio_law() -> Outcome {
    let mut checked = 0;
    for tenths in [5usize, 6, 7, 8] {
        let ratio = tenths as f64 / 10.0;
        for seed in 0..20 {
            let v = phantom_of(&PhantomFamily::abdomen().sample([32, 32, 32], 100 + seed));
            let cfg = MaskConfig { sub: [8, 8, 8], lambda: 0.1, ratio, strategy: MaskStrategy::ForegroundHU, seed };
            let plan = build_mask_plan(&v, &cfg).map_err(e)?;
            let fg = plan.foreground_indices();
            // round(tenths * n / 10) with halves up, in integers.
            let expected = (2 * tenths * fg.len() + 10) / 20;
            let masked = masked_indices(&plan);
            ensure(masked.len() == expected, || {
                format!("ratio {ratio} seed {seed}: {} masked, expected {expected} of {}", masked.len(), fg.len())
            })?;
            ensure(masked.iter().all(|p| fg.contains(p)), || format!("ratio {ratio} seed {seed}: masked outside foreground"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} plans obey |M| = round(r|F|) and M within F"))
}

fn fgmask_bin() -> &'static str {
    env!("CARGO_BIN_EXE_fgmask")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(fgmask_bin()).args(args).output().map_err(e)?;
    ensure(out.status.success(), || {
        format!("fgmask {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn c4_default_manifest() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let ph = dir.path().join("phantom");
    let out = dir.path().join("mask");
    run_cli(&["phantom", "--shape", "96,96,96", "--out", ph.to_str().unwrap()])?;
    let input = ph.join("phantom.nii.gz");
    run_cli(&["mask", input.to_str().unwrap(), "--out", out.to_str().unwrap()])?;

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).map_err(e)?).map_err(e)?;
    let golden: Value = serde_json::from_str(include_str!("golden/mask_defaults.json")).map_err(e)?;
    for key in ["tool", "subcommand", "parameters", "summary"] {
        ensure(manifest[key] == golden[key], || {
            format!("manifest {key} = {} but golden has {}", manifest[key], golden[key])
        })?;
    }
    let names: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    ensure(names == ["masked.nii.gz", "plan.json"], || format!("outputs {names:?}"))?;
    for o in manifest["outputs"].as_array().unwrap() {
        let path = out.join(o["path"].as_str().unwrap());
        ensure(sha256(&path)? == o["sha256"].as_str().unwrap(), || format!("digest mismatch for {}", path.display()))?;
    }
    ensure(sha256(&input)? == manifest["inputs"][0]["sha256"].as_str().unwrap_or(""), || "input digest mismatch".into())?;
    Ok(format!(
        "lambda {} ratio {} sub {} on 96^3 gives P = {}",
        manifest["parameters"]["lambda"], manifest["parameters"]["ratio"], manifest["parameters"]["sub"], manifest["summary"]["subvolumes"]
    ))
}

fn sha256(path: &Path) -> Result<String, String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(e)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn c5_information_gap() -> Outcome {
    let mut min_ratio = f64::INFINITY;
    for seed in 0..30 {
        let spec = PhantomFamily::abdomen().sample([48, 48, 48], 500 + seed);
        let (v, labels) = generate_phantom(&spec).map_err(e)?;
        let [fg, bg] = analyze_regions(&v, RegionSelector::Labels(&labels)).map_err(e)?;
        let get = |x: Option<f64>, what: &str| x.ok_or_else(|| format!("seed {seed}: {what} undefined"));
        let (fh, bh) = (get(fg.entropy, "fg entropy")?, get(bg.entropy, "bg entropy")?);
        let (fc, bc) = (get(fg.complexity, "fg complexity")?, get(bg.complexity, "bg complexity")?);
        let (fm, bm) = (get(fg.mutual_information, "fg MI")?, get(bg.mutual_information, "bg MI")?);
        ensure(fh > bh && fc > bc && fm > bm, || {
            format!("seed {seed}: H {fh}/{bh} C {fc}/{bc} MI {fm}/{bm}")
        })?;
        ensure(fh >= ENTROPY_GAP_FACTOR * bh, || format!("seed {seed}: entropy {fh} < 5 x {bh}"))?;
        if bh > 0.0 {
            min_ratio = min_ratio.min(fh / bh);
        }
    }
    let ratio = if min_ratio.is_finite() { format!("min ratio {min_ratio:.1}") } else { "background entropy 0".into() };
    Ok(format!("30 phantoms ordered on H, C, MI; {ratio}"))
}

fn c6_calibration() -> Outcome {
    let start = Instant::now();
    let opts = CalibrationOptions::default();
    let mut lambdas = Vec::new();
    let mut pooled: Option<(fgmask::Histogram, fgmask::Histogram)> = None;
    for seed in 0..40 {
        let spec = PhantomFamily::noisy_background().sample([48, 48, 48], 900 + seed);
        let (v, labels) = generate_phantom(&spec).map_err(e)?;
        let (fg, bg) = region_histograms(&v, &labels, CALIBRATION_BINS).map_err(e)?;
        let est = calibrate_threshold(&fg, &bg, &opts).map_err(|err| format!("seed {seed}: {err}"))?;
        lambdas.push(est.lambda_hat);
        match &mut pooled {
            Some((pf, pb)) => {
                pf.merge(&fg).map_err(e)?;
                pb.merge(&bg).map_err(e)?;
            }
            None => pooled = Some((fg, bg)),
        }
    }
    let (pf, pb) = pooled.unwrap();
    let pooled_lambda = calibrate_threshold(&pf, &pb, &opts).map_err(e)?.lambda_hat;
    let (lo, hi) = LAMBDA_RANGE;
    for (seed, l) in lambdas.iter().enumerate() {
        ensure((lo..=hi).contains(l), || format!("phantom {seed}: lambda_hat {l}"))?;
    }
    ensure((lo..=hi).contains(&pooled_lambda), || format!("pooled lambda_hat {pooled_lambda}"))?;
    let t = start.elapsed();
    ensure(t < CALIBRATION_BUDGET, || format!("took {t:?}"))?;
    let min = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = lambdas.iter().cloned().fold(0.0, f64::max);
    Ok(format!("per-volume lambda_hat in [{min:.3}, {max:.3}], pooled {pooled_lambda:.3}, {:.2}s", t.as_secs_f64()))
}

fn tiny_phantom(seed: u64) -> Volume3D {
    let spec = PhantomSpec {
        shape: [8, 8, 8],
        spacing: [1.0; 3],
        background_level: 0.0,
        background_sigma: 0.0,
        organs: vec![Organ { shape: Ellipsoid { center: [3.5; 3], radii: [3.0, 2.5, 3.0] }, mean: 0.6, sigma: 0.08 }],
        air_pockets: vec![],
        seed,
    };
    phantom_of(&spec)
}

fn c7_gradient_check() -> Outcome {
    let start = Instant::now();
    let mut compared = 0usize;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let target = tiny_phantom(seed);
        let cfg = MaskConfig { sub: [2, 2, 2], lambda: 0.1, ratio: 0.6, strategy: MaskStrategy::ForegroundHU, seed };
        let plan = build_mask_plan(&target, &cfg).map_err(e)?;
        let input = apply_mask(&target, &plan, 0.25).map_err(e)?;
        let model = PretextModel::init(8, 4, 7000 + seed).map_err(e)?;
        let batch = Batch::from_volumes(&input, &target, &plan).map_err(e)?;
        let (_, g) = gradient(&model, &batch).map_err(e)?;
        let loss_at = |m: &PretextModel| -> Result<f64, String> {
            masked_l1_loss(&target, &reconstruct(m, &input, &plan.grid).map_err(e)?, &plan).map_err(e)
        };
        for i in 0..model.param_count() {
            let a = g.flat(i);
            if a.abs() <= FD_MIN_ANALYTIC {
                continue;
            }
            let mut plus = model.clone();
            plus.set_param(i, model.param(i) + FD_STEP);
            let mut minus = model.clone();
            minus.set_param(i, model.param(i) - FD_STEP);
            let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * FD_STEP);
            let rel = (a - fd).abs() / a.abs().max(fd.abs());
            ensure(rel <= FD_REL_TOL, || format!("seed {seed} param {i}: analytic {a} vs fd {fd} (rel {rel:.2e})"))?;
            worst = worst.max(rel);
            compared += 1;
        }
    }
    let t = start.elapsed();
    ensure(t < GRADIENT_BUDGET, || format!("took {t:?}"))?;
    Ok(format!("{compared} coordinates over 20 seeds, worst rel err {worst:.1e}, {:.2}s", t.as_secs_f64()))
}

fn c8_loss_restriction() -> Outcome {
    for seed in 0..20 {
        let target = phantom_of(&PhantomSpec { seed, ..PhantomSpec::standard([32, 32, 32]) });
        let cfg = MaskConfig { sub: [8, 8, 8], lambda: 0.1, ratio: 0.6, strategy: MaskStrategy::ForegroundHU, seed };
        let plan = build_mask_plan(&target, &cfg).map_err(e)?;
        let model = PretextModel::init(512, 16, seed).map_err(e)?;
        let input = apply_mask(&target, &plan, 0.0).map_err(e)?;
        let recon = reconstruct(&model, &input, &plan.grid).map_err(e)?;
        let before = masked_l1_loss(&target, &recon, &plan).map_err(e)?;

        let mut rng = SeededRng::new(10_000 + seed);
        let mut vox = target.voxels().to_vec();
        let mut mutated = 0;
        while mutated < 1000 {
            let (x, y, z) = (rng.below(32) as usize, rng.below(32) as usize, rng.below(32) as usize);
            let p = plan.grid.flat([x / 8, y / 8, z / 8]);
            if plan.entries[p].is_masked {
                continue;
            }
            vox[x + 32 * (y + 32 * z)] = rng.unit_f64() as f32;
            mutated += 1;
        }
        let changed = target.with_voxels(vox, IntensityUnit::Normalized).map_err(e)?;
        let after = masked_l1_loss(&changed, &recon, &plan).map_err(e)?;
        ensure(before.to_bits() == after.to_bits(), || format!("seed {seed}: {before} -> {after}"))?;
    }
    Ok("1000 unmasked voxels mutated per seed, loss bit-identical over 20 seeds".into())
}

fn c9_learning_signal() -> Outcome {
    let v = [phantom_of(&PhantomSpec::standard([32, 32, 32]))];
    let cfg = TrainConfig::default();
    let a = train(&v, &cfg).map_err(e)?;
    let b = train(&v, &cfg).map_err(e)?;
    ensure(cfg.epochs == 50, || format!("default epochs {}", cfg.epochs))?;
    let ratio = a.final_loss / a.initial_loss;
    ensure(ratio <= LOSS_RATIO_CEILING, || format!("loss {} -> {} (ratio {ratio:.3})", a.initial_loss, a.final_loss))?;
    let bits = |h: &[f64]| h.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(bits(&a.model.loss_history) == bits(&b.model.loss_history), || "reruns diverge".into())?;
    ensure(a.history_csv() == b.history_csv(), || "history CSVs differ".into())?;
    Ok(format!("loss {:.4} -> {:.4} (ratio {ratio:.3}), reruns byte-identical", a.initial_loss, a.final_loss))
}

fn c10_strategy_separation() -> Outcome {
    let sub = [8, 8, 8];
    let mut wins = 0;
    let mut worst_cover = 0.0f64;
    for seed in 0..30u64 {
        let v = phantom_of(&PhantomFamily::sparse().sample([64, 64, 64], 2000 + seed));
        let grid = plan_grid(v.shape(), sub).map_err(e)?;
        let entropies = subvolume_entropies(&v, &grid).map_err(e)?;
        let plan_for = |strategy| build_mask_plan(&v, &MaskConfig { sub, lambda: 0.1, ratio: 0.6, strategy, seed });
        let mean_entropy = |plan: &fgmask::MaskPlan| {
            let m = masked_indices(plan);
            m.iter().map(|&p| entropies[p]).sum::<f64>() / m.len() as f64
        };
        let ours = match plan_for(MaskStrategy::ForegroundHU) {
            Ok(plan) => plan,
            Err(err) => {
                println!("    seed {seed}: {err}");
                continue;
            }
        };
        let cover = ours.foreground_indices().len() as f64 / ours.entries.len() as f64;
        ensure(cover < 0.4, || format!("seed {seed}: organs cover {cover:.2} of subvolumes"))?;
        worst_cover = worst_cover.max(cover);
        let random = plan_for(MaskStrategy::Random).map_err(e)?;
        if mean_entropy(&ours) > mean_entropy(&random) {
            wins += 1;
        }
    }
    ensure(wins >= SEPARATION_MIN_WINS, || format!("foreground masking wins {wins}/30"))?;
    Ok(format!("foreground masking wins {wins}/30 (max organ cover {worst_cover:.2})"))
}

fn c11_nifti_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let v = phantom_of(&PhantomSpec { seed: 3, ..PhantomSpec::standard([24, 20, 16]) });
    let hu = fgmask::intensity::denormalize(&v, &fgmask::WindowSpec::default()).map_err(e)?;
    for (name, gz) in [("a.nii", false), ("a.nii.gz", true)] {
        let p1 = dir.path().join(format!("1_{name}"));
        let p2 = dir.path().join(format!("2_{name}"));
        write_nifti(&hu, &p1, gz).map_err(e)?;
        let first = read_nifti(&p1).map_err(e)?;
        write_nifti(&first, &p2, gz).map_err(e)?;
        let second = read_nifti(&p2).map_err(e)?;
        let bits = |v: &Volume3D| v.voxels().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&first) == bits(&hu) && bits(&second) == bits(&first), || format!("{name}: voxels differ"))?;
        ensure(first.shape() == hu.shape(), || format!("{name}: shape differs"))?;
    }

    let good = encode_nifti(&hu).map_err(e)?;
    let mut rejected = 0;
    let corruptions: [Corruption; 5] = [
        ("sizeof_hdr", Box::new(|b: &mut Vec<u8>| b[0] = 0x11)),
        ("magic", Box::new(|b: &mut Vec<u8>| b[344] = b'x')),
        ("datatype", Box::new(|b: &mut Vec<u8>| b[70..72].copy_from_slice(&1234i16.to_le_bytes()))),
        ("truncated payload", Box::new(|b: &mut Vec<u8>| b.truncate(b.len() - 3))),
        ("short header", Box::new(|b: &mut Vec<u8>| b.truncate(200))),
    ];
    for (what, corrupt) in &corruptions {
        let mut bad = good.clone();
        corrupt(&mut bad);
        ensure(decode_nifti(&bad).is_err(), || format!("corrupted {what} was accepted"))?;
        rejected += 1;
    }
    Ok(format!(".nii and .nii.gz bit-exact; {rejected} corrupted headers rejected"))
}

fn c12_stated_limits() -> Outcome {
    let v = [phantom_of(&PhantomSpec::standard([32, 32, 32]))];
    let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
    let rows = strategy_sweep(&v, &MaskStrategy::ALL, &[0.5, 0.6, 0.7, 0.8], &cfg);
    let csv = sweep_csv(&rows);
    ensure(csv.lines().count() == 13, || format!("sweep CSV has {} lines", csv.lines().count()))?;
    ensure(rows.iter().all(|r| r.final_loss.is_finite()), || "a sweep cell failed".into())?;
    Ok("downstream segmentation Dice is not reproduced at this scale; 12-cell reconstruction-loss sweep stands in".into())
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("partition identity", c1_partition_identity),
        ("foreground set equals brute force", c2_oracle_equivalence),
        ("ratio law", c3_ratio_law),
        ("default manifest", c4_default_manifest),
        ("information gap ordering", c5_information_gap),
        ("threshold calibration", c6_calibration),
        ("gradient check", c7_gradient_check),
        ("loss restriction", c8_loss_restriction),
        ("pretext learning signal", c9_learning_signal),
        ("strategy separation", c10_strategy_separation),
        ("NIfTI round trip", c11_nifti_round_trip),
        ("stated non-reproducible results", c12_stated_limits),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
