use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use fgmask::masking::DEFAULT_LAMBDA;
use fgmask::roi::{analyze_regions, RegionReport, RegionSelector};
use rayon::prelude::*;
use serde_json::json;

use super::{file_stem, load_labels, Intensity};
use crate::manifest::Recorder;

/// Reference values reported for foreground and background on abdominal CT,
/// as (metric, foreground, background).
const PUBLISHED: [(&str, f64, f64); 3] = [
    ("mi_bits", 5.64, 0.09),
    ("entropy_bits", 2.73, 0.02),
    ("complexity", 0.35, 0.07),
];

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input volumes.
    #[arg(required = true)]
    pub volumes: Vec<PathBuf>,

    /// Label maps, one per volume; foreground is label > 0.
    #[arg(long, num_args = 1..)]
    pub labels: Vec<PathBuf>,

    /// Without labels, foreground is normalized intensity >= this value.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub threshold: f64,

    #[command(flatten)]
    pub intensity: Intensity,

    /// Also emit the published reference values next to the measured means.
    #[arg(long)]
    pub compare_published: bool,

    #[arg(long)]
    pub out: PathBuf,
}

fn analyze_one(args: &Args, i: usize) -> Result<(String, [RegionReport; 2])> {
    let path = &args.volumes[i];
    let v = args.intensity.load(path)?;
    let reports = match args.labels.get(i) {
        Some(lp) => analyze_regions(&v, RegionSelector::Labels(&load_labels(lp)?))?,
        None => analyze_regions(&v, RegionSelector::Threshold(args.threshold))?,
    };
    Ok((file_stem(path), reports))
}

fn mean_of(rows: &[(String, [RegionReport; 2])], region: usize, metric: &str) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter_map(|(_, r)| {
            let r = &r[region];
            match metric {
                "mi_bits" => r.mutual_information,
                "entropy_bits" => r.entropy,
                _ => r.complexity,
            }
        })
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn run(args: Args) -> Result<ExitCode> {
    if !args.labels.is_empty() && args.labels.len() != args.volumes.len() {
        bail!("{} label maps for {} volumes", args.labels.len(), args.volumes.len());
    }
    let rows = (0..args.volumes.len())
        .into_par_iter()
        .map(|i| analyze_one(&args, i))
        .collect::<Result<Vec<_>>>()?;

    let mut rec = Recorder::new(
        "analyze",
        &args.out,
        json!({
            "window": args.intensity.describe(),
            "selector": if args.labels.is_empty() { json!({ "threshold": args.threshold }) } else { json!("labels") },
            "entropy_bins": fgmask::roi::ENTROPY_BINS,
            "mi_bins": fgmask::roi::MI_BINS,
            "mi_offset": fgmask::roi::MI_OFFSET,
        }),
    )?;
    for p in args.volumes.iter().chain(&args.labels) {
        rec.input(p);
    }

    let mut csv = String::from(RegionReport::CSV_HEADER);
    csv.push('\n');
    for (name, reports) in &rows {
        for r in reports {
            csv.push_str(&r.csv_row(name));
            csv.push('\n');
        }
    }
    std::fs::write(rec.output("regions.csv"), &csv)?;
    print!("{csv}");

    if args.compare_published {
        let mut cmp = String::from("metric,region,measured,published\n");
        println!("\n{:<14}{:<12}{:>12}{:>12}", "metric", "region", "measured", "published");
        for (metric, fg, bg) in PUBLISHED {
            for (region, idx, published) in [("foreground", 0, fg), ("background", 1, bg)] {
                let measured = mean_of(&rows, idx, metric);
                let shown = measured.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into());
                let _ = writeln!(cmp, "{metric},{region},{},{published}", measured.map(|m| format!("{m:.6}")).unwrap_or_default());
                println!("{metric:<14}{region:<12}{shown:>12}{published:>12}");
            }
        }
        std::fs::write(rec.output("published_comparison.csv"), cmp)?;
    }

    rec.summary(json!({ "volumes": rows.len() }));
    rec.finish()?;
    Ok(ExitCode::SUCCESS)
}
