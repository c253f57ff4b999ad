//! Static SVG bar charts.

use std::fmt::Write as _;

use fgmask::pretext::SweepRow;
use fgmask::Histogram;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, y0, x1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{MARGIN}" x2="{x0}" y2="{y0}" stroke="black"/>"#);
    s
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let x = WIDTH - MARGIN - 110.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, escape(name));
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Foreground and background intensity distributions as overlaid bars.
pub fn histogram_chart(title: &str, fg: &Histogram, bg: &Histogram, lambda: Option<f64>) -> String {
    let mut s = open(title);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let (pf, pb) = (fg.probabilities(), bg.probabilities());
    let top = pf.iter().chain(&pb).cloned().filter(|p| p.is_finite()).fold(0.0f64, f64::max).max(1e-12);
    let bar_w = plot_w / fg.bin_count() as f64;
    for (series, probs) in [&pb, &pf].into_iter().enumerate() {
        let colour = PALETTE[1 - series];
        for (i, p) in probs.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                continue;
            }
            let h = plot_h * p / top;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{colour}" fill-opacity="0.55"/>"#,
                MARGIN + bar_w * i as f64,
                HEIGHT - MARGIN - h,
                bar_w,
                h
            );
        }
    }
    if let Some(l) = lambda {
        let x = MARGIN + plot_w * (l - fg.lo) / (fg.hi - fg.lo);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{}" stroke="black" stroke-dasharray="4 3"/>"#, HEIGHT - MARGIN);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}">λ = {l:.3}</text>"#, x + 4.0, MARGIN + 12.0);
    }
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}">{}</text>"#, HEIGHT - MARGIN + 16.0, fg.lo);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 16.0, fg.hi);
    legend(&mut s, &["foreground", "background"]);
    s.push_str("</svg>\n");
    s
}

/// Final loss per ratio, one bar per strategy.
pub fn sweep_chart(rows: &[SweepRow]) -> String {
    let mut s = open("Masked reconstruction loss by strategy and ratio");
    let mut ratios: Vec<f64> = Vec::new();
    let mut strategies = Vec::new();
    for r in rows {
        if !ratios.contains(&r.ratio) {
            ratios.push(r.ratio);
        }
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    let top = rows.iter().map(|r| r.final_loss).filter(|l| l.is_finite()).fold(0.0f64, f64::max).max(1e-12);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let group_w = plot_w / ratios.len().max(1) as f64;
    let bar_w = group_w * 0.8 / strategies.len().max(1) as f64;
    for (gi, ratio) in ratios.iter().enumerate() {
        let gx = MARGIN + group_w * gi as f64 + group_w * 0.1;
        for (si, strategy) in strategies.iter().enumerate() {
            let Some(row) = rows.iter().find(|r| r.ratio == *ratio && r.strategy == *strategy) else {
                continue;
            };
            if !row.final_loss.is_finite() {
                continue;
            }
            let h = plot_h * row.final_loss / top;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{}"/>"#,
                gx + bar_w * si as f64,
                HEIGHT - MARGIN - h,
                PALETTE[si % PALETTE.len()]
            );
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{ratio}</text>"#, gx + group_w * 0.4, HEIGHT - MARGIN + 16.0);
    }
    let names: Vec<&str> = strategies.iter().map(|s| s.as_str()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}
