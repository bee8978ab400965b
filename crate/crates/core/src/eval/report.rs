use std::fmt::Write;

use super::ablation::AblationMatrix;
use super::metrics::{BucketMode, BucketReport, ScoreReport};
use crate::corpus::csv_field;

pub fn score_csv(score: &ScoreReport) -> String {
    let mut out = String::from("relation,precision,recall,f1,support\n");
    let _ = writeln!(
        out,
        "micro,{:.6},{:.6},{:.6},{}",
        score.precision,
        score.recall,
        score.micro_f1,
        score.counts.totals().support()
    );
    let _ = writeln!(out, "macro,,,{:.6},", score.macro_f1);
    for r in &score.per_relation {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{}",
            csv_field(r.relation.id()),
            r.precision,
            r.recall,
            r.f1,
            r.support
        );
    }
    out
}

/// One named set of bucket results, drawn as one bar per bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct BarSeries {
    pub name: String,
    pub buckets: Vec<BucketReport>,
}

fn mode_name(mode: BucketMode) -> &'static str {
    match mode {
        BucketMode::Top => "top",
        BucketMode::Tail => "tail",
    }
}

pub fn bucket_csv(series: &[BarSeries]) -> String {
    let mut out = String::from("series,mode,ratio,members,excluded,macro_f1\n");
    for s in series {
        for b in &s.buckets {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6}",
                csv_field(&s.name),
                mode_name(b.mode),
                b.ratio,
                b.members.len(),
                b.excluded.len(),
                b.macro_f1
            );
        }
    }
    out
}

pub fn ablation_csv(matrix: &AblationMatrix) -> String {
    let mut out = String::from("marker,prompt,metric,mean,std\n");
    for (cell, report) in &matrix.cells {
        for (metric, ms) in &report.aggregate {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                cell.marker, cell.prompt, metric, ms.mean, ms.std
            );
        }
    }
    out
}

const PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Horizontal grouped bars of bucket macro-F1: the top-relation buckets in
/// the upper panel, the tail buckets in the lower one, one bar per series.
pub fn bucket_svg(series: &[BarSeries]) -> String {
    const WIDTH: f64 = 640.0;
    const LEFT: f64 = 90.0;
    const RIGHT: f64 = 60.0;
    const BAR: f64 = 14.0;
    const GAP: f64 = 10.0;
    const TITLE: f64 = 28.0;
    let plot = WIDTH - LEFT - RIGHT;

    let panel_ratios = |mode: BucketMode| {
        let mut ratios: Vec<f64> = series
            .iter()
            .flat_map(|s| s.buckets.iter())
            .filter(|b| b.mode == mode)
            .map(|b| b.ratio)
            .collect();
        ratios.sort_by(f64::total_cmp);
        ratios.dedup();
        ratios
    };
    let group_h = BAR * series.len().max(1) as f64 + GAP;
    let panels = [BucketMode::Top, BucketMode::Tail].map(|m| (m, panel_ratios(m)));
    let legend_h = 20.0 * series.len() as f64 + 10.0;
    let height: f64 = panels
        .iter()
        .map(|(_, r)| TITLE + group_h * r.len() as f64 + 20.0)
        .sum::<f64>()
        + legend_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let mut y = 0.0;
    for (mode, ratios) in &panels {
        let title = match mode {
            BucketMode::Top => "Top relations in train (macro-F1)",
            BucketMode::Tail => "Tail relations in train (macro-F1)",
        };
        let _ = writeln!(
            svg,
            r#"<text x="{LEFT}" y="{}" font-weight="bold">{title}</text>"#,
            y + 18.0
        );
        y += TITLE;
        let panel_top = y;
        for &ratio in ratios {
            let label = format!("{} {}%", mode_name(*mode), (ratio * 100.0).round());
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{label}</text>"#,
                LEFT - 6.0,
                y + group_h / 2.0
            );
            for (si, s) in series.iter().enumerate() {
                let by = y + si as f64 * BAR;
                if let Some(b) = s
                    .buckets
                    .iter()
                    .find(|b| b.mode == *mode && b.ratio == ratio)
                {
                    let w = plot * b.macro_f1.clamp(0.0, 1.0);
                    let color = PALETTE[si % PALETTE.len()];
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{LEFT}" y="{by}" width="{w:.2}" height="{}" fill="{color}"/>"#,
                        BAR - 2.0
                    );
                    let _ = writeln!(
                        svg,
                        r#"<text x="{:.2}" y="{}">{:.3}</text>"#,
                        LEFT + w + 4.0,
                        by + BAR - 4.0,
                        b.macro_f1
                    );
                }
            }
            y += group_h;
        }
        let _ = writeln!(
            svg,
            r#"<line x1="{LEFT}" y1="{panel_top}" x2="{LEFT}" y2="{y}" stroke="black"/>"#
        );
        y += 20.0;
    }
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let ly = y + 20.0 * si as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{ly}" width="12" height="12" fill="{color}"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            LEFT + 18.0,
            ly + 11.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
