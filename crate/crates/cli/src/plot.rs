//! Minimal self-contained SVG output. Coordinates are printed with fixed
//! precision so identical input gives identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;

use cibp::FeatureMatrix;

use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];

#[derive(Debug, Deserialize)]
pub struct AggregateRow {
    pub p: f64,
    pub prior: String,
    pub mean_kplus: f64,
}

pub fn read_aggregate(text: &str) -> Result<Vec<AggregateRow>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: AggregateRow = rec.map_err(|e| CliError::Data(format!("aggregate line {}: {e}", i + 2)))?;
        rows.push(row);
    }
    Ok(rows)
}

fn header(out: &mut String, w: f64, h: f64) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white"/>"#).unwrap();
}

fn nice_max(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&c| c >= v).unwrap()
}

/// Mean `k_plus` against `p`, one polyline per prior, with a dashed
/// reference line at `k_true`.
pub fn growth_svg(rows: &[AggregateRow], k_true: f64) -> String {
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        series.entry(r.prior.as_str()).or_default().push((r.p, r.mean_kplus));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let (mut x_lo, mut x_hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.p), hi.max(r.p)));
    if !x_lo.is_finite() {
        (x_lo, x_hi) = (0.0, 1.0);
    }
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    let y_hi = nice_max(rows.iter().map(|r| r.mean_kplus).fold(k_true, f64::max) * 1.1);
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - y / y_hi * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT);
    axes(&mut out);
    for i in 0..=4 {
        let y = y_hi * i as f64 / 4.0;
        writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#, MARGIN - 6.0, sy(y) + 4.0, trim(y))
            .unwrap();
    }
    let mut ticks: Vec<f64> = rows.iter().map(|r| r.p).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#, sx(x), HEIGHT - MARGIN + 16.0, trim(x))
            .unwrap();
    }
    writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">p</text>"#, WIDTH / 2.0, HEIGHT - 12.0).unwrap();
    writeln!(
        out,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">posterior mean K+</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<line class="reference" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="red" stroke-dasharray="6 4"/>"#,
        MARGIN,
        sy(k_true),
        WIDTH - MARGIN,
        sy(k_true)
    )
    .unwrap();
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        writeln!(
            out,
            r#"<polyline class="series" data-prior="{label}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        )
        .unwrap();
        for &(x, y) in pts {
            writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y)).unwrap();
        }
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{label}</text>"#,
            WIDTH - MARGIN - 60.0,
            MARGIN + 16.0 * i as f64
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn axes(out: &mut String) {
    writeln!(
        out,
        r#"<path class="axes" d="M {m:.2} {t:.2} L {m:.2} {b:.2} L {r:.2} {b:.2}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )
    .unwrap();
}

fn trim(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Black cells for ones on a white grid, rows top to bottom.
pub fn heatmap_svg(m: &FeatureMatrix) -> String {
    const CELL: f64 = 8.0;
    let (rows, cols) = (m.rows(), m.ncols());
    let w = 2.0 * MARGIN + CELL * cols as f64;
    let h = 2.0 * MARGIN + CELL * rows as f64;
    let mut out = String::new();
    header(&mut out, w, h);
    writeln!(
        out,
        r#"<path class="axes" d="M {m:.2} {m:.2} L {m:.2} {b:.2} L {r:.2} {b:.2}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        b = h - MARGIN,
        r = w - MARGIN
    )
    .unwrap();
    for j in 0..rows {
        for k in 0..cols {
            if m.get(j, k) {
                writeln!(
                    out,
                    r#"<rect class="cell" x="{:.2}" y="{:.2}" width="{CELL:.2}" height="{CELL:.2}" fill="black"/>"#,
                    MARGIN + CELL * k as f64,
                    MARGIN + CELL * j as f64
                )
                .unwrap();
            }
        }
    }
    writeln!(out, r#"<text x="{MARGIN:.2}" y="{:.2}" font-size="11">{rows} x {cols}</text>"#, MARGIN - 10.0).unwrap();
    out.push_str("</svg>\n");
    out
}
