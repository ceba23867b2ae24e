use std::fmt::Write as _;
use std::io::Write;

use super::OrdinationScores;
use crate::error::{GllvmError, Result};

/// CSV with columns site, dim1, dim2, ...
pub fn write_scores_csv<W: Write>(scores: &OrdinationScores, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["site".to_string()];
    header.extend((1..=scores.dim()).map(|k| format!("dim{k}")));
    w.write_record(&header)?;
    for (name, row) in scores.site_names.iter().zip(scores.coords.rows()) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter of the first two dimensions (or dimension 1 against zero) as a
/// standalone SVG document, optionally coloured by site group.
pub fn scores_svg(scores: &OrdinationScores, groups: Option<&[String]>, title: &str) -> Result<String> {
    let n = scores.coords.nrows();
    if let Some(g) = groups {
        if g.len() != n {
            return Err(GllvmError::Dimension("one group label per site is required".into()));
        }
    }
    let (size, margin) = (480.0, 50.0);
    let xs: Vec<f64> = scores.coords.column(0).to_vec();
    let ys: Vec<f64> = if scores.dim() > 1 { scores.coords.column(1).to_vec() } else { vec![0.0; n] };
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) }
    };
    let ((x0, x1), (y0, y1)) = (range(&xs), range(&ys));
    let px = |v: f64| margin + (v - x0) / (x1 - x0) * (size - 2.0 * margin);
    let py = |v: f64| size - margin - (v - y0) / (y1 - y0) * (size - 2.0 * margin);

    let mut levels: Vec<&str> = Vec::new();
    if let Some(g) = groups {
        for s in g {
            if !levels.contains(&s.as_str()) {
                levels.push(s);
            }
        }
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, size / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{margin}" y="{margin}" width="{w}" height="{w}" fill="none" stroke="black"/>"#,
        w = size - 2.0 * margin
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">dim1</text>"#, size / 2.0, size - 15.0);
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{c}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {c})">dim2</text>"#,
        c = size / 2.0
    );
    for i in 0..n {
        let colour = match groups {
            Some(g) => PALETTE[levels.iter().position(|l| *l == g[i]).unwrap_or(0) % PALETTE.len()],
            None => PALETTE[0],
        };
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{colour}"><title>{}</title></circle>"#,
            px(xs[i]),
            py(ys[i]),
            escape(&scores.site_names[i])
        );
    }
    for (k, level) in levels.iter().enumerate() {
        let y = margin + 14.0 * k as f64 + 10.0;
        let _ = writeln!(
            svg,
            r#"<circle cx="{x}" cy="{y}" r="4" fill="{}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            PALETTE[k % PALETTE.len()],
            size - margin - 60.0 + 8.0,
            y + 4.0,
            escape(level),
            x = size - margin - 60.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
