//! Minimal line plots as standalone SVG.

use std::fmt::Write;

use crate::Real;

const W: Real = 640.0;
const H: Real = 320.0;
const PAD: Real = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// One polyline per series against the step index. NaN samples break the line.
pub fn svg(title: &str, series: &[(String, Vec<Real>)]) -> String {
    let finite = series.iter().flat_map(|s| s.1.iter()).copied().filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((Real::INFINITY, Real::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let len = series.iter().map(|s| s.1.len()).max().unwrap_or(0);
    let sx = |k: usize| PAD + (W - 2.0 * PAD) * k as Real / (len.max(2) - 1) as Real;
    let sy = |v: Real| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{title}</text>"#, W / 2.0, PAD - 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{hi:.4}</text>"#, PAD - 4.0, PAD + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{lo:.4}</text>"#, PAD - 4.0, H - PAD);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">k = {}</text>"#, W - PAD, H - PAD + 16.0, len.saturating_sub(1));
    for (i, (name, vals)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut segments: Vec<Vec<String>> = vec![Vec::new()];
        for (k, v) in vals.iter().enumerate() {
            if v.is_finite() {
                segments.last_mut().unwrap().push(format!("{:.2},{:.2}", sx(k), sy(*v)));
            } else if !segments.last().unwrap().is_empty() {
                segments.push(Vec::new());
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, seg.join(" "));
        }
        let ly = PAD + 14.0 * (i as Real + 1.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{name}</text>"#, W - PAD + 6.0);
    }
    s.push_str("</svg>\n");
    s
}
