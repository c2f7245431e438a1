//! Minimal SVG line charts and histograms.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 300.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn panel(out: &mut String, y0: f64, title: &str, x_label: &str, series: &[Series]) {
    let (x_lo, x_hi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(std::iter::once(0.0)));
    let sx = |x: f64| PAD + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * PAD);
    let sy = |y: f64| y0 + H - PAD + -(y - y_lo) / (y_hi - y_lo) * (H - 2.0 * PAD);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, y0 + 20.0, esc(title));
    let _ = writeln!(
        out,
        r#"<path d="M{a},{b} L{a},{c} L{d},{c}" stroke="black" fill="none"/>"#,
        a = PAD,
        b = y0 + PAD,
        c = y0 + H - PAD,
        d = W - PAD
    );
    for (v, pos) in [(x_lo, sx(x_lo)), (x_hi, sx(x_hi))] {
        let _ = writeln!(out, r#"<text x="{pos:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#, y0 + H - PAD + 14.0, fmt(v));
    }
    for (v, pos) in [(y_lo, sy(y_lo)), (y_hi, sy(y_hi))] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{pos:.1}" font-size="10" text-anchor="end">{}</text>"#, PAD - 4.0, fmt(v));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, W / 2.0, y0 + H - 12.0, esc(x_label));
    for (c, s) in series.iter().enumerate() {
        let color = COLORS[c % COLORS.len()];
        let d: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        if !d.is_empty() {
            let _ = writeln!(out, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="2"/>"#, d.join(" "));
        }
        for &(x, y) in &s.points {
            let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{}</text>"#,
            W - PAD - 120.0,
            y0 + PAD + 14.0 * c as f64,
            esc(&s.name)
        );
    }
}

fn fmt(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Vertically stacked line-chart panels sharing an x label.
pub fn line_charts(x_label: &str, panels: &[(String, Vec<Series>)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{}" font-family="sans-serif">"#,
        H * panels.len().max(1) as f64
    );
    for (i, (title, series)) in panels.iter().enumerate() {
        panel(&mut out, H * i as f64, title, x_label, series);
    }
    out.push_str("</svg>\n");
    out
}

/// Histogram of integer values, one colour per group, bars of width one.
pub fn histogram(title: &str, x_label: &str, groups: &[(String, Vec<u32>)]) -> String {
    let max_v = groups.iter().flat_map(|g| g.1.iter().copied()).max().unwrap_or(0) as usize;
    let mut hist: Vec<Vec<u64>> = groups.iter().map(|_| vec![0u64; max_v + 1]).collect();
    for (g, (_, vals)) in groups.iter().enumerate() {
        for &v in vals {
            hist[g][v as usize] += 1;
        }
    }
    let top = hist.iter().flat_map(|h| h.iter().copied()).max().unwrap_or(1).max(1) as f64;
    let bw = (W - 2.0 * PAD) / (max_v + 1) as f64;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(out, r#"<path d="M{PAD},{PAD} L{PAD},{b} L{r},{b}" stroke="black" fill="none"/>"#, b = H - PAD, r = W - PAD);
    for (g, h) in hist.iter().enumerate() {
        let color = COLORS[g % COLORS.len()];
        for (v, &c) in h.iter().enumerate() {
            if c > 0 {
                let hgt = c as f64 / top * (H - 2.0 * PAD);
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.7"/>"#,
                    PAD + v as f64 * bw,
                    H - PAD - hgt,
                    bw.max(0.5),
                    hgt
                );
            }
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{}</text>"#, W - PAD - 120.0, PAD + 14.0 * g as f64, esc(&groups[g].0));
    }
    let _ = writeln!(out, r#"<text x="{PAD}" y="{:.1}" font-size="10" text-anchor="middle">0</text>"#, H - PAD + 14.0);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{max_v}</text>"#, W - PAD, H - PAD + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(x_label));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_documents() {
        let s = line_charts("n", &[("success".into(), vec![Series { name: "rate".into(), points: vec![(1.0, 0.5), (2.0, 1.0)] }])]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 2);
        let h = histogram("counts", "T", &[("0".into(), vec![1, 1, 2]), ("1".into(), vec![5])]);
        assert_eq!(h.matches("<rect").count(), 3);
    }
}
