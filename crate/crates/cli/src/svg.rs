//! Minimal SVG plots. Layout is fixed so the output is byte-stable.

use std::fmt::Write;

use purrfect_stats::descriptive::BoxStats;

const W: f64 = 720.0;
const H: f64 = 400.0;
const M: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Scale { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        let pad = (hi - lo) * 0.05;
        Scale { lo: lo - pad, hi: hi + pad }
    }

    fn y(&self, v: f64) -> f64 {
        H - M - (v - self.lo) / (self.hi - self.lo) * (H - 2.0 * M)
    }
}

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title)).unwrap();
    writeln!(s, r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - M, W - M, H - M).unwrap();
    writeln!(s, r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#, H - M).unwrap();
    s
}

fn y_ticks(s: &mut String, scale: &Scale) {
    for i in 0..=4 {
        let v = scale.lo + (scale.hi - scale.lo) * i as f64 / 4.0;
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, M - 4.0, scale.y(v) + 4.0).unwrap();
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One box per entry; `reference` draws a marker per box (e.g. ground truth).
pub fn box_plot(title: &str, boxes: &[(String, BoxStats)], reference: Option<&[f64]>) -> String {
    let scale = Scale::new(
        boxes.iter().flat_map(|(_, b)| [b.min, b.max]).chain(reference.unwrap_or(&[]).iter().copied()),
    );
    let mut s = header(title);
    y_ticks(&mut s, &scale);
    let step = (W - 2.0 * M) / boxes.len().max(1) as f64;
    for (i, (label, b)) in boxes.iter().enumerate() {
        let cx = M + step * (i as f64 + 0.5);
        let hw = step * 0.3;
        let (y1, yq1, ym, yq3, y9) = (scale.y(b.min), scale.y(b.q1), scale.y(b.median), scale.y(b.q3), scale.y(b.max));
        writeln!(s, r#"<line x1="{cx:.1}" y1="{y1:.1}" x2="{cx:.1}" y2="{y9:.1}" stroke="black"/>"#).unwrap();
        writeln!(
            s,
            r#"<rect x="{:.1}" y="{yq3:.1}" width="{:.1}" height="{:.1}" fill="{}" fill-opacity="0.4" stroke="black"/>"#,
            cx - hw,
            2.0 * hw,
            (yq1 - yq3).max(0.5),
            COLORS[0]
        )
        .unwrap();
        writeln!(s, r#"<line x1="{:.1}" y1="{ym:.1}" x2="{:.1}" y2="{ym:.1}" stroke="black" stroke-width="2"/>"#, cx - hw, cx + hw).unwrap();
        if let Some(r) = reference.and_then(|r| r.get(i)) {
            writeln!(s, r#"<circle cx="{cx:.1}" cy="{:.1}" r="4" fill="{}"/>"#, scale.y(*r), COLORS[1]).unwrap();
        }
        writeln!(s, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, H - M + 15.0, escape(label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Named series of `(x, y)` points sharing both axes.
pub fn line_plot(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let xs = Scale::new(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let ys = Scale::new(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let x = |v: f64| M + (v - xs.lo) / (xs.hi - xs.lo) * (W - 2.0 * M);
    let mut s = header(title);
    y_ticks(&mut s, &ys);
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label)).unwrap();
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(a, b)| format!("{:.1},{:.1}", x(a), ys.y(b))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" ")).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{}</text>"#, W - M - 100.0, M + 14.0 * i as f64, escape(name)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_well_formed() {
        let b = BoxStats::from_sample(&[1.0, 2.0, 3.0]).unwrap();
        let svg = box_plot("a < b", &[("x".into(), b)], Some(&[2.5]));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        let svg = line_plot("t", "trial", &[("g".into(), vec![(1.0, 0.2), (2.0, 0.3)])]);
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn degenerate_ranges_do_not_produce_nan() {
        let svg = line_plot("t", "x", &[("g".into(), vec![(1.0, 0.5)])]);
        assert!(!svg.contains("NaN"));
        assert!(!box_plot("t", &[], None).contains("NaN"));
    }
}
