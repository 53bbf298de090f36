//! Learning-curve figures as standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::failure::Failure;

pub const REQUIRED_COLUMNS: [&str; 4] = ["episode", "global_reward", "AVE", "STA"];

/// Figure file, curve column and axis label.
pub const FIGURES: [(&str, &str, &str); 3] = [
    ("reward.svg", "global_reward", "global reward"),
    ("waiting.svg", "AVE", "average waiting time (s)"),
    ("stability.svg", "STA", "waiting-time variance"),
];

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 50.0); // left, right, top, bottom

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub episode: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Curve {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Label for a curve file: its stem, or the parent directory when the stem is `curve`.
pub fn label_for(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "curve" {
        if let Some(parent) = path.parent().and_then(|p| p.file_name()) {
            return parent.to_string_lossy().into_owned();
        }
    }
    stem
}

pub fn read_curve(path: &Path) -> Result<Curve, Failure> {
    let ctx = |m: String| Failure::data(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| ctx(e.to_string()))?;
    let headers: Vec<String> = reader.headers().map_err(|e| ctx(e.to_string()))?.iter().map(str::to_owned).collect();
    let missing: Vec<&str> = REQUIRED_COLUMNS.iter().copied().filter(|c| !headers.iter().any(|h| h == c)).collect();
    if !missing.is_empty() {
        return Err(ctx(format!("missing columns: {}", missing.join(", "))));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ctx(e.to_string()))?;
        for (c, field) in rec.iter().enumerate() {
            let v = field.trim().parse::<f64>().map_err(|_| ctx(format!("row {}, column `{}`: `{field}` is not a number", r + 1, headers[c])))?;
            cols[c].push(v);
        }
    }
    if cols[0].is_empty() {
        return Err(ctx("no rows".into()));
    }
    let mut columns: Vec<(String, Vec<f64>)> = headers.into_iter().zip(cols).collect();
    let ep = columns.iter().position(|(n, _)| n == "episode").unwrap_or(0);
    let (_, episode) = columns.remove(ep);
    Ok(Curve { label: label_for(path), episode, columns })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// One line chart of `column` with a series per curve.
pub fn line_chart(curves: &[Curve], column: &str, y_label: &str) -> String {
    let (l, r, t, b) = MARGIN;
    let (x0, x1) = bounds(curves.iter().flat_map(|c| c.episode.iter().copied()));
    let (y0, y1) = bounds(curves.iter().filter_map(|c| c.column(column)).flat_map(|v| v.iter().copied()));
    let sx = |x: f64| l + (x - x0) / (x1 - x0) * (W - l - r);
    let sy = |y: f64| H - b - (y - y0) / (y1 - y0) * (H - t - b);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{l}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - b, W - r, H - b);
    let _ = writeln!(s, r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{}" stroke="black"/>"#, H - b);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(xv), H - b + 16.0, fmt_tick(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, l - 6.0, sy(yv) + 4.0, fmt_tick(yv));
        let _ = writeln!(s, r##"<line x1="{l}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#dddddd"/>"##, sy(yv), W - r);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">episode</text>"#, l + (W - l - r) / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{0:.1}" text-anchor="middle" transform="rotate(-90 14 {0:.1})">{1}</text>"#, t + (H - t - b) / 2.0, escape(y_label));
    for (k, c) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let Some(ys) = c.column(column) else { continue };
        let pts: Vec<String> = c.episode.iter().zip(ys).filter(|(_, y)| y.is_finite()).map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = t + 14.0 + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, W - r - 150.0, W - r - 130.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - r - 125.0, ly + 4.0, escape(&c.label));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(label: &str) -> Curve {
        Curve { label: label.into(), episode: vec![0.0, 1.0, 2.0], columns: vec![("AVE".into(), vec![3.0, 2.0, 1.0])] }
    }

    #[test]
    fn one_polyline_per_series() {
        let svg = line_chart(&[curve("a<b"), curve("c")], "AVE", "waiting");
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn flat_series_does_not_divide_by_zero() {
        let c = Curve { label: "x".into(), episode: vec![1.0], columns: vec![("AVE".into(), vec![2.0])] };
        assert!(!line_chart(&[c], "AVE", "w").contains("NaN"));
    }

    #[test]
    fn label_uses_run_directory_for_default_name() {
        assert_eq!(label_for(Path::new("runs/ours/curve.csv")), "ours");
        assert_eq!(label_for(Path::new("ippo.csv")), "ippo");
    }
}
