//! Minimal line charts with median ± std bands.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    /// `(x, samples)`; each point is drawn at the sample median.
    pub points: Vec<(f64, Vec<f64>)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    /// Renders the chart; non-finite points (and non-positive ones on a log
    /// axis) are skipped.
    pub fn render(&self) -> String {
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let usable = |v: f64| v.is_finite() && (!self.log_y || v > 0.0);
        let mut bands = Vec::new();
        for s in &self.series {
            let pts: Vec<(f64, f64, f64, f64)> = s
                .points
                .iter()
                .filter_map(|(x, samples)| {
                    let clean: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
                    let (m, sd) = (median(&clean), std_dev(&clean));
                    if !x.is_finite() || !usable(m) {
                        return None;
                    }
                    let lo = if usable(m - sd) { m - sd } else { m };
                    Some((*x, ty(m), ty(lo), ty(m + sd)))
                })
                .collect();
            bands.push(pts);
        }
        let all: Vec<&(f64, f64, f64, f64)> = bands.iter().flatten().collect();
        let (mut x0, mut x1) = fold_range(all.iter().map(|p| p.0));
        let (mut y0, mut y1) = fold_range(all.iter().flat_map(|p| [p.2, p.3]));
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&self.title));
        let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let ylab = if self.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#, px(xv), TOP + ph + 16.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylab}</text>"#, LEFT - 6.0, py(yv) + 4.0);
            let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#ddd"/>"##, py(yv), LEFT + pw);
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(&self.x_label));
        let _ = writeln!(out, r#"<text x="16" y="{0:.1}" text-anchor="middle" transform="rotate(-90 16 {0:.1})">{1}</text>"#, TOP + ph / 2.0, escape(&self.y_label));
        for (i, (s, pts)) in self.series.iter().zip(&bands).enumerate() {
            let color = COLORS[i % COLORS.len()];
            if pts.len() > 1 {
                let mut poly: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.3))).collect();
                poly.extend(pts.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.2))));
                let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, poly.join(" "));
            }
            let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
            for p in pts {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(p.0), py(p.1));
            }
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let _ = writeln!(out, r#"<line x1="{0:.1}" y1="{ly:.1}" x2="{1:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, W - RIGHT + 10.0, W - RIGHT + 30.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, W - RIGHT + 36.0, ly + 4.0, escape(&s.name));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn fold_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}
