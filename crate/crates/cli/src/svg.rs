//! Minimal SVG figures: bar charts, heatmaps, box plots and line charts.
//! Output depends only on the data, so identical inputs give identical
//! files.

use std::fmt::Write;

use rodbench::bench::BoxStats;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        Self { out }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn axes(&mut self, y_label: &str, scale: &Scale) {
        let (x0, y0, x1) = (LEFT, H - BOTTOM, W - RIGHT);
        self.line(x0, TOP, x0, y0, "black");
        self.line(x0, y0, x1, y0, "black");
        for i in 0..=4 {
            let v = scale.lo + (scale.hi - scale.lo) * i as f64 / 4.0;
            let y = scale.y(v);
            self.line(x0 - 4.0, y, x0, y, "black");
            self.text(x0 - 6.0, y + 4.0, "end", &fmt_tick(scale.value(v)));
        }
        let _ = writeln!(
            self.out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (TOP + y0) / 2.0,
            (TOP + y0) / 2.0,
            escape(y_label)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Vertical mapping; optionally logarithmic (values must then be > 0).
struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool, zero: bool) -> Self {
        let vals: Vec<f64> = values
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .map(|v| if log { v.log10() } else { v })
            .collect();
        let mut lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if zero && !log {
            lo = lo.min(0.0);
        }
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        let pad = if zero { 0.0 } else { 0.05 * (hi - lo) };
        Self {
            lo: lo - pad,
            hi: hi + 0.05 * (hi - lo),
            log,
        }
    }

    fn map(&self, v: f64) -> f64 {
        if self.log {
            v.max(1e-300).log10()
        } else {
            v
        }
    }

    fn value(&self, s: f64) -> f64 {
        if self.log {
            10f64.powf(s)
        } else {
            s
        }
    }

    /// Pixel row of a scale coordinate.
    fn y(&self, s: f64) -> f64 {
        H - BOTTOM - (s - self.lo) / (self.hi - self.lo) * (H - BOTTOM - TOP)
    }

    fn py(&self, v: f64) -> f64 {
        self.y(self.map(v))
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart; `highlight` bars are drawn in a second color.
pub fn bar_chart(title: &str, y_label: &str, labels: &[String], values: &[f64], highlight: Option<usize>) -> String {
    let mut c = Canvas::new(title);
    let scale = Scale::new(values.iter().copied(), false, true);
    c.axes(y_label, &scale);
    let slot = (W - LEFT - RIGHT) / values.len().max(1) as f64;
    for (i, (label, v)) in labels.iter().zip(values).enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let (top, base) = (scale.py(*v), scale.py(0.0));
        let fill = if Some(i) == highlight { PALETTE[3] } else { PALETTE[0] };
        c.rect(x, top.min(base), slot * 0.7, (base - top).abs(), fill);
        c.text(x + slot * 0.35, H - BOTTOM + 16.0, "middle", label);
    }
    c.finish()
}

/// Count heatmap with row/column labels (rows: truth, columns: prediction).
pub fn heatmap(title: &str, labels: &[String], counts: &[Vec<usize>]) -> String {
    let mut c = Canvas::new(title);
    let n = labels.len().max(1) as f64;
    let size = ((H - TOP - BOTTOM) / n).min((W - 2.0 * LEFT - 60.0) / n);
    let x0 = (W - size * n) / 2.0 + 30.0;
    let max = counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    for (i, row) in counts.iter().enumerate() {
        let y = TOP + size * i as f64;
        c.text(x0 - 6.0, y + size / 2.0 + 4.0, "end", &labels[i]);
        for (j, v) in row.iter().enumerate() {
            let shade = 255 - (200.0 * *v as f64 / max).round() as u8;
            c.rect(x0 + size * j as f64, y, size, size, &format!("rgb({shade},{shade},255)"));
            c.text(x0 + size * (j as f64 + 0.5), y + size / 2.0 + 4.0, "middle", &v.to_string());
        }
    }
    for (j, l) in labels.iter().enumerate() {
        c.text(x0 + size * (j as f64 + 0.5), TOP + size * n + 16.0, "middle", l);
    }
    c.text(x0 + size * n / 2.0, TOP + size * n + 34.0, "middle", "predicted");
    c.finish()
}

/// Box plot per group with the raw values drawn as dots.
pub fn boxplot(title: &str, y_label: &str, groups: &[(String, BoxStats, Vec<f64>)], log: bool) -> String {
    let mut c = Canvas::new(title);
    let scale = Scale::new(groups.iter().flat_map(|g| g.2.iter().copied()), log, false);
    c.axes(y_label, &scale);
    let slot = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    for (i, (name, b, values)) in groups.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let half = slot * 0.2;
        let color = PALETTE[i % PALETTE.len()];
        c.line(cx, scale.py(b.whisker_low), cx, scale.py(b.q1), "black");
        c.line(cx, scale.py(b.q3), cx, scale.py(b.whisker_high), "black");
        c.line(cx - half / 2.0, scale.py(b.whisker_low), cx + half / 2.0, scale.py(b.whisker_low), "black");
        c.line(cx - half / 2.0, scale.py(b.whisker_high), cx + half / 2.0, scale.py(b.whisker_high), "black");
        c.rect(cx - half, scale.py(b.q3), 2.0 * half, scale.py(b.q1) - scale.py(b.q3), color);
        c.line(cx - half, scale.py(b.median), cx + half, scale.py(b.median), "black");
        for v in values {
            let fill = if b.is_outlier(*v) { "none" } else { "black" };
            let _ = writeln!(
                c.out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{fill}" stroke="black"/>"#,
                cx + half * 1.4,
                scale.py(*v)
            );
        }
        c.text(cx, H - BOTTOM + 16.0, "middle", name);
    }
    c.finish()
}

/// Line chart with one series per entry; x runs 1..=len.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)], log: bool) -> String {
    let mut c = Canvas::new(title);
    let scale = Scale::new(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)), log, false);
    c.axes(y_label, &scale);
    let xs = series.iter().flat_map(|s| s.1.iter().map(|p| p.0));
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (xmin, xmax) = if xmin.is_finite() && xmax > xmin { (xmin, xmax) } else { (0.0, 1.0) };
    let px = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (W - LEFT - RIGHT);
    for i in 0..=4 {
        let x = xmin + (xmax - xmin) * i as f64 / 4.0;
        c.line(px(x), H - BOTTOM, px(x), H - BOTTOM + 4.0, "black");
        c.text(px(x), H - BOTTOM + 16.0, "middle", &format!("{x:.0}"));
    }
    c.text((LEFT + W - RIGHT) / 2.0, H - BOTTOM + 34.0, "middle", x_label);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.1.is_finite() && (!log || p.1 > 0.0))
            .map(|p| format!("{:.2},{:.2}", px(p.0), scale.py(p.1)))
            .collect();
        let _ = writeln!(
            c.out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 14.0 * i as f64;
        c.line(W - RIGHT - 110.0, ly, W - RIGHT - 90.0, ly, color);
        c.text(W - RIGHT - 85.0, ly + 4.0, "start", name);
    }
    c.finish()
}
