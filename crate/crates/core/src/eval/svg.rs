//! Minimal hand-rolled SVG plots.

use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 || a == 0.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span <= 0.0 {
        let d = lo.abs().max(1.0) * 0.5;
        return (lo - d, hi + d);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn frame(out: &mut String, axes: &Axes, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (bx, by) = (LEFT, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{LEFT:.1},{TOP:.1} V{by:.1} H{:.1}" fill="none" stroke="black"/>"#,
        WIDTH - RIGHT
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = axes.x0 + f * (axes.x1 - axes.x0);
        let yv = axes.y0 + f * (axes.y1 - axes.y0);
        let (x, y) = (axes.px(xv), axes.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{by:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#,
            by + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            by + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{bx:.1}" y2="{y:.1}" stroke="black"/>"#,
            bx - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            bx - 8.0,
            y + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 12.0,
        escape(xlabel)
    );
    let cy = TOP + (HEIGHT - TOP - BOTTOM) / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="16" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 16 {cy:.1})">{}</text>"#,
        escape(ylabel)
    );
}

/// Predicted against actual with one-sigma bars and the identity line.
pub fn scatter(title: &str, actual: &[f64], predicted: &[f64], std: &[f64]) -> String {
    let lo = actual
        .iter()
        .chain(predicted)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = actual
        .iter()
        .chain(predicted)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let (a, b) = padded(lo, hi);
    let axes = Axes {
        x0: a,
        x1: b,
        y0: a,
        y1: b,
    };
    let mut out = String::new();
    frame(&mut out, &axes, title, "actual", "predicted");
    let _ = writeln!(
        out,
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
        axes.px(a),
        axes.py(a),
        axes.px(b),
        axes.py(b)
    );
    for ((&x, &y), &s) in actual.iter().zip(predicted).zip(std) {
        let (cx, cy) = (axes.px(x), axes.py(y));
        if s > 0.0 {
            let top = axes.py((y + s).min(b));
            let bot = axes.py((y - s).max(a));
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.1}" y1="{top:.1}" x2="{cx:.1}" y2="{bot:.1}" stroke="steelblue" stroke-opacity="0.5"/>"#
            );
        }
        let _ = writeln!(
            out,
            r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3.5" fill="steelblue"/>"#
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Equal-width histogram with an optional note under the title.
pub fn histogram(
    title: &str,
    xlabel: &str,
    values: &[f64],
    bins: usize,
    note: Option<&str>,
) -> String {
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        padded(lo, hi)
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let axes = Axes {
        x0: lo,
        x1: hi,
        y0: 0.0,
        y1: top * 1.1,
    };
    let mut out = String::new();
    frame(&mut out, &axes, title, xlabel, "count");
    for (i, &c) in counts.iter().enumerate() {
        let x0 = axes.px(lo + i as f64 * width);
        let x1 = axes.px(lo + (i + 1) as f64 * width);
        let y = axes.py(c as f64);
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="steelblue" stroke="white"/>"#,
            x1 - x0,
            axes.py(0.0) - y
        );
    }
    if let Some(note) = note {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            WIDTH - RIGHT - 4.0,
            TOP + 14.0,
            escape(note)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_is_well_formed() {
        let s = scatter("k", &[1.0, 2.0, 3.0], &[1.1, 1.9, 3.2], &[0.1, 0.0, 0.2]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 3);
        assert!(s.contains("stroke-dasharray"));
    }

    #[test]
    fn histogram_counts_everything() {
        let s = histogram("E", "E (MPa)", &[1.0, 1.0, 2.0, 5.0], 4, Some("k < 20"));
        assert_eq!(s.matches("<rect x=").count(), 4);
        assert!(s.contains("k &lt; 20"));
        let flat = histogram("c", "c", &[2.0, 2.0], 3, None);
        assert!(!flat.contains("NaN"));
    }
}
