//! Self-contained SVG figures. Coordinates are printed with fixed precision so that
//! identical inputs give identical text.

use std::fmt::Write;

use ecg_unc_core::metrics::ConfusionMatrix;
use ecg_unc_core::rejection::SweepPoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 70.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

fn close(out: &mut String) {
    out.push_str("</svg>\n");
}

/// Linear map from data range to pixel range.
#[derive(Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Scale { lo, hi, from, to }
    }

    fn at(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}

fn axes(out: &mut String, x: Scale, y: Scale, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (x.from, x.to, y.from, y.to);
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let xv = x.lo + f * (x.hi - x.lo);
        let yv = y.lo + f * (y.hi - y.lo);
        let (px, py) = (x.at(xv), y.at(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.2}</text>"#,
            y0 + 5.0,
            y0 + 20.0
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.2}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        y0 + 42.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// Row-normalized confusion matrix; cells show the fraction and the count.
pub fn confusion_heatmap(cm: &ConfusionMatrix, class_names: &[&str], title: &str) -> String {
    let k = cm.classes();
    let cell = 52.0;
    let left = 90.0;
    let top = 60.0;
    let width = left + cell * k as f64 + 30.0;
    let height = top + cell * k as f64 + 70.0;
    let norm = cm.row_normalize();
    let mut out = String::new();
    open(&mut out, width, height, title);
    for t in 0..k {
        for p in 0..k {
            let frac = norm.fractions[t][p];
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let (x, y) = (left + cell * p as f64, top + cell * t as f64);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb({shade},{shade},255)" stroke="gray"/>"#
            );
            let ink = if frac > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{ink}" font-size="11">{frac:.2}</text><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{ink}" font-size="9">({})</text>"#,
                x + cell / 2.0,
                y + cell / 2.0,
                x + cell / 2.0,
                y + cell / 2.0 + 12.0,
                cm.count(t, p)
            );
        }
        let name = escape(class_names.get(t).copied().unwrap_or("?"));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{name}</text>"#,
            left - 6.0,
            top + cell * (t as f64 + 0.5) + 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{name}</text>"#,
            left + cell * (t as f64 + 0.5),
            top + cell * k as f64 + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">predicted</text><text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">true</text>"#,
        left + cell * k as f64 / 2.0,
        top + cell * k as f64 + 44.0,
        top + cell * k as f64 / 2.0,
        top + cell * k as f64 / 2.0
    );
    close(&mut out);
    out
}

/// Macro-F1 against accept ratio, one labelled marker per threshold.
pub fn sweep_chart(points: &[SweepPoint]) -> String {
    let usable: Vec<(f64, f64, f64)> = points
        .iter()
        .filter_map(|p| p.macro_f1.map(|f| (p.accept_ratio, f, p.threshold)))
        .collect();
    let f_lo = usable.iter().map(|u| u.1).fold(f64::INFINITY, f64::min);
    let f_hi = usable.iter().map(|u| u.1).fold(f64::NEG_INFINITY, f64::max);
    let (f_lo, f_hi) = if usable.is_empty() {
        (0.0, 1.0)
    } else {
        (f_lo - 0.02, f_hi + 0.02)
    };
    let x = Scale::new(0.0, 1.0, MARGIN, WIDTH - 30.0);
    let y = Scale::new(f_lo, f_hi, HEIGHT - MARGIN, 50.0);
    let mut out = String::new();
    open(&mut out, WIDTH, HEIGHT, "Macro-F1 of accepted records vs accept ratio");
    axes(&mut out, x, y, "accept ratio", "Macro-F1");
    let path: Vec<String> = usable
        .iter()
        .map(|&(a, f, _)| format!("{:.1},{:.1}", x.at(a), y.at(f)))
        .collect();
    if !path.is_empty() {
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            path.join(" ")
        );
    }
    for &(a, f, t) in &usable {
        let (px, py) = (x.at(a), y.at(f));
        let _ = writeln!(
            out,
            r#"<circle cx="{px:.1}" cy="{py:.1}" r="3" fill="steelblue"/><text x="{:.1}" y="{:.1}" font-size="9">{t:.2}</text>"#,
            px + 4.0,
            py - 4.0
        );
    }
    close(&mut out);
    out
}

/// Overlaid histograms on shared bins.
pub fn histogram(title: &str, x_label: &str, series: &[(&str, &[f64], &str)], bins: usize) -> String {
    let all = series.iter().flat_map(|s| s.1.iter().copied());
    let lo = all.clone().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = all.fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-9);
    let bins = bins.max(1);
    let counts: Vec<Vec<usize>> = series
        .iter()
        .map(|(_, values, _)| {
            let mut c = vec![0usize; bins];
            for &v in *values {
                let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
                c[b.min(bins - 1)] += 1;
            }
            c
        })
        .collect();
    let peak = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let x = Scale::new(lo, hi, MARGIN, WIDTH - 30.0);
    let y = Scale::new(0.0, peak, HEIGHT - MARGIN, 50.0);
    let mut out = String::new();
    open(&mut out, WIDTH, HEIGHT, title);
    axes(&mut out, x, y, x_label, "records");
    let bin_width = (hi - lo) / bins as f64;
    for ((_, _, color), c) in series.iter().zip(&counts) {
        for (b, &n) in c.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let left = x.at(lo + b as f64 * bin_width);
            let right = x.at(lo + (b + 1) as f64 * bin_width);
            let top = y.at(n as f64);
            let _ = writeln!(
                out,
                r#"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.45" stroke="{color}"/>"#,
                right - left,
                y.from - top
            );
        }
    }
    for (i, (name, values, color)) in series.iter().enumerate() {
        let ly = 50.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{ly:.1}" width="12" height="12" fill="{color}" fill-opacity="0.6"/><text x="{:.1}" y="{:.1}">{} (n={})</text>"#,
            WIDTH - 190.0,
            WIDTH - 172.0,
            ly + 10.0,
            escape(name),
            values.len()
        );
    }
    close(&mut out);
    out
}

/// Scatter with the `y = x` reference line.
pub fn scatter(title: &str, xs: &[f64], ys: &[f64], x_label: &str, y_label: &str) -> String {
    let hi = xs.iter().chain(ys).copied().fold(0.0f64, f64::max).max(1e-3) * 1.05;
    let x = Scale::new(0.0, hi, MARGIN, WIDTH - 30.0);
    let y = Scale::new(0.0, hi, HEIGHT - MARGIN, 50.0);
    let mut out = String::new();
    open(&mut out, WIDTH, HEIGHT, title);
    axes(&mut out, x, y, x_label, y_label);
    let _ = writeln!(
        out,
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="6 4"/>"#,
        x.at(0.0),
        y.at(0.0),
        x.at(hi),
        y.at(hi)
    );
    for (&a, &b) in xs.iter().zip(ys) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="darkorange" fill-opacity="0.7"/>"#,
            x.at(a),
            y.at(b)
        );
    }
    close(&mut out);
    out
}
