//! Static SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChartError {
    #[error("chart has no series")]
    EmptySeries,
    #[error("series '{label}' has {got} points, expected {expected}")]
    LengthMismatch { label: String, got: usize, expected: usize },
    #[error("series '{0}' contains a non-finite value")]
    NonFinite(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub series: Vec<Series>,
}

impl Chart {
    pub fn new(title: &str, x: Vec<f64>) -> Chart {
        Chart { title: title.into(), x_label: "Time (Day)".into(), y_label: String::new(), x, series: vec![] }
    }

    pub fn with_series(mut self, label: &str, values: Vec<f64>) -> Chart {
        self.series.push(Series { label: label.into(), values });
        self
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.abs() >= 1e5 || v.abs() < 1e-3 {
        return format!("{v:.2e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Round step for roughly `n` intervals over `span`.
fn nice_step(span: f64, n: f64) -> f64 {
    let raw = span / n;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 5.0);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + step * 1e-9 {
        out.push(if v.abs() < step * 1e-9 { 0.0 } else { v });
        v += step;
    }
    out
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

/// Indices kept when thinning `n` points to at most `MAX_POINTS` (always keeps the last).
fn decimate(n: usize) -> Vec<usize> {
    if n <= MAX_POINTS {
        return (0..n).collect();
    }
    let stride = n.div_ceil(MAX_POINTS - 1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().expect("n > 0") != n - 1 {
        idx.push(n - 1);
    }
    idx
}

pub fn render_svg(chart: &Chart) -> Result<String, ChartError> {
    if chart.series.is_empty() {
        return Err(ChartError::EmptySeries);
    }
    let n = chart.x.len();
    for s in &chart.series {
        if s.values.len() != n {
            return Err(ChartError::LengthMismatch { label: s.label.clone(), got: s.values.len(), expected: n });
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(ChartError::NonFinite(s.label.clone()));
        }
    }
    if n == 0 {
        return Err(ChartError::EmptySeries);
    }

    let (x0, x1) = extent(chart.x.iter().copied());
    let (y0, y1) = extent(chart.series.iter().flat_map(|s| s.values.iter().copied()));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&chart.title)
    );

    // grid and tick labels
    for t in ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e5e5e5"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 18.0,
            tick_label(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(s, r#"<path d="M{LEFT},{TOP} V{:.2} H{:.2}" fill="none" stroke="black"/>"#, TOP + ph, LEFT + pw);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(&chart.x_label)
    );
    if !chart.y_label.is_empty() {
        let _ = writeln!(
            s,
            r#"<text transform="translate(20,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + ph / 2.0,
            escape(&chart.y_label)
        );
    }

    let keep = decimate(n);
    for (i, series) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> =
            keep.iter().map(|&k| format!("{:.2},{:.2}", px(chart.x[k]), py(series.values[k]))).collect();
        let _ =
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_chart(chart: &Chart, path: &Path) -> Result<(), crate::OutputError> {
    let svg = render_svg(chart)?;
    std::fs::write(path, svg).map_err(|source| crate::OutputError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polyline_ys(svg: &str) -> Vec<Vec<String>> {
        svg.lines()
            .filter_map(|l| l.split("points=\"").nth(1))
            .map(|p| {
                p.trim_end_matches("\"/>").split(' ').map(|xy| xy.split(',').nth(1).unwrap().to_string()).collect()
            })
            .collect()
    }

    #[test]
    fn empty() {
        assert_eq!(render_svg(&Chart::new("t", vec![0.0])), Err(ChartError::EmptySeries));
    }

    #[test]
    fn length_mismatch() {
        let c = Chart::new("t", vec![0.0, 1.0]).with_series("a", vec![1.0]);
        assert!(matches!(render_svg(&c), Err(ChartError::LengthMismatch { .. })));
    }

    #[test]
    fn constant_is_horizontal() {
        let c = Chart::new("t", (0..50).map(f64::from).collect()).with_series("c", vec![3.0; 50]);
        let ys = polyline_ys(&render_svg(&c).unwrap());
        assert_eq!(ys.len(), 1);
        assert!(ys[0].iter().all(|y| *y == ys[0][0]));
    }

    #[test]
    fn one_polyline_per_series_and_escaped_legend() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let c = Chart::new("A & B", x.clone())
            .with_series("Distribution of Bias in Data & Design", x.clone())
            .with_series("FRE", x.iter().map(|v| v * 2.0).collect())
            .with_series("HCI", x.iter().map(|v| v * v).collect());
        let svg = render_svg(&c).unwrap();
        assert_eq!(polyline_ys(&svg).len(), 3);
        assert!(svg.contains("Data &amp; Design"));
        assert!(!svg.contains("& D"));
        assert_eq!(svg, render_svg(&c).unwrap());
    }

    #[test]
    fn decimation_caps_points() {
        let n = 12801;
        let c =
            Chart::new("t", (0..n).map(|i| i as f64).collect()).with_series("s", (0..n).map(|i| i as f64).collect());
        let ys = polyline_ys(&render_svg(&c).unwrap());
        assert!(ys[0].len() <= MAX_POINTS);
        assert_eq!(decimate(n).last(), Some(&(n - 1)));
        assert_eq!(decimate(5), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn tick_steps() {
        assert_eq!(ticks(0.0, 100.0), vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0]);
        assert_eq!(nice_step(0.3, 5.0), 0.1);
    }
}
