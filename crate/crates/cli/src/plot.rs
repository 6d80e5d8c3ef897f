//! Minimal deterministic SVG plotting. Fixed canvas, fixed palette,
//! fixed-precision coordinates: identical data yields identical bytes.
//! The CSV files are the normative outputs; these plots are a
//! convenience.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_B
            - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        WIDTH / 2.0
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let _ = write!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    );
    // End-point tick labels keep the layout fixed regardless of data.
    let _ = write!(
        out,
        "<text x=\"{x0}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"{x1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{y_label}</text>\n",
        y0 + 16.0,
        fmt(frame.x_min),
        y0 + 16.0,
        fmt(frame.x_max),
        x0 - 6.0,
        y0 + 4.0,
        fmt(frame.y_min),
        x0 - 6.0,
        y1 + 4.0,
        fmt(frame.y_max),
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
    );
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN_T + 8.0 + 16.0 * i as f64;
        let _ = write!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\">{label}</text>\n",
            WIDTH - MARGIN_R - 150.0,
            y,
            PALETTE[i % PALETTE.len()],
            WIDTH - MARGIN_R - 134.0,
            y + 9.0,
        );
    }
}

/// Line chart over the data's bounding box (y axis anchored at zero when
/// all values are nonnegative).
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if y_min >= 0.0 {
        y_min = 0.0;
    }
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    y_max *= 1.05;
    let frame = Frame { x_min, x_max, y_min, y_max };

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let mut path = String::new();
        for &(x, y) in s.points {
            let _ = write!(path, "{},{} ", fmt(frame.x(x)), fmt(frame.y(y)));
        }
        let _ = write!(
            out,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            PALETTE[i % PALETTE.len()],
            path.trim_end()
        );
    }
    legend(&mut out, &series.iter().map(|s| s.label).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart: one group per category, one bar per series.
pub fn bar_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    categories: &[String],
    series: &[Series<'_>],
) -> String {
    let y_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(_, y)| y))
        .fold(0.0_f64, f64::max)
        .max(1e-12)
        * 1.05;
    let frame = Frame { x_min: 0.0, x_max: categories.len() as f64, y_min: 0.0, y_max };

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, x_label, y_label);
    let group_width = (WIDTH - MARGIN_L - MARGIN_R) / categories.len() as f64;
    let bar_width = group_width * 0.8 / series.len() as f64;
    for (si, s) in series.iter().enumerate() {
        for (ci, &(_, y)) in s.points.iter().enumerate() {
            let x = MARGIN_L + group_width * (ci as f64 + 0.1) + bar_width * si as f64;
            let top = frame.y(y);
            let _ = write!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                fmt(x),
                fmt(top),
                fmt(bar_width),
                fmt(HEIGHT - MARGIN_B - top),
                PALETTE[si % PALETTE.len()],
            );
        }
    }
    for (ci, label) in categories.iter().enumerate() {
        let x = MARGIN_L + group_width * (ci as f64 + 0.5);
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
            fmt(x),
            HEIGHT - MARGIN_B + 16.0,
        );
    }
    legend(&mut out, &series.iter().map(|s| s.label).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_deterministic() {
        let points = [(0.0, 0.1), (1.0, 0.4), (2.0, 0.3)];
        let series = [Series { label: "a", points: &points }];
        let one = line_chart("t", "x", "y", &series);
        let two = line_chart("t", "x", "y", &series);
        assert_eq!(one, two);
        assert!(one.starts_with("<svg"));
        assert!(one.ends_with("</svg>\n"));
    }

    #[test]
    fn bar_chart_renders_groups() {
        let a = [(0.0, 1.0), (1.0, 2.0)];
        let b = [(0.0, 1.5), (1.0, 0.5)];
        let svg = bar_chart(
            "bars",
            "worker",
            "rate",
            &["1".to_string(), "2".to_string()],
            &[Series { label: "q=1.0", points: &a }, Series { label: "q=0.9", points: &b }],
        );
        assert_eq!(svg.matches("<rect").count(), 7); // background + 4 bars + 2 legend keys
    }
}
