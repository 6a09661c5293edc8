//! SVG plots and CSV tables with byte-stable output.
//!
//! Coordinates are printed with three decimals, so the same input always
//! renders to the same bytes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rocgeom::ConvexRegion;

pub const MAX_REGIONS: usize = 8;

const PALETTE: [&str; MAX_REGIONS] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 30.0;
const PLOT: f64 = 310.0;

/// A linear map from data coordinates onto the square plot area.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    const UNIT: Frame = Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };

    /// A frame around the points with 5% padding on every side.
    fn around(xs: &[f64], ys: &[f64]) -> Self {
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() || !hi.is_finite() {
                return (0.0, 1.0);
            }
            let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
            (lo - pad, hi + pad)
        };
        let (x0, x1) = span(xs);
        let (y0, y1) = span(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + PLOT * (x - self.x0) / (self.x1 - self.x0)
    }

    fn py(&self, y: f64) -> f64 {
        TOP + PLOT * (1.0 - (y - self.y0) / (self.y1 - self.y0))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.3}\" y=\"18\" text-anchor=\"middle\">{}</text>\n",
        LEFT + PLOT / 2.0,
        escape(title)
    )
}

/// Box, five ticks per axis, and axis labels.
fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        "<rect x=\"{LEFT:.3}\" y=\"{TOP:.3}\" width=\"{PLOT:.3}\" height=\"{PLOT:.3}\" fill=\"none\" stroke=\"black\"/>"
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let (x, y) = (f.px(xv), f.py(yv));
        let bottom = TOP + PLOT;
        let _ = writeln!(
            out,
            "<line x1=\"{x:.3}\" y1=\"{bottom:.3}\" x2=\"{x:.3}\" y2=\"{:.3}\" stroke=\"black\"/>\
             <text x=\"{x:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{}</text>",
            bottom + 5.0,
            bottom + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.3}\" y1=\"{y:.3}\" x2=\"{LEFT:.3}\" y2=\"{y:.3}\" stroke=\"black\"/>\
             <text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"end\">{}</text>",
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{}</text>",
        LEFT + PLOT / 2.0,
        TOP + PLOT + 36.0,
        escape(xlabel)
    );
    let (cx, cy) = (16.0, TOP + PLOT / 2.0);
    let _ = writeln!(
        out,
        "<text x=\"{cx:.3}\" y=\"{cy:.3}\" text-anchor=\"middle\" transform=\"rotate(-90 {cx:.3} {cy:.3})\">{}</text>",
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn legend(out: &mut String, labels: &[&str]) {
    for (k, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * k as f64;
        let x = LEFT + PLOT + 12.0;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.3}\" y=\"{:.3}\" width=\"12\" height=\"12\" fill=\"{}\" fill-opacity=\"0.6\"/>\
             <text x=\"{:.3}\" y=\"{:.3}\">{}</text>",
            y - 10.0,
            PALETTE[k % MAX_REGIONS],
            x + 16.0,
            y,
            escape(label)
        );
    }
}

/// Unit-square ROC plot with one translucent filled path per region, the
/// diagonal dashed, and a legend. Regions without area are drawn as
/// outlines.
pub fn render_regions(regions: &[ConvexRegion], labels: &[&str]) -> Result<String> {
    if regions.len() > MAX_REGIONS {
        return Err(Error::Argument(format!("at most {MAX_REGIONS} regions per plot, got {}", regions.len())));
    }
    if labels.len() != regions.len() {
        return Err(Error::Dimension(format!("{} labels for {} regions", labels.len(), regions.len())));
    }
    let f = Frame::UNIT;
    let mut out = header("ROC feasible regions");
    axes(&mut out, &f, "false positive rate", "true positive rate");
    let _ = writeln!(
        out,
        "<line x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>",
        f.px(0.0),
        f.py(0.0),
        f.px(1.0),
        f.py(1.0)
    );
    for (k, r) in regions.iter().enumerate() {
        let vs = r.vertices();
        if vs.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (i, v) in vs.iter().enumerate() {
            let _ = write!(d, "{}{:.3} {:.3} ", if i == 0 { "M" } else { "L" }, f.px(v.fpr), f.py(v.tpr));
        }
        d.push('Z');
        let color = PALETTE[k];
        let _ = writeln!(
            out,
            "<path d=\"{d}\" fill=\"{color}\" fill-opacity=\"0.35\" stroke=\"{color}\" stroke-width=\"1.5\"/>"
        );
    }
    legend(&mut out, labels);
    out.push_str("</svg>\n");
    Ok(out)
}

/// A named polyline of `(x, y)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Lines with point markers, one per series, on axes fitted to the data.
pub fn render_lines(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> Result<String> {
    if series.len() > MAX_REGIONS {
        return Err(Error::Argument(format!("at most {MAX_REGIONS} series per plot, got {}", series.len())));
    }
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(Error::Argument("plot data must be finite".into()));
    }
    let f = Frame::around(&xs, &ys);
    let mut out = header(title);
    axes(&mut out, &f, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.3},{:.3}", f.px(x), f.py(y))).collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(out, "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\" fill=\"{color}\"/>", f.px(x), f.py(y));
        }
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Median of a slice, or NaN when it is empty.
pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// p-values per group as dots in columns, with each group's median as a
/// bar and the 0.05 level as a dashed line.
pub fn render_pvalues(title: &str, groups: &[(String, Vec<f64>)]) -> Result<String> {
    if groups.len() > MAX_REGIONS {
        return Err(Error::Argument(format!("at most {MAX_REGIONS} groups per plot, got {}", groups.len())));
    }
    let f = Frame::UNIT;
    let mut out = header(title);
    let _ = writeln!(
        out,
        "<rect x=\"{LEFT:.3}\" y=\"{TOP:.3}\" width=\"{PLOT:.3}\" height=\"{PLOT:.3}\" fill=\"none\" stroke=\"black\"/>"
    );
    for k in 0..=4 {
        let yv = k as f64 / 4.0;
        let y = f.py(yv);
        let _ = writeln!(
            out,
            "<line x1=\"{:.3}\" y1=\"{y:.3}\" x2=\"{LEFT:.3}\" y2=\"{y:.3}\" stroke=\"black\"/>\
             <text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"end\">{}</text>",
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            tick(yv)
        );
    }
    let level = f.py(0.05);
    let _ = writeln!(
        out,
        "<line x1=\"{LEFT:.3}\" y1=\"{level:.3}\" x2=\"{:.3}\" y2=\"{level:.3}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>",
        LEFT + PLOT
    );
    let width = PLOT / groups.len().max(1) as f64;
    for (k, (label, ps)) in groups.iter().enumerate() {
        let color = PALETTE[k];
        let cx = LEFT + width * (k as f64 + 0.5);
        for (i, &p) in ps.iter().enumerate() {
            let jitter = width * 0.3 * ((i % 7) as f64 / 6.0 - 0.5);
            let _ = writeln!(
                out,
                "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.7\"/>",
                cx + jitter,
                f.py(p.clamp(0.0, 1.0))
            );
        }
        let m = median(ps);
        if m.is_finite() {
            let y = f.py(m);
            let _ = writeln!(
                out,
                "<line x1=\"{:.3}\" y1=\"{y:.3}\" x2=\"{:.3}\" y2=\"{y:.3}\" stroke=\"{color}\" stroke-width=\"2\"/>",
                cx - width * 0.3,
                cx + width * 0.3
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{cx:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{}</text>",
            TOP + PLOT + 18.0,
            escape(label)
        );
    }
    let (cx, cy) = (16.0, TOP + PLOT / 2.0);
    let _ = writeln!(
        out,
        "<text x=\"{cx:.3}\" y=\"{cy:.3}\" text-anchor=\"middle\" transform=\"rotate(-90 {cx:.3} {cy:.3})\">p-value</text>"
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// A CSV document with a header row. Floats use Rust's shortest
/// round-trip form.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Parse(e.to_string()))?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Dimension(format!("row has {} fields, header has {}", r.len(), header.len())));
        }
        w.write_record(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probcore::RocPoint;

    #[test]
    fn empty_plot_has_axes_only() {
        let svg = render_regions(&[], &[]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("<path"));
        assert!(svg.contains("false positive rate"));
    }

    #[test]
    fn unit_square_covers_plot_area() {
        let svg = render_regions(&[ConvexRegion::unit_square()], &["all"]).unwrap();
        let path = svg.lines().find(|l| l.starts_with("<path")).unwrap();
        for corner in ["60.000 340.000", "370.000 340.000", "370.000 30.000", "60.000 30.000"] {
            assert!(path.contains(corner), "{corner} missing from {path}");
        }
    }

    #[test]
    fn overlapping_regions_are_translucent_and_stable() {
        let a = ConvexRegion::from_points(&[RocPoint::new(0.2, 0.6)]);
        let b = ConvexRegion::from_points(&[RocPoint::new(0.4, 0.8)]);
        let s1 = render_regions(&[a.clone(), b.clone()], &["in", "post"]).unwrap();
        let s2 = render_regions(&[a, b], &["in", "post"]).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.matches("fill-opacity=\"0.35\"").count(), 2);
    }

    #[test]
    fn too_many_regions_rejected() {
        let r = vec![ConvexRegion::diagonal(); 9];
        let labels = vec!["x"; 9];
        assert!(render_regions(&r, &labels).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let svg = render_regions(&[ConvexRegion::diagonal()], &["a<b & c"]).unwrap();
        assert!(svg.contains("a&lt;b &amp; c"));
    }

    #[test]
    fn lines_and_pvalues_render() {
        let s = Series { label: "det".into(), points: vec![(0.1, 0.2), (0.3, 0.1)] };
        let svg = render_lines("trade-off", "penalty", "MSE", &[s]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        let svg = render_pvalues("p", &[("stoch".into(), vec![0.5, 0.01, 0.3])]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(render_lines("t", "x", "y", &[Series { label: "bad".into(), points: vec![(f64::NAN, 0.0)] }]).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let text = csv_table(&["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        assert_eq!(text, "a,b\n1,\"x,y\"\n");
        assert!(csv_table(&["a"], &[vec![]]).is_err());
    }
}
