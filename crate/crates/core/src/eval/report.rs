//! CSV tables and dependency-free SVG renderings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;

/// Writes a header row plus data rows; cells are written verbatim.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str, log_y: bool) {
    let _ = writeln!(
        out,
        "<path d=\"M{PAD} {PAD} V{b} H{r}\" fill=\"none\" stroke=\"black\"/>",
        b = H - PAD,
        r = W - PAD
    );
    let fmt = |v: f64| if log_y { format!("1e{v:.0}") } else { format!("{v:.3}") };
    let _ = writeln!(
        out,
        "<text x=\"{PAD}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
        H - PAD + 16.0,
        x.0,
        W - PAD,
        H - PAD + 16.0,
        x.1,
        PAD - 4.0,
        H - PAD,
        fmt(y.0),
        PAD - 4.0,
        PAD + 4.0,
        fmt(y.1)
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {})\">{}</text>",
        W / 2.0,
        H - 12.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line plot of named series; `log_y` plots `log10 y` and drops non-positive points.
pub fn svg_lines(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)], log_y: bool) -> String {
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let pts = || series.iter().flat_map(|(_, p)| p.iter());
    let xr = range(pts().map(|p| p.0));
    let yr = range(pts().filter(|p| !log_y || p.1 > 0.0).map(|p| ty(p.1)));
    let sx = |x: f64| PAD + (x - xr.0) / (xr.1 - xr.0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - yr.0) / (yr.1 - yr.0) * (H - 2.0 * PAD);
    let mut out = header(title);
    axes(&mut out, xr, yr, xlabel, ylabel, log_y);
    for (i, (name, p)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for &(x, y) in p {
            if !y.is_finite() || (log_y && y <= 0.0) {
                continue;
            }
            let _ = write!(d, "{}{:.2} {:.2} ", if d.is_empty() { "M" } else { "L" }, sx(x), sy(ty(y)));
        }
        let _ = writeln!(out, "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", d.trim_end());
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            W - PAD - 120.0,
            PAD + 14.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Raster of a matrix (rows drawn top to bottom), grey scale from 0 to the matrix max.
pub fn svg_raster(title: &str, xlabel: &str, ylabel: &str, rows: &[Vec<f64>]) -> String {
    let mut out = header(title);
    let nr = rows.len().max(1) as f64;
    let nc = rows.first().map_or(1, |r| r.len()).max(1) as f64;
    let max = rows
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, &v| m.max(v));
    let cw = (W - 2.0 * PAD) / nc;
    let ch = (H - 2.0 * PAD) / nr;
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            let g = if max > 0.0 && v.is_finite() { 255.0 * (1.0 - v / max) } else { 255.0 };
            let g = g.round() as u8;
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({g},{g},{g})\"/>",
                PAD + j as f64 * cw,
                PAD + i as f64 * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    axes(&mut out, (0.0, nc), (0.0, max), xlabel, ylabel, false);
    out.push_str("</svg>\n");
    out
}

/// Bar chart of `(lo, hi, count)` bins.
pub fn svg_histogram(title: &str, xlabel: &str, bins: &[(f64, f64, usize)]) -> String {
    let mut out = header(title);
    let xr = (
        bins.first().map_or(0.0, |b| b.0),
        bins.last().map_or(1.0, |b| b.1),
    );
    let top = bins.iter().map(|b| b.2).max().unwrap_or(1).max(1) as f64;
    axes(&mut out, xr, (0.0, top), xlabel, "count", false);
    let sx = |x: f64| PAD + (x - xr.0) / (xr.1 - xr.0) * (W - 2.0 * PAD);
    for &(lo, hi, c) in bins {
        let h = c as f64 / top * (H - 2.0 * PAD);
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            sx(lo),
            H - PAD - h,
            (sx(hi) - sx(lo) - 1.0).max(0.5),
            h,
            COLORS[0]
        );
    }
    out.push_str("</svg>\n");
    out
}
