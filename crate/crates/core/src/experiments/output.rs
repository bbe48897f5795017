//! CSV and self-contained SVG writers.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so files
//! are byte-stable for bit-identical results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Collects the files written by one run.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes a CSV with a header row; every record must match the header length.
    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.path(name);
        let to_err = |e: csv::Error| Error::Format { path: path.clone(), msg: e.to_string() };
        let mut w = csv::Writer::from_path(&path).map_err(to_err)?;
        w.write_record(header).map_err(to_err)?;
        for row in rows {
            w.write_record(row.into_iter()).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Square matrix as CSV rows, first column is the row label.
pub fn matrix_rows(labels: &[f64], m: &DMatrix<f64>) -> Vec<Vec<String>> {
    (0..m.nrows())
        .map(|i| std::iter::once(num(labels[i])).chain(m.row(i).iter().map(|v| num(*v))).collect())
        .collect()
}

/// Diverging blue-white-red map on the fixed range `[-1, 1]`; NaN is grey.
fn diverging(v: f64) -> (u8, u8, u8) {
    if !v.is_finite() {
        return (160, 160, 160);
    }
    let t = v.clamp(-1.0, 1.0);
    let mix = |a: f64, b: f64, s: f64| (a + (b - a) * s).round() as u8;
    if t < 0.0 {
        let s = -t;
        (mix(255.0, 33.0, s), mix(255.0, 102.0, s), mix(255.0, 172.0, s))
    } else {
        (mix(255.0, 178.0, t), mix(255.0, 24.0, t), mix(255.0, 43.0, t))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap with a fixed `[-1, 1]` colour scale. The matrix is embedded in a
/// `<metadata>` element as CSV (`<matrix rows=.. cols=..>`), together with the
/// axis labels, so the figure can be read back without the companion CSV.
pub fn heatmap_svg(title: &str, labels: &[f64], m: &DMatrix<f64>) -> String {
    let n = m.nrows();
    let cell = (420.0 / n.max(1) as f64).max(2.0);
    let (left, top) = (60.0, 40.0);
    let side = cell * n as f64;
    let (w, h) = (left + side + 90.0, top + side + 50.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    s.push_str("<metadata>\n");
    let _ = writeln!(s, r#"<matrix rows="{n}" cols="{}" vmin="-1" vmax="1">"#, m.ncols());
    for i in 0..n {
        let row: Vec<String> = m.row(i).iter().map(|v| num(*v)).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s.push_str("</matrix>\n<labels>");
    s.push_str(&labels.iter().map(|v| num(*v)).collect::<Vec<_>>().join(","));
    s.push_str("</labels>\n</metadata>\n");
    let _ = writeln!(s, r#"<text x="{left}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    for i in 0..n {
        for j in 0..m.ncols() {
            let (r, g, b) = diverging(m[(i, j)]);
            // row 0 at the bottom so the picture reads like a plot
            let y = top + (n - 1 - i) as f64 * cell;
            let x = left + j as f64 * cell;
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({r},{g},{b})"/>"#);
        }
    }
    if n > 0 {
        for idx in [0, n - 1] {
            let lab = num(labels[idx]);
            let x = left + (idx as f64 + 0.5) * cell;
            let _ = writeln!(s, r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{lab}</text>"#, top + side + 16.0);
            let y = top + (n - 1 - idx) as f64 * cell + cell * 0.5 + 4.0;
            let _ = writeln!(s, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end">{lab}</text>"#, left - 6.0);
        }
    }
    // colour bar
    let bx = left + side + 30.0;
    for k in 0..50 {
        let v = 1.0 - 2.0 * k as f64 / 49.0;
        let (r, g, b) = diverging(v);
        let y = top + k as f64 * side / 50.0;
        let _ = writeln!(s, r#"<rect x="{bx}" y="{y}" width="14" height="{}" fill="rgb({r},{g},{b})"/>"#, side / 50.0 + 0.5);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">1</text>"#, bx + 18.0, top + 8.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">-1</text>"#, bx + 18.0, top + side);
    s.push_str("</svg>\n");
    s
}

/// Reads the matrix back out of a heatmap produced by [`heatmap_svg`].
pub fn parse_heatmap_metadata(svg: &str) -> Result<DMatrix<f64>> {
    let bad = |msg: &str| Error::Format { path: PathBuf::from("<svg>"), msg: msg.into() };
    let start = svg.find("<matrix").ok_or_else(|| bad("no <matrix> element"))?;
    let open_end = start + svg[start..].find('>').ok_or_else(|| bad("unterminated <matrix>"))?;
    let attr = |name: &str| -> Result<usize> {
        let tag = &svg[start..open_end];
        let key = format!("{name}=\"");
        let i = tag.find(&key).ok_or_else(|| bad("missing matrix size"))? + key.len();
        let j = tag[i..].find('"').ok_or_else(|| bad("bad matrix size"))?;
        tag[i..i + j].parse().map_err(|_| bad("bad matrix size"))
    };
    let (rows, cols) = (attr("rows")?, attr("cols")?);
    let end = svg.find("</matrix>").ok_or_else(|| bad("unterminated <matrix>"))?;
    let values = svg[open_end + 1..end]
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| bad("bad matrix entry")))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != rows * cols {
        return Err(bad("matrix entry count does not match its size"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Simple multi-series line chart; `series` are `(name, ys)` over shared `xs`.
pub fn line_chart_svg(title: &str, xs: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let (w, h, left, top, pw, ph) = (640.0, 400.0, 60.0, 40.0, 540.0, 310.0);
    let finite = |v: &&f64| v.is_finite();
    let xmin = xs.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max);
    let all = series.iter().flat_map(|(_, y)| y.iter()).filter(finite);
    let ymin = all.clone().cloned().fold(f64::INFINITY, f64::min);
    let ymax = all.cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let sx = |x: f64| left + (x - xmin) / span(xmin, xmax) * pw;
    let sy = |y: f64| top + ph - (y - ymin) / span(ymin, ymax) * ph;
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<text x="{left}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    if xmin.is_finite() && ymin.is_finite() {
        for (k, (name, ys)) in series.iter().enumerate() {
            let pts: Vec<String> = xs
                .iter()
                .zip(ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let colour = palette[k % palette.len()];
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"><title>{}</title></polyline>"#, pts.join(" "), escape(name));
        }
        let _ = writeln!(s, r#"<text x="{left}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, top + ph + 16.0, num(xmin));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, left + pw, top + ph + 16.0, num(xmax));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#, left - 4.0, top + ph, ymin);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#, left - 4.0, top + 10.0, ymax);
    }
    s.push_str("</svg>\n");
    s
}
