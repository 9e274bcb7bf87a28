//! Plot data and standalone SVG charts from sweep output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::stats::MeanCi;

/// One curve: points `(x, mean, lo, hi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, f64, f64)>,
    /// Draw the `[lo, hi]` band; off when a curve rests on a single run.
    pub ribbon: bool,
}

/// A parsed CSV: header names and data rows, with row numbers counted from
/// the header as row 1.
struct Table {
    header: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let header = reader
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::MalformedCsv {
                row,
                message: e.to_string(),
            })?;
            rows.push((row, rec));
        }
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::MalformedCsv {
            row: 1,
            message: format!("missing column `{name}`"),
        })
    }

    fn has(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, row: usize, col: usize, name: &str) -> Result<T> {
    let raw = rec.get(col).ok_or_else(|| Error::MalformedCsv {
        row,
        message: format!("missing value for `{name}`"),
    })?;
    raw.trim().parse().map_err(|_| Error::MalformedCsv {
        row,
        message: format!("cannot parse `{raw}` as {name}"),
    })
}

/// Total information gain of a row: `delta_h`, or `delta1 + delta2`.
fn delta_of(table: &Table, rec: &csv::StringRecord, row: usize) -> Result<f64> {
    if table.has("delta_h") {
        field(rec, row, table.column("delta_h")?, "delta_h")
    } else {
        let a: f64 = field(rec, row, table.column("delta1")?, "delta1")?;
        let b: f64 = field(rec, row, table.column("delta2")?, "delta2")?;
        Ok(a + b)
    }
}

/// Mean cumulative regret against `k` per `(mode, n)`, across seeds.
pub fn regret_series(results: &Path) -> Result<Vec<Series>> {
    let t = Table::read(results)?;
    let (c_mode, c_n, c_k, c_cum) = (
        t.column("mode")?,
        t.column("n")?,
        t.column("k")?,
        t.column("cum_regret")?,
    );
    t.column("seed")?;
    let mut acc: BTreeMap<(String, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for (row, rec) in &t.rows {
        let mode: String = field(rec, *row, c_mode, "mode")?;
        let n: usize = field(rec, *row, c_n, "n")?;
        let k: usize = field(rec, *row, c_k, "k")?;
        let cum: f64 = field(rec, *row, c_cum, "cum_regret")?;
        acc.entry((mode, n)).or_default().entry(k).or_default().push(cum);
    }
    Ok(acc
        .into_iter()
        .map(|((mode, n), by_k)| {
            let ribbon = by_k.values().any(|v| v.len() > 1);
            Series {
                label: format!("{mode} n={n}"),
                points: by_k
                    .into_iter()
                    .map(|(k, v)| {
                        let ci = MeanCi::of(&v);
                        (k as f64, ci.mean, ci.lo(), ci.hi())
                    })
                    .collect(),
                ribbon,
            }
        })
        .collect())
}

/// Mean `Δ` against `n`, from a replay file (`seed, n, delta…`) or, failing
/// that, from the final episode of each results cell of the first mode.
pub fn delta_series(results: &Path, replay: Option<&Path>) -> Result<Series> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut label = String::new();
    if let Some(path) = replay {
        let t = Table::read(path)?;
        let c_n = t.column("n")?;
        t.column("seed")?;
        for (row, rec) in &t.rows {
            let n: usize = field(rec, *row, c_n, "n")?;
            by_n.entry(n).or_default().push(delta_of(&t, rec, *row)?);
        }
        label = "replayed".to_string();
    }
    if by_n.is_empty() {
        let t = Table::read(results)?;
        let (c_mode, c_n, c_seed, c_k) = (t.column("mode")?, t.column("n")?, t.column("seed")?, t.column("k")?);
        let mut last: BTreeMap<(usize, u64), (usize, f64)> = BTreeMap::new();
        let mut first_mode: Option<String> = None;
        for (row, rec) in &t.rows {
            let mode: String = field(rec, *row, c_mode, "mode")?;
            if first_mode.get_or_insert_with(|| mode.clone()) != &mode {
                continue;
            }
            let n: usize = field(rec, *row, c_n, "n")?;
            let seed: u64 = field(rec, *row, c_seed, "seed")?;
            let k: usize = field(rec, *row, c_k, "k")?;
            let d = delta_of(&t, rec, *row)?;
            let slot = last.entry((n, seed)).or_insert((k, d));
            if k >= slot.0 {
                *slot = (k, d);
            }
        }
        for ((n, _), (_, d)) in last {
            by_n.entry(n).or_default().push(d);
        }
        label = first_mode.unwrap_or_default();
    }
    let ribbon = by_n.values().any(|v| v.len() > 1);
    Ok(Series {
        label,
        points: by_n
            .into_iter()
            .map(|(n, v)| {
                let ci = MeanCi::of(&v);
                (n as f64, ci.mean, ci.lo(), ci.hi())
            })
            .collect(),
        ribbon,
    })
}

/// Tidy long-format CSV of a set of series.
pub fn series_csv(x_name: &str, series: &[Series]) -> String {
    let mut out = format!("series,{x_name},mean,lo,hi\n");
    for s in series {
        for (x, m, lo, hi) in &s.points {
            let _ = writeln!(out, "{},{x},{m},{lo},{hi}", s.label);
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// A line chart with optional confidence ribbons and a legend.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, m, lo, hi) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(lo.min(m));
        y1 = y1.max(hi.max(m));
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{top} V{bottom} H{right}" stroke="black" fill="none"/>"#
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(fx),
            bottom + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.ribbon && s.points.len() > 1 {
            let upper = s.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.3)));
            let lower = s.points.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.2)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                poly.join(" ")
            );
        }
        let line: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"#,
            left + 10.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{:.2}", v)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `regret.svg`, `regret_curves.csv`, `delta.svg` and
/// `delta_vs_n.csv` into `out_dir`.
pub fn emit_plots(results: &Path, replay: Option<&Path>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let regret = regret_series(results)?;
    let delta = delta_series(results, replay)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = [
        ("regret_curves.csv", series_csv("k", &regret)),
        (
            "regret.svg",
            line_chart_svg("Cumulative regret", "episode k", "mean cumulative regret", &regret),
        ),
        ("delta_vs_n.csv", series_csv("n", std::slice::from_ref(&delta))),
        (
            "delta.svg",
            line_chart_svg("Information gain", "observational episodes n", "mean delta", &[delta]),
        ),
    ];
    let mut paths = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
