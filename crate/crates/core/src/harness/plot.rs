//! SVG figures from a results CSV: one file per metric, with the mean curve
//! and 95% band of every algorithm against `T` (or `m` when `T` is fixed).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use super::run::csv_header;
use crate::csvfmt::parse_f64;
use crate::error::{Error, Result};

pub const PLOT_METRICS: [&str; 4] = ["regret", "regret_ratio", "violation_projected", "violation_dual"];

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

/// One aggregate point of one metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub mean: f64,
    pub sd: f64,
    pub n: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub algo: String,
    pub metric: String,
    pub points: Vec<BandPoint>,
}

struct AggLine {
    algo: String,
    t: f64,
    m: f64,
    fields: Vec<String>,
}

/// Aggregate series per metric and algorithm, in order of first appearance.
/// Returns the x-axis label as well.
pub fn load_series<R: BufRead>(input: R) -> Result<(String, Vec<Series>)> {
    let header = csv_header();
    let names: Vec<&str> = header.split(',').collect();
    let col = |name: &str| names.iter().position(|n| *n == name).expect("known column");
    let mut lines = input.lines();
    match lines.next() {
        Some(h) if h.as_deref().map(|h| h == header).unwrap_or(false) => {}
        Some(Err(e)) => return Err(e.into()),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "header does not match the results schema".into(),
            })
        }
    }
    let mut aggs = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx as u64 + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != names.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, got {}", names.len(), fields.len()),
            });
        }
        match fields[0].as_str() {
            "result" | "slope" => {}
            "aggregate" => {
                let num = |name: &str| {
                    parse_f64(&fields[col(name)]).ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: format!("column {name}: bad number '{}'", fields[col(name)]),
                    })
                };
                aggs.push(AggLine {
                    algo: fields[col("algo")].clone(),
                    t: num("T")?,
                    m: num("m")?,
                    fields: fields.clone(),
                });
                for metric in PLOT_METRICS {
                    for c in [metric.to_string(), format!("{metric}_sd"), format!("{metric}_ci_lo"), format!("{metric}_ci_hi"), "n".into()] {
                        num(&c)?;
                    }
                }
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown row kind '{other}'"),
                })
            }
        }
    }
    let ts: BTreeSet<u64> = aggs.iter().map(|a| a.t.to_bits()).collect();
    let by_t = ts.len() > 1 || aggs.iter().map(|a| a.m.to_bits()).collect::<BTreeSet<_>>().len() <= 1;
    let label = if by_t { "T" } else { "m" };
    let mut algos: Vec<String> = Vec::new();
    for a in &aggs {
        if !algos.contains(&a.algo) {
            algos.push(a.algo.clone());
        }
    }
    let get = |a: &AggLine, name: &str| parse_f64(&a.fields[col(name)]).unwrap_or(f64::NAN);
    let mut series = Vec::new();
    for metric in PLOT_METRICS {
        for algo in &algos {
            let mut points: Vec<BandPoint> = aggs
                .iter()
                .filter(|a| &a.algo == algo)
                .map(|a| BandPoint {
                    x: if by_t { a.t } else { a.m },
                    mean: get(a, metric),
                    sd: get(a, &format!("{metric}_sd")),
                    n: get(a, "n"),
                    ci_lo: get(a, &format!("{metric}_ci_lo")),
                    ci_hi: get(a, &format!("{metric}_ci_hi")),
                })
                .collect();
            points.sort_by(|p, q| p.x.total_cmp(&q.x));
            series.push(Series {
                algo: algo.clone(),
                metric: metric.to_string(),
                points,
            });
        }
    }
    Ok((label.to_string(), series))
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|s| s * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Render one metric's series as an SVG document.
pub fn render_svg(metric: &str, x_label: &str, series: &[&Series]) -> String {
    let finite = |v: f64| v.is_finite();
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.x)).filter(|v| finite(*v)).collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().flat_map(|p| [p.mean, p.ci_lo, p.ci_hi]))
        .filter(|v| finite(*v))
        .collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo <= 1e-12 * (1.0 + lo.abs()) {
            let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
            (lo - pad, hi + pad)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{metric}</text>"#, MARGIN_L + pw / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, MARGIN_T + ph, MARGIN_T + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MARGIN_T + ph + 18.0, fmt_tick(t));
    }
    for t in nice_ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_L}" y2="{y:.2}" stroke="black"/>"#, MARGIN_L - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_L - 8.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{metric}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0
    );

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<&BandPoint> = ser.points.iter().filter(|p| finite(p.x) && finite(p.mean)).collect();
        let band: Vec<&BandPoint> = pts.iter().copied().filter(|p| finite(p.ci_lo) && finite(p.ci_hi)).collect();
        if band.len() >= 2 {
            let upper = band.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.ci_hi)));
            let lower = band.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.ci_lo)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                s,
                r#"<polygon class="band" data-algo="{}" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                ser.algo,
                poly.join(" ")
            );
        } else {
            for p in &band {
                let _ = writeln!(
                    s,
                    r#"<line class="band" data-algo="{}" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}" stroke-opacity="0.4" stroke-width="6"/>"#,
                    ser.algo,
                    sy(p.ci_lo),
                    sy(p.ci_hi),
                    x = sx(p.x)
                );
            }
        }
        if pts.len() >= 2 {
            let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean))).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="mean" data-algo="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                ser.algo,
                line.join(" ")
            );
        }
        for p in &pts {
            let _ = writeln!(
                s,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(p.x),
                sy(p.mean)
            );
        }
        let ly = MARGIN_T + 10.0 + 20.0 * k as f64;
        let lx = WIDTH - MARGIN_R + 15.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            ser.algo
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write `<metric>.svg` for every plotted metric into `out_dir`.
pub fn plot_csv(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let file = std::fs::File::open(csv_path)?;
    let (label, series) = load_series(std::io::BufReader::new(file))?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for metric in PLOT_METRICS {
        let mine: Vec<&Series> = series.iter().filter(|s| s.metric == metric).collect();
        let path = out_dir.join(format!("{metric}.svg"));
        std::fs::write(&path, render_svg(metric, &label, &mine))?;
        written.push(path);
    }
    Ok(written)
}
