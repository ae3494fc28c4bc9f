//! Minimal SVG line plots. The CSV files are authoritative; plots are
//! always rebuilt from them.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{HarnessError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One line with an optional symmetric error band.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub err: Option<Vec<f64>>,
}

fn fmt(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn render(series: &[Series], title: &str, x_label: &str, y_label: &str) -> String {
    let finite = |v: &f64| v.is_finite();
    let xs = series
        .iter()
        .flat_map(|s| s.x.iter().copied())
        .filter(finite);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let ys = series.iter().flat_map(|s| {
        let e = s.err.clone().unwrap_or_else(|| vec![0.0; s.y.len()]);
        s.y.iter()
            .zip(e)
            .flat_map(|(y, e)| [y - e, y + e])
            .collect::<Vec<_>>()
    });
    let (mut y0, mut y1) = ys
        .filter(finite)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    let (x0, x1) = if x0.is_finite() {
        (x0, x1.max(x0 + 1e-12))
    } else {
        (0.0, 1.0)
    };
    if !y0.is_finite() {
        y0 = 0.0;
        y1 = 1.0;
    }
    y0 = y0.min(0.0);
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_L + pw / 2.0,
        escape(title)
    );
    for k in 0..=4 {
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_L}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN_L + pw,
            sy(fy),
            sy(fy),
            MARGIN_L - 6.0,
            sy(fy) + 4.0,
            fmt(fy)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(fx),
            MARGIN_T + ph + 18.0,
            fmt(fx)
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64, f64)> =
            s.x.iter()
                .zip(&s.y)
                .enumerate()
                .filter(|(_, (x, y))| x.is_finite() && y.is_finite())
                .map(|(i, (&x, &y))| (x, y, s.err.as_ref().map_or(0.0, |e| e[i])))
                .collect();
        if pts.is_empty() {
            continue;
        }
        if s.err.is_some() {
            let mut d = String::new();
            for (i, (x, y, e)) in pts.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2} ",
                    if i == 0 { "M" } else { "L" },
                    sx(*x),
                    sy(y + e)
                );
            }
            for (x, y, e) in pts.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", sx(*x), sy(y - e));
            }
            let _ = writeln!(
                out,
                r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                d
            );
        }
        let line: Vec<String> = pts
            .iter()
            .map(|(x, y, _)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = MARGIN_T + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Max-over-players curves of `metric` from a curves.csv file.
pub fn svg_from_csv(path: &Path, metric: &str, title: &str) -> Result<String> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            HarnessError::config(path.display().to_string(), format!("missing column {name}"))
        })
    };
    let (c_policy, c_metric, c_round, c_player, c_mean, c_err) = (
        col("policy")?,
        col("metric")?,
        col("round")?,
        col("player")?,
        col("mean")?,
        col("stderr")?,
    );
    let mut series: Vec<Series> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if &rec[c_metric] != metric || &rec[c_player] != "max" {
            continue;
        }
        let num = |c: usize| rec[c].parse::<f64>().unwrap_or(f64::NAN);
        let name = &rec[c_policy];
        let idx = match series.iter().position(|s| s.name == name) {
            Some(i) => i,
            None => {
                series.push(Series {
                    name: name.to_string(),
                    x: Vec::new(),
                    y: Vec::new(),
                    err: Some(Vec::new()),
                });
                series.len() - 1
            }
        };
        let s = &mut series[idx];
        s.x.push(num(c_round));
        s.y.push(num(c_mean));
        if let Some(e) = s.err.as_mut() {
            e.push(num(c_err));
        }
    }
    Ok(render(
        &series,
        title,
        "round",
        &format!("max {metric} over players"),
    ))
}
