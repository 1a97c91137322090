use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::ResultRow;
use crate::error::{Error, Result};
use crate::model::{CodedPlacement, Storage};

pub const CSV_HEADER: &str = "grid_param,grid_value,strategy,metric,value,std_error,seed";

/// Formats like C's `%.9g`: nine significant digits, trailing zeros dropped,
/// exponent form outside `[1e-4, 1e9)`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // Let the formatter do the rounding, then read the exponent back.
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.grid_param,
            format_sig9(r.grid_value),
            r.strategy,
            r.metric,
            format_sig9(r.value),
            format_sig9(r.std_error),
            r.seed
        );
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart of `metric` against the grid value, one polyline per strategy.
pub fn svg_line_chart(rows: &[ResultRow], metric: &str) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 150.0, 30.0, 50.0);
    let rows: Vec<&ResultRow> = rows.iter().filter(|r| r.metric == metric).collect();
    let mut strategies: Vec<_> = rows.iter().map(|r| r.strategy).collect();
    strategies.sort_by_key(|s| s.name());
    strategies.dedup();

    let bounds = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(&mut rows.iter().map(|r| r.grid_value));
    let (y0, y1) = bounds(&mut rows.iter().map(|r| r.value));
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(y) + 4.0,
            format_sig9((y * 1e4).round() / 1e4)
        );
    }
    let mut xs: Vec<f64> = rows.iter().map(|r| r.grid_value).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in &xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            px(*x),
            h - bottom + 16.0,
            format_sig9(*x)
        );
    }
    let grid_param = rows.first().map(|r| r.grid_param.as_str()).unwrap_or("");
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" font-size="12" text-anchor="middle">{grid_param}</text>"#,
        (left + w - right) / 2.0,
        h - 12.0
    );
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-size="12">{metric}</text>"#);

    for (i, st) in strategies.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.strategy == *st)
            .map(|r| (r.grid_value, r.value))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        let ly = top + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="12">{st}</text>"#,
            w - right + 10.0,
            w - right + 30.0,
            w - right + 36.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `results.csv` and, when `svg` is set, one `<metric>.svg` per metric.
pub fn emit_report(rows: &[ResultRow], out_dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = vec![write(out_dir.join("results.csv"), &results_csv(rows))?];
    if svg {
        let mut metrics: Vec<&str> = rows.iter().map(|r| r.metric.as_str()).collect();
        metrics.sort();
        metrics.dedup();
        for m in metrics {
            written.push(write(out_dir.join(format!("{m}.svg")), &svg_line_chart(rows, m))?);
        }
    }
    Ok(written)
}

/// Nonzero entries as `node,file,fraction` lines.
pub fn placement_csv<S: Storage>(p: &S) -> String {
    let mut out = String::from("node,file,fraction\n");
    for n in 0..p.num_nodes() {
        for f in 0..p.num_files() {
            let v = p.fraction(n, f);
            if v != 0.0 {
                let _ = writeln!(out, "{n},{f},{}", format_sig9(v));
            }
        }
    }
    out
}

/// Reads a placement file; entries not listed are zero.
pub fn parse_placement_csv(text: &str, num_nodes: usize, num_files: usize) -> Result<CodedPlacement> {
    let mut p = CodedPlacement::zeros(num_nodes, num_files);
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            seen_header = true;
            if line.replace(' ', "") == "node,file,fraction" {
                continue;
            }
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let [n, f, v] = parts[..] else {
            return Err(Error::parse(i + 1, "expected node,file,fraction"));
        };
        let n: usize = n.parse().map_err(|_| Error::parse(i + 1, format!("bad node `{n}`")))?;
        let f: usize = f.parse().map_err(|_| Error::parse(i + 1, format!("bad file `{f}`")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad fraction `{v}`")))?;
        if n >= num_nodes || f >= num_files {
            return Err(Error::parse(
                i + 1,
                format!("entry ({n}, {f}) outside {num_nodes}x{num_files}"),
            ));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::parse(i + 1, format!("fraction {v} outside [0, 1]")));
        }
        p.set(n, f, v);
    }
    Ok(p)
}
