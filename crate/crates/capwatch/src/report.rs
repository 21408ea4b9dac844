//! Output files: series CSV, metrics JSON and a plain SVG line chart.

use std::fmt::Write as _;

use crate::scenarios::{Provenance, ScenarioResult, Series};

/// `v` rounded to 12 significant digits, printed in the shortest form that
/// reads back to the rounded value.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("valid float");
    format!("{rounded}")
}

fn provenance_lines(p: &Provenance, prefix: &str) -> String {
    format!(
        "{prefix}tool_version: {}\n{prefix}config_hash: {}\n{prefix}seed: {}\n{prefix}schema_version: {}\n",
        p.tool_version, p.config_hash, p.seed, p.schema_version
    )
}

/// CSV with `#` provenance comments ahead of the header row.
pub fn series_csv(r: &ScenarioResult) -> String {
    let mut out = format!("# scenario: {}\n", r.name);
    out.push_str(&provenance_lines(&r.provenance, "# "));
    out.push_str(&r.series.columns.join(","));
    out.push('\n');
    for row in &r.series.rows {
        let cells: Vec<String> = row.iter().map(|&v| format_sig(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn metrics_json(r: &ScenarioResult) -> String {
    let mut s = serde_json::to_string_pretty(&r.metrics).expect("metrics serialise");
    s.push('\n');
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

/// Line chart of every series column against the first one.
pub fn series_svg(r: &ScenarioResult) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 180.0, 30.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let Series { columns, rows } = &r.series;
    let plotted: Vec<usize> = (1..columns.len()).filter(|&i| columns[i] != "step").collect();

    let xs: Vec<f64> = rows.iter().map(|row| row[0]).collect();
    let (x_lo, mut x_hi) = (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0));
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    let values = plotted.iter().flat_map(|&i| rows.iter().map(move |row| row[i]));
    let (mut y_lo, mut y_hi) = values.fold((0.0f64, 1.0f64), |(a, b), v| (a.min(v), b.max(v)));
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| top + ph - (y - y_lo) / (y_hi - y_lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        s,
        "<!--\nscenario: {}\n{}-->\n",
        r.name,
        provenance_lines(&r.provenance, "")
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-size="14">{}</text>"#, r.name);

    for t in ticks(x_lo, x_hi) {
        let x = px(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#eee"/>"##,
            top + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + ph + 16.0,
            format_sig(t)
        );
    }
    for t in ticks(y_lo, y_hi) {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eee"/>"##,
            left + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 4.0,
            format_sig(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        columns[0]
    );

    for (n, &i) in plotted.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let mut d = String::new();
        for (k, row) in rows.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2}",
                if k == 0 { "M" } else { " L" },
                px(row[0]),
                py(row[i])
            );
        }
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let ly = top + 14.0 + 18.0 * n as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            columns[i]
        );
    }
    s.push_str("</svg>\n");
    s
}
