//! Minimal SVG line charts from CSV columns.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: column {column:?} is not numeric: {value:?}")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("no data rows")]
    NoData,
    #[error("writing chart: {0}")]
    Io(#[from] std::io::Error),
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, ChartError> {
    headers.iter().position(|h| h == name).ok_or_else(|| ChartError::UnknownColumn(name.to_string()))
}

fn parse_cell(value: &str, row: usize, column: &str) -> Result<Option<f64>, ChartError> {
    if value == "NA" || value.is_empty() {
        return Ok(None);
    }
    value
        .parse::<f64>()
        .map(Some)
        .map_err(|_| ChartError::NotNumeric { row, column: column.to_string(), value: value.to_string() })
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1e5 {
        format!("{v:.3e}")
    } else if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render one polyline per y column against `x_column`. `NA` cells are
/// skipped. A series with a single point is drawn as a marker only.
pub fn render_chart(csv_text: &str, x_column: &str, y_columns: &[&str], title: &str) -> Result<String, ChartError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let x_idx = column(&headers, x_column)?;
    let y_idx: Vec<usize> = y_columns.iter().map(|c| column(&headers, c)).collect::<Result<_, _>>()?;

    let mut series: Vec<Series> = y_columns.iter().map(|c| Series { name: c.to_string(), points: Vec::new() }).collect();
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        rows += 1;
        let Some(x) = parse_cell(&record[x_idx], row, x_column)? else { continue };
        for (s, &i) in series.iter_mut().zip(&y_idx) {
            if let Some(y) = parse_cell(&record[i], row, &s.name)? {
                s.points.push((x, y));
            }
        }
    }
    if rows == 0 {
        return Err(ChartError::NoData);
    }

    let (x_lo, x_hi) = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (mut y_lo, y_hi) = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    if y_lo > 0.0 && y_lo < 0.25 * y_hi {
        y_lo = 0.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + plot_w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT} {TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_column)
    );
    let y_label = if y_columns.len() == 1 { y_columns[0] } else { "value" };
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if s.points.len() >= 2 {
            let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        }
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_chart(csv_text: &str, x_column: &str, y_columns: &[&str], path: &Path) -> Result<(), ChartError> {
    let title = path.file_stem().and_then(|s| s.to_str()).unwrap_or("chart");
    let svg = render_chart(csv_text, x_column, y_columns, title)?;
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "peers,flood,bk\n500,3.5,4.5\n1000,4.0,5.0\n1500,4.5,NA\n";

    #[test]
    fn one_polyline_per_series() {
        let svg = render_chart(CSV, "peers", &["flood", "bk"], "t").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 5);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg, render_chart(CSV, "peers", &["flood", "bk"], "t").unwrap());
    }

    #[test]
    fn single_row_draws_markers_only() {
        let svg = render_chart("peers,flood\n500,3.5\n", "peers", &["flood"], "t").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(render_chart(CSV, "peers", &["nope"], "t"), Err(ChartError::UnknownColumn(c)) if c == "nope"));
        assert!(matches!(render_chart("peers,flood\n", "peers", &["flood"], "t"), Err(ChartError::NoData)));
        assert!(matches!(render_chart("peers,flood\n1,x\n", "peers", &["flood"], "t"), Err(ChartError::NotNumeric { .. })));
    }
}
