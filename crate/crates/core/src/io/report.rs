//! Report serialization (JSON, CSV) and standalone SVG charts.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocol::{CilRunReport, GridCell};

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// One row per (arm, phase): `arm,phase,classes_seen,accuracy`.
pub fn accuracies_csv(reports: &[&CilRunReport]) -> Result<String> {
    let mut rows = vec![vec!["arm", "phase", "classes_seen", "accuracy"]
        .into_iter()
        .map(String::from)
        .collect()];
    for r in reports {
        for (k, a) in r.accuracies.iter().enumerate() {
            rows.push(vec![
                r.arm.name().to_string(),
                k.to_string(),
                r.plan.classes_through(k).len().to_string(),
                a.to_string(),
            ]);
        }
    }
    csv_string(rows)
}

/// Per-arm summary: `arm,average_accuracy,last_accuracy,base_accuracy,incremental_accuracy`.
pub fn summary_csv(reports: &[&CilRunReport]) -> Result<String> {
    let mut rows = vec![[
        "arm",
        "average_accuracy",
        "last_accuracy",
        "base_accuracy",
        "incremental_accuracy",
    ]
    .map(String::from)
    .to_vec()];
    for r in reports {
        rows.push(vec![
            r.arm.name().to_string(),
            r.average_accuracy.to_string(),
            r.last_accuracy.to_string(),
            r.split.base.to_string(),
            r.split.incremental.to_string(),
        ]);
    }
    csv_string(rows)
}

pub fn grid_csv(cells: &[GridCell]) -> Result<String> {
    let mut rows = vec![["lambda", "epochs", "validation_average", "validation_last"]
        .map(String::from)
        .to_vec()];
    for c in cells {
        rows.push(vec![
            c.lambda.to_string(),
            c.epochs.to_string(),
            c.validation_average.to_string(),
            c.validation_last.to_string(),
        ]);
    }
    csv_string(rows)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// A named polyline in data coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

struct Chart<'a> {
    title: &'a str,
    x_label: &'a str,
    y_label: &'a str,
    x_ticks: Vec<(f64, String)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(chart: &Chart<'_>, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (64.0, 150.0, 40.0, 56.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    // Accuracy axis is always [0, 1].
    let sy = |y: f64| top + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(chart.title)
    );
    for i in 0..=5 {
        let y = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#ddd"/><text x="{2}" y="{3:.2}" text-anchor="end">{4:.0}</text>"##,
            sy(y),
            left + pw,
            left - 6.0,
            sy(y) + 4.0,
            y * 100.0
        );
    }
    for (x, label) in &chart.x_ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(*x),
            top + ph + 18.0,
            escape(label)
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
        h - 14.0,
        escape(chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(chart.y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            escape(&ser.name),
            pts.join(" ")
        );
        for &(x, y) in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
            left + pw + 12.0,
            left + pw + 32.0,
            left + pw + 38.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Accuracy (%) against phase index, one polyline per report.
pub fn accuracy_curve_svg(reports: &[&CilRunReport]) -> String {
    let series: Vec<Series> = reports
        .iter()
        .map(|r| Series {
            name: r.arm.name().to_string(),
            points: r.accuracies.iter().enumerate().map(|(k, &a)| (k as f64, a)).collect(),
        })
        .collect();
    let k = reports.iter().map(|r| r.accuracies.len()).max().unwrap_or(1);
    let x_ticks = (0..k).map(|i| (i as f64, i.to_string())).collect();
    render(
        &Chart {
            title: "Accuracy after each phase",
            x_label: "phase",
            y_label: "accuracy (%)",
            x_ticks,
        },
        &series,
    )
}

/// Validation average accuracy against λ, one polyline per epoch budget.
pub fn lambda_sweep_svg(cells: &[GridCell]) -> String {
    let mut epochs: Vec<usize> = cells.iter().map(|c| c.epochs).collect();
    epochs.sort_unstable();
    epochs.dedup();
    let series: Vec<Series> = epochs
        .iter()
        .map(|&e| {
            let mut points: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.epochs == e)
                .map(|c| (c.lambda, c.validation_average))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                name: format!("e = {e}"),
                points,
            }
        })
        .collect();
    let mut lambdas: Vec<f64> = cells.iter().map(|c| c.lambda).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let x_ticks = lambdas.iter().map(|&l| (l, format!("{l}"))).collect();
    render(
        &Chart {
            title: "Validation accuracy against λ",
            x_label: "λ",
            y_label: "average accuracy (%)",
            x_ticks,
        },
        &series,
    )
}

/// Point counts of every `<polyline>` in an SVG document.
pub fn polyline_point_counts(svg: &str) -> Vec<usize> {
    svg.lines()
        .filter(|l| l.trim_start().starts_with("<polyline"))
        .filter_map(|l| {
            let start = l.find("points=\"")? + 8;
            let end = l[start..].find('"')? + start;
            Some(l[start..end].split_whitespace().count())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_groups_by_epochs() {
        let cells: Vec<GridCell> = [(0.2, 5), (0.1, 5), (0.1, 10)]
            .iter()
            .map(|&(lambda, epochs)| GridCell {
                lambda,
                epochs,
                validation_accuracies: vec![0.5],
                validation_average: 0.5,
                validation_last: 0.5,
            })
            .collect();
        let svg = lambda_sweep_svg(&cells);
        assert_eq!(polyline_point_counts(&svg), vec![2, 1]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn grid_csv_has_header_and_rows() {
        let csv = grid_csv(&[GridCell {
            lambda: 0.4,
            epochs: 20,
            validation_accuracies: vec![0.9, 0.8],
            validation_average: 0.85,
            validation_last: 0.8,
        }])
        .unwrap();
        assert_eq!(csv, "lambda,epochs,validation_average,validation_last\n0.4,20,0.85,0.8\n");
    }
}
