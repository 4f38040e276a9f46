//! Report files: `learning_curve.csv`, `cumulative_curve.csv`, `report.json`
//! and optional SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::curve::{CumulativeCurve, CurvePoint};
use super::score::{IndexScore, ERROR_FLOOR, FAULT_CEILING};
use crate::kfold::{relative_improvement, ExperimentSummary, LossRecord, LossSummary, Protocol, UnitKind};

pub const REPORT_SCHEMA: &str = "symkfcv-report";
pub const REPORT_VERSION: u32 = 1;

pub const METRIC_DEFINITION: &str = "relative squared error: sum((y_hat - y)^2) / sum((y - mean(y))^2) over the index's stored points, \
     plain mean squared error when the targets are constant; errors are clamped to [1e-12, 1e6] \
     before log10, and failed generations or fits score 1e6";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> ReportError {
    ReportError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Everything a report can draw on.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub summaries: Vec<ExperimentSummary>,
    pub scores: Vec<IndexScore>,
    pub curve: Option<CumulativeCurve>,
    pub plots: bool,
}

/// One named learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub records: Vec<LossRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub unit: UnitKind,
    pub avg_train: f64,
    pub avg_val: f64,
    pub records: Vec<LossRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representative_fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub indices: usize,
    pub faulted: usize,
    pub degenerate: usize,
    pub median_log_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub definition: String,
    pub floor: f64,
    pub ceiling: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub version: u32,
    pub metric: MetricReport,
    pub protocols: Vec<ProtocolReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_improvement_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationReport>,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

/// Learning curves of a set of summaries: the epoch records of a baseline
/// run and one curve per fold of a k-fold run.
pub fn learning_series(summaries: &[ExperimentSummary]) -> Vec<Series> {
    let mut out = Vec::new();
    for s in summaries {
        match s.protocol {
            Protocol::Baseline => out.push(Series {
                name: "baseline".into(),
                records: s.summary.records.clone(),
            }),
            Protocol::Kfcv => {
                for (i, t) in s.fold_trajectories.iter().enumerate() {
                    out.push(Series {
                        name: format!("fold_{i}"),
                        records: t.records.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Writes the learning curves side by side. A single series gets the plain
/// `unit,train_loss,val_loss` header; several get name-prefixed column pairs,
/// with empty cells where a series has no record for a unit.
pub fn write_learning_curve(path: &Path, series: &[Series]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["unit".to_string()];
    if let [only] = series {
        let _ = only;
        header.extend(["train_loss".into(), "val_loss".into()]);
    } else {
        for s in series {
            header.push(format!("{}_train_loss", s.name));
            header.push(format!("{}_val_loss", s.name));
        }
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut units: Vec<usize> = series.iter().flat_map(|s| s.records.iter().map(|r| r.unit)).collect();
    units.sort_unstable();
    units.dedup();
    for u in units {
        let mut row = vec![u.to_string()];
        for s in series {
            match s.records.iter().find(|r| r.unit == u) {
                Some(r) => {
                    row.push(r.train_loss.to_string());
                    row.push(r.val_loss.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Inverse of [`write_learning_curve`]. A single-series file comes back
/// under the name `series`.
pub fn read_learning_curve(path: &Path) -> Result<Vec<Series>, ReportError> {
    let bad = |message: String| ReportError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    if header.first().map(String::as_str) != Some("unit") || header.len() % 2 != 1 || header.len() < 3 {
        return Err(bad("malformed header".into()));
    }
    let mut series: Vec<Series> = header[1..]
        .chunks(2)
        .map(|pair| {
            let name = pair[0].strip_suffix("_train_loss").unwrap_or("series");
            Series {
                name: if name == "train_loss" { "series".into() } else { name.to_string() },
                records: Vec::new(),
            }
        })
        .collect();
    if header.len() == 3 && header[1] == "train_loss" {
        series[0].name = "series".into();
    }
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let unit: usize = row[0].parse().map_err(|_| bad(format!("bad unit `{}`", &row[0])))?;
        for (i, s) in series.iter_mut().enumerate() {
            let (t, v) = (&row[1 + 2 * i], &row[2 + 2 * i]);
            if t.is_empty() && v.is_empty() {
                continue;
            }
            let parse = |x: &str| x.parse::<f64>().map_err(|_| bad(format!("bad loss `{x}`")));
            s.records.push(LossRecord {
                unit,
                train_loss: parse(t)?,
                val_loss: parse(v)?,
            });
        }
    }
    Ok(series)
}

pub fn write_cumulative_curve(path: &Path, curve: &CumulativeCurve) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["log_error", "cum_freq"]).map_err(|e| csv_err(path, e))?;
    for p in &curve.points {
        w.write_record([p.log_error.to_string(), p.cumulative_frequency.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_cumulative_curve(path: &Path) -> Result<CumulativeCurve, ReportError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(["log_error", "cum_freq"]) {
        return Err(ReportError::Format {
            path: path.to_path_buf(),
            message: "header must be log_error,cum_freq".into(),
        });
    }
    let points = r
        .deserialize::<(f64, f64)>()
        .map(|row| {
            row.map(|(log_error, cumulative_frequency)| CurvePoint {
                log_error,
                cumulative_frequency,
            })
            .map_err(|e| csv_err(path, e))
        })
        .collect::<Result<_, _>>()?;
    Ok(CumulativeCurve { points })
}

fn protocol_report(s: &ExperimentSummary) -> ProtocolReport {
    ProtocolReport {
        protocol: s.protocol,
        unit: s.summary.unit,
        avg_train: s.summary.avg_train,
        avg_val: s.summary.avg_val,
        records: s.summary.records.clone(),
        representative_fold: s.representative_fold,
    }
}

/// Improvement of the k-fold average validation loss over the baseline's,
/// when both are present and the baseline loss is positive.
pub fn improvement(summaries: &[ExperimentSummary]) -> Option<f64> {
    let avg = |p: Protocol| summaries.iter().find(|s| s.protocol == p).map(|s| s.summary.avg_val);
    relative_improvement(avg(Protocol::Baseline)?, avg(Protocol::Kfcv)?).ok()
}

fn evaluation_report(scores: &[IndexScore]) -> Option<EvaluationReport> {
    if scores.is_empty() {
        return None;
    }
    let mut logs: Vec<f64> = scores.iter().map(|s| super::curve::log_error(s.error)).collect();
    logs.sort_by(f64::total_cmp);
    let n = logs.len();
    let median = if n % 2 == 1 {
        logs[n / 2]
    } else {
        (logs[n / 2 - 1] + logs[n / 2]) / 2.0
    };
    Some(EvaluationReport {
        indices: n,
        faulted: scores.iter().filter(|s| s.faulted).count(),
        degenerate: scores.iter().filter(|s| s.degenerate).count(),
        median_log_error: median,
    })
}

/// Writes every report file that the inputs support and returns `report.json`'s contents.
pub fn emit_report(inputs: &ReportInputs, dir: &Path) -> Result<Report, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();

    let series = learning_series(&inputs.summaries);
    if !series.is_empty() {
        write_learning_curve(&dir.join("learning_curve.csv"), &series)?;
        files.push("learning_curve.csv".to_string());
        if inputs.plots {
            write_text(&dir.join("learning_curve.svg"), &learning_svg(&series))?;
            files.push("learning_curve.svg".to_string());
        }
    }
    if let Some(curve) = &inputs.curve {
        write_cumulative_curve(&dir.join("cumulative_curve.csv"), curve)?;
        files.push("cumulative_curve.csv".to_string());
        if inputs.plots {
            write_text(&dir.join("cumulative_curve.svg"), &cumulative_svg(curve))?;
            files.push("cumulative_curve.svg".to_string());
        }
    }
    if !inputs.scores.is_empty() {
        let path = dir.join("scores.jsonl");
        let mut text = String::new();
        for s in &inputs.scores {
            text.push_str(&serde_json::to_string(s).expect("score serializes"));
            text.push('\n');
        }
        write_text(&path, &text)?;
        files.push("scores.jsonl".to_string());
    }
    files.push("report.json".to_string());

    let mut notes = vec![
        "relative_improvement_percent = (baseline avg_val - kfcv avg_val) / baseline avg_val * 100".to_string(),
        "errors are measured on each index's stored points".to_string(),
    ];
    if inputs.summaries.iter().any(|s| s.protocol == Protocol::Kfcv) {
        notes.push("k-fold train loss per fold is that fold's final-epoch training loss".to_string());
    }
    let report = Report {
        schema: REPORT_SCHEMA.into(),
        version: REPORT_VERSION,
        metric: MetricReport {
            name: "relative squared error".into(),
            definition: METRIC_DEFINITION.into(),
            floor: ERROR_FLOOR,
            ceiling: FAULT_CEILING,
        },
        protocols: inputs.summaries.iter().map(protocol_report).collect(),
        relative_improvement_percent: improvement(&inputs.summaries),
        evaluation: evaluation_report(&inputs.scores),
        files,
        notes,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_text(&dir.join("report.json"), &text)?;
    Ok(report)
}

fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_report(path: &Path) -> Result<Report, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if lo < hi {
                (lo, hi)
            } else if lo.is_finite() {
                (lo - 0.5, lo + 0.5)
            } else {
                (0.0, 1.0)
            }
        };
        Frame {
            x: span(&mut xs.clone()),
            y: span(&mut ys.clone()),
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = (x - self.x.0) / (self.x.1 - self.x.0);
        let fy = (y - self.y.0) / (self.y.1 - self.y.0);
        (MARGIN + fx * (W - 2.0 * MARGIN), H - MARGIN - fy * (H - 2.0 * MARGIN))
    }
}

fn svg_open(title: &str, frame: &Frame, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let (x0, y0) = (MARGIN, H - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {} L{x0} {y0} L{} {y0}" fill="none" stroke="black"/>"#,
        MARGIN,
        W - MARGIN
    );
    let _ = writeln!(s, r#"<text x="{x0}" y="{}">{:.3}</text>"#, y0 + 15.0, frame.x.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, W - MARGIN, y0 + 15.0, frame.x.1);
    let _ = writeln!(s, r#"<text x="{}" y="{y0}" text-anchor="end">{:.3}</text>"#, x0 - 4.0, frame.y.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, x0 - 4.0, MARGIN + 4.0, frame.y.1);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
    s
}

fn polyline(s: &mut String, frame: &Frame, pts: &[(f64, f64)], color: &str, dashed: bool) {
    let coords: Vec<String> = pts
        .iter()
        .map(|&(x, y)| {
            let (a, b) = frame.px(x, y);
            format!("{a:.2},{b:.2}")
        })
        .collect();
    let dash = if dashed { r#" stroke-dasharray="5,3""# } else { "" };
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
        coords.join(" ")
    );
}

fn learning_svg(series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.records.iter());
    let frame = Frame::fit(
        all().map(|r| r.unit as f64),
        all().flat_map(|r| [r.train_loss, r.val_loss]),
    );
    let mut s = svg_open("Learning curve (solid: train, dashed: validation)", &frame, "epoch", "loss");
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let train: Vec<(f64, f64)> = ser.records.iter().map(|r| (r.unit as f64, r.train_loss)).collect();
        let val: Vec<(f64, f64)> = ser.records.iter().map(|r| (r.unit as f64, r.val_loss)).collect();
        polyline(&mut s, &frame, &train, color, false);
        polyline(&mut s, &frame, &val, color, true);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - MARGIN + 4.0,
            MARGIN + 14.0 * i as f64,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    s
}

fn cumulative_svg(curve: &CumulativeCurve) -> String {
    let frame = Frame {
        x: (ERROR_FLOOR.log10(), FAULT_CEILING.log10()),
        y: (0.0, 1.0),
    };
    let mut s = svg_open(
        "Normalized cumulative frequency",
        &frame,
        "log10 relative squared error",
        "cumulative frequency",
    );
    // step function: flat until the next observed error
    let mut pts = vec![(frame.x.0, 0.0)];
    let mut last = 0.0;
    for p in &curve.points {
        pts.push((p.log_error, last));
        pts.push((p.log_error, p.cumulative_frequency));
        last = p.cumulative_frequency;
    }
    pts.push((frame.x.1, last));
    polyline(&mut s, &frame, &pts, PALETTE[0], false);
    s.push_str("</svg>\n");
    s
}

/// Builds a summary-only report input from loss tables, e.g. published ones.
pub fn summaries_from_tables(baseline: LossSummary, kfcv: LossSummary) -> Vec<ExperimentSummary> {
    vec![
        ExperimentSummary::bare(Protocol::Baseline, baseline),
        ExperimentSummary::bare(Protocol::Kfcv, kfcv),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::curve::curve_from_errors;
    use crate::kfold::reference;

    #[test]
    fn table_injection_reports_headline_improvement() {
        let dir = tempfile::tempdir().unwrap();
        let inputs = ReportInputs {
            summaries: summaries_from_tables(reference::baseline_summary(), reference::kfcv_summary()),
            ..Default::default()
        };
        let report = emit_report(&inputs, dir.path()).unwrap();
        let pct = report.relative_improvement_percent.unwrap();
        assert!((pct - reference::REPORTED_IMPROVEMENT_PERCENT).abs() < 0.01, "{pct}");
        let back = read_report(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn learning_curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lc.csv");
        let a = Series {
            name: "fold_0".into(),
            records: reference::baseline_summary().records[..3].to_vec(),
        };
        let b = Series {
            name: "fold_1".into(),
            records: reference::baseline_summary().records[..2].to_vec(),
        };
        write_learning_curve(&path, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_learning_curve(&path).unwrap(), vec![a.clone(), b]);

        write_learning_curve(&path, std::slice::from_ref(&a)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("unit,train_loss,val_loss\n"));
        assert_eq!(read_learning_curve(&path).unwrap()[0].records, a.records);
    }

    #[test]
    fn cumulative_round_trip_and_plot() {
        let dir = tempfile::tempdir().unwrap();
        let curve = curve_from_errors(&[0.3, 1e-7, 12.5, 0.3]).unwrap();
        let path = dir.path().join("c.csv");
        write_cumulative_curve(&path, &curve).unwrap();
        assert_eq!(read_cumulative_curve(&path).unwrap(), curve);
        let svg = cumulative_svg(&curve);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
