use serde::{Deserialize, Serialize};

use super::score::{IndexScore, ERROR_FLOOR, FAULT_CEILING};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub log_error: f64,
    pub cumulative_frequency: f64,
}

/// Normalized cumulative frequency of log10 errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeCurve {
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot build a curve from zero scores")]
pub struct EmptyScores;

/// log10 of an error after clamping to the floor and fault ceiling.
pub fn log_error(error: f64) -> f64 {
    let e = if error.is_nan() { FAULT_CEILING } else { error };
    e.clamp(ERROR_FLOOR, FAULT_CEILING).log10()
}

pub fn cumulative_curve(scores: &[IndexScore]) -> Result<CumulativeCurve, EmptyScores> {
    let errors: Vec<f64> = scores.iter().map(|s| s.error).collect();
    curve_from_errors(&errors)
}

pub fn curve_from_errors(errors: &[f64]) -> Result<CumulativeCurve, EmptyScores> {
    if errors.is_empty() {
        return Err(EmptyScores);
    }
    let mut logs: Vec<f64> = errors.iter().map(|&e| log_error(e)).collect();
    logs.sort_by(f64::total_cmp);
    let total = logs.len() as f64;
    let mut points: Vec<CurvePoint> = Vec::new();
    for (i, &v) in logs.iter().enumerate() {
        // the last occurrence of a value carries its full count
        if logs.get(i + 1) == Some(&v) {
            continue;
        }
        points.push(CurvePoint {
            log_error: v,
            cumulative_frequency: (i + 1) as f64 / total,
        });
    }
    Ok(CumulativeCurve { points })
}

impl CumulativeCurve {
    /// Fraction of scores at or below `log_error`.
    pub fn frequency_at(&self, log_error: f64) -> f64 {
        self.points
            .iter()
            .take_while(|p| p.log_error <= log_error)
            .last()
            .map_or(0.0, |p| p.cumulative_frequency)
    }
}
