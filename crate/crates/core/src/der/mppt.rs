//! Time series of available (maximum-power-point) solar output, sampled
//! with zero-order hold.

use std::path::Path;

use super::DerError;

/// Piecewise-constant available-power profile, MW on the device's own
/// rating. `sample` returns the most recent value at or before the query
/// time; queries before the first sample clamp to it.
#[derive(Debug, Clone)]
pub struct MpptSeries {
    times_s: Vec<f64>,
    values_mw: Vec<f64>,
}

impl MpptSeries {
    /// A flat profile.
    pub fn constant(p_mw: f64) -> Self {
        Self {
            times_s: vec![0.0],
            values_mw: vec![p_mw],
        }
    }

    pub fn new(samples: &[(f64, f64)]) -> Result<Self, DerError> {
        if samples.is_empty() {
            return Err(DerError::EmptySeries);
        }
        for (row, pair) in samples.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 {
                return Err(DerError::UnsortedSeries(row + 1));
            }
        }
        Ok(Self {
            times_s: samples.iter().map(|s| s.0).collect(),
            values_mw: samples.iter().map(|s| s.1).collect(),
        })
    }

    /// Parses `time_s,p_mw` rows; a non-numeric first row is treated as a
    /// header. Blank lines and `#` comments are skipped.
    pub fn from_csv_str(text: &str) -> Result<Self, DerError> {
        let mut samples = Vec::new();
        for (row, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let (a, b) = match (fields.next(), fields.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(DerError::Parse {
                        row: row + 1,
                        message: "expected two comma-separated fields".into(),
                    })
                }
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(t), Ok(p)) => samples.push((t, p)),
                _ if samples.is_empty() => continue, // header row
                _ => {
                    return Err(DerError::Parse {
                        row: row + 1,
                        message: format!("cannot parse {a:?},{b:?} as numbers"),
                    })
                }
            }
        }
        Self::new(&samples)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DerError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| DerError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_str(&text)
    }

    /// Zero-order-hold sample at `t_s`.
    pub fn sample(&self, t_s: f64) -> Result<f64, DerError> {
        if t_s < 0.0 {
            return Err(DerError::NegativeTime(t_s));
        }
        let idx = self.times_s.partition_point(|&t| t <= t_s);
        Ok(self.values_mw[idx.saturating_sub(1)])
    }
}
