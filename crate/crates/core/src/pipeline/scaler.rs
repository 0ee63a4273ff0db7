//! Min-max feature scaling and the score mapping between [1, 5] and [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature affine map onto [0, 1] fitted on training rows.
///
/// Values outside the fitted range map outside [0, 1] and are not clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], names: &[&str]) -> Result<Self> {
        let dim = names.len();
        if rows.is_empty() {
            return Err(Error::EmptySplit("scaler fit"));
        }
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        for j in 0..dim {
            if !(max[j] > min[j]) {
                return Err(Error::DegenerateScaler(names[j].to_string()));
            }
        }
        Ok(Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            min,
            max,
        })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect())
    }

    pub fn inverse(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| v * (hi - lo) + lo)
            .collect())
    }
}

/// Maps a [1, 5] score onto [0, 1].
pub fn scale_target(score: f64) -> f64 {
    (score - 1.0) / 4.0
}

pub fn unscale_target(y: f64) -> f64 {
    4.0 * y + 1.0
}
