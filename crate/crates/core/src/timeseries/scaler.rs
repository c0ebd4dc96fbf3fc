use crate::error::{Error, Result};

/// Column-wise Min-Max scaler, `(x - min) / (max - min)`.
///
/// Fitted on a training segment and then applied unchanged to validation
/// and test rows, which may therefore land outside `[0, 1]`. A column that
/// was constant during fitting maps to 0 and inverts to its minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("scaler fit"))?.as_ref();
        if first.is_empty() {
            return Err(Error::Empty("scaler fit"));
        }
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in rows {
            let row = row.as_ref();
            check_width(row, min.len())?;
            for (j, v) in row.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        let scaler = MinMaxScaler { min, max };
        for j in scaler.constant_columns() {
            log::warn!("scaler column {j} is constant ({}); it will map to 0", scaler.min[j]);
        }
        Ok(scaler)
    }

    /// Rebuilds a scaler from stored bounds.
    pub fn from_bounds(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch { expected: min.len(), actual: max.len() });
        }
        if min.iter().zip(&max).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidParameter("scaler min exceeds max".into()));
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn constant_columns(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.min.len()).filter(|&j| self.max[j] == self.min[j])
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_width(row, self.width())?;
        Ok(row.iter().enumerate().map(|(j, v)| self.scale(j, *v)).collect())
    }

    pub fn inverse_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_width(row, self.width())?;
        Ok(row.iter().enumerate().map(|(j, v)| self.unscale(j, *v)).collect())
    }

    pub fn transform<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform_row(r.as_ref())).collect()
    }

    pub fn inverse<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.inverse_row(r.as_ref())).collect()
    }

    /// Scales a single value of column `j`.
    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range == 0.0 {
            0.0
        } else {
            (v - self.min[j]) / range
        }
    }

    pub fn unscale(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range == 0.0 {
            self.min[j]
        } else {
            v * range + self.min[j]
        }
    }
}

fn check_width(row: &[f64], width: usize) -> Result<()> {
    if row.len() != width {
        return Err(Error::DimensionMismatch { expected: width, actual: row.len() });
    }
    Ok(())
}
