use chrono::NaiveDate;

use super::FeatureTable;
use crate::error::{Error, Result};
use crate::neural::Dataset;

/// Lookback windows over a feature table.
///
/// Sample `i` is rows `i .. i + lookback` with the target of row
/// `i + lookback`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub lookback: usize,
    pub names: Vec<String>,
    /// Target date of each sample.
    pub dates: Vec<NaiveDate>,
    pub targets: Vec<f64>,
    /// `samples × lookback × width`, row-major.
    sequences: Vec<f64>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn sequence(&self, i: usize) -> &[f64] {
        let n = self.lookback * self.width();
        &self.sequences[i * n..(i + 1) * n]
    }

    /// Same samples as a training set.
    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.sequences.clone(), self.targets.clone(), self.lookback, self.width())
    }
}

pub fn make_sequences(table: &FeatureTable, lookback: usize) -> Result<WindowedDataset> {
    if lookback == 0 {
        return Err(Error::InvalidParameter("lookback must be at least 1".into()));
    }
    if table.len() <= lookback {
        return Err(Error::TooShort { needed: lookback + 1, actual: table.len() });
    }
    let n = table.len() - lookback;
    let mut sequences = Vec::with_capacity(n * lookback * table.width());
    for i in 0..n {
        for row in &table.rows[i..i + lookback] {
            sequences.extend_from_slice(row);
        }
    }
    Ok(WindowedDataset {
        lookback,
        names: table.names.clone(),
        dates: table.dates[lookback..].to_vec(),
        targets: table.target[lookback..].to_vec(),
        sequences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ModelVariant;

    fn table(n: usize) -> FeatureTable {
        let d0 = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        FeatureTable {
            variant: ModelVariant::Lstm,
            dates: (0..n).map(|i| d0 + chrono::Days::new(i as u64)).collect(),
            names: vec!["a".into(), "b".into()],
            rows: (0..n).map(|i| vec![i as f64, -(i as f64)]).collect(),
            target: (0..n).map(|i| 100.0 + i as f64).collect(),
            join_dropped: 0,
        }
    }

    #[test]
    fn boundary_gives_one_sample() {
        let w = make_sequences(&table(23), 22).unwrap();
        assert_eq!(w.len(), 1);
        assert!(make_sequences(&table(22), 22).is_err());
    }

    #[test]
    fn index_arithmetic() {
        let t = table(30);
        let w = make_sequences(&t, 5).unwrap();
        assert_eq!(w.len(), 25);
        assert_eq!(w.targets[0], 105.0);
        assert_eq!(w.dates[0], t.dates[5]);
        assert_eq!(w.sequence(0), &[0.0, -0.0, 1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0]);
        assert_eq!(w.sequence(24)[8], 28.0);
        let d = w.to_dataset().unwrap();
        assert_eq!(d.sequence(3), w.sequence(3));
    }

    #[test]
    fn long_and_short_lookbacks() {
        assert_eq!(make_sequences(&table(100), 66).unwrap().len(), 34);
        assert_eq!(make_sequences(&table(100), 5).unwrap().len(), 95);
    }
}
