use std::path::Path;

use chrono::NaiveDate;

use super::PriceSeries;
use crate::error::{Error, Result};

/// Header names of the date and close columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub date: String,
    pub close: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap { date: "Date".into(), close: "Close".into() }
    }
}

/// A row that did not make it into the series. `line` is 1-based and counts
/// the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub series: PriceSeries,
    pub skipped: Vec<SkippedRow>,
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    // Accept full ISO-8601 timestamps by keeping the calendar part.
    let day = raw.split(['T', ' ']).next().unwrap_or(raw);
    NaiveDate::parse_from_str(day, "%Y-%m-%d").ok()
}

/// Reads a headered CSV into a [`PriceSeries`].
///
/// Rows are sorted by date. Unparseable dates, missing or non-positive
/// closes and repeated dates are skipped and reported rather than failing
/// the whole file; only a file with no usable row is an error.
pub fn ingest_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Ingested> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_col = find(&columns.date)?;
    let close_col = find(&columns.close)?;

    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    let mut skipped = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                skipped.push(SkippedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let raw_date = record.get(date_col).unwrap_or("");
        let Some(date) = parse_date(raw_date) else {
            skipped.push(SkippedRow { line, reason: format!("unparseable date `{raw_date}`") });
            continue;
        };
        let raw_close = record.get(close_col).unwrap_or("");
        match raw_close.parse::<f64>() {
            Ok(c) if c.is_finite() && c > 0.0 => rows.push((date, c, line)),
            Ok(c) => skipped.push(SkippedRow { line, reason: format!("non-positive close {c}") }),
            Err(_) => skipped.push(SkippedRow { line, reason: format!("missing close `{raw_close}`") }),
        }
    }

    rows.sort_by_key(|(d, _, line)| (*d, *line));
    let mut dates = Vec::with_capacity(rows.len());
    let mut close = Vec::with_capacity(rows.len());
    for (date, c, line) in rows {
        if dates.last() == Some(&date) {
            skipped.push(SkippedRow { line, reason: format!("duplicate date {date}") });
            continue;
        }
        dates.push(date);
        close.push(c);
    }
    if dates.is_empty() {
        return Err(Error::NoValidRows(path.display().to_string()));
    }
    skipped.sort_by_key(|s| s.line);
    Ok(Ingested { series: PriceSeries::new(dates, close)?, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_well_formed_file() {
        let f = write_csv("Date,Open,Close\n2020-01-02,1,10\n2020-01-03,1,11\n2020-01-06,1,12\n");
        let got = ingest_csv(f.path(), &ColumnMap::default()).unwrap();
        assert_eq!(got.series.len(), 3);
        assert_eq!(got.series.close(), &[10.0, 11.0, 12.0]);
        assert!(got.skipped.is_empty());
    }

    #[test]
    fn sorts_out_of_order_rows() {
        let sorted = write_csv("Date,Close\n2020-01-02,10\n2020-01-03,11\n2020-01-06,12\n");
        let shuffled = write_csv("Date,Close\n2020-01-06,12\n2020-01-02,10\n2020-01-03,11\n");
        let a = ingest_csv(sorted.path(), &ColumnMap::default()).unwrap();
        let b = ingest_csv(shuffled.path(), &ColumnMap::default()).unwrap();
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn skips_null_close_with_report() {
        let f = write_csv("Date,Close\n2020-01-02,10\n2020-01-03,null\n2020-01-06,12\n2020-01-07,13\n");
        let got = ingest_csv(f.path(), &ColumnMap::default()).unwrap();
        assert_eq!(got.series.len(), 3);
        assert_eq!(got.skipped.len(), 1);
        assert_eq!(got.skipped[0].line, 3);
    }

    #[test]
    fn rejects_duplicates_and_non_positive() {
        let f = write_csv("Date,Close\n2020-01-02,10\n2020-01-02,11\n2020-01-03,-1\n2020-01-06,0\n2020-01-07,5\n");
        let got = ingest_csv(f.path(), &ColumnMap::default()).unwrap();
        assert_eq!(got.series.close(), &[10.0, 5.0]);
        assert_eq!(got.skipped.len(), 3);
    }

    #[test]
    fn accepts_timestamps_and_custom_columns() {
        let f = write_csv("when,px\n2020-01-02T00:00:00,10\n2020-01-03 00:00:00,11\n");
        let cols = ColumnMap { date: "when".into(), close: "px".into() };
        let got = ingest_csv(f.path(), &cols).unwrap();
        assert_eq!(got.series.len(), 2);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(ingest_csv("/nonexistent/x.csv", &ColumnMap::default()), Err(Error::Io { .. })));
        let f = write_csv("Day,Close\n2020-01-02,10\n");
        assert!(matches!(ingest_csv(f.path(), &ColumnMap::default()), Err(Error::MissingColumn(c)) if c == "Date"));
        let f = write_csv("Date,Close\n2020-01-02,\n");
        assert!(matches!(ingest_csv(f.path(), &ColumnMap::default()), Err(Error::NoValidRows(_))));
    }
}
