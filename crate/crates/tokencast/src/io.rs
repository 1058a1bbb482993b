//! CSV ingestion and output for single-column series.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tokencast_core::TimeSeries;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: no column named {column:?} (found {available:?})")]
    MissingColumn {
        path: PathBuf,
        column: String,
        available: Vec<String>,
    },
    #[error("{path}: line {line}: column {column:?} value {value:?} is not a finite number")]
    BadValue {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: {rows} rows, need at least {need} (context + horizon)")]
    TooShort {
        path: PathBuf,
        rows: usize,
        need: usize,
    },
}

/// Where a series lives and how it is split for forecasting.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub value_column: String,
    pub timestamp_column: Option<String>,
    pub sample_rate_hz: f64,
    pub context_length: usize,
    pub horizon: usize,
    pub season_length: usize,
}

/// Loads the series and checks it covers `context_length + horizon`.
pub fn load_csv(spec: &DatasetSpec) -> Result<TimeSeries, IoError> {
    let series = read_series(
        &spec.path,
        &spec.value_column,
        spec.timestamp_column.as_deref(),
        spec.sample_rate_hz,
    )?;
    let need = spec.context_length + spec.horizon;
    if series.len() < need {
        return Err(IoError::TooShort {
            path: spec.path.clone(),
            rows: series.len(),
            need,
        });
    }
    Ok(series)
}

pub fn read_series(
    path: &Path,
    value_column: &str,
    timestamp_column: Option<&str>,
    sample_rate_hz: f64,
) -> Result<TimeSeries, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
                available: headers.iter().map(str::to_string).collect(),
            })
    };
    let value_idx = find(value_column)?;
    let ts_idx = timestamp_column.map(find).transpose()?;

    let mut values = Vec::new();
    let mut stamps = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let raw = record.get(value_idx).unwrap_or("");
        let v: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| IoError::BadValue {
                path: path.to_path_buf(),
                line,
                column: value_column.to_string(),
                value: raw.to_string(),
            })?;
        values.push(v);
        if let Some(i) = ts_idx {
            stamps.push(record.get(i).unwrap_or("").to_string());
        }
    }
    let series = TimeSeries::new(values, sample_rate_hz);
    Ok(if ts_idx.is_some() {
        series.with_timestamps(stamps)
    } else {
        series
    })
}

/// Writes `[timestamp,]value` rows. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_series(w: impl Write, series: &TimeSeries, value_column: &str) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    match &series.timestamps {
        Some(ts) => {
            out.write_record(["timestamp", value_column])?;
            for (t, v) in ts.iter().zip(&series.values) {
                out.write_record([t.as_str(), &v.to_string()])?;
            }
        }
        None => {
            out.write_record([value_column])?;
            for v in &series.values {
                out.write_record([v.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, series: &TimeSeries, value_column: &str) -> Result<(), IoError> {
    let file = File::create(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_series(file, series, value_column).map_err(|source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    })
}
