//! Time-series containers, CSV ingestion, chronological splits, synthetic
//! generators and forecast metrics.

mod metrics;
mod split;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};

pub use metrics::{metrics, MetricAccumulator, Metrics, MAPE_ZERO_THRESHOLD};
pub use split::{split, SplitSpec};
pub use synth::{synth, SynthKind, SynthParams};

/// Dense `t × N` observations with variable names and optional timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesMatrix {
    pub values: Tensor,
    pub names: Vec<String>,
    pub timestamps: Option<Vec<String>>,
}

impl TimeSeriesMatrix {
    pub fn new(values: Tensor, names: Vec<String>) -> Result<Self> {
        if values.shape().len() != 2 || values.cols() != names.len() {
            return Err(Error::shape(
                "time series",
                format!("values {:?} with {} names", values.shape(), names.len()),
            ));
        }
        Ok(Self {
            values,
            names,
            timestamps: None,
        })
    }

    /// Names default to `y0, y1, …`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let t = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != t) {
            return Err(Error::shape("time series", "columns differ in length"));
        }
        let mut data = Vec::with_capacity(t * n);
        for r in 0..t {
            for c in columns {
                data.push(c[r]);
            }
        }
        Self::new(
            Tensor::matrix(t, n, data)?,
            (0..n).map(|i| format!("y{i}")).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn variables(&self) -> usize {
        self.values.cols()
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        (0..self.len()).map(|r| self.values.at(r, n)).collect()
    }

    /// Rows `start..start + len`.
    pub fn rows(&self, start: usize, len: usize) -> Self {
        let n = self.variables();
        let data = self.values.data()[start * n..(start + len) * n].to_vec();
        Self {
            values: Tensor::matrix(len, n, data).expect("row range"),
            names: self.names.clone(),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|ts| ts[start..start + len].to_vec()),
        }
    }

    /// Keeps only the given variables, in the given order.
    pub fn select(&self, vars: &[usize]) -> Result<Self> {
        if let Some(&bad) = vars.iter().find(|&&v| v >= self.variables()) {
            return Err(Error::Config(format!("variable index {bad} out of range")));
        }
        let t = self.len();
        let mut data = Vec::with_capacity(t * vars.len());
        for r in 0..t {
            for &v in vars {
                data.push(self.values.at(r, v));
            }
        }
        Ok(Self {
            values: Tensor::matrix(t, vars.len(), data)?,
            names: vars.iter().map(|&v| self.names[v].clone()).collect(),
            timestamps: self.timestamps.clone(),
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = Vec::new();
        if self.timestamps.is_some() {
            header.push("timestamp".to_string());
        }
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            if let Some(ts) = &self.timestamps {
                rec.push(ts[r].clone());
            }
            rec.extend(self.values.row_slice(r).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadOptions {
    /// Replace missing cells with the previous row's value.
    pub forward_fill: bool,
    /// Header name of a non-numeric timestamp column to keep aside.
    pub timestamp_column: Option<String>,
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "nan" | "na" | "null" | "none"
    )
}

/// Reads a comma-separated table with a header row. Rows in diagnostics are
/// 1-based data rows (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<TimeSeriesMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot open '{}': {e}", path.display()),
        ))
    })?;
    read_csv(file, options)
}

pub fn read_csv(reader: impl std::io::Read, options: &LoadOptions) -> Result<TimeSeriesMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let ts_col = match &options.timestamp_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("timestamp column '{name}' not in header")))?,
        ),
        None => None,
    };
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != ts_col)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(Error::Empty("numeric columns"));
    }
    let n = names.len();
    let mut data: Vec<f64> = Vec::new();
    let mut stamps = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let mut k = 0;
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == ts_col {
                stamps.push(cell.to_string());
                continue;
            }
            let v = if is_missing(cell) {
                if options.forward_fill && row > 1 {
                    data[(row - 2) * n + k]
                } else {
                    return Err(Error::Gap {
                        row,
                        column: header[c].clone(),
                    });
                }
            } else {
                cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    column: header[c].clone(),
                    message: format!("'{cell}': {e}"),
                })?
            };
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: header[c].clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            data.push(v);
            k += 1;
        }
    }
    let t = data.len() / n;
    if t == 0 {
        return Err(Error::Empty("data rows"));
    }
    Ok(TimeSeriesMatrix {
        values: Tensor::matrix(t, n, data)?,
        names,
        timestamps: ts_col.map(|_| stamps),
    })
}

/// Writes a numeric matrix with header `c0, c1, …` (or the given names).
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Tensor, names: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = match names {
        Some(n) => n.to_vec(),
        None => (0..m.cols()).map(|j| format!("c{j}")).collect(),
    };
    w.write_record(&header)?;
    for r in 0..m.rows() {
        w.write_record(m.row_slice(r).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}
