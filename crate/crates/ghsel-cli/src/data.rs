//! Reading and writing survival data sets as CSV.
//!
//! The header must start with `time,status`; every further column is a
//! numeric covariate. Categorical covariates have to be encoded beforehand.

use ghsel::ghlik::Dataset;
use nalgebra::DMatrix;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("header must begin with time,status; found {found:?}")]
    Header { found: Vec<String> },
    #[error("no covariate columns after time,status")]
    NoCovariates,
    #[error("line {line}: expected {want} fields, found {got}")]
    Width { line: u64, want: usize, got: usize },
    #[error("line {line}, column {column}: {value:?} is not a number")]
    NotNumeric { line: u64, column: String, value: String },
    #[error("line {line}: time must be positive, got {value}")]
    NonPositiveTime { line: u64, value: f64 },
    #[error("line {line}: status must be 0 or 1, got {value:?}")]
    BadStatus { line: u64, value: String },
    #[error("no data rows")]
    Empty,
    #[error("data set rejected: {0}")]
    Data(#[from] ghsel::ghlik::DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Parses a data set from CSV text.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header[0] != "time" || header[1] != "status" {
        return Err(CsvError::Header { found: header });
    }
    let names: Vec<String> = header[2..].to_vec();
    if names.is_empty() {
        return Err(CsvError::NoCovariates);
    }
    let (mut t, mut d, mut x) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CsvError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = line_of(&rec);
        if rec.len() != header.len() {
            return Err(CsvError::Width { line, want: header.len(), got: rec.len() });
        }
        let number = |k: usize| -> Result<f64, CsvError> {
            rec[k].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| CsvError::NotNumeric {
                line,
                column: header[k].clone(),
                value: rec[k].to_string(),
            })
        };
        let time = number(0)?;
        if time <= 0.0 {
            return Err(CsvError::NonPositiveTime { line, value: time });
        }
        let status = match &rec[1] {
            "0" | "0.0" => 0.0,
            "1" | "1.0" => 1.0,
            other => return Err(CsvError::BadStatus { line, value: other.to_string() }),
        };
        t.push(time);
        d.push(status);
        for k in 2..header.len() {
            x.push(number(k)?);
        }
    }
    if t.is_empty() {
        return Err(CsvError::Empty);
    }
    let n = t.len();
    let x = DMatrix::from_row_slice(n, names.len(), &x);
    Ok(Dataset::new(t, d, x, names)?)
}

pub fn read_dataset_file(path: &std::path::Path) -> Result<Dataset, CsvError> {
    read_dataset(std::fs::File::open(path)?)
}

/// Writes `data` in the format `read_dataset` accepts. Numbers use the
/// shortest representation that round-trips.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut head = vec!["time".to_string(), "status".to_string()];
    head.extend(data.names().iter().cloned());
    w.write_record(&head)?;
    for i in 0..data.n() {
        let mut row = vec![data.times()[i].to_string(), format!("{}", data.status()[i] as u8)];
        row.extend((0..data.p()).map(|j| data.x()[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
