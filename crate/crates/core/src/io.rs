//! Dataset CSV: header row, columns `y`, `V`, optional `x1..xr`, optional `mu`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::{ModelError, PriorSpec, TwoLevelData};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("MissingColumn: required column `{0}` not found")]
    MissingColumn(&'static str),
    #[error("ParseError: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse { row: usize, column: String, value: String },
    #[error("BadHeader: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl DatasetError {
    /// True for problems reading bytes, as opposed to invalid contents.
    pub fn is_io(&self) -> bool {
        match self {
            DatasetError::Io(_) => true,
            DatasetError::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetError::Io(_) => "IoError",
            DatasetError::Csv(_) => "CsvError",
            DatasetError::MissingColumn(_) => "MissingColumn",
            DatasetError::Parse { .. } => "ParseError",
            DatasetError::BadHeader(_) => "BadHeader",
            DatasetError::Model(e) => e.name(),
        }
    }
}

/// Parsed file contents before model validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    /// Covariate columns `x1..xr`, one vector per column.
    pub x: Vec<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
}

impl Dataset {
    pub fn to_model(&self) -> Result<(TwoLevelData, PriorSpec), ModelError> {
        let k = self.y.len();
        let x = (!self.x.is_empty()).then(|| DMatrix::from_fn(k, self.x.len(), |i, j| self.x[j][i]));
        let data = TwoLevelData::new(self.y.clone(), self.v.clone(), x)?;
        let mut prior = PriorSpec::shp();
        if let Some(mu) = &self.mu {
            prior = prior.known_mu(mu.clone());
        }
        Ok((data, prior))
    }
}

fn parse_num(s: &str, row: usize, column: &str) -> Result<f64, DatasetError> {
    s.trim().parse::<f64>().map_err(|_| DatasetError::Parse {
        row,
        column: column.to_string(),
        value: s.to_string(),
    })
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let iy = find("y").ok_or(DatasetError::MissingColumn("y"))?;
    let iv = find("V").ok_or(DatasetError::MissingColumn("V"))?;
    let imu = find("mu");
    let mut ix = Vec::new();
    while let Some(j) = find(&format!("x{}", ix.len() + 1)) {
        ix.push(j);
    }
    let known = 2 + ix.len() + usize::from(imu.is_some());
    if headers.len() != known {
        let extra: Vec<&str> = headers
            .iter()
            .filter(|h| !(*h == "y" || *h == "V" || *h == "mu" || ix.iter().any(|&j| &headers[j] == *h)))
            .collect();
        return Err(DatasetError::BadHeader(format!("unexpected columns {extra:?}")));
    }

    let mut ds = Dataset {
        y: Vec::new(),
        v: Vec::new(),
        x: vec![Vec::new(); ix.len()],
        mu: imu.map(|_| Vec::new()),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 1;
        ds.y.push(parse_num(&rec[iy], row, "y")?);
        ds.v.push(parse_num(&rec[iv], row, "V")?);
        for (c, &j) in ix.iter().enumerate() {
            ds.x[c].push(parse_num(&rec[j], row, &headers[j])?);
        }
        if let (Some(j), Some(mu)) = (imu, ds.mu.as_mut()) {
            mu.push(parse_num(&rec[j], row, "mu")?);
        }
    }
    Ok(ds)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "V".to_string()];
    header.extend((1..=ds.x.len()).map(|j| format!("x{j}")));
    if ds.mu.is_some() {
        header.push("mu".into());
    }
    w.write_record(&header)?;
    for i in 0..ds.y.len() {
        let mut rec = vec![fmt_f64(ds.y[i]), fmt_f64(ds.v[i])];
        rec.extend(ds.x.iter().map(|col| fmt_f64(col[i])));
        if let Some(mu) = &ds.mu {
            rec.push(fmt_f64(mu[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
