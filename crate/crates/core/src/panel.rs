//! Experimental panels: observations, treatments and exogenous columns.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::designs::TreatmentSequence;
use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Interval length assumed when none is supplied.
pub const DEFAULT_DT_LABEL: &str = "30min";

#[derive(Clone, Debug, PartialEq)]
pub struct PanelData {
    /// `T x d`; column 0 is the outcome.
    pub y: DMatrix<f64>,
    pub u: TreatmentSequence,
    /// `T x m` exogenous covariates.
    pub e: Option<DMatrix<f64>>,
    /// Interval length as `"<minutes>min"`.
    pub dt_label: String,
}

impl PanelData {
    pub fn new(y: DMatrix<f64>, u: TreatmentSequence, e: Option<DMatrix<f64>>, dt_label: impl Into<String>) -> Result<Self> {
        let t = y.nrows();
        if y.ncols() == 0 {
            return Err(Error::DimensionMismatch("panel needs at least one observation column".into()));
        }
        if u.len() != t {
            return Err(Error::DimensionMismatch(format!("{} treatments for {t} observation rows", u.len())));
        }
        if let Some(e) = &e {
            if e.nrows() != t {
                return Err(Error::DimensionMismatch(format!("{} exogenous rows for {t} observation rows", e.nrows())));
            }
        }
        if y.iter().chain(e.iter().flat_map(|e| e.iter())).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("panel contains missing or non-finite values".into()));
        }
        Ok(PanelData { y, u, e, dt_label: dt_label.into() })
    }

    /// Single-outcome panel.
    pub fn univariate(y: Vec<f64>, u: TreatmentSequence) -> Result<Self> {
        let n = y.len();
        Self::new(DMatrix::from_vec(n, 1, y), u, None, DEFAULT_DT_LABEL)
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d(&self) -> usize {
        self.y.ncols()
    }

    pub fn exog_dim(&self) -> usize {
        self.e.as_ref().map_or(0, |e| e.ncols())
    }

    pub fn outcome(&self) -> Vec<f64> {
        self.y.column(0).iter().copied().collect()
    }

    /// Interval length in minutes parsed from `dt_label`.
    pub fn interval_minutes(&self) -> Result<f64> {
        parse_dt_minutes(&self.dt_label)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.d()).map(|i| format!("y{i}")).collect();
        header.push("u".into());
        header.extend((1..=self.exog_dim()).map(|i| format!("e{i}")));
        wr.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for t in 0..self.len() {
            row.clear();
            row.extend(self.y.row(t).iter().map(|&v| fmt_f64(v)));
            row.push(self.u.values()[t].to_string());
            if let Some(e) = &self.e {
                row.extend(e.row(t).iter().map(|&v| fmt_f64(v)));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, dt_label: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rd.headers()?.clone();
        let (d, m) = parse_header(&header)?;
        let mut ys = Vec::new();
        let mut us = Vec::new();
        let mut es = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 1 + m {
                return Err(Error::InvalidInput(format!("row {} has {} fields, expected {}", i + 1, rec.len(), d + 1 + m)));
            }
            let num = |j: usize| -> Result<f64> {
                rec[j].parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("row {} column '{}' is not a number: '{}'", i + 1, &header[j], &rec[j]))
                })
            };
            for j in 0..d {
                ys.push(num(j)?);
            }
            let u = num(d)?;
            if u != 1.0 && u != -1.0 {
                return Err(Error::InvalidInput(format!("row {} treatment must be -1 or 1, got {u}", i + 1)));
            }
            us.push(u as i8);
            for j in 0..m {
                es.push(num(d + 1 + j)?);
            }
        }
        let t = us.len();
        let y = DMatrix::from_row_slice(t, d, &ys);
        let e = (m > 0).then(|| DMatrix::from_row_slice(t, m, &es));
        PanelData::new(y, TreatmentSequence::new(us)?, e, dt_label)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_csv_file(path: impl AsRef<Path>, dt_label: &str) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, dt_label)
    }
}

/// Accepts `y1..yd,u[,e1..em]` and returns `(d, m)`.
fn parse_header(h: &csv::StringRecord) -> Result<(usize, usize)> {
    let names: Vec<&str> = h.iter().collect();
    let bad = || Error::Schema(format!("expected header y1,..,yd,u[,e1,..,em], got '{}'", names.join(",")));
    let u_pos = names.iter().position(|&n| n == "u").ok_or_else(bad)?;
    if u_pos == 0 {
        return Err(bad());
    }
    let numbered = |prefix: &str, part: &[&str]| part.iter().enumerate().all(|(i, n)| *n == format!("{prefix}{}", i + 1));
    if !numbered("y", &names[..u_pos]) || !numbered("e", &names[u_pos + 1..]) {
        return Err(bad());
    }
    Ok((u_pos, names.len() - u_pos - 1))
}

pub fn parse_dt_minutes(label: &str) -> Result<f64> {
    label
        .strip_suffix("min")
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|v| *v > 0.0 && v.is_finite())
        .ok_or_else(|| Error::InvalidInput(format!("interval label must look like '30min', got '{label}'")))
}
