//! Observation table shared by every estimator.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Observations `V_i = (X_i, Z_i)` with an optional binary treatment column.
///
/// Covariates are stored row-major. A sample is never mutated after
/// construction; subsetting returns a new sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<f64>,
    d: usize,
    z: Vec<f64>,
    a: Option<Vec<u8>>,
}

impl Sample {
    pub fn new(x: Vec<f64>, d: usize, z: Vec<f64>, a: Option<Vec<u8>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::data("covariate dimension must be at least 1"));
        }
        let n = z.len();
        if n == 0 {
            return Err(Error::data("sample must contain at least one observation"));
        }
        if x.len() != n * d {
            return Err(Error::data(format!(
                "covariate matrix has {} entries, expected {} x {}",
                x.len(),
                n,
                d
            )));
        }
        if let Some(pos) = x.iter().chain(z.iter()).position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite value at flat position {pos}")));
        }
        if let Some(a) = &a {
            if a.len() != n {
                return Err(Error::data("treatment column length differs from outcome length"));
            }
            if a.iter().any(|&v| v > 1) {
                return Err(Error::data("treatment values must be 0 or 1"));
            }
        }
        Ok(Sample { x, d, z, a })
    }

    /// One-dimensional convenience constructor.
    pub fn from_columns(x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        Sample::new(x, 1, z, None)
    }

    pub fn with_treatment(x: Vec<f64>, z: Vec<f64>, a: Vec<u8>) -> Result<Self> {
        Sample::new(x, 1, z, Some(a))
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.x.chunks_exact(self.d)
    }

    pub fn x_flat(&self) -> &[f64] {
        &self.x
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn a(&self) -> Option<&[u8]> {
        self.a.as_deref()
    }

    pub fn has_treatment(&self) -> bool {
        self.a.is_some()
    }

    pub fn treatment(&self) -> Result<&[u8]> {
        self.a
            .as_deref()
            .ok_or_else(|| Error::config("this task needs a treatment column `a` in the sample"))
    }

    /// Rows at the given indices, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Sample {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        let mut z = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            z.push(self.z[i]);
        }
        let a = self.a.as_ref().map(|a| idx.iter().map(|&i| a[i]).collect());
        Sample { x, d: self.d, z, a }
    }

    /// Rows belonging to treatment arm `arm`.
    pub fn arm(&self, arm: u8) -> Result<Sample> {
        let a = self.treatment()?;
        let idx: Vec<usize> = (0..self.n()).filter(|&i| a[i] == arm).collect();
        if idx.is_empty() {
            return Err(Error::data(format!("treatment arm {arm} has no observations")));
        }
        Ok(self.subset(&idx))
    }

    /// Same covariates, a different outcome column (e.g. `a` as outcome for
    /// a propensity fit).
    pub fn with_outcome(&self, z: Vec<f64>) -> Result<Sample> {
        Sample::new(self.x.clone(), self.d, z, self.a.clone())
    }

    pub fn z_range(&self) -> (f64, f64) {
        min_max(&self.z)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Sample> {
        let file = std::fs::File::open(path.as_ref())?;
        Sample::read_csv(file)
    }

    /// Reads a CSV with header `x1..xd, z[, a]` (any column order).
    ///
    /// Decimal parsing is locale-independent (`.` separator, Rust float
    /// grammar). Errors carry the 1-based file line of the offending record.
    pub fn read_csv<R: Read>(reader: R) -> Result<Sample> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::DataAt { line: 1, message: e.to_string() })?
            .clone();
        let mut x_cols: Vec<(usize, usize)> = Vec::new();
        let mut z_col = None;
        let mut a_col = None;
        for (pos, name) in headers.iter().enumerate() {
            match name {
                "z" => z_col = Some(pos),
                "a" => a_col = Some(pos),
                other => {
                    let j = other
                        .strip_prefix('x')
                        .and_then(|s| s.parse::<usize>().ok())
                        .filter(|&j| j >= 1)
                        .ok_or_else(|| Error::DataAt {
                            line: 1,
                            message: format!("unexpected column `{other}` (expected x1..xd, z, a)"),
                        })?;
                    x_cols.push((j, pos));
                }
            }
        }
        let z_col = z_col.ok_or_else(|| Error::DataAt { line: 1, message: "missing column `z`".into() })?;
        x_cols.sort_unstable();
        let d = x_cols.len();
        if d == 0 {
            return Err(Error::DataAt { line: 1, message: "no covariate columns x1..xd".into() });
        }
        if x_cols.iter().enumerate().any(|(k, &(j, _))| j != k + 1) {
            return Err(Error::DataAt {
                line: 1,
                message: "covariate columns must be x1..xd without gaps".into(),
            });
        }

        let mut x = Vec::new();
        let mut z = Vec::new();
        let mut a = a_col.map(|_| Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::DataAt { line, message: e.to_string() }
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let field = |pos: usize| -> Result<f64> {
                let raw = rec.get(pos).unwrap_or("");
                let v: f64 = raw.parse().map_err(|_| Error::DataAt {
                    line,
                    message: format!("cannot parse `{raw}` as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::DataAt { line, message: format!("non-finite value `{raw}`") });
                }
                Ok(v)
            };
            for &(_, pos) in &x_cols {
                x.push(field(pos)?);
            }
            z.push(field(z_col)?);
            if let (Some(col), Some(a)) = (a_col, a.as_mut()) {
                let v = field(col)?;
                if v != 0.0 && v != 1.0 {
                    return Err(Error::DataAt { line, message: format!("treatment must be 0 or 1, got {v}") });
                }
                a.push(v as u8);
            }
        }
        Sample::new(x, d, z, a)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("x{j}")).collect();
        header.push("z".into());
        if self.a.is_some() {
            header.push("a".into());
        }
        w.write_record(&header).map_err(csv_io)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:.17e}")).collect();
            rec.push(format!("{:.17e}", self.z[i]));
            if let Some(a) = &self.a {
                rec.push(a[i].to_string());
            }
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}
