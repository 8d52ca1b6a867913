//! File formats: Wigner datasets as CSV, density matrices as JSON, and a
//! small named-column table used for experiment outputs.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hilbert::DensityMatrix;
use crate::linalg::c;
use crate::tomography::{DisplacementGrid, ReconstructionResult, WignerDataset};
use crate::CMat;

/// Write a dataset as `re_alpha,im_alpha[,re_beta,im_beta],raw_p,w`.
pub fn write_wigner_csv<W: Write>(ds: &WignerDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let two = ds.grid.modes == 2;
    let mut header = vec!["re_alpha", "im_alpha"];
    if two {
        header.extend(["re_beta", "im_beta"]);
    }
    header.extend(["raw_p", "w"]);
    w.write_record(&header)?;
    for ((p, raw), val) in ds.grid.points.iter().zip(&ds.raw).zip(&ds.values) {
        let mut row: Vec<String> = p.iter().flat_map(|a| [a.re.to_string(), a.im.to_string()]).collect();
        row.push(raw.to_string());
        row.push(val.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset written by [`write_wigner_csv`]. The mode count is taken
/// from the header; `noise_sigma` is not stored and comes back as 0.
pub fn read_wigner_csv<R: Read>(input: R) -> Result<WignerDataset> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let modes = match header.len() {
        4 => 1,
        6 => 2,
        n => return Err(Error::Parse { line: 1, msg: format!("expected 4 or 6 columns, found {n}") }),
    };
    let (mut points, mut raw, mut values) = (vec![], vec![], vec![]);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|e| Error::Parse { line: i + 2, msg: format!("column {}: {e}", header[k].to_string()) })
        };
        points.push((0..modes).map(|m| Ok(c(num(2 * m)?, num(2 * m + 1)?))).collect::<Result<Vec<_>>>()?);
        raw.push(num(2 * modes)?);
        values.push(num(2 * modes + 1)?);
    }
    let grid = DisplacementGrid { modes, points, condition_number: f64::NAN };
    Ok(WignerDataset { grid, values, raw, noise_sigma: 0.0 })
}

/// ρ as separate real and imaginary row-major matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityJson {
    pub dims: Vec<usize>,
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
}

impl DensityJson {
    pub fn from_density(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        let rows = |f: fn(&crate::C64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
        Self { dims: rho.dims().to_vec(), real: rows(|z| z.re), imag: rows(|z| z.im) }
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        let d = self.real.len();
        if self.imag.len() != d || self.real.iter().chain(&self.imag).any(|r| r.len() != d) {
            return invalid("real and imag parts must be square matrices of equal size");
        }
        let m = CMat::from_fn(d, d, |i, j| c(self.real[i][j], self.imag[i][j]));
        DensityMatrix::new(m, self.dims.clone())
    }
}

/// Reconstruction output with its fidelity report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionJson {
    pub rho: DensityJson,
    pub fidelity: Option<f64>,
    pub fidelity_std: Option<f64>,
    pub excluded_fraction: f64,
    pub residual: f64,
    pub condition_number: f64,
    pub iterations: usize,
}

impl From<&ReconstructionResult> for ReconstructionJson {
    fn from(r: &ReconstructionResult) -> Self {
        Self {
            rho: DensityJson::from_density(&r.rho),
            fidelity: r.fidelity,
            fidelity_std: r.fidelity_std,
            excluded_fraction: r.excluded_fraction,
            residual: r.residual,
            condition_number: r.condition_number,
            iterations: r.iterations,
        }
    }
}

pub fn write_reconstruction_json<W: Write>(r: &ReconstructionResult, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &ReconstructionJson::from(r))?;
    Ok(())
}

/// A table cell: numbers are written with full round-trip precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Int(x) => write!(f, "{x}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// Named-column result table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch { expected: self.columns.len(), got: row.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
