//! CSV reading and writing.

use std::path::Path;

use nngp::geo::LocationSet;
use nngp::sampler::{Covariate, SpatialData};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Full-precision decimal: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Writer {
    inner: csv::Writer<std::fs::File>,
    path: std::path::PathBuf,
}

impl Writer {
    pub fn create<S: AsRef<str>>(path: &Path, header: &[S]) -> CliResult<Self> {
        let inner = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
        let mut w = Self {
            inner,
            path: path.to_path_buf(),
        };
        w.row(header)?;
        Ok(w)
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> CliResult<()> {
        self.inner
            .write_record(fields.iter().map(|f| f.as_ref()))
            .map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.inner.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))
}

fn parse_cell(path: &Path, row: usize, col: &str, v: &str) -> CliResult<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(CliError::Data(format!(
            "{}: row {row}, column '{col}': '{v}' is not a finite number",
            path.display()
        ))),
    }
}

/// Rows as numbers; `columns` selects header indices.
fn numeric_rows(path: &Path, columns: &[usize]) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let row = columns
            .iter()
            .map(|&c| parse_cell(path, i + 1, &header[c], rec.get(c).unwrap_or("")))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn header_of(path: &Path) -> CliResult<Vec<String>> {
    let mut rdr = reader(path)?;
    Ok(rdr
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(String::from)
        .collect())
}

/// Observation table: coordinates, response, then covariates. Rows with the
/// same coordinates share a site.
pub fn read_observations(cfg: &RunConfig) -> CliResult<(SpatialData, Vec<String>)> {
    let path = cfg.input.as_path();
    let header = header_of(path)?;
    if header.len() <= cfg.dim {
        return Err(CliError::Data(format!(
            "{}: need {} coordinate columns and a response column",
            path.display(),
            cfg.dim
        )));
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("column '{name}' not found in {}", path.display())))
    };
    let response = match &cfg.response {
        Some(r) => find(r)?,
        None => cfg.dim,
    };
    if response < cfg.dim {
        return Err(CliError::Config(format!("response column '{}' is a coordinate column", header[response])));
    }
    let mut columns: Vec<usize> = (0..cfg.dim).collect();
    columns.push(response);
    for (name, _) in &cfg.covariates {
        let c = find(name)?;
        if columns.contains(&c) {
            return Err(CliError::Config(format!("covariate '{name}' is a coordinate or response column")));
        }
        columns.push(c);
    }
    let mut warnings = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if !columns.contains(&i) {
            warnings.push(format!("column '{h}' is not declared in [covariates] and is ignored"));
        }
    }
    let (_, rows) = numeric_rows(path, &columns)?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no observations", path.display())));
    }
    let d = cfg.dim;
    let coords: Vec<Vec<f64>> = rows.iter().map(|r| r[..d].to_vec()).collect();
    let z = rows.iter().map(|r| r[d]).collect();
    let covariates = cfg
        .covariates
        .iter()
        .enumerate()
        .map(|(k, (name, kind))| Covariate {
            name: name.clone(),
            kind: *kind,
            values: rows.iter().map(|r| r[d + 1 + k]).collect(),
        })
        .collect();
    let locs = LocationSet::from_observations(&coords)?;
    Ok((SpatialData { locs, z, covariates }, warnings))
}

/// First `dim` columns of every row; an empty file yields no points.
pub fn read_points(path: &Path, dim: usize) -> CliResult<Vec<Vec<f64>>> {
    let header = header_of(path)?;
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Ok(Vec::new());
    }
    if header.len() < dim {
        return Err(CliError::Data(format!("{}: need {dim} coordinate columns", path.display())));
    }
    let cols: Vec<usize> = (0..dim).collect();
    Ok(numeric_rows(path, &cols)?.1)
}

/// Every column of a numeric table with its header.
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let header = header_of(path)?;
    let cols: Vec<usize> = (0..header.len()).collect();
    numeric_rows(path, &cols)
}
