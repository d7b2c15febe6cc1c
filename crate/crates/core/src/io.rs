//! CSV ingestion and the output file formats.
//!
//! Output column names are fixed:
//! - `fits.csv`: predictor columns, `fhat`, `lo95`, `hi95`, optional `f_true`
//! - `density.csv`: `e`, `dpm_mean`, `dpm_lo`, `dpm_hi`, `bart_mean`, optional `true_density`
//! - `trace.csv`: `iter,sigma` (plain BART) or `iter,i_unique,alpha` (DPMBART)

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LeastSquaresFit};
use crate::dpm::Baseline;
use crate::error::{Error, Result};
use crate::sampler::{DrawRecord, Mode, TraceRow};
use crate::scenario::TrueErrorDensity;
use crate::summary::{DensitySummary, ExactDensity, FitSummary};

#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub data: Dataset,
    pub y_name: String,
    pub x_names: Vec<String>,
    pub least_squares: LeastSquaresFit,
}

/// Reads a headed CSV. With no predictor list, every column other than the
/// response is a predictor.
pub fn load_csv(path: &Path, response: &str, predictors: Option<&[String]>) -> Result<LoadedCsv> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("column `{}` not found in {}", name, path.display())))
    };
    let y_idx = find(response)?;
    let x_names: Vec<String> = match predictors {
        Some(cols) if !cols.is_empty() => cols.to_vec(),
        _ => headers.iter().filter(|h| h.as_str() != response).cloned().collect(),
    };
    let x_idx: Vec<usize> = x_names.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::CsvCell {
                row: r + 1,
                column: headers[idx].clone(),
                reason: if raw.is_empty() {
                    "missing value".into()
                } else {
                    format!("`{}` is not a finite number", raw)
                },
            })
        };
        y.push(cell(y_idx)?);
        rows.push(x_idx.iter().map(|&j| cell(j)).collect::<Result<Vec<f64>>>()?);
    }
    if y.len() < 2 || y.iter().all(|&v| v == y[0]) {
        return Err(Error::InvalidData(format!("response `{}` is constant or has fewer than 2 rows", response)));
    }
    let data = Dataset::new(rows, y)?;
    let least_squares = LeastSquaresFit::fit(&data)?;
    Ok(LoadedCsv {
        data,
        y_name: response.to_string(),
        x_names,
        least_squares,
    })
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn fmt(v: f64) -> String {
    format!("{}", v)
}

/// Writes `x..., y, f_true` for a simulated dataset.
pub fn write_data_csv(path: &Path, data: &Dataset, x_names: &[String], f_true: Option<&[f64]>) -> Result<()> {
    write_data(BufWriter::new(File::create(path)?), data, x_names, f_true)
}

pub fn write_data<W: Write>(out: W, data: &Dataset, x_names: &[String], f_true: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = x_names.to_vec();
    header.push("y".into());
    if f_true.is_some() {
        header.push("f_true".into());
    }
    w.write_record(&header)?;
    let y = data.y_original();
    for (i, row) in data.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        rec.push(fmt(y[i]));
        if let Some(f) = f_true {
            rec.push(fmt(f[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fits_csv(
    path: &Path,
    data: &Dataset,
    x_names: &[String],
    fit: &FitSummary,
    f_true: Option<&[f64]>,
) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = x_names.to_vec();
    header.extend(["fhat", "lo95", "hi95"].map(String::from));
    if f_true.is_some() {
        header.push("f_true".into());
    }
    w.write_record(&header)?;
    for (i, row) in data.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        rec.extend([fit.fhat[i], fit.lo95[i], fit.hi95[i]].map(fmt));
        if let Some(f) = f_true {
            rec.push(fmt(f[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Error-density table on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub grid: Vec<f64>,
    pub dpm: Option<DensitySummary>,
    pub bart_mean: Option<Vec<f64>>,
    pub true_density: Option<Vec<f64>>,
}

impl DensityTable {
    pub fn new(
        grid: Vec<f64>,
        dpm: Option<DensitySummary>,
        bart_mean: Option<Vec<f64>>,
        truth: Option<&TrueErrorDensity>,
    ) -> Self {
        let true_density = truth.map(|t| grid.iter().map(|&e| t.pdf(e)).collect());
        Self {
            grid,
            dpm,
            bart_mean,
            true_density,
        }
    }

    pub fn header(&self) -> Vec<&'static str> {
        let mut h = vec!["e"];
        if self.dpm.is_some() {
            h.extend(["dpm_mean", "dpm_lo", "dpm_hi"]);
        }
        if self.bart_mean.is_some() {
            h.push("bart_mean");
        }
        if self.true_density.is_some() {
            h.push("true_density");
        }
        h
    }
}

pub fn write_density_csv(path: &Path, table: &DensityTable) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(table.header())?;
    for (k, &e) in table.grid.iter().enumerate() {
        let mut rec = vec![fmt(e)];
        if let Some(d) = &table.dpm {
            rec.extend([d.mean[k], d.lo[k], d.hi[k]].map(fmt));
        }
        if let Some(b) = &table.bart_mean {
            rec.push(fmt(b[k]));
        }
        if let Some(t) = &table.true_density {
            rec.push(fmt(t[k]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, mode: Mode, trace: &[TraceRow]) -> Result<()> {
    let mut w = writer(path)?;
    match mode {
        Mode::PlainBart => w.write_record(["iter", "sigma"])?,
        Mode::Dpmbart => w.write_record(["iter", "i_unique", "alpha"])?,
    }
    for row in trace {
        match mode {
            Mode::PlainBart => w.write_record([row.iter.to_string(), fmt(row.sigma.unwrap_or(f64::NAN))])?,
            Mode::Dpmbart => w.write_record([
                row.iter.to_string(),
                row.i_unique.map_or_else(String::new, |i| i.to_string()),
                fmt(row.alpha.unwrap_or(f64::NAN)),
            ])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Everything `summarize` needs to rebuild the output tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedRun {
    pub mode: Mode,
    pub x_names: Vec<String>,
    pub data: Dataset,
    pub f_true: Option<Vec<f64>>,
    pub truth: Option<TrueErrorDensity>,
    pub baseline: Baseline,
    pub draws: Vec<DrawRecord>,
    pub trace: Vec<TraceRow>,
    /// Sigma draws of the plain-BART companion chain, for `bart_mean`.
    pub companion_sigmas: Option<Vec<f64>>,
}

pub fn save_run(path: &Path, run: &SavedRun) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, run)?;
    w.flush()?;
    Ok(())
}

pub fn load_run(path: &Path) -> Result<SavedRun> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn toy_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "toy.csv", "a,y,b\n1,2.5,0\n2, 3.0 ,1\n-1,7,1\n");
        let loaded = load_csv(&p, "y", None).unwrap();
        assert_eq!(loaded.x_names, vec!["a", "b"]);
        assert_eq!(loaded.data.row(0), &[1.0, 0.0]);
        assert_eq!(loaded.data.row(1), &[2.0, 1.0]);
        assert_eq!(loaded.data.row(2), &[-1.0, 1.0]);
        assert_eq!(loaded.data.y_original(), vec![2.5, 3.0, 7.0]);
        let only_b = load_csv(&p, "y", Some(&["b".to_string()])).unwrap();
        assert_eq!(only_b.data.p(), 1);
    }

    #[test]
    fn bad_cells_report_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.csv", "x,y\n1,2\n2,oops\n");
        match load_csv(&p, "y", None) {
            Err(Error::CsvCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected {:?}", other),
        }
        let p = write(dir.path(), "missing.csv", "x,y\n1,2\n,3\n");
        assert!(matches!(load_csv(&p, "y", None), Err(Error::CsvCell { row: 2, .. })));
        assert!(load_csv(&p, "z", None).is_err());
        let p = write(dir.path(), "const.csv", "x,y\n1,2\n2,2\n");
        assert!(matches!(load_csv(&p, "y", None), Err(Error::InvalidData(_))));
    }

    #[test]
    fn density_header_variants() {
        let t = DensityTable::new(vec![0.0], None, Some(vec![0.4]), None);
        assert_eq!(t.header(), vec!["e", "bart_mean"]);
    }
}
