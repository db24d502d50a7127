//! CSV ingestion, studentization and the noise-fraction shortcut.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use varme_core::tsmodel::ColumnScale;
use varme_core::{Error, ErrorSpec, Result, TimeSeriesMatrix};

/// Reads a headed CSV with one row per time point.
pub fn ingest_csv(path: &Path) -> Result<TimeSeriesMatrix> {
    let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(f)
}

/// Row numbers in errors count the header as row 1; columns are 1-based.
pub fn ingest_reader<R: Read>(input: R) -> Result<TimeSeriesMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, 0, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(parse_err(1, 0, "header must name every series".into()));
    }
    let p = names.len();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(row, 0, e.to_string()))?;
        if rec.len() != p {
            return Err(parse_err(
                row,
                rec.len().min(p) + 1,
                format!("expected {p} cells, found {}", rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, j + 1, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(row, j + 1, format!("'{cell}' is not finite")));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = values.len() / p;
    TimeSeriesMatrix::new(DMatrix::from_row_slice(n, p, &values), names)
}

fn parse_err(row: usize, column: usize, message: String) -> Error {
    Error::Parse {
        row,
        column,
        message,
    }
}

/// Writes a series in the layout [`ingest_reader`] accepts, full `f64` precision.
pub fn write_series_csv<W: Write>(data: &TimeSeriesMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(data.names()).map_err(io)?;
    for t in 0..data.n() {
        w.write_record(data.values().row(t).iter().map(|v| format!("{v:?}")))
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Needs more than `r + p` rows for an order-`r` fit.
pub fn check_length(data: &TimeSeriesMatrix, r: usize) -> Result<()> {
    let needed = r + data.p() + 1;
    if data.n() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: data.n(),
        });
    }
    Ok(())
}

/// Per-column mean 0 and sample variance 1 (divisor `n - 1`).
pub fn normalize(data: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    let (n, p) = (data.n(), data.p());
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut out = data.values().clone();
    let mut scales = Vec::with_capacity(p);
    for j in 0..p {
        let col = data.values().column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::InvalidArgument(format!(
                "series '{}' is constant and cannot be normalized",
                data.names()[j]
            )));
        }
        out.column_mut(j)
            .iter_mut()
            .for_each(|v| *v = (*v - mean) / sd);
        scales.push(ColumnScale { mean, sd });
    }
    Ok(TimeSeriesMatrix::new(out, data.names().to_vec())?.with_normalization(scales))
}

/// `f^2 I_p`: isotropic noise whose standard deviation is the fraction `f` of a
/// unit-variance observed series.
pub fn sigma_e_from_fraction(f: f64, p: usize) -> Result<ErrorSpec> {
    if !(0.0..1.0).contains(&f) {
        return Err(Error::InvalidArgument(format!(
            "noise fraction {f} must lie in [0, 1)"
        )));
    }
    ErrorSpec::isotropic(p, f * f)
}
