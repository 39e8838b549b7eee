//! CSV and JSON readers and writers.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every `f64` exactly and is byte-stable across runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::FieldRecord;
use crate::error::{Error, Result};
use crate::homodyne::SweepMap;
use crate::series::{Column, SpectrumSeries};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

/// Read a two-column series. With `expected`, the header must name exactly
/// those columns (in order); otherwise any two known columns are accepted.
pub fn read_series(path: &Path, expected: Option<(Column, Column)>) -> Result<SpectrumSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.len() != 2 {
        return Err(Error::Parse(format!(
            "{}: expected 2 columns, found {} ({})",
            path.display(),
            headers.len(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let cols: Vec<Column> = headers
        .iter()
        .map(|h| h.parse::<Column>().map_err(|_| Error::Parse(format!("{}: unknown column `{h}`", path.display()))))
        .collect::<Result<_>>()?;
    if let Some((ex, ey)) = expected {
        for (got, want) in cols.iter().zip([ex, ey]) {
            if *got != want {
                return Err(Error::Parse(format!("{}: expected column `{want}`, found `{got}`", path.display())));
            }
        }
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for (k, (field, col)) in rec.iter().zip(&cols).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("{}: row {row}, column `{col}`: cannot parse `{field}`", path.display())))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("{}: row {row}, column `{col}`: value is not finite", path.display())));
            }
            if k == 0 { x.push(v) } else { y.push(v) }
        }
    }
    SpectrumSeries::new(cols[0], cols[1], x, y)
}

/// Write rows of numbers under `header`.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Internal(format!("row of {} values for {} columns", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series(path: &Path, s: &SpectrumSeries) -> Result<()> {
    write_table(
        path,
        &[s.x_column.name(), s.y_column.name()],
        s.x.iter().zip(&s.y).map(|(&a, &b)| vec![a, b]),
    )
}

/// Long-form map: one row per (offset, frequency).
pub fn write_map_csv(path: &Path, map: &SweepMap) -> Result<()> {
    let rows = map.dl_grid.iter().zip(&map.psd_rows).flat_map(|(&dl, row)| {
        map.freq_grid.iter().zip(row).map(move |(&f, &p)| vec![dl, f, p])
    });
    write_table(path, &["dL_over_halflambda", "freq_hz", "psd_v2_hz"], rows)
}

#[derive(Serialize)]
struct MapJson<'a> {
    dl_grid: &'a [f64],
    freq_grid: &'a [f64],
    psd_rows: &'a [Vec<f64>],
}

pub fn write_map_json(path: &Path, map: &SweepMap) -> Result<()> {
    write_json(path, &MapJson { dl_grid: &map.dl_grid, freq_grid: &map.freq_grid, psd_rows: &map.psd_rows })
}

pub fn write_field_record(path: &Path, rec: &FieldRecord) -> Result<()> {
    let parts = |z: Complex64| [z.re, z.im];
    let rows = (0..rec.len()).map(|i| {
        let mut row = vec![rec.times[i]];
        row.extend(parts(rec.cavity[i]));
        row.extend(parts(rec.transmitted[i]));
        row.extend(parts(rec.reflected[i]));
        row
    });
    write_table(path, &["t_s", "reE", "imE", "reEt", "imEt", "reEr", "imEr"], rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Internal(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = SpectrumSeries::new(
            Column::WavelengthNm,
            Column::TransmissionNorm,
            vec![500.1, 0.1 + 0.2],
            vec![1.0 / 3.0, f64::MIN_POSITIVE],
        )
        .unwrap();
        write_series(&p, &s).unwrap();
        assert_eq!(read_series(&p, None).unwrap(), s);
        assert_eq!(read_series(&p, Some((Column::WavelengthNm, Column::TransmissionNorm))).unwrap(), s);
        let err = read_series(&p, Some((Column::FreqHz, Column::PsdV2Hz))).unwrap_err();
        assert!(err.to_string().contains("freq_hz"));
    }

    #[test]
    fn parse_errors_name_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "freq_hz,psd_v2_hz\n1.0,2.0\n2.0,NaN\n").unwrap();
        let msg = read_series(&p, None).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("psd_v2_hz"), "{msg}");
        std::fs::write(&p, "freq_hz,power\n1.0,2.0\n").unwrap();
        assert!(read_series(&p, None).unwrap_err().to_string().contains("`power`"));
        std::fs::write(&p, "freq_hz,psd_v2_hz\n1.0,abc\n").unwrap();
        assert!(read_series(&p, None).unwrap_err().to_string().contains("row 1"));
    }

    #[test]
    fn map_long_form() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let map = SweepMap {
            dl_grid: vec![0.0, 0.5],
            freq_grid: vec![1.0, 2.0, 3.0],
            psd_rows: vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            weights: vec![[0.0; 2]; 2],
            bad_cavity_violations: 0,
        };
        write_map_csv(&p, &map).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "dL_over_halflambda,freq_hz,psd_v2_hz");
        assert_eq!(lines.len(), 7);
        assert!(lines[4].starts_with("5.0000000000000000e-1,1.0000000000000000e0,"));
    }
}
