//! Headered CSV input and output for multivariate series.

use std::path::Path;

use log::info;
use nalgebra::DVector;

use crate::series::MultiSeries;

use super::output::format_g;
use super::IngestError;

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "NAN" | "null" | "NULL")
}

/// Loads the named columns in file order. Rows with a missing selected
/// value are dropped and counted.
pub fn ingest_csv(path: &Path, columns: &[String]) -> Result<MultiSeries, IngestError> {
    if !path.is_file() {
        return Err(IngestError::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IngestError::Csv(e.to_string()))?;
    let headers = reader.headers().map_err(|e| IngestError::Csv(e.to_string()))?.clone();
    let index: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| IngestError::MissingColumn(c.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IngestError::Csv(e.to_string()))?;
        let mut values = Vec::with_capacity(index.len());
        let mut missing = false;
        for (&i, name) in index.iter().zip(columns) {
            let cell = record.get(i).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_nan() => missing = true,
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(IngestError::NonNumericCell {
                        row: r + 1,
                        column: name.clone(),
                    })
                }
            }
        }
        if missing {
            dropped += 1;
        } else {
            rows.push(DVector::from_vec(values));
        }
    }
    if dropped > 0 {
        info!("dropped {dropped} rows with missing values from {}", path.display());
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyAfterDrop);
    }
    Ok(MultiSeries::new(columns.len(), rows).with_names(columns.to_vec()))
}

/// Writes a series with a header of coordinate names.
pub fn write_csv(series: &MultiSeries, path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(series.names())?;
    for row in series.rows() {
        w.write_record(row.iter().map(|&v| format_g(v)))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reads_selected_columns() {
        let f = file("time,a,b\n0,1.0,2\n1,3,4\n2,5,6e0\n");
        let s = ingest_csv(f.path(), &cols(&["b", "a"])).unwrap();
        assert_eq!((s.len(), s.dim()), (3, 2));
        assert_eq!(s.row(2).as_slice(), &[6.0, 5.0]);
        assert_eq!(s.names(), &["b", "a"]);
    }

    #[test]
    fn drops_missing_rows() {
        let f = file("a,b\n1,2\nNaN,4\n5,\n7,8\n");
        let s = ingest_csv(f.path(), &cols(&["a", "b"])).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.row(1).as_slice(), &[7.0, 8.0]);
    }

    #[test]
    fn errors() {
        let f = file("a,b\n1,2\n");
        match ingest_csv(f.path(), &cols(&["a", "zeta"])) {
            Err(IngestError::MissingColumn(c)) => assert_eq!(c, "zeta"),
            other => panic!("{other:?}"),
        }
        let f = file("a,b\n1,2\n3,oops\n");
        assert!(matches!(
            ingest_csv(f.path(), &cols(&["a", "b"])),
            Err(IngestError::NonNumericCell { row: 2, ref column }) if column == "b"
        ));
        let f = file("a\nNaN\n\n");
        assert!(matches!(ingest_csv(f.path(), &cols(&["a"])), Err(IngestError::EmptyAfterDrop)));
        assert!(matches!(
            ingest_csv(Path::new("/nonexistent/x.csv"), &cols(&["a"])),
            Err(IngestError::FileNotFound(_))
        ));
    }

    #[test]
    fn round_trip() {
        let s = MultiSeries::from_rows(&[vec![1.5, -2.0], vec![1e-7, 123456789.0]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_csv(&s, &path).unwrap();
        let back = ingest_csv(&path, &cols(&["y0", "y1"])).unwrap();
        assert_eq!(back.rows(), s.rows());
    }
}
