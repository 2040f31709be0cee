//! CSV tables and artifact files.
//!
//! Columns whose header starts with `label_` hold categorical tags; every
//! other column must be numeric.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{FealmError, Result};
use crate::types::{DataMatrix, LabelColumn, RunArtifact};

pub const LABEL_PREFIX: &str = "label_";

pub fn read_csv<R: Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let numeric: Vec<usize> = (0..headers.len())
        .filter(|&j| !headers[j].starts_with(LABEL_PREFIX))
        .collect();
    let label_cols: Vec<usize> = (0..headers.len())
        .filter(|&j| headers[j].starts_with(LABEL_PREFIX))
        .collect();
    if numeric.is_empty() {
        return Err(FealmError::InvalidArgument("CSV has no numeric columns".into()));
    }

    let mut flat = Vec::new();
    let mut labels: Vec<Vec<String>> = vec![Vec::new(); label_cols.len()];
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(FealmError::Ingest {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for &j in &numeric {
            let cell = record[j].trim();
            let value: f64 = cell.parse().map_err(|_| FealmError::Ingest {
                row,
                column: headers[j].clone(),
                message: if cell.is_empty() {
                    "missing value".into()
                } else {
                    format!("`{cell}` is not a number")
                },
            })?;
            if !value.is_finite() {
                return Err(FealmError::Ingest {
                    row,
                    column: headers[j].clone(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            flat.push(value);
        }
        for (slot, &j) in labels.iter_mut().zip(&label_cols) {
            slot.push(record[j].trim().to_string());
        }
        rows += 1;
    }
    let names = numeric.iter().map(|&j| headers[j].clone()).collect();
    let labels = label_cols
        .iter()
        .zip(labels)
        .map(|(&j, values)| LabelColumn::new(&headers[j][LABEL_PREFIX.len()..], values))
        .collect();
    DataMatrix::new(DMatrix::from_row_slice(rows, numeric.len(), &flat), names, labels)
}

pub fn read_csv_file(path: &Path) -> Result<DataMatrix> {
    read_csv(fs::File::open(path)?)
}

/// Numeric columns first, then one `label_<name>` column per label.
pub fn write_csv<W: Write>(data: &DataMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = data.attribute_names().to_vec();
    header.extend(data.labels().iter().map(|l| format!("{LABEL_PREFIX}{}", l.name)));
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut record: Vec<String> = data.values().row(i).iter().map(|v| v.to_string()).collect();
        record.extend(data.labels().iter().map(|l| l.values[i].clone()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(data: &DataMatrix, path: &Path) -> Result<()> {
    write_csv(data, fs::File::create(path)?)
}

pub fn read_artifact(path: &Path) -> Result<RunArtifact> {
    Ok(RunArtifact::from_json(&fs::read_to_string(path)?)?)
}

pub fn write_artifact(artifact: &RunArtifact, path: &Path) -> Result<()> {
    fs::write(path, artifact.to_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_split_out() {
        let text = "x,label_kind,y\n1,a,2\n3,b,4.5\n";
        let d = read_csv(text.as_bytes()).unwrap();
        assert_eq!(d.attribute_names(), &["x", "y"]);
        assert_eq!(d.values()[(1, 1)], 4.5);
        assert_eq!(d.labels()[0].name, "kind");
        assert_eq!(d.labels()[0].values, vec!["a", "b"]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let err = read_csv("x,y\n1,2\n3,oops\n".as_bytes()).unwrap_err();
        match err {
            FealmError::Ingest { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(
            read_csv("x,y\n1,\n3,4\n".as_bytes()),
            Err(FealmError::Ingest { row: 1, .. })
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let v = DMatrix::from_row_slice(3, 2, &[0.1, 1.0 / 3.0, -2.5e-300, 7.0, 1e20, -0.0]);
        let d = DataMatrix::new(
            v,
            vec!["a".into(), "b".into()],
            vec![LabelColumn::new("g", vec!["u".into(), "v".into(), "u".into()])],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("a,b,label_g\n"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn needs_a_numeric_column() {
        assert!(read_csv("label_a\nx\ny\n".as_bytes()).is_err());
    }
}
