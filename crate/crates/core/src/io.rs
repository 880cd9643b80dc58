//! CSV ingestion and export of datasets.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::Dataset;

/// Column roles in an input file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub target: String,
    pub controls: Vec<String>,
    /// Empty means every column not used as target or control.
    pub candidates: Vec<String>,
}

/// Outcome of a load besides the dataset itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "." | "null")
}

/// Load a dataset from CSV text. Rows with a missing cell in a used column
/// are dropped; other non-numeric cells are errors.
pub fn parse_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: String::new(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            column: name.to_string(),
            message: "column not found in header".into(),
        })
    };
    if schema.target.is_empty() {
        return Err(Error::InvalidArgument("no target column given".into()));
    }
    let target = find(&schema.target)?;
    let controls: Vec<usize> = schema.controls.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let candidates: Vec<usize> = if schema.candidates.is_empty() {
        let used: HashSet<usize> = controls.iter().copied().chain([target]).collect();
        (0..header.len()).filter(|j| !used.contains(j)).collect()
    } else {
        schema.candidates.iter().map(|c| find(c)).collect::<Result<_>>()?
    };
    let mut seen = HashSet::new();
    for &j in controls.iter().chain(&candidates).chain([&target]) {
        if !seen.insert(j) {
            return Err(Error::InvalidArgument(format!(
                "column '{}' assigned more than one role",
                header[j]
            )));
        }
    }
    if candidates.is_empty() {
        return Err(Error::InsufficientColumns { needed: 1, got: 0 });
    }

    let used: Vec<usize> = [target]
        .into_iter()
        .chain(controls.iter().copied())
        .chain(candidates.iter().copied())
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut report = LoadReport::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row: line,
            column: String::new(),
            message: e.to_string(),
        })?;
        report.rows_read += 1;
        let mut values = Vec::with_capacity(used.len());
        let mut missing = false;
        for &j in &used {
            let cell = rec.get(j).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: header[j].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: header[j].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            values.push(v);
        }
        if missing {
            report.rows_dropped += 1;
        } else {
            rows.push(values);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }
    let t = rows.len();
    let nz = controls.len();
    let y = DVector::from_fn(t, |i, _| rows[i][0]);
    let z = DMatrix::from_fn(t, nz, |i, j| rows[i][1 + j]);
    let x = DMatrix::from_fn(t, candidates.len(), |i, j| rows[i][1 + nz + j]);
    let ds = Dataset::with_control_names(
        y,
        z,
        x,
        candidates.iter().map(|&j| header[j].clone()).collect(),
        controls.iter().map(|&j| header[j].clone()).collect(),
    )?;
    Ok((ds, report))
}

/// Load a dataset from a CSV file.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<(Dataset, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(file, schema)
}

/// Write `target, controls..., candidates...` with shortest round-trip
/// formatting of every value.
pub fn write_dataset_to<W: Write>(writer: W, dataset: &Dataset, target: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![target.to_string()];
    header.extend(dataset.control_names.iter().cloned());
    header.extend(dataset.names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for i in 0..dataset.t() {
        let mut rec = vec![dataset.y[i].to_string()];
        rec.extend(dataset.z.row(i).iter().map(|v| v.to_string()));
        rec.extend(dataset.x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, dataset: &Dataset, target: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_dataset_to(file, dataset, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(target: &str) -> CsvSchema {
        CsvSchema {
            target: target.into(),
            ..Default::default()
        }
    }

    #[test]
    fn three_rows_two_candidates() {
        let text = "y,a,b\n1,2,3\n4,5,6\n7,8,9\n";
        let (ds, rep) = parse_csv(text.as_bytes(), &schema("y")).unwrap();
        assert_eq!((ds.t(), ds.n(), ds.zeta()), (3, 2, 0));
        assert_eq!(ds.names, vec!["a", "b"]);
        assert_eq!(ds.x[(2, 1)], 9.0);
        assert_eq!(rep, LoadReport { rows_read: 3, rows_dropped: 0 });
    }

    #[test]
    fn bad_cell_is_located() {
        let text = "y,a,b\n1,2,3\n4,oops,6\n";
        match parse_csv(text.as_bytes(), &schema("y")) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_rows_dropped() {
        let text = "y,c,a,unused\n1,1,2,\n,1,5,1\n7,1,8,x\n3,1,4,\n";
        let s = CsvSchema {
            target: "y".into(),
            controls: vec!["c".into()],
            candidates: vec!["a".into()],
        };
        let (ds, rep) = parse_csv(text.as_bytes(), &s).unwrap();
        assert_eq!(ds.t(), 3);
        assert_eq!(rep.rows_dropped, 1);
        assert_eq!(ds.control_names, vec!["c"]);
        let all_missing = "y,a\n,1\nNA,2\n";
        assert!(matches!(
            parse_csv(all_missing.as_bytes(), &schema("y")),
            Err(Error::EmptyAfterFiltering)
        ));
    }

    #[test]
    fn unknown_column() {
        assert!(matches!(
            parse_csv("y,a\n1,2\n".as_bytes(), &schema("z")),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn round_trip_full_precision() {
        let y = DVector::from_vec(vec![0.1 + 0.2, -1e-300, std::f64::consts::PI]);
        let z = DMatrix::from_vec(3, 1, vec![1.0 / 3.0, 2.0 / 3.0, 1e22]);
        let x = DMatrix::from_vec(3, 2, vec![f64::MIN_POSITIVE, 5e-324, -0.0, 1.7976931348623157e308, 7.0, 1e-7]);
        let ds = Dataset::with_control_names(y, z, x, vec!["a".into(), "b".into()], vec!["c".into()])
            .unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &ds, "y").unwrap();
        let s = CsvSchema {
            target: "y".into(),
            controls: vec!["c".into()],
            candidates: vec![],
        };
        let (back, _) = parse_csv(buf.as_slice(), &s).unwrap();
        assert_eq!(back, ds);
    }
}
