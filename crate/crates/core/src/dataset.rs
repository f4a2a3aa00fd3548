//! Labeled feature tables shared by featurization, training and CV.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub user_id: String,
    /// `true` for the onset class.
    pub label: bool,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Vec<String>,
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new(schema: Vec<String>, rows: Vec<Row>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &schema {
            if !seen.insert(name) {
                return Err(Error::Schema(format!("duplicate column {name:?}")));
            }
        }
        let mut ids = HashSet::new();
        for r in &rows {
            if r.values.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "row {:?} has {} values, schema has {}",
                    r.user_id,
                    r.values.len(),
                    schema.len()
                )));
            }
            if !ids.insert(r.user_id.as_str()) {
                return Err(Error::Schema(format!("duplicate row for user {:?}", r.user_id)));
            }
            if r.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("row {:?} has non-finite values", r.user_id)));
            }
        }
        Ok(Dataset { schema, rows })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn dims(&self) -> usize {
        self.schema.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.rows.iter().filter(|r| r.label).count();
        (self.rows.len() - pos, pos)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Keeps the named columns in the given order.
    pub fn select(&self, columns: &[String]) -> Result<Dataset> {
        let idx = columns
            .iter()
            .map(|c| {
                self.schema
                    .iter()
                    .position(|s| s == c)
                    .ok_or_else(|| Error::Schema(format!("column {c:?} not in dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            schema: columns.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| Row {
                    user_id: r.user_id.clone(),
                    label: r.label,
                    values: idx.iter().map(|&i| r.values[i]).collect(),
                })
                .collect(),
        })
    }

    /// Same rows with labels replaced.
    pub fn with_labels(&self, labels: &[bool]) -> Result<Dataset> {
        if labels.len() != self.rows.len() {
            return Err(Error::arg("label count does not match row count"));
        }
        let mut d = self.clone();
        for (r, &l) in d.rows.iter_mut().zip(labels) {
            r.label = l;
        }
        Ok(d)
    }

    pub fn write_csv_to(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["user_id".to_string(), "label".to_string()];
        header.extend(self.schema.iter().cloned());
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.user_id.clone(), u8::from(r.label).to_string()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(f))
    }

    pub fn read_csv_from(r: impl Read, source: &Path) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "user_id" || &header[1] != "label" {
            return Err(Error::parse(source, 1, "header must start with user_id,label"));
        }
        let schema: Vec<String> = header.iter().skip(2).map(String::from).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let label = match &rec[1] {
                "1" => true,
                "0" => false,
                other => return Err(Error::parse(source, line, format!("label must be 0 or 1, got {other:?}"))),
            };
            let values = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| Error::parse(source, line, format!("bad value {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(Row {
                user_id: rec[0].to_string(),
                label,
                values,
            });
        }
        Dataset::new(schema, rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(std::io::BufReader::new(f), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            vec!["a".into(), "b c".into()],
            vec![
                Row { user_id: "u1".into(), label: true, values: vec![0.1, 1.0 / 3.0] },
                Row { user_id: "u2".into(), label: false, values: vec![-2.5e-12, 7.0] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = toy();
        let mut buf = Vec::new();
        d.write_csv_to(&mut buf).unwrap();
        let back = Dataset::read_csv_from(buf.as_slice(), Path::new("t")).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn select_reorders() {
        let d = toy().select(&["b c".into(), "a".into()]).unwrap();
        assert_eq!(d.rows()[0].values, vec![1.0 / 3.0, 0.1]);
        assert!(toy().select(&["zz".into()]).is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        let r = Row { user_id: "u".into(), label: true, values: vec![1.0] };
        assert!(Dataset::new(vec!["a".into(), "b".into()], vec![r.clone()]).is_err());
        assert!(Dataset::new(vec!["a".into()], vec![r.clone(), r]).is_err());
    }
}
