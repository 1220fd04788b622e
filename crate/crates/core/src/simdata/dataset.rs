//! CSV ingestion for externally supplied data.
//!
//! Roles are assigned by a JSON sidecar:
//!
//! ```json
//! { "covariates": ["age", "bmi"], "proxy": "diagnosed", "truth": "diabetic", "group": "uninsured" }
//! ```

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BinaryProxyData, SimError};

pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub covariates: Vec<String>,
    pub proxy: String,
    #[serde(default)]
    pub truth: Option<String>,
    #[serde(default)]
    pub group: Option<String>,
    /// Names for group codes 0 and 1.
    #[serde(default = "default_group_labels")]
    pub group_labels: [String; 2],
}

fn default_group_labels() -> [String; 2] {
    ["insured".into(), "uninsured".into()]
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| SimError::Schema(e.to_string()))
    }

    fn required_columns(&self) -> impl Iterator<Item = &String> {
        self.covariates
            .iter()
            .chain(std::iter::once(&self.proxy))
            .chain(self.truth.iter())
            .chain(self.group.iter())
    }
}

/// A column-named numeric table with role assignments. The last column is
/// always the intercept added at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub schema: Schema,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64], SimError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| SimError::MissingColumn(name.to_string()))
    }

    /// Intercept followed by the schema's covariates.
    pub fn design(&self) -> Result<DMatrix<f64>, SimError> {
        let mut cols = vec![self.column(INTERCEPT)?];
        for c in &self.schema.covariates {
            cols.push(self.column(c)?);
        }
        Ok(DMatrix::from_fn(self.n_rows(), cols.len(), |i, j| cols[j][i]))
    }

    /// Converts to binary-proxy form. The group indicator, when present,
    /// becomes both the group label and the last design column.
    pub fn to_binary_proxy(&self) -> Result<BinaryProxyData, SimError> {
        let n = self.n_rows();
        let to_binary = |name: &str| -> Result<Vec<u8>, SimError> {
            self.column(name)?
                .iter()
                .enumerate()
                .map(|(row, &v)| match v {
                    0.0 => Ok(0u8),
                    1.0 => Ok(1u8),
                    _ => Err(SimError::NonBinary {
                        column: name.to_string(),
                        row: row + 1,
                        value: v,
                    }),
                })
                .collect()
        };
        let y = to_binary(&self.schema.proxy)?;
        let truth = self.schema.truth.as_deref().map(to_binary).transpose()?;
        let (group, group_names, x, columns) = match &self.schema.group {
            Some(g) => {
                let group: Vec<usize> = to_binary(g)?.into_iter().map(usize::from).collect();
                let base = self.design()?;
                let mut x = base.clone().insert_column(base.ncols(), 0.0);
                for (i, gi) in group.iter().enumerate() {
                    x[(i, base.ncols())] = *gi as f64;
                }
                let mut columns = vec!["intercept".to_string()];
                columns.extend(self.schema.covariates.iter().cloned());
                columns.push(self.schema.group_labels[1].clone());
                (group, self.schema.group_labels.to_vec(), x, columns)
            }
            None => {
                let mut columns = vec!["intercept".to_string()];
                columns.extend(self.schema.covariates.iter().cloned());
                (
                    vec![0; n],
                    vec![self.schema.group_labels[0].clone()],
                    self.design()?,
                    columns,
                )
            }
        };
        Ok(BinaryProxyData {
            x,
            columns,
            group,
            group_names,
            y,
            truth,
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, SimError> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text, schema, &path.display().to_string())
}

pub fn parse_csv(text: &str, schema: &Schema, origin: &str) -> Result<Dataset, SimError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| SimError::Io(format!("{origin}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(SimError::EmptyFile(origin.to_string()));
    }
    for name in schema.required_columns() {
        if !header.contains(name) {
            return Err(SimError::MissingColumn(format!("{name} (in {origin})")));
        }
    }
    let mut columns = vec![Vec::new(); header.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| SimError::Io(format!("{origin}: {e}")))?;
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| SimError::NonNumericCell {
                column: header[j].clone(),
                row: row + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(SimError::NonNumericCell {
                    column: header[j].clone(),
                    row: row + 1,
                    value: cell.to_string(),
                });
            }
            columns[j].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(SimError::EmptyFile(origin.to_string()));
    }
    let n = columns[0].len();
    let mut names = header;
    names.push(INTERCEPT.to_string());
    columns.push(vec![1.0; n]);
    Ok(Dataset {
        names,
        columns,
        schema: schema.clone(),
    })
}

/// Writes the original (non-intercept) columns back out.
pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| SimError::Io(e.to_string());
    let keep: Vec<usize> = (0..dataset.names.len())
        .filter(|&j| dataset.names[j] != INTERCEPT)
        .collect();
    w.write_record(keep.iter().map(|&j| &dataset.names[j])).map_err(io)?;
    for i in 0..dataset.n_rows() {
        w.write_record(keep.iter().map(|&j| dataset.columns[j][i].to_string()))
            .map_err(io)?;
    }
    w.flush().map_err(|e| SimError::Io(e.to_string()))
}
